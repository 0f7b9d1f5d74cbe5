//! Build a distance field for a small scene and query it.

use mobman::esdf::{build_esdf, VoxelGrid};
use nalgebra::Vector3;

fn main() -> mobman::Result<()> {
    let mut grid = VoxelGrid::new(Vector3::new(-0.5, -0.5, 0.0), 0.02, [50, 50, 50])?;
    grid.add_box(Vector3::new(0.1, -0.2, 0.0), Vector3::new(0.3, 0.2, 0.4));
    grid.add_sphere(Vector3::new(-0.2, 0.1, 0.6), 0.1);
    let esdf = build_esdf(&grid, 2.0)?;
    println!("{} occupied voxels", grid.occupied_count());

    for p in [Vector3::new(0.0, 0.0, 0.2), Vector3::new(-0.2, 0.1, 0.75), Vector3::new(0.2, 0.0, 0.2), Vector3::new(1.0, 0.0, 0.0)] {
        let d = esdf.sdf_dist(&p);
        let g = esdf.sdf_grad(&p);
        println!("p = {:.2?}: distance {:+.4} gradient {:.3?} out_of_bounds={}", p, d.value, g.value, d.out_of_bounds);
    }
    Ok(())
}
