//! Voxel occupancy grids and the Euclidean signed distance field built from them.
//!
//! Voxel `(i, j, k)` has its centre at `origin + (i + 0.5, j + 0.5, k + 0.5) * resolution`.
//! Free voxels store the distance between their centre and the nearest occupied
//! voxel centre, capped at `max_dist`; occupied voxels store `-resolution / 2`.

use crate::error::{Error, Result};
use nalgebra::Vector3;
use std::fmt::Write as _;

pub const DEFAULT_MAX_DIST: f64 = 5.0;
pub const VOXEL_HEADER: &str = "esdf-voxels";
pub const GRID_HEADER: &str = "esdf-grid";

#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid {
    pub origin: Vector3<f64>,
    pub resolution: f64,
    pub dims: [usize; 3],
    occupied: Vec<bool>,
}

impl VoxelGrid {
    pub fn new(origin: Vector3<f64>, resolution: f64, dims: [usize; 3]) -> Result<Self> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::Grid(format!("resolution {resolution} must be > 0")));
        }
        if dims.iter().any(|d| *d == 0) {
            return Err(Error::Grid(format!("dims {dims:?} must be >= 1 on every axis")));
        }
        Ok(Self {
            origin,
            resolution,
            dims,
            occupied: vec![false; dims[0] * dims[1] * dims[2]],
        })
    }

    pub fn len(&self) -> usize {
        self.occupied.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupied.is_empty()
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let j = (idx / self.dims[0]) % self.dims[1];
        let k = idx / (self.dims[0] * self.dims[1]);
        [i, j, k]
    }

    pub fn center(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        self.origin + Vector3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * self.resolution
    }

    pub fn is_occupied(&self, i: usize, j: usize, k: usize) -> bool {
        self.occupied[self.index(i, j, k)]
    }

    pub fn set_occupied(&mut self, i: usize, j: usize, k: usize, value: bool) {
        let idx = self.index(i, j, k);
        self.occupied[idx] = value;
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied.iter().filter(|o| **o).count()
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupied
    }

    /// Marks every voxel whose centre satisfies `inside`.
    pub fn fill_where(&mut self, mut inside: impl FnMut(&Vector3<f64>) -> bool) {
        for k in 0..self.dims[2] {
            for j in 0..self.dims[1] {
                for i in 0..self.dims[0] {
                    if inside(&self.center(i, j, k)) {
                        self.set_occupied(i, j, k, true);
                    }
                }
            }
        }
    }

    /// Axis-aligned box `[min, max]`.
    pub fn add_box(&mut self, min: Vector3<f64>, max: Vector3<f64>) {
        self.fill_where(|c| (0..3).all(|a| c[a] >= min[a] && c[a] <= max[a]));
    }

    /// Vertical cylinder.
    pub fn add_cylinder(&mut self, center_xy: [f64; 2], radius: f64, z_min: f64, z_max: f64) {
        self.fill_where(|c| {
            let dx = c.x - center_xy[0];
            let dy = c.y - center_xy[1];
            dx * dx + dy * dy <= radius * radius && c.z >= z_min && c.z <= z_max
        });
    }

    pub fn add_sphere(&mut self, center: Vector3<f64>, radius: f64) {
        self.fill_where(|c| (c - center).norm() <= radius);
    }

    /// Parses the `esdf-voxels v1` text format.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        let (hline, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "missing header".into(),
        })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 9 || fields[0] != VOXEL_HEADER || fields[1] != "v1" {
            return Err(Error::Parse {
                line: hline + 1,
                message: format!("expected `{VOXEL_HEADER} v1 <nx> <ny> <nz> <resolution> <ox> <oy> <oz>`"),
            });
        }
        let bad = |line: usize, what: &str| Error::Parse {
            line: line + 1,
            message: format!("invalid {what}"),
        };
        let mut dims = [0usize; 3];
        for a in 0..3 {
            dims[a] = fields[2 + a].parse().map_err(|_| bad(hline, "dimension"))?;
        }
        let resolution: f64 = fields[5].parse().map_err(|_| bad(hline, "resolution"))?;
        let mut origin = Vector3::zeros();
        for a in 0..3 {
            origin[a] = fields[6 + a].parse().map_err(|_| bad(hline, "origin"))?;
        }
        let mut grid = VoxelGrid::new(origin, resolution, dims)?;
        for (n, line) in lines {
            let idx: Vec<usize> = line
                .split_whitespace()
                .map(|t| t.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad(n, "voxel index"))?;
            if idx.len() != 3 {
                return Err(bad(n, "voxel triple"));
            }
            if (0..3).any(|a| idx[a] >= dims[a]) {
                return Err(Error::Parse {
                    line: n + 1,
                    message: format!("voxel {idx:?} outside grid {dims:?}"),
                });
            }
            grid.set_occupied(idx[0], idx[1], idx[2], true);
        }
        Ok(grid)
    }

    /// Serializes to the `esdf-voxels v1` text format.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{VOXEL_HEADER} v1 {} {} {} {} {} {} {}\n",
            self.dims[0], self.dims[1], self.dims[2], self.resolution, self.origin.x, self.origin.y, self.origin.z
        );
        for (idx, occ) in self.occupied.iter().enumerate() {
            if *occ {
                let [i, j, k] = self.coords(idx);
                let _ = writeln!(s, "{i} {j} {k}");
            }
        }
        s
    }
}

/// Sampled field value plus whether the query left the grid and was clamped.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SdfSample<T> {
    pub value: T,
    pub out_of_bounds: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EsdfGrid {
    pub origin: Vector3<f64>,
    pub resolution: f64,
    pub dims: [usize; 3],
    pub max_dist: f64,
    distance: Vec<f64>,
}

/// One-dimensional squared distance transform of a sampled function
/// (lower envelope of parabolas).
fn squared_dt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    if n == 0 {
        return;
    }
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        if f[q].is_infinite() {
            continue;
        }
        if f[v[0]].is_infinite() {
            // first finite sample replaces the infinite seed
            v[0] = q;
            continue;
        }
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] {
                if k == 0 {
                    v[0] = q;
                    z[1] = f64::INFINITY;
                    break;
                }
                k -= 1;
                continue;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    if f[v[0]].is_infinite() {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    k = 0;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        out[q] = d * d + f[v[k]];
    }
}

/// Exact Euclidean distance transform with three separable passes.
pub fn build_esdf(grid: &VoxelGrid, max_dist: f64) -> Result<EsdfGrid> {
    let total = grid.len();
    let occupied = grid.occupied_count();
    if occupied == total {
        return Err(Error::Grid("grid has no free voxel".into()));
    }
    let [nx, ny, nz] = grid.dims;
    let mut d2: Vec<f64> = grid
        .occupancy()
        .iter()
        .map(|o| if *o { 0.0 } else { f64::INFINITY })
        .collect();

    let longest = nx.max(ny).max(nz);
    let mut line = vec![0.0; longest];
    let mut out = vec![0.0; longest];
    let mut v = vec![0usize; longest];
    let mut z = vec![0.0; longest + 1];

    if occupied > 0 {
        let mut pass = |len: usize, count: usize, at: &dyn Fn(usize, usize) -> usize, d2: &mut Vec<f64>| {
            for c in 0..count {
                for t in 0..len {
                    line[t] = d2[at(c, t)];
                }
                squared_dt_1d(&line[..len], &mut out[..len], &mut v[..len], &mut z[..len + 1]);
                for t in 0..len {
                    d2[at(c, t)] = out[t];
                }
            }
        };
        pass(nx, ny * nz, &|c, t| t + nx * c, &mut d2);
        pass(ny, nx * nz, &|c, t| (c % nx) + nx * (t + ny * (c / nx)), &mut d2);
        pass(nz, nx * ny, &|c, t| c + nx * ny * t, &mut d2);
    }

    let half = grid.resolution / 2.0;
    let distance = d2
        .iter()
        .zip(grid.occupancy())
        .map(|(sq, occ)| {
            if *occ {
                -half
            } else {
                (sq.sqrt() * grid.resolution).min(max_dist)
            }
        })
        .collect();
    Ok(EsdfGrid {
        origin: grid.origin,
        resolution: grid.resolution,
        dims: grid.dims,
        max_dist,
        distance,
    })
}

impl EsdfGrid {
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.distance[self.index(i, j, k)]
    }

    pub fn values(&self) -> &[f64] {
        &self.distance
    }

    pub fn center(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        self.origin + Vector3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * self.resolution
    }

    pub fn upper_corner(&self) -> Vector3<f64> {
        self.origin + Vector3::new(self.dims[0] as f64, self.dims[1] as f64, self.dims[2] as f64) * self.resolution
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        let hi = self.upper_corner();
        (0..3).all(|a| p[a] >= self.origin[a] && p[a] <= hi[a])
    }

    /// Trilinear interpolation of voxel-centre distances.
    pub fn sdf_dist(&self, p: &Vector3<f64>) -> SdfSample<f64> {
        let out_of_bounds = !self.contains(p) || !p.iter().all(|c| c.is_finite());
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let n = self.dims[a];
            let u = if p[a].is_finite() {
                (p[a] - self.origin[a]) / self.resolution - 0.5
            } else {
                0.0
            };
            let u = u.clamp(0.0, (n - 1) as f64);
            let b = (u.floor() as usize).min(n.saturating_sub(2));
            base[a] = b;
            frac[a] = if n == 1 { 0.0 } else { u - b as f64 };
        }
        let mut value = 0.0;
        for corner in 0..8usize {
            let mut w = 1.0;
            let mut idx = [0usize; 3];
            for a in 0..3 {
                let bit = (corner >> a) & 1;
                let step = if self.dims[a] == 1 { 0 } else { bit };
                idx[a] = base[a] + step;
                w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
            }
            if w != 0.0 {
                value += w * self.at(idx[0], idx[1], idx[2]);
            }
        }
        SdfSample { value, out_of_bounds }
    }

    /// Normalized central-difference gradient of the interpolated field, step
    /// `resolution / 2`; the zero vector when the raw gradient vanishes.
    pub fn sdf_grad(&self, p: &Vector3<f64>) -> SdfSample<Vector3<f64>> {
        let h = 0.5 * self.resolution;
        let mut g = Vector3::zeros();
        for a in 0..3 {
            let mut hi = *p;
            let mut lo = *p;
            hi[a] += h;
            lo[a] -= h;
            g[a] = (self.sdf_dist(&hi).value - self.sdf_dist(&lo).value) / (2.0 * h);
        }
        let n = g.norm();
        let value = if n < 1e-9 { Vector3::zeros() } else { g / n };
        SdfSample {
            value,
            out_of_bounds: !self.contains(p),
        }
    }

    /// Serializes to the `esdf-grid v1` text format: a header line followed by
    /// one distance per voxel in x-fastest order.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{GRID_HEADER} v1 {} {} {} {} {} {} {} {}\n",
            self.dims[0],
            self.dims[1],
            self.dims[2],
            self.resolution,
            self.origin.x,
            self.origin.y,
            self.origin.z,
            self.max_dist
        );
        for d in &self.distance {
            let _ = writeln!(s, "{d}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let bad = |line: usize, message: String| Error::Parse { line: line + 1, message };
        let (hline, header) = lines.next().ok_or_else(|| bad(0, "missing header".into()))?;
        let f: Vec<&str> = header.split_whitespace().collect();
        if f.len() != 10 || f[0] != GRID_HEADER || f[1] != "v1" {
            return Err(bad(hline, format!("expected `{GRID_HEADER} v1` header")));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(hline, format!("invalid number `{s}`")));
        let dim = |s: &str| s.parse::<usize>().map_err(|_| bad(hline, format!("invalid dimension `{s}`")));
        let dims = [dim(f[2])?, dim(f[3])?, dim(f[4])?];
        let resolution = num(f[5])?;
        let origin = Vector3::new(num(f[6])?, num(f[7])?, num(f[8])?);
        let max_dist = num(f[9])?;
        VoxelGrid::new(origin, resolution, dims)?;
        let mut distance = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for (n, l) in lines {
            distance.push(l.trim().parse::<f64>().map_err(|_| bad(n, format!("invalid distance `{l}`")))?);
        }
        if distance.len() != dims[0] * dims[1] * dims[2] {
            return Err(bad(hline, format!("expected {} distances, found {}", dims[0] * dims[1] * dims[2], distance.len())));
        }
        Ok(Self {
            origin,
            resolution,
            dims,
            max_dist,
            distance,
        })
    }
}
