//! Feedforward/gain ablation table for the swing scenario.

use mobman::pipeline::{ablation, ablation_table, default_cells};
use mobman::scenario::Scenario;
use std::path::Path;

fn main() -> mobman::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "scenarios/swing_ablation.toml".into());
    let scn = Scenario::load(Path::new(&path))?;
    print!("{}", ablation_table(&ablation(&scn, &default_cells())?));
    Ok(())
}
