//! Regenerates the parameter files shipped under `data/`. From the
//! workspace root: `cargo run -p quditsim-core --example export_models`.
//! Pass a directory to write somewhere else.

use std::path::Path;

use quditsim_core::physics::{ReadoutModel, StarkModel};
use quditsim_core::sim::NoiseModel;

fn main() -> quditsim_core::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "data".into());
    std::fs::create_dir_all(&dir)?;
    let dir = Path::new(&dir);
    StarkModel::illustrative().save(&dir.join("stark_illustrative.json"))?;
    NoiseModel::illustrative().save(&dir.join("noise_illustrative.json"))?;
    ReadoutModel::default().save(&dir.join("readout_default.json"))?;
    println!("wrote 3 model files to {}", dir.display());
    Ok(())
}
