//! Regenerates the shipped calibration tables in `data/`.

use std::fs::File;
use std::path::PathBuf;

use spadlab_core::calibration::{generate_energy_time, generate_surface, Spd};

fn main() -> spadlab_core::Result<()> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data");
    for spd in [Spd::Spd1, Spd::Spd2] {
        let surface = dir.join(format!("{}_surface.csv", spd.name()));
        generate_surface(spd.params())?.write_csv(File::create(&surface).expect("create surface csv"))?;
        let timing = dir.join(format!("{}_energy_time.csv", spd.name()));
        generate_energy_time(spd.params())?.write_csv(File::create(&timing).expect("create energy-time csv"))?;
        println!("wrote {} and {}", surface.display(), timing.display());
    }
    Ok(())
}
