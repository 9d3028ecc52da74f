//! Longitude-periodic regression on a lon/lat grid, driven through the
//! config harness exactly as the `hgp` binary does.

use hgp::harness::{RunConfig, run, Verb};

const CONFIG: &str = include_str!("configs/torus.json");

fn main() -> hgp::Result<()> {
    let mut cfg = RunConfig::from_json(CONFIG)?;
    cfg.out = std::env::temp_dir().join("hgp-torus-example");
    let report = run(Verb::Fit, &cfg)?;
    println!("{}", serde_json::to_string_pretty(&report.summary).unwrap());
    let report = run(Verb::Predict, &cfg)?;
    for f in report.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}
