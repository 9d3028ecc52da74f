//! Single-threaded ELBO step timings for an 8-part HVGP against an SVGP
//! holding all of its inducing points.

use hgp::harness::{bench_rows, prepare, RunConfig};

const CONFIG: &str = include_str!("configs/bench.json");

fn main() -> hgp::Result<()> {
    let cfg = RunConfig::from_json(CONFIG)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let rows = pool.install(|| -> hgp::Result<_> { bench_rows(&cfg, &prepare(&cfg)?) })?;
    println!("parts  m/part  svgp_m  hvgp_ms  svgp_ms  speedup  flop_ratio");
    for r in rows {
        println!(
            "{:5}  {:6}  {:6}  {:7.1}  {:7.1}  {:7.2}  {:10.0}",
            r.parts, r.inducing_per_part, r.svgp_inducing, r.hvgp_step_ms, r.svgp_step_ms, r.speedup, r.flop_ratio
        );
    }
    Ok(())
}
