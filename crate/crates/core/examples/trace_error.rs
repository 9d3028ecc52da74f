//! Nyström trace error of an SVGP against a PCA-negation decomposition with
//! the same number of inducing points per part, before and after
//! optimizing the inducing inputs.

use hgp::data::make_symmetric_gaussian;
use hgp::diagnostics::{harmonic_trace_error, nystrom_trace_error, optimize_trace_error, TraceOptConfig};
use hgp::gp::default_jitter;
use hgp::hkd::real_decomposition;
use hgp::init::{kmeans_init, median_heuristic, pca_directions};
use hgp::kernels::Kernel;
use hgp::transforms::{compose, default_probes, CyclicTransform};

fn main() -> hgp::Result<()> {
    let ds = make_symmetric_gaussian(2000, 4, 0)?;
    let (x, _) = ds.train_data();
    let k = Kernel::matern32(vec![median_heuristic(&x, 1000, 0)?], 1.0)?;
    let m = 32;

    let (groups, _) = pca_directions(&x, 3)?;
    let factors = groups.into_iter().map(CyclicTransform::pca_negation).collect::<hgp::Result<Vec<_>>>()?;
    let g = compose(factors, &default_probes(4, 16, 0))?;
    let parts = real_decomposition(&k, g)?;

    let z = kmeans_init(&x, m, 0)?;
    let zs = vec![z.clone(); parts.len()];
    let jitter = default_jitter(&k, &[&z]);
    println!("SVGP {m}:      {:.3}", nystrom_trace_error(&k, &x, &z, None)?);
    println!("HVGP {}x{m}:   {:.3}", parts.len(), harmonic_trace_error(&parts, &x, &zs, None)?);

    let cfg = TraceOptConfig::default();
    let z_opt = optimize_trace_error(std::slice::from_ref(&hgp::hkd::HarmonicPart::identity(k.clone(), 4)), &x, vec![z], jitter, &cfg)?;
    let zs_opt = optimize_trace_error(&parts, &x, zs, jitter, &cfg)?;
    println!("optimized SVGP:  {:.3}", nystrom_trace_error(&k, &x, &z_opt[0], None)?);
    println!("optimized HVGP:  {:.3}", harmonic_trace_error(&parts, &x, &zs_opt, None)?);
    Ok(())
}
