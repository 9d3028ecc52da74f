//! Binary image classification with a flip-invariant decomposition next to
//! a mismatched pixel-negation one and a plain SVGP of the same total size.

use hgp::data::{accuracy, make_flip_images, Dataset};
use hgp::gp::{elbo, hvgp_predict, HvgpModel, Likelihood, SvgpModel};
use hgp::init::{kmeans_init, median_heuristic};
use hgp::kernels::Kernel;
use hgp::training::{fit, TrainConfig};
use hgp::transforms::{compose, default_probes, CyclicTransform, MultiWayTransform};
use nalgebra::DVector;

fn train(ds: &Dataset, g: Option<MultiWayTransform>, m: usize) -> hgp::Result<(f64, f64)> {
    let (x, y) = ds.train_data();
    let (xt, yt) = ds.test_data();
    let k = Kernel::rbf(vec![median_heuristic(&x, 1000, 0)?], 1.0)?;
    let z = kmeans_init(&x, m, 0)?;
    let model = match g {
        Some(g) => {
            let parts = g.orbit_len();
            HvgpModel::new(k, g, vec![z; parts], Likelihood::bernoulli())?
        }
        None => SvgpModel::new(k, z, Likelihood::bernoulli())?.into_hvgp(),
    };
    let cfg = TrainConfig { iterations: 1500, batch_size: 128, ..TrainConfig::default() };
    let (model, _) = fit(model, &x, &y, &cfg, None)?;
    let p = hvgp_predict(&model, &xt)?;
    let prob = DVector::from_fn(yt.len(), |i, _| model.likelihood().predictive(p.mean[i], p.var[i]).0);
    Ok((elbo(&model, &x, &y, x.nrows())?, accuracy(&prob, &yt)))
}

fn main() -> hgp::Result<()> {
    let side = 8;
    let ds = make_flip_images(2000, side, 0)?;
    let probes = default_probes(side * side, 8, 0);
    let flips = compose(
        vec![CyclicTransform::ImageFlipUd { height: side, width: side }, CyclicTransform::ImageFlipLr { height: side, width: side }],
        &probes,
    )?;
    let half = side * side / 2;
    let negations = compose(
        vec![
            CyclicTransform::negation(side * side, (0..half).collect())?,
            CyclicTransform::negation(side * side, (half..side * side).collect())?,
        ],
        &probes,
    )?;
    for (name, g, m) in [("flips 4x25", Some(flips), 25), ("negations 4x25", Some(negations), 25), ("svgp 100", None, 100)] {
        let (e, acc) = train(&ds, g, m)?;
        println!("{name:>15}: ELBO {e:9.1}  test accuracy {acc:.3}");
    }
    Ok(())
}
