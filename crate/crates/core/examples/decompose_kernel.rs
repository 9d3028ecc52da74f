//! Splits an RBF kernel on the plane into harmonic parts under a quarter
//! turn and checks that the parts sum back to the original kernel.

use hgp::hkd::{complex_decomposition, real_decomposition};
use hgp::kernels::Kernel;
use hgp::transforms::CyclicTransform;

fn main() -> hgp::Result<()> {
    let k = Kernel::rbf(vec![0.8], 1.0)?;
    let g = CyclicTransform::rotation(2, (0, 1), 4)?;
    let (x, y) = ([0.3, -1.1], [0.9, 0.4]);

    let complex = complex_decomposition(&k, g.clone())?;
    let mut sum = hgp::kernels::C64::new(0.0, 0.0);
    for part in &complex {
        let v = part.eval(&x, &y)?;
        println!("complex part {:?}: {:+.6} {:+.6}i", part.index(), v.re, v.im);
        sum += v;
    }
    println!("sum of parts {:.12}, base kernel {:.12}", sum.re, k.eval_real(&x, &y));

    // Conjugate frequencies paired up: T=4 gives parts 0, 1 (with 3) and 2.
    for part in real_decomposition(&k, g)? {
        println!("real part {:?}: {:+.6}", part.index(), part.eval(&x, &y)?.re);
    }
    Ok(())
}
