//! Cramér-Rao bound for the Gaussian mean and the Fisher metric compared
//! with the hyperbolic half-plane.

use igeom::infogeo::poincare_comparison;
use igeom::natgrad::crlb_check;

fn main() -> igeom::Result<()> {
    for n in [10, 100, 1000] {
        let r = crlb_check(1.0, n, 10_000, 3)?;
        println!(
            "n={n:>5}: var {:.3e}, bound {:.3e}, ratio {:.4}",
            r.variance, r.bound, r.ratio
        );
    }
    let report = poincare_comparison(&[0.5, 1.0, 2.0])?;
    for row in &report.rows {
        println!(
            "sigma {:.1}: pulled back {:?}, half-plane {:?}",
            row.sigma, row.pulled_back, row.poincare
        );
    }
    println!("constant ratio: {:?}", report.constant_ratio);
    Ok(())
}
