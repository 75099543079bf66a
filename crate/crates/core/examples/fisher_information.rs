//! Fisher information of a Gaussian from the closed form, score outer
//! products and the Hessian of KL.

use igeom::infogeo::{fim_analytic_gaussian, fim_from_kl_hessian, fim_monte_carlo, GaussianFamily};

fn main() -> igeom::Result<()> {
    for sigma in [0.5, 1.0, 2.0] {
        let theta = [0.0, sigma];
        println!("sigma = {sigma}");
        println!("  analytic   {:?}", fim_analytic_gaussian(sigma)?.rows());
        println!(
            "  empirical  {:?}",
            fim_monte_carlo(&GaussianFamily, &theta, 100_000, 1)?.rows()
        );
        println!(
            "  KL Hessian {:?}",
            fim_from_kl_hessian(&GaussianFamily, &theta)?.rows()
        );
    }
    Ok(())
}
