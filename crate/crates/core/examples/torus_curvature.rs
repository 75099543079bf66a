//! Gaussian curvature of a torus by three routes, compared with the closed form.

use igeom::surfaces::{torus_gaussian_curvature, SurfacePatch};

fn main() -> igeom::Result<()> {
    let (big_r, r) = (2.0, 1.0);
    let torus = SurfacePatch::torus(big_r, r);
    println!(
        "{:>8} {:>12} {:>12} {:>12} {:>12}",
        "theta", "shape op", "sectional", "intrinsic", "closed form"
    );
    for i in 0..=8 {
        let theta = -std::f64::consts::PI + std::f64::consts::PI * i as f64 / 4.0;
        println!(
            "{theta:>8.4} {:>12.8} {:>12.8} {:>12.8} {:>12.8}",
            torus.gaussian_curvature(0.0, theta)?,
            torus.sectional_curvature(0.0, theta)?,
            torus.intrinsic_curvature(0.0, theta)?,
            torus_gaussian_curvature(big_r, r, theta),
        );
    }
    let gamma = torus.christoffel(0.3, 0.7)?.gamma;
    println!("Christoffel symbols at (0.3, 0.7): {gamma:?}");
    Ok(())
}
