//! Shoots a geodesic on a torus and reports how well speed is conserved.

use igeom::surfaces::SurfacePatch;

fn main() -> igeom::Result<()> {
    let torus = SurfacePatch::torus(2.0, 1.0);
    let path = torus.geodesic_shoot([0.0, 0.2], [0.6, 0.8], 10.0, 2000)?;
    for (i, p) in path.points.iter().enumerate().step_by(250) {
        println!(
            "t={:>6.3}  phi={:>9.5}  theta={:>9.5}",
            i as f64 * path.dt,
            p[0],
            p[1]
        );
    }
    println!(
        "max relative speed drift: {:.3e}",
        path.max_speed_drift(&torus)?
    );
    Ok(())
}
