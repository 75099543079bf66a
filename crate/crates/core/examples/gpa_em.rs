//! Two-component EM on the synthetic GPA data, with the geometric em
//! iteration alongside.

use igeom::cli::{gpa_dataset, random_init};
use igeom::emcore::{run_em, run_em_geometric, EmOptions};

fn main() -> igeom::Result<()> {
    let seed = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(42);
    let data = gpa_dataset(20, seed)?;
    let init = random_init(&data, 2, 0)?;
    let opts = EmOptions::default();
    let state = run_em(&data, &init, &opts)?;
    let fit = state.mixture.sorted_by_mean();
    for (w, c) in fit.weights().iter().zip(fit.components()) {
        println!("weight {w:.3}  mean {:.4}  sigma {:.4}", c.mu, c.sigma);
    }
    println!(
        "{} iterations, log-likelihood {:.6}",
        state.iteration, state.loglik
    );
    let geo = run_em_geometric(&data, &init, &opts)?;
    let gap = state
        .mixture
        .parameters()
        .iter()
        .zip(geo.mixture.parameters())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!(
        "geometric em: {} iterations, max parameter gap {gap:.2e}",
        geo.iterations
    );
    Ok(())
}
