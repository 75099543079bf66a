//! Maximum-entropy distribution on a die with a prescribed mean.

use igeom::emcore::{
    maxent_gradient_identities, maxent_solve, Constraint, MaxEntOptions, MaxEntProblem,
};

fn main() -> igeom::Result<()> {
    let faces: Vec<f64> = (1..=6).map(f64::from).collect();
    let problem =
        MaxEntProblem::with_constraints(faces, &[Constraint::Power { degree: 1 }], vec![4.5])?;
    let sol = maxent_solve(&problem, &MaxEntOptions::default())?;
    println!("p = {:?}", sol.distribution.probs());
    println!(
        "lambda = {:?}, entropy = {:.6}, {} Newton steps",
        sol.lambdas, sol.entropy, sol.iterations
    );
    let report = maxent_gradient_identities(&sol, &problem)?;
    println!("dS/dg = {:?}", report.entropy_gradient);
    println!("dlogZ/dlambda = {:?}", report.log_partition_gradient);
    Ok(())
}
