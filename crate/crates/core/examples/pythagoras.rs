//! Canonical divergence and the Pythagorean relation on the probability simplex.

use igeom::infogeo::{
    bregman_divergence, kl_divergence, orthogonal_completion, pythagoras_residual,
    BregmanGenerator, SimplexStructure,
};
use igeom::models::DiscreteDistribution;

fn main() -> igeom::Result<()> {
    let p = DiscreteDistribution::from_probs(vec![0.1, 0.2, 0.3, 0.4])?;
    let q = DiscreteDistribution::from_probs(vec![0.25, 0.25, 0.25, 0.25])?;
    let b = bregman_divergence(&BregmanGenerator::negative_entropy(), p.probs(), q.probs())?;
    println!(
        "Bregman(neg. entropy) = {b:.12}, KL(p||q) = {:.12}",
        kl_divergence(&p, &q)?
    );

    let s = SimplexStructure { outcomes: 4 };
    let (pp, qp) = (
        s.point_from_distribution(&p)?,
        s.point_from_distribution(&q)?,
    );
    let rp = orthogonal_completion(&s, &pp, &qp, &[0.05, -0.02, 0.01])?;
    let res = pythagoras_residual(&s, &pp, &qp, &rp);
    println!("D(P,Q) + D(Q,R) = {:.12}", res.d_pq + res.d_qr);
    println!("D(P,R)          = {:.12}", res.d_pr);
    println!("R = {:?}", s.distribution(&rp)?.probs());
    Ok(())
}
