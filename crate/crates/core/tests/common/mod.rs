#![allow(dead_code)]

use igeom::natgrad::{loss_and_gradient, GradientBundle, Network};
use nalgebra::DMatrix;

pub fn random_batch(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let g = igeom::models::UnivariateGaussian::standard();
    let v = igeom::models::sample(&g, rows * cols, seed, None);
    DMatrix::from_row_slice(rows, cols, &v)
}

pub fn labels(n: usize, classes: usize) -> Vec<usize> {
    (0..n).map(|i| (i * 7 + 3) % classes).collect()
}

/// Full-space matrix whose weight blocks are `I_out ⊗ DᵀD` and whose bias
/// blocks are `(1 − γ) I`, so the full damped solve reproduces the per-layer rule.
pub fn block_fisher(net: &Network, g: &GradientBundle, gamma: f64) -> DMatrix<f64> {
    let p = net.num_params();
    let mut fisher = DMatrix::zeros(p, p);
    let mut offset = 0;
    for (l, layer) in net.layers().iter().enumerate() {
        let f = g.weights[l].transpose() * &g.weights[l];
        let (out, inp) = layer.weight.shape();
        for o in 0..out {
            let at = offset + o * inp;
            fisher.view_mut((at, at), (inp, inp)).copy_from(&f);
        }
        offset += out * inp;
        for b in 0..out {
            fisher[(offset + b, offset + b)] = 1.0 - gamma;
        }
        offset += out;
    }
    fisher
}

/// Largest deviation between backprop and central differences (step 1e-5),
/// relative to the larger magnitude, or absolute below 1e-6.
pub fn gradient_fd_worst(net: &Network, x: &DMatrix<f64>, y: &[usize]) -> f64 {
    let analytic = loss_and_gradient(net, x, y).unwrap().1.flatten();
    let theta = net.flatten();
    let h = 1e-5;
    let mut worst = 0.0f64;
    for i in 0..theta.len() {
        let mut up = theta.clone();
        let mut dn = theta.clone();
        up[i] += h;
        dn[i] -= h;
        let lu = loss_and_gradient(&net.with_flat(&up).unwrap(), x, y)
            .unwrap()
            .0;
        let ld = loss_and_gradient(&net.with_flat(&dn).unwrap(), x, y)
            .unwrap()
            .0;
        let (a, b) = ((lu - ld) / (2.0 * h), analytic[i]);
        let scale = a.abs().max(b.abs());
        let err = if scale > 1e-6 {
            (a - b).abs() / scale
        } else {
            (a - b).abs()
        };
        worst = worst.max(err);
    }
    worst
}
