//! Fisher information, divergences, dual geodesics and dually flat structures.
//!
//! Parameter vectors are plain slices. For the Gaussian family the order is
//! `θ = (μ, σ)`; its Fisher matrix in those coordinates is `diag(1, 2)/σ²`.
//!
//! All divergences use natural logarithms. The canonical divergence of a
//! dually flat structure is `D(P, Q) = ψ(θ_P) + φ(η_Q) − θ_P·η_Q`, which is the
//! Bregman divergence of `ψ` from `θ_Q` to `θ_P`. For the exponential-family
//! structures registered here this is `KL(Q ‖ P)`.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng as _;
use serde::Serialize;

use crate::models::{
    self, log_sum_exp, DiscreteDistribution, LogDensity, Sampler, UnivariateGaussian,
};
use crate::quadrature::{self, QuadratureOptions};
use crate::rng::{self, Rng};
use crate::{Error, Result};

/// Step for numeric scores.
pub const SCORE_STEP: f64 = 1e-5;
/// Base step for numeric Hessians; one Richardson level halves it.
pub const HESSIAN_STEP: f64 = 1e-3;
/// Asymmetry of a numeric metric above this is reported.
pub const ASYMMETRY_THRESHOLD: f64 = 1e-4;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

// ---------------------------------------------------------------------------
// Fisher matrices

/// A symmetric metric estimate with its spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrix {
    matrix: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    positive_definite: bool,
}

impl FisherMatrix {
    /// Wraps a matrix, replacing it by its symmetric part.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::InvalidArgument(format!(
                "metric must be square, got {}×{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate("metric has non-finite entries".into()));
        }
        let sym = (&matrix + matrix.transpose()) * 0.5;
        let mut eigenvalues: Vec<f64> = SymmetricEigen::new(sym.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        eigenvalues.sort_by(f64::total_cmp);
        let scale = eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let positive_definite = eigenvalues
            .first()
            .is_some_and(|&lo| lo > 1e-10 * scale.max(f64::MIN_POSITIVE));
        Ok(Self {
            matrix: sym,
            eigenvalues,
            positive_definite,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidArgument(
                "rows must form a square matrix".into(),
            ));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn is_positive_definite(&self) -> bool {
        self.positive_definite
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| self.matrix.row(i).iter().copied().collect())
            .collect()
    }

    pub fn max_abs_diff(&self, other: &FisherMatrix) -> f64 {
        (&self.matrix - &other.matrix).abs().max()
    }
}

impl Serialize for FisherMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("FisherMatrix", 3)?;
        st.serialize_field("matrix", &self.rows())?;
        st.serialize_field("eigenvalues", &self.eigenvalues)?;
        st.serialize_field("positive_definite", &self.positive_definite)?;
        st.end()
    }
}

// ---------------------------------------------------------------------------
// Parametric families

#[derive(Debug, Clone, PartialEq)]
pub enum Support {
    Finite(Vec<f64>),
    /// A bracket holding all but a negligible amount of mass.
    Interval(f64, f64),
}

/// A family of univariate densities indexed by a parameter vector.
pub trait ParametricFamily: Sync {
    fn name(&self) -> &'static str;
    fn dim(&self) -> usize;
    fn validate(&self, theta: &[f64]) -> Result<()>;
    fn log_pdf(&self, theta: &[f64], x: f64) -> f64;
    fn support(&self, theta: &[f64]) -> Support;
    fn sample(&self, theta: &[f64], n: usize, rng: &mut Rng) -> Vec<f64>;

    /// `∇_θ log f(x; θ)`; central differences unless overridden.
    fn score(&self, theta: &[f64], x: f64) -> Vec<f64> {
        numeric_score(self, theta, x)
    }
}

pub fn numeric_score<F: ParametricFamily + ?Sized>(family: &F, theta: &[f64], x: f64) -> Vec<f64> {
    (0..theta.len())
        .map(|i| {
            let mut up = theta.to_vec();
            let mut dn = theta.to_vec();
            up[i] += SCORE_STEP;
            dn[i] -= SCORE_STEP;
            (family.log_pdf(&up, x) - family.log_pdf(&dn, x)) / (2.0 * SCORE_STEP)
        })
        .collect()
}

/// `N(μ, σ²)` with `θ = (μ, σ)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct GaussianFamily;

impl ParametricFamily for GaussianFamily {
    fn name(&self) -> &'static str {
        "gaussian"
    }
    fn dim(&self) -> usize {
        2
    }
    fn validate(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != 2 {
            return Err(Error::InvalidArgument(format!(
                "gaussian takes (mu, sigma), got {} values",
                theta.len()
            )));
        }
        UnivariateGaussian::new(theta[0], theta[1]).map(|_| ())
    }
    fn log_pdf(&self, theta: &[f64], x: f64) -> f64 {
        UnivariateGaussian {
            mu: theta[0],
            sigma: theta[1],
        }
        .log_pdf(x)
    }
    fn support(&self, theta: &[f64]) -> Support {
        Support::Interval(theta[0] - 12.0 * theta[1], theta[0] + 12.0 * theta[1])
    }
    fn sample(&self, theta: &[f64], n: usize, rng: &mut Rng) -> Vec<f64> {
        models::sample_with(
            &UnivariateGaussian {
                mu: theta[0],
                sigma: theta[1],
            },
            n,
            rng,
            None,
        )
    }
    fn score(&self, theta: &[f64], x: f64) -> Vec<f64> {
        let (mu, s) = (theta[0], theta[1]);
        let d = x - mu;
        vec![d / (s * s), d * d / (s * s * s) - 1.0 / s]
    }
}

/// Bernoulli with `θ = (p)`, support `{0, 1}`.
#[derive(Debug, Clone, Copy, Default)]
pub struct BernoulliFamily;

impl ParametricFamily for BernoulliFamily {
    fn name(&self) -> &'static str {
        "bernoulli"
    }
    fn dim(&self) -> usize {
        1
    }
    fn validate(&self, theta: &[f64]) -> Result<()> {
        match theta {
            [p] if *p > 0.0 && *p < 1.0 => Ok(()),
            _ => Err(Error::InvalidArgument(format!(
                "bernoulli takes one p in (0, 1), got {theta:?}"
            ))),
        }
    }
    fn log_pdf(&self, theta: &[f64], x: f64) -> f64 {
        if x == 1.0 {
            theta[0].ln()
        } else if x == 0.0 {
            (1.0 - theta[0]).ln()
        } else {
            f64::NEG_INFINITY
        }
    }
    fn support(&self, _theta: &[f64]) -> Support {
        Support::Finite(vec![0.0, 1.0])
    }
    fn sample(&self, theta: &[f64], n: usize, rng: &mut Rng) -> Vec<f64> {
        (0..n)
            .map(|_| {
                if rng.random::<f64>() < theta[0] {
                    1.0
                } else {
                    0.0
                }
            })
            .collect()
    }
    fn score(&self, theta: &[f64], x: f64) -> Vec<f64> {
        let p = theta[0];
        vec![x / p - (1.0 - x) / (1.0 - p)]
    }
}

pub fn score<F: ParametricFamily + ?Sized>(family: &F, theta: &[f64], x: f64) -> Result<Vec<f64>> {
    family.validate(theta)?;
    Ok(family.score(theta, x))
}

/// `diag(1, 2)/σ²` in `(μ, σ)` coordinates.
pub fn fim_analytic_gaussian(sigma: f64) -> Result<FisherMatrix> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let s2 = sigma * sigma;
    FisherMatrix::new(DMatrix::from_row_slice(
        2,
        2,
        &[1.0 / s2, 0.0, 0.0, 2.0 / s2],
    ))
}

/// Mean outer product of scores over `samples`.
pub fn fim_empirical<F: ParametricFamily + ?Sized>(
    family: &F,
    theta: &[f64],
    samples: &[f64],
) -> Result<FisherMatrix> {
    family.validate(theta)?;
    let d = family.dim();
    if samples.len() < d + 1 {
        return Err(Error::InvalidArgument(format!(
            "need at least {} samples for a {d}-parameter family, got {}",
            d + 1,
            samples.len()
        )));
    }
    let mut acc = DMatrix::zeros(d, d);
    for &x in samples {
        let s = nalgebra::DVector::from_vec(family.score(theta, x));
        acc += &s * s.transpose();
    }
    FisherMatrix::new(acc / samples.len() as f64)
}

/// Draws `n` samples at `θ` on the Monte-Carlo stream and averages score outer products.
pub fn fim_monte_carlo<F: ParametricFamily + ?Sized>(
    family: &F,
    theta: &[f64],
    n: usize,
    seed: u64,
) -> Result<FisherMatrix> {
    family.validate(theta)?;
    let mut rng = rng::stream(seed, rng::STREAM_MONTE_CARLO);
    let xs = family.sample(theta, n, &mut rng);
    fim_empirical(family, theta, &xs)
}

/// `KL(f(·; θp) ‖ f(·; θq))` by summation or quadrature over the union of supports.
pub fn kl_family<F: ParametricFamily + ?Sized>(
    family: &F,
    theta_p: &[f64],
    theta_q: &[f64],
) -> Result<f64> {
    family.validate(theta_p)?;
    family.validate(theta_q)?;
    let lp = |x: f64| family.log_pdf(theta_p, x);
    let lq = |x: f64| family.log_pdf(theta_q, x);
    match (family.support(theta_p), family.support(theta_q)) {
        (Support::Finite(xs), _) => {
            let mut total = 0.0;
            for x in xs {
                let (a, b) = (lp(x), lq(x));
                if a == f64::NEG_INFINITY {
                    continue;
                }
                if b == f64::NEG_INFINITY {
                    return Err(Error::Support(format!(
                        "q vanishes at {x} where p does not"
                    )));
                }
                total += a.exp() * (a - b);
            }
            Ok(total.max(0.0))
        }
        (Support::Interval(a0, b0), Support::Interval(a1, b1)) => {
            kl_on_bracket(&lp, &lq, (a0.min(a1), b0.max(b1)))
        }
        (Support::Interval(a, b), Support::Finite(_)) => kl_on_bracket(&lp, &lq, (a, b)),
    }
}

fn kl_on_bracket(
    lp: &dyn Fn(f64) -> f64,
    lq: &dyn Fn(f64) -> f64,
    bracket: (f64, f64),
) -> Result<f64> {
    let mut violation = None;
    let est = quadrature::integrate(
        |x| {
            let a = lp(x);
            if a == f64::NEG_INFINITY {
                return 0.0;
            }
            let b = lq(x);
            if b == f64::NEG_INFINITY {
                violation.get_or_insert(x);
                return 0.0;
            }
            a.exp() * (a - b)
        },
        bracket.0,
        bracket.1,
        &QuadratureOptions::default(),
    )?;
    if let Some(x) = violation {
        return Err(Error::Support(format!(
            "q vanishes at {x} where p does not"
        )));
    }
    Ok(est.value.max(0.0))
}

/// Hessian of `θ′ ↦ KL(f(·; θ) ‖ f(·; θ′))` at `θ′ = θ`.
pub fn fim_from_kl_hessian<F: ParametricFamily + ?Sized>(
    family: &F,
    theta: &[f64],
) -> Result<FisherMatrix> {
    family.validate(theta)?;
    let f = |t: &[f64]| kl_family(family, theta, t);
    FisherMatrix::new(richardson_hessian(&f, theta, HESSIAN_STEP)?)
}

/// Central-difference Hessian with one level of Richardson extrapolation.
fn richardson_hessian(
    f: &dyn Fn(&[f64]) -> Result<f64>,
    x: &[f64],
    h: f64,
) -> Result<DMatrix<f64>> {
    let coarse = central_hessian(f, x, h)?;
    let fine = central_hessian(f, x, 0.5 * h)?;
    Ok((fine * 4.0 - coarse) / 3.0)
}

fn central_hessian(f: &dyn Fn(&[f64]) -> Result<f64>, x: &[f64], h: f64) -> Result<DMatrix<f64>> {
    let d = x.len();
    let at = |moves: &[(usize, f64)]| {
        let mut y = x.to_vec();
        for &(i, s) in moves {
            y[i] += s * h;
        }
        f(&y)
    };
    let f0 = f(x)?;
    let mut hess = DMatrix::zeros(d, d);
    for i in 0..d {
        hess[(i, i)] = (at(&[(i, 1.0)])? - 2.0 * f0 + at(&[(i, -1.0)])?) / (h * h);
        for j in 0..i {
            let v = (at(&[(i, 1.0), (j, 1.0)])?
                - at(&[(i, 1.0), (j, -1.0)])?
                - at(&[(i, -1.0), (j, 1.0)])?
                + at(&[(i, -1.0), (j, -1.0)])?)
                / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Ok(hess)
}

/// Metric `−∂ᵢ∂′ⱼ D(θ : θ′)` at `θ = θ′ = θ₀`.
#[derive(Debug, Clone)]
pub struct InducedMetric {
    pub metric: FisherMatrix,
    /// Largest `|gᵢⱼ − gⱼᵢ|` before symmetrising.
    pub asymmetry: f64,
    pub asymmetric: bool,
}

pub fn divergence_induced_metric<D>(divergence: D, theta0: &[f64]) -> Result<InducedMetric>
where
    D: Fn(&[f64], &[f64]) -> Result<f64>,
{
    let mixed = |h: f64| -> Result<DMatrix<f64>> {
        let d = theta0.len();
        let mut m = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                let eval = |si: f64, sj: f64| {
                    let mut a = theta0.to_vec();
                    let mut b = theta0.to_vec();
                    a[i] += si * h;
                    b[j] += sj * h;
                    divergence(&a, &b)
                };
                m[(i, j)] = -(eval(1.0, 1.0)? - eval(1.0, -1.0)? - eval(-1.0, 1.0)?
                    + eval(-1.0, -1.0)?)
                    / (4.0 * h * h);
            }
        }
        Ok(m)
    };
    let coarse = mixed(HESSIAN_STEP)?;
    let fine = mixed(0.5 * HESSIAN_STEP)?;
    let raw = (fine * 4.0 - coarse) / 3.0;
    let asymmetry = (&raw - raw.transpose()).abs().max();
    Ok(InducedMetric {
        metric: FisherMatrix::new(raw)?,
        asymmetry,
        asymmetric: asymmetry > ASYMMETRY_THRESHOLD,
    })
}

// ---------------------------------------------------------------------------
// Divergences and entropy

/// Shannon entropy in nats; `0 log 0 = 0`.
pub fn entropy(p: &DiscreteDistribution) -> f64 {
    -p.probs()
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|v| v * v.ln())
        .sum::<f64>()
}

/// `Σ p log(p/q)` over a shared support.
pub fn kl_divergence(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    if !p.same_support(q) {
        return Err(Error::Support(
            "distributions are defined on different supports".into(),
        ));
    }
    let mut total = 0.0;
    for (i, (&a, &b)) in p.probs().iter().zip(q.probs()).enumerate() {
        if a == 0.0 {
            total += b;
            continue;
        }
        if b == 0.0 {
            return Err(Error::Support(format!(
                "q has no mass at support point {} where p has {a}",
                p.support()[i]
            )));
        }
        // Each term p log(p/q) − p + q is nonnegative; the extra terms sum to zero.
        total += a * (a / b).ln() - a + b;
    }
    Ok(total.max(0.0))
}

/// `∫ p log(p/q)` over `bracket` by adaptive quadrature.
pub fn kl_continuous<P, Q>(p: &P, q: &Q, bracket: (f64, f64)) -> Result<f64>
where
    P: LogDensity + ?Sized,
    Q: LogDensity + ?Sized,
{
    kl_on_bracket(&|x| p.log_pdf(x), &|x| q.log_pdf(x), bracket)
}

/// `KL` between Gaussians, integrating over `±12σ` of both.
pub fn kl_gaussian(p: &UnivariateGaussian, q: &UnivariateGaussian) -> Result<f64> {
    let lo = (p.mu - 12.0 * p.sigma).min(q.mu - 12.0 * q.sigma);
    let hi = (p.mu + 12.0 * p.sigma).max(q.mu + 12.0 * q.sigma);
    kl_continuous(p, q, (lo, hi))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Monte-Carlo `KL(p ‖ q) ≈ mean(log p(X) − log q(X))`, `X ~ p`.
pub fn kl_monte_carlo<P, Q>(p: &P, q: &Q, n: usize, seed: u64) -> Result<McEstimate>
where
    P: LogDensity + Sampler + ?Sized,
    Q: LogDensity + ?Sized,
{
    if n < 2 {
        return Err(Error::InvalidArgument(
            "Monte-Carlo KL needs at least 2 samples".into(),
        ));
    }
    let mut rng = rng::stream(seed, rng::STREAM_MONTE_CARLO);
    let mut terms = Vec::with_capacity(n);
    for _ in 0..n {
        let x = p.draw(&mut rng);
        let b = q.log_pdf(x);
        if b == f64::NEG_INFINITY {
            return Err(Error::Support(format!("q vanishes at sampled point {x}")));
        }
        terms.push(p.log_pdf(x) - b);
    }
    let mean = terms.iter().sum::<f64>() / n as f64;
    let var = terms.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (n - 1) as f64;
    Ok(McEstimate {
        value: mean,
        std_error: (var / n as f64).sqrt(),
        samples: n,
    })
}

// ---------------------------------------------------------------------------
// Bregman divergences

type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type VectorFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type DomainFn = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// A convex potential `F` with optional analytic gradient.
#[derive(Clone)]
pub struct BregmanGenerator {
    name: String,
    f: ScalarFn,
    grad: Option<VectorFn>,
    domain: DomainFn,
}

impl std::fmt::Debug for BregmanGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BregmanGenerator")
            .field("name", &self.name)
            .field("analytic_gradient", &self.grad.is_some())
            .finish()
    }
}

impl BregmanGenerator {
    pub fn new<F, D>(name: impl Into<String>, f: F, domain: D) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        D: Fn(&[f64]) -> bool + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            f: Arc::new(f),
            grad: None,
            domain: Arc::new(domain),
        }
    }

    pub fn with_gradient<G>(mut self, g: G) -> Self
    where
        G: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        self.grad = Some(Arc::new(g));
        self
    }

    /// `F(x) = ½‖x‖²`.
    pub fn squared_norm() -> Self {
        Self::new("squared_norm", |x| 0.5 * dot(x, x), |_| true).with_gradient(|x| x.to_vec())
    }

    /// `F(x) = Σ xᵢ log xᵢ` on the open positive orthant.
    pub fn negative_entropy() -> Self {
        Self::new(
            "negative_entropy",
            |x| x.iter().map(|v| v * v.ln()).sum(),
            |x| x.iter().all(|&v| v > 0.0 && v.is_finite()),
        )
        .with_gradient(|x| x.iter().map(|v| v.ln() + 1.0).collect())
    }

    /// `F(θ) = log(1 + Σ exp θᵢ)`.
    pub fn log_partition_simplex() -> Self {
        Self::new("log_partition", simplex_psi, |x| {
            x.iter().all(|v| v.is_finite())
        })
        .with_gradient(simplex_eta)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        (self.domain)(x)
    }

    /// `∇F`, by central differences (step 1e-6) when no gradient was supplied.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        if let Some(g) = &self.grad {
            return g(x);
        }
        let h = 1e-6;
        (0..x.len())
            .map(|i| {
                let mut up = x.to_vec();
                let mut dn = x.to_vec();
                up[i] += h;
                dn[i] -= h;
                ((self.f)(&up) - (self.f)(&dn)) / (2.0 * h)
            })
            .collect()
    }

    /// `(F(a) + F(b))/2 − F((a + b)/2)`; positive for a strictly convex `F` and `a ≠ b`.
    pub fn midpoint_convexity_gap(&self, a: &[f64], b: &[f64]) -> f64 {
        let mid: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
        0.5 * (self.value(a) + self.value(b)) - self.value(&mid)
    }
}

/// `B_F(θ : θ₀) = F(θ) − F(θ₀) − (θ − θ₀)·∇F(θ₀)`.
pub fn bregman_divergence(
    generator: &BregmanGenerator,
    theta: &[f64],
    theta0: &[f64],
) -> Result<f64> {
    if theta.len() != theta0.len() {
        return Err(Error::InvalidArgument(
            "points have different dimensions".into(),
        ));
    }
    for p in [theta, theta0] {
        if !generator.contains(p) {
            return Err(Error::InvalidArgument(format!(
                "{p:?} is outside the domain of {}",
                generator.name
            )));
        }
    }
    let grad = generator.gradient(theta0);
    Ok(generator.value(theta) - generator.value(theta0) - dot(&sub(theta, theta0), &grad))
}

// ---------------------------------------------------------------------------
// Geodesics between distributions

fn check_t(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!(
            "t must lie in [0, 1], got {t}"
        )));
    }
    Ok(())
}

/// Mixture interpolation `(1 − t) p + t q`.
pub fn m_geodesic(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    t: f64,
) -> Result<DiscreteDistribution> {
    check_t(t)?;
    if !p.same_support(q) {
        return Err(Error::Support(
            "distributions are defined on different supports".into(),
        ));
    }
    let w: Vec<f64> = p
        .probs()
        .iter()
        .zip(q.probs())
        .map(|(a, b)| (1.0 - t) * a + t * b)
        .collect();
    DiscreteDistribution::from_weights(p.support().to_vec(), &w)
}

/// Geometric interpolation `p^{1−t} q^t / exp(a(t))`.
pub fn e_geodesic(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    t: f64,
) -> Result<DiscreteDistribution> {
    check_t(t)?;
    if !p.same_support(q) {
        return Err(Error::Support(
            "distributions are defined on different supports".into(),
        ));
    }
    if p.probs().iter().chain(q.probs()).any(|&v| v <= 0.0) {
        return Err(Error::Support(
            "e-geodesic endpoints must be strictly positive".into(),
        ));
    }
    let logs: Vec<f64> = p
        .probs()
        .iter()
        .zip(q.probs())
        .map(|(a, b)| (1.0 - t) * a.ln() + t * b.ln())
        .collect();
    let a = log_sum_exp(&logs);
    let w: Vec<f64> = logs.iter().map(|l| (l - a).exp()).collect();
    DiscreteDistribution::from_weights(p.support().to_vec(), &w)
}

/// The continuous e-geodesic density at a fixed `t`.
pub struct EGeodesicDensity<'a> {
    p: &'a dyn LogDensity,
    q: &'a dyn LogDensity,
    t: f64,
    /// `a(t) = log ∫ p^{1−t} q^t`.
    pub log_normalizer: f64,
}

impl LogDensity for EGeodesicDensity<'_> {
    fn log_pdf(&self, x: f64) -> f64 {
        (1.0 - self.t) * self.p.log_pdf(x) + self.t * self.q.log_pdf(x) - self.log_normalizer
    }
}

pub fn e_geodesic_density<'a>(
    p: &'a dyn LogDensity,
    q: &'a dyn LogDensity,
    t: f64,
    bracket: (f64, f64),
) -> Result<EGeodesicDensity<'a>> {
    check_t(t)?;
    let z = quadrature::integrate(
        |x| ((1.0 - t) * p.log_pdf(x) + t * q.log_pdf(x)).exp(),
        bracket.0,
        bracket.1,
        &QuadratureOptions::default(),
    )?;
    if !(z.value > 0.0) {
        return Err(Error::Support(
            "endpoints share no mass on the bracket".into(),
        ));
    }
    Ok(EGeodesicDensity {
        p,
        q,
        t,
        log_normalizer: z.value.ln(),
    })
}

pub fn total_variation(p: &DiscreteDistribution, q: &DiscreteDistribution) -> f64 {
    0.5 * p
        .probs()
        .iter()
        .zip(q.probs())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
}

// ---------------------------------------------------------------------------
// Dually flat structures

/// A point carried in both affine charts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualPoint {
    pub theta: Vec<f64>,
    pub eta: Vec<f64>,
}

/// Dual coordinates `θ`/`η` with Legendre-conjugate potentials `ψ`/`φ`,
/// `η = ∇ψ(θ)`, `θ = ∇φ(η)`.
pub trait DuallyFlat: Sync {
    fn name(&self) -> &'static str;
    fn dim(&self) -> usize;
    fn psi(&self, theta: &[f64]) -> f64;
    fn phi(&self, eta: &[f64]) -> f64;
    fn eta_of_theta(&self, theta: &[f64]) -> Vec<f64>;
    /// Errors when `η` is outside the dual domain.
    fn theta_of_eta(&self, eta: &[f64]) -> Result<Vec<f64>>;
    /// A random point in a compact part of the `θ` domain.
    fn random_theta(&self, rng: &mut Rng) -> Vec<f64>;

    fn point_from_theta(&self, theta: &[f64]) -> DualPoint {
        DualPoint {
            theta: theta.to_vec(),
            eta: self.eta_of_theta(theta),
        }
    }

    fn point_from_eta(&self, eta: &[f64]) -> Result<DualPoint> {
        Ok(DualPoint {
            theta: self.theta_of_eta(eta)?,
            eta: eta.to_vec(),
        })
    }

    fn random_point(&self, rng: &mut Rng) -> DualPoint {
        self.point_from_theta(&self.random_theta(rng))
    }
}

/// `ψ(θ) = ½‖θ‖²`; self-dual with `η = θ`.
#[derive(Debug, Clone, Copy)]
pub struct QuadraticStructure {
    pub dim: usize,
}

impl DuallyFlat for QuadraticStructure {
    fn name(&self) -> &'static str {
        "quadratic"
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn psi(&self, theta: &[f64]) -> f64 {
        0.5 * dot(theta, theta)
    }
    fn phi(&self, eta: &[f64]) -> f64 {
        0.5 * dot(eta, eta)
    }
    fn eta_of_theta(&self, theta: &[f64]) -> Vec<f64> {
        theta.to_vec()
    }
    fn theta_of_eta(&self, eta: &[f64]) -> Result<Vec<f64>> {
        Ok(eta.to_vec())
    }
    fn random_theta(&self, rng: &mut Rng) -> Vec<f64> {
        (0..self.dim).map(|_| rng.random_range(-3.0..3.0)).collect()
    }
}

fn simplex_psi(theta: &[f64]) -> f64 {
    let mut terms = theta.to_vec();
    terms.push(0.0);
    log_sum_exp(&terms)
}

fn simplex_eta(theta: &[f64]) -> Vec<f64> {
    let psi = simplex_psi(theta);
    theta.iter().map(|t| (t - psi).exp()).collect()
}

/// Distributions on `n` outcomes with `θᵢ = log(pᵢ/pₙ)`, `η = (p₁, …, pₙ₋₁)`.
/// `ψ` is the log-partition and `φ` the negative entropy, so `D(P, Q) = KL(Q ‖ P)`.
#[derive(Debug, Clone, Copy)]
pub struct SimplexStructure {
    pub outcomes: usize,
}

impl SimplexStructure {
    pub fn distribution(&self, point: &DualPoint) -> Result<DiscreteDistribution> {
        let mut p = point.eta.clone();
        p.push(1.0 - p.iter().sum::<f64>());
        DiscreteDistribution::from_weights((0..self.outcomes).map(|i| i as f64).collect(), &p)
    }

    pub fn point_from_distribution(&self, p: &DiscreteDistribution) -> Result<DualPoint> {
        if p.len() != self.outcomes {
            return Err(Error::InvalidArgument(format!(
                "expected {} outcomes, got {}",
                self.outcomes,
                p.len()
            )));
        }
        self.point_from_eta(&p.probs()[..self.outcomes - 1])
    }
}

impl DuallyFlat for SimplexStructure {
    fn name(&self) -> &'static str {
        "simplex"
    }
    fn dim(&self) -> usize {
        self.outcomes - 1
    }
    fn psi(&self, theta: &[f64]) -> f64 {
        simplex_psi(theta)
    }
    fn phi(&self, eta: &[f64]) -> f64 {
        let last = 1.0 - eta.iter().sum::<f64>();
        eta.iter()
            .chain(std::iter::once(&last))
            .filter(|&&v| v > 0.0)
            .map(|v| v * v.ln())
            .sum()
    }
    fn eta_of_theta(&self, theta: &[f64]) -> Vec<f64> {
        simplex_eta(theta)
    }
    fn theta_of_eta(&self, eta: &[f64]) -> Result<Vec<f64>> {
        let last = 1.0 - eta.iter().sum::<f64>();
        if !(last > 0.0) || eta.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "{eta:?} is not in the open simplex"
            )));
        }
        Ok(eta.iter().map(|v| (v / last).ln()).collect())
    }
    fn random_theta(&self, rng: &mut Rng) -> Vec<f64> {
        (0..self.dim())
            .map(|_| rng.random_range(-2.0..2.0))
            .collect()
    }
}

/// Univariate Gaussians in natural coordinates `θ = (μ/σ², −1/2σ²)` with
/// `η = (μ, μ² + σ²)`. Constants common to `ψ` and `φ` are dropped.
#[derive(Debug, Clone, Copy, Default)]
pub struct GaussianNaturalStructure;

impl GaussianNaturalStructure {
    pub fn point(&self, g: &UnivariateGaussian) -> DualPoint {
        let s2 = g.variance();
        self.point_from_theta(&[g.mu / s2, -0.5 / s2])
    }

    pub fn gaussian(&self, point: &DualPoint) -> Result<UnivariateGaussian> {
        let var = point.eta[1] - point.eta[0] * point.eta[0];
        UnivariateGaussian::new(point.eta[0], var.sqrt())
    }
}

impl DuallyFlat for GaussianNaturalStructure {
    fn name(&self) -> &'static str {
        "gaussian"
    }
    fn dim(&self) -> usize {
        2
    }
    fn psi(&self, theta: &[f64]) -> f64 {
        -theta[0] * theta[0] / (4.0 * theta[1]) + 0.5 * (-0.5 / theta[1]).ln()
    }
    fn phi(&self, eta: &[f64]) -> f64 {
        let var = eta[1] - eta[0] * eta[0];
        -0.5 - 0.5 * var.ln()
    }
    fn eta_of_theta(&self, theta: &[f64]) -> Vec<f64> {
        let var = -0.5 / theta[1];
        let mu = theta[0] * var;
        vec![mu, mu * mu + var]
    }
    fn theta_of_eta(&self, eta: &[f64]) -> Result<Vec<f64>> {
        let var = eta[1] - eta[0] * eta[0];
        if !(var > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "{eta:?} has non-positive variance"
            )));
        }
        Ok(vec![eta[0] / var, -0.5 / var])
    }
    fn random_theta(&self, rng: &mut Rng) -> Vec<f64> {
        let mu: f64 = rng.random_range(-2.0..2.0);
        let sigma: f64 = rng.random_range(0.5..2.0);
        vec![mu / (sigma * sigma), -0.5 / (sigma * sigma)]
    }
}

/// `ψ(θ_P) + φ(η_Q) − θ_P·η_Q`.
pub fn canonical_divergence<S: DuallyFlat + ?Sized>(
    structure: &S,
    p: &DualPoint,
    q: &DualPoint,
) -> f64 {
    structure.psi(&p.theta) + structure.phi(&q.eta) - dot(&p.theta, &q.eta)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PythagorasResidual {
    pub d_pq: f64,
    pub d_qr: f64,
    pub d_pr: f64,
    /// `D(P,Q) + D(Q,R) − D(P,R)`.
    pub gap: f64,
    /// `(θ_Q − θ_P)·(η_Q − η_R)`.
    pub inner: f64,
}

pub fn pythagoras_residual<S: DuallyFlat + ?Sized>(
    structure: &S,
    p: &DualPoint,
    q: &DualPoint,
    r: &DualPoint,
) -> PythagorasResidual {
    let d_pq = canonical_divergence(structure, p, q);
    let d_qr = canonical_divergence(structure, q, r);
    let d_pr = canonical_divergence(structure, p, r);
    PythagorasResidual {
        d_pq,
        d_qr,
        d_pr,
        gap: d_pq + d_qr - d_pr,
        inner: dot(&sub(&q.theta, &p.theta), &sub(&q.eta, &r.eta)),
    }
}

/// A point `R` with `η_R − η_Q` orthogonal to `θ_Q − θ_P`, built from the
/// component of `direction` orthogonal to `θ_Q − θ_P`. The step is halved
/// until `η_R` lies in the dual domain.
pub fn orthogonal_completion<S: DuallyFlat + ?Sized>(
    structure: &S,
    p: &DualPoint,
    q: &DualPoint,
    direction: &[f64],
) -> Result<DualPoint> {
    let u = sub(&q.theta, &p.theta);
    let uu = dot(&u, &u);
    let mut v = direction.to_vec();
    if uu > 0.0 {
        let c = dot(direction, &u) / uu;
        v.iter_mut().zip(&u).for_each(|(vi, ui)| *vi -= c * ui);
    }
    let mut scale = 1.0;
    for _ in 0..60 {
        let eta: Vec<f64> = q.eta.iter().zip(&v).map(|(e, d)| e + scale * d).collect();
        if let Ok(point) = structure.point_from_eta(&eta) {
            return Ok(point);
        }
        scale *= 0.5;
    }
    Err(Error::Degenerate(
        "no orthogonal step stays inside the dual domain".into(),
    ))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct OrthogonalityReport {
    /// `(η_P − η_Q)·(θ_Q − θ_R)`.
    pub first: f64,
    /// `(θ_P − θ_Q)·(η_Q − η_R)`.
    pub second: f64,
    pub first_vanishes: bool,
    pub second_vanishes: bool,
}

impl OrthogonalityReport {
    pub fn orthogonal(&self) -> bool {
        self.first_vanishes || self.second_vanishes
    }
}

pub fn orthogonality_check<S: DuallyFlat + ?Sized>(
    _structure: &S,
    p: &DualPoint,
    q: &DualPoint,
    r: &DualPoint,
) -> OrthogonalityReport {
    let first = dot(&sub(&p.eta, &q.eta), &sub(&q.theta, &r.theta));
    let second = dot(&sub(&p.theta, &q.theta), &sub(&q.eta, &r.eta));
    OrthogonalityReport {
        first,
        second,
        first_vanishes: first.abs() <= 1e-9,
        second_vanishes: second.abs() <= 1e-9,
    }
}

// ---------------------------------------------------------------------------
// Comparison with the hyperbolic half-plane

#[derive(Debug, Clone, Serialize)]
pub struct PoincareRow {
    pub sigma: f64,
    /// Fisher metric in `(u, σ)` with `μ = √2 u`.
    pub pulled_back: [[f64; 2]; 2],
    /// `(du² + dσ²)/σ²`.
    pub poincare: [[f64; 2]; 2],
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PoincareReport {
    pub rows: Vec<PoincareRow>,
    /// The common ratio when every row is a scalar multiple with the same factor.
    pub constant_ratio: Option<f64>,
}

/// Pulls the Gaussian Fisher metric back under `u = μ/√2` and compares it to
/// the Poincaré half-plane metric at each `σ`. The two differ by the factor 2.
pub fn poincare_comparison(sigma_grid: &[f64]) -> Result<PoincareReport> {
    let jac = DMatrix::from_row_slice(2, 2, &[std::f64::consts::SQRT_2, 0.0, 0.0, 1.0]);
    let mut rows = Vec::with_capacity(sigma_grid.len());
    for &sigma in sigma_grid {
        let fim = fim_analytic_gaussian(sigma)?;
        let pulled = jac.transpose() * fim.matrix() * &jac;
        let poincare = 1.0 / (sigma * sigma);
        let to_arr = |m: &DMatrix<f64>| [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]];
        rows.push(PoincareRow {
            sigma,
            pulled_back: to_arr(&pulled),
            poincare: [[poincare, 0.0], [0.0, poincare]],
            ratio: pulled[(0, 0)] / poincare,
        });
    }
    let constant_ratio = rows.first().map(|r| r.ratio).filter(|&c| {
        rows.iter().all(|r| {
            let m = r.pulled_back;
            (r.ratio - c).abs() <= 1e-12 * c.abs()
                && (m[1][1] / r.poincare[1][1] - c).abs() <= 1e-12 * c.abs()
                && m[0][1] == 0.0
                && m[1][0] == 0.0
        })
    });
    Ok(PoincareReport {
        rows,
        constant_ratio,
    })
}
