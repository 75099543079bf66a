//! Probability models: univariate Gaussians, Gaussian mixtures, finite
//! distributions and exponential families in `(h, T, η, A)` form.

use std::f64::consts::PI;
use std::io::{BufRead, Write};
use std::ops::Range;
use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::quadrature::{self, QuadratureOptions};
use crate::rng::{self, Rng};
use crate::{Error, Result};

/// `½ log 2π`.
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// `log Σ exp(xᵢ)`, returning `-∞` for an empty slice or all-`-∞` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub trait LogDensity {
    /// Natural log of the density or mass at `x`; `-∞` where it vanishes.
    fn log_pdf(&self, x: f64) -> f64;

    fn pdf(&self, x: f64) -> f64 {
        self.log_pdf(x).exp()
    }
}

/// One draw from a model using a caller-owned generator.
pub trait Sampler {
    fn draw(&self, rng: &mut Rng) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct UnivariateGaussian {
    pub mu: f64,
    pub sigma: f64,
}

impl UnivariateGaussian {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "mean must be finite, got {mu}"
            )));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        Ok(Self { mu, sigma })
    }

    pub fn standard() -> Self {
        Self {
            mu: 0.0,
            sigma: 1.0,
        }
    }

    pub fn variance(&self) -> f64 {
        self.sigma * self.sigma
    }
}

impl LogDensity for UnivariateGaussian {
    fn log_pdf(&self, x: f64) -> f64 {
        let z = (x - self.mu) / self.sigma;
        -0.5 * z * z - self.sigma.ln() - HALF_LN_2PI
    }
}

impl Sampler for UnivariateGaussian {
    fn draw(&self, rng: &mut Rng) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.mu + self.sigma * z
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    components: Vec<UnivariateGaussian>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, components: Vec<UnivariateGaussian>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument(
                "mixture needs at least one component".into(),
            ));
        }
        if weights.len() != components.len() {
            return Err(Error::InvalidArgument(format!(
                "{} weights for {} components",
                weights.len(),
                components.len()
            )));
        }
        check_probabilities(&weights, "mixture weights")?;
        Ok(Self {
            weights,
            components,
        })
    }

    /// Equal weights over the given components.
    pub fn uniform(components: Vec<UnivariateGaussian>) -> Result<Self> {
        let k = components.len().max(1);
        Self::new(vec![1.0 / k as f64; components.len()], components)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[UnivariateGaussian] {
        &self.components
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    /// `log wₖ + log N(x; μₖ, σₖ)` for each component.
    pub fn joint_log_densities(&self, x: f64) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.components)
            .map(|(&w, c)| {
                if w > 0.0 {
                    w.ln() + c.log_pdf(x)
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect()
    }

    /// Components sorted by ascending mean, weights permuted alongside.
    pub fn sorted_by_mean(&self) -> Self {
        let mut idx: Vec<usize> = (0..self.k()).collect();
        idx.sort_by(|&a, &b| self.components[a].mu.total_cmp(&self.components[b].mu));
        Self {
            weights: idx.iter().map(|&i| self.weights[i]).collect(),
            components: idx.iter().map(|&i| self.components[i]).collect(),
        }
    }

    /// Flattened `(w₁, μ₁, σ₁, w₂, …)`.
    pub fn parameters(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.components)
            .flat_map(|(&w, c)| [w, c.mu, c.sigma])
            .collect()
    }
}

impl LogDensity for GaussianMixture {
    fn log_pdf(&self, x: f64) -> f64 {
        log_sum_exp(&self.joint_log_densities(x))
    }
}

impl Sampler for GaussianMixture {
    fn draw(&self, rng: &mut Rng) -> f64 {
        let u: f64 = rng.random();
        let c = pick_index(&self.weights, u);
        self.components[c].draw(rng)
    }
}

fn pick_index(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    // Rounding can leave the cumulative sum a hair under 1.
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

fn check_probabilities(p: &[f64], what: &str) -> Result<()> {
    if let Some(bad) = p.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "{what} must be nonnegative, found {bad}"
        )));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "{what} sum to {total}, not 1"
        )));
    }
    Ok(())
}

/// A distribution on finitely many distinct real points.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DiscreteDistribution {
    support: Vec<f64>,
    probs: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(support: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::InvalidArgument("empty support".into()));
        }
        if support.len() != probs.len() {
            return Err(Error::InvalidArgument(format!(
                "{} support points for {} probabilities",
                support.len(),
                probs.len()
            )));
        }
        let mut sorted = support.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(
                "support points must be distinct".into(),
            ));
        }
        check_probabilities(&probs, "probabilities")?;
        Ok(Self { support, probs })
    }

    /// Probabilities over the labels `0, 1, …, n−1`.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        Self::new((0..probs.len()).map(|i| i as f64).collect(), probs)
    }

    /// Normalises nonnegative weights with at least one positive entry.
    pub fn from_weights(support: Vec<f64>, weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidArgument(format!("weights sum to {total}")));
        }
        let mut probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        renormalize(&mut probs);
        Self::new(support, probs)
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::from_probs(vec![1.0 / n as f64; n])
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// `E[f(X)]`.
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.support
            .iter()
            .zip(&self.probs)
            .map(|(&x, &p)| p * f(x))
            .sum()
    }

    pub fn same_support(&self, other: &Self) -> bool {
        self.support == other.support
    }
}

/// Rescales in place so the entries sum to one as closely as rounding allows.
pub(crate) fn renormalize(p: &mut [f64]) {
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
}

impl LogDensity for DiscreteDistribution {
    fn log_pdf(&self, x: f64) -> f64 {
        match self.support.iter().position(|&s| s == x) {
            Some(i) => self.probs[i].ln(),
            None => f64::NEG_INFINITY,
        }
    }
}

impl Sampler for DiscreteDistribution {
    fn draw(&self, rng: &mut Rng) -> f64 {
        let u: f64 = rng.random();
        self.support[pick_index(&self.probs, u)]
    }
}

/// `n` draws on the sampling stream of `seed`, each clamped into `clip` when given.
pub fn sample<S: Sampler + ?Sized>(
    model: &S,
    n: usize,
    seed: u64,
    clip: Option<(f64, f64)>,
) -> Vec<f64> {
    let mut rng = rng::stream(seed, rng::STREAM_SAMPLE);
    sample_with(model, n, &mut rng, clip)
}

pub fn sample_with<S: Sampler + ?Sized>(
    model: &S,
    n: usize,
    rng: &mut Rng,
    clip: Option<(f64, f64)>,
) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let x = model.draw(rng);
            match clip {
                Some((lo, hi)) => x.clamp(lo, hi),
                None => x,
            }
        })
        .collect()
}

/// Sample mean and biased (1/n) standard deviation.
pub fn mle_gaussian(data: &[f64]) -> Result<UnivariateGaussian> {
    if data.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 points for a Gaussian fit, got {}",
            data.len()
        )));
    }
    if let Some(bad) = data.iter().find(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "non-finite data value {bad}"
        )));
    }
    let n = data.len() as f64;
    let mu = data.iter().sum::<f64>() / n;
    let var = data.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n;
    if !(var > 0.0) {
        return Err(Error::Degenerate(
            "all data points are equal; variance is zero".into(),
        ));
    }
    Ok(UnivariateGaussian {
        mu,
        sigma: var.sqrt(),
    })
}

pub fn log_likelihood<M: LogDensity + ?Sized>(model: &M, data: &[f64]) -> f64 {
    data.iter().map(|&x| model.log_pdf(x)).sum()
}

/// Posterior component probabilities at `x`, computed in log space.
pub fn responsibilities(mix: &GaussianMixture, x: f64) -> Vec<f64> {
    let logs = mix.joint_log_densities(x);
    let norm = log_sum_exp(&logs);
    let mut r: Vec<f64> = logs.iter().map(|l| (l - norm).exp()).collect();
    renormalize(&mut r);
    r
}

/// Writes one value per line with 17 significant digits.
pub fn write_dataset<W: Write>(mut out: W, data: &[f64]) -> Result<()> {
    for x in data {
        writeln!(out, "{x:.16e}")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads one value per line; blank lines and lines starting with `#` are skipped.
pub fn read_dataset<R: BufRead>(input: R) -> Result<Vec<f64>> {
    let mut data = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let x: f64 = t.parse().map_err(|_| {
            Error::InvalidArgument(format!(
                "line {}: cannot parse {t:?} as a number",
                lineno + 1
            ))
        })?;
        if !x.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "line {}: non-finite value",
                lineno + 1
            )));
        }
        data.push(x);
    }
    Ok(data)
}

// ---------------------------------------------------------------------------
// Exponential families

/// Integration over the sample space of an exponential family.
pub trait Measure<X>: Send + Sync {
    fn integrate(&self, f: &dyn Fn(&X) -> f64) -> Result<f64>;
}

/// Lebesgue measure on a finite bracket, integrated by adaptive quadrature.
/// Unnormalised kernels can be large, so `new` also sets a relative tolerance.
#[derive(Debug, Clone, Copy)]
pub struct RealLine {
    pub lo: f64,
    pub hi: f64,
    pub opts: QuadratureOptions,
}

impl RealLine {
    pub fn new(lo: f64, hi: f64) -> Self {
        let opts = QuadratureOptions {
            rel_tol: 1e-12,
            ..QuadratureOptions::default()
        };
        Self { lo, hi, opts }
    }
}

impl Measure<f64> for RealLine {
    fn integrate(&self, f: &dyn Fn(&f64) -> f64) -> Result<f64> {
        Ok(quadrature::integrate(|x| f(&x), self.lo, self.hi, &self.opts)?.value)
    }
}

/// Counting measure on a finite list of points.
#[derive(Debug, Clone)]
pub struct FiniteSet<X> {
    pub points: Vec<X>,
}

impl<X: Send + Sync> Measure<X> for FiniteSet<X> {
    fn integrate(&self, f: &dyn Fn(&X) -> f64) -> Result<f64> {
        Ok(self.points.iter().map(f).sum())
    }
}

/// Product of two measures; integrates the second factor innermost.
#[derive(Debug, Clone)]
pub struct ProductMeasure<A, B> {
    pub outer: A,
    pub inner: B,
}

impl<X, Y, A, B> Measure<(X, Y)> for ProductMeasure<A, B>
where
    X: Clone,
    Y: Clone,
    A: Measure<X>,
    B: Measure<Y>,
{
    fn integrate(&self, f: &dyn Fn(&(X, Y)) -> f64) -> Result<f64> {
        let failure = std::sync::Mutex::new(None);
        let total = self.outer.integrate(&|x: &X| match self
            .inner
            .integrate(&|y: &Y| f(&(x.clone(), y.clone())))
        {
            Ok(v) => v,
            Err(e) => {
                failure.lock().unwrap().get_or_insert(e);
                f64::NAN
            }
        });
        if let Some(e) = failure.into_inner().unwrap() {
            return Err(e);
        }
        total
    }
}

type BaseMeasure<X> = Arc<dyn Fn(&X) -> f64 + Send + Sync>;
type Statistic<X> = Arc<dyn Fn(&X) -> Vec<f64> + Send + Sync>;
type LogPartition = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// `f(x) = h(x) exp(η·T(x) − A(η))` with respect to a reference measure.
pub struct ExponentialFamilyModel<X> {
    base_measure: BaseMeasure<X>,
    stat: Statistic<X>,
    eta: Vec<f64>,
    log_partition: Option<LogPartition>,
    measure: Arc<dyn Measure<X>>,
}

impl<X> Clone for ExponentialFamilyModel<X> {
    fn clone(&self) -> Self {
        Self {
            base_measure: self.base_measure.clone(),
            stat: self.stat.clone(),
            eta: self.eta.clone(),
            log_partition: self.log_partition.clone(),
            measure: self.measure.clone(),
        }
    }
}

impl<X> std::fmt::Debug for ExponentialFamilyModel<X> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExponentialFamilyModel")
            .field("eta", &self.eta)
            .field("closed_form_log_partition", &self.log_partition.is_some())
            .finish()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl<X: 'static> ExponentialFamilyModel<X> {
    pub fn new<H, T, M>(base_measure: H, stat: T, eta: Vec<f64>, measure: M) -> Self
    where
        H: Fn(&X) -> f64 + Send + Sync + 'static,
        T: Fn(&X) -> Vec<f64> + Send + Sync + 'static,
        M: Measure<X> + 'static,
    {
        Self {
            base_measure: Arc::new(base_measure),
            stat: Arc::new(stat),
            eta,
            log_partition: None,
            measure: Arc::new(measure),
        }
    }

    /// Supplies `A(η)` in closed form instead of integrating numerically.
    pub fn with_log_partition<F>(mut self, a: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        self.log_partition = Some(Arc::new(a));
        self
    }

    /// Same family at another natural parameter.
    pub fn with_eta(&self, eta: Vec<f64>) -> Self {
        Self {
            eta,
            ..self.clone()
        }
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn stat(&self, x: &X) -> Vec<f64> {
        (self.stat)(x)
    }

    pub fn base_measure(&self, x: &X) -> f64 {
        (self.base_measure)(x)
    }

    /// Unnormalised `log h(x) + η·T(x)`.
    pub fn log_kernel(&self, x: &X) -> f64 {
        let h = (self.base_measure)(x);
        if h <= 0.0 {
            return f64::NEG_INFINITY;
        }
        h.ln() + dot(&self.eta, &(self.stat)(x))
    }

    /// `A(η)`, from the closed form when supplied and by integration otherwise.
    pub fn log_partition(&self) -> Result<f64> {
        if let Some(a) = &self.log_partition {
            return Ok(a(&self.eta));
        }
        self.numeric_log_partition()
    }

    /// `A(η)` by integrating `h exp(η·T)` against the reference measure.
    pub fn numeric_log_partition(&self) -> Result<f64> {
        let z = self.measure.integrate(&|x| self.log_kernel(x).exp())?;
        if !(z > 0.0 && z.is_finite()) {
            return Err(Error::Integration(format!(
                "partition function evaluated to {z}"
            )));
        }
        Ok(z.ln())
    }

    pub fn log_density(&self, x: &X) -> Result<f64> {
        Ok(self.log_kernel(x) - self.log_partition()?)
    }

    /// `∫ f dμ` of the normalised density; 1 for a consistent model.
    pub fn total_mass(&self) -> Result<f64> {
        let a = self.log_partition()?;
        self.measure.integrate(&|x| (self.log_kernel(x) - a).exp())
    }

    /// Mean of the sufficient statistic, `E[T(X)]`.
    pub fn mean_stat(&self) -> Result<Vec<f64>> {
        let a = self.log_partition()?;
        (0..self.eta.len())
            .map(|i| {
                self.measure
                    .integrate(&|x| (self.log_kernel(x) - a).exp() * (self.stat)(x)[i])
            })
            .collect()
    }
}

impl ExponentialFamilyModel<f64> {
    /// `N(μ, σ²)` with `h = 1/√2π`, `T = (x, x²)`, `η = (μ/σ², −1/2σ²)`.
    pub fn gaussian(g: UnivariateGaussian) -> Self {
        let s2 = g.variance();
        let bracket = 12.0 * g.sigma;
        Self::new(
            |_| (-HALF_LN_2PI).exp(),
            |x: &f64| vec![*x, x * x],
            vec![g.mu / s2, -0.5 / s2],
            RealLine::new(g.mu - bracket, g.mu + bracket),
        )
        .with_log_partition(|eta| -eta[0] * eta[0] / (4.0 * eta[1]) - 0.5 * (-2.0 * eta[1]).ln())
    }
}

/// An exponential family over pairs `(x, z)` with `x` observed and
/// `z ∈ {0, …, k−1}` hidden. `hidden` names the entries of `η` that form
/// the hidden-variable block.
#[derive(Debug, Clone)]
pub struct JointExponentialFamily {
    pub model: ExponentialFamilyModel<(f64, usize)>,
    pub hidden: Range<usize>,
    pub k: usize,
}

impl JointExponentialFamily {
    pub fn hidden_eta(&self) -> &[f64] {
        &self.model.eta()[self.hidden.clone()]
    }

    /// The Gaussian mixture as a joint family with
    /// `T(x, z) = (δ_z, δ_z x, δ_z x²)` blocked per component. Every entry
    /// depends on `z`, so the whole of `η` is the hidden block.
    pub fn gaussian_mixture(mix: &GaussianMixture) -> Self {
        let k = mix.k();
        let mut eta = vec![0.0; 3 * k];
        for (c, (g, &w)) in mix.components().iter().zip(mix.weights()).enumerate() {
            let s2 = g.variance();
            eta[c] = if w > 0.0 { w.ln() } else { f64::NEG_INFINITY }
                - g.mu * g.mu / (2.0 * s2)
                - g.sigma.ln();
            eta[k + c] = g.mu / s2;
            eta[2 * k + c] = -0.5 / s2;
        }
        let lo = mix
            .components()
            .iter()
            .map(|g| g.mu - 12.0 * g.sigma)
            .fold(f64::INFINITY, f64::min);
        let hi = mix
            .components()
            .iter()
            .map(|g| g.mu + 12.0 * g.sigma)
            .fold(f64::NEG_INFINITY, f64::max);
        let measure = ProductMeasure {
            outer: RealLine::new(lo, hi),
            inner: FiniteSet {
                points: (0..k).collect(),
            },
        };
        let model = ExponentialFamilyModel::new(
            |_| (-HALF_LN_2PI).exp(),
            move |&(x, z): &(f64, usize)| {
                let mut t = vec![0.0; 3 * k];
                t[z] = 1.0;
                t[k + z] = x;
                t[2 * k + z] = x * x;
                t
            },
            eta,
            measure,
        )
        .with_log_partition(move |eta| {
            let terms: Vec<f64> = (0..k)
                .map(|c| {
                    let (a, b, q) = (eta[c], eta[k + c], eta[2 * k + c]);
                    a - b * b / (4.0 * q) - 0.5 * (-2.0 * q).ln()
                })
                .collect();
            log_sum_exp(&terms)
        });
        Self {
            model,
            hidden: 0..3 * k,
            k,
        }
    }

    /// Recovers mixture parameters from a natural parameter of
    /// [`JointExponentialFamily::gaussian_mixture`] form.
    pub fn to_gaussian_mixture(&self) -> Result<GaussianMixture> {
        let k = self.k;
        let eta = self.model.eta();
        if eta.len() != 3 * k {
            return Err(Error::Unsupported(
                "natural parameter is not in mixture layout".into(),
            ));
        }
        let mut log_w = Vec::with_capacity(k);
        let mut comps = Vec::with_capacity(k);
        for c in 0..k {
            let q = eta[2 * k + c];
            if !(q < 0.0) {
                return Err(Error::Unsupported(format!(
                    "component {c} has non-negative quadratic coefficient"
                )));
            }
            let s2 = -0.5 / q;
            let mu = eta[k + c] * s2;
            comps.push(UnivariateGaussian::new(mu, s2.sqrt())?);
            log_w.push(eta[c] + mu * mu / (2.0 * s2) + 0.5 * s2.ln());
        }
        let norm = log_sum_exp(&log_w);
        let mut w: Vec<f64> = log_w.iter().map(|l| (l - norm).exp()).collect();
        renormalize(&mut w);
        GaussianMixture::new(w, comps)
    }

    /// Gaussian `x` with a Bernoulli label `z`:
    /// `T(x, z) = (x, x², z, x z)`, `η = (a, b, θ_h, w)`, hidden block `{2}`.
    /// The conditional log-odds of `z = 1` are `θ_h + w x`.
    pub fn bernoulli_latent(a: f64, b: f64, theta_h: f64, coupling: f64) -> Result<Self> {
        if !(b < 0.0) {
            return Err(Error::InvalidArgument(
                "quadratic coefficient must be negative".into(),
            ));
        }
        let sd = (-0.5 / b).sqrt();
        let centre = -a / (2.0 * b);
        let reach = 12.0 * sd + (coupling.abs() * sd * sd);
        let measure = ProductMeasure {
            outer: RealLine::new(centre - reach, centre + reach),
            inner: FiniteSet {
                points: vec![0usize, 1],
            },
        };
        let model = ExponentialFamilyModel::new(
            |_| (-HALF_LN_2PI).exp(),
            |&(x, z): &(f64, usize)| {
                let z = z as f64;
                vec![x, x * x, z, x * z]
            },
            vec![a, b, theta_h, coupling],
            measure,
        );
        Ok(Self {
            model,
            hidden: 2..3,
            k: 2,
        })
    }

    /// Hidden `z` independent of `x`: `T(x, z) = (x, x², δ_z)`.
    pub fn independent(a: f64, b: f64, z_logits: &[f64]) -> Result<Self> {
        if !(b < 0.0) {
            return Err(Error::InvalidArgument(
                "quadratic coefficient must be negative".into(),
            ));
        }
        let k = z_logits.len();
        let sd = (-0.5 / b).sqrt();
        let centre = -a / (2.0 * b);
        let measure = ProductMeasure {
            outer: RealLine::new(centre - 12.0 * sd, centre + 12.0 * sd),
            inner: FiniteSet {
                points: (0..k).collect(),
            },
        };
        let mut eta = vec![a, b];
        eta.extend_from_slice(z_logits);
        let model = ExponentialFamilyModel::new(
            |_| (-HALF_LN_2PI).exp(),
            move |&(x, z): &(f64, usize)| {
                let mut t = vec![0.0; 2 + k];
                t[0] = x;
                t[1] = x * x;
                t[2 + z] = 1.0;
                t
            },
            eta,
            measure,
        );
        Ok(Self {
            model,
            hidden: 2..2 + k,
            k,
        })
    }

    /// Marginal density of `x`, summing the joint over `z`.
    pub fn marginal_log_density(&self, x: f64) -> Result<f64> {
        let a = self.model.log_partition()?;
        let terms: Vec<f64> = (0..self.k)
            .map(|z| self.model.log_kernel(&(x, z)))
            .collect();
        Ok(log_sum_exp(&terms) - a)
    }

    /// `η·(T(x, z) − T(x, 0))` for each `z`: the conditional log-odds against `z = 0`.
    pub fn canonical_logits(&self, x: f64) -> Vec<f64> {
        let t0 = self.model.stat(&(x, 0));
        (0..self.k)
            .map(|z| {
                let tz = self.model.stat(&(x, z));
                let diff: Vec<f64> = tz.iter().zip(&t0).map(|(a, b)| a - b).collect();
                dot(self.model.eta(), &diff)
            })
            .collect()
    }
}

/// Conditional law of `z` given observed `x` as an exponential family over
/// `{0, …, k−1}`. The natural parameter is carried over unchanged and the
/// statistic is `z ↦ T(x, z)`; the adjusted log-partition is
/// `ψ̃(x) = log Σ_z exp(η·T(x, z))`. Requires `h` to depend on `x` only.
pub fn conditional_of_exponential_family(
    joint: &JointExponentialFamily,
    x: f64,
) -> Result<ExponentialFamilyModel<usize>> {
    let h0 = joint.model.base_measure(&(x, 0));
    for z in 1..joint.k {
        let hz = joint.model.base_measure(&(x, z));
        if (hz - h0).abs() > 1e-12 * h0.abs().max(hz.abs()) {
            return Err(Error::Unsupported(format!(
                "base measure depends on the hidden variable (h(x,0) = {h0}, h(x,{z}) = {hz})"
            )));
        }
    }
    if !(h0 > 0.0) {
        return Err(Error::Support(format!(
            "observed point {x} has zero base measure"
        )));
    }
    let stat = joint.model.stat.clone();
    let eta = joint.model.eta().to_vec();
    let k = joint.k;
    let logits: Vec<f64> = (0..k).map(|z| dot(&eta, &stat(&(x, z)))).collect();
    let psi_tilde = log_sum_exp(&logits);
    Ok(ExponentialFamilyModel::new(
        |_| 1.0,
        move |&z: &usize| stat(&(x, z)),
        eta,
        FiniteSet {
            points: (0..k).collect(),
        },
    )
    .with_log_partition(move |_| psi_tilde))
}

/// Probabilities `p(z | x)` from a conditional model over `{0, …, k−1}`.
pub fn conditional_probs(cond: &ExponentialFamilyModel<usize>, k: usize) -> Result<Vec<f64>> {
    let a = cond.log_partition()?;
    let mut p: Vec<f64> = (0..k).map(|z| (cond.log_kernel(&z) - a).exp()).collect();
    renormalize(&mut p);
    Ok(p)
}

/// Closed-form density of `N(μ, σ²)`, kept separate from [`LogDensity`] as a reference.
pub fn gaussian_density(mu: f64, sigma: f64, x: f64) -> f64 {
    (-(x - mu) * (x - mu) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * PI).sqrt())
}
