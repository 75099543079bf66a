//! EM for univariate Gaussian mixtures, its geometric (e/m-projection) form,
//! the evidence decomposition and a maximum-entropy solver.
//!
//! By default mixture weights are held at their initial values and only the
//! component means and deviations are re-estimated; pass
//! `update_weights: true` for the standard weight update. The variance update
//! uses the freshly computed mean.
//!
//! The geometric loop alternates an e-projection (replace the hidden-label
//! law at each data point by the model's conditional) with an m-projection
//! (match the expected sufficient statistics of the joint family). Both
//! projections minimise a KL divergence. For a Gaussian mixture the sequence
//! of parameters coincides with classical EM.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::infogeo::entropy;
use crate::models::{
    self, conditional_of_exponential_family, conditional_probs, log_sum_exp, DiscreteDistribution,
    GaussianMixture, JointExponentialFamily, UnivariateGaussian,
};
use crate::{Error, Result};

/// Smallest component variance accepted by the M-step.
pub const VARIANCE_FLOOR: f64 = 1e-8;
/// Smallest total responsibility a component may carry.
pub const MASS_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub update_weights: bool,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_iter: 1000,
            update_weights: false,
        }
    }
}

/// State after an EM run. `history[t]` is the mixture after `t` updates and
/// `loglik_trace[t]` its observed-data log-likelihood.
#[derive(Debug, Clone, Serialize)]
pub struct EmState {
    pub mixture: GaussianMixture,
    /// `n × K` posteriors at `mixture`.
    pub responsibilities: Vec<Vec<f64>>,
    pub loglik: f64,
    pub iteration: usize,
    pub converged: bool,
    pub loglik_trace: Vec<f64>,
    pub history: Vec<GaussianMixture>,
}

#[derive(Debug, Clone)]
pub struct EStep {
    pub responsibilities: Vec<Vec<f64>>,
    pub loglik: f64,
}

/// Posterior responsibilities for every point and the log-likelihood at `mix`.
pub fn e_step(data: &[f64], mix: &GaussianMixture) -> Result<EStep> {
    if data.is_empty() {
        return Err(Error::InvalidArgument(
            "E-step needs at least one data point".into(),
        ));
    }
    let mut responsibilities = Vec::with_capacity(data.len());
    let mut logs = Vec::with_capacity(data.len());
    for &x in data {
        let joint = mix.joint_log_densities(x);
        let norm = log_sum_exp(&joint);
        let mut r: Vec<f64> = joint.iter().map(|l| (l - norm).exp()).collect();
        models::renormalize(&mut r);
        responsibilities.push(r);
        logs.push(norm);
    }
    Ok(EStep {
        responsibilities,
        loglik: pairwise_sum(&logs),
    })
}

/// Sum by recursive halving, so the result does not depend on how callers chunk the data.
fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Responsibility-weighted means and (1/N) variances. `held_weights` keeps the
/// mixture weights fixed; `None` sets them to the mean responsibilities.
pub fn m_step(
    data: &[f64],
    responsibilities: &[Vec<f64>],
    held_weights: Option<&[f64]>,
) -> Result<GaussianMixture> {
    if data.len() != responsibilities.len() || data.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} data points but {} responsibility rows",
            data.len(),
            responsibilities.len()
        )));
    }
    let k = responsibilities[0].len();
    if k == 0 || responsibilities.iter().any(|r| r.len() != k) {
        return Err(Error::InvalidArgument(
            "responsibility rows must share one positive length".into(),
        ));
    }
    let mut components = Vec::with_capacity(k);
    let mut mass = Vec::with_capacity(k);
    for c in 0..k {
        let n_c: f64 = responsibilities.iter().map(|r| r[c]).sum();
        if !(n_c >= MASS_FLOOR) {
            return Err(collapse(c, format!("total responsibility {n_c:.3e}")));
        }
        let mu = data
            .iter()
            .zip(responsibilities)
            .map(|(x, r)| r[c] * x)
            .sum::<f64>()
            / n_c;
        let var = data
            .iter()
            .zip(responsibilities)
            .map(|(x, r)| r[c] * (x - mu) * (x - mu))
            .sum::<f64>()
            / n_c;
        if !(var >= VARIANCE_FLOOR) {
            return Err(collapse(
                c,
                format!("variance {var:.3e} below floor {VARIANCE_FLOOR:e}"),
            ));
        }
        components.push(UnivariateGaussian {
            mu,
            sigma: var.sqrt(),
        });
        mass.push(n_c);
    }
    let weights = match held_weights {
        Some(w) if w.len() == k => w.to_vec(),
        Some(w) => {
            return Err(Error::InvalidArgument(format!(
                "{} held weights for {k} components",
                w.len()
            )));
        }
        None => {
            let mut w = mass;
            models::renormalize(&mut w);
            w
        }
    };
    GaussianMixture::new(weights, components)
}

fn collapse(component: usize, reason: String) -> Error {
    Error::ComponentCollapse {
        component,
        reason,
        partial: None,
    }
}

fn attach_partial(err: Error, state: impl FnOnce() -> EmState) -> Error {
    match err {
        Error::ComponentCollapse {
            component,
            reason,
            partial: None,
        } => Error::ComponentCollapse {
            component,
            reason,
            partial: Some(Box::new(state())),
        },
        other => other,
    }
}

fn max_param_change(a: &GaussianMixture, b: &GaussianMixture) -> f64 {
    a.parameters()
        .iter()
        .zip(b.parameters())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Alternates E and M steps until no parameter moves by `tol` or more.
pub fn run_em(data: &[f64], init: &GaussianMixture, opts: &EmOptions) -> Result<EmState> {
    let mut current = init.clone();
    let mut estep = e_step(data, &current)?;
    let mut trace = vec![estep.loglik];
    let mut history = vec![current.clone()];
    let mut converged = false;
    let mut iteration = 0;
    while iteration < opts.max_iter {
        let held = (!opts.update_weights).then(|| current.weights().to_vec());
        let next = m_step(data, &estep.responsibilities, held.as_deref()).map_err(|e| {
            attach_partial(e, || EmState {
                mixture: current.clone(),
                responsibilities: estep.responsibilities.clone(),
                loglik: estep.loglik,
                iteration,
                converged: false,
                loglik_trace: trace.clone(),
                history: history.clone(),
            })
        })?;
        iteration += 1;
        let moved = max_param_change(&current, &next);
        current = next;
        estep = e_step(data, &current)?;
        trace.push(estep.loglik);
        history.push(current.clone());
        if moved < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(EmState {
        mixture: current,
        responsibilities: estep.responsibilities,
        loglik: estep.loglik,
        iteration,
        converged,
        loglik_trace: trace,
        history,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Evidence {
    pub loglik: f64,
    pub elbo: f64,
    /// `Σᵢ KL(qᵢ ‖ p(· | xᵢ))`.
    pub kl: f64,
}

/// Splits the log-likelihood into the lower bound under `q` and the KL gap.
pub fn evidence_decomposition(
    data: &[f64],
    mix: &GaussianMixture,
    q: &[Vec<f64>],
) -> Result<Evidence> {
    if data.len() != q.len() {
        return Err(Error::InvalidArgument(format!(
            "{} data points but {} rows of q",
            data.len(),
            q.len()
        )));
    }
    let (mut loglik, mut elbo, mut kl) = (0.0, 0.0, 0.0);
    for (&x, row) in data.iter().zip(q) {
        if row.len() != mix.k()
            || row.iter().any(|v| !(*v >= 0.0))
            || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::InvalidArgument(format!(
                "row {row:?} is not a distribution over {} labels",
                mix.k()
            )));
        }
        let joint = mix.joint_log_densities(x);
        let lp = log_sum_exp(&joint);
        loglik += lp;
        for (&qk, &jk) in row.iter().zip(&joint) {
            if qk > 0.0 {
                elbo += qk * (jk - qk.ln());
                kl += qk * (qk.ln() - (jk - lp));
            }
        }
    }
    Ok(Evidence { loglik, elbo, kl })
}

// ---------------------------------------------------------------------------
// Maximum entropy

pub type Feature = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Built-in constraint functions, as accepted in JSON problem files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Constraint {
    /// `f(x) = xᵈ`.
    Power { degree: u32 },
}

impl Constraint {
    pub fn feature(&self) -> Feature {
        match *self {
            Constraint::Power { degree } => Arc::new(move |x: f64| x.powi(degree as i32)),
        }
    }
}

/// Maximise entropy over a finite support subject to `E[f_k] = g_k`.
#[derive(Clone)]
pub struct MaxEntProblem {
    support: Vec<f64>,
    features: Vec<Feature>,
    targets: Vec<f64>,
    /// `table[i][k] = f_k(x_i)`.
    table: Vec<Vec<f64>>,
}

impl std::fmt::Debug for MaxEntProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MaxEntProblem")
            .field("support", &self.support)
            .field("constraints", &self.features.len())
            .field("targets", &self.targets)
            .finish()
    }
}

impl MaxEntProblem {
    pub fn new(support: Vec<f64>, features: Vec<Feature>, targets: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::InvalidArgument("support is empty".into()));
        }
        if features.len() != targets.len() {
            return Err(Error::InvalidArgument(format!(
                "{} constraint functions for {} targets",
                features.len(),
                targets.len()
            )));
        }
        if !features.is_empty() && features.len() >= support.len() {
            return Err(Error::InvalidArgument(format!(
                "{} constraints on {} points leave no freedom",
                features.len(),
                support.len()
            )));
        }
        let mut sorted = support.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) || support.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(
                "support points must be finite and distinct".into(),
            ));
        }
        if targets.iter().any(|g| !g.is_finite()) {
            return Err(Error::InvalidArgument("targets must be finite".into()));
        }
        let table: Vec<Vec<f64>> = support
            .iter()
            .map(|&x| features.iter().map(|f| f(x)).collect())
            .collect();
        if table.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "a constraint function is not finite on the support".into(),
            ));
        }
        Ok(Self {
            support,
            features,
            targets,
            table,
        })
    }

    pub fn with_constraints(
        support: Vec<f64>,
        constraints: &[Constraint],
        targets: Vec<f64>,
    ) -> Result<Self> {
        Self::new(
            support,
            constraints.iter().map(Constraint::feature).collect(),
            targets,
        )
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn num_constraints(&self) -> usize {
        self.features.len()
    }

    /// Same constraint functions with other targets.
    pub fn with_targets(&self, targets: Vec<f64>) -> Result<Self> {
        Self::new(self.support.clone(), self.features.clone(), targets)
    }

    /// `(log Z(λ), p)` for `pᵢ ∝ exp(−λ·f(xᵢ))`.
    pub fn gibbs(&self, lambdas: &[f64]) -> (f64, Vec<f64>) {
        let logits: Vec<f64> = self.table.iter().map(|row| -dot(lambdas, row)).collect();
        let log_z = log_sum_exp(&logits);
        let mut p: Vec<f64> = logits.iter().map(|l| (l - log_z).exp()).collect();
        models::renormalize(&mut p);
        (log_z, p)
    }

    /// `E_p[f_k]`.
    pub fn moments(&self, p: &[f64]) -> Vec<f64> {
        (0..self.num_constraints())
            .map(|k| self.table.iter().zip(p).map(|(row, pi)| pi * row[k]).sum())
            .collect()
    }

    fn residual(&self, lambdas: &[f64]) -> f64 {
        let (_, p) = self.gibbs(lambdas);
        self.moments(&p)
            .iter()
            .zip(&self.targets)
            .map(|(e, g)| (e - g).abs())
            .fold(0.0, f64::max)
    }

    fn dual(&self, lambdas: &[f64]) -> f64 {
        self.gibbs(lambdas).0 + dot(lambdas, &self.targets)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxEntOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for MaxEntOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MaxEntSolution {
    pub distribution: DiscreteDistribution,
    pub lambdas: Vec<f64>,
    pub log_partition: f64,
    pub entropy: f64,
    pub iterations: usize,
    /// `max_k |E_p[f_k] − g_k|`.
    pub constraint_residual: f64,
}

/// Minimises the convex dual `log Z(λ) + λ·g` by damped Newton steps from `λ = 0`.
pub fn maxent_solve(problem: &MaxEntProblem, opts: &MaxEntOptions) -> Result<MaxEntSolution> {
    let m = problem.num_constraints();
    let mut lambdas = vec![0.0; m];
    let mut damping = 1e-3;
    let mut value = problem.dual(&lambdas);
    let mut iterations = 0;
    loop {
        let (_, p) = problem.gibbs(&lambdas);
        let moments = problem.moments(&p);
        let grad: Vec<f64> = problem
            .targets
            .iter()
            .zip(&moments)
            .map(|(g, e)| g - e)
            .collect();
        let residual = grad.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if residual <= opts.tol {
            if separates(problem, &lambdas) {
                return Err(Error::Infeasible(format!(
                    "targets {:?} lie on the boundary of the attainable moments",
                    problem.targets
                )));
            }
            return Ok(finish(problem, lambdas, iterations));
        }
        if iterations >= opts.max_iter {
            return Err(Error::NotConverged {
                iterations,
                reason: format!("constraint residual {residual:.3e} above {:.1e}", opts.tol),
            });
        }
        iterations += 1;
        let mut hess = DMatrix::zeros(m, m);
        for (row, pi) in problem.table.iter().zip(&p) {
            let d = DVector::from_iterator(m, row.iter().zip(&moments).map(|(f, e)| f - e));
            hess += (&d * d.transpose()) * *pi;
        }
        let g = DVector::from_vec(grad);
        loop {
            let damped = &hess + DMatrix::identity(m, m) * damping;
            let step = damped.cholesky().map(|c| c.solve(&g));
            if let Some(step) = step {
                let trial: Vec<f64> = lambdas
                    .iter()
                    .zip(step.iter())
                    .map(|(l, s)| l - s)
                    .collect();
                let trial_value = problem.dual(&trial);
                let trial_residual = problem.residual(&trial);
                if trial_value.is_finite() && (trial_value <= value || trial_residual < residual) {
                    lambdas = trial;
                    value = trial_value;
                    damping = (damping / 10.0).max(1e-15);
                    break;
                }
            }
            damping *= 10.0;
            if damping > 1e20 {
                return Err(Error::NotConverged {
                    iterations,
                    reason: "damping grew without reducing the dual objective".into(),
                });
            }
        }
        let norm = lambdas.iter().map(|l| l * l).sum::<f64>().sqrt();
        if !(norm <= 1e12) {
            return Err(Error::Infeasible(format!(
                "multipliers diverged (|λ| = {norm:.3e}); targets {:?} are not attainable in the interior",
                problem.targets
            )));
        }
    }
}

/// True when `λ·(f(xᵢ) − g) ≥ 0` at every support point, which certifies that
/// `g` is not an interior moment vector. An interior optimum always has terms of
/// both signs since they average to zero under a strictly positive `p`.
fn separates(problem: &MaxEntProblem, lambdas: &[f64]) -> bool {
    let norm = lambdas.iter().map(|l| l * l).sum::<f64>().sqrt();
    if norm < 1e-8 {
        return false;
    }
    let terms: Vec<f64> = problem
        .table
        .iter()
        .map(|row| {
            row.iter()
                .zip(&problem.targets)
                .zip(lambdas)
                .map(|((f, g), l)| l * (f - g))
                .sum::<f64>()
                / norm
        })
        .collect();
    let scale = terms.iter().fold(1.0f64, |a, t| a.max(t.abs()));
    terms.iter().all(|&t| t >= -1e-9 * scale)
}

fn finish(problem: &MaxEntProblem, lambdas: Vec<f64>, iterations: usize) -> MaxEntSolution {
    let (log_z, p) = problem.gibbs(&lambdas);
    let moments = problem.moments(&p);
    let constraint_residual = moments
        .iter()
        .zip(&problem.targets)
        .map(|(e, g)| (e - g).abs())
        .fold(0.0, f64::max);
    let distribution = DiscreteDistribution::new(problem.support.clone(), p)
        .expect("normalised Gibbs distribution");
    let entropy = entropy(&distribution);
    MaxEntSolution {
        distribution,
        lambdas,
        log_partition: log_z,
        entropy,
        iterations,
        constraint_residual,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GradientIdentityReport {
    /// Central differences of the optimal entropy in each target.
    pub entropy_gradient: Vec<f64>,
    pub lambdas: Vec<f64>,
    /// `max_k |∂S/∂g_k − λ_k|`.
    pub entropy_deviation: f64,
    /// Central differences of `log Z` in each multiplier at the optimum.
    pub log_partition_gradient: Vec<f64>,
    /// `max_l |∂ log Z/∂λ_l + g_l|`.
    pub partition_deviation: f64,
}

/// Checks `∂S/∂g_k = λ_k` (re-solving at perturbed targets) and
/// `∂ log Z/∂λ_l = −g_l` by central differences.
pub fn maxent_gradient_identities(
    solution: &MaxEntSolution,
    problem: &MaxEntProblem,
) -> Result<GradientIdentityReport> {
    let h = 1e-4;
    let tight = MaxEntOptions {
        tol: 1e-12,
        max_iter: 500,
    };
    let m = problem.num_constraints();
    let mut entropy_gradient = Vec::with_capacity(m);
    let mut log_partition_gradient = Vec::with_capacity(m);
    for k in 0..m {
        let mut up = problem.targets.clone();
        let mut dn = problem.targets.clone();
        up[k] += h;
        dn[k] -= h;
        let s_up = maxent_solve(&problem.with_targets(up)?, &tight)?.entropy;
        let s_dn = maxent_solve(&problem.with_targets(dn)?, &tight)?.entropy;
        entropy_gradient.push((s_up - s_dn) / (2.0 * h));

        let mut lu = solution.lambdas.clone();
        let mut ld = solution.lambdas.clone();
        lu[k] += h;
        ld[k] -= h;
        log_partition_gradient.push((problem.gibbs(&lu).0 - problem.gibbs(&ld).0) / (2.0 * h));
    }
    let entropy_deviation = entropy_gradient
        .iter()
        .zip(&solution.lambdas)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let partition_deviation = log_partition_gradient
        .iter()
        .zip(&problem.targets)
        .map(|(a, g)| (a + g).abs())
        .fold(0.0, f64::max);
    Ok(GradientIdentityReport {
        entropy_gradient,
        lambdas: solution.lambdas.clone(),
        entropy_deviation,
        log_partition_gradient,
        partition_deviation,
    })
}

// ---------------------------------------------------------------------------
// Projections

/// Target families for [`m_projection`].
#[derive(Clone)]
pub enum ProjectionFamily {
    /// Every distribution on the support.
    Saturated,
    /// `q ∝ exp(−λ·f)` for the given constraint functions.
    Boltzmann(Vec<Feature>),
    /// Univariate Gaussians, with the support read as sample values.
    Gaussian,
}

impl std::fmt::Debug for ProjectionFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Saturated => f.write_str("Saturated"),
            Self::Boltzmann(fs) => write!(f, "Boltzmann({} features)", fs.len()),
            Self::Gaussian => f.write_str("Gaussian"),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Projection {
    Discrete(DiscreteDistribution),
    Boltzmann(MaxEntSolution),
    Gaussian(UnivariateGaussian),
}

/// `argmin_q KL(p̂ ‖ q)` over the family, by moment matching.
pub fn m_projection(p_hat: &DiscreteDistribution, family: &ProjectionFamily) -> Result<Projection> {
    match family {
        ProjectionFamily::Saturated => Ok(Projection::Discrete(p_hat.clone())),
        ProjectionFamily::Boltzmann(features) => {
            let targets = features.iter().map(|f| p_hat.expect(|x| f(x))).collect();
            let problem = MaxEntProblem::new(p_hat.support().to_vec(), features.clone(), targets)?;
            Ok(Projection::Boltzmann(maxent_solve(
                &problem,
                &MaxEntOptions::default(),
            )?))
        }
        ProjectionFamily::Gaussian => {
            let mu = p_hat.expect(|x| x);
            let var = p_hat.expect(|x| (x - mu) * (x - mu));
            if !(var > 0.0) {
                return Err(Error::Degenerate(
                    "empirical distribution has zero variance".into(),
                ));
            }
            Ok(Projection::Gaussian(UnivariateGaussian::new(
                mu,
                var.sqrt(),
            )?))
        }
    }
}

/// `q(x, z) = q_obs(x) p(z | x)` on a finite set of observed points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EProjection {
    pub points: Vec<f64>,
    /// Observed mass (or density) at each point.
    pub marginal: Vec<f64>,
    /// `p(z | xᵢ)` for each point.
    pub conditionals: Vec<Vec<f64>>,
    /// Hidden-block natural parameter of the conditionals.
    pub hidden_eta: Vec<f64>,
}

impl EProjection {
    pub fn joint_mass(&self, i: usize, z: usize) -> f64 {
        self.marginal[i] * self.conditionals[i][z]
    }
}

/// Keeps the observed marginal and takes the hidden-label law from the model.
pub fn e_projection(
    joint: &JointExponentialFamily,
    points: &[f64],
    marginal: &[f64],
) -> Result<EProjection> {
    if points.len() != marginal.len() {
        return Err(Error::InvalidArgument(format!(
            "{} points but {} marginal weights",
            points.len(),
            marginal.len()
        )));
    }
    let mut conditionals = Vec::with_capacity(points.len());
    let mut hidden_eta = joint.hidden_eta().to_vec();
    for &x in points {
        let cond = conditional_of_exponential_family(joint, x)?;
        conditionals.push(conditional_probs(&cond, joint.k)?);
        hidden_eta = cond.eta()[joint.hidden.clone()].to_vec();
    }
    Ok(EProjection {
        points: points.to_vec(),
        marginal: marginal.to_vec(),
        conditionals,
        hidden_eta,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GeometricStep {
    /// Expected sufficient statistics under the e-projected `q`, laid out like `θ`.
    pub eta: Vec<f64>,
    /// Natural parameter of the model joint before the m-projection.
    pub theta: Vec<f64>,
    /// `(1/n) Σᵢ Σ_z q(z|xᵢ) log(q(z|xᵢ) / p(xᵢ, z))`.
    pub kl: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GeometricEmTrace {
    pub steps: Vec<GeometricStep>,
    pub mixture: GaussianMixture,
    pub iterations: usize,
    pub converged: bool,
    /// Mixture after each m-projection, starting with the initial one.
    pub history: Vec<GaussianMixture>,
}

/// Alternating e- and m-projections for a Gaussian mixture.
pub fn run_em_geometric(
    data: &[f64],
    init: &GaussianMixture,
    opts: &EmOptions,
) -> Result<GeometricEmTrace> {
    if data.is_empty() {
        return Err(Error::InvalidArgument(
            "em needs at least one data point".into(),
        ));
    }
    let n = data.len() as f64;
    let k = init.k();
    let uniform = vec![1.0 / n; data.len()];
    let mut current = init.clone();
    let mut steps = vec![geometric_step(data, &current, &uniform)?];
    let mut history = vec![current.clone()];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let eta = &steps.last().expect("at least one step").eta;
        let next = moment_match(eta, k, (!opts.update_weights).then(|| current.weights()))?;
        iterations += 1;
        let moved = max_param_change(&current, &next);
        current = next;
        history.push(current.clone());
        steps.push(geometric_step(data, &current, &uniform)?);
        if moved < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(GeometricEmTrace {
        steps,
        mixture: current,
        iterations,
        converged,
        history,
    })
}

fn geometric_step(data: &[f64], mix: &GaussianMixture, marginal: &[f64]) -> Result<GeometricStep> {
    let k = mix.k();
    let joint = JointExponentialFamily::gaussian_mixture(mix);
    let proj = e_projection(&joint, data, marginal)?;
    let a = joint.model.log_partition()?;
    let mut eta = vec![0.0; 3 * k];
    let mut kl = 0.0;
    for (i, &x) in data.iter().enumerate() {
        for z in 0..k {
            let q = proj.joint_mass(i, z);
            eta[z] += q;
            eta[k + z] += q * x;
            eta[2 * k + z] += q * x * x;
            let qz = proj.conditionals[i][z];
            if qz > 0.0 {
                kl += q * (qz.ln() - (joint.model.log_kernel(&(x, z)) - a));
            }
        }
    }
    Ok(GeometricStep {
        eta,
        theta: joint.model.eta().to_vec(),
        kl,
    })
}

/// m-projection onto the mixture family: the member whose expected
/// `(δ_z, δ_z x, δ_z x²)` equal `eta`.
fn moment_match(eta: &[f64], k: usize, held_weights: Option<&[f64]>) -> Result<GaussianMixture> {
    let mut comps = Vec::with_capacity(k);
    let mut mass = Vec::with_capacity(k);
    for c in 0..k {
        let m0 = eta[c];
        if !(m0 >= MASS_FLOOR) {
            return Err(collapse(c, format!("expected label mass {m0:.3e}")));
        }
        let mu = eta[k + c] / m0;
        let var = eta[2 * k + c] / m0 - mu * mu;
        if !(var >= VARIANCE_FLOOR) {
            return Err(collapse(
                c,
                format!("variance {var:.3e} below floor {VARIANCE_FLOOR:e}"),
            ));
        }
        comps.push(UnivariateGaussian {
            mu,
            sigma: var.sqrt(),
        });
        mass.push(m0);
    }
    let weights = match held_weights {
        Some(w) => w.to_vec(),
        None => {
            models::renormalize(&mut mass);
            mass
        }
    };
    GaussianMixture::new(weights, comps)
}

#[derive(Debug, Clone, Serialize)]
pub struct LinearityReport {
    pub mean_of_map: Vec<f64>,
    pub map_of_mean: Vec<f64>,
    /// `‖E[s(r)] − s(E[r])‖₂`.
    pub gap: f64,
}

/// Measures how far `s` is from commuting with the sample mean.
pub fn linearity_equivalence_check<S>(s_q: S, samples: &[Vec<f64>]) -> Result<LinearityReport>
where
    S: Fn(&[f64]) -> Vec<f64>,
{
    let Some(first) = samples.first() else {
        return Err(Error::InvalidArgument("no samples".into()));
    };
    let d = first.len();
    if samples.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidArgument(
            "samples have different lengths".into(),
        ));
    }
    let n = samples.len() as f64;
    let mean: Vec<f64> = (0..d)
        .map(|j| samples.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect();
    let mapped: Vec<Vec<f64>> = samples.iter().map(|r| s_q(r)).collect();
    let m = mapped[0].len();
    let mean_of_map: Vec<f64> = (0..m)
        .map(|j| mapped.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect();
    let map_of_mean = s_q(&mean);
    let gap = mean_of_map
        .iter()
        .zip(&map_of_mean)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(LinearityReport {
        mean_of_map,
        map_of_mean,
        gap,
    })
}

/// `y ↦ (f(1) − f(0)) y + f(0)`: agrees with `f` on `{0, 1}` and is affine.
pub fn binary_linearization<F: Fn(f64) -> f64>(f: F) -> impl Fn(&[f64]) -> Vec<f64> {
    let (f0, f1) = (f(0.0), f(1.0));
    move |r: &[f64]| vec![(f1 - f0) * r[0] + f0]
}

/// `r ↦ Σ_k f(k) r_k` on one-hot encodings of a finite alphabet.
pub fn one_hot_linearization<F: Fn(usize) -> f64>(
    f: F,
    alphabet: usize,
) -> impl Fn(&[f64]) -> Vec<f64> {
    let values: Vec<f64> = (0..alphabet).map(f).collect();
    move |r: &[f64]| vec![dot(&values, r)]
}
