//! Differential geometry of parameterised surfaces in three-space.
//!
//! A [`SurfacePatch`] is an embedding `(u, v) ↦ x(u, v)` together with
//! optional analytic partial derivatives up to third order. Missing partials
//! are filled in by central finite differences, so every quantity below works
//! for an embedding given as a bare closure; analytic partials make the
//! results exact to rounding.
//!
//! Index conventions: coordinate 0 is `u`, coordinate 1 is `v`. For the torus
//! `u = φ` (rotation about the symmetry axis) and `v = θ` (rotation about the
//! tube), so `E = (R + r cos θ)²` and `G = r²`. Christoffel symbols are stored
//! as `gamma[k][i][j] = Γᵏᵢⱼ` and the Riemann tensor as
//! `r[i][j][k][l] = Rⁱⱼₖₗ = ∂ₖΓⁱₗⱼ − ∂ₗΓⁱₖⱼ + ΓⁱₖₚΓᵖₗⱼ − ΓⁱₗₚΓᵖₖⱼ`.
//!
//! The unit normal is `n = x_u × x_v / |x_u × x_v|`. Signs of principal
//! curvatures follow that orientation; the Gaussian curvature does not depend
//! on it.

// Index loops mirror the tensor formulas.
#![allow(clippy::needless_range_loop)]

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::{Error, Result};

pub type Vec3 = [f64; 3];

type Map<T> = Arc<dyn Fn(f64, f64) -> T + Send + Sync>;

/// Default step for first partials.
pub const FD_STEP_FIRST: f64 = 1e-5;
/// Step for second partials (and third partials built from analytic second partials).
pub const FD_STEP_SECOND: f64 = 1e-4;
/// Step for third partials built from the embedding or first partials alone.
pub const FD_STEP_THIRD: f64 = 1e-3;

fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm(a: &Vec3) -> f64 {
    dot(a, a).sqrt()
}

/// Closed rectangle of admissible parameters. Infinite bounds are allowed for
/// periodic coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub u: (f64, f64),
    pub v: (f64, f64),
}

impl Domain {
    pub fn new(u: (f64, f64), v: (f64, f64)) -> Self {
        Self { u, v }
    }

    pub fn unbounded() -> Self {
        Self {
            u: (f64::NEG_INFINITY, f64::INFINITY),
            v: (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= self.u.0 && u <= self.u.1 && v >= self.v.0 && v <= self.v.1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormKind {
    First,
    Second,
}

/// Symmetric 2×2 form `[[e, f], [f, g]]` (E, F, G or L, M, N).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalForm {
    pub e: f64,
    pub f: f64,
    pub g: f64,
    pub kind: FormKind,
}

impl FundamentalForm {
    pub fn det(&self) -> f64 {
        self.e * self.g - self.f * self.f
    }

    pub fn matrix(&self) -> [[f64; 2]; 2] {
        [[self.e, self.f], [self.f, self.g]]
    }
}

/// `gamma[k][i][j] = Γᵏᵢⱼ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChristoffelSymbols {
    pub gamma: [[[f64; 2]; 2]; 2],
}

/// `r[i][j][k][l] = Rⁱⱼₖₗ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiemannTensor {
    pub r: [[[[f64; 2]; 2]; 2]; 2],
}

/// Metric and its first two derivatives at a point:
/// `dg[k][i][j] = ∂ₖgᵢⱼ`, `ddg[l][k][i][j] = ∂ₗ∂ₖgᵢⱼ`.
#[derive(Debug, Clone, Copy)]
pub struct MetricJet {
    pub g: [[f64; 2]; 2],
    pub dg: [[[f64; 2]; 2]; 2],
    pub ddg: [[[[f64; 2]; 2]; 2]; 2],
}

impl MetricJet {
    pub fn det(&self) -> f64 {
        self.g[0][0] * self.g[1][1] - self.g[0][1] * self.g[1][0]
    }

    fn inverse(&self) -> Result<[[f64; 2]; 2]> {
        let det = self.det();
        let scale = self.g[0][0].abs() * self.g[1][1].abs();
        if !(det > 1e-12 * scale) || !det.is_finite() {
            return Err(Error::Degenerate(format!(
                "metric determinant {det:.3e} is not positive"
            )));
        }
        Ok([
            [self.g[1][1] / det, -self.g[0][1] / det],
            [-self.g[1][0] / det, self.g[0][0] / det],
        ])
    }
}

/// Partial derivatives of the embedding at a point. `d2` is ordered
/// `[uu, uv, vv]`, `d3` is `[uuu, uuv, uvv, vvv]`, so a mixed partial is
/// found by counting how many of its indices are `v`.
#[derive(Debug, Clone, Copy)]
struct EmbeddingJet {
    d1: [Vec3; 2],
    d2: [Vec3; 3],
    d3: [Vec3; 4],
}

impl EmbeddingJet {
    fn x1(&self, i: usize) -> &Vec3 {
        &self.d1[i]
    }
    fn x2(&self, i: usize, j: usize) -> &Vec3 {
        &self.d2[i + j]
    }
    fn x3(&self, i: usize, j: usize, k: usize) -> &Vec3 {
        &self.d3[i + j + k]
    }
}

// Central-difference stencils: (offset, coefficient) before dividing by h^order.
const STENCIL_0: &[(i32, f64)] = &[(0, 1.0)];
const STENCIL_1: &[(i32, f64)] = &[(-1, -0.5), (1, 0.5)];
const STENCIL_2: &[(i32, f64)] = &[(-1, 1.0), (0, -2.0), (1, 1.0)];
const STENCIL_3: &[(i32, f64)] = &[(-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)];

fn stencil(order: u32) -> &'static [(i32, f64)] {
    match order {
        0 => STENCIL_0,
        1 => STENCIL_1,
        2 => STENCIL_2,
        3 => STENCIL_3,
        _ => unreachable!("stencils are defined up to third order"),
    }
}

/// `∂ᵘ^a ∂ᵛ^b f(u, v)` by a tensor product of central stencils.
fn fd_partial<F: Fn(f64, f64) -> Vec3 + ?Sized>(
    f: &F,
    u: f64,
    v: f64,
    a: u32,
    b: u32,
    h: f64,
) -> Vec3 {
    let mut acc = [0.0; 3];
    for &(i, cu) in stencil(a) {
        for &(j, cv) in stencil(b) {
            let p = f(u + i as f64 * h, v + j as f64 * h);
            let c = cu * cv;
            for d in 0..3 {
                acc[d] += c * p[d];
            }
        }
    }
    let scale = h.powi((a + b) as i32);
    acc.map(|x| x / scale)
}

/// A parameterised surface patch.
#[derive(Clone)]
pub struct SurfacePatch {
    name: String,
    embedding: Map<Vec3>,
    first: Option<Map<[Vec3; 2]>>,
    second: Option<Map<[Vec3; 3]>>,
    third: Option<Map<[Vec3; 4]>>,
    domain: Domain,
    fd_step: f64,
}

impl fmt::Debug for SurfacePatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SurfacePatch")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("analytic_first", &self.first.is_some())
            .field("analytic_second", &self.second.is_some())
            .field("analytic_third", &self.third.is_some())
            .field("fd_step", &self.fd_step)
            .finish()
    }
}

impl SurfacePatch {
    /// A patch known only through its embedding; all partials are numeric.
    pub fn new<F>(name: impl Into<String>, embedding: F, domain: Domain) -> Self
    where
        F: Fn(f64, f64) -> Vec3 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            embedding: Arc::new(embedding),
            first: None,
            second: None,
            third: None,
            domain,
            fd_step: FD_STEP_FIRST,
        }
    }

    /// Analytic `[x_u, x_v]`.
    pub fn with_first_partials<F>(mut self, f: F) -> Self
    where
        F: Fn(f64, f64) -> [Vec3; 2] + Send + Sync + 'static,
    {
        self.first = Some(Arc::new(f));
        self
    }

    /// Analytic `[x_uu, x_uv, x_vv]`.
    pub fn with_second_partials<F>(mut self, f: F) -> Self
    where
        F: Fn(f64, f64) -> [Vec3; 3] + Send + Sync + 'static,
    {
        self.second = Some(Arc::new(f));
        self
    }

    /// Analytic `[x_uuu, x_uuv, x_uvv, x_vvv]`.
    pub fn with_third_partials<F>(mut self, f: F) -> Self
    where
        F: Fn(f64, f64) -> [Vec3; 4] + Send + Sync + 'static,
    {
        self.third = Some(Arc::new(f));
        self
    }

    pub fn with_fd_step(mut self, h: f64) -> Self {
        assert!(h > 0.0, "finite-difference step must be positive");
        self.fd_step = h;
        self
    }

    /// Same embedding with every analytic partial dropped.
    pub fn numeric_only(&self) -> Self {
        Self {
            name: format!("{} (numeric)", self.name),
            embedding: self.embedding.clone(),
            first: None,
            second: None,
            third: None,
            domain: self.domain,
            fd_step: self.fd_step,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn has_analytic_partials(&self) -> bool {
        self.first.is_some() && self.second.is_some() && self.third.is_some()
    }

    pub fn point(&self, u: f64, v: f64) -> Vec3 {
        (self.embedding)(u, v)
    }

    /// The plane `(u, v) ↦ (u, v, 0)`.
    pub fn plane() -> Self {
        Self::new("plane", |u, v| [u, v, 0.0], Domain::unbounded())
            .with_first_partials(|_, _| [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
            .with_second_partials(|_, _| [[0.0; 3]; 3])
            .with_third_partials(|_, _| [[0.0; 3]; 4])
    }

    /// Cylinder of radius `a`: `(u, v) ↦ (a cos u, a sin u, v)`.
    pub fn cylinder(a: f64) -> Self {
        assert!(a > 0.0, "cylinder radius must be positive");
        Self::new(
            "cylinder",
            move |u, v| [a * u.cos(), a * u.sin(), v],
            Domain::unbounded(),
        )
        .with_first_partials(move |u, _| [[-a * u.sin(), a * u.cos(), 0.0], [0.0, 0.0, 1.0]])
        .with_second_partials(move |u, _| [[-a * u.cos(), -a * u.sin(), 0.0], [0.0; 3], [0.0; 3]])
        .with_third_partials(move |u, _| {
            [
                [a * u.sin(), -a * u.cos(), 0.0],
                [0.0; 3],
                [0.0; 3],
                [0.0; 3],
            ]
        })
    }

    /// Torus with tube centre radius `big_r` and tube radius `r`, coordinates
    /// `(u, v) = (φ, θ)`:
    /// `x = ((R + r cos θ) cos φ, (R + r cos θ) sin φ, r sin θ)`.
    pub fn torus(big_r: f64, r: f64) -> Self {
        assert!(r > 0.0 && big_r > r, "torus needs R > r > 0");
        Self::new(
            "torus",
            move |phi, theta| {
                let w = big_r + r * theta.cos();
                [w * phi.cos(), w * phi.sin(), r * theta.sin()]
            },
            Domain::unbounded(),
        )
        .with_first_partials(move |phi, theta| {
            let (sp, cp) = phi.sin_cos();
            let (st, ct) = theta.sin_cos();
            let w = big_r + r * ct;
            [[-w * sp, w * cp, 0.0], [-r * st * cp, -r * st * sp, r * ct]]
        })
        .with_second_partials(move |phi, theta| {
            let (sp, cp) = phi.sin_cos();
            let (st, ct) = theta.sin_cos();
            let w = big_r + r * ct;
            [
                [-w * cp, -w * sp, 0.0],
                [r * st * sp, -r * st * cp, 0.0],
                [-r * ct * cp, -r * ct * sp, -r * st],
            ]
        })
        .with_third_partials(move |phi, theta| {
            let (sp, cp) = phi.sin_cos();
            let (st, ct) = theta.sin_cos();
            let w = big_r + r * ct;
            [
                [w * sp, -w * cp, 0.0],
                [r * st * cp, r * st * sp, 0.0],
                [r * ct * sp, -r * ct * cp, 0.0],
                [r * st * cp, r * st * sp, -r * ct],
            ]
        })
    }

    /// Sphere of radius `a` in longitude/latitude `(u, v)`:
    /// `x = (a cos v cos u, a cos v sin u, a sin v)`, `|v| ≤ 1.5`.
    pub fn sphere(a: f64) -> Self {
        assert!(a > 0.0, "sphere radius must be positive");
        Self::new(
            "sphere",
            move |u, v| [a * v.cos() * u.cos(), a * v.cos() * u.sin(), a * v.sin()],
            Domain::new((f64::NEG_INFINITY, f64::INFINITY), (-1.5, 1.5)),
        )
        .with_first_partials(move |u, v| {
            let (su, cu) = u.sin_cos();
            let (sv, cv) = v.sin_cos();
            [
                [-a * cv * su, a * cv * cu, 0.0],
                [-a * sv * cu, -a * sv * su, a * cv],
            ]
        })
        .with_second_partials(move |u, v| {
            let (su, cu) = u.sin_cos();
            let (sv, cv) = v.sin_cos();
            [
                [-a * cv * cu, -a * cv * su, 0.0],
                [a * sv * su, -a * sv * cu, 0.0],
                [-a * cv * cu, -a * cv * su, -a * sv],
            ]
        })
        .with_third_partials(move |u, v| {
            let (su, cu) = u.sin_cos();
            let (sv, cv) = v.sin_cos();
            [
                [a * cv * su, -a * cv * cu, 0.0],
                [a * sv * cu, a * sv * su, 0.0],
                [a * cv * su, -a * cv * cu, 0.0],
                [a * sv * cu, a * sv * su, -a * cv],
            ]
        })
    }

    fn check_domain(&self, u: f64, v: f64) -> Result<()> {
        if !(u.is_finite() && v.is_finite()) || !self.domain.contains(u, v) {
            return Err(Error::InvalidArgument(format!(
                "({u}, {v}) is outside the domain of {}",
                self.name
            )));
        }
        Ok(())
    }

    fn first_partials(&self, u: f64, v: f64) -> [Vec3; 2] {
        match &self.first {
            Some(f) => f(u, v),
            None => {
                let h = self.fd_step;
                let e = &*self.embedding;
                [fd_partial(e, u, v, 1, 0, h), fd_partial(e, u, v, 0, 1, h)]
            }
        }
    }

    fn second_partials(&self, u: f64, v: f64) -> [Vec3; 3] {
        if let Some(f) = &self.second {
            return f(u, v);
        }
        let h = FD_STEP_SECOND;
        if let Some(first) = &self.first {
            let xu = |a: f64, b: f64| first(a, b)[0];
            let xv = |a: f64, b: f64| first(a, b)[1];
            return [
                fd_partial(&xu, u, v, 1, 0, h),
                fd_partial(&xu, u, v, 0, 1, h),
                fd_partial(&xv, u, v, 0, 1, h),
            ];
        }
        let e = &*self.embedding;
        [
            fd_partial(e, u, v, 2, 0, h),
            fd_partial(e, u, v, 1, 1, h),
            fd_partial(e, u, v, 0, 2, h),
        ]
    }

    fn third_partials(&self, u: f64, v: f64) -> [Vec3; 4] {
        if let Some(f) = &self.third {
            return f(u, v);
        }
        if let Some(second) = &self.second {
            let h = FD_STEP_SECOND;
            let xuu = |a: f64, b: f64| second(a, b)[0];
            let xvv = |a: f64, b: f64| second(a, b)[2];
            return [
                fd_partial(&xuu, u, v, 1, 0, h),
                fd_partial(&xuu, u, v, 0, 1, h),
                fd_partial(&xvv, u, v, 1, 0, h),
                fd_partial(&xvv, u, v, 0, 1, h),
            ];
        }
        let h = FD_STEP_THIRD;
        if let Some(first) = &self.first {
            let xu = |a: f64, b: f64| first(a, b)[0];
            let xv = |a: f64, b: f64| first(a, b)[1];
            return [
                fd_partial(&xu, u, v, 2, 0, h),
                fd_partial(&xu, u, v, 1, 1, h),
                fd_partial(&xu, u, v, 0, 2, h),
                fd_partial(&xv, u, v, 0, 2, h),
            ];
        }
        let e = &*self.embedding;
        [
            fd_partial(e, u, v, 3, 0, h),
            fd_partial(e, u, v, 2, 1, h),
            fd_partial(e, u, v, 1, 2, h),
            fd_partial(e, u, v, 0, 3, h),
        ]
    }

    fn jet(&self, u: f64, v: f64) -> EmbeddingJet {
        EmbeddingJet {
            d1: self.first_partials(u, v),
            d2: self.second_partials(u, v),
            d3: self.third_partials(u, v),
        }
    }

    /// Compares analytic partials (where supplied) against central
    /// differences of the embedding at the given points and returns the
    /// worst relative error seen.
    pub fn max_partials_discrepancy(&self, points: &[(f64, f64)]) -> f64 {
        let numeric = self.numeric_only();
        let rel = |a: &Vec3, b: &Vec3| {
            let diff = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
            norm(&diff) / norm(b).max(1.0)
        };
        let mut worst = 0.0f64;
        for &(u, v) in points {
            if self.first.is_some() {
                let (a, b) = (self.first_partials(u, v), numeric.first_partials(u, v));
                for i in 0..2 {
                    worst = worst.max(rel(&b[i], &a[i]));
                }
            }
            if self.second.is_some() {
                let (a, b) = (self.second_partials(u, v), numeric.second_partials(u, v));
                for i in 0..3 {
                    worst = worst.max(rel(&b[i], &a[i]));
                }
            }
            if self.third.is_some() {
                // Third-order stencils on the bare embedding carry ~1e-6 truncation error;
                // compare against differences of the analytic second partials instead.
                let mut partial = numeric.clone();
                partial.second = self.second.clone();
                let (a, b) = (self.third_partials(u, v), partial.third_partials(u, v));
                for i in 0..4 {
                    worst = worst.max(rel(&b[i], &a[i]));
                }
            }
        }
        worst
    }

    pub fn first_fundamental_form(&self, u: f64, v: f64) -> Result<FundamentalForm> {
        self.check_domain(u, v)?;
        let [xu, xv] = self.first_partials(u, v);
        let form = FundamentalForm {
            e: dot(&xu, &xu),
            f: dot(&xu, &xv),
            g: dot(&xv, &xv),
            kind: FormKind::First,
        };
        let det = form.det();
        if !(form.e > 0.0 && det > 1e-12 * form.e * form.g) {
            return Err(Error::Degenerate(format!(
                "first fundamental form at ({u}, {v}) has E = {:.3e}, EG - F² = {det:.3e}",
                form.e
            )));
        }
        Ok(form)
    }

    fn unit_normal(&self, xu: &Vec3, xv: &Vec3, u: f64, v: f64) -> Result<Vec3> {
        let n = cross(xu, xv);
        let len = norm(&n);
        if !(len > 1e-12 * norm(xu) * norm(xv)) {
            return Err(Error::Degenerate(format!("normal vanishes at ({u}, {v})")));
        }
        Ok(n.map(|c| c / len))
    }

    /// Raw second fundamental form `L = x_uu·n, M = x_uv·n, N = x_vv·n`.
    pub fn second_fundamental_form(&self, u: f64, v: f64) -> Result<FundamentalForm> {
        self.check_domain(u, v)?;
        let [xu, xv] = self.first_partials(u, v);
        let n = self.unit_normal(&xu, &xv, u, v)?;
        let [xuu, xuv, xvv] = self.second_partials(u, v);
        Ok(FundamentalForm {
            e: dot(&xuu, &n),
            f: dot(&xuv, &n),
            g: dot(&xvv, &n),
            kind: FormKind::Second,
        })
    }

    /// Shape operator `S = I⁻¹ II` (row-major). Its eigenvalues are the
    /// principal curvatures.
    pub fn shape_operator(&self, u: f64, v: f64) -> Result<[[f64; 2]; 2]> {
        let first = self.first_fundamental_form(u, v)?;
        let second = self.second_fundamental_form(u, v)?;
        let det = first.det();
        let inv = [
            [first.g / det, -first.f / det],
            [-first.f / det, first.e / det],
        ];
        let ii = second.matrix();
        let mut s = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                s[i][j] = inv[i][0] * ii[0][j] + inv[i][1] * ii[1][j];
            }
        }
        Ok(s)
    }

    /// Principal curvatures `(κ₁, κ₂)` with `κ₁ ≤ κ₂`.
    pub fn principal_curvatures(&self, u: f64, v: f64) -> Result<(f64, f64)> {
        let s = self.shape_operator(u, v)?;
        let half_trace = 0.5 * (s[0][0] + s[1][1]);
        let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
        // The shape operator is self-adjoint for the first form, so the
        // discriminant is nonnegative up to rounding.
        let disc = (half_trace * half_trace - det).max(0.0).sqrt();
        Ok((half_trace - disc, half_trace + disc))
    }

    /// Gaussian curvature as the determinant of the shape operator.
    pub fn gaussian_curvature(&self, u: f64, v: f64) -> Result<f64> {
        let first = self.first_fundamental_form(u, v)?;
        let second = self.second_fundamental_form(u, v)?;
        Ok(second.det() / first.det())
    }

    pub fn metric_jet(&self, u: f64, v: f64) -> Result<MetricJet> {
        self.check_domain(u, v)?;
        let x = self.jet(u, v);
        let mut jet = MetricJet {
            g: [[0.0; 2]; 2],
            dg: [[[0.0; 2]; 2]; 2],
            ddg: [[[[0.0; 2]; 2]; 2]; 2],
        };
        for i in 0..2 {
            for j in 0..2 {
                jet.g[i][j] = dot(x.x1(i), x.x1(j));
                for k in 0..2 {
                    jet.dg[k][i][j] = dot(x.x2(k, i), x.x1(j)) + dot(x.x1(i), x.x2(k, j));
                    for l in 0..2 {
                        jet.ddg[l][k][i][j] = dot(x.x3(l, k, i), x.x1(j))
                            + dot(x.x2(k, i), x.x2(l, j))
                            + dot(x.x2(l, i), x.x2(k, j))
                            + dot(x.x1(i), x.x3(l, k, j));
                    }
                }
            }
        }
        Ok(jet)
    }

    /// Christoffel symbols of the second kind of the induced metric.
    pub fn christoffel(&self, u: f64, v: f64) -> Result<ChristoffelSymbols> {
        let jet = self.metric_jet(u, v)?;
        let (gamma, _) = christoffel_with_derivative(&jet)?;
        Ok(ChristoffelSymbols { gamma })
    }

    pub fn riemann_tensor(&self, u: f64, v: f64) -> Result<RiemannTensor> {
        let jet = self.metric_jet(u, v)?;
        let (gamma, dgamma) = christoffel_with_derivative(&jet)?;
        let mut r = [[[[0.0; 2]; 2]; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        let mut quad = 0.0;
                        for p in 0..2 {
                            quad +=
                                gamma[i][k][p] * gamma[p][l][j] - gamma[i][l][p] * gamma[p][k][j];
                        }
                        r[i][j][k][l] = dgamma[k][i][l][j] - dgamma[l][i][k][j] + quad;
                    }
                }
            }
        }
        Ok(RiemannTensor { r })
    }

    /// Sectional curvature of the coordinate plane,
    /// `K = g₀ₚ Rᵖ₁₀₁ / (g₀₀ g₁₁ − g₀₁²)`.
    pub fn sectional_curvature(&self, u: f64, v: f64) -> Result<f64> {
        let jet = self.metric_jet(u, v)?;
        let riemann = self.riemann_tensor(u, v)?;
        let num: f64 = (0..2).map(|p| jet.g[0][p] * riemann.r[p][1][0][1]).sum();
        Ok(num / jet.det())
    }

    /// Gaussian curvature from the first fundamental form alone (Brioschi).
    pub fn intrinsic_curvature(&self, u: f64, v: f64) -> Result<f64> {
        let jet = self.metric_jet(u, v)?;
        jet.inverse()?;
        let (e, f, g) = (jet.g[0][0], jet.g[0][1], jet.g[1][1]);
        let (e_u, e_v) = (jet.dg[0][0][0], jet.dg[1][0][0]);
        let (f_u, f_v) = (jet.dg[0][0][1], jet.dg[1][0][1]);
        let (g_u, g_v) = (jet.dg[0][1][1], jet.dg[1][1][1]);
        let e_vv = jet.ddg[1][1][0][0];
        let f_uv = jet.ddg[0][1][0][1];
        let g_uu = jet.ddg[0][0][1][1];

        let a = [
            [-0.5 * e_vv + f_uv - 0.5 * g_uu, 0.5 * e_u, f_u - 0.5 * e_v],
            [f_v - 0.5 * g_u, e, f],
            [0.5 * g_v, f, g],
        ];
        let b = [
            [0.0, 0.5 * e_v, 0.5 * g_u],
            [0.5 * e_v, e, f],
            [0.5 * g_u, f, g],
        ];
        let w = e * g - f * f;
        Ok((det3(&a) - det3(&b)) / (w * w))
    }

    /// Integrates the geodesic equation `ẍᵏ + Γᵏᵢⱼ ẋⁱ ẋʲ = 0` with `steps`
    /// classical Runge-Kutta steps over `[0, t_max]`.
    pub fn geodesic_shoot(
        &self,
        start: [f64; 2],
        velocity: [f64; 2],
        t_max: f64,
        steps: usize,
    ) -> Result<GeodesicPath> {
        if steps < 2 {
            return Err(Error::InvalidArgument(
                "geodesic needs at least 2 steps".into(),
            ));
        }
        if !(t_max.is_finite() && t_max > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "t_max must be positive, got {t_max}"
            )));
        }
        self.check_domain(start[0], start[1])?;
        let dt = t_max / steps as f64;
        let mut points = Vec::with_capacity(steps + 1);
        let mut velocities = Vec::with_capacity(steps + 1);
        let mut state = [start[0], start[1], velocity[0], velocity[1]];
        points.push(start);
        velocities.push(velocity);

        let rhs = |s: &[f64; 4]| -> Result<[f64; 4]> {
            if !self.domain.contains(s[0], s[1]) {
                return Err(Error::TrajectoryEscape {
                    at: [s[0], s[1]],
                    path: Vec::new(),
                });
            }
            let ch = self.christoffel(s[0], s[1])?.gamma;
            let vel = [s[2], s[3]];
            let mut acc = [0.0; 2];
            for (k, a) in acc.iter_mut().enumerate() {
                for i in 0..2 {
                    for j in 0..2 {
                        *a -= ch[k][i][j] * vel[i] * vel[j];
                    }
                }
            }
            Ok([s[2], s[3], acc[0], acc[1]])
        };
        let axpy = |s: &[f64; 4], k: &[f64; 4], h: f64| -> [f64; 4] {
            [
                s[0] + h * k[0],
                s[1] + h * k[1],
                s[2] + h * k[2],
                s[3] + h * k[3],
            ]
        };

        for _ in 0..steps {
            let step = (|| -> Result<[f64; 4]> {
                let k1 = rhs(&state)?;
                let k2 = rhs(&axpy(&state, &k1, 0.5 * dt))?;
                let k3 = rhs(&axpy(&state, &k2, 0.5 * dt))?;
                let k4 = rhs(&axpy(&state, &k3, dt))?;
                let mut next = state;
                for d in 0..4 {
                    next[d] += dt / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
                }
                Ok(next)
            })();
            let next = match step {
                Ok(n) => n,
                Err(Error::TrajectoryEscape { at, .. }) => {
                    return Err(Error::TrajectoryEscape { at, path: points });
                }
                Err(e) => return Err(e),
            };
            if !self.domain.contains(next[0], next[1]) {
                return Err(Error::TrajectoryEscape {
                    at: [next[0], next[1]],
                    path: points,
                });
            }
            state = next;
            points.push([state[0], state[1]]);
            velocities.push([state[2], state[3]]);
        }
        Ok(GeodesicPath {
            points,
            velocities,
            dt,
        })
    }

    /// `g(w, w)` at `(u, v)`.
    pub fn squared_speed(&self, at: [f64; 2], w: [f64; 2]) -> Result<f64> {
        let ff = self.first_fundamental_form(at[0], at[1])?;
        Ok(ff.e * w[0] * w[0] + 2.0 * ff.f * w[0] * w[1] + ff.g * w[1] * w[1])
    }
}

type Symbols = [[[f64; 2]; 2]; 2];
type SymbolDerivatives = [[[[f64; 2]; 2]; 2]; 2];

/// Christoffel symbols and their derivatives `dgamma[m][k][i][j] = ∂ₘΓᵏᵢⱼ`.
/// Symbols are computed for `i ≤ j` and mirrored, so lower-index symmetry is exact.
fn christoffel_with_derivative(jet: &MetricJet) -> Result<(Symbols, SymbolDerivatives)> {
    let ginv = jet.inverse()?;
    // Symbols of the first kind Γₗᵢⱼ and their derivatives.
    let mut first = [[[0.0; 2]; 2]; 2];
    let mut dfirst = [[[[0.0; 2]; 2]; 2]; 2];
    for l in 0..2 {
        for i in 0..2 {
            for j in i..2 {
                let val = 0.5 * (jet.dg[i][j][l] + jet.dg[j][i][l] - jet.dg[l][i][j]);
                first[l][i][j] = val;
                first[l][j][i] = val;
                for m in 0..2 {
                    let d = 0.5 * (jet.ddg[m][i][j][l] + jet.ddg[m][j][i][l] - jet.ddg[m][l][i][j]);
                    dfirst[m][l][i][j] = d;
                    dfirst[m][l][j][i] = d;
                }
            }
        }
    }
    // ∂ₘ g⁻¹ = −g⁻¹ (∂ₘ g) g⁻¹
    let mut dginv = [[[0.0; 2]; 2]; 2];
    for m in 0..2 {
        for k in 0..2 {
            for l in 0..2 {
                let mut acc = 0.0;
                for a in 0..2 {
                    for b in 0..2 {
                        acc += ginv[k][a] * jet.dg[m][a][b] * ginv[b][l];
                    }
                }
                dginv[m][k][l] = -acc;
            }
        }
    }
    let mut gamma = [[[0.0; 2]; 2]; 2];
    let mut dgamma = [[[[0.0; 2]; 2]; 2]; 2];
    for k in 0..2 {
        for i in 0..2 {
            for j in i..2 {
                let val: f64 = (0..2).map(|l| ginv[k][l] * first[l][i][j]).sum();
                gamma[k][i][j] = val;
                gamma[k][j][i] = val;
                for m in 0..2 {
                    let d: f64 = (0..2)
                        .map(|l| dginv[m][k][l] * first[l][i][j] + ginv[k][l] * dfirst[m][l][i][j])
                        .sum();
                    dgamma[m][k][i][j] = d;
                    dgamma[m][k][j][i] = d;
                }
            }
        }
    }
    Ok((gamma, dgamma))
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Output of [`SurfacePatch::geodesic_shoot`]: `steps + 1` samples including the start.
#[derive(Debug, Clone)]
pub struct GeodesicPath {
    pub points: Vec<[f64; 2]>,
    pub velocities: Vec<[f64; 2]>,
    pub dt: f64,
}

impl GeodesicPath {
    /// Largest deviation of `g(γ̇, γ̇)` from its initial value along the path.
    pub fn max_speed_drift(&self, surface: &SurfacePatch) -> Result<f64> {
        let s0 = surface.squared_speed(self.points[0], self.velocities[0])?;
        let mut worst = 0.0f64;
        for (p, w) in self.points.iter().zip(&self.velocities) {
            worst = worst.max((surface.squared_speed(*p, *w)? - s0).abs());
        }
        Ok(worst)
    }
}

/// Closed-form torus curvature `cos θ / (r (R + r cos θ))`.
pub fn torus_gaussian_curvature(big_r: f64, r: f64, theta: f64) -> f64 {
    theta.cos() / (r * (big_r + r * theta.cos()))
}

/// Evenly spaced angles in `[-π, π)`.
pub fn angle_grid(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| -PI + 2.0 * PI * i as f64 / n as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-12;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn plane_first_form_is_identity() {
        let ff = SurfacePatch::plane()
            .first_fundamental_form(0.3, -1.2)
            .unwrap();
        assert_eq!((ff.e, ff.f, ff.g), (1.0, 0.0, 1.0));
    }

    #[test]
    fn torus_first_form_at_outer_and_inner_equator() {
        let t = SurfacePatch::torus(2.0, 1.0);
        let outer = t.first_fundamental_form(0.4, 0.0).unwrap();
        assert!(close(outer.e, 9.0, TOL) && close(outer.f, 0.0, TOL) && close(outer.g, 1.0, TOL));
        let inner = t.first_fundamental_form(0.4, PI).unwrap();
        assert!(close(inner.e, 1.0, TOL) && close(inner.f, 0.0, TOL) && close(inner.g, 1.0, TOL));
    }

    #[test]
    fn out_of_domain_is_an_argument_error() {
        let s = SurfacePatch::sphere(1.0);
        assert!(matches!(
            s.first_fundamental_form(0.0, 1.6),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            s.gaussian_curvature(f64::NAN, 0.0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn degenerate_parameterisation_is_reported() {
        // Both partials parallel everywhere.
        let s = SurfacePatch::new("line", |u, v| [u + v, 0.0, 0.0], Domain::unbounded());
        assert!(matches!(
            s.first_fundamental_form(0.0, 0.0),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            s.shape_operator(0.0, 0.0),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(s.christoffel(0.0, 0.0), Err(Error::Degenerate(_))));
        assert!(matches!(
            s.intrinsic_curvature(0.0, 0.0),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn plane_shape_operator_vanishes() {
        let s = SurfacePatch::plane().shape_operator(1.0, 2.0).unwrap();
        assert_eq!(s, [[0.0; 2]; 2]);
        assert_eq!(
            SurfacePatch::plane()
                .principal_curvatures(1.0, 2.0)
                .unwrap(),
            (0.0, 0.0)
        );
    }

    #[test]
    fn torus_principal_curvatures_at_outer_equator() {
        let (k1, k2) = SurfacePatch::torus(2.0, 1.0)
            .principal_curvatures(0.7, 0.0)
            .unwrap();
        assert!(close(k1, -1.0, TOL), "{k1}");
        assert!(close(k2, -1.0 / 3.0, TOL), "{k2}");
    }

    #[test]
    fn torus_shape_operator_is_diagonal() {
        let theta: f64 = 0.9;
        let s = SurfacePatch::torus(2.0, 1.0)
            .shape_operator(0.1, theta)
            .unwrap();
        assert!(close(s[0][0], -theta.cos() / (2.0 + theta.cos()), TOL));
        assert!(close(s[1][1], -1.0, TOL));
        assert!(close(s[0][1], 0.0, TOL) && close(s[1][0], 0.0, TOL));
    }

    #[test]
    fn cylinder_principal_curvatures() {
        let (k1, k2) = SurfacePatch::cylinder(1.0)
            .principal_curvatures(0.5, 3.0)
            .unwrap();
        let mut ks = [k1.abs(), k2.abs()];
        ks.sort_by(f64::total_cmp);
        assert!(close(ks[0], 0.0, TOL) && close(ks[1], 1.0, TOL));
        assert!(close(k1 * k2, 0.0, TOL));
    }

    #[test]
    fn torus_gaussian_curvature_values() {
        let t = SurfacePatch::torus(2.0, 1.0);
        assert!(close(
            t.gaussian_curvature(0.0, PI / 2.0).unwrap(),
            0.0,
            TOL
        ));
        assert!(close(
            t.gaussian_curvature(0.0, 0.0).unwrap(),
            1.0 / 3.0,
            TOL
        ));
        assert!(close(t.gaussian_curvature(0.0, PI).unwrap(), -1.0, TOL));
    }

    #[test]
    fn torus_christoffel_values() {
        let (big_r, r, theta) = (2.0, 1.0, 0.8f64);
        let ch = SurfacePatch::torus(big_r, r)
            .christoffel(1.1, theta)
            .unwrap()
            .gamma;
        let w = big_r + r * theta.cos();
        assert!(close(ch[0][0][1], -r * theta.sin() / w, TOL));
        assert_eq!(ch[0][0][1], ch[0][1][0]);
        assert!(close(ch[1][0][0], theta.sin() * w / r, TOL));
        for (k, i, j) in [(0, 0, 0), (0, 1, 1), (1, 0, 1), (1, 1, 0), (1, 1, 1)] {
            assert!(ch[k][i][j].abs() < TOL, "Γ{k}{i}{j} = {}", ch[k][i][j]);
        }
    }

    #[test]
    fn plane_christoffel_and_riemann_vanish() {
        let p = SurfacePatch::plane();
        assert_eq!(p.christoffel(0.2, 0.3).unwrap().gamma, [[[0.0; 2]; 2]; 2]);
        assert_eq!(
            p.riemann_tensor(0.2, 0.3).unwrap().r,
            [[[[0.0; 2]; 2]; 2]; 2]
        );
        assert_eq!(p.sectional_curvature(0.2, 0.3).unwrap(), 0.0);
        assert_eq!(p.intrinsic_curvature(0.2, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn torus_riemann_components() {
        let (big_r, r, theta) = (2.0, 1.0, 0.6f64);
        let rt = SurfacePatch::torus(big_r, r)
            .riemann_tensor(0.0, theta)
            .unwrap()
            .r;
        let w = big_r + r * theta.cos();
        assert!(close(rt[0][1][0][1], r * theta.cos() / w, 1e-12));
        assert!(close(rt[1][0][0][1], -theta.cos() * w / r, 1e-12));
        assert!(close(rt[1][0][1][0], theta.cos() * w / r, 1e-12));
    }

    #[test]
    fn curvature_routes_agree_on_torus() {
        let t = SurfacePatch::torus(2.0, 1.0);
        for &theta in &[0.0, 0.5, PI / 2.0, 2.0, PI] {
            let k = torus_gaussian_curvature(2.0, 1.0, theta);
            assert!(close(t.sectional_curvature(0.3, theta).unwrap(), k, 1e-12));
            assert!(close(t.intrinsic_curvature(0.3, theta).unwrap(), k, 1e-12));
        }
    }

    #[test]
    fn cylinder_intrinsic_curvature_is_zero() {
        let c = SurfacePatch::cylinder(1.0);
        assert!(c.intrinsic_curvature(0.4, 0.1).unwrap().abs() < TOL);
        assert!(c.sectional_curvature(0.4, 0.1).unwrap().abs() < TOL);
    }

    #[test]
    fn numeric_partials_track_analytic_ones() {
        let t = SurfacePatch::torus(2.0, 1.0);
        let n = t.numeric_only();
        for &(u, v) in &[(0.1, 0.2), (1.3, 2.9), (-2.0, -0.7)] {
            let k = t.gaussian_curvature(u, v).unwrap();
            assert!(close(n.gaussian_curvature(u, v).unwrap(), k, 1e-5));
            assert!(close(n.intrinsic_curvature(u, v).unwrap(), k, 1e-3));
            assert!(close(n.sectional_curvature(u, v).unwrap(), k, 1e-3));
        }
    }

    #[test]
    fn analytic_partials_match_differences() {
        let pts: Vec<(f64, f64)> = (0..10)
            .map(|i| (0.37 * i as f64 - 1.5, 0.29 * i as f64 - 1.3))
            .collect();
        for s in [
            SurfacePatch::torus(2.0, 1.0),
            SurfacePatch::sphere(1.5),
            SurfacePatch::cylinder(0.7),
        ] {
            let worst = s.max_partials_discrepancy(&pts);
            assert!(worst <= 1e-6, "{}: {worst:.3e}", s.name());
        }
    }

    #[test]
    fn wrong_analytic_partials_are_detected() {
        let bad =
            SurfacePatch::plane().with_first_partials(|_, _| [[1.0, 0.0, 0.0], [0.0, 2.0, 0.0]]);
        assert!(bad.max_partials_discrepancy(&[(0.0, 0.0)]) > 0.4);
    }

    #[test]
    fn plane_geodesic_is_a_straight_line() {
        let path = SurfacePatch::plane()
            .geodesic_shoot([0.0, 0.0], [1.0, 0.0], 1.0, 10)
            .unwrap();
        assert_eq!(path.points.len(), 11);
        let end = path.points.last().unwrap();
        assert!(close(end[0], 1.0, TOL) && close(end[1], 0.0, TOL));
    }

    #[test]
    fn geodesic_escape_carries_partial_path() {
        let s = SurfacePatch::sphere(1.0);
        match s.geodesic_shoot([0.0, 1.4], [0.0, 1.0], 1.0, 100) {
            Err(Error::TrajectoryEscape { path, at }) => {
                assert!(!path.is_empty());
                assert!(at[1] > 1.5);
            }
            other => panic!("expected escape, got {other:?}"),
        }
    }

    #[test]
    fn geodesic_rejects_too_few_steps() {
        assert!(SurfacePatch::plane()
            .geodesic_shoot([0.0, 0.0], [1.0, 0.0], 1.0, 1)
            .is_err());
    }
}
