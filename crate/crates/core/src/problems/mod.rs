//! Desk-scale PDE benchmark problems: K loss terms each, collocation
//! sampling, analytic or finite-difference references, and learnable
//! physical scalars for inverse problems.
//!
//! Forward problems with manufactured solutions: poisson1d, heat1d,
//! burgers1d, helmholtz2d, inverse_poisson. thermoelastic_k4 uses the
//! finite-difference reference in [`thermoelastic`]. conflict2/control2
//! are synthetic two-loss fitting problems used to exercise the
//! profiler: conflict2 has two data losses with opposing targets so its
//! gradients stay antipodal; control2 duplicates one loss.

pub mod thermoelastic;

use crate::autodiff::{Jet, Node};
use crate::model::{FieldTracer, PinnModel};
use crate::{Graph, Real};
use rand::Rng;
use serde::{Deserialize, Serialize};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("unknown problem {0:?}; registered problems: {1}")]
    UnknownProblem(String, String),
    #[error("invalid reference grid: {0}")]
    InvalidGrid(String),
    #[error("explicit wave step unstable (CFL {cfl:.3} > 1); use at least {suggested_nt} time steps")]
    CflViolation { cfl: Real, suggested_nt: usize },
    #[error("reference field has zero norm on the test grid")]
    ZeroReference,
}

/// Registered problem names.
pub const REGISTRY: &[&str] = &[
    "poisson1d",
    "heat1d",
    "burgers1d",
    "helmholtz2d",
    "thermoelastic_k4",
    "inverse_poisson",
    "conflict2",
    "control2",
];

/// Learnable physical scalar of an inverse problem. The model stores it
/// in log space.
#[derive(Clone, Debug)]
pub struct PhysicalSpec {
    pub name: &'static str,
    pub true_value: Real,
    pub init_log: Real,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CollocationCounts {
    pub interior: usize,
    pub boundary: usize,
    pub initial: usize,
    pub data: usize,
}

impl Default for CollocationCounts {
    fn default() -> Self {
        CollocationCounts {
            interior: 64,
            boundary: 16,
            initial: 16,
            data: 8,
        }
    }
}

/// Sampled point sets for one epoch.
#[derive(Clone, Debug, Default)]
pub struct CollocationSet {
    pub interior: Vec<Vec<Real>>,
    pub boundary: Vec<Vec<Real>>,
    pub initial: Vec<Vec<Real>>,
    pub data: Vec<Vec<Real>>,
}

/// A PDE problem: domain, loss terms over a traced field, reference
/// solution, and optional physical scalar.
pub trait Problem: Send + Sync {
    fn name(&self) -> &'static str;
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize {
        1
    }
    fn num_losses(&self) -> usize;
    fn loss_names(&self) -> Vec<&'static str>;
    /// Box bounds (lo, hi) of the domain.
    fn domain(&self) -> (Vec<Real>, Vec<Real>);
    fn physical(&self) -> Option<PhysicalSpec> {
        None
    }
    fn sample(&self, counts: &CollocationCounts, rng: &mut ChaCha8Rng) -> CollocationSet;
    /// Differentiable per-term mean-squared losses.
    fn losses(&self, g: &mut Graph, field: &dyn FieldTracer, colloc: &CollocationSet) -> Vec<Node>;
    /// Analytic solution as a traceable field, where one exists.
    fn manufactured(&self) -> Option<AnalyticField> {
        None
    }
    /// Reference field values at a point.
    fn reference(&self, x: &[Real]) -> Vec<Real>;
    fn test_grid(&self) -> Vec<Vec<Real>>;
}

/// Build a registered problem by name.
pub fn make_problem(name: &str) -> Result<Box<dyn Problem>, ProblemError> {
    match name {
        "poisson1d" => Ok(Box::new(Poisson1d)),
        "heat1d" => Ok(Box::new(Heat1d { kappa: 0.1 })),
        "burgers1d" => Ok(Box::new(Burgers1d { nu: 0.05 })),
        "helmholtz2d" => Ok(Box::new(Helmholtz2d { omega: 2.0 })),
        "thermoelastic_k4" => Ok(Box::new(ThermoK4::new(200)?)),
        "inverse_poisson" => Ok(Box::new(InversePoisson { alpha_true: 0.7 })),
        "conflict2" => Ok(Box::new(Synthetic2 {
            offset: 2.0,
            name: "conflict2",
        })),
        "control2" => Ok(Box::new(Synthetic2 {
            offset: 0.0,
            name: "control2",
        })),
        other => Err(ProblemError::UnknownProblem(
            other.to_string(),
            REGISTRY.join(", "),
        )),
    }
}

/// Analytic field wrapping a jet-builder closure; physical scalars are
/// fixed constants. Implements the same tracing interface as the model,
/// so loss evaluators accept either.
pub struct AnalyticField {
    build: Box<dyn Fn(&mut Graph, &[Real], bool) -> Vec<Jet> + Send + Sync>,
    physical: Vec<Real>,
}

impl AnalyticField {
    pub fn new(
        build: impl Fn(&mut Graph, &[Real], bool) -> Vec<Jet> + Send + Sync + 'static,
    ) -> Self {
        AnalyticField {
            build: Box::new(build),
            physical: Vec::new(),
        }
    }

    pub fn with_physical(mut self, vals: Vec<Real>) -> Self {
        self.physical = vals;
        self
    }
}

impl FieldTracer for AnalyticField {
    fn trace(&self, g: &mut Graph, x: &[Real], with_derivs: bool) -> Vec<Jet> {
        (self.build)(g, x, with_derivs)
    }

    fn physical(&self, g: &mut Graph, idx: usize) -> Node {
        g.constant(self.physical[idx])
    }
}

/// Input jets for an analytic build closure.
pub fn input_jets(g: &mut Graph, x: &[Real], with_derivs: bool) -> Vec<Jet> {
    let lanes = if with_derivs { x.len() } else { 0 };
    x.iter()
        .enumerate()
        .map(|(i, &xi)| {
            let n = g.constant(xi);
            let mut j = Jet::from_node(g, n, lanes);
            if with_derivs {
                j.d1[i] = g.one();
            }
            j
        })
        .collect()
}

fn mse(g: &mut Graph, residuals: &[Node]) -> Node {
    assert!(!residuals.is_empty());
    let sq: Vec<Node> = residuals.iter().map(|&r| g.square(r)).collect();
    g.mean(&sq)
}

fn uniform_box(lo: &[Real], hi: &[Real], n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<Real>> {
    (0..n)
        .map(|_| {
            lo.iter()
                .zip(hi)
                .map(|(&a, &b)| rng.gen_range(a..b))
                .collect()
        })
        .collect()
}

fn linspace(a: Real, b: Real, n: usize) -> Vec<Real> {
    (0..n)
        .map(|i| a + (b - a) * i as Real / (n - 1) as Real)
        .collect()
}

/// Relative L2 error of an arbitrary field evaluator on the test grid.
pub fn relative_l2_fn(
    eval: &mut dyn FnMut(&[Real]) -> Vec<Real>,
    problem: &dyn Problem,
) -> Result<Real, ProblemError> {
    let mut num = 0.0;
    let mut den = 0.0;
    for p in problem.test_grid() {
        let got = eval(&p);
        let want = problem.reference(&p);
        for (a, b) in got.iter().zip(&want) {
            num += (a - b) * (a - b);
            den += b * b;
        }
    }
    if den == 0.0 {
        return Err(ProblemError::ZeroReference);
    }
    Ok((num / den).sqrt())
}

/// Relative L2 error of a model on the test grid.
pub fn relative_l2(model: &PinnModel, problem: &dyn Problem) -> Result<Real, ProblemError> {
    relative_l2_fn(&mut |x| model.eval(x), problem)
}

// ---------------------------------------------------------------------
// poisson1d: -u'' = f on [0,1], u* = sin(pi x), f = pi^2 sin(pi x).
// Losses: residual, boundary, interior data anchors.

struct Poisson1d;

impl Problem for Poisson1d {
    fn name(&self) -> &'static str {
        "poisson1d"
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn num_losses(&self) -> usize {
        3
    }
    fn loss_names(&self) -> Vec<&'static str> {
        vec!["residual", "bc", "data"]
    }
    fn domain(&self) -> (Vec<Real>, Vec<Real>) {
        (vec![0.0], vec![1.0])
    }

    fn sample(&self, counts: &CollocationCounts, rng: &mut ChaCha8Rng) -> CollocationSet {
        CollocationSet {
            interior: uniform_box(&[0.0], &[1.0], counts.interior, rng),
            boundary: (0..counts.boundary.max(2))
                .map(|i| vec![(i % 2) as Real])
                .collect(),
            initial: Vec::new(),
            data: uniform_box(&[0.0], &[1.0], counts.data, rng),
        }
    }

    fn losses(&self, g: &mut Graph, field: &dyn FieldTracer, c: &CollocationSet) -> Vec<Node> {
        let mut res = Vec::new();
        for p in &c.interior {
            let u = field.trace(g, p, true);
            let d2 = u[0].input_derivative(0, 2).unwrap();
            let f = g.constant(PI * PI * (PI * p[0]).sin());
            res.push(g.add(d2, f));
        }
        let l_res = mse(g, &res);
        let bc: Vec<Node> = c
            .boundary
            .iter()
            .map(|p| field.trace(g, p, false)[0].val)
            .collect();
        let l_bc = mse(g, &bc);
        let data: Vec<Node> = c
            .data
            .iter()
            .map(|p| {
                let u = field.trace(g, p, false);
                let t = g.constant((PI * p[0]).sin());
                g.sub(u[0].val, t)
            })
            .collect();
        let l_data = mse(g, &data);
        vec![l_res, l_bc, l_data]
    }

    fn manufactured(&self) -> Option<AnalyticField> {
        Some(AnalyticField::new(|g, x, wd| {
            let inp = input_jets(g, x, wd);
            let px = Jet::scale_const(g, &inp[0], PI);
            vec![Jet::sin(g, &px)]
        }))
    }

    fn reference(&self, x: &[Real]) -> Vec<Real> {
        vec![(PI * x[0]).sin()]
    }

    fn test_grid(&self) -> Vec<Vec<Real>> {
        linspace(0.0, 1.0, 256).into_iter().map(|x| vec![x]).collect()
    }
}

// ---------------------------------------------------------------------
// heat1d: u_t = kappa u_xx on [0,1] x [0,1],
// u* = exp(-kappa pi^2 t) sin(pi x). Losses: residual, BC, IC.

struct Heat1d {
    kappa: Real,
}

impl Heat1d {
    fn exact(&self, x: Real, t: Real) -> Real {
        (-self.kappa * PI * PI * t).exp() * (PI * x).sin()
    }
}

impl Problem for Heat1d {
    fn name(&self) -> &'static str {
        "heat1d"
    }
    fn input_dim(&self) -> usize {
        2
    }
    fn num_losses(&self) -> usize {
        3
    }
    fn loss_names(&self) -> Vec<&'static str> {
        vec!["residual", "bc", "ic"]
    }
    fn domain(&self) -> (Vec<Real>, Vec<Real>) {
        (vec![0.0, 0.0], vec![1.0, 1.0])
    }

    fn sample(&self, counts: &CollocationCounts, rng: &mut ChaCha8Rng) -> CollocationSet {
        CollocationSet {
            interior: uniform_box(&[0.0, 0.0], &[1.0, 1.0], counts.interior, rng),
            boundary: (0..counts.boundary.max(2))
                .map(|i| vec![(i % 2) as Real, rng.gen_range(0.0..1.0)])
                .collect(),
            initial: uniform_box(&[0.0], &[1.0], counts.initial, rng)
                .into_iter()
                .map(|p| vec![p[0], 0.0])
                .collect(),
            data: Vec::new(),
        }
    }

    fn losses(&self, g: &mut Graph, field: &dyn FieldTracer, c: &CollocationSet) -> Vec<Node> {
        let mut res = Vec::new();
        for p in &c.interior {
            let u = field.trace(g, p, true);
            let ut = u[0].input_derivative(1, 1).unwrap();
            let uxx = u[0].input_derivative(0, 2).unwrap();
            let kx = g.scale(uxx, self.kappa);
            res.push(g.sub(ut, kx));
        }
        let l_res = mse(g, &res);
        let bc: Vec<Node> = c
            .boundary
            .iter()
            .map(|p| field.trace(g, p, false)[0].val)
            .collect();
        let l_bc = mse(g, &bc);
        let ic: Vec<Node> = c
            .initial
            .iter()
            .map(|p| {
                let u = field.trace(g, p, false);
                let t = g.constant((PI * p[0]).sin());
                g.sub(u[0].val, t)
            })
            .collect();
        let l_ic = mse(g, &ic);
        vec![l_res, l_bc, l_ic]
    }

    fn manufactured(&self) -> Option<AnalyticField> {
        let kappa = self.kappa;
        Some(AnalyticField::new(move |g, x, wd| {
            let inp = input_jets(g, x, wd);
            let px = Jet::scale_const(g, &inp[0], PI);
            let s = Jet::sin(g, &px);
            let kt = Jet::scale_const(g, &inp[1], -kappa * PI * PI);
            let e = Jet::exp(g, &kt);
            vec![Jet::mul(g, &e, &s)]
        }))
    }

    fn reference(&self, x: &[Real]) -> Vec<Real> {
        vec![self.exact(x[0], x[1])]
    }

    fn test_grid(&self) -> Vec<Vec<Real>> {
        grid2(0.0, 1.0, 0.0, 1.0, 32)
    }
}

// ---------------------------------------------------------------------
// burgers1d: u_t + u u_x = nu u_xx + q with forcing q manufactured so
// u* = exp(-t) sin(pi x) solves the equation exactly.

struct Burgers1d {
    nu: Real,
}

impl Burgers1d {
    fn forcing(&self, x: Real, t: Real) -> Real {
        let (s, c) = ((PI * x).sin(), (PI * x).cos());
        let e = (-t).exp();
        -e * s + e * e * PI * s * c + self.nu * PI * PI * e * s
    }
}

impl Problem for Burgers1d {
    fn name(&self) -> &'static str {
        "burgers1d"
    }
    fn input_dim(&self) -> usize {
        2
    }
    fn num_losses(&self) -> usize {
        3
    }
    fn loss_names(&self) -> Vec<&'static str> {
        vec!["residual", "bc", "ic"]
    }
    fn domain(&self) -> (Vec<Real>, Vec<Real>) {
        (vec![0.0, 0.0], vec![1.0, 1.0])
    }

    fn sample(&self, counts: &CollocationCounts, rng: &mut ChaCha8Rng) -> CollocationSet {
        CollocationSet {
            interior: uniform_box(&[0.0, 0.0], &[1.0, 1.0], counts.interior, rng),
            boundary: (0..counts.boundary.max(2))
                .map(|i| vec![(i % 2) as Real, rng.gen_range(0.0..1.0)])
                .collect(),
            initial: uniform_box(&[0.0], &[1.0], counts.initial, rng)
                .into_iter()
                .map(|p| vec![p[0], 0.0])
                .collect(),
            data: Vec::new(),
        }
    }

    fn losses(&self, g: &mut Graph, field: &dyn FieldTracer, c: &CollocationSet) -> Vec<Node> {
        let mut res = Vec::new();
        for p in &c.interior {
            let u = field.trace(g, p, true);
            let ut = u[0].input_derivative(1, 1).unwrap();
            let ux = u[0].input_derivative(0, 1).unwrap();
            let uxx = u[0].input_derivative(0, 2).unwrap();
            let adv = g.mul(u[0].val, ux);
            let diff = g.scale(uxx, self.nu);
            let q = g.constant(self.forcing(p[0], p[1]));
            let a = g.add(ut, adv);
            let b = g.sub(a, diff);
            res.push(g.sub(b, q));
        }
        let l_res = mse(g, &res);
        let bc: Vec<Node> = c
            .boundary
            .iter()
            .map(|p| field.trace(g, p, false)[0].val)
            .collect();
        let l_bc = mse(g, &bc);
        let ic: Vec<Node> = c
            .initial
            .iter()
            .map(|p| {
                let u = field.trace(g, p, false);
                let t = g.constant((PI * p[0]).sin());
                g.sub(u[0].val, t)
            })
            .collect();
        let l_ic = mse(g, &ic);
        vec![l_res, l_bc, l_ic]
    }

    fn manufactured(&self) -> Option<AnalyticField> {
        Some(AnalyticField::new(|g, x, wd| {
            let inp = input_jets(g, x, wd);
            let px = Jet::scale_const(g, &inp[0], PI);
            let s = Jet::sin(g, &px);
            let mt = Jet::scale_const(g, &inp[1], -1.0);
            let e = Jet::exp(g, &mt);
            vec![Jet::mul(g, &e, &s)]
        }))
    }

    fn reference(&self, x: &[Real]) -> Vec<Real> {
        vec![(-x[1]).exp() * (PI * x[0]).sin()]
    }

    fn test_grid(&self) -> Vec<Vec<Real>> {
        grid2(0.0, 1.0, 0.0, 1.0, 32)
    }
}

// ---------------------------------------------------------------------
// helmholtz2d: Laplacian u + omega^2 u = f on [0,1]^2 with
// u* = sin(pi x) sin(pi y), f = (omega^2 - 2 pi^2) u*.

struct Helmholtz2d {
    omega: Real,
}

impl Problem for Helmholtz2d {
    fn name(&self) -> &'static str {
        "helmholtz2d"
    }
    fn input_dim(&self) -> usize {
        2
    }
    fn num_losses(&self) -> usize {
        3
    }
    fn loss_names(&self) -> Vec<&'static str> {
        vec!["residual", "bc", "data"]
    }
    fn domain(&self) -> (Vec<Real>, Vec<Real>) {
        (vec![0.0, 0.0], vec![1.0, 1.0])
    }

    fn sample(&self, counts: &CollocationCounts, rng: &mut ChaCha8Rng) -> CollocationSet {
        let boundary = (0..counts.boundary.max(4))
            .map(|i| {
                let s = rng.gen_range(0.0..1.0);
                match i % 4 {
                    0 => vec![0.0, s],
                    1 => vec![1.0, s],
                    2 => vec![s, 0.0],
                    _ => vec![s, 1.0],
                }
            })
            .collect();
        CollocationSet {
            interior: uniform_box(&[0.0, 0.0], &[1.0, 1.0], counts.interior, rng),
            boundary,
            initial: Vec::new(),
            data: uniform_box(&[0.0, 0.0], &[1.0, 1.0], counts.data, rng),
        }
    }

    fn losses(&self, g: &mut Graph, field: &dyn FieldTracer, c: &CollocationSet) -> Vec<Node> {
        let w2 = self.omega * self.omega;
        let mut res = Vec::new();
        for p in &c.interior {
            let u = field.trace(g, p, true);
            let uxx = u[0].input_derivative(0, 2).unwrap();
            let uyy = u[0].input_derivative(1, 2).unwrap();
            let wu = g.scale(u[0].val, w2);
            let f = g.constant((w2 - 2.0 * PI * PI) * (PI * p[0]).sin() * (PI * p[1]).sin());
            let lap = g.add(uxx, uyy);
            let lhs = g.add(lap, wu);
            res.push(g.sub(lhs, f));
        }
        let l_res = mse(g, &res);
        let bc: Vec<Node> = c
            .boundary
            .iter()
            .map(|p| field.trace(g, p, false)[0].val)
            .collect();
        let l_bc = mse(g, &bc);
        let data: Vec<Node> = c
            .data
            .iter()
            .map(|p| {
                let u = field.trace(g, p, false);
                let t = g.constant((PI * p[0]).sin() * (PI * p[1]).sin());
                g.sub(u[0].val, t)
            })
            .collect();
        let l_data = mse(g, &data);
        vec![l_res, l_bc, l_data]
    }

    fn manufactured(&self) -> Option<AnalyticField> {
        Some(AnalyticField::new(|g, x, wd| {
            let inp = input_jets(g, x, wd);
            let px = Jet::scale_const(g, &inp[0], PI);
            let py = Jet::scale_const(g, &inp[1], PI);
            let sx = Jet::sin(g, &px);
            let sy = Jet::sin(g, &py);
            vec![Jet::mul(g, &sx, &sy)]
        }))
    }

    fn reference(&self, x: &[Real]) -> Vec<Real> {
        vec![(PI * x[0]).sin() * (PI * x[1]).sin()]
    }

    fn test_grid(&self) -> Vec<Vec<Real>> {
        grid2(0.0, 1.0, 0.0, 1.0, 32)
    }
}

// ---------------------------------------------------------------------
// inverse_poisson: -u'' = alpha f with f = pi^2 sin(pi x) and learnable
// alpha (log-parameterized); the true field is alpha_true sin(pi x).
// Losses: residual, BC, data anchors on the true field.

struct InversePoisson {
    alpha_true: Real,
}

impl Problem for InversePoisson {
    fn name(&self) -> &'static str {
        "inverse_poisson"
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn num_losses(&self) -> usize {
        3
    }
    fn loss_names(&self) -> Vec<&'static str> {
        vec!["residual", "bc", "data"]
    }
    fn domain(&self) -> (Vec<Real>, Vec<Real>) {
        (vec![0.0], vec![1.0])
    }
    fn physical(&self) -> Option<PhysicalSpec> {
        Some(PhysicalSpec {
            name: "alpha",
            true_value: self.alpha_true,
            init_log: 0.0,
        })
    }

    fn sample(&self, counts: &CollocationCounts, rng: &mut ChaCha8Rng) -> CollocationSet {
        CollocationSet {
            interior: uniform_box(&[0.0], &[1.0], counts.interior, rng),
            boundary: (0..counts.boundary.max(2))
                .map(|i| vec![(i % 2) as Real])
                .collect(),
            initial: Vec::new(),
            data: uniform_box(&[0.0], &[1.0], counts.data.max(4), rng),
        }
    }

    fn losses(&self, g: &mut Graph, field: &dyn FieldTracer, c: &CollocationSet) -> Vec<Node> {
        let alpha = field.physical(g, 0);
        let mut res = Vec::new();
        for p in &c.interior {
            let u = field.trace(g, p, true);
            let d2 = u[0].input_derivative(0, 2).unwrap();
            let f = g.constant(PI * PI * (PI * p[0]).sin());
            let af = g.mul(alpha, f);
            res.push(g.add(d2, af));
        }
        let l_res = mse(g, &res);
        let bc: Vec<Node> = c
            .boundary
            .iter()
            .map(|p| field.trace(g, p, false)[0].val)
            .collect();
        let l_bc = mse(g, &bc);
        let data: Vec<Node> = c
            .data
            .iter()
            .map(|p| {
                let u = field.trace(g, p, false);
                let t = g.constant(self.alpha_true * (PI * p[0]).sin());
                g.sub(u[0].val, t)
            })
            .collect();
        let l_data = mse(g, &data);
        vec![l_res, l_bc, l_data]
    }

    fn manufactured(&self) -> Option<AnalyticField> {
        let a = self.alpha_true;
        Some(
            AnalyticField::new(move |g, x, wd| {
                let inp = input_jets(g, x, wd);
                let px = Jet::scale_const(g, &inp[0], PI);
                let s = Jet::sin(g, &px);
                vec![Jet::scale_const(g, &s, a)]
            })
            .with_physical(vec![a]),
        )
    }

    fn reference(&self, x: &[Real]) -> Vec<Real> {
        vec![self.alpha_true * (PI * x[0]).sin()]
    }

    fn test_grid(&self) -> Vec<Vec<Real>> {
        linspace(0.0, 1.0, 256).into_iter().map(|x| vec![x]).collect()
    }
}

// ---------------------------------------------------------------------
// thermoelastic_k4: coupled heat-wave system with a finite-difference
// reference; losses heat residual, wave residual, BC (both fields),
// IC (u, v, v_t).

struct ThermoK4 {
    reference: thermoelastic::ThermoRef,
}

impl ThermoK4 {
    fn new(grid_n: usize) -> Result<Self, ProblemError> {
        Ok(ThermoK4 {
            reference: thermoelastic::solve_reference(grid_n, grid_n)?,
        })
    }
}

impl Problem for ThermoK4 {
    fn name(&self) -> &'static str {
        "thermoelastic_k4"
    }
    fn input_dim(&self) -> usize {
        2
    }
    fn output_dim(&self) -> usize {
        2
    }
    fn num_losses(&self) -> usize {
        4
    }
    fn loss_names(&self) -> Vec<&'static str> {
        vec!["heat", "wave", "bc", "ic"]
    }
    fn domain(&self) -> (Vec<Real>, Vec<Real>) {
        (vec![-1.0, 0.0], vec![1.0, 1.0])
    }

    fn sample(&self, counts: &CollocationCounts, rng: &mut ChaCha8Rng) -> CollocationSet {
        CollocationSet {
            interior: uniform_box(&[-1.0, 0.0], &[1.0, 1.0], counts.interior, rng),
            boundary: (0..counts.boundary.max(2))
                .map(|i| {
                    let x = if i % 2 == 0 { -1.0 } else { 1.0 };
                    vec![x, rng.gen_range(0.0..1.0)]
                })
                .collect(),
            initial: uniform_box(&[-1.0], &[1.0], counts.initial, rng)
                .into_iter()
                .map(|p| vec![p[0], 0.0])
                .collect(),
            data: Vec::new(),
        }
    }

    fn losses(&self, g: &mut Graph, field: &dyn FieldTracer, c: &CollocationSet) -> Vec<Node> {
        use thermoelastic::{ALPHA, BETA, C_WAVE, D_COEF};
        let mut heat = Vec::new();
        let mut wave = Vec::new();
        for p in &c.interior {
            let out = field.trace(g, p, true);
            let (ju, jv) = (&out[0], &out[1]);
            let ut = ju.input_derivative(1, 1).unwrap();
            let uxx = ju.input_derivative(0, 2).unwrap();
            let du = g.scale(uxx, D_COEF);
            let av = g.scale(jv.val, ALPHA);
            let h = g.sub(ut, du);
            heat.push(g.sub(h, av));

            let vtt = jv.input_derivative(1, 2).unwrap();
            let vxx = jv.input_derivative(0, 2).unwrap();
            let cv = g.scale(vxx, C_WAVE * C_WAVE);
            let bu = g.scale(ju.val, BETA);
            let w = g.sub(vtt, cv);
            wave.push(g.sub(w, bu));
        }
        let l_heat = mse(g, &heat);
        let l_wave = mse(g, &wave);

        let mut bc = Vec::new();
        for p in &c.boundary {
            let out = field.trace(g, p, false);
            bc.push(out[0].val);
            bc.push(out[1].val);
        }
        let l_bc = mse(g, &bc);

        let mut ic = Vec::new();
        for p in &c.initial {
            // v_t(x,0) needs a derivative lane
            let out = field.trace(g, p, true);
            let tu = g.constant((PI * p[0]).sin());
            ic.push(g.sub(out[0].val, tu));
            let tv = g.constant((PI * p[0] / 2.0).cos());
            ic.push(g.sub(out[1].val, tv));
            ic.push(out[1].input_derivative(1, 1).unwrap());
        }
        let l_ic = mse(g, &ic);
        vec![l_heat, l_wave, l_bc, l_ic]
    }

    fn reference(&self, x: &[Real]) -> Vec<Real> {
        let (u, v) = self.reference.interpolate(x[0], x[1]);
        vec![u, v]
    }

    fn test_grid(&self) -> Vec<Vec<Real>> {
        grid2(-1.0, 1.0, 0.0, 1.0, 33)
    }
}

// ---------------------------------------------------------------------
// Synthetic two-loss fitting problems on [0,1] over the target
// delta(x) = sin(2 pi x). With offset c the two data losses pull the
// field toward delta + c and delta - c; their gradients stay close to
// antipodal while the compromise optimum is delta itself. offset 0
// duplicates a single loss (zero-conflict control).

struct Synthetic2 {
    offset: Real,
    name: &'static str,
}

fn delta_target(x: Real) -> Real {
    (2.0 * PI * x).sin()
}

impl Problem for Synthetic2 {
    fn name(&self) -> &'static str {
        self.name
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn num_losses(&self) -> usize {
        2
    }
    fn loss_names(&self) -> Vec<&'static str> {
        vec!["data_plus", "data_minus"]
    }
    fn domain(&self) -> (Vec<Real>, Vec<Real>) {
        (vec![0.0], vec![1.0])
    }

    fn sample(&self, counts: &CollocationCounts, rng: &mut ChaCha8Rng) -> CollocationSet {
        CollocationSet {
            interior: uniform_box(&[0.0], &[1.0], counts.interior, rng),
            ..Default::default()
        }
    }

    fn losses(&self, g: &mut Graph, field: &dyn FieldTracer, c: &CollocationSet) -> Vec<Node> {
        let mut plus = Vec::new();
        let mut minus = Vec::new();
        for p in &c.interior {
            let u = field.trace(g, p, false)[0].val;
            let tp = g.constant(delta_target(p[0]) + self.offset);
            plus.push(g.sub(u, tp));
            let tm = g.constant(delta_target(p[0]) - self.offset);
            minus.push(g.sub(u, tm));
        }
        vec![mse(g, &plus), mse(g, &minus)]
    }

    fn reference(&self, x: &[Real]) -> Vec<Real> {
        vec![delta_target(x[0])]
    }

    fn test_grid(&self) -> Vec<Vec<Real>> {
        linspace(0.0, 1.0, 256).into_iter().map(|x| vec![x]).collect()
    }
}

fn grid2(x0: Real, x1: Real, y0: Real, y1: Real, n: usize) -> Vec<Vec<Real>> {
    let xs = linspace(x0, x1, n);
    let ys = linspace(y0, y1, n);
    let mut out = Vec::with_capacity(n * n);
    for x in &xs {
        for y in &ys {
            out.push(vec![*x, *y]);
        }
    }
    out
}
