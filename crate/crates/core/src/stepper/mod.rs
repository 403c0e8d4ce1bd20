//! Implicit viscous time stepping for the bulk-surface system.
//!
//! Each step solves, for `(phi, mu, w)` at level `n+1` with `psi = trace(phi)`,
//!
//! ```text
//! R1 = M (phi - phi_n)/h + M (mu - mu_n) + K mu
//! R2 = tau/h M (phi - phi_n) + K phi + M_L F(phi) - M f_n - M mu
//!      + T^T [ sigma/h Mb (psi - psi_n) + Kb psi + Mb_L F_b(psi) - Mb g_n - Mb w ]
//! R3 = Mb (psi - psi_n)/h + Mb (w - w_n) + Kb w
//! ```
//!
//! where `F = beta_eps + pi` is applied nodally and weighted by the lumped
//! mass `M_L`. Lumping the potential term makes the discrete energy (which
//! uses the same weights) a Lyapunov function and keeps the Newton matrix
//! symmetric.

mod newton;
mod trajectory;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::diskfem::{DiscreteOperators, DiskFemError};
use crate::graphs::{GraphError, Interval, PotentialPair};
use crate::sparse::LinSolveError;

pub use newton::{solve_step, StepSolver};
pub use trajectory::{
    interpolants, interpolation_gap, read_checkpoints, run, run_quiet, write_checkpoints, InterpError,
    InterpValues, Interpolants, RunFailure, Trajectory,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeParams {
    pub h: f64,
    pub t_final: f64,
    pub tau: f64,
    pub sigma: f64,
    pub eps: f64,
    pub newton_tol: f64,
    pub newton_max: usize,
    pub damping_min: f64,
}

impl SchemeParams {
    pub const NEWTON_TOL: f64 = 1e-10;
    pub const NEWTON_MAX: usize = 50;
    pub const DAMPING_MIN: f64 = 1.0 / 1024.0;

    pub fn new(h: f64, t_final: f64, tau: f64, sigma: f64, eps: f64) -> Self {
        SchemeParams {
            h,
            t_final,
            tau,
            sigma,
            eps,
            newton_tol: Self::NEWTON_TOL,
            newton_max: Self::NEWTON_MAX,
            damping_min: Self::DAMPING_MIN,
        }
    }

    /// Number of steps: `T/h` rounded up, ignoring a relative slack of 1e-9.
    pub fn n_steps(&self) -> usize {
        let q = self.t_final / self.h;
        (q - 1e-9 * q.max(1.0)).ceil().max(1.0) as usize
    }

    /// Parameter ranges; returns one message per problem.
    pub fn check(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.h > 0.0 && self.h.is_finite()) {
            out.push(format!("time step h = {} must be positive", self.h));
        }
        if !(self.t_final >= self.h * (1.0 - 1e-12)) || !self.t_final.is_finite() {
            out.push(format!("horizon T = {} must be at least h = {}", self.t_final, self.h));
        }
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            out.push(format!("eps = {} must lie in (0, 1]", self.eps));
        }
        for (name, v) in [("tau", self.tau), ("sigma", self.sigma)] {
            if !(0.0..=1.0).contains(&v) {
                out.push(format!("{name} = {v} must lie in [0, 1]"));
            }
        }
        if !(self.newton_tol > 0.0) {
            out.push(format!("newton_tol = {} must be positive", self.newton_tol));
        }
        if self.newton_max == 0 {
            out.push("newton_max must be at least 1".into());
        }
        if !(self.damping_min > 0.0 && self.damping_min <= 1.0) {
            out.push(format!("damping_min = {} must lie in (0, 1]", self.damping_min));
        }
        out
    }
}

/// Time-dependent nodal source.
#[derive(Clone)]
pub enum Source {
    Zero,
    Constant(Vec<f64>),
    /// `f(t) = t * v`.
    Ramp(Vec<f64>),
    Callback(Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>),
}

impl fmt::Debug for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Zero => write!(f, "Zero"),
            Source::Constant(v) => write!(f, "Constant(len {})", v.len()),
            Source::Ramp(v) => write!(f, "Ramp(len {})", v.len()),
            Source::Callback(_) => write!(f, "Callback"),
        }
    }
}

impl Source {
    pub fn eval(&self, t: f64, len: usize) -> Vec<f64> {
        match self {
            Source::Zero => vec![0.0; len],
            Source::Constant(v) => v.clone(),
            Source::Ramp(v) => v.iter().map(|x| t * x).collect(),
            Source::Callback(cb) => cb(t),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Source::Zero)
    }
}

/// Average of `src` over `[n h, (n+1) h]` by 3-point Gauss quadrature.
pub fn average_source(src: &Source, n: usize, h: f64, len: usize) -> Vec<f64> {
    match src {
        Source::Zero => vec![0.0; len],
        Source::Constant(v) => v.clone(),
        _ => {
            let mid = (n as f64 + 0.5) * h;
            let off = 0.5 * h * (0.6f64).sqrt();
            let nodes = [(mid - off, 5.0 / 18.0), (mid, 8.0 / 18.0), (mid + off, 5.0 / 18.0)];
            let mut out = vec![0.0; len];
            for (t, wgt) in nodes {
                let v = src.eval(t, len);
                for (o, x) in out.iter_mut().zip(&v) {
                    *o += wgt * x;
                }
            }
            out
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProblemData {
    pub phi0: Vec<f64>,
    pub psi0: Vec<f64>,
    pub f: Source,
    pub g: Source,
    pub pair: PotentialPair,
}

impl ProblemData {
    /// Initial data from a bulk field; the boundary values are its trace.
    pub fn from_bulk(ops: &DiscreteOperators, phi0: Vec<f64>, pair: PotentialPair) -> Self {
        let psi0 = ops.trace(&phi0);
        ProblemData { phi0, psi0, f: Source::Zero, g: Source::Zero, pair }
    }

    pub fn with_sources(mut self, f: Source, g: Source) -> Self {
        self.f = f;
        self.g = g;
        self
    }
}

/// One time level. `psi` always equals `trace(phi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeState {
    pub n: usize,
    pub t: f64,
    pub phi: Vec<f64>,
    pub mu: Vec<f64>,
    pub psi: Vec<f64>,
    pub w: Vec<f64>,
}

impl SchemeState {
    /// Level 0 with `mu = w = 0`.
    pub fn initial(data: &ProblemData) -> Self {
        SchemeState {
            n: 0,
            t: 0.0,
            mu: vec![0.0; data.phi0.len()],
            w: vec![0.0; data.psi0.len()],
            phi: data.phi0.clone(),
            psi: data.psi0.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// Residual evaluations that ended a Newton round; 1 for an exact initial guess.
    pub newton_iters: usize,
    pub final_residual: f64,
    pub guard_ok: bool,
    pub linsolves: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepError {
    #[error("Newton stalled after {iters} iterations at residual {residual:e}")]
    NewtonFailure { iters: usize, residual: f64 },
    #[error(transparent)]
    LinSolve(#[from] LinSolveError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Fem(#[from] DiskFemError),
    #[error("state length {got} does not match {expected}")]
    Dimension { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepGuard {
    pub h_max: f64,
    pub ok: bool,
    /// Set when `tau` or `sigma` vanishes.
    pub outside_theory: bool,
}

impl StepGuard {
    pub fn reason(&self) -> Option<&'static str> {
        if self.outside_theory {
            Some("outside discrete well-posedness theory (tau or sigma is zero)")
        } else if !self.ok {
            Some("time step exceeds the well-posedness bound")
        } else {
            None
        }
    }
}

/// `h_max = min(tau/(2L), sigma/(2L_Γ))`; the step is admissible when `h < h_max`.
pub fn step_guard(params: &SchemeParams, pair: &PotentialPair) -> StepGuard {
    let (l, lg) = pair.lipschitz();
    let bound = |visc: f64, lip: f64| if lip == 0.0 { f64::INFINITY } else { visc / (2.0 * lip) };
    let h_max = bound(params.tau, l).min(bound(params.sigma, lg));
    let outside_theory = params.tau == 0.0 || params.sigma == 0.0;
    StepGuard { h_max, ok: !outside_theory && params.h < h_max, outside_theory }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Bulk,
    Boundary,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Bulk => "bulk",
            Side::Boundary => "boundary",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Dimension { side: Side, expected: usize, got: usize },
    TraceMismatch { node: usize, vertex: usize, phi: f64, psi: f64 },
    MeanNotInterior { side: Side, mean: f64, domain: Interval },
    InfiniteEnergy { side: Side, node: usize, value: f64 },
    Parameter(String),
    Compatibility { worst_slack: f64 },
    StrongNotBounded { side: Side, norms: Vec<f64> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Dimension { side, expected, got } => {
                write!(f, "{side} field has length {got}, expected {expected}")
            }
            Violation::TraceMismatch { node, vertex, phi, psi } => write!(
                f,
                "boundary node {node} (bulk vertex {vertex}): psi0 = {psi} differs from the trace phi0 = {phi}"
            ),
            Violation::MeanNotInterior { side, mean, domain } => {
                write!(f, "{side} mean {mean} is not in the interior of {domain}")
            }
            Violation::InfiniteEnergy { side, node, value } => {
                write!(f, "{side} node {node} value {value} has infinite potential energy")
            }
            Violation::Parameter(msg) => f.write_str(msg),
            Violation::Compatibility { worst_slack } => {
                write!(f, "bulk/boundary compatibility violated (worst slack {worst_slack:e})")
            }
            Violation::StrongNotBounded { side, norms } => {
                write!(f, "{side} initial chemical potential does not plateau as eps decreases: {norms:?}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("validation failed: {}", .violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
pub struct ValidationFailure {
    pub violations: Vec<Violation>,
}

/// H1 norms of the initial chemical potentials along a decreasing eps ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct StrongCheck {
    pub eps: Vec<f64>,
    pub bulk: Vec<f64>,
    pub boundary: Vec<f64>,
    pub plateau: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub guard: StepGuard,
    pub strong: Option<StrongCheck>,
}

/// Relative growth allowed between the last two rungs of the strong-check ladder.
pub const PLATEAU_TOL: f64 = 0.1;
const STRONG_LADDER: usize = 4;
const COMPAT_SAMPLES: usize = 2001;

/// Checks initial data and parameters. With `strong`, additionally evaluates
/// the initial chemical potentials `-Δphi0 + beta_eps(phi0) + pi(phi0) - f(0)`
/// (and the boundary analogue) for eps, eps/2, eps/4, eps/8 and requires
/// their H1 norms to plateau.
pub fn validate(
    data: &ProblemData,
    params: &SchemeParams,
    ops: &DiscreteOperators,
    strong: bool,
) -> Result<ValidationReport, ValidationFailure> {
    let mut v: Vec<Violation> = params.check().into_iter().map(Violation::Parameter).collect();
    let (n, nb) = (ops.n_bulk(), ops.n_bdry());
    if data.phi0.len() != n {
        v.push(Violation::Dimension { side: Side::Bulk, expected: n, got: data.phi0.len() });
    }
    if data.psi0.len() != nb {
        v.push(Violation::Dimension { side: Side::Boundary, expected: nb, got: data.psi0.len() });
    }
    if !v.is_empty() {
        return Err(ValidationFailure { violations: v });
    }

    if let Some((node, &vertex)) =
        ops.trace_map.iter().enumerate().find(|&(k, &i)| data.phi0[i] != data.psi0[k])
    {
        v.push(Violation::TraceMismatch { node, vertex, phi: data.phi0[vertex], psi: data.psi0[node] });
    }

    let pair = &data.pair;
    let sides = [
        (Side::Bulk, &data.phi0, pair.bulk, ops.mean_bulk(&data.phi0)),
        (Side::Boundary, &data.psi0, pair.boundary, ops.mean_bdry(&data.psi0)),
    ];
    for (side, field, pot, mean) in sides {
        let domain = pot.graph.domain();
        if !domain.contains_interior(mean) {
            v.push(Violation::MeanNotInterior { side, mean, domain });
        }
        if let Some((node, &value)) = field.iter().enumerate().find(|(_, &x)| !pot.graph.primitive(x).is_finite()) {
            v.push(Violation::InfiniteEnergy { side, node, value });
        }
    }

    let compat = crate::graphs::check_compatibility(pair, params.eps.clamp(f64::MIN_POSITIVE, 1.0), COMPAT_SAMPLES);
    if !compat.passes() {
        v.push(Violation::Compatibility { worst_slack: compat.worst_slack() });
    }

    let mut strong_check = None;
    if strong && v.is_empty() {
        match strong_norms(data, params, ops) {
            Ok(check) => {
                if !check.plateau {
                    v.push(Violation::StrongNotBounded { side: Side::Bulk, norms: check.bulk.clone() });
                    v.push(Violation::StrongNotBounded { side: Side::Boundary, norms: check.boundary.clone() });
                }
                strong_check = Some(check);
            }
            Err(e) => v.push(Violation::Parameter(format!("strong check failed: {e}"))),
        }
    }

    if v.is_empty() {
        Ok(ValidationReport { guard: step_guard(params, pair), strong: strong_check })
    } else {
        Err(ValidationFailure { violations: v })
    }
}

fn strong_norms(data: &ProblemData, params: &SchemeParams, ops: &DiscreteOperators) -> Result<StrongCheck, StepError> {
    let (n, nb) = (ops.n_bulk(), ops.n_bdry());
    let f0 = data.f.eval(0.0, n);
    let g0 = data.g.eval(0.0, nb);
    let eps: Vec<f64> = (0..STRONG_LADDER).map(|k| params.eps / (1u32 << k) as f64).collect();
    let mut bulk = Vec::new();
    let mut boundary = Vec::new();
    for &e in &eps {
        let mut rhs = ops.stiff_bulk.mul_vec(&data.phi0);
        let mf = ops.mass_bulk.mul_vec(&f0);
        for i in 0..n {
            let (force, _) = data.pair.bulk.force(e, data.phi0[i])?;
            rhs[i] += ops.lumped_bulk[i] * force - mf[i];
        }
        bulk.push(ops.norms_bulk(&ops.mass_solve_bulk(&rhs)?).h1);

        let mut rhs = ops.stiff_bdry.mul_vec(&data.psi0);
        let mg = ops.mass_bdry.mul_vec(&g0);
        for k in 0..nb {
            let (force, _) = data.pair.boundary.force(data.pair.eps_boundary(e), data.psi0[k])?;
            rhs[k] += ops.lumped_bdry[k] * force - mg[k];
        }
        boundary.push(ops.norms_bdry(&ops.mass_solve_bdry(&rhs)?).h1);
    }
    let flat = |xs: &[f64]| {
        let (a, b) = (xs[xs.len() - 2], xs[xs.len() - 1]);
        b <= a * (1.0 + PLATEAU_TOL) + 1e-12
    };
    let plateau = flat(&bulk) && flat(&boundary);
    Ok(StrongCheck { eps, bulk, boundary, plateau })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diskfem::{assemble, gen_disk_mesh};

    #[test]
    fn guard_examples() {
        let p = SchemeParams::new(1e-3, 0.25, 0.1, 0.1, 0.1);
        let g = step_guard(&p, &PotentialPair::regular());
        assert!((g.h_max - 0.05).abs() < 1e-15 && g.ok);

        let mut flat = PotentialPair::regular();
        flat.bulk.perturbation.slope = 0.0;
        flat.boundary.perturbation.slope = 0.0;
        let g = step_guard(&p, &flat);
        assert!(g.h_max.is_infinite() && g.ok);

        let p0 = SchemeParams { tau: 0.0, ..p };
        let g = step_guard(&p0, &PotentialPair::regular());
        assert!(!g.ok && g.outside_theory && g.reason().is_some());
    }

    #[test]
    fn source_averages() {
        let v = vec![1.0, -2.0];
        assert_eq!(average_source(&Source::Constant(v.clone()), 3, 0.1, 2), v);
        assert_eq!(average_source(&Source::Zero, 3, 0.1, 2), vec![0.0, 0.0]);
        let h = 0.1;
        let avg = average_source(&Source::Ramp(v.clone()), 3, h, 2);
        for (a, x) in avg.iter().zip(&v) {
            assert!((a - 3.5 * h * x).abs() < 1e-15);
        }
        // cubic in time: Gauss-3 is exact; oracle is the closed-form integral
        let cb = Source::Callback(Arc::new(|t: f64| vec![t * t * t]));
        let (a, b) = (2.0 * h, 3.0 * h);
        let exact = (b.powi(4) - a.powi(4)) / (4.0 * h);
        assert!((average_source(&cb, 2, h, 1)[0] - exact).abs() < 1e-15);
    }

    #[test]
    fn step_count() {
        assert_eq!(SchemeParams::new(1e-3, 0.25, 0.1, 0.1, 0.1).n_steps(), 250);
        assert_eq!(SchemeParams::new(0.1, 0.1, 0.1, 0.1, 0.1).n_steps(), 1);
        assert_eq!(SchemeParams::new(4e-3, 0.24, 0.1, 0.1, 0.1).n_steps(), 60);
    }

    #[test]
    fn validation_examples() {
        let ops = assemble(&gen_disk_mesh(3, 12).unwrap()).unwrap();
        let p = SchemeParams::new(1e-3, 0.01, 0.1, 0.1, 0.1);
        let obstacle = PotentialPair::double_obstacle(1.0).unwrap();
        let zero = ProblemData::from_bulk(&ops, vec![0.0; ops.n_bulk()], obstacle);
        validate(&zero, &p, &ops, false).unwrap();

        let one = ProblemData::from_bulk(&ops, vec![1.0; ops.n_bulk()], obstacle);
        let err = validate(&one, &p, &ops, false).unwrap_err();
        assert!(err.violations.iter().any(|v| matches!(v, Violation::MeanNotInterior { side: Side::Bulk, .. })));

        let mut bad = zero.clone();
        bad.psi0[5] = 0.25;
        let err = validate(&bad, &p, &ops, false).unwrap_err();
        assert!(matches!(err.violations[0], Violation::TraceMismatch { node: 5, .. }), "{err}");

        let mut far = zero.clone();
        far.phi0[0] = 1.5;
        let err = validate(&far, &p, &ops, false).unwrap_err();
        assert!(matches!(err.violations[0], Violation::InfiniteEnergy { side: Side::Bulk, node: 0, .. }));

        let bad_params = SchemeParams { tau: 1.5, ..p };
        assert!(validate(&zero, &bad_params, &ops, false).is_err());
    }

    #[test]
    fn strong_check_plateaus_for_smooth_data() {
        let ops = assemble(&gen_disk_mesh(4, 16).unwrap()).unwrap();
        let phi0: Vec<f64> = ops.mesh.vertices.iter().map(|p| 0.3 * p[0]).collect();
        let data = ProblemData::from_bulk(&ops, phi0, PotentialPair::double_obstacle(1.0).unwrap());
        let p = SchemeParams::new(1e-3, 0.01, 0.1, 0.1, 0.1);
        let rep = validate(&data, &p, &ops, true).unwrap();
        let s = rep.strong.unwrap();
        assert!(s.plateau);
        // inside the obstacle the regularised force does not depend on eps
        assert!((s.bulk[0] - s.bulk[3]).abs() < 1e-9 * s.bulk[0]);
    }
}
