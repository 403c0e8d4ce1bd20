//! Maximal monotone graphs of double-well type and their Moreau-Yosida machinery.
//!
//! Every potential is split as `W = beta_hat + pi_hat`, with `beta_hat` convex,
//! lower semicontinuous, `beta_hat(0) = 0`, and `pi_hat` a concave quadratic
//! (plus a constant so that `W` matches the usual normalisation). Three
//! families are supported:
//!
//! | kind            | `beta`                 | domain    | `pi(r)`      |
//! |-----------------|------------------------|-----------|--------------|
//! | Regular         | `r^3`                  | all of R  | `-r`         |
//! | Logarithmic(c1) | `ln((1+r)/(1-r))`      | `(-1, 1)` | `-2 c1 r`    |
//! | DoubleObstacle  | subdifferential of the indicator of `[-1, 1]` | `[-1, 1]` | `-2 c2 r` |

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Residual tolerance of the scalar resolvent solve.
pub const RESOLVENT_TOL: f64 = 1e-12;
const RESOLVENT_MAX_ITERS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("resolvent root-find did not converge for r = {r} (eps = {eps}); last residual {residual:e}")]
    IterationFailure { r: f64, eps: f64, residual: f64 },
    #[error("{r} lies outside the effective domain {domain}")]
    OutOfDomain { r: f64, domain: Interval },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// A real interval, either closed, open, or the whole line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub closed: bool,
}

impl Interval {
    pub const REAL_LINE: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
        closed: false,
    };

    pub fn open(lo: f64, hi: f64) -> Self {
        Interval { lo, hi, closed: false }
    }

    pub fn closed(lo: f64, hi: f64) -> Self {
        Interval { lo, hi, closed: true }
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn contains(&self, r: f64) -> bool {
        if self.closed {
            r >= self.lo && r <= self.hi
        } else {
            r > self.lo && r < self.hi
        }
    }

    pub fn contains_interior(&self, r: f64) -> bool {
        r > self.lo && r < self.hi
    }

    /// `self ⊆ other`, comparing endpoints and their closedness.
    pub fn is_subset_of(&self, other: &Interval) -> bool {
        let lo_ok = self.lo > other.lo || (self.lo == other.lo && (other.closed || !self.closed));
        let hi_ok = self.hi < other.hi || (self.hi == other.hi && (other.closed || !self.closed));
        lo_ok && hi_ok
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.is_bounded() {
            return write!(f, "(-inf, inf)");
        }
        let (l, r) = if self.closed { ('[', ']') } else { ('(', ')') };
        write!(f, "{l}{}, {}{r}", self.lo, self.hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GraphKind {
    Regular,
    Logarithmic { c1: f64 },
    DoubleObstacle { c2: f64 },
}

/// One maximal monotone graph `beta = ∂beta_hat`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotoneGraph {
    kind: GraphKind,
}

impl MonotoneGraph {
    pub const DEFAULT_C1: f64 = 2.0;
    pub const DEFAULT_C2: f64 = 1.0;

    pub fn regular() -> Self {
        MonotoneGraph { kind: GraphKind::Regular }
    }

    pub fn logarithmic(c1: f64) -> Result<Self, GraphError> {
        if !(c1 > 1.0) || !c1.is_finite() {
            return Err(GraphError::InvalidParameter(format!("c1 must exceed 1, got {c1}")));
        }
        Ok(MonotoneGraph { kind: GraphKind::Logarithmic { c1 } })
    }

    pub fn double_obstacle(c2: f64) -> Result<Self, GraphError> {
        if !(c2 > 0.0) || !c2.is_finite() {
            return Err(GraphError::InvalidParameter(format!("c2 must be positive, got {c2}")));
        }
        Ok(MonotoneGraph { kind: GraphKind::DoubleObstacle { c2 } })
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    /// Effective domain `D(beta)`.
    pub fn domain(&self) -> Interval {
        match self.kind {
            GraphKind::Regular => Interval::REAL_LINE,
            GraphKind::Logarithmic { .. } => Interval::open(-1.0, 1.0),
            GraphKind::DoubleObstacle { .. } => Interval::closed(-1.0, 1.0),
        }
    }

    /// Convex primitive `beta_hat(r)`, `+inf` where it is not finite.
    pub fn primitive(&self, r: f64) -> f64 {
        match self.kind {
            GraphKind::Regular => 0.25 * r.powi(4),
            GraphKind::Logarithmic { .. } => {
                if r.abs() > 1.0 {
                    f64::INFINITY
                } else {
                    xlogx_pair(r)
                }
            }
            GraphKind::DoubleObstacle { .. } => {
                if r.abs() <= 1.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Minimal-modulus element of `beta(r)`.
    pub fn minimal_section(&self, r: f64) -> Result<f64, GraphError> {
        let domain = self.domain();
        if !domain.contains(r) {
            return Err(GraphError::OutOfDomain { r, domain });
        }
        Ok(match self.kind {
            GraphKind::Regular => r * r * r,
            GraphKind::Logarithmic { .. } => r.ln_1p() - (-r).ln_1p(),
            // 0 is in beta(±1) = [0, inf) / (-inf, 0]
            GraphKind::DoubleObstacle { .. } => 0.0,
        })
    }

    /// Derivative of the single-valued part on the interior of the domain.
    fn slope_interior(&self, r: f64) -> f64 {
        match self.kind {
            GraphKind::Regular => 3.0 * r * r,
            GraphKind::Logarithmic { .. } => 2.0 / ((1.0 - r) * (1.0 + r)),
            GraphKind::DoubleObstacle { .. } => 0.0,
        }
    }

    /// `J = (I + eps_eff * beta)^{-1}(r)`.
    pub fn resolvent(&self, eps_eff: f64, r: f64) -> Result<f64, GraphError> {
        if !(eps_eff > 0.0) {
            return Err(GraphError::InvalidParameter(format!(
                "resolvent parameter must be positive, got {eps_eff}"
            )));
        }
        if !r.is_finite() {
            return Err(GraphError::InvalidParameter(format!("non-finite argument {r}")));
        }
        match self.kind {
            GraphKind::DoubleObstacle { .. } => Ok(r.clamp(-1.0, 1.0)),
            GraphKind::Regular => {
                let (lo, hi) = if r >= 0.0 { (0.0, r) } else { (r, 0.0) };
                solve_monotone(lo, hi, r, eps_eff, |j| (j + eps_eff * j * j * j - r, 1.0 + 3.0 * eps_eff * j * j))
            }
            GraphKind::Logarithmic { .. } => {
                let lo_lim = (-1.0f64).next_up();
                let hi_lim = 1.0f64.next_down();
                let g = |j: f64| {
                    let beta = j.ln_1p() - (-j).ln_1p();
                    (j + eps_eff * beta - r, 1.0 + eps_eff * 2.0 / ((1.0 - j) * (1.0 + j)))
                };
                let (lo, hi) = if r >= 0.0 { (0.0, r.min(hi_lim)) } else { (r.max(lo_lim), 0.0) };
                // root closer to ±1 than the last representable double
                if r > 0.0 && g(hi).0 < 0.0 {
                    return Ok(hi);
                }
                if r < 0.0 && g(lo).0 > 0.0 {
                    return Ok(lo);
                }
                solve_monotone(lo, hi, r, eps_eff, g)
            }
        }
    }

    /// `(r - J(r)) / eps_eff`, the Yosida approximation with parameter `eps_eff`.
    pub fn yosida(&self, eps_eff: f64, r: f64) -> Result<f64, GraphError> {
        let j = self.resolvent(eps_eff, r)?;
        Ok((r - j) / eps_eff)
    }

    /// Bulk Yosida approximation `beta_eps`.
    pub fn yosida_bulk(&self, eps: f64, r: f64) -> Result<f64, GraphError> {
        check_eps(eps)?;
        self.yosida(eps, r)
    }

    /// Boundary Yosida approximation `beta_{Γ,eps}`, regularised with `eps * rho`.
    pub fn yosida_boundary(&self, eps: f64, rho: f64, r: f64) -> Result<f64, GraphError> {
        check_eps(eps)?;
        if !(rho > 0.0) {
            return Err(GraphError::InvalidParameter(format!("rho must be positive, got {rho}")));
        }
        self.yosida(eps * rho, r)
    }

    /// Derivative of the Yosida approximation. At the obstacle kinks `|r| = 1`
    /// the generalized derivative 0 is returned.
    pub fn yosida_derivative(&self, eps_eff: f64, r: f64) -> Result<f64, GraphError> {
        match self.kind {
            GraphKind::DoubleObstacle { .. } => Ok(if r.abs() <= 1.0 { 0.0 } else { 1.0 / eps_eff }),
            _ => {
                let j = self.resolvent(eps_eff, r)?;
                let s = self.slope_interior(j);
                Ok(s / (1.0 + eps_eff * s))
            }
        }
    }

    /// Moreau envelope `beta_hat_eps(r) = |r - J|^2 / (2 eps_eff) + beta_hat(J)`.
    pub fn moreau_envelope(&self, eps_eff: f64, r: f64) -> Result<f64, GraphError> {
        let j = self.resolvent(eps_eff, r)?;
        let d = r - j;
        Ok(d * d / (2.0 * eps_eff) + self.primitive(j))
    }

    /// The concave companion `pi` that turns `beta_hat` into the standard double well.
    pub fn default_perturbation(&self) -> Perturbation {
        match self.kind {
            GraphKind::Regular => Perturbation { slope: -1.0, offset: 0.25 },
            GraphKind::Logarithmic { c1 } => Perturbation { slope: -2.0 * c1, offset: 0.0 },
            GraphKind::DoubleObstacle { c2 } => Perturbation { slope: -2.0 * c2, offset: c2 },
        }
    }
}

fn check_eps(eps: f64) -> Result<(), GraphError> {
    if eps > 0.0 && eps <= 1.0 {
        Ok(())
    } else {
        Err(GraphError::InvalidParameter(format!("eps must lie in (0, 1], got {eps}")))
    }
}

/// `(1+r) ln(1+r) + (1-r) ln(1-r)` on `[-1, 1]`.
fn xlogx_pair(r: f64) -> f64 {
    let a = if r == -1.0 { 0.0 } else { (1.0 + r) * r.ln_1p() };
    let b = if r == 1.0 { 0.0 } else { (1.0 - r) * (-r).ln_1p() };
    a + b
}

/// Safeguarded Newton on a strictly increasing scalar function with a sign
/// change on `[lo, hi]`. `g` returns `(value, derivative)`.
fn solve_monotone<G>(mut lo: f64, mut hi: f64, r: f64, eps: f64, g: G) -> Result<f64, GraphError>
where
    G: Fn(f64) -> (f64, f64),
{
    let tol = RESOLVENT_TOL * r.abs().max(1.0);
    let (g_lo, _) = g(lo);
    if g_lo.abs() <= tol {
        return Ok(lo);
    }
    let (g_hi, _) = g(hi);
    if g_hi.abs() <= tol {
        return Ok(hi);
    }
    let mut x = 0.5 * (lo + hi);
    let mut last = f64::INFINITY;
    for _ in 0..RESOLVENT_MAX_ITERS {
        let (gx, dx) = g(x);
        last = gx;
        if gx.abs() <= tol {
            return Ok(x);
        }
        if gx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // bracket collapsed onto adjacent doubles
            return Ok(if g(lo).0.abs() <= g(hi).0.abs() { lo } else { hi });
        }
        let newton = x - gx / dx;
        x = if newton > lo && newton < hi && dx.is_finite() { newton } else { mid };
    }
    Err(GraphError::IterationFailure { r, eps, residual: last })
}

/// Linear Lipschitz perturbation `pi(r) = slope * r`, primitive `slope r^2 / 2 + offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    pub slope: f64,
    pub offset: f64,
}

impl Perturbation {
    pub fn value(&self, r: f64) -> f64 {
        self.slope * r
    }

    pub fn primitive(&self, r: f64) -> f64 {
        0.5 * self.slope * r * r + self.offset
    }

    pub fn lipschitz(&self) -> f64 {
        self.slope.abs()
    }
}

/// A double-well potential `W = beta_hat + pi_hat`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Potential {
    pub graph: MonotoneGraph,
    pub perturbation: Perturbation,
}

impl Potential {
    pub fn new(graph: MonotoneGraph) -> Self {
        Potential { graph, perturbation: graph.default_perturbation() }
    }

    /// `W(r)`, `+inf` outside the domain of `beta_hat`.
    pub fn well(&self, r: f64) -> f64 {
        let b = self.graph.primitive(r);
        if b.is_infinite() {
            b
        } else {
            b + self.perturbation.primitive(r)
        }
    }

    /// Regularised well `beta_hat_eps + pi_hat`.
    pub fn well_regularized(&self, eps_eff: f64, r: f64) -> Result<f64, GraphError> {
        Ok(self.graph.moreau_envelope(eps_eff, r)? + self.perturbation.primitive(r))
    }

    /// `beta_eps(r) + pi(r)` and its derivative.
    pub fn force(&self, eps_eff: f64, r: f64) -> Result<(f64, f64), GraphError> {
        let b = self.graph.yosida(eps_eff, r)?;
        let db = self.graph.yosida_derivative(eps_eff, r)?;
        Ok((b + self.perturbation.value(r), db + self.perturbation.slope))
    }

    pub fn lipschitz(&self) -> f64 {
        self.perturbation.lipschitz()
    }
}

/// Bulk and boundary potentials together with the compatibility constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialPair {
    pub bulk: Potential,
    pub boundary: Potential,
    pub rho: f64,
    pub c0: f64,
}

/// Preset family names accepted on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PresetName {
    Regular,
    Log,
    Obstacle,
}

impl FromStr for PresetName {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "regular" => Ok(PresetName::Regular),
            "log" => Ok(PresetName::Log),
            "obstacle" => Ok(PresetName::Obstacle),
            other => Err(GraphError::InvalidParameter(format!("unknown potential preset '{other}'"))),
        }
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PresetName::Regular => "regular",
            PresetName::Log => "log",
            PresetName::Obstacle => "obstacle",
        })
    }
}

impl PresetName {
    pub fn graph(&self, c1: f64, c2: f64) -> Result<MonotoneGraph, GraphError> {
        match self {
            PresetName::Regular => Ok(MonotoneGraph::regular()),
            PresetName::Log => MonotoneGraph::logarithmic(c1),
            PresetName::Obstacle => MonotoneGraph::double_obstacle(c2),
        }
    }
}

impl PotentialPair {
    /// Same potential in the bulk and on the boundary; the compatibility
    /// check passes with `rho = 1`, `c0 = 0`.
    pub fn same(potential: Potential) -> Self {
        PotentialPair { bulk: potential, boundary: potential, rho: 1.0, c0: 0.0 }
    }

    pub fn regular() -> Self {
        Self::same(Potential::new(MonotoneGraph::regular()))
    }

    pub fn logarithmic(c1: f64) -> Result<Self, GraphError> {
        Ok(Self::same(Potential::new(MonotoneGraph::logarithmic(c1)?)))
    }

    pub fn double_obstacle(c2: f64) -> Result<Self, GraphError> {
        Ok(Self::same(Potential::new(MonotoneGraph::double_obstacle(c2)?)))
    }

    /// Builds a preset pair. Mixed pairs without explicit constants fall back
    /// to sampled constants for which the compatibility check passes; pairs
    /// that violate the domain inclusion are rejected.
    pub fn preset(
        bulk: PresetName,
        boundary: PresetName,
        c1: f64,
        c2: f64,
        rho: Option<f64>,
        c0: Option<f64>,
    ) -> Result<Self, GraphError> {
        let gb = bulk.graph(c1, c2)?;
        let gg = boundary.graph(c1, c2)?;
        if !gg.domain().is_subset_of(&gb.domain()) {
            return Err(GraphError::InvalidParameter(format!(
                "boundary domain {} is not contained in bulk domain {}",
                gg.domain(),
                gb.domain()
            )));
        }
        let (rho_d, c0_d) = match (bulk, boundary) {
            (a, b) if a == b => (1.0, 0.0),
            (PresetName::Regular, PresetName::Obstacle) => (1.0, 1.0),
            (PresetName::Regular, PresetName::Log) => (0.5, 0.0),
            _ => (1.0, 0.0),
        };
        let rho = rho.unwrap_or(rho_d);
        let c0 = c0.unwrap_or(c0_d);
        if !(rho > 0.0) || !(c0 >= 0.0) {
            return Err(GraphError::InvalidParameter(format!("need rho > 0 and c0 >= 0, got {rho}, {c0}")));
        }
        Ok(PotentialPair { bulk: Potential::new(gb), boundary: Potential::new(gg), rho, c0 })
    }

    /// Regularisation parameter of the boundary graph.
    pub fn eps_boundary(&self, eps: f64) -> f64 {
        eps * self.rho
    }

    pub fn lipschitz(&self) -> (f64, f64) {
        (self.bulk.lipschitz(), self.boundary.lipschitz())
    }
}

/// Smallest slack found by a sampled check and where it occurred.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Margin {
    pub slack: f64,
    pub at: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompatibilityReport {
    pub domain_ok: bool,
    /// `rho |beta_Γ°| + c0 - |beta°|` over `D(beta_Γ)`.
    pub section: Margin,
    /// `rho |beta_{Γ,eps}| + c0 - |beta_eps|` over a window of the real line.
    pub yosida: Margin,
}

impl CompatibilityReport {
    pub const TOL: f64 = 1e-12;

    pub fn worst_slack(&self) -> f64 {
        self.section.slack.min(self.yosida.slack)
    }

    /// Size of the worst violation, 0 when none.
    pub fn violation(&self) -> f64 {
        (-self.worst_slack()).max(0.0)
    }

    pub fn passes(&self) -> bool {
        self.domain_ok && self.worst_slack() >= -Self::TOL
    }
}

/// Half-width of the real-line window used for sampling unbounded domains.
const SAMPLE_WINDOW: f64 = 4.0;

/// `samples` points spanning `domain`, endpoints included only when closed.
pub fn sample_points(domain: &Interval, samples: usize) -> Vec<f64> {
    let samples = samples.max(1);
    let (lo, hi) = if domain.is_bounded() { (domain.lo, domain.hi) } else { (-SAMPLE_WINDOW, SAMPLE_WINDOW) };
    if samples == 1 {
        return vec![0.5 * (lo + hi)];
    }
    if domain.closed {
        (0..samples).map(|i| lo + (hi - lo) * i as f64 / (samples - 1) as f64).collect()
    } else {
        (0..samples).map(|i| lo + (hi - lo) * (i as f64 + 0.5) / samples as f64).collect()
    }
}

/// Sampled check of the compatibility inequalities between bulk and boundary
/// graphs, for the minimal sections and for the Yosida approximations.
pub fn check_compatibility(pair: &PotentialPair, eps: f64, samples: usize) -> CompatibilityReport {
    let gb = pair.bulk.graph;
    let gg = pair.boundary.graph;
    let domain_ok = gg.domain().is_subset_of(&gb.domain());

    let mut section = Margin { slack: f64::INFINITY, at: f64::NAN };
    for r in sample_points(&gg.domain(), samples) {
        let (Ok(b), Ok(bg)) = (gb.minimal_section(r), gg.minimal_section(r)) else {
            section = Margin { slack: f64::NEG_INFINITY, at: r };
            break;
        };
        let slack = pair.rho * bg.abs() + pair.c0 - b.abs();
        if slack < section.slack {
            section = Margin { slack, at: r };
        }
    }

    let mut yosida = Margin { slack: f64::INFINITY, at: f64::NAN };
    let window = Interval::closed(-SAMPLE_WINDOW, SAMPLE_WINDOW);
    for r in sample_points(&window, samples) {
        let slack = match (gb.yosida(eps, r), gg.yosida(pair.eps_boundary(eps), r)) {
            (Ok(b), Ok(bg)) => pair.rho * bg.abs() + pair.c0 - b.abs(),
            _ => f64::NEG_INFINITY,
        };
        if slack < yosida.slack {
            yosida = Margin { slack, at: r };
        }
    }

    CompatibilityReport { domain_ok, section, yosida }
}
