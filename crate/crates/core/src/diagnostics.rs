//! Energies, masses, a priori monitors and trajectory comparisons.

use std::fmt::Write as _;

use thiserror::Error;

use crate::diskfem::{DiscreteOperators, DiskFemError};
use crate::graphs::{Potential, PotentialPair};
use crate::par;
use crate::stepper::{ProblemData, SchemeState, Side, StepReport, Trajectory};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagError {
    #[error("{side} initial means differ: {a} vs {b}")]
    MeanMismatch { side: Side, a: f64, b: f64 },
    #[error("trajectories are not on compatible time grids: {0}")]
    GridMismatch(String),
    #[error(transparent)]
    Fem(#[from] DiskFemError),
}

/// Tolerance on equal initial means for [`cont_dep`].
pub const MEAN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnergyMode {
    /// `W = beta_hat + pi_hat`, `+inf` outside the domain.
    True,
    /// Moreau envelope of `beta_hat` with parameter `eps` (boundary: `eps * rho`).
    Regularized(f64),
}

fn potential_sum(pot: &Potential, eps_eff: Option<f64>, v: &[f64], weights: &[f64]) -> f64 {
    par::sum_range(v.len(), |i| {
        let w = match eps_eff {
            None => pot.well(v[i]),
            Some(e) => pot.well_regularized(e, v[i]).unwrap_or(f64::NAN),
        };
        weights[i] * w
    })
}

/// `1/2 phi^T K phi + sum_i m_i W(phi_i)` plus the boundary analogue, with
/// lumped weights `m_i` for the potential only.
pub fn energy(phi: &[f64], psi: &[f64], pair: &PotentialPair, mode: EnergyMode, ops: &DiscreteOperators) -> f64 {
    let (eb, eg) = match mode {
        EnergyMode::True => (None, None),
        EnergyMode::Regularized(eps) => (Some(eps), Some(pair.eps_boundary(eps))),
    };
    0.5 * ops.stiff_bulk.quad(phi)
        + potential_sum(&pair.bulk, eb, phi, &ops.lumped_bulk)
        + 0.5 * ops.stiff_bdry.quad(psi)
        + potential_sum(&pair.boundary, eg, psi, &ops.lumped_bdry)
}

/// Regularised energy plus `h/2 |mu|^2_H + h/2 |w|^2_{H_Γ}`.
pub fn lyapunov(state: &SchemeState, pair: &PotentialPair, eps: f64, h: f64, ops: &DiscreteOperators) -> f64 {
    energy(&state.phi, &state.psi, pair, EnergyMode::Regularized(eps), ops)
        + 0.5 * h * ops.mass_bulk.quad(&state.mu)
        + 0.5 * h * ops.mass_bdry.quad(&state.w)
}

/// `(m_Ω(phi + h mu), m_Γ(psi + h w))`, conserved by the scheme.
pub fn augmented_masses(state: &SchemeState, h: f64, ops: &DiscreteOperators) -> (f64, f64) {
    let bulk: Vec<f64> = state.phi.iter().zip(&state.mu).map(|(p, m)| p + h * m).collect();
    let bdry: Vec<f64> = state.psi.iter().zip(&state.w).map(|(p, w)| p + h * w).collect();
    (ops.mean_bulk(&bulk), ops.mean_bdry(&bdry))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagRecord {
    pub n: usize,
    pub t: f64,
    pub energy_true: f64,
    pub energy_eps: f64,
    pub lyapunov: f64,
    pub mass_bulk_aug: f64,
    pub mass_bdry_aug: f64,
    pub phi_h1: f64,
    pub psi_h1: f64,
    /// 0 for the initial state.
    pub newton_iters: usize,
}

impl DiagRecord {
    pub fn new(
        state: &SchemeState,
        report: Option<&StepReport>,
        pair: &PotentialPair,
        eps: f64,
        h: f64,
        ops: &DiscreteOperators,
    ) -> Self {
        let energy_eps = energy(&state.phi, &state.psi, pair, EnergyMode::Regularized(eps), ops);
        let (mass_bulk_aug, mass_bdry_aug) = augmented_masses(state, h, ops);
        DiagRecord {
            n: state.n,
            t: state.t,
            energy_true: energy(&state.phi, &state.psi, pair, EnergyMode::True, ops),
            energy_eps,
            lyapunov: energy_eps + 0.5 * h * (ops.mass_bulk.quad(&state.mu) + ops.mass_bdry.quad(&state.w)),
            mass_bulk_aug,
            mass_bdry_aug,
            phi_h1: ops.norms_bulk(&state.phi).h1,
            psi_h1: ops.norms_bdry(&state.psi).h1,
            newton_iters: report.map_or(0, |r| r.newton_iters),
        }
    }
}

/// One record per state of the trajectory.
pub fn records(traj: &Trajectory, pair: &PotentialPair, ops: &DiscreteOperators) -> Vec<DiagRecord> {
    let p = traj.params;
    par::map_range(traj.len(), |k| {
        let report = if k == 0 { None } else { traj.reports.get(k - 1) };
        DiagRecord::new(&traj.states[k], report, pair, p.eps, p.h, ops)
    })
}

pub const CSV_HEADER: &str = "n,t,energy_true,energy_eps,lyapunov,mass_bulk_aug,mass_bdry_aug,phi_h1,psi_h1,newton_iters";

/// `{:e}` with 17 significant digits; `inf` for infinite energies.
fn g17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// CSV for every `stride`-th record (and the last).
pub fn to_csv(recs: &[DiagRecord], stride: usize) -> String {
    let stride = stride.max(1);
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    let last = recs.len().saturating_sub(1);
    for (_, r) in recs.iter().enumerate().filter(|(k, _)| k % stride == 0 || *k == last) {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.n,
            g17(r.t),
            g17(r.energy_true),
            g17(r.energy_eps),
            g17(r.lyapunov),
            g17(r.mass_bulk_aug),
            g17(r.mass_bdry_aug),
            g17(r.phi_h1),
            g17(r.psi_h1),
            r.newton_iters
        );
    }
    s
}

/// Implementable part of the uniform a priori bound on the discrete solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AprioriReport {
    pub sup_phi_h1_sq: f64,
    pub sup_psi_h1_sq: f64,
    /// `tau * sum_n h |(phi_{n+1} - phi_n)/h|^2_H`.
    pub tau_dissipation: f64,
    pub sigma_dissipation: f64,
    pub h_sup_mu_sq: f64,
    pub h_sup_w_sq: f64,
    /// `sup_n sum_i m_i beta_hat_eps(phi_i)`.
    pub sup_envelope_bulk: f64,
    pub sup_envelope_bdry: f64,
}

impl AprioriReport {
    pub fn values(&self) -> [f64; 8] {
        [
            self.sup_phi_h1_sq,
            self.sup_psi_h1_sq,
            self.tau_dissipation,
            self.sigma_dissipation,
            self.h_sup_mu_sq,
            self.h_sup_w_sq,
            self.sup_envelope_bulk,
            self.sup_envelope_bdry,
        ]
    }

    pub fn max(&self) -> f64 {
        self.values().into_iter().fold(0.0, f64::max)
    }
}

pub fn apriori_monitor(traj: &Trajectory, pair: &PotentialPair, ops: &DiscreteOperators) -> AprioriReport {
    let p = traj.params;
    let (h, eps) = (p.h, p.eps);
    let envelope = |g: &crate::graphs::MonotoneGraph, e: f64, v: &[f64], wts: &[f64]| {
        par::sum_range(v.len(), |i| wts[i] * g.moreau_envelope(e, v[i]).unwrap_or(f64::NAN))
    };
    let mut r = AprioriReport {
        sup_phi_h1_sq: 0.0,
        sup_psi_h1_sq: 0.0,
        tau_dissipation: 0.0,
        sigma_dissipation: 0.0,
        h_sup_mu_sq: 0.0,
        h_sup_w_sq: 0.0,
        sup_envelope_bulk: 0.0,
        sup_envelope_bdry: 0.0,
    };
    for (k, s) in traj.states.iter().enumerate() {
        r.sup_phi_h1_sq = r.sup_phi_h1_sq.max(ops.norms_bulk(&s.phi).h1.powi(2));
        r.sup_psi_h1_sq = r.sup_psi_h1_sq.max(ops.norms_bdry(&s.psi).h1.powi(2));
        r.h_sup_mu_sq = r.h_sup_mu_sq.max(h * ops.mass_bulk.quad(&s.mu));
        r.h_sup_w_sq = r.h_sup_w_sq.max(h * ops.mass_bdry.quad(&s.w));
        r.sup_envelope_bulk = r.sup_envelope_bulk.max(envelope(&pair.bulk.graph, eps, &s.phi, &ops.lumped_bulk));
        r.sup_envelope_bdry = r
            .sup_envelope_bdry
            .max(envelope(&pair.boundary.graph, pair.eps_boundary(eps), &s.psi, &ops.lumped_bdry));
        if k > 0 {
            let prev = &traj.states[k - 1];
            let dphi: Vec<f64> = s.phi.iter().zip(&prev.phi).map(|(a, b)| (a - b) / h).collect();
            let dpsi: Vec<f64> = s.psi.iter().zip(&prev.psi).map(|(a, b)| (a - b) / h).collect();
            r.tau_dissipation += p.tau * h * ops.mass_bulk.quad(&dphi);
            r.sigma_dissipation += p.sigma * h * ops.mass_bdry.quad(&dpsi);
        }
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContDepReport {
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs`, `None` when `rhs = 0`.
    pub ratio: Option<f64>,
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Solution-difference norms against data-difference norms for two runs on
/// the same grid. `V*` norms are the dual norm of the zero-mean part plus
/// `|measure|^{1/2} |mean|`; `C([0,T]; V*)` is the max over all states and
/// `L2(0,T; .)` sums `h |.|^2` over levels `1..=N` (source averages over
/// levels `0..N`).
pub fn cont_dep(
    a: &Trajectory,
    b: &Trajectory,
    data_a: &ProblemData,
    data_b: &ProblemData,
    ops: &DiscreteOperators,
) -> Result<ContDepReport, DiagError> {
    let checks = [
        (Side::Bulk, ops.mean_bulk(&data_a.phi0), ops.mean_bulk(&data_b.phi0)),
        (Side::Boundary, ops.mean_bdry(&data_a.psi0), ops.mean_bdry(&data_b.psi0)),
    ];
    for (side, ma, mb) in checks {
        if (ma - mb).abs() > MEAN_TOL {
            return Err(DiagError::MeanMismatch { side, a: ma, b: mb });
        }
    }
    let h = a.h();
    if a.len() != b.len() || (a.h() - b.h()).abs() > 1e-12 * h {
        return Err(DiagError::GridMismatch(format!(
            "{} states at h = {} vs {} states at h = {}",
            a.len(),
            a.h(),
            b.len(),
            b.h()
        )));
    }
    let per_state: Vec<(f64, f64, f64, f64)> = par::try_map_range(a.len(), |k| {
        let (sa, sb) = (&a.states[k], &b.states[k]);
        let dphi = diff(&sa.phi, &sb.phi);
        let dpsi = diff(&sa.psi, &sb.psi);
        Ok::<_, DiskFemError>((
            ops.vstar_norm_bulk(&dphi)?,
            ops.vstar_norm_bdry(&dpsi)?,
            ops.norms_bulk(&dphi).h1,
            ops.norms_bdry(&dpsi).h1,
        ))
    })?;
    let max_phi = per_state.iter().map(|x| x.0).fold(0.0, f64::max);
    let max_psi = per_state.iter().map(|x| x.1).fold(0.0, f64::max);
    let l2_phi = (h * per_state[1..].iter().map(|x| x.2 * x.2).sum::<f64>()).sqrt();
    let l2_psi = (h * per_state[1..].iter().map(|x| x.3 * x.3).sum::<f64>()).sqrt();
    let lhs = max_phi + max_psi + l2_phi + l2_psi;

    let (n, nb) = (ops.n_bulk(), ops.n_bdry());
    let steps = a.len() - 1;
    let src: Vec<(f64, f64)> = par::try_map_range(steps, |k| {
        use crate::stepper::average_source;
        let df = diff(&average_source(&data_a.f, k, h, n), &average_source(&data_b.f, k, h, n));
        let dg = diff(&average_source(&data_a.g, k, h, nb), &average_source(&data_b.g, k, h, nb));
        Ok::<_, DiskFemError>((ops.vstar_norm_bulk(&df)?, ops.vstar_norm_bdry(&dg)?))
    })?;
    let l2_f = (h * src.iter().map(|x| x.0 * x.0).sum::<f64>()).sqrt();
    let l2_g = (h * src.iter().map(|x| x.1 * x.1).sum::<f64>()).sqrt();
    let rhs = ops.vstar_norm_bulk(&diff(&data_a.phi0, &data_b.phi0))?
        + ops.vstar_norm_bdry(&diff(&data_a.psi0, &data_b.psi0))?
        + l2_f
        + l2_g;
    Ok(ContDepReport { lhs, rhs, ratio: (rhs > 0.0).then(|| lhs / rhs) })
}

/// Distances between a coarse trajectory and a finer one whose step divides
/// the coarse step. `c_h`: max over shared times of the L2 distances;
/// `l2v`: `sqrt(sum h |.|_{H1}^2)` over shared times `1..=N` at the coarse step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CauchyDistance {
    pub c_h: f64,
    pub l2v: f64,
    pub c_h_bdry: f64,
    pub l2v_bdry: f64,
}

impl CauchyDistance {
    /// Bulk plus boundary `C(0,T; H)` distance.
    pub fn sup_total(&self) -> f64 {
        self.c_h + self.c_h_bdry
    }

    pub fn l2v_total(&self) -> f64 {
        self.l2v + self.l2v_bdry
    }
}

pub fn cauchy_distance(coarse: &Trajectory, fine: &Trajectory, ops: &DiscreteOperators) -> Result<CauchyDistance, DiagError> {
    let (hc, hf) = (coarse.h(), fine.h());
    let nc = coarse.len() - 1;
    let nf = fine.len() - 1;
    let ratio = (hc / hf).round();
    let mismatch = || {
        DiagError::GridMismatch(format!("coarse {nc} steps of {hc}, fine {nf} steps of {hf}"))
    };
    if ratio < 1.0 || (ratio * hf - hc).abs() > 1e-12 * hc || nc == 0 {
        return Err(mismatch());
    }
    let stride = ratio as usize;
    if nf != stride * nc {
        return Err(mismatch());
    }
    if coarse.states[0].phi.len() != fine.states[0].phi.len() || coarse.states[0].psi.len() != fine.states[0].psi.len() {
        return Err(DiagError::GridMismatch("field sizes differ".into()));
    }
    let per: Vec<[f64; 4]> = par::map_range(nc + 1, |k| {
        let (sa, sb) = (&coarse.states[k], &fine.states[k * stride]);
        let nb = ops.norms_bulk(&diff(&sa.phi, &sb.phi));
        let ng = ops.norms_bdry(&diff(&sa.psi, &sb.psi));
        [nb.l2, nb.h1, ng.l2, ng.h1]
    });
    let max = |j: usize| per.iter().map(|x| x[j]).fold(0.0, f64::max);
    let l2 = |j: usize| (hc * per[1..].iter().map(|x| x[j] * x[j]).sum::<f64>()).sqrt();
    Ok(CauchyDistance { c_h: max(0), l2v: l2(1), c_h_bdry: max(2), l2v_bdry: l2(3) })
}

/// `max_n max_i (|phi_i| - 1)_+` over bulk and boundary values.
pub fn obstacle_violation(traj: &Trajectory) -> f64 {
    traj.states
        .iter()
        .flat_map(|s| s.phi.iter().chain(&s.psi))
        .map(|x| (x.abs() - 1.0).max(0.0))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diskfem::{assemble, gen_disk_mesh};
    use crate::stepper::{run_quiet, SchemeParams};

    #[test]
    fn energy_examples() {
        let ops = assemble(&gen_disk_mesh(5, 20).unwrap()).unwrap();
        let (n, nb) = (ops.n_bulk(), ops.n_bdry());
        let pair = PotentialPair::regular();
        let e0 = energy(&vec![0.0; n], &vec![0.0; nb], &pair, EnergyMode::True, &ops);
        let closed_form = 0.25 * ops.mesh.area() + 0.25 * ops.mesh.boundary_length();
        assert!((e0 - closed_form).abs() < 1e-13);
        let e1 = energy(&vec![1.0; n], &vec![1.0; nb], &pair, EnergyMode::True, &ops);
        assert!(e1.abs() < 1e-13);

        let obstacle = PotentialPair::double_obstacle(1.0).unwrap();
        let mut phi = vec![0.5; n];
        phi[3] = 1.2;
        let psi = ops.trace(&phi);
        assert_eq!(energy(&phi, &psi, &obstacle, EnergyMode::True, &ops), f64::INFINITY);
        assert!(energy(&phi, &psi, &obstacle, EnergyMode::Regularized(0.1), &ops).is_finite());
    }

    #[test]
    fn regularized_energy_below_true_energy() {
        let ops = assemble(&gen_disk_mesh(4, 16).unwrap()).unwrap();
        let phi: Vec<f64> = ops.mesh.vertices.iter().map(|p| 0.9 * p[0] - 0.3 * p[1]).collect();
        let psi = ops.trace(&phi);
        for pair in [
            PotentialPair::regular(),
            PotentialPair::logarithmic(2.0).unwrap(),
            PotentialPair::double_obstacle(1.0).unwrap(),
        ] {
            for eps in [0.5, 0.1, 0.02] {
                let t = energy(&phi, &psi, &pair, EnergyMode::True, &ops);
                let r = energy(&phi, &psi, &pair, EnergyMode::Regularized(eps), &ops);
                assert!(r <= t + 1e-12, "{r} > {t}");
            }
        }
    }

    #[test]
    fn lyapunov_scaling() {
        let ops = assemble(&gen_disk_mesh(3, 12).unwrap()).unwrap();
        let pair = PotentialPair::regular();
        let data = ProblemData::from_bulk(&ops, vec![0.1; ops.n_bulk()], pair);
        let mut s = SchemeState::initial(&data);
        let base = lyapunov(&s, &pair, 0.1, 0.01, &ops);
        assert_eq!(base, energy(&s.phi, &s.psi, &pair, EnergyMode::Regularized(0.1), &ops));
        s.mu = vec![1.0; ops.n_bulk()];
        let one = lyapunov(&s, &pair, 0.1, 0.01, &ops) - base;
        s.mu = vec![2.0; ops.n_bulk()];
        let two = lyapunov(&s, &pair, 0.1, 0.01, &ops) - base;
        assert!((two - 4.0 * one).abs() < 1e-14);
    }

    #[test]
    fn stationary_run_diagnostics() {
        let ops = assemble(&gen_disk_mesh(3, 12).unwrap()).unwrap();
        let pair = PotentialPair::regular();
        let data = ProblemData::from_bulk(&ops, vec![0.0; ops.n_bulk()], pair);
        let params = SchemeParams::new(0.01, 0.04, 0.1, 0.1, 0.1);
        let traj = run_quiet(&data, &params, &ops).unwrap();
        let m = apriori_monitor(&traj, &pair, &ops);
        assert_eq!((m.tau_dissipation, m.sigma_dissipation, m.h_sup_mu_sq), (0.0, 0.0, 0.0));
        let d = cauchy_distance(&traj, &traj, &ops).unwrap();
        assert_eq!(d.sup_total() + d.l2v_total(), 0.0);
        let rep = cont_dep(&traj, &traj, &data, &data, &ops).unwrap();
        assert_eq!((rep.lhs, rep.rhs, rep.ratio), (0.0, 0.0, None));
        assert_eq!(obstacle_violation(&traj), 0.0);

        let csv = to_csv(&records(&traj, &pair, &ops), 1);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        assert_eq!(lines.count(), 5);
    }

    #[test]
    fn cont_dep_rejects_mean_shift_and_grid_checks() {
        let ops = assemble(&gen_disk_mesh(2, 8).unwrap()).unwrap();
        let pair = PotentialPair::regular();
        let a = ProblemData::from_bulk(&ops, vec![0.0; ops.n_bulk()], pair);
        let b = ProblemData::from_bulk(&ops, vec![0.1; ops.n_bulk()], pair);
        let p = SchemeParams::new(0.01, 0.02, 0.1, 0.1, 0.1);
        let ta = run_quiet(&a, &p, &ops).unwrap();
        let tb = run_quiet(&b, &p, &ops).unwrap();
        assert!(matches!(cont_dep(&ta, &tb, &a, &b, &ops), Err(DiagError::MeanMismatch { .. })));
        let p3 = SchemeParams::new(0.01, 0.03, 0.1, 0.1, 0.1);
        let tc = run_quiet(&a, &p3, &ops).unwrap();
        assert!(matches!(cauchy_distance(&ta, &tc, &ops), Err(DiagError::GridMismatch(_))));
    }

    #[test]
    fn g17_has_seventeen_digits() {
        assert_eq!(g17(0.1), "1.0000000000000001e-1");
        assert_eq!(g17(f64::INFINITY), "inf");
        assert_eq!(g17(0.1).parse::<f64>().unwrap(), 0.1);
    }
}
