use std::fmt::Write as _;

use thiserror::Error;

use super::{step_guard, ProblemData, SchemeParams, SchemeState, StepError, StepReport, StepSolver};
use crate::diskfem::DiscreteOperators;

/// All computed time levels of one run. `reports[k]` belongs to the step
/// that produced `states[k + 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub params: SchemeParams,
    pub states: Vec<SchemeState>,
    pub reports: Vec<StepReport>,
    /// `tau` or `sigma` is zero: no discrete well-posedness guarantee.
    pub outside_theory: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> &SchemeState {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn h(&self) -> f64 {
        self.params.h
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("step {step} failed: {error}")]
pub struct RunFailure {
    /// Index of the level that could not be computed.
    pub step: usize,
    pub error: StepError,
    pub partial: Box<Trajectory>,
}

/// Iterates the scheme from level 0 to `params.n_steps()`. `hook` sees every
/// state as it is produced, together with the report of the step that made
/// it (`None` for level 0).
pub fn run(
    data: &ProblemData,
    params: &SchemeParams,
    ops: &DiscreteOperators,
    hook: &mut dyn FnMut(&SchemeState, Option<&StepReport>),
) -> Result<Trajectory, RunFailure> {
    let s0 = SchemeState::initial(data);
    hook(&s0, None);
    let mut traj = Trajectory {
        params: *params,
        states: vec![s0],
        reports: Vec::new(),
        outside_theory: step_guard(params, &data.pair).outside_theory,
    };
    let mut solver = match StepSolver::new(ops, params) {
        Ok(s) => s,
        Err(error) => return Err(RunFailure { step: 1, error, partial: Box::new(traj) }),
    };
    for k in 0..params.n_steps() {
        match solver.step(ops, data, traj.last()) {
            Ok((state, report)) => {
                hook(&state, Some(&report));
                traj.states.push(state);
                traj.reports.push(report);
            }
            Err(error) => return Err(RunFailure { step: k + 1, error, partial: Box::new(traj) }),
        }
    }
    Ok(traj)
}

/// [`run`] without a hook.
pub fn run_quiet(data: &ProblemData, params: &SchemeParams, ops: &DiscreteOperators) -> Result<Trajectory, RunFailure> {
    run(data, params, ops, &mut |_, _| {})
}

/// Checkpoint text for every `stride`-th state (the last state is always
/// included): a `state n t` header followed by the rows phi, mu, psi, w.
pub fn write_checkpoints(traj: &Trajectory, stride: usize) -> String {
    let stride = stride.max(1);
    let last = traj.len() - 1;
    let mut s = String::new();
    for st in traj.states.iter().filter(|st| st.n % stride == 0 || st.n == last) {
        let _ = writeln!(s, "state {} {:.17e}", st.n, st.t);
        for row in [&st.phi, &st.mu, &st.psi, &st.w] {
            let line: Vec<String> = row.iter().map(|x| format!("{x:.17e}")).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InterpError {
    #[error("time {t} outside [0, {t_final}]")]
    OutOfRange { t: f64, t_final: f64 },
    #[error("checkpoint parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Parses the output of [`write_checkpoints`].
pub fn read_checkpoints(text: &str) -> Result<Vec<SchemeState>, InterpError> {
    let lines: Vec<(usize, &str)> =
        text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty()).collect();
    let err = |line: usize, msg: &str| InterpError::Parse { line, msg: msg.to_string() };
    let mut out = Vec::new();
    for block in lines.chunks(5) {
        let (ln, head) = block[0];
        if block.len() != 5 {
            return Err(err(ln, "incomplete state block"));
        }
        let parts: Vec<&str> = head.split_whitespace().collect();
        if parts.len() != 3 || parts[0] != "state" {
            return Err(err(ln, "expected 'state n t'"));
        }
        let n = parts[1].parse().map_err(|_| err(ln, "bad step index"))?;
        let t = parts[2].parse().map_err(|_| err(ln, "bad time"))?;
        let mut rows = Vec::with_capacity(4);
        for &(ln, l) in &block[1..] {
            let row: Result<Vec<f64>, _> = l.split_whitespace().map(str::parse).collect();
            rows.push(row.map_err(|_| err(ln, "bad coefficient"))?);
        }
        let w = rows.pop().unwrap_or_default();
        let psi = rows.pop().unwrap_or_default();
        let mu = rows.pop().unwrap_or_default();
        let phi = rows.pop().unwrap_or_default();
        out.push(SchemeState { n, t, phi, mu, psi, w });
    }
    Ok(out)
}

/// Field values of one interpolant at a time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpValues {
    pub phi: Vec<f64>,
    pub mu: Vec<f64>,
    pub psi: Vec<f64>,
    pub w: Vec<f64>,
}

/// Piecewise-linear (`hat`) and right-continuous step (`bar`) reconstructions.
#[derive(Debug, Clone, PartialEq)]
pub struct Interpolants {
    pub hat: InterpValues,
    pub bar: InterpValues,
}

fn values(s: &SchemeState) -> InterpValues {
    InterpValues { phi: s.phi.clone(), mu: s.mu.clone(), psi: s.psi.clone(), w: s.w.clone() }
}

fn lerp(a: &[f64], b: &[f64], theta: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| (1.0 - theta) * x + theta * y).collect()
}

/// On `(nh, (n+1)h]` the bar interpolant is state `n+1`; at `t = 0` it takes
/// the value of the first interval, state 1.
pub fn interpolants(traj: &Trajectory, t: f64) -> Result<Interpolants, InterpError> {
    let h = traj.h();
    let n_last = traj.len() - 1;
    let t_final = n_last as f64 * h;
    if !(t >= 0.0 && t <= t_final * (1.0 + 1e-14)) || n_last == 0 {
        return Err(InterpError::OutOfRange { t, t_final });
    }
    let q = t / h;
    // k: index with t in (k h, (k+1) h], snapped to grid points within roundoff
    let nearest = q.round();
    let k = if (q - nearest).abs() <= 1e-12 * q.max(1.0) {
        (nearest as usize).max(1) - 1
    } else {
        (q.floor() as usize).min(n_last - 1)
    };
    let (a, b) = (&traj.states[k], &traj.states[k + 1]);
    let theta = ((t - k as f64 * h) / h).clamp(0.0, 1.0);
    let hat = InterpValues {
        phi: lerp(&a.phi, &b.phi, theta),
        mu: lerp(&a.mu, &b.mu, theta),
        psi: lerp(&a.psi, &b.psi, theta),
        w: lerp(&a.w, &b.w, theta),
    };
    Ok(Interpolants { hat, bar: values(b) })
}

/// Both sides of `|hat phi - bar phi|^2_{L2(0,T;H)} = (h^2/3) |d/dt hat phi|^2_{L2(0,T;H)}`.
/// The left side is integrated exactly with 2-point Gauss quadrature per
/// interval applied to the interpolants; the right side uses the difference
/// quotients directly.
pub fn interpolation_gap(traj: &Trajectory, ops: &DiscreteOperators) -> Result<(f64, f64), InterpError> {
    let h = traj.h();
    let gauss = [0.5 - 0.5 / 3f64.sqrt(), 0.5 + 0.5 / 3f64.sqrt()];
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for k in 0..traj.len() - 1 {
        for &x in &gauss {
            let it = interpolants(traj, (k as f64 + x) * h)?;
            let d: Vec<f64> = it.hat.phi.iter().zip(&it.bar.phi).map(|(a, b)| a - b).collect();
            lhs += 0.5 * h * ops.mass_bulk.quad(&d);
        }
        let dq: Vec<f64> =
            traj.states[k + 1].phi.iter().zip(&traj.states[k].phi).map(|(a, b)| (a - b) / h).collect();
        rhs += h * ops.mass_bulk.quad(&dq);
    }
    Ok((lhs, h * h / 3.0 * rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diskfem::{assemble, gen_disk_mesh};
    use crate::graphs::PotentialPair;

    fn small_run(steps: usize) -> (DiscreteOperators, Trajectory) {
        let ops = assemble(&gen_disk_mesh(3, 12).unwrap()).unwrap();
        let phi0: Vec<f64> = ops.mesh.vertices.iter().map(|p| 0.4 * p[0] + 0.2 * p[1] * p[1]).collect();
        let data = ProblemData::from_bulk(&ops, phi0, PotentialPair::regular());
        let h = 1e-2;
        let params = SchemeParams::new(h, h * steps as f64, 0.1, 0.1, 0.5);
        let traj = run_quiet(&data, &params, &ops).unwrap();
        (ops, traj)
    }

    #[test]
    fn single_step_horizon_gives_two_states() {
        let (_, traj) = small_run(1);
        assert_eq!(traj.len(), 2);
        assert_eq!(traj.reports.len(), 1);
        assert!(!traj.outside_theory);
    }

    #[test]
    fn interpolant_conventions() {
        let (_, traj) = small_run(4);
        let h = traj.h();
        let at2 = interpolants(&traj, 2.0 * h).unwrap();
        assert_eq!(at2.hat.phi, traj.states[2].phi);
        assert_eq!(at2.bar.phi, traj.states[2].phi);
        let mid = interpolants(&traj, 2.5 * h).unwrap();
        for i in 0..mid.hat.phi.len() {
            let avg = 0.5 * (traj.states[2].phi[i] + traj.states[3].phi[i]);
            assert!((mid.hat.phi[i] - avg).abs() < 1e-15);
        }
        assert_eq!(mid.bar.w, traj.states[3].w);
        let zero = interpolants(&traj, 0.0).unwrap();
        assert_eq!(zero.bar.phi, traj.states[1].phi);
        assert_eq!(zero.hat.phi, traj.states[0].phi);
        assert!(interpolants(&traj, 5.0 * h).is_err());
        assert!(interpolants(&traj, -1e-3).is_err());
    }

    #[test]
    fn gap_identity_holds() {
        let (ops, traj) = small_run(5);
        let (lhs, rhs) = interpolation_gap(&traj, &ops).unwrap();
        assert!(rhs > 0.0);
        assert!((lhs - rhs).abs() <= 1e-12 * rhs, "{lhs} vs {rhs}");
    }

    #[test]
    fn checkpoint_round_trip() {
        let (_, traj) = small_run(3);
        let text = write_checkpoints(&traj, 2);
        let back = read_checkpoints(&text).unwrap();
        assert_eq!(back.iter().map(|s| s.n).collect::<Vec<_>>(), vec![0, 2, 3]);
        assert_eq!(back[1], traj.states[2]);
        assert!(read_checkpoints("state 0 0\n1 2\n").is_err());
    }
}
