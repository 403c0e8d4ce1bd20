use super::{average_source, step_guard, ProblemData, SchemeParams, SchemeState, StepError, StepReport};
use crate::diskfem::DiscreteOperators;
use crate::graphs::Potential;
use crate::par;
use crate::sparse::{CsrMatrix, SymmetricFactor};

/// Relative residual demanded of each Newton correction solve.
const NEWTON_LINSOLVE_TOL: f64 = 1e-10;

/// Reusable Newton machinery for a fixed mesh, `h`, `tau` and `sigma`.
///
/// The Newton matrix in the unknowns `x = [phi, mu, w]`, with the equations
/// ordered `[R2, -h R1, -h R3]`, is the symmetric quasi-definite
///
/// ```text
/// [ A        -M          -T^T Mb      ]
/// [ -M       -h (M+K)     0           ]
/// [ -Mb T     0          -h (Mb+Kb)   ]
/// ```
///
/// with `A = tau/h M + K + diag(M_L F') + T^T (sigma/h Mb + Kb + diag(Mb_L F_b')) T`.
/// Only the diagonal of `A` changes between iterations, so the symbolic
/// factorization is computed once.
#[derive(Debug, Clone)]
pub struct StepSolver {
    params: SchemeParams,
    n: usize,
    nb: usize,
    base: CsrMatrix,
    /// Position of `(i, i)` in `base.values()` for every bulk node.
    diag_pos: Vec<usize>,
    factor: SymmetricFactor,
}

/// Nodal values and slopes of `beta_eps + pi`.
struct Forces {
    bulk: Vec<(f64, f64)>,
    bdry: Vec<(f64, f64)>,
}

impl StepSolver {
    pub fn new(ops: &DiscreteOperators, params: &SchemeParams) -> Result<Self, StepError> {
        let (n, nb) = (ops.n_bulk(), ops.n_bdry());
        let h = params.h;
        let mut trip = Vec::new();
        let tr = &ops.trace_map;
        for (i, j, m) in ops.mass_bulk.triplets() {
            trip.push((i, j, params.tau / h * m));
            trip.push((i, n + j, -m));
            trip.push((n + i, j, -m));
            trip.push((n + i, n + j, -h * m));
        }
        for (i, j, k) in ops.stiff_bulk.triplets() {
            trip.push((i, j, k));
            trip.push((n + i, n + j, -h * k));
        }
        for (a, b, m) in ops.mass_bdry.triplets() {
            trip.push((tr[a], tr[b], params.sigma / h * m));
            trip.push((tr[a], 2 * n + b, -m));
            trip.push((2 * n + a, tr[b], -m));
            trip.push((2 * n + a, 2 * n + b, -h * m));
        }
        for (a, b, k) in ops.stiff_bdry.triplets() {
            trip.push((tr[a], tr[b], k));
            trip.push((2 * n + a, 2 * n + b, -h * k));
        }
        let dim = 2 * n + nb;
        let base = CsrMatrix::from_triplets(dim, dim, trip);
        let diag_pos = (0..n)
            .map(|i| base.position(i, i).expect("mass matrix has a full diagonal"))
            .collect();
        let factor = SymmetricFactor::analyze(&base)?;
        Ok(StepSolver { params: *params, n, nb, base, diag_pos, factor })
    }

    pub fn params(&self) -> &SchemeParams {
        &self.params
    }

    fn forces(&self, data: &ProblemData, phi: &[f64], psi: &[f64]) -> Result<Forces, StepError> {
        let eps = self.params.eps;
        let eps_b = data.pair.eps_boundary(eps);
        let eval = |pot: Potential, e: f64, v: &[f64]| par::try_map_range(v.len(), |i| pot.force(e, v[i]));
        Ok(Forces { bulk: eval(data.pair.bulk, eps, phi)?, bdry: eval(data.pair.boundary, eps_b, psi)? })
    }

    /// Unscaled residuals `(R1, R2, R3)`.
    #[allow(clippy::too_many_arguments)]
    fn residual(
        &self,
        ops: &DiscreteOperators,
        prev: &SchemeState,
        fg: &(Vec<f64>, Vec<f64>),
        phi: &[f64],
        mu: &[f64],
        w: &[f64],
        psi: &[f64],
        forces: &Forces,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let SchemeParams { h, tau, sigma, .. } = self.params;
        let (f, g) = fg;
        let (n, nb) = (self.n, self.nb);

        // R1 = M[(phi - phi_n)/h + mu - mu_n] + K mu
        let a1: Vec<f64> = (0..n).map(|i| (phi[i] - prev.phi[i]) / h + mu[i] - prev.mu[i]).collect();
        let m1 = ops.mass_bulk.mul_vec(&a1);
        let k1 = ops.stiff_bulk.mul_vec(mu);
        let r1: Vec<f64> = (0..n).map(|i| m1[i] + k1[i]).collect();

        let a2: Vec<f64> = (0..n).map(|i| tau / h * (phi[i] - prev.phi[i]) - mu[i] - f[i]).collect();
        let m2 = ops.mass_bulk.mul_vec(&a2);
        let k2 = ops.stiff_bulk.mul_vec(phi);
        let mut r2: Vec<f64> = (0..n).map(|i| m2[i] + k2[i] + ops.lumped_bulk[i] * forces.bulk[i].0).collect();

        let b2: Vec<f64> = (0..nb).map(|k| sigma / h * (psi[k] - prev.psi[k]) - w[k] - g[k]).collect();
        let mb2 = ops.mass_bdry.mul_vec(&b2);
        let kb2 = ops.stiff_bdry.mul_vec(psi);
        let bdry: Vec<f64> = (0..nb).map(|k| mb2[k] + kb2[k] + ops.lumped_bdry[k] * forces.bdry[k].0).collect();
        ops.add_trace_transpose(&mut r2, &bdry);

        let a3: Vec<f64> = (0..nb).map(|k| (psi[k] - prev.psi[k]) / h + w[k] - prev.w[k]).collect();
        let m3 = ops.mass_bdry.mul_vec(&a3);
        let k3 = ops.stiff_bdry.mul_vec(w);
        let r3: Vec<f64> = (0..nb).map(|k| m3[k] + k3[k]).collect();
        (r1, r2, r3)
    }

    fn jacobian(&self, ops: &DiscreteOperators, forces: &Forces) -> CsrMatrix {
        let mut values = self.base.values().to_vec();
        for i in 0..self.n {
            values[self.diag_pos[i]] += ops.lumped_bulk[i] * forces.bulk[i].1;
        }
        for (k, &i) in ops.trace_map.iter().enumerate() {
            values[self.diag_pos[i]] += ops.lumped_bdry[k] * forces.bdry[k].1;
        }
        self.base.with_values(values)
    }

    /// Advances `prev` by one step.
    pub fn step(
        &mut self,
        ops: &DiscreteOperators,
        data: &ProblemData,
        prev: &SchemeState,
    ) -> Result<(SchemeState, StepReport), StepError> {
        let (n, nb) = (self.n, self.nb);
        for (expected, got) in [(n, prev.phi.len()), (n, prev.mu.len()), (nb, prev.psi.len()), (nb, prev.w.len())] {
            if expected != got {
                return Err(StepError::Dimension { expected, got });
            }
        }
        let p = self.params;
        let fg = (average_source(&data.f, prev.n, p.h, n), average_source(&data.g, prev.n, p.h, nb));
        let guard_ok = step_guard(&p, &data.pair).ok;

        let mut phi = prev.phi.clone();
        let mut mu = prev.mu.clone();
        let mut w = prev.w.clone();
        let mut psi = ops.trace(&phi);
        let mut forces = self.forces(data, &phi, &psi)?;
        let mut res = self.residual(ops, prev, &fg, &phi, &mu, &w, &psi, &forces);
        let mut rnorm = rms(&res);
        let mut linsolves = 0;
        let mut iters = 1;
        while rnorm > p.newton_tol {
            if iters > p.newton_max {
                return Err(StepError::NewtonFailure { iters: iters - 1, residual: rnorm });
            }
            let jac = self.jacobian(ops, &forces);
            self.factor.factor(&jac)?;
            let (r1, r2, r3) = &res;
            let rhs: Vec<f64> = r2
                .iter()
                .map(|x| -x)
                .chain(r1.iter().map(|x| p.h * x))
                .chain(r3.iter().map(|x| p.h * x))
                .collect();
            let dx = self.factor.solve_checked(&jac, &rhs, NEWTON_LINSOLVE_TOL)?;
            linsolves += 1;

            let mut lambda = 1.0;
            loop {
                let phi_t: Vec<f64> = (0..n).map(|i| phi[i] + lambda * dx[i]).collect();
                let mu_t: Vec<f64> = (0..n).map(|i| mu[i] + lambda * dx[n + i]).collect();
                let w_t: Vec<f64> = (0..nb).map(|k| w[k] + lambda * dx[2 * n + k]).collect();
                let psi_t = ops.trace(&phi_t);
                let forces_t = self.forces(data, &phi_t, &psi_t)?;
                let res_t = self.residual(ops, prev, &fg, &phi_t, &mu_t, &w_t, &psi_t, &forces_t);
                let rnorm_t = rms(&res_t);
                if rnorm_t < rnorm || rnorm_t <= p.newton_tol {
                    (phi, mu, w, psi, forces, res, rnorm) = (phi_t, mu_t, w_t, psi_t, forces_t, res_t, rnorm_t);
                    break;
                }
                lambda *= 0.5;
                if lambda < p.damping_min {
                    return Err(StepError::NewtonFailure { iters, residual: rnorm });
                }
            }
            iters += 1;
        }
        let state = SchemeState { n: prev.n + 1, t: (prev.n + 1) as f64 * p.h, phi, mu, psi, w };
        Ok((state, StepReport { newton_iters: iters, final_residual: rnorm, guard_ok, linsolves }))
    }
}

/// Root mean square over all equations.
fn rms((r1, r2, r3): &(Vec<f64>, Vec<f64>, Vec<f64>)) -> f64 {
    let len = r1.len() + r2.len() + r3.len();
    let sq: f64 = [r1, r2, r3]
        .iter()
        .map(|r| par::sum_range(r.len(), |i| r[i] * r[i]))
        .sum();
    (sq / len as f64).sqrt()
}

/// One step of the scheme from `prev`; builds a fresh [`StepSolver`].
pub fn solve_step(
    prev: &SchemeState,
    data: &ProblemData,
    params: &SchemeParams,
    ops: &DiscreteOperators,
) -> Result<(SchemeState, StepReport), StepError> {
    StepSolver::new(ops, params)?.step(ops, data, prev)
}
