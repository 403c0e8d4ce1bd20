//! Dense reference solver for one time step on tiny meshes.
//!
//! Solves the same nonlinear system as the Newton stepper by a different
//! route: the chemical potentials are eliminated exactly, the remaining
//! equation for the order parameter is solved by a stabilized fixed-point
//! iteration with dense Gaussian elimination, and the Yosida approximations
//! come from bisection rather than the library resolvents. Cost is cubic in
//! the vertex count, so it is only meant for meshes with tens of vertices.

use bulksurf_core::diskfem::DiscreteOperators;
use bulksurf_core::graphs::{GraphKind, Potential};
use bulksurf_core::stepper::{ProblemData, SchemeParams, SchemeState};

pub const ORACLE_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 20_000;

type Dense = Vec<Vec<f64>>;

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Dense, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c] == 0.0 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            if f != 0.0 {
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

fn matvec(a: &Dense, x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}

fn matmul(a: &Dense, b: &Dense) -> Dense {
    let m = b[0].len();
    a.iter()
        .map(|row| (0..m).map(|j| row.iter().enumerate().map(|(k, v)| v * b[k][j]).sum()).collect())
        .collect()
}

fn inverse(a: &Dense) -> Option<Dense> {
    let n = a.len();
    let cols: Option<Vec<Vec<f64>>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            gauss_solve(a.clone(), e)
        })
        .collect();
    let cols = cols?;
    Some((0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect())
}

fn add(a: &Dense, b: &Dense, s: f64) -> Dense {
    a.iter().zip(b).map(|(r, q)| r.iter().zip(q).map(|(x, y)| x + s * y).collect()).collect()
}

/// `beta_eps(r)` by bisection on `j + eps beta(j) = r`.
pub fn yosida_bisect(kind: GraphKind, eps: f64, r: f64) -> f64 {
    let beta = |j: f64| match kind {
        GraphKind::Regular => j * j * j,
        GraphKind::Logarithmic { .. } => (1.0 + j).ln() - (1.0 - j).ln(),
        GraphKind::DoubleObstacle { .. } => 0.0,
    };
    let j = match kind {
        GraphKind::DoubleObstacle { .. } => r.clamp(-1.0, 1.0),
        _ => {
            let (mut lo, mut hi) = match kind {
                GraphKind::Regular => (-r.abs().max(1.0), r.abs().max(1.0)),
                _ => (-1.0, 1.0),
            };
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid == lo || mid == hi {
                    break;
                }
                let v = mid + eps * beta(mid) - r;
                if v.is_nan() || v > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        }
    };
    (r - j) / eps
}

fn force(pot: &Potential, eps: f64, r: f64) -> f64 {
    yosida_bisect(pot.graph.kind(), eps, r) + pot.perturbation.value(r)
}

/// Slope bound of `beta_eps + pi` used for the stabilization.
fn stab(pot: &Potential, eps: f64) -> f64 {
    1.0 / eps + pot.perturbation.slope.abs()
}

/// Result of [`oracle_step`].
#[derive(Debug, Clone)]
pub struct OracleStep {
    pub state: SchemeState,
    pub sweeps: usize,
    pub last_increment: f64,
}

/// One step from `prev` with the interval-averaged sources `f`, `g`.
/// Returns `None` if the fixed-point iteration does not reach
/// [`ORACLE_TOL`].
pub fn oracle_step(
    ops: &DiscreteOperators,
    data: &ProblemData,
    params: &SchemeParams,
    prev: &SchemeState,
    f: &[f64],
    g: &[f64],
) -> Option<OracleStep> {
    let (n, nb) = (ops.n_bulk(), ops.n_bdry());
    let SchemeParams { h, tau, sigma, eps, .. } = *params;
    let eps_b = data.pair.eps_boundary(eps);
    let m = ops.mass_bulk.to_dense();
    let k = ops.stiff_bulk.to_dense();
    let mb = ops.mass_bdry.to_dense();
    let kb = ops.stiff_bdry.to_dense();
    // trace matrix, nb x n
    let mut t = vec![vec![0.0; n]; nb];
    for (j, &i) in ops.trace_map.iter().enumerate() {
        t[j][i] = 1.0;
    }
    let tt: Dense = (0..n).map(|i| (0..nb).map(|j| t[j][i]).collect()).collect();

    // mu = (M+K)^{-1} M [mu_n - (phi - phi_n)/h] = P [mu_n - (phi - phi_n)/h]
    let p = matmul(&inverse(&add(&m, &k, 1.0))?, &m);
    let pb = matmul(&inverse(&add(&mb, &kb, 1.0))?, &mb);

    // Substituting mu and w into the phi equation leaves
    //   A phi + D_b F(phi) + T' D_g F_g(T phi) = rhs
    let mp = matmul(&m, &p);
    let mbpb = matmul(&mb, &pb);
    let scaled = |x: &Dense, c: f64| -> Dense { x.iter().map(|r| r.iter().map(|v| c * v).collect()).collect() };
    // (tau/h) M + K + M P / h, and its boundary analog
    let a_bulk = add(&add(&scaled(&m, tau / h), &k, 1.0), &mp, 1.0 / h);
    let a_bdry = add(&add(&scaled(&mb, sigma / h), &kb, 1.0), &mbpb, 1.0 / h);
    let a = add(&a_bulk, &matmul(&tt, &matmul(&a_bdry, &t)), 1.0);

    // constant parts
    let mut rhs_b: Vec<f64> = (0..n).map(|i| tau / h * prev.phi[i] + f[i]).collect();
    rhs_b = matvec(&m, &rhs_b);
    let mp_mu = matvec(&mp, &prev.mu);
    let mp_phi = matvec(&mp, &prev.phi);
    for i in 0..n {
        rhs_b[i] += mp_mu[i] + mp_phi[i] / h;
    }
    let mut rhs_g: Vec<f64> = (0..nb).map(|j| sigma / h * prev.psi[j] + g[j]).collect();
    rhs_g = matvec(&mb, &rhs_g);
    let mbpb_w = matvec(&mbpb, &prev.w);
    let mbpb_psi = matvec(&mbpb, &prev.psi);
    for j in 0..nb {
        rhs_g[j] += mbpb_w[j] + mbpb_psi[j] / h;
    }
    let rhs = {
        let tg = matvec(&tt, &rhs_g);
        (0..n).map(|i| rhs_b[i] + tg[i]).collect::<Vec<_>>()
    };

    // stabilization S = diag(D_b s + T' D_g s_g)
    let s_bulk = stab(&data.pair.bulk, eps);
    let s_bdry = stab(&data.pair.boundary, eps_b);
    let mut sdiag: Vec<f64> = ops.lumped_bulk.iter().map(|d| d * s_bulk).collect();
    for (j, &i) in ops.trace_map.iter().enumerate() {
        sdiag[i] += ops.lumped_bdry[j] * s_bdry;
    }
    let mut lhs = a.clone();
    for i in 0..n {
        lhs[i][i] += sdiag[i];
    }

    let mut phi = prev.phi.clone();
    let mut last = f64::INFINITY;
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let psi: Vec<f64> = ops.trace_map.iter().map(|&i| phi[i]).collect();
        let mut b: Vec<f64> = (0..n)
            .map(|i| rhs[i] + sdiag[i] * phi[i] - ops.lumped_bulk[i] * force(&data.pair.bulk, eps, phi[i]))
            .collect();
        for (j, &i) in ops.trace_map.iter().enumerate() {
            b[i] -= ops.lumped_bdry[j] * force(&data.pair.boundary, eps_b, psi[j]);
        }
        let next = gauss_solve(lhs.clone(), b)?;
        last = next.iter().zip(&phi).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        phi = next;
        if last <= ORACLE_TOL {
            break;
        }
    }
    if last > ORACLE_TOL {
        return None;
    }
    let psi: Vec<f64> = ops.trace_map.iter().map(|&i| phi[i]).collect();
    let mu = matvec(&p, &(0..n).map(|i| prev.mu[i] - (phi[i] - prev.phi[i]) / h).collect::<Vec<_>>());
    let w = matvec(&pb, &(0..nb).map(|j| prev.w[j] - (psi[j] - prev.psi[j]) / h).collect::<Vec<_>>());
    let state = SchemeState { n: prev.n + 1, t: (prev.n + 1) as f64 * h, phi, mu, psi, w };
    Some(OracleStep { state, sweeps, last_increment: last })
}
