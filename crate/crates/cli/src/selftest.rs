//! Invariant suite over all modules on tiny meshes.

use std::fs;
use std::path::Path;

use bulksurf_core::diagnostics;
use bulksurf_core::diskfem::{assemble, gen_disk_mesh, DiscreteOperators, DiskMesh};
use bulksurf_core::graphs::{check_compatibility, MonotoneGraph, PotentialPair, PresetName};
use bulksurf_core::stepper::{
    self, average_source, interpolation_gap, ProblemData, SchemeParams, SchemeState, Source, Trajectory,
};

use crate::oracle::{oracle_step, yosida_bisect};
use crate::presets::XorShift64;

/// Outcome of one group.
#[derive(Debug, Clone)]
pub struct GroupResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Check = Result<String, String>;
type Group<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn graphs_group() -> Check {
    let graphs = [
        MonotoneGraph::regular(),
        MonotoneGraph::logarithmic(MonotoneGraph::DEFAULT_C1).map_err(|e| e.to_string())?,
        MonotoneGraph::double_obstacle(MonotoneGraph::DEFAULT_C2).map_err(|e| e.to_string())?,
    ];
    let mut rng = XorShift64::new(2024);
    let mut worst_resolvent = 0.0f64;
    for g in &graphs {
        for eps in [0.5, 0.1, 0.02] {
            let b0 = g.yosida(eps, 0.0).map_err(|e| e.to_string())?;
            ensure(b0 == 0.0, || format!("beta_eps(0) = {b0} for {:?}", g.kind()))?;
            for _ in 0..2000 {
                let r = 6.0 * rng.next_f64() - 3.0;
                let b = g.yosida(eps, r).map_err(|e| e.to_string())?;
                if let Ok(min) = g.minimal_section(r) {
                    ensure(b.abs() <= min.abs() * (1.0 + 1e-12) + 1e-12, || {
                        format!("|beta_eps({r})| = {} exceeds |beta°| = {}", b.abs(), min.abs())
                    })?;
                }
                let env = g.moreau_envelope(eps, r).map_err(|e| e.to_string())?;
                ensure(env >= 0.0 && env <= g.primitive(r) + 1e-12, || {
                    format!("envelope {env} outside [0, {}] at {r}", g.primitive(r))
                })?;
                worst_resolvent = worst_resolvent.max((b - yosida_bisect(g.kind(), eps, r)).abs() * eps);
            }
        }
    }
    ensure(worst_resolvent <= 1e-10, || format!("resolvent deviates from bisection by {worst_resolvent:e}"))?;
    use PresetName::*;
    for (a, b) in [(Regular, Regular), (Log, Log), (Obstacle, Obstacle), (Regular, Obstacle), (Regular, Log), (Obstacle, Log)] {
        let pair = PotentialPair::preset(a, b, MonotoneGraph::DEFAULT_C1, MonotoneGraph::DEFAULT_C2, None, None)
            .map_err(|e| e.to_string())?;
        let rep = check_compatibility(&pair, 0.1, 2001);
        ensure(rep.passes(), || format!("compatibility fails for {a}/{b}: slack {}", rep.worst_slack()))?;
    }
    Ok(format!("max resolvent deviation {worst_resolvent:.2e}"))
}

fn diskfem_group(mesh_file: Option<&Path>) -> Check {
    let mesh = match mesh_file {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| format!("cannot read {}: {e}", p.display()))?;
            DiskMesh::from_text(&text).map_err(|e| e.to_string())?
        }
        None => gen_disk_mesh(4, 16).map_err(|e| e.to_string())?,
    };
    mesh.validate().map_err(|e| e.to_string())?;
    let ops = assemble(&mesh).map_err(|e| e.to_string())?;
    let (n, nb) = (ops.n_bulk(), ops.n_bdry());
    let ones = vec![1.0; n];
    let ones_b = vec![1.0; nb];
    let x: Vec<f64> = mesh.vertices.iter().map(|p| p[0]).collect();
    let k1 = ops.stiff_bulk.mul_vec(&ones).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let kb1 = ops.stiff_bdry.mul_vec(&ones_b).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    ensure(k1 < 1e-12 && kb1 < 1e-12, || format!("stiffness does not annihilate constants ({k1:e}, {kb1:e})"))?;
    for (name, m) in [("M", &ops.mass_bulk), ("K", &ops.stiff_bulk), ("M_b", &ops.mass_bdry), ("K_b", &ops.stiff_bdry)]
    {
        ensure(m.is_symmetric(1e-14), || format!("{name} is not symmetric"))?;
    }
    let area = ops.mass_bulk.quad(&ones);
    ensure((area - mesh.area()).abs() < 1e-12, || format!("mass total {area} vs area {}", mesh.area()))?;
    let len = ops.mass_bdry.quad(&ones_b);
    ensure((len - mesh.boundary_length()).abs() < 1e-12, || format!("boundary mass {len} vs length"))?;
    // |grad x|^2 integrates to the area
    let kx = ops.stiff_bulk.quad(&x);
    ensure((kx - area).abs() < 1e-10, || format!("x^T K x = {kx}, expected {area}"))?;
    // K N v = M v on zero-mean fields
    let mean = ops.mean_bulk(&x);
    let xc: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let mxc = ops.mass_bulk.mul_vec(&xc);
    let g = ops.green_bulk(&xc).map_err(|e| e.to_string())?;
    let kg = ops.stiff_bulk.mul_vec(&g);
    let dev = kg.iter().zip(&mxc).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(dev < 1e-10, || format!("K N v deviates from v by {dev:e}"))?;
    Ok(format!("{n} vertices, {nb} boundary vertices, area {area:.6}"))
}

fn tiny_ops() -> Result<DiscreteOperators, String> {
    assemble(&gen_disk_mesh(2, 8).map_err(|e| e.to_string())?).map_err(|e| e.to_string())
}

fn tiny_phi0(ops: &DiscreteOperators, scale: f64) -> Vec<f64> {
    ops.mesh.vertices.iter().map(|p| scale * (0.2 + 0.5 * p[0] - 0.3 * p[1] * p[1])).collect()
}

/// Largest nodewise difference between the Newton step and the dense oracle
/// for all three families. The larger data scale pushes the obstacle and
/// logarithmic cases past ±1, where the regularised force is active.
pub fn oracle_deviation() -> Result<f64, String> {
    let ops = tiny_ops()?;
    let mut worst = 0.0f64;
    let pairs = [
        PotentialPair::regular(),
        PotentialPair::logarithmic(MonotoneGraph::DEFAULT_C1).map_err(|e| e.to_string())?,
        PotentialPair::double_obstacle(MonotoneGraph::DEFAULT_C2).map_err(|e| e.to_string())?,
    ];
    for (pair, scale) in pairs.iter().flat_map(|&p| [(p, 1.0), (p, 2.0)]) {
        let (n, nb) = (ops.n_bulk(), ops.n_bdry());
        let data = ProblemData::from_bulk(&ops, tiny_phi0(&ops, scale), pair)
            .with_sources(Source::Ramp(vec![0.5; n]), Source::Constant(vec![-0.25; nb]));
        let params = SchemeParams::new(1e-3, 1e-3, 0.1, 0.1, 0.1);
        let mut prev = SchemeState::initial(&data);
        // a nonzero history for mu and w
        prev.mu = ops.mesh.vertices.iter().map(|p| 0.3 * p[1]).collect();
        prev.w = (0..nb).map(|k| 0.1 * (k as f64).sin()).collect();
        let (newton, _) = stepper::solve_step(&prev, &data, &params, &ops).map_err(|e| e.to_string())?;
        let f = average_source(&data.f, 0, params.h, n);
        let g = average_source(&data.g, 0, params.h, nb);
        let oracle = oracle_step(&ops, &data, &params, &prev, &f, &g).ok_or("oracle did not converge")?.state;
        for (a, b) in [(&newton.phi, &oracle.phi), (&newton.mu, &oracle.mu), (&newton.psi, &oracle.psi), (&newton.w, &oracle.w)] {
            worst = worst.max(a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
        }
    }
    Ok(worst)
}

fn stepper_group() -> Check {
    let dev = oracle_deviation()?;
    ensure(dev <= 1e-8, || format!("Newton step deviates from the dense oracle by {dev:e}"))?;
    Ok(format!("max deviation from dense oracle {dev:.2e}"))
}

/// Relative mismatch of the interpolant gap identity on a trajectory of
/// random states.
pub fn interpolant_identity_deviation(ops: &DiscreteOperators, steps: usize, seed: u64) -> Result<f64, String> {
    let mut rng = XorShift64::new(seed);
    let (n, nb) = (ops.n_bulk(), ops.n_bdry());
    let mut field = |len: usize| -> Vec<f64> { (0..len).map(|_| 2.0 * rng.next_f64() - 1.0).collect() };
    let h = 0.01;
    let states = (0..=steps)
        .map(|k| SchemeState { n: k, t: k as f64 * h, phi: field(n), mu: field(n), psi: field(nb), w: field(nb) })
        .collect();
    let traj = Trajectory {
        params: SchemeParams::new(h, h * steps as f64, 0.1, 0.1, 0.1),
        states,
        reports: Vec::new(),
        outside_theory: false,
    };
    let (lhs, rhs) = interpolation_gap(&traj, ops).map_err(|e| e.to_string())?;
    Ok((lhs - rhs).abs() / rhs.abs())
}

fn interpolant_group() -> Check {
    let ops = tiny_ops()?;
    let dev = interpolant_identity_deviation(&ops, 16, 7)?;
    ensure(dev <= 1e-12, || format!("interpolant identity off by {dev:e}"))?;
    Ok(format!("max deviation {dev:.2e}"))
}

fn conservation_group() -> Check {
    let ops = assemble(&gen_disk_mesh(3, 12).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let (n, nb) = (ops.n_bulk(), ops.n_bdry());
    let mut rng = XorShift64::new(5);
    let phi0: Vec<f64> = (0..n).map(|_| 0.6 * rng.next_f64() - 0.3).collect();
    let pair = PotentialPair::regular();
    let params = SchemeParams::new(1e-3, 2e-2, 0.1, 0.1, 0.1);

    let forced = ProblemData::from_bulk(&ops, phi0.clone(), pair)
        .with_sources(Source::Ramp(vec![1.0; n]), Source::Constant(vec![0.5; nb]));
    let traj = stepper::run_quiet(&forced, &params, &ops).map_err(|e| e.to_string())?;
    let (m0, g0) = diagnostics::augmented_masses(&traj.states[0], params.h, &ops);
    let mut drift = 0.0f64;
    for s in &traj.states {
        let (m, g) = diagnostics::augmented_masses(s, params.h, &ops);
        drift = drift.max((m - m0).abs()).max((g - g0).abs());
    }
    ensure(drift <= 1e-9, || format!("augmented mass drifts by {drift:e}"))?;

    let free = ProblemData::from_bulk(&ops, phi0, pair);
    let traj = stepper::run_quiet(&free, &params, &ops).map_err(|e| e.to_string())?;
    let lyap: Vec<f64> = traj.states.iter().map(|s| diagnostics::lyapunov(s, &pair, params.eps, params.h, &ops)).collect();
    let rise = lyap.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    ensure(rise <= 1e-10, || format!("Lyapunov functional increases by {rise:e}"))?;
    Ok(format!("mass drift {drift:.2e}, largest Lyapunov change {rise:.2e}"))
}

/// Runs every group; `mesh_file` replaces the generated mesh of the
/// finite element group.
pub fn run_selftest(mesh_file: Option<&Path>) -> Vec<GroupResult> {
    let groups: [Group<'_>; 5] = [
        ("graphs", Box::new(graphs_group)),
        ("diskfem", Box::new(move || diskfem_group(mesh_file))),
        ("stepper oracle", Box::new(stepper_group)),
        ("interpolant identity", Box::new(interpolant_group)),
        ("mass and lyapunov", Box::new(conservation_group)),
    ];
    groups
        .iter()
        .map(|(name, f)| match f() {
            Ok(detail) => GroupResult { name, passed: true, detail },
            Err(detail) => GroupResult { name, passed: false, detail },
        })
        .collect()
}

pub fn cmd_selftest(mesh_file: Option<&Path>) -> i32 {
    let results = run_selftest(mesh_file);
    for r in &results {
        println!("{} {:<22} {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    if results.iter().all(|r| r.passed) {
        crate::commands::EXIT_OK
    } else {
        crate::commands::EXIT_FAILURE
    }
}
