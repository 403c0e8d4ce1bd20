//! Acceptance suite at desk scale (disk mesh with 40 rings and 160 sectors).
//!
//! Runs without the libtest harness so that every criterion prints exactly
//! one PASS/FAIL line whether or not output is captured. Exits nonzero if any
//! criterion fails.

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use bulksurf_cli::commands::{self, Axis, SweepTable};
use bulksurf_cli::config::parse_config_str;
use bulksurf_cli::oracle::yosida_bisect;
use bulksurf_cli::presets::{InitialPreset, XorShift64};
use bulksurf_cli::selftest::{interpolant_identity_deviation, oracle_deviation};
use bulksurf_cli::RunConfig;
use bulksurf_core::diagnostics;
use bulksurf_core::graphs::{check_compatibility, MonotoneGraph, PotentialPair, PresetName};
use bulksurf_core::stepper::{self, interpolation_gap};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg)
    }
}

fn config(text: &str) -> RunConfig {
    parse_config_str(text).expect("acceptance config parses")
}

fn graph_suite() -> Outcome {
    let graphs = [
        MonotoneGraph::regular(),
        MonotoneGraph::logarithmic(MonotoneGraph::DEFAULT_C1).unwrap(),
        MonotoneGraph::double_obstacle(MonotoneGraph::DEFAULT_C2).unwrap(),
    ];
    let mut rng = XorShift64::new(1);
    let (mut violations, mut worst_j) = (0usize, 0.0f64);
    for g in &graphs {
        for eps in [0.5, 0.1, 0.02] {
            ensure(g.yosida(eps, 0.0) == Ok(0.0), format!("beta_eps(0) != 0 for {:?}, eps {eps}", g.kind()))?;
            for _ in 0..10_000 {
                let r = 8.0 * rng.next_f64() - 4.0;
                let b = g.yosida(eps, r).map_err(|e| e.to_string())?;
                if let Ok(min) = g.minimal_section(r) {
                    violations += usize::from(b.abs() > min.abs());
                }
                let env = g.moreau_envelope(eps, r).map_err(|e| e.to_string())?;
                violations += usize::from(!(env >= 0.0 && env <= g.primitive(r)));
                let j = g.resolvent(eps, r).map_err(|e| e.to_string())?;
                let j_oracle = r - eps * yosida_bisect(g.kind(), eps, r);
                worst_j = worst_j.max((j - j_oracle).abs());
            }
        }
    }
    ensure(violations == 0, format!("{violations} sampled bound violations"))?;
    ensure(worst_j <= 1e-10, format!("resolvent differs from bisection by {worst_j:e}"))?;
    use PresetName::*;
    let mut worst_slack = f64::INFINITY;
    for (a, b) in [(Regular, Regular), (Log, Log), (Obstacle, Obstacle), (Regular, Obstacle), (Regular, Log), (Obstacle, Log)] {
        let pair = PotentialPair::preset(a, b, MonotoneGraph::DEFAULT_C1, MonotoneGraph::DEFAULT_C2, None, None).unwrap();
        for eps in [0.5, 0.1, 0.02] {
            worst_slack = worst_slack.min(check_compatibility(&pair, eps, 10_000).worst_slack());
        }
    }
    ensure(worst_slack >= -1e-12, format!("compatibility margin {worst_slack:e}"))?;
    Ok(format!("0 violations, resolvent error {worst_j:.1e}, worst margin {worst_slack:.2e}"))
}

fn mass_conservation() -> Outcome {
    let cfg = config(
        "potential = regular\ninitial = random(0.3, 7)\nsource_bulk = ramp(1.0)\nsource_bdry = constant(-0.5)\n",
    );
    let s = commands::setup(&cfg).map_err(|e| e.to_string())?;
    let traj = stepper::run_quiet(&s.data, &s.params, &s.ops).map_err(|e| e.to_string())?;
    let (m0, g0) = diagnostics::augmented_masses(&traj.states[0], s.params.h, &s.ops);
    let (mut db, mut dg) = (0.0f64, 0.0f64);
    for st in &traj.states {
        let (m, g) = diagnostics::augmented_masses(st, s.params.h, &s.ops);
        db = db.max((m - m0).abs());
        dg = dg.max((g - g0).abs());
    }
    ensure(db <= 1e-9 && dg <= 1e-9, format!("drift bulk {db:e}, boundary {dg:e}"))?;
    Ok(format!("{} steps, drift bulk {db:.1e}, boundary {dg:.1e}", traj.len() - 1))
}

fn energy_dissipation() -> Outcome {
    let cfg = config("potential = regular\ninitial = random(0.3, 11)\n");
    let s = commands::setup(&cfg).map_err(|e| e.to_string())?;
    ensure(stepper::step_guard(&s.params, &s.pair).ok, "h violates the guard".into())?;
    let traj = stepper::run_quiet(&s.data, &s.params, &s.ops).map_err(|e| e.to_string())?;
    let steps = traj.len() - 1;
    ensure(steps >= 250, format!("only {steps} steps"))?;
    let l: Vec<f64> =
        traj.states.iter().map(|st| diagnostics::lyapunov(st, &s.pair, s.params.eps, s.params.h, &s.ops)).collect();
    let rise = l.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    ensure(rise <= 1e-10, format!("largest per-step increase {rise:e}"))?;
    Ok(format!("{steps} steps, L from {:.6} to {:.6}, largest change {rise:.2e}", l[0], l[steps]))
}

fn interpolant_identity() -> Outcome {
    let cfg = config("potential = regular\n");
    let s = commands::setup(&cfg).map_err(|e| e.to_string())?;
    let random = interpolant_identity_deviation(&s.ops, 20, 99)?;
    // and on genuine scheme output
    let cfg = config("potential = regular\ninitial = random(0.3, 5)\nt_final = 0.02\n");
    let s = commands::setup(&cfg).map_err(|e| e.to_string())?;
    let traj = stepper::run_quiet(&s.data, &s.params, &s.ops).map_err(|e| e.to_string())?;
    let (lhs, rhs) = interpolation_gap(&traj, &s.ops).map_err(|e| e.to_string())?;
    let scheme = (lhs - rhs).abs() / rhs;
    ensure(random <= 1e-12 && scheme <= 1e-12, format!("relative deviation {random:e} / {scheme:e}"))?;
    Ok(format!("relative deviation {random:.1e} (random), {scheme:.1e} (scheme)"))
}

fn oracle_equivalence() -> Outcome {
    let dev = oracle_deviation()?;
    ensure(dev <= 1e-8, format!("max deviation {dev:e}"))?;
    Ok(format!("max deviation {dev:.1e} over three families"))
}

fn sweep_dir(name: &str) -> tempfile::TempDir {
    tempfile::Builder::new().prefix(name).tempdir().expect("temp dir")
}

fn sup_distances(table: &SweepTable) -> Result<Vec<f64>, String> {
    if let Some(r) = table.rows.iter().find(|r| r.error.is_some()) {
        return Err(format!("member {} failed: {}", r.value, r.error.as_deref().unwrap_or("")));
    }
    table.sup_distances().into_iter().map(|d| d.ok_or_else(|| "missing distance".to_string())).collect()
}

/// Smooth data shared by the step-size and viscosity ladders.
const SMOOTH: &str = "potential = regular\ninitial = radial-bump(0.5, 0.5)\nperturb = mode(0.2, 1)\n";

fn h_convergence() -> Outcome {
    // 0.24 is a whole number of steps for every member of the ladder
    let cfg = config(&format!("{SMOOTH}t_final = 0.24\n"));
    let dir = sweep_dir("h-ladder");
    let table = commands::sweep(&cfg, Axis::H, &[4e-3, 2e-3, 1e-3], 1, dir.path()).map_err(|e| e.to_string())?;
    let d = sup_distances(&table)?;
    let ratio = d[0] / d[1];
    ensure(ratio >= 1.5, format!("distances {:.3e}, {:.3e}: contraction {ratio:.3}", d[0], d[1]))?;
    Ok(format!("distances {:.3e}, {:.3e}, contraction {ratio:.2}", d[0], d[1]))
}

fn eps_relaxation() -> Outcome {
    let cfg = config("potential = obstacle\nc2 = 1\ninitial = mode(1.0, 1)\nh = 4e-3\nt_final = 2\n");
    let dir = sweep_dir("eps-ladder");
    let table = commands::sweep(&cfg, Axis::Eps, &[0.4, 0.2, 0.1, 0.05], 1, dir.path()).map_err(|e| e.to_string())?;
    sup_distances(&table)?;
    let viol: Vec<f64> = table.rows.iter().map(|r| r.obstacle_violation.unwrap_or(f64::NAN)).collect();
    let apriori: Vec<f64> = table.rows.iter().map(|r| r.apriori_max.unwrap_or(f64::NAN)).collect();
    let decreasing = viol.windows(2).all(|w| w[1] < w[0]);
    let last_small = viol[3] <= viol[0] / 4.0;
    let spread = apriori.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        / apriori.iter().cloned().fold(f64::INFINITY, f64::min);
    let detail = format!(
        "violations {}; a priori spread {spread:.2}",
        viol.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(", ")
    );
    ensure(decreasing && last_small && spread <= 2.0, detail.clone())?;
    Ok(detail)
}

fn continuous_dependence() -> Outcome {
    let base = config("potential = regular\ninitial = radial-bump(0.5, 0.5)\n");
    let s0 = commands::setup(&base).map_err(|e| e.to_string())?;
    let t0 = stepper::run_quiet(&s0.data, &s0.params, &s0.ops).map_err(|e| e.to_string())?;
    let mut ratios = Vec::new();
    for delta in [1e-1, 1e-2, 1e-3] {
        let mut cfg = base.clone();
        cfg.perturb = Some(InitialPreset::Mode { a: delta, k: 1 });
        let s = commands::setup_on(&cfg, s0.ops.clone()).map_err(|e| e.to_string())?;
        let t = stepper::run_quiet(&s.data, &s.params, &s.ops).map_err(|e| e.to_string())?;
        let rep = diagnostics::cont_dep(&t0, &t, &s0.data, &s.data, &s0.ops).map_err(|e| e.to_string())?;
        ensure(rep.lhs <= 1e3 * rep.rhs, format!("delta {delta}: lhs {:e} > 1e3 rhs {:e}", rep.lhs, rep.rhs))?;
        ratios.push(rep.ratio.ok_or("zero right-hand side")?);
    }
    let spread = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        / ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let detail = format!(
        "ratios {}; spread {spread:.4}",
        ratios.iter().map(|r| format!("{r:.4}")).collect::<Vec<_>>().join(", ")
    );
    ensure(spread <= 2.0, detail.clone())?;
    Ok(detail)
}

fn viscous_limit() -> Outcome {
    let cfg = config(SMOOTH);
    let dir = sweep_dir("visc-ladder");
    let table = commands::sweep(&cfg, Axis::Visc, &[0.2, 0.1, 0.05], 1, dir.path()).map_err(|e| e.to_string())?;
    let d = sup_distances(&table)?;
    ensure(d[1] < d[0], format!("distances {:.4e}, {:.4e} do not decrease", d[0], d[1]))?;
    Ok(format!("distances {:.4e}, {:.4e}", d[0], d[1]))
}

fn run_csv(cfg: &RunConfig, out: &Path) -> Result<Vec<u8>, String> {
    let code = commands::cmd_run(cfg, out);
    ensure(code == commands::EXIT_OK, format!("cmd_run exited with {code}"))?;
    fs::read(out.join("diagnostics.csv")).map_err(|e| e.to_string())
}

fn determinism() -> Outcome {
    let cfg = config("potential = obstacle\ninitial = random(0.3, 42)\nsource_bulk = ramp(0.5)\n");
    let dir = sweep_dir("determinism");
    let a = run_csv(&cfg, &dir.path().join("a"))?;
    let b = run_csv(&cfg, &dir.path().join("b"))?;
    ensure(a == b, "CSV outputs differ".into())?;
    let ck = |d: &str| fs::read(dir.path().join(d).join("checkpoints.txt")).map_err(|e| e.to_string());
    ensure(ck("a")? == ck("b")?, "checkpoints differ".into())?;
    Ok(format!("{} identical CSV bytes", a.len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("graph suite", graph_suite),
        ("discrete mass conservation", mass_conservation),
        ("energy dissipation", energy_dissipation),
        ("interpolant identity", interpolant_identity),
        ("tiny-mesh oracle equivalence", oracle_equivalence),
        ("h-convergence", h_convergence),
        ("eps-relaxation (obstacle)", eps_relaxation),
        ("continuous dependence", continuous_dependence),
        ("viscous limit", viscous_limit),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failures = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let id = (k + 1).to_string();
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id:>2} PASS  {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failures += 1;
                println!("criterion {id:>2} FAIL  {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    if failures > 0 {
        std::process::exit(1);
    }
}
