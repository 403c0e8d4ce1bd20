//! Experiment drivers behind the subcommands.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use bulksurf_core::diagnostics::{self, CauchyDistance, ContDepReport, DiagError};
use bulksurf_core::diskfem::{assemble, gen_disk_mesh, DiscreteOperators, DiskFemError, DiskMesh};
use bulksurf_core::graphs::PotentialPair;
use bulksurf_core::stepper::{self, ProblemData, RunFailure, SchemeParams, Trajectory, ValidationFailure};
use thiserror::Error;

use crate::config::{ConfigError, MeshSpec, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Mesh(#[from] DiskFemError),
    #[error(transparent)]
    Validation(#[from] ValidationFailure),
    #[error("{0}")]
    Guard(String),
    #[error(transparent)]
    Solver(#[from] Box<RunFailure>),
    #[error(transparent)]
    Diag(#[from] DiagError),
    #[error("{0}")]
    Usage(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(ConfigError::Io { .. }) | CliError::Io { .. } => EXIT_FAILURE,
            CliError::Config(_)
            | CliError::Mesh(_)
            | CliError::Validation(_)
            | CliError::Guard(_)
            | CliError::Usage(_)
            | CliError::Diag(DiagError::MeanMismatch { .. }) => EXIT_INVALID,
            CliError::Solver(_) => EXIT_SOLVER,
            CliError::Diag(_) => EXIT_FAILURE,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

pub fn load_mesh(spec: &MeshSpec) -> Result<DiskMesh, CliError> {
    match spec {
        MeshSpec::Disk { rings, sectors } => Ok(gen_disk_mesh(*rings, *sectors)?),
        MeshSpec::File(path) => {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            Ok(DiskMesh::from_text(&text)?)
        }
    }
}

/// Everything a run needs, built from a configuration.
#[derive(Debug, Clone)]
pub struct Setup {
    pub ops: DiscreteOperators,
    pub data: ProblemData,
    pub params: SchemeParams,
    pub pair: PotentialPair,
}

pub fn setup(cfg: &RunConfig) -> Result<Setup, CliError> {
    cfg.check()?;
    let ops = assemble(&load_mesh(&cfg.mesh)?)?;
    Ok(setup_on(cfg, ops)?)
}

/// [`setup`] on already assembled operators.
pub fn setup_on(cfg: &RunConfig, ops: DiscreteOperators) -> Result<Setup, ConfigError> {
    let pair = cfg.pair()?;
    let mut phi0 = cfg.initial.field(&ops.mesh);
    if let Some(p) = &cfg.perturb {
        for (x, d) in phi0.iter_mut().zip(p.field(&ops.mesh)) {
            *x += d;
        }
    }
    let data = ProblemData::from_bulk(&ops, phi0, pair)
        .with_sources(cfg.source_bulk.source(ops.n_bulk()), cfg.source_bdry.source(ops.n_bdry()));
    Ok(Setup { ops, data, params: cfg.params(), pair })
}

/// Result of [`execute_run`].
#[derive(Debug)]
pub struct RunOutput {
    pub trajectory: Trajectory,
    pub csv: String,
    pub warnings: Vec<String>,
}

/// Validate, run, and write `diagnostics.csv` and `checkpoints.txt` into
/// `out`. On solver failure the partial outputs are written before the
/// error is returned.
pub fn execute_run(cfg: &RunConfig, s: &Setup, out: &Path) -> Result<RunOutput, CliError> {
    let report = stepper::validate(&s.data, &s.params, &s.ops, cfg.strong_checks)?;
    let mut warnings = Vec::new();
    if let Some(reason) = report.guard.reason() {
        let msg = format!("{reason}: h = {} vs h_max = {}", s.params.h, report.guard.h_max);
        if cfg.strict_guard {
            return Err(CliError::Guard(msg));
        }
        warnings.push(msg);
    }
    fs::create_dir_all(out).map_err(io_err(out))?;
    let result = stepper::run_quiet(&s.data, &s.params, &s.ops);
    let (traj, failure) = match result {
        Ok(t) => (t, None),
        Err(f) => (*f.partial.clone(), Some(f)),
    };
    let csv = diagnostics::to_csv(&diagnostics::records(&traj, &s.pair, &s.ops), cfg.stride);
    let csv_path = out.join("diagnostics.csv");
    fs::write(&csv_path, &csv).map_err(io_err(&csv_path))?;
    let ck_path = out.join("checkpoints.txt");
    fs::write(&ck_path, stepper::write_checkpoints(&traj, cfg.stride)).map_err(io_err(&ck_path))?;
    if let Some(f) = failure {
        return Err(CliError::Solver(Box::new(f)));
    }
    Ok(RunOutput { trajectory: traj, csv, warnings })
}

/// `run` subcommand: prints a summary and returns the exit status.
pub fn cmd_run(cfg: &RunConfig, out: &Path) -> i32 {
    let result = setup(cfg).and_then(|s| execute_run(cfg, &s, out).map(|o| (s, o)));
    match result {
        Ok((s, o)) => {
            for w in &o.warnings {
                eprintln!("warning: {w}");
            }
            let last = o.trajectory.last();
            let recs = diagnostics::records(&o.trajectory, &s.pair, &s.ops);
            let (first, end) = (&recs[0], &recs[recs.len() - 1]);
            println!("steps: {}  final time: {}", last.n, last.t);
            println!("lyapunov: {:.10e} -> {:.10e}", first.lyapunov, end.lyapunov);
            println!(
                "augmented mass drift: bulk {:.3e}, boundary {:.3e}",
                (end.mass_bulk_aug - first.mass_bulk_aug).abs(),
                (end.mass_bdry_aug - first.mass_bdry_aug).abs()
            );
            if o.trajectory.outside_theory {
                println!("note: trajectory is outside the discrete well-posedness theory");
            }
            println!("outputs written to {}", out.display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    H,
    Eps,
    Visc,
}

impl std::str::FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "h" => Ok(Axis::H),
            "eps" => Ok(Axis::Eps),
            "visc" => Ok(Axis::Visc),
            _ => Err(format!("unknown sweep axis '{s}' (expected h, eps or visc)")),
        }
    }
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Axis::H => "h",
            Axis::Eps => "eps",
            Axis::Visc => "visc",
        })
    }
}

/// One ladder member of a sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    /// `None` on success, the failure message otherwise.
    pub error: Option<String>,
    pub obstacle_violation: Option<f64>,
    pub apriori_max: Option<f64>,
    /// Distance to the next member of the ladder.
    pub distance: Option<CauchyDistance>,
    /// `log(d_k / d_{k+1}) / log(v_k / v_{k+1})` from the sup distances.
    pub rate: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepTable {
    pub axis: Axis,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn sup_distances(&self) -> Vec<Option<f64>> {
        self.rows[..self.rows.len() - 1].iter().map(|r| r.distance.map(|d| d.sup_total())).collect()
    }

    pub fn render(&self) -> String {
        let mut s = String::from("axis,value,status,sup_distance,l2v_distance,rate,obstacle_violation,apriori_max\n");
        let opt = |x: Option<f64>| x.map_or(String::from("-"), |v| format!("{v:.16e}"));
        for r in &self.rows {
            let status = r.error.as_deref().map_or("ok".to_string(), |e| format!("failed: {}", e.replace(',', ";")));
            let rate = match (r.distance, r.rate) {
                (Some(d), _) if d.sup_total() == 0.0 => "exact".to_string(),
                (_, rate) => opt(rate),
            };
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                self.axis,
                r.value,
                status,
                opt(r.distance.map(|d| d.sup_total())),
                opt(r.distance.map(|d| d.l2v_total())),
                rate,
                opt(r.obstacle_violation),
                opt(r.apriori_max)
            );
        }
        s
    }
}

fn member_config(base: &RunConfig, axis: Axis, v: f64) -> RunConfig {
    let mut c = base.clone();
    match axis {
        Axis::H => c.h = v,
        Axis::Eps => c.eps = v,
        Axis::Visc => {
            c.tau = v;
            c.sigma = v;
        }
    }
    c
}

/// Runs every ladder member (on `workers` threads when built with the
/// `parallel` feature) and tabulates successive distances. Member outputs go
/// to `out/<axis>_<k>/`.
pub fn sweep(base: &RunConfig, axis: Axis, ladder: &[f64], workers: usize, out: &Path) -> Result<SweepTable, CliError> {
    if ladder.len() < 3 {
        return Err(CliError::Usage(format!("a ladder needs at least 3 values, got {}", ladder.len())));
    }
    if ladder.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(CliError::Usage("ladder must be strictly decreasing".into()));
    }
    base.check()?;
    let ops = assemble(&load_mesh(&base.mesh)?)?;
    let configs: Vec<(usize, RunConfig)> =
        ladder.iter().enumerate().map(|(k, &v)| (k, member_config(base, axis, v))).collect();
    let run_member = |(k, cfg): (usize, RunConfig)| -> Result<(Setup, Trajectory), String> {
        cfg.check().map_err(|e| e.to_string())?;
        let s = setup_on(&cfg, ops.clone()).map_err(|e| e.to_string())?;
        let dir = out.join(format!("{axis}_{k}"));
        let o = execute_run(&cfg, &s, &dir).map_err(|e| e.to_string())?;
        Ok((s, o.trajectory))
    };
    let results = run_pool(workers, configs, run_member);

    let mut rows: Vec<SweepRow> = ladder
        .iter()
        .zip(&results)
        .map(|(&value, r)| {
            let (violation, apriori) = match r {
                Ok((s, t)) if axis == Axis::Eps => (
                    Some(diagnostics::obstacle_violation(t)),
                    Some(diagnostics::apriori_monitor(t, &s.pair, &s.ops).max()),
                ),
                _ => (None, None),
            };
            SweepRow {
                value,
                error: r.as_ref().err().cloned(),
                obstacle_violation: violation,
                apriori_max: apriori,
                distance: None,
                rate: None,
            }
        })
        .collect();
    for k in 0..ladder.len() - 1 {
        if let (Ok((_, a)), Ok((_, b))) = (&results[k], &results[k + 1]) {
            match diagnostics::cauchy_distance(a, b, &ops) {
                Ok(d) => rows[k].distance = Some(d),
                Err(e) => rows[k].error = Some(e.to_string()),
            }
        }
    }
    for k in 0..ladder.len().saturating_sub(2) {
        if let (Some(d0), Some(d1)) = (rows[k].distance, rows[k + 1].distance) {
            let (a, b) = (d0.sup_total(), d1.sup_total());
            if a > 0.0 && b > 0.0 {
                rows[k].rate = Some((a / b).ln() / (ladder[k] / ladder[k + 1]).ln());
            }
        }
    }
    let table = SweepTable { axis, rows };
    fs::create_dir_all(out).map_err(io_err(out))?;
    let path = out.join(format!("sweep_{axis}.csv"));
    fs::write(&path, table.render()).map_err(io_err(&path))?;
    Ok(table)
}

#[cfg(feature = "parallel")]
fn run_pool<I, T, F>(workers: usize, items: Vec<I>, f: F) -> Vec<T>
where
    I: Send,
    T: Send,
    F: Fn(I) -> T + Sync + Send,
{
    match rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build() {
        Ok(pool) => pool.install(|| bulksurf_core::par::map_items(items, f)),
        Err(_) => items.into_iter().map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn run_pool<I, T, F>(_workers: usize, items: Vec<I>, f: F) -> Vec<T>
where
    F: Fn(I) -> T,
{
    items.into_iter().map(f).collect()
}

pub fn cmd_sweep(cfg: &RunConfig, axis: Axis, ladder: &[f64], workers: usize, out: &Path) -> i32 {
    match sweep(cfg, axis, ladder, workers, out) {
        Ok(table) => {
            print!("{}", table.render());
            if table.rows.iter().any(|r| r.error.is_some()) {
                EXIT_FAILURE
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs both configurations on the mesh of the first and compares them.
pub fn contdep(a: &RunConfig, b: &RunConfig, out: &Path) -> Result<ContDepReport, CliError> {
    if a.mesh != b.mesh || a.h != b.h || a.t_final != b.t_final {
        return Err(CliError::Usage("contdep configurations must share mesh, h and t_final".into()));
    }
    let sa = setup(a)?;
    let sb = setup_on(b, sa.ops.clone())?;
    // check the mean hypothesis before spending time on the runs
    let same_mean = |x: f64, y: f64| (x - y).abs() <= diagnostics::MEAN_TOL;
    let (ma, mb) = (sa.ops.mean_bulk(&sa.data.phi0), sa.ops.mean_bulk(&sb.data.phi0));
    if !same_mean(ma, mb) {
        return Err(DiagError::MeanMismatch { side: stepper::Side::Bulk, a: ma, b: mb }.into());
    }
    let (ga, gb) = (sa.ops.mean_bdry(&sa.data.psi0), sa.ops.mean_bdry(&sb.data.psi0));
    if !same_mean(ga, gb) {
        return Err(DiagError::MeanMismatch { side: stepper::Side::Boundary, a: ga, b: gb }.into());
    }
    let ta = execute_run(a, &sa, &out.join("a"))?.trajectory;
    let tb = execute_run(b, &sb, &out.join("b"))?.trajectory;
    Ok(diagnostics::cont_dep(&ta, &tb, &sa.data, &sb.data, &sa.ops)?)
}

pub fn cmd_contdep(a: &RunConfig, b: &RunConfig, out: &Path) -> i32 {
    match contdep(a, b, out) {
        Ok(rep) => {
            println!("lhs: {:.16e}", rep.lhs);
            println!("rhs: {:.16e}", rep.rhs);
            match rep.ratio {
                Some(r) => println!("ratio: {r:.16e}"),
                None => println!("ratio: undefined (identical data)"),
            }
            if rep.lhs <= a.ratio_cap * rep.rhs {
                EXIT_OK
            } else {
                eprintln!("lhs exceeds {} x rhs", a.ratio_cap);
                EXIT_FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Mesh summary text.
pub fn mesh_info(mesh: &DiskMesh) -> String {
    let min_area = (0..mesh.triangles.len()).map(|t| mesh.triangle_area(t)).fold(f64::INFINITY, f64::min);
    let mut s = String::new();
    let _ = writeln!(s, "vertices: {}", mesh.n_bulk());
    let _ = writeln!(s, "boundary vertices: {}", mesh.n_bdry());
    let _ = writeln!(s, "triangles: {}", mesh.triangles.len());
    let _ = writeln!(s, "area: {:.15}", mesh.area());
    let _ = writeln!(s, "boundary length: {:.15}", mesh.boundary_length());
    let _ = writeln!(s, "smallest triangle area: {min_area:.3e}");
    s
}

pub fn cmd_mesh_info(spec: &MeshSpec, write_to: Option<&Path>) -> i32 {
    let mesh = match load_mesh(spec).and_then(|m| m.validate().map(|_| m).map_err(CliError::from)) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    print!("{}", mesh_info(&mesh));
    if let Some(path) = write_to {
        if let Err(e) = fs::write(path, mesh.to_text()) {
            eprintln!("error: cannot write {}: {e}", path.display());
            return EXIT_FAILURE;
        }
    }
    EXIT_OK
}
