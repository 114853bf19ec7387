mod output;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use qcl_core::audit::{run_audit, AuditConfig, ChallengeSpec};
use qcl_core::controllability::{endpoint_jacobian, system_lie_rank};
use qcl_core::counterexample::{
    cx_eval, cx_grad, cx_hessian, cx_level_crossings, cx_range_scan, cx_slice_criticals, CxLandscape,
    CX_MARGIN, RANGE_RESOLUTION, TRANSVERSALITY_RESOLUTION,
};
use qcl_core::critpoints::{classify, ClassifyConfig};
use qcl_core::document::{encode_matrix, parse_controls, LoadedSpec, SpecDocument};
use qcl_core::error::QclError;
use qcl_core::landscape::{fmt17, scan_grid, ControlLandscape, ScanAxis};
use qcl_core::linalg::CMat;
use qcl_core::model::{validate_system, ControlVector};
use qcl_core::propagate::{fidelity_mixed, fidelity_pure, propagate_lindblad, propagate_state, pure_density};

use output::{OutputDir, RunManifest, MANIFEST_NAME};

const EXIT_VALIDATION: u8 = 1;
const EXIT_NUMERIC: u8 = 2;
const EXIT_USAGE: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "qcl", version, about = "Quantum control landscape analysis")]
struct Cli {
    /// Directory that receives every file a command writes.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Cap on worker threads (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// System checks.
    #[command(subcommand)]
    Model(ModelCmd),
    /// Propagate from psi0 under fixed controls.
    Propagate(PropagateArgs),
    /// Landscape scans.
    #[command(subcommand)]
    Landscape(LandscapeCmd),
    /// Critical-point search and classification.
    #[command(subcommand)]
    Crit(CritCmd),
    /// Controllability diagnostics.
    #[command(subcommand)]
    Ctrl(CtrlCmd),
    /// The analytic two-parameter counterexample.
    #[command(subcommand)]
    Cx(CxCmd),
    /// Multistart trap audits.
    #[command(subcommand)]
    Audit(AuditCmd),
}

#[derive(Args, Debug)]
struct OutArg {
    /// Write the result here (relative to --out-dir) instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum ModelCmd {
    Validate {
        spec: PathBuf,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Args, Debug)]
struct PropagateArgs {
    spec: PathBuf,
    /// Control vector, a JSON array or {"eps": [...]}.
    #[arg(long)]
    eps: PathBuf,
    /// Integrate the Lindblad equation even for a closed system.
    #[arg(long)]
    lindblad: bool,
    /// Density-matrix entry "i,j" to record (repeatable; default: diagonal).
    #[arg(long = "entry", value_parser = parse_entry)]
    entries: Vec<(usize, usize)>,
    /// CSV of the recorded entries at every step boundary.
    #[arg(long)]
    trajectory: Option<PathBuf>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Subcommand, Debug)]
enum LandscapeCmd {
    /// Dense scan over one or two free parameters.
    Scan {
        spec: PathBuf,
        /// "i:lo:hi:n" or "i:lo:hi:n,j:lo:hi:n".
        #[arg(long, value_parser = parse_axes, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        axes: Vec<ScanAxis>,
        /// Values of the parameters held fixed (default: all zero).
        #[arg(long)]
        at: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct TolArgs {
    #[arg(long)]
    tol_g: Option<f64>,
    #[arg(long)]
    tol_h_rel: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum CritCmd {
    /// Multistart ascent and classification of the distinct terminals.
    Find {
        spec: PathBuf,
        #[arg(long, default_value_t = 20)]
        starts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        tol: TolArgs,
        #[command(flatten)]
        out: OutArg,
    },
    /// Hessian classification of a supplied point.
    Classify {
        spec: PathBuf,
        #[arg(long)]
        at: PathBuf,
        #[command(flatten)]
        tol: TolArgs,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Subcommand, Debug)]
enum CtrlCmd {
    /// Dimension of the dynamical Lie algebra of {h0, dipole}.
    Lie {
        spec: PathBuf,
        #[command(flatten)]
        out: OutArg,
    },
    /// Rank of the endpoint map's Jacobian at a control point.
    Jacobian {
        spec: PathBuf,
        #[arg(long)]
        at: PathBuf,
        #[arg(long)]
        include_phase: bool,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Subcommand, Debug)]
enum CxCmd {
    /// J, gradient and Hessian at one point.
    Eval {
        #[arg(long, allow_hyphen_values = true)]
        eps1: f64,
        #[arg(long, allow_hyphen_values = true)]
        eps2: f64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Interior critical points of the slices ε2 = c (several c give an array).
    Slice {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        c: Vec<f64>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Slices whose interior critical value equals J0.
    Transversality {
        #[arg(long, allow_hyphen_values = true)]
        j0: f64,
        #[arg(long, default_value_t = TRANSVERSALITY_RESOLUTION)]
        resolution: usize,
        #[command(flatten)]
        out: OutArg,
    },
    /// Per-slice extremes over the margin-shrunk box.
    Rangescan {
        #[arg(long, default_value_t = RANGE_RESOLUTION)]
        resolution: usize,
        #[arg(long, default_value_t = CX_MARGIN)]
        margin: f64,
        #[command(flatten)]
        out: OutArg,
    },
    /// 2D scan CSV over the margin-shrunk box.
    Scan {
        #[arg(long, default_value_t = 201)]
        resolution: usize,
        #[arg(long, default_value_t = CX_MARGIN)]
        margin: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
enum AuditCmd {
    Run {
        challenge: PathBuf,
        #[arg(long, default_value_t = 200)]
        starts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        delta_success: Option<f64>,
        #[command(flatten)]
        tol: TolArgs,
        /// Per-run CSV, relative to --out-dir.
        #[arg(long)]
        runs_csv: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_entry(s: &str) -> Result<(usize, usize), String> {
    let (i, j) = s.split_once(',').ok_or_else(|| format!("entry {s:?} is not \"i,j\""))?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("entry {s:?}: {e}"));
    Ok((p(i)?, p(j)?))
}

fn parse_axes(s: &str) -> Result<ScanAxis, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 4 {
        return Err(format!("axis {s:?} is not \"i:lo:hi:n\""));
    }
    let index = parts[0].trim().parse().map_err(|e| format!("axis {s:?}: {e}"))?;
    let lo = parts[1].trim().parse().map_err(|e| format!("axis {s:?}: {e}"))?;
    let hi = parts[2].trim().parse().map_err(|e| format!("axis {s:?}: {e}"))?;
    let resolution = parts[3].trim().parse().map_err(|e| format!("axis {s:?}: {e}"))?;
    Ok(ScanAxis { index, lo, hi, resolution })
}

#[derive(Debug)]
struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    fn validation(message: impl Into<String>) -> Self {
        Self { code: EXIT_VALIDATION, message: message.into() }
    }
}

impl From<QclError> for CliError {
    fn from(e: QclError) -> Self {
        let code = if e.is_validation() || matches!(e, QclError::Dimension { .. }) {
            EXIT_VALIDATION
        } else if e.is_numeric() {
            EXIT_NUMERIC
        } else {
            EXIT_USAGE
        };
        Self { code, message: e.to_string() }
    }
}

impl From<output::OutputError> for CliError {
    fn from(e: output::OutputError) -> Self {
        Self::usage(e.0)
    }
}

/// Per-invocation bookkeeping for the manifest.
struct Run {
    out: OutputDir,
    inputs: Vec<String>,
    seed: Option<u64>,
    overrides: BTreeMap<String, f64>,
}

impl Run {
    fn input(&mut self, path: &Path) -> Result<String, CliError> {
        if !path.is_file() {
            return Err(CliError::usage(format!("input file {} not found", path.display())));
        }
        self.inputs.push(path.display().to_string());
        std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
    }

    fn spec(&mut self, path: &Path) -> Result<LoadedSpec, CliError> {
        let text = self.input(path)?;
        Ok(SpecDocument::from_json(&text)?.load()?)
    }

    fn controls(&mut self, path: &Path) -> Result<Vec<f64>, CliError> {
        let text = self.input(path)?;
        Ok(parse_controls(&text)?)
    }

    fn classify_config(&mut self, tol: &TolArgs, base: ClassifyConfig) -> ClassifyConfig {
        let mut cfg = base;
        if let Some(v) = tol.tol_g {
            cfg.tol_g = v;
            self.overrides.insert("tol_g".into(), v);
        }
        if let Some(v) = tol.tol_h_rel {
            cfg.tol_h_rel = v;
            self.overrides.insert("tol_h_rel".into(), v);
        }
        cfg
    }

    /// JSON result to the --out file, or stdout.
    fn emit<T: Serialize>(&mut self, out: &OutArg, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("result serializes");
        text.push('\n');
        match &out.out {
            Some(p) => self.out.write(p, &text)?,
            None => print!("{text}"),
        }
        Ok(())
    }
}

fn landscape(spec: &LoadedSpec) -> Result<ControlLandscape, CliError> {
    Ok(ControlLandscape::new(
        spec.system.clone(),
        spec.shaper.clone(),
        spec.grid,
        spec.psi0.clone(),
        spec.target.clone(),
    )?)
}

fn execute(command: &Command, run: &mut Run) -> Result<(), CliError> {
    match command {
        Command::Model(ModelCmd::Validate { spec, out }) => {
            let loaded = run.spec(spec)?;
            let report = validate_system(&loaded.system);
            run.emit(out, &report)?;
            if !report.passed {
                return Err(CliError::validation(report.problems.join("; ")));
            }
        }
        Command::Propagate(args) => propagate(args, run)?,
        Command::Landscape(LandscapeCmd::Scan { spec, axes, at, out }) => {
            let loaded = run.spec(spec)?;
            let f = landscape(&loaded)?;
            let base = match at {
                Some(p) => run.controls(p)?,
                None => vec![0.0; loaded.shaper.n_params()],
            };
            let scan = scan_grid(&f, &base, axes)?;
            run.out.write(out, &scan.to_csv())?;
        }
        Command::Crit(CritCmd::Find { spec, starts, seed, tol, out }) => {
            let loaded = run.spec(spec)?;
            run.seed = Some(*seed);
            let mut cfg = AuditConfig { n_starts: *starts, seed: *seed, ..Default::default() };
            cfg.classify = run.classify_config(tol, cfg.classify);
            if let Some(v) = tol.tol_g {
                cfg.ascent.tol_g = v;
            }
            let report = run_audit(&ChallengeSpec::try_from(loaded)?, &cfg)?;
            let points: Vec<_> = report.clusters.iter().filter_map(|c| c.representative.clone()).collect();
            let value = json!({
                "n_starts": report.n_starts,
                "rng_seed": report.rng_seed,
                "n_converged": report.n_converged,
                "n_failed": report.n_failed,
                "clusters": report.clusters.iter().map(|c| json!({
                    "cluster_id": c.cluster_id,
                    "representative_index": c.representative_index,
                    "member_count": c.member_count,
                })).collect::<Vec<_>>(),
                "critical_points": points,
            });
            run.emit(out, &value)?;
        }
        Command::Crit(CritCmd::Classify { spec, at, tol, out }) => {
            let loaded = run.spec(spec)?;
            let x = run.controls(at)?;
            let f = landscape(&loaded)?;
            let cfg = run.classify_config(tol, ClassifyConfig::default());
            let cp = classify(&f, &x, &cfg)?;
            run.emit(out, &cp)?;
        }
        Command::Ctrl(CtrlCmd::Lie { spec, out }) => {
            let loaded = run.spec(spec)?;
            let report = system_lie_rank(&loaded.system)?;
            run.emit(out, &report)?;
        }
        Command::Ctrl(CtrlCmd::Jacobian { spec, at, include_phase, out }) => {
            let loaded = run.spec(spec)?;
            let x = ControlVector::new(run.controls(at)?, &loaded.shaper)?;
            let report = endpoint_jacobian(&loaded.system, &loaded.shaper, &x, &loaded.grid, *include_phase)?;
            run.emit(out, &report)?;
        }
        Command::Cx(cmd) => counterexample(cmd, run)?,
        Command::Audit(AuditCmd::Run { challenge, starts, seed, delta_success, tol, runs_csv, out }) => {
            let loaded = run.spec(challenge)?;
            run.seed = Some(*seed);
            let mut cfg = AuditConfig { n_starts: *starts, seed: *seed, ..Default::default() };
            if let Some(d) = delta_success {
                cfg.delta_success = *d;
                run.overrides.insert("delta_success".into(), *d);
            }
            cfg.classify = run.classify_config(tol, cfg.classify);
            if let Some(v) = tol.tol_g {
                cfg.ascent.tol_g = v;
            }
            if *starts == 0 {
                return Err(CliError::usage("--starts must be positive"));
            }
            let report = run_audit(&ChallengeSpec::try_from(loaded)?, &cfg)?;
            let mut text = report.to_json();
            text.push('\n');
            run.out.write(out, &text)?;
            if let Some(p) = runs_csv {
                run.out.write(p, &report.runs_csv())?;
            }
        }
    }
    Ok(())
}

fn density_entries(rho: &CMat, entries: &[(usize, usize)], line: &mut String) {
    for &(i, j) in entries {
        let z = rho[(i, j)];
        let _ = write!(line, ",{},{}", fmt17(z.re), fmt17(z.im));
    }
}

fn propagate(args: &PropagateArgs, run: &mut Run) -> Result<(), CliError> {
    let loaded = run.spec(&args.spec)?;
    let eps = ControlVector::new(run.controls(&args.eps)?, &loaded.shaper)?;
    let n = loaded.system.dim;
    let entries: Vec<(usize, usize)> = if args.entries.is_empty() {
        (0..n).map(|k| (k, k)).collect()
    } else {
        args.entries.clone()
    };
    if let Some(&(i, j)) = entries.iter().find(|(i, j)| *i >= n || *j >= n) {
        return Err(CliError::usage(format!("entry ({i},{j}) outside a {n}x{n} matrix")));
    }
    let lindblad = args.lindblad || loaded.system.is_open();
    let (times, states, summary) = if lindblad {
        let traj = propagate_lindblad(&loaded.system, &loaded.shaper, &eps, &loaded.grid, &pure_density(&loaded.psi0))?;
        let j = fidelity_mixed(traj.final_state(), &loaded.target)?;
        let summary = json!({
            "dynamics": "lindblad",
            "J": j,
            "final_state": encode_matrix(traj.final_state()),
            "substeps": traj.substeps,
            "refinement_change": traj.refinement_change,
            "max_trace_deviation": traj.max_trace_deviation,
            "min_eigenvalue": traj.min_eigenvalue,
            "max_hermitian_defect": traj.max_hermitian_defect,
        });
        (traj.times, traj.states, summary)
    } else {
        let res = propagate_state(&loaded.system, &loaded.shaper, &eps, &loaded.grid, &loaded.psi0)?;
        let psis = res.trajectory.expect("state propagation records a trajectory");
        let j = fidelity_pure(psis.last().expect("non-empty"), &loaded.target)?;
        let summary = json!({
            "dynamics": "unitary",
            "J": j,
            "final_unitary": encode_matrix(&res.final_unitary),
        });
        let dt = loaded.grid.dt();
        let times = (0..psis.len()).map(|k| k as f64 * dt).collect();
        (times, psis.iter().map(pure_density).collect(), summary)
    };
    if let Some(p) = &args.trajectory {
        let mut csv = String::from("t");
        for (i, j) in &entries {
            let _ = write!(csv, ",re_rho_{i}_{j},im_rho_{i}_{j}");
        }
        csv.push('\n');
        for (t, rho) in times.iter().zip(&states) {
            csv.push_str(&fmt17(*t));
            density_entries(rho, &entries, &mut csv);
            csv.push('\n');
        }
        run.out.write(p, &csv)?;
    }
    run.emit(&args.out, &summary)
}

fn counterexample(cmd: &CxCmd, run: &mut Run) -> Result<(), CliError> {
    match cmd {
        CxCmd::Eval { eps1, eps2, out } => {
            let value = json!({
                "eps1": eps1,
                "eps2": eps2,
                "J": cx_eval(*eps1, *eps2)?,
                "grad": <[f64; 2]>::from(cx_grad(*eps1, *eps2)?),
                "hessian": cx_hessian(*eps1, *eps2)?,
            });
            run.emit(out, &value)
        }
        CxCmd::Slice { c, out } => {
            let rows = c.iter().map(|&v| cx_slice_criticals(v)).collect::<Result<Vec<_>, _>>()?;
            if rows.len() == 1 {
                run.emit(out, &rows[0])
            } else {
                run.emit(out, &rows)
            }
        }
        CxCmd::Transversality { j0, resolution, out } => {
            let crossings = cx_level_crossings(*j0, *resolution, CX_MARGIN)?;
            let value = json!({
                "J0": j0,
                "resolution": resolution,
                "c": crossings.iter().map(|x| x.c).collect::<Vec<_>>(),
                "crossings": crossings,
            });
            run.emit(out, &value)
        }
        CxCmd::Rangescan { resolution, margin, out } => {
            let scan = cx_range_scan(*resolution, *margin)?;
            run.emit(out, &scan)
        }
        CxCmd::Scan { resolution, margin, out } => {
            let f = CxLandscape::new(*margin)?;
            let edge = std::f64::consts::FRAC_PI_2 - margin;
            let axes: Vec<ScanAxis> = (0..2)
                .map(|index| ScanAxis { index, lo: -edge, hi: edge, resolution: *resolution })
                .collect();
            let scan = scan_grid(&f, &[0.0, 0.0], &axes)?;
            run.out.write(out, &scan.to_csv())?;
            Ok(())
        }
    }
}

fn command_name(command: &Command) -> &'static str {
    match command {
        Command::Model(_) => "model validate",
        Command::Propagate(_) => "propagate",
        Command::Landscape(_) => "landscape scan",
        Command::Crit(CritCmd::Find { .. }) => "crit find",
        Command::Crit(CritCmd::Classify { .. }) => "crit classify",
        Command::Ctrl(CtrlCmd::Lie { .. }) => "ctrl lie",
        Command::Ctrl(CtrlCmd::Jacobian { .. }) => "ctrl jacobian",
        Command::Cx(CxCmd::Eval { .. }) => "cx eval",
        Command::Cx(CxCmd::Slice { .. }) => "cx slice",
        Command::Cx(CxCmd::Transversality { .. }) => "cx transversality",
        Command::Cx(CxCmd::Rangescan { .. }) => "cx rangescan",
        Command::Cx(CxCmd::Scan { .. }) => "cx scan",
        Command::Audit(_) => "audit run",
    }
}

fn dispatch(argv: Vec<String>) -> Result<(), CliError> {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                print!("{e}");
                return Ok(());
            }
            _ => {
                return Err(CliError::usage(e.render().to_string().trim_end().to_string()));
            }
        },
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::usage(format!("thread pool: {e}")))?;
    }
    let started = Instant::now();
    let mut run = Run {
        out: OutputDir::new(&cli.out_dir),
        inputs: Vec::new(),
        seed: None,
        overrides: BTreeMap::new(),
    };
    let result = execute(&cli.command, &mut run);
    if !run.out.written().is_empty() {
        let manifest = RunManifest {
            command: command_name(&cli.command).to_string(),
            argv: argv.iter().skip(1).cloned().collect(),
            inputs: run.inputs.clone(),
            output_dir: run.out.root().display().to_string(),
            outputs: run.out.written().to_vec(),
            seed: run.seed,
            tolerance_overrides: run.overrides.clone(),
            threads: cli.threads,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_clock_seconds: started.elapsed().as_secs_f64(),
        };
        let path = run.out.resolve(Path::new(MANIFEST_NAME))?;
        output::write_atomic(&path, &manifest.to_json())?;
    }
    result
}

fn main() -> ExitCode {
    match dispatch(std::env::args().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if e.message.starts_with("error:") {
                eprintln!("{}", e.message);
            } else {
                eprintln!("error: {}", e.message);
            }
            ExitCode::from(e.code)
        }
    }
}
