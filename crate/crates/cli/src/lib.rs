//! Batch front end: preset/config parsing, subcommand dispatch, JSON
//! reports, and CSV/SVG artifact dumps. All solver output is funneled into
//! a single `report.json` whose bytes are a deterministic function of the
//! configuration and RNG seed.

pub mod config;

use std::fs;
use std::path::Path;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use config::{parse_energy_grid, RunConfig};
use tonelli_core::critical::{
    lambda_eval, lambda_somewhere_negative, small_loop_probe, CriticalOpts,
};
use tonelli_core::dump::{loop_csv, loop_from_csv, multicurve_svg};
use tonelli_core::error::Error;
use tonelli_core::homology::{solve_with_refinement, BoundingChain};
use tonelli_core::lagrangian::MagneticTonelliData;
use tonelli_core::loops::Multicurve;
use tonelli_core::search::{
    find_sphere_waist, full_spectrum, graph_theorem_check, minimal_boundary_search,
    minimax_orbits, randers_geodesic_census, waist_continuation_above_c0, SearchOpts,
    SearchReport,
};

#[derive(Debug, Parser)]
#[command(
    name = "tonelli",
    about = "Free-period action lab: minimal boundaries, critical values, and Randers geodesics on the torus and the sphere"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct CommonArgs {
    /// Key-value configuration file; command-line flags override it.
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    /// Preset name (torus-example, pendulum-torus, flat-torus-free,
    /// sphere-magnetic, round-sphere-free).
    #[arg(long)]
    pub preset: Option<String>,
    /// Energy level.
    #[arg(long)]
    pub energy: Option<f64>,
    /// Energy grid a:b:n.
    #[arg(long)]
    pub energy_grid: Option<String>,
    /// Number of search seeds.
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Samples per loop component.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Homology grid resolution K.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
    /// RNG seed; fixed seed means byte-identical reports.
    #[arg(long)]
    pub rng_seed: Option<u64>,
    /// Suppress CSV/SVG artifacts, write only report.json.
    #[arg(long)]
    pub json_only: bool,
    /// Independent runs (graph-check).
    #[arg(long)]
    pub runs: Option<usize>,
    /// Largest iterate for the minimax levels.
    #[arg(long)]
    pub m_max: Option<usize>,
    /// Randers parameter r.
    #[arg(long)]
    pub randers_r: Option<f64>,
    /// Probe curvature parameter a.
    #[arg(long)]
    pub probe_a: Option<f64>,
    /// Probe point x,y (defaults to the scan witness).
    #[arg(long)]
    pub point: Option<String>,
    /// Input curve CSV (repeatable, for decompose).
    #[arg(long)]
    pub curve: Vec<std::path::PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Energy thresholds e0, c, c0, cu with tolerances and method notes.
    Spectrum(CommonArgs),
    /// Multi-start minimal-boundary search at one energy.
    MinimalBoundary(CommonArgs),
    /// Graph-theorem consistency across independent searches.
    GraphCheck(CommonArgs),
    /// Continue the critical boundary to energies above c0.
    ContinueWaists(CommonArgs),
    /// Minimax values over paths to iterates of a waist.
    Minimax(CommonArgs),
    /// Lambda criterion scan and the small-loop action probe.
    ProbeLambda(CommonArgs),
    /// Randers closed-geodesic census on the sphere.
    RandersCensus(CommonArgs),
    /// Bounding-chain certificate for curves from CSV files.
    Decompose(CommonArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Spectrum(_) => "spectrum",
            Command::MinimalBoundary(_) => "minimal-boundary",
            Command::GraphCheck(_) => "graph-check",
            Command::ContinueWaists(_) => "continue-waists",
            Command::Minimax(_) => "minimax",
            Command::ProbeLambda(_) => "probe-lambda",
            Command::RandersCensus(_) => "randers-census",
            Command::Decompose(_) => "decompose",
        }
    }

    fn args(&self) -> &CommonArgs {
        match self {
            Command::Spectrum(a)
            | Command::MinimalBoundary(a)
            | Command::GraphCheck(a)
            | Command::ContinueWaists(a)
            | Command::Minimax(a)
            | Command::ProbeLambda(a)
            | Command::RandersCensus(a)
            | Command::Decompose(a) => a,
        }
    }
}

/// Outcome of one CLI invocation.
pub struct ExecOutcome {
    pub exit_code: i32,
    pub report_json: String,
}

fn resolve_config(args: &CommonArgs) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Invalid(format!("cannot read config {}: {e}", path.display())))?;
        cfg.apply_file(&text)?;
    }
    if let Some(p) = &args.preset {
        cfg.preset = Some(p.clone());
    }
    if let Some(e) = args.energy {
        cfg.energy = Some(e);
    }
    if let Some(g) = &args.energy_grid {
        cfg.energy_grid = Some(parse_energy_grid(g)?);
    }
    if let Some(s) = args.seeds {
        cfg.seeds = s;
    }
    if let Some(s) = args.samples {
        cfg.samples = s;
    }
    if let Some(g) = args.grid {
        cfg.grid = g;
    }
    if let Some(o) = &args.out {
        cfg.out = o.clone();
    }
    if let Some(r) = args.rng_seed {
        cfg.rng_seed = r;
    }
    if args.json_only {
        cfg.json_only = true;
    }
    if let Some(r) = args.runs {
        cfg.runs = r;
    }
    if let Some(m) = args.m_max {
        cfg.m_max = m;
    }
    if let Some(r) = args.randers_r {
        cfg.randers_r = Some(r);
    }
    if let Some(a) = args.probe_a {
        cfg.probe_a = a;
    }
    if let Some(p) = &args.point {
        let parts: Vec<&str> = p.split(',').collect();
        if parts.len() != 2 {
            return Err(Error::Invalid(format!("point '{p}' is not x,y")));
        }
        let x: f64 = parts[0]
            .trim()
            .parse()
            .map_err(|_| Error::Invalid(format!("bad point coordinate '{}'", parts[0])))?;
        let y: f64 = parts[1]
            .trim()
            .parse()
            .map_err(|_| Error::Invalid(format!("bad point coordinate '{}'", parts[1])))?;
        cfg.point = Some([x, y]);
    }
    if !args.curve.is_empty() {
        cfg.curves = args.curve.clone();
    }
    Ok(cfg)
}

fn search_opts(cfg: &RunConfig) -> SearchOpts<f64> {
    SearchOpts {
        seeds: cfg.seeds,
        n_samples: cfg.samples,
        grid_k: cfg.grid,
        rng_seed: cfg.rng_seed,
        ..Default::default()
    }
}

fn failure_json(err: &Error) -> serde_json::Value {
    json!({
        "kind": error_kind(err),
        "message": err.to_string(),
    })
}

fn error_kind(err: &Error) -> &'static str {
    match err {
        Error::ChartDomain(_) => "chart_domain",
        Error::RandersDomain { .. } => "randers_domain",
        Error::NonMagnetic(_) => "non_magnetic",
        Error::WindingResidual(_) => "winding_residual",
        Error::DegenerateSegment { .. } => "degenerate_segment",
        Error::TriplePoint(..) => "triple_point",
        Error::EpsTooLarge { .. } => "eps_too_large",
        Error::Rasterization { .. } => "rasterization",
        Error::EmbeddedRequired(_) => "embedded_required",
        Error::NotABoundary(_) => "not_a_boundary",
        Error::NoLocalMinimizer => "no_local_minimizer",
        Error::TooFarApart { .. } => "too_far_apart",
        Error::EnergyRange { .. } => "energy_range",
        Error::NoNegativeCandidate { .. } => "no_negative_candidate",
        Error::MixedEnergy(..) => "mixed_energy",
        Error::NotAMinimalBoundary(_) => "not_a_minimal_boundary",
        Error::NotAWaist(_) => "not_a_waist",
        Error::NotAnOrbit { .. } => "not_an_orbit",
        Error::ClosedForm(_) => "closed_form",
        Error::SignGuard(_) => "sign_guard",
        Error::NoWaistFound(_) => "no_waist_found",
        Error::Parse { .. } => "parse",
        Error::UnknownPreset(_) => "unknown_preset",
        Error::Invalid(_) => "invalid",
    }
}

fn write_report(cfg: &RunConfig, text: &str) -> std::io::Result<()> {
    fs::create_dir_all(&cfg.out)?;
    fs::write(cfg.out.join("report.json"), text)
}

fn write_curves(cfg: &RunConfig, name: &str, mc: &Multicurve<f64>) -> std::io::Result<()> {
    if cfg.json_only {
        return Ok(());
    }
    let dir = cfg.out.join("curves");
    fs::create_dir_all(&dir)?;
    for (i, lp) in mc.components.iter().enumerate() {
        fs::write(dir.join(format!("{name}_{i:02}.csv")), loop_csv(lp))?;
    }
    Ok(())
}

fn write_svg(
    cfg: &RunConfig,
    name: &str,
    surface: &tonelli_core::Surface64,
    mc: &Multicurve<f64>,
) -> std::io::Result<()> {
    if cfg.json_only {
        return Ok(());
    }
    let dir = cfg.out.join("curves");
    fs::create_dir_all(&dir)?;
    fs::write(dir.join(format!("{name}.svg")), multicurve_svg(surface, mc))
}

#[derive(Serialize)]
struct Envelope<'a> {
    command: &'a str,
    config: &'a RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    result: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    failure: Option<serde_json::Value>,
}

/// Execute a parsed invocation. Exit codes: 0 success, 1 configuration
/// error, 2 declared solver failure (encoded in the report JSON).
pub fn execute(cli: &Cli) -> ExecOutcome {
    let name = cli.command.name();
    let cfg = match resolve_config(cli.command.args()) {
        Ok(cfg) => cfg,
        Err(err) => {
            let body = serde_json::to_string_pretty(&json!({
                "command": name,
                "failure": failure_json(&err),
            }))
            .expect("static json");
            return ExecOutcome {
                exit_code: 1,
                report_json: body,
            };
        }
    };
    let prepared = cfg.build_data().and_then(|data| {
        preflight(&cli.command, &cfg)?;
        Ok(data)
    });
    let data = match prepared {
        Ok(d) => d,
        Err(err) => {
            let body = serde_json::to_string_pretty(&json!({
                "command": name,
                "config": serde_json::to_value(&cfg).unwrap(),
                "failure": failure_json(&err),
            }))
            .expect("static json");
            return ExecOutcome {
                exit_code: 1,
                report_json: body,
            };
        }
    };

    let run: Result<serde_json::Value, Error> = match &cli.command {
        Command::Spectrum(_) => cmd_spectrum(&data),
        Command::MinimalBoundary(_) => cmd_minimal_boundary(&data, &cfg),
        Command::GraphCheck(_) => cmd_graph_check(&data, &cfg),
        Command::ContinueWaists(_) => cmd_continue_waists(&data, &cfg),
        Command::Minimax(_) => cmd_minimax(&data, &cfg),
        Command::ProbeLambda(_) => cmd_probe_lambda(&data, &cfg),
        Command::RandersCensus(_) => cmd_randers_census(&data, &cfg),
        Command::Decompose(_) => cmd_decompose(&data, &cfg),
    };

    let (exit_code, envelope) = match run {
        Ok(result) => (
            0,
            Envelope {
                command: name,
                config: &cfg,
                result: Some(result),
                failure: None,
            },
        ),
        Err(err) => (
            2,
            Envelope {
                command: name,
                config: &cfg,
                result: None,
                failure: Some(failure_json(&err)),
            },
        ),
    };
    let body = serde_json::to_string_pretty(&envelope).expect("report serialization");
    if let Err(io) = write_report(&cfg, &body) {
        eprintln!("warning: cannot write report.json: {io}");
    }
    ExecOutcome {
        exit_code,
        report_json: body,
    }
}

fn require_energy(cfg: &RunConfig) -> Result<f64, Error> {
    cfg.energy
        .ok_or_else(|| Error::Invalid("this command needs --energy".into()))
}

/// Per-command requirement checks, run in the configuration phase so a
/// missing flag is a configuration error (exit 1), not a solver failure.
fn preflight(command: &Command, cfg: &RunConfig) -> Result<(), Error> {
    match command {
        Command::MinimalBoundary(_) | Command::GraphCheck(_) | Command::Minimax(_) => {
            require_energy(cfg).map(|_| ())
        }
        Command::ContinueWaists(_) => {
            require_energy(cfg)?;
            if cfg.energy_grid.is_none() {
                return Err(Error::Invalid("continue-waists needs --energy-grid".into()));
            }
            Ok(())
        }
        Command::RandersCensus(_) => {
            if cfg.randers_r.is_none() {
                return Err(Error::Invalid("randers-census needs --randers-r".into()));
            }
            Ok(())
        }
        Command::Decompose(_) => {
            if cfg.curves.is_empty() {
                return Err(Error::Invalid("decompose needs at least one --curve file".into()));
            }
            Ok(())
        }
        Command::Spectrum(_) | Command::ProbeLambda(_) => Ok(()),
    }
}

fn cmd_spectrum(data: &MagneticTonelliData<f64>) -> Result<serde_json::Value, Error> {
    let spec = full_spectrum(data, &CriticalOpts::default());
    let ordering_ok = spec.e0 <= spec.cu.value + spec.cu.tolerance
        && spec.cu.value <= spec.c0.value + spec.c0.tolerance + spec.cu.tolerance
        && spec.c0.value <= spec.c.value + spec.c.tolerance + spec.c0.tolerance;
    Ok(json!({
        "spectrum": serde_json::to_value(&spec).unwrap(),
        "ordering_ok": ordering_ok,
    }))
}

fn report_to_json(report: &SearchReport<f64>) -> serde_json::Value {
    serde_json::to_value(report).expect("report serialization")
}

fn cmd_minimal_boundary(
    data: &MagneticTonelliData<f64>,
    cfg: &RunConfig,
) -> Result<serde_json::Value, Error> {
    let e = require_energy(cfg)?;
    let report = minimal_boundary_search(data, e, &search_opts(cfg))?;
    let _ = write_curves(cfg, "component", &report.multicurve);
    let _ = write_svg(cfg, "boundary", &data.surface, &report.multicurve);
    Ok(report_to_json(&report))
}

fn cmd_graph_check(
    data: &MagneticTonelliData<f64>,
    cfg: &RunConfig,
) -> Result<serde_json::Value, Error> {
    let e = require_energy(cfg)?;
    let mut reports = Vec::with_capacity(cfg.runs);
    for i in 0..cfg.runs {
        let mut opts = search_opts(cfg);
        opts.rng_seed = cfg.rng_seed.wrapping_add(i as u64);
        reports.push(minimal_boundary_search(data, e, &opts)?);
    }
    let check = graph_theorem_check(data, &reports)?;
    let identical = check
        .pairs
        .iter()
        .filter(|p| p.verdict == tonelli_core::search::PairVerdict::Identical)
        .count();
    let disjoint = check
        .pairs
        .iter()
        .filter(|p| p.verdict == tonelli_core::search::PairVerdict::Disjoint)
        .count();
    Ok(json!({
        "runs": cfg.runs,
        "energy": e,
        "violations": check.violations,
        "identical_pairs": identical,
        "disjoint_pairs": disjoint,
        "pairs": serde_json::to_value(&check.pairs).unwrap(),
        "actions": reports.iter().map(|r| r.action).collect::<Vec<_>>(),
    }))
}

fn cmd_continue_waists(
    data: &MagneticTonelliData<f64>,
    cfg: &RunConfig,
) -> Result<serde_json::Value, Error> {
    let e = require_energy(cfg)?;
    let grid = cfg
        .energy_grid
        .clone()
        .ok_or_else(|| Error::Invalid("continue-waists needs --energy-grid".into()))?;
    let report = minimal_boundary_search(data, e, &search_opts(cfg))?;
    let continuation = waist_continuation_above_c0(data, &report, &grid, &search_opts(cfg))?;
    let _ = write_svg(cfg, "critical_boundary", &data.surface, &report.multicurve);
    Ok(json!({
        "base_report": report_to_json(&report),
        "continuation": serde_json::to_value(&continuation).unwrap(),
    }))
}

fn cmd_minimax(
    data: &MagneticTonelliData<f64>,
    cfg: &RunConfig,
) -> Result<serde_json::Value, Error> {
    let e = require_energy(cfg)?;
    let opts = search_opts(cfg);
    let (waist, waist_action) = find_sphere_waist(data, e, &opts)?;
    let report = minimax_orbits(data, e, &waist, cfg.m_max, &opts)?;
    if !cfg.json_only {
        let mc = Multicurve::new(&data.surface, report.critical_loops.clone())?;
        let _ = write_curves(cfg, "critical_loop", &mc);
        let _ = write_svg(cfg, "minimax_loops", &data.surface, &mc);
    }
    Ok(json!({
        "energy": e,
        "waist_action": waist_action,
        "s_values": report.s_values,
        "iterate_gaps": report
            .s_values
            .iter()
            .enumerate()
            .map(|(i, s)| s - (i + 1) as f64 * report.s_values[0])
            .collect::<Vec<_>>(),
    }))
}

fn cmd_probe_lambda(
    data: &MagneticTonelliData<f64>,
    cfg: &RunConfig,
) -> Result<serde_json::Value, Error> {
    let scan = lambda_somewhere_negative(data)?;
    let point = cfg.point.unwrap_or(scan.witness);
    let lambda_at_point = lambda_eval(data, point)?;
    let radii = cfg.probe_radii.clone();
    let probe = small_loop_probe(data, point, cfg.probe_a, &radii, cfg.samples)?;
    Ok(json!({
        "scan": serde_json::to_value(&scan).unwrap(),
        "point": point,
        "lambda_at_point": lambda_at_point,
        "probe": serde_json::to_value(&probe).unwrap(),
        "certifies_e0_below_cu": probe.intercept < 0.0,
    }))
}

fn cmd_randers_census(
    data: &MagneticTonelliData<f64>,
    cfg: &RunConfig,
) -> Result<serde_json::Value, Error> {
    let r = cfg
        .randers_r
        .ok_or_else(|| Error::Invalid("randers-census needs --randers-r".into()))?;
    let census = randers_geodesic_census(data, r, &search_opts(cfg))?;
    if !cfg.json_only {
        let mc = Multicurve::new(
            &data.surface,
            census.geodesics.iter().map(|g| g.loop_path.clone()).collect(),
        )?;
        let _ = write_curves(cfg, "geodesic", &mc);
        let _ = write_svg(cfg, "census", &data.surface, &mc);
    }
    Ok(serde_json::to_value(&census).unwrap())
}

fn cmd_decompose(
    data: &MagneticTonelliData<f64>,
    cfg: &RunConfig,
) -> Result<serde_json::Value, Error> {
    if cfg.curves.is_empty() {
        return Err(Error::Invalid("decompose needs at least one --curve file".into()));
    }
    let mut comps = Vec::new();
    for path in &cfg.curves {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())))?;
        comps.push(loop_from_csv(&data.surface, &text)?);
    }
    let mc = Multicurve::new(&data.surface, comps)?;
    let _ = write_svg(cfg, "input", &data.surface, &mc);
    match solve_with_refinement(&data.surface, &mc, cfg.grid)? {
        (BoundingChain::Bounds(cert), k) => Ok(json!({
            "bounds": true,
            "grid_k_used": k,
            "homology_class": mc.homology,
            "certificate": serde_json::to_value(&cert).unwrap(),
        })),
        (BoundingChain::NotNullHomologous, k) => Ok(json!({
            "bounds": false,
            "grid_k_used": k,
            "homology_class": mc.homology,
        })),
    }
}

/// Parse command-line arguments and execute; used by the binary and by
/// integration tests (which capture the JSON instead of the process exit).
pub fn run_from_args<I, T>(args: I) -> ExecOutcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(&cli),
        Err(e) => ExecOutcome {
            exit_code: 1,
            report_json: e.to_string(),
        },
    }
}

/// Check whether `path` exists (test helper).
pub fn artifact_exists(base: &Path, rel: &str) -> bool {
    base.join(rel).exists()
}
