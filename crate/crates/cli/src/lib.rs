//! `dnls` command line: one subcommand per experiment.
//!
//! Exit codes: 0 success, 1 invalid configuration, 2 runtime failure,
//! 3 finished but with failed sampler diagnostics.

mod config;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use dnls::analytic::{self, Branch, ThermoParams};
use dnls::experiments::{self, logz, report, EnsembleSettings};
use dnls::sampler::Schedule;
use dnls::{AutomorphismGroup, Error, GraphTopology};
use serde::Serialize;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_UNCONVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "dnls", version, about = "Gibbs measures and breathers of the focusing cubic DNLS on graphs")]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Overwrite existing output files.
    #[arg(long, global = true)]
    pub force: bool,

    /// Cap on concurrently running chains.
    #[arg(long, global = true, env = "DNLS_WORKERS")]
    pub workers: Option<usize>,

    /// Flat `key = value` file of flag values; command-line flags win.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analytic free energy and condensate fraction along a beta grid.
    #[command(allow_negative_numbers = true)]
    Curves(CurvesArgs),
    /// One Metropolis chain with its observable stream.
    #[command(allow_negative_numbers = true)]
    Sample(SampleArgs),
    /// (log Z)/n by thermodynamic integration.
    #[command(allow_negative_numbers = true)]
    Logz(LogzArgs),
    /// Order parameters across a beta range, next to the analytic values.
    #[command(allow_negative_numbers = true)]
    Scan(ScanArgs),
    /// Growth of the H^1 norm over a family of tori.
    #[command(allow_negative_numbers = true)]
    H1(H1Args),
    /// Integrates Gibbs samples and tracks the largest site.
    #[command(allow_negative_numbers = true)]
    Breather(BreatherArgs),
    /// Single-site statistics against the exponential law.
    #[command(allow_negative_numbers = true)]
    Gauss(GaussArgs),
    /// Fast invariant and small-n oracle checks.
    #[command(allow_negative_numbers = true)]
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct CurvesArgs {
    /// Mass-density cutoff.
    #[arg(long = "B")]
    #[serde(rename = "B")]
    pub cutoff: f64,
    #[arg(long, default_value_t = 0.0)]
    pub beta_min: f64,
    #[arg(long)]
    pub beta_max: f64,
    /// Number of grid intervals.
    #[arg(long)]
    pub steps: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct TopologyArgs {
    /// Torus side length; the spacing is 1/L unless --p is given.
    #[arg(long = "torus-L", conflicts_with = "edges", required_unless_present = "edges")]
    #[serde(rename = "torus-L")]
    pub torus_side: Option<usize>,
    #[arg(long = "torus-d", default_value_t = 3)]
    #[serde(rename = "torus-d")]
    pub torus_dim: usize,
    /// Edge-list file: `n <int> h <float>`, then one `u v` pair per line.
    #[arg(long, value_name = "PATH")]
    pub edges: Option<PathBuf>,
    /// Use spacing h = n^-p instead of the graph's own.
    #[arg(long)]
    pub p: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ScheduleArgs {
    #[arg(long, default_value_t = 20_000)]
    pub sweeps: u64,
    /// Defaults to a fifth of the sweeps.
    #[arg(long)]
    pub burn_in: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub thin: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct PointArgs {
    #[arg(long)]
    pub beta: f64,
    #[arg(long = "B")]
    #[serde(rename = "B")]
    pub cutoff: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct SampleArgs {
    #[command(flatten)]
    pub point: PointArgs,
    #[command(flatten)]
    pub topology: TopologyArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct LogzArgs {
    #[command(flatten)]
    pub point: PointArgs,
    #[command(flatten)]
    pub topology: TopologyArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    /// Comma-separated betas from 0 to --beta; defaults to a built-in ladder.
    #[arg(long, value_delimiter = ',')]
    pub ladder: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ScanArgs {
    #[arg(long = "B")]
    #[serde(rename = "B")]
    pub cutoff: f64,
    #[arg(long)]
    pub beta_min: f64,
    #[arg(long)]
    pub beta_max: f64,
    /// Number of grid intervals.
    #[arg(long)]
    pub steps: usize,
    #[command(flatten)]
    pub topology: TopologyArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct H1Args {
    #[command(flatten)]
    pub point: PointArgs,
    /// Comma-separated torus sides, at least three.
    #[arg(long = "torus-L", value_delimiter = ',', required = true)]
    #[serde(rename = "torus-L")]
    pub sides: Vec<usize>,
    #[arg(long = "torus-d", default_value_t = 3)]
    #[serde(rename = "torus-d")]
    pub torus_dim: usize,
    /// Use spacing h = n^-p instead of 1/L.
    #[arg(long)]
    pub p: Option<f64>,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct BreatherArgs {
    #[command(flatten)]
    pub point: PointArgs,
    #[command(flatten)]
    pub topology: TopologyArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    /// Time horizon.
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub horizon: f64,
    #[arg(long)]
    pub dt: f64,
    /// Number of independent samples.
    #[arg(long, default_value_t = 20)]
    pub samples: usize,
    #[arg(long, default_value_t = 100)]
    pub record_every: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct GaussArgs {
    #[command(flatten)]
    pub point: PointArgs,
    #[command(flatten)]
    pub topology: TopologyArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    /// Number of fixed coordinates in the correlation check.
    #[arg(long, default_value_t = 3)]
    pub k: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// How a command failed.
#[derive(Debug)]
pub enum Failure {
    Invalid(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { .. }
            | Error::Validation(_)
            | Error::Parse { .. }
            | Error::SizeCap { .. }
            | Error::SizeMismatch { .. }
            | Error::Unsupported(_)
            | Error::Exists(_) => Failure::Invalid(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

type Outcome = Result<Finished, Failure>;

/// What a successful command reports back.
#[derive(Debug, Default)]
pub struct Finished {
    pub written: Vec<PathBuf>,
    pub converged: bool,
    pub summary: Vec<String>,
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Invalid(msg.into())
}

impl ScheduleArgs {
    fn schedule(&self) -> Result<Schedule, Failure> {
        let mut s = Schedule::new(self.sweeps, self.seed);
        s.burn_in = self.burn_in.unwrap_or(self.sweeps / 5);
        s.thin = self.thin;
        s.validate()?;
        Ok(s)
    }
}

impl TopologyArgs {
    fn build(&self) -> Result<GraphTopology, Failure> {
        let graph = match (&self.torus_side, &self.edges) {
            (Some(side), None) => dnls::make_torus(*side, self.torus_dim)?,
            (None, Some(path)) => {
                let text = fs::read_to_string(path).map_err(|e| invalid(format!("--edges {}: {e}", path.display())))?;
                GraphTopology::parse_edge_list(&text)?
            }
            _ => return Err(invalid("give exactly one of --torus-L and --edges")),
        };
        respace(graph, self.p)
    }
}

fn respace(graph: GraphTopology, p: Option<f64>) -> Result<GraphTopology, Failure> {
    match p {
        None => Ok(graph),
        Some(p) if p.is_finite() && p > 0.0 => {
            let h = (graph.n() as f64).powf(-p);
            Ok(graph.with_spacing(h)?)
        }
        Some(p) => Err(invalid(format!("invalid parameter `p`: must be finite and > 0, got {p}"))),
    }
}

fn params(point: &PointArgs, graph: &GraphTopology) -> Result<ThermoParams, Failure> {
    Ok(ThermoParams::new(point.beta, point.cutoff, graph.spacing(), graph.n())?)
}

fn grid(min: f64, max: f64, steps: usize) -> Result<Vec<f64>, Failure> {
    if steps == 0 {
        return Err(invalid("invalid parameter `steps`: must be positive"));
    }
    if !(min.is_finite() && max.is_finite() && max > min) {
        return Err(invalid(format!("invalid parameter `beta-max`: need beta-min < beta-max, got {min} and {max}")));
    }
    Ok((0..=steps).map(|k| if k == steps { max } else { min + (max - min) * k as f64 / steps as f64 }).collect())
}

/// Where to put the report files and whether they may replace old ones.
struct Sink<'a> {
    dir: &'a Path,
    force: bool,
}

#[derive(Serialize)]
struct Envelope<'a, C: Serialize, R: Serialize> {
    kind: &'a str,
    version: &'a str,
    config: &'a C,
    converged: bool,
    /// Seconds since the Unix epoch; the one field that differs between reruns.
    timestamp: u64,
    result: &'a R,
}

impl Sink<'_> {
    /// `<stem>.json` with the config and result, plus `<stem><suffix>` tables.
    fn write<C: Serialize, R: Serialize>(
        &self,
        kind: &str,
        config: &C,
        result: &R,
        converged: bool,
        tables: Vec<(&str, String)>,
    ) -> Result<Vec<PathBuf>, Failure> {
        let stem = report::artifact_stem(kind, config)?;
        let envelope = Envelope {
            kind,
            version: env!("CARGO_PKG_VERSION"),
            config,
            converged,
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            result,
        };
        let json = serde_json::to_string_pretty(&envelope).map_err(|e| Failure::Runtime(e.to_string()))?;
        let mut files = vec![(format!("{stem}.json"), json + "\n")];
        files.extend(tables.into_iter().map(|(suffix, body)| (format!("{stem}{suffix}"), body)));
        Ok(report::write_files(self.dir, &files, self.force)?)
    }
}

fn curves(args: &CurvesArgs, out: Option<&Sink>) -> Outcome {
    let betas = grid(args.beta_min, args.beta_max, args.steps)?;
    let rows = analytic::emit_curves(args.cutoff, &betas)?;
    let csv = analytic::curves_to_csv(&rows);
    match out {
        Some(sink) => Ok(Finished {
            written: sink.write("curves", args, &rows, true, vec![(".csv", csv)])?,
            converged: true,
            summary: vec![format!("theta_c = {:.10}", analytic::solve_theta_c())],
        }),
        None => {
            print!("{csv}");
            Ok(Finished { converged: true, ..Default::default() })
        }
    }
}

fn sample(args: &SampleArgs, sink: &Sink) -> Outcome {
    let graph = args.topology.build()?;
    let params = params(&args.point, &graph)?;
    let schedule = args.schedule.schedule()?;
    let run = experiments::sample_chain(&params, &graph, &schedule)?;
    let meta: serde_json::Value = serde_json::from_str(&run.metadata_json(&schedule)?).map_err(|e| Failure::Runtime(e.to_string()))?;
    let converged = run.acceptance.converged();
    let written = sink.write("sample", args, &meta, converged, vec![(".csv", run.csv())])?;
    let n = graph.n() as f64;
    let mean = |f: fn(&dnls::ObservableRecord) -> f64| run.records.iter().map(f).sum::<f64>() / run.records.len() as f64;
    Ok(Finished {
        written,
        converged,
        summary: vec![format!(
            "{} records, mean mass fraction {:.4}, mean H/n {:.6}, mean N/n {:.6}",
            run.records.len(),
            mean(|r| r.mass_fraction),
            mean(|r| r.energy) / n,
            mean(|r| r.power) / n
        )],
    })
}

fn logz_cmd(args: &LogzArgs, sink: &Sink) -> Outcome {
    let graph = args.topology.build()?;
    let params = params(&args.point, &graph)?;
    let schedule = args.schedule.schedule()?;
    let ladder = match &args.ladder {
        Some(l) => l.clone(),
        None if params.beta > 0.0 => logz::beta_ladder(params.beta, params.cutoff, logz::DEFAULT_RUNGS)?,
        None => vec![0.0],
    };
    let report = experiments::estimate_logz_density(&params, &graph, &ladder, &schedule)?;
    let converged = report.converged();
    let limit = analytic::free_energy_f(&params).free_energy;
    let written = sink.write("logz", args, &report, converged, vec![("-rungs.csv", report.rungs_csv())])?;
    Ok(Finished {
        written,
        converged,
        summary: vec![format!(
            "(log Z)/n = {:.6} ± {:.6}; large-n limit {:.6}",
            report.density.value, report.density.std_error, limit
        )],
    })
}

fn scan(args: &ScanArgs, sink: &Sink) -> Outcome {
    let graph = args.topology.build()?;
    let betas = grid(args.beta_min, args.beta_max, args.steps)?;
    ThermoParams::new(betas[0], args.cutoff, graph.spacing(), graph.n())?;
    let schedule = args.schedule.schedule()?;
    let rows = experiments::phase_scan(args.cutoff, &betas, &graph, &schedule)?;
    let converged = rows.iter().all(|r| r.converged);
    let csv = experiments::scan::scan_csv(&rows);
    let written = sink.write("scan", args, &rows, converged, vec![(".csv", csv)])?;
    let summary = rows
        .iter()
        .map(|r| format!("theta {:.4}: mass fraction {:.4} (analytic {:.4})", r.theta, r.mass_fraction.value, r.fraction_exact))
        .collect();
    Ok(Finished { written, converged, summary })
}

fn h1(args: &H1Args, sink: &Sink) -> Outcome {
    let graphs = args
        .sides
        .iter()
        .map(|&side| respace(dnls::make_torus(side, args.torus_dim)?, args.p))
        .collect::<Result<Vec<_>, Failure>>()?;
    for g in &graphs {
        params(&args.point, g)?;
    }
    let schedule = args.schedule.schedule()?;
    let theta = args.point.beta * args.point.cutoff * args.point.cutoff;
    let table = experiments::h1_growth(theta, args.point.cutoff, &graphs, &schedule)?;
    let converged = table.rows.iter().all(|r| r.converged);
    let written = sink.write("h1", args, &table, converged, vec![(".csv", table.csv())])?;
    Ok(Finished {
        written,
        converged,
        summary: vec![format!("median h1_sq grows like n^{:.4}; the norm like n^{:.4}", table.fit_sq.slope, table.exponent)],
    })
}

fn breather(args: &BreatherArgs, sink: &Sink) -> Outcome {
    let graph = args.topology.build()?;
    let params = params(&args.point, &graph)?;
    let schedule = args.schedule.schedule()?;
    let settings = EnsembleSettings { samples: args.samples, horizon: args.horizon, dt: args.dt, record_every: args.record_every };
    let report = match Branch::of(params.theta()) {
        Branch::Supercritical => experiments::breather_persistence(&params, &graph, &schedule, &settings)?,
        Branch::Subcritical => experiments::mode_wandering(&params, &graph, &schedule, &settings)?,
        Branch::Critical => return Err(invalid("invalid parameter `beta`: beta B^2 sits at the critical coupling")),
    };
    let converged = report.sampler_converged;
    let written = sink.write("breather", args, &report, converged, vec![(".csv", report.csv())])?;
    Ok(Finished {
        written,
        converged,
        summary: vec![format!(
            "{} trajectories, {:.2} with a fixed mode, all within {} of a/B: {}, max relative N drift {:.2e}",
            report.trajectories.len(),
            report.persistent_fraction(),
            experiments::breather::FRACTION_BAND,
            report.within_band(),
            report.max_power_drift()
        )],
    })
}

fn gauss(args: &GaussArgs, sink: &Sink) -> Outcome {
    let graph = args.topology.build()?;
    let params = params(&args.point, &graph)?;
    let group = AutomorphismGroup::torus_translations(&graph)
        .map_err(|_| invalid("the coordinate test needs an automorphism group; only tori provide one"))?;
    let schedule = args.schedule.schedule()?;
    let report = experiments::gaussian_coordinate_test(&params, &graph, &group, &schedule, args.k)?;
    let converged = report.converged;
    let written = sink.write("gauss", args, &report, converged, Vec::new())?;
    let mut line = format!("KS {:.4}, tail {:.4} (e^-1 = {:.4})", report.ks, report.tail, report.tail_exact);
    if let Some(ks) = report.ks_unscaled {
        line.push_str(&format!(", KS with scale B {ks:.4}"));
    }
    Ok(Finished { written, converged, summary: vec![line, format!("max |correlation| {:.4}", report.max_abs_correlation())] })
}

fn verify(args: &VerifyArgs, out: Option<&Sink>) -> Outcome {
    let report = experiments::run_verify(args.seed)?;
    let summary = report
        .checks
        .iter()
        .map(|c| format!("{} [{}] {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.suite, c.name, c.detail))
        .collect();
    let written = match out {
        Some(sink) => sink.write("verify", args, &report, true, vec![(".csv", report.csv())])?,
        None => Vec::new(),
    };
    if !report.passed() {
        let names: Vec<_> = report.failures().map(|c| c.name.clone()).collect();
        for line in &summary {
            println!("{line}");
        }
        return Err(Failure::Runtime(format!("{} check(s) failed: {}", names.len(), names.join("; "))));
    }
    Ok(Finished { written, converged: true, summary })
}

fn dispatch(cli: &Cli) -> Outcome {
    let default_dir = PathBuf::from("runs");
    let sink = Sink { dir: cli.out.as_deref().unwrap_or(&default_dir), force: cli.force };
    let explicit = cli.out.as_deref().map(|dir| Sink { dir, force: cli.force });
    match &cli.command {
        Command::Curves(a) => curves(a, explicit.as_ref()),
        Command::Sample(a) => sample(a, &sink),
        Command::Logz(a) => logz_cmd(a, &sink),
        Command::Scan(a) => scan(a, &sink),
        Command::H1(a) => h1(a, &sink),
        Command::Breather(a) => breather(a, &sink),
        Command::Gauss(a) => gauss(a, &sink),
        Command::Verify(a) => verify(a, explicit.as_ref()),
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args = match config::expand(args.into_iter().map(Into::into).collect()) {
        Ok(args) => args,
        Err(msg) => {
            eprintln!("error: {msg}");
            return EXIT_INVALID;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    let outcome = match cli.workers {
        Some(0) => Err(invalid("invalid parameter `workers`: must be positive")),
        Some(w) => match rayon::ThreadPoolBuilder::new().num_threads(w).build() {
            Ok(pool) => pool.install(|| dispatch(&cli)),
            Err(e) => Err(Failure::Runtime(e.to_string())),
        },
        None => dispatch(&cli),
    };
    match outcome {
        Ok(done) => {
            for line in &done.summary {
                println!("{line}");
            }
            for path in &done.written {
                println!("wrote {}", path.display());
            }
            if done.converged {
                EXIT_OK
            } else {
                eprintln!("warning: sampler diagnostics failed; see the `converged` fields in the report");
                EXIT_UNCONVERGED
            }
        }
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            EXIT_INVALID
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            EXIT_RUNTIME
        }
    }
}
