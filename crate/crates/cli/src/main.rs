//! Command-line front end for the circle-map parameter-exclusion laboratory.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use circlemap_core::conditions::{check_mis, check_w, check_x, check_y, ConditionReport};
use circlemap_core::config::{parse_config, ConfigError, DriveKind, ProfileChoice, RunConfig};
use circlemap_core::constants::{build_profile, ConstantsError, ConstantsProfile};
use circlemap_core::exclusion::{run_exclusion_bisect, run_exclusion_mc, sweep_l, ExclusionError, ExclusionMode};
use circlemap_core::lemmas::{verify, LemmaError, LemmaId, LemmaParams};
use circlemap_core::map::{MapError, Model};
use circlemap_core::orbit::{compute_ladder, critical_orbit, iterate_orbit, OrbitError};
use circlemap_core::report::{
    cells_csv, comment_header, condition_lines, emit_report, fmt_f64, lemma_json, orbit_csv, parse_records, returns_csv,
    summary_table, violations_csv, write_file,
};
use circlemap_core::returns::{decompose, CriticalOrbits, ReturnMode, ReturnsError};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

const WORKERS_ENV: &str = "CIRCLEMAP_WORKERS";

#[derive(Debug)]
enum CliError {
    Usage(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Numerical(m) | CliError::Io(m) => m,
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<MapError> for CliError {
    fn from(e: MapError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<ConstantsError> for CliError {
    fn from(e: ConstantsError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<OrbitError> for CliError {
    fn from(e: OrbitError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<ReturnsError> for CliError {
    fn from(e: ReturnsError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<ExclusionError> for CliError {
    fn from(e: ExclusionError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<LemmaError> for CliError {
    fn from(e: LemmaError) -> Self {
        match e {
            LemmaError::Oracle { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "circlemap",
    version,
    about = "Parameter-exclusion laboratory for the circle maps θ ↦ θ + a + L·Φ(θ)",
    after_help = "Environment:\n  CIRCLEMAP_WORKERS  number of worker threads (default: all cores)\n\n\
                  Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 I/O error"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// TOML run configuration; flags below override its values
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Amplitude L [default: 1000]
    #[arg(long = "L", value_name = "L")]
    l: Option<f64>,
    /// Random seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Constants profile [default: paper-asymptotic]
    #[arg(long, value_enum)]
    profile: Option<ProfileArg>,
    /// Distortion exponent β in (3/2, 2) [default: 1.75]
    #[arg(long)]
    beta: Option<f64>,
    /// Exponent α [default: λ/100]
    #[arg(long)]
    alpha: Option<f64>,
    /// Number of special steps N [default: 20]
    #[arg(long = "N", value_name = "N")]
    special_steps: Option<usize>,
    /// Empirical σ
    #[arg(long)]
    sigma: Option<f64>,
    /// Empirical δ0
    #[arg(long)]
    delta0: Option<f64>,
    /// Empirical δ
    #[arg(long)]
    delta: Option<f64>,
    /// Reference L for the scaled-empirical profile
    #[arg(long)]
    l_ref: Option<f64>,
    /// Thresholds scale as (L / l_ref)^(-exponent) for the scaled-empirical profile
    #[arg(long)]
    exponent: Option<f64>,
    /// Fourier cosine coefficients of Φ, harmonics 1, 2, ... (comma separated)
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    cos: Option<Vec<f64>>,
    /// Fourier sine coefficients of Φ, harmonics 1, 2, ... (comma separated)
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    sin: Option<Vec<f64>>,
    /// Output file (orbit, critical, returns, check) or directory (exclude, sweep, verify, report)
    #[arg(long, short, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ProfileArg {
    PaperAsymptotic,
    Empirical,
    ScaledEmpirical,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ModeArg {
    Mc,
    Bisect,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ReturnArg {
    Deep,
    Shallow,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Orbit CSV: i, c_i, log_deriv, sign, dist, d_i, D_{i+1}
    Orbit {
        #[command(flatten)]
        common: Common,
        /// Parameter a
        #[arg(long)]
        a: f64,
        /// Number of iterates
        #[arg(long, default_value_t = 20)]
        n: usize,
        /// Start at θ instead of the critical value
        #[arg(long)]
        theta: Option<f64>,
        /// Index of the critical point whose critical value starts the orbit
        #[arg(long, default_value_t = 0)]
        critical: usize,
    },
    /// Critical points of f and the derived constants profile
    Critical {
        #[command(flatten)]
        common: Common,
    },
    /// Return events of every critical orbit as CSV
    Returns {
        #[command(flatten)]
        common: Common,
        /// Parameter a
        #[arg(long)]
        a: f64,
        /// Number of iterates
        #[arg(long, default_value_t = 50)]
        n: usize,
        /// Deep returns into C_δ or shallow returns into C_δ0
        #[arg(long, value_enum, default_value = "deep")]
        mode: ReturnArg,
    },
    /// Conditions (mis), X, Y and W per critical point, as JSON lines
    Check {
        #[command(flatten)]
        common: Common,
        /// Parameter a
        #[arg(long)]
        a: f64,
        /// Number of iterates
        #[arg(long, default_value_t = 50)]
        n: usize,
    },
    /// Survivor fractions A^(n) at one L
    Exclude {
        #[command(flatten)]
        common: Common,
        /// Last step n_max [default: 50]
        #[arg(long)]
        n_max: Option<usize>,
        /// Monte Carlo samples [default: 10000]
        #[arg(long)]
        samples: Option<usize>,
        /// Smallest bisection cell [default: 1e-4]
        #[arg(long)]
        min_width: Option<f64>,
        /// Monte Carlo or adaptive bisection [default: mc]
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Also exclude on (X) and (Y) failures
        #[arg(long)]
        strict: bool,
    },
    /// Monte Carlo survivor fractions over several L
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Increasing list of L (comma separated)
        #[arg(long = "L-list", value_delimiter = ',', value_name = "L,...")]
        l_list: Option<Vec<f64>>,
        /// Last step n_max [default: 50]
        #[arg(long)]
        n_max: Option<usize>,
        /// Monte Carlo samples per L [default: 10000]
        #[arg(long)]
        samples: Option<usize>,
        /// Also exclude on (X) and (Y) failures
        #[arg(long)]
        strict: bool,
    },
    /// Randomized check of one lemma; writes its report and violations
    Verify {
        #[command(flatten)]
        common: Common,
        /// One of dist, trans, samp, wrap, bound, outside, expansion, brprop
        #[arg(long)]
        lemma: LemmaId,
        /// Number of random trials
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Orbit length per trial [default: lemma-specific]
        #[arg(long)]
        n_max: Option<usize>,
    },
    /// Rebuild tables and plot data from a records.json
    Report {
        /// records.json written by exclude or sweep
        records: PathBuf,
        /// Output directory [default: alongside the records file]
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

fn load_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            parse_config(&text)?
        }
        None => RunConfig::default(),
    };
    let p = &mut cfg.profile;
    if let Some(v) = common.l {
        cfg.l = v;
    }
    if let Some(v) = common.seed {
        cfg.seed = v;
    }
    if let Some(v) = common.profile {
        p.kind = match v {
            ProfileArg::PaperAsymptotic => ProfileChoice::PaperAsymptotic,
            ProfileArg::Empirical => ProfileChoice::Empirical,
            ProfileArg::ScaledEmpirical => ProfileChoice::ScaledEmpirical,
        };
    }
    if let Some(v) = common.beta {
        p.beta = v;
    }
    if common.alpha.is_some() {
        p.alpha = common.alpha;
    }
    if let Some(v) = common.special_steps {
        p.special_steps = v;
    }
    for (dst, src) in [
        (&mut p.sigma, common.sigma),
        (&mut p.delta0, common.delta0),
        (&mut p.delta, common.delta),
        (&mut p.l_ref, common.l_ref),
        (&mut p.exponent, common.exponent),
    ] {
        if src.is_some() {
            *dst = src;
        }
    }
    if common.cos.is_some() || common.sin.is_some() {
        cfg.drive.kind = DriveKind::Fourier;
        cfg.drive.cos = common.cos.clone().unwrap_or_default();
        cfg.drive.sin = common.sin.clone().unwrap_or_default();
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.to_string_lossy().into_owned();
    }
    Ok(cfg)
}

/// Run configuration plus command-specific inputs, as embedded in output headers.
fn header_json(cfg: &RunConfig, extra: Value) -> String {
    let mut v: Value = serde_json::from_str(&cfg.to_json()).expect("config JSON");
    if let (Value::Object(map), Value::Object(more)) = (&mut v, extra) {
        map.extend(more);
    }
    v.to_string()
}

fn setup(cfg: &RunConfig, l: f64) -> Result<(Model, ConstantsProfile), CliError> {
    cfg.validate()?;
    let phi = cfg.drive_function()?;
    let model = Model::new(phi.clone(), l)?;
    let profile = build_profile(&phi, l, &cfg.profile_spec(l))?;
    Ok((model, profile))
}

fn emit_text(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(path, text)?;
        }
        None => print_stdout(text)?,
    }
    Ok(())
}

/// Writes to standard output; a closed pipe is not an error.
fn print_stdout(text: &str) -> Result<(), CliError> {
    match io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn print_written(paths: &[PathBuf]) {
    for p in paths {
        eprintln!("wrote {}", p.display());
    }
}

fn cmd_orbit(common: &Common, a: f64, n: usize, theta: Option<f64>, critical: usize) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let (model, profile) = setup(&cfg, cfg.l)?;
    let family = model.family(a);
    let trace = match theta {
        Some(t) => iterate_orbit(&family, model.critical(), t, n),
        None => {
            if critical >= model.critical().len() {
                return Err(CliError::Usage(format!(
                    "critical index {critical} out of range (f has {} critical points)",
                    model.critical().len()
                )));
            }
            critical_orbit(&family, model.critical(), critical, n)
        }
    };
    if let Some(h) = trace.critical_hit {
        eprintln!("orbit lands on a critical point at step {h}; truncated");
    }
    let ladder = compute_ladder(&trace, profile.beta).ok();
    let header = header_json(&cfg, json!({"command": "orbit", "a": a, "n": n, "theta": theta, "critical": critical}));
    emit_text(common.out.as_deref(), &orbit_csv(&trace, ladder.as_ref(), &header))
}

fn cmd_critical(common: &Common) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let (model, profile) = setup(&cfg, cfg.l)?;
    let header = header_json(&cfg, json!({"command": "critical", "profile": profile}));
    let mut s = comment_header(&header);
    s.push_str("index,c,phi_deriv2\n");
    for (i, &c) in model.critical().points().iter().enumerate() {
        let _ = writeln!(s, "{i},{},{}", fmt_f64(c), fmt_f64(model.phi().deriv2(c)));
    }
    emit_text(common.out.as_deref(), &s)
}

fn cmd_returns(common: &Common, a: f64, n: usize, mode: ReturnArg) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let (model, profile) = setup(&cfg, cfg.l)?;
    let mode = match mode {
        ReturnArg::Deep => ReturnMode::Deep,
        ReturnArg::Shallow => ReturnMode::Shallow,
    };
    let orbits = CriticalOrbits::compute(&model, a, n, profile.beta);
    let mut decs = Vec::with_capacity(orbits.traces.len());
    for (c, t) in orbits.traces.iter().enumerate() {
        decs.push((c, decompose(t, model.critical(), &orbits.bound, &profile, mode)?));
    }
    let header = header_json(&cfg, json!({"command": "returns", "a": a, "n": n, "mode": format!("{mode:?}").to_lowercase()}));
    emit_text(common.out.as_deref(), &returns_csv(&decs, &header))
}

fn cmd_check(common: &Common, a: f64, n: usize) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let (model, profile) = setup(&cfg, cfg.l)?;
    let orbits = CriticalOrbits::compute(&model, a, n, profile.beta);
    let h = orbits.horizon();
    if h < n {
        eprintln!("critical orbit lands on a critical point; conditions checked up to {h}");
    }
    let mut reports: Vec<ConditionReport> = Vec::new();
    for (c, t) in orbits.traces.iter().enumerate() {
        reports.push(check_mis(t, &profile, h)?);
        reports.push(check_x(t, &profile, h)?);
        reports.push(check_y(t, &profile, h)?);
        let dec = decompose(t, model.critical(), &orbits.bound, &profile, ReturnMode::Deep)?;
        let mut w = check_w(&dec, &profile, h)?;
        w.critical_index = Some(c);
        reports.push(w);
    }
    emit_text(common.out.as_deref(), &condition_lines(&reports))
}

fn output_dir(cfg: &RunConfig) -> PathBuf {
    PathBuf::from(&cfg.output_dir)
}

fn cmd_exclude(
    common: &Common,
    n_max: Option<usize>,
    samples: Option<usize>,
    min_width: Option<f64>,
    mode: Option<ModeArg>,
    strict: bool,
) -> Result<(), CliError> {
    let mut cfg = load_config(common)?;
    if let Some(v) = n_max {
        cfg.n_max = v;
    }
    if let Some(v) = samples {
        cfg.samples = v;
    }
    if let Some(v) = min_width {
        cfg.min_width = v;
    }
    if let Some(m) = mode {
        cfg.mode = match m {
            ModeArg::Mc => ExclusionMode::Mc,
            ModeArg::Bisect => ExclusionMode::Bisect,
        };
    }
    cfg.strict |= strict;
    cfg.l_list = None;
    let (model, profile) = setup(&cfg, cfg.l)?;
    let header = cfg.to_json();
    let dir = output_dir(&cfg);
    let written = match cfg.mode {
        ExclusionMode::Mc => {
            let (record, outcomes) = run_exclusion_mc(&model, &profile, cfg.n_max, cfg.samples, cfg.seed, cfg.strict)?;
            print_stdout(&summary_table(std::slice::from_ref(&record)))?;
            emit_report(&dir, std::slice::from_ref(&record), Some(&outcomes), &header)?
        }
        ExclusionMode::Bisect => {
            let (record, cells) = run_exclusion_bisect(&model, &profile, cfg.n_max, cfg.min_width, cfg.strict)?;
            print_stdout(&summary_table(std::slice::from_ref(&record)))?;
            let reps: Vec<_> = cells.iter().map(|c| c.representative).collect();
            let mut w = emit_report(&dir, std::slice::from_ref(&record), Some(&reps), &header)?;
            w.push(write_file(&dir, "cells.csv", &cells_csv(&cells, &header))?);
            w
        }
    };
    print_written(&written);
    Ok(())
}

fn cmd_sweep(
    common: &Common,
    l_list: Option<Vec<f64>>,
    n_max: Option<usize>,
    samples: Option<usize>,
    strict: bool,
) -> Result<(), CliError> {
    let mut cfg = load_config(common)?;
    if l_list.is_some() {
        cfg.l_list = l_list;
    }
    if let Some(v) = n_max {
        cfg.n_max = v;
    }
    if let Some(v) = samples {
        cfg.samples = v;
    }
    cfg.strict |= strict;
    cfg.mode = ExclusionMode::Mc;
    cfg.validate()?;
    let phi = cfg.drive_function()?;
    let records = sweep_l(&phi, &cfg.l_values(), &cfg.profile_rule(), cfg.n_max, cfg.samples, cfg.seed, cfg.strict)?;
    print_stdout(&summary_table(&records))?;
    let written = emit_report(&output_dir(&cfg), &records, None, &cfg.to_json())?;
    print_written(&written);
    Ok(())
}

fn cmd_verify(common: &Common, lemma: LemmaId, trials: usize, n_max: Option<usize>) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let (model, profile) = setup(&cfg, cfg.l)?;
    let n_max = n_max.unwrap_or_else(|| lemma.default_n_max(profile.special_steps));
    let params = LemmaParams {
        trials,
        n_max,
        seed: cfg.seed,
    };
    let report = verify(lemma, &model, &profile, &params)?;
    let header = header_json(&cfg, json!({"command": "verify", "lemma": lemma, "trials": trials, "n_max": n_max}));
    let dir = output_dir(&cfg);
    let written = vec![
        write_file(&dir, &format!("{lemma}_report.json"), &lemma_json(&report, &header))?,
        write_file(&dir, &format!("{lemma}_violations.csv"), &violations_csv(&report, &header))?,
    ];
    let rate = report.pass_rate().map_or_else(|| "n/a".to_string(), |r| format!("{r:.4}"));
    let mut text = format!(
        "{lemma}: L={} trials={} hypothesis_met={} passed={} pass_rate={rate} hard_checks={} hard_failures={}\n",
        fmt_f64(report.l),
        report.trials,
        report.hypothesis_met,
        report.pass_count,
        report.hard_checks,
        report.hard_failures
    );
    for c in &report.clauses {
        let _ = writeln!(
            text,
            "  {:<16} {:>6}/{:<6} worst margin {:+.4e}{}",
            c.clause,
            c.passed,
            c.checked,
            c.worst_margin,
            if c.report_only { " (report only)" } else { "" }
        );
    }
    print_stdout(&text)?;
    print_written(&written);
    if report.hard_failures > 0 {
        return Err(CliError::Numerical(format!("{} hard checks failed", report.hard_failures)));
    }
    Ok(())
}

fn cmd_report(records: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let text = fs::read_to_string(records).map_err(|e| CliError::Io(format!("{}: {e}", records.display())))?;
    let file = parse_records(&text).map_err(|e| CliError::Usage(format!("{}: {e}", records.display())))?;
    if file.records.is_empty() {
        return Err(CliError::Usage("records file holds no records".into()));
    }
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| records.parent().map(Path::to_path_buf).unwrap_or_default());
    print_stdout(&summary_table(&file.records))?;
    let written = emit_report(&dir, &file.records, None, &file.header.config.to_string())?;
    print_written(&written);
    Ok(())
}

fn configure_workers() -> Result<(), CliError> {
    let Ok(v) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("{WORKERS_ENV} must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_workers()?;
    match cli.command {
        Command::Orbit {
            common,
            a,
            n,
            theta,
            critical,
        } => cmd_orbit(&common, a, n, theta, critical),
        Command::Critical { common } => cmd_critical(&common),
        Command::Returns { common, a, n, mode } => cmd_returns(&common, a, n, mode),
        Command::Check { common, a, n } => cmd_check(&common, a, n),
        Command::Exclude {
            common,
            n_max,
            samples,
            min_width,
            mode,
            strict,
        } => cmd_exclude(&common, n_max, samples, min_width, mode, strict),
        Command::Sweep {
            common,
            l_list,
            n_max,
            samples,
            strict,
        } => cmd_sweep(&common, l_list, n_max, samples, strict),
        Command::Verify {
            common,
            lemma,
            trials,
            n_max,
        } => cmd_verify(&common, lemma, trials, n_max),
        Command::Report { records, out } => cmd_report(&records, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
