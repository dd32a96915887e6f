use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use spinpair::fit::{fit_quality_report, parse_keys, FitResult, FitSpec, QualityReport};
use spinpair::interaction::{dipole_coupling, exchange_report, min_exchange_scan, ExchangeInput};
use spinpair::io::{self, ExtractOptions, ModelConfig};
use spinpair::spectrum::anticross::{detect_anticrossings, detect_crossings, AnticrossOptions};
use spinpair::spectrum::{
    render_map_with_floor, sweep, AnticrossingReport, CrossingReport, SweepSpec,
};
use spinpair::{preset_model, ElectronicState, Error, Matrix3, Vector3};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "spinpair",
    version,
    about = "Optical-Zeeman simulation and fitting for coupled ion pairs"
)]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Sweep the field and write the spectral map.
    Simulate(SimulateArgs),
    /// Fit model parameters to a peak list.
    Fit(FitArgs),
    /// Report anticrossings and crossings over a sweep.
    Anticross(AnticrossArgs),
    /// Dipolar coupling and exchange share for a pair geometry.
    Dipole(DipoleArgs),
    /// Extract peaks from a measured map.
    Extract(ExtractArgs),
    /// Write a built-in model as a configuration file.
    Preset(PresetArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// Model configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in model; replaces the configuration's model when both are given.
    #[arg(long)]
    preset: Option<String>,
}

impl ModelArgs {
    fn load(&self) -> Result<ModelConfig> {
        let mut cfg = match &self.config {
            Some(p) => ModelConfig::read(p).with_context(|| format!("reading {}", p.display()))?,
            None => match &self.preset {
                Some(name) => ModelConfig::new(preset_model(name)?),
                None => bail!(UsageError("one of --config or --preset is required".into())),
            },
        };
        if let (Some(_), Some(name)) = (&self.config, &self.preset) {
            cfg.model = preset_model(name)?;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, allow_hyphen_values = true)]
    bmin: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    bmax: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Field direction `x,y,z`.
    #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
    axis: Option<Vector3>,
}

impl SweepArgs {
    fn apply(&self, mut spec: SweepSpec) -> SweepSpec {
        if let Some(v) = self.bmin {
            spec.b_min = v;
        }
        if let Some(v) = self.bmax {
            spec.b_max = v;
        }
        if let Some(v) = self.steps {
            spec.steps = v;
        }
        if let Some(v) = self.axis {
            spec.axis = v;
        }
        spec
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    sweep: SweepArgs,
    /// Gaussian line width (GHz).
    #[arg(long)]
    sigma: Option<f64>,
    /// Map CSV output.
    #[arg(long)]
    out: PathBuf,
    /// 16-bit PGM rendering of the map.
    #[arg(long = "png-out", alias = "pgm-out")]
    png_out: Option<PathBuf>,
    /// Anticrossing report (JSON).
    #[arg(long = "anticross-out")]
    anticross_out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    peaks: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    /// Free parameters, e.g. `g0z,g1z,J00zz,J10zz,J01zz,delta`.
    #[arg(long)]
    free: String,
    /// Fitted configuration plus fit diagnostics (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Seed of the randomised restarts.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Global restarts in addition to the local start.
    #[arg(long)]
    restarts: Option<usize>,
    /// Association threshold (GHz).
    #[arg(long)]
    threshold: Option<f64>,
    /// Field direction of the peaks `x,y,z`.
    #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
    axis: Option<Vector3>,
}

#[derive(Args)]
struct AnticrossArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    sweep: SweepArgs,
    #[arg(long)]
    out: PathBuf,
    /// Largest gap reported (GHz).
    #[arg(long)]
    gap_ceiling: Option<f64>,
}

#[derive(Args)]
struct DipoleArgs {
    /// Built-in model supplying tensors and measured couplings.
    #[arg(long)]
    preset: Option<String>,
    /// Model configuration supplying tensors and measured couplings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Ion 1 ground g-tensor: `gz`, `gx,gy,gz` or nine row-major entries (GHz/T).
    #[arg(long, value_parser = parse_tensor, allow_hyphen_values = true)]
    g1: Option<Matrix3>,
    #[arg(long, value_parser = parse_tensor, allow_hyphen_values = true)]
    g2: Option<Matrix3>,
    /// Excited-level tensors (default: the ground ones).
    #[arg(long = "g1-excited", value_parser = parse_tensor, allow_hyphen_values = true)]
    g1_excited: Option<Matrix3>,
    #[arg(long = "g2-excited", value_parser = parse_tensor, allow_hyphen_values = true)]
    g2_excited: Option<Matrix3>,
    #[arg(long = "r-angstrom")]
    r_angstrom: f64,
    /// Direction from ion 1 to ion 2 `x,y,z`.
    #[arg(long, value_parser = parse_vector, default_value = "0,0,1", allow_hyphen_values = true)]
    axis: Vector3,
    /// Separation scan `rmin:rmax:steps` (Å).
    #[arg(long)]
    scan: Option<String>,
    /// Measured J_zz per state: `J00[,J10[,J01[,J11]]]` (GHz).
    #[arg(long, allow_hyphen_values = true)]
    jobs: Option<String>,
    /// Full report (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExtractArgs {
    /// Raw map CSV `field_T,frequency_GHz,current`.
    #[arg(long)]
    map: PathBuf,
    #[arg(long, default_value_t = 5.0)]
    kmad: f64,
    /// Minimum peak separation (GHz).
    #[arg(long = "min-sep", default_value_t = 0.3)]
    min_sep: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PresetArgs {
    /// siteA, siteB or siteB-ising.
    name: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// List the built-in names.
    #[arg(long)]
    list: bool,
}

/// Bad invocation that clap cannot see (exit 1).
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Work finished but did not converge (exit 3).
#[derive(Debug)]
struct NotConverged(String);

impl std::fmt::Display for NotConverged {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NotConverged {}

fn parse_numbers(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| format!("`{t}` is not a number"))
        })
        .collect()
}

fn parse_vector(s: &str) -> Result<Vector3, String> {
    match parse_numbers(s)?.as_slice() {
        &[x, y, z] => Ok(Vector3::new(x, y, z)),
        _ => Err("expected three comma-separated numbers".into()),
    }
}

fn parse_tensor(s: &str) -> Result<Matrix3, String> {
    let v = parse_numbers(s)?;
    match v.len() {
        1 => Ok(Matrix3::diag(0.0, 0.0, v[0])),
        3 => Ok(Matrix3::diag(v[0], v[1], v[2])),
        9 => Ok(Matrix3([
            [v[0], v[1], v[2]],
            [v[3], v[4], v[5]],
            [v[6], v[7], v[8]],
        ])),
        _ => Err("expected 1, 3 or 9 comma-separated numbers".into()),
    }
}

fn parse_scan(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, n] = parts.as_slice() else {
        bail!(UsageError(format!(
            "--scan `{s}`: expected rmin:rmax:steps"
        )));
    };
    let lo: f64 = lo
        .parse()
        .map_err(|_| UsageError(format!("--scan: bad rmin `{lo}`")))?;
    let hi: f64 = hi
        .parse()
        .map_err(|_| UsageError(format!("--scan: bad rmax `{hi}`")))?;
    let n: usize = n
        .parse()
        .map_err(|_| UsageError(format!("--scan: bad steps `{n}`")))?;
    if n < 2 || hi.is_nan() || lo.is_nan() || hi <= lo {
        bail!(UsageError(
            "--scan needs rmax > rmin and at least 2 steps".into()
        ));
    }
    Ok((0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect())
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let mut cfg = args.model.load()?;
    cfg.sweep = args.sweep.apply(cfg.sweep);
    if let Some(s) = args.sigma {
        cfg.presentation.sigma = s;
    }
    let sw = sweep(&cfg.model, &cfg.sweep)?;
    let map = sw.to_map(&cfg.presentation.map_options())?;
    io::write_spectrum(&map, &args.out)?;
    println!(
        "{}: {} fields × {} frequencies ({:.3} to {:.3} GHz), model {}",
        args.out.display(),
        map.fields.len(),
        map.frequencies.len(),
        map.frequencies[0],
        map.frequencies[map.frequencies.len() - 1],
        &sw.model_hash[..12]
    );
    if let Some(p) = &args.png_out {
        let img = render_map_with_floor(&map, cfg.presentation.color_floor)?;
        io::write_image(&img, p)?;
        println!("{}: {}×{} image", p.display(), img.width, img.height);
    }
    if let Some(p) = &args.anticross_out {
        let report = anticross_report(&cfg, &sw, &AnticrossOptions::default())?;
        io::write_json(&report, p)?;
        println!(
            "{}: {} anticrossings",
            p.display(),
            report.anticrossings.len()
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct AnticrossFile {
    model_hash: String,
    sweep: SweepSpec,
    anticrossings: Vec<AnticrossingReport>,
    crossings: Vec<CrossingReport>,
}

fn anticross_report(
    cfg: &ModelConfig,
    sw: &spinpair::spectrum::Sweep,
    opts: &AnticrossOptions,
) -> Result<AnticrossFile> {
    Ok(AnticrossFile {
        model_hash: sw.model_hash.clone(),
        sweep: cfg.sweep,
        anticrossings: detect_anticrossings(&cfg.model, sw, opts)?,
        crossings: detect_crossings(sw)?,
    })
}

fn anticross(args: &AnticrossArgs) -> Result<()> {
    let mut cfg = args.model.load()?;
    cfg.sweep = args.sweep.apply(cfg.sweep);
    let mut opts = AnticrossOptions::default();
    if let Some(g) = args.gap_ceiling {
        opts.gap_ceiling = g;
    }
    let sw = sweep(&cfg.model, &cfg.sweep)?;
    let report = anticross_report(&cfg, &sw, &opts)?;
    for a in &report.anticrossings {
        println!(
            "{:?} {:?} anticrossing at {:.4} T: gap {:.4} GHz, dark branch {:?}, involves {}",
            a.manifold,
            a.kind,
            a.center_field,
            a.min_gap,
            a.dark_branch,
            a.involved.join(" ")
        );
    }
    println!(
        "{} anticrossings, {} crossings",
        report.anticrossings.len(),
        report.crossings.len()
    );
    io::write_json(&report, &args.out)?;
    Ok(())
}

#[derive(Serialize)]
struct FitFile<'a> {
    #[serde(flatten)]
    config: &'a ModelConfig,
    fit: &'a FitResult,
    quality: &'a QualityReport,
}

fn fit(args: &FitArgs) -> Result<()> {
    let mut cfg = args.model.load()?;
    let peaks = io::read_peaks(&args.peaks)?;
    let keys = parse_keys(&args.free)?;
    let mut spec = FitSpec::new(cfg.model.clone(), &keys)?;
    spec.seed = args.seed;
    if let Some(r) = args.restarts {
        spec.restarts = r;
    }
    if let Some(t) = args.threshold {
        spec.threshold = t;
    }
    if let Some(a) = args.axis {
        spec.axis = a;
    }
    let result = spinpair::fit_model(&spec, &peaks)?;
    let quality = fit_quality_report(&result, &peaks);
    print!("{quality}");
    cfg.model = result.model.clone();
    io::write_json(
        &FitFile {
            config: &cfg,
            fit: &result,
            quality: &quality,
        },
        &args.out,
    )?;
    if !result.converged {
        bail!(NotConverged(format!(
            "fit did not converge within the evaluation budget; best parameters written to {}",
            args.out.display()
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct DipoleFile {
    r_angstrom: f64,
    axis: Vector3,
    j_dd_ground: Matrix3,
    report: Option<spinpair::interaction::ExchangeReport>,
    scan: Option<spinpair::interaction::ExchangeScan>,
}

fn dipole(args: &DipoleArgs) -> Result<()> {
    let from_model = match (&args.config, &args.preset) {
        (Some(p), _) => Some(ModelConfig::read(p)?.model),
        (None, Some(name)) => Some(preset_model(name)?),
        (None, None) => None,
    };
    let mut inputs: Vec<ExchangeInput> = match &from_model {
        Some(m) => ExchangeInput::from_model(m),
        None => {
            let (Some(g1), Some(g2)) = (args.g1, args.g2) else {
                bail!(UsageError(
                    "--g1 and --g2 are required without --preset or --config".into()
                ));
            };
            let e1 = args.g1_excited.unwrap_or(g1);
            let e2 = args.g2_excited.unwrap_or(g2);
            [
                (ElectronicState::G00, g1, g2),
                (ElectronicState::E10, e1, g2),
                (ElectronicState::E01, g1, e2),
                (ElectronicState::E11, e1, e2),
            ]
            .into_iter()
            .map(|(state, m1, m2)| ExchangeInput {
                state,
                m1,
                m2,
                j_obs_zz: f64::NAN,
            })
            .collect()
        }
    };
    if let Some(list) = &args.jobs {
        let values = parse_numbers(list).map_err(|e| UsageError(format!("--jobs: {e}")))?;
        if values.is_empty() || values.len() > inputs.len() {
            bail!(UsageError(format!(
                "--jobs: expected 1 to {} values",
                inputs.len()
            )));
        }
        inputs.truncate(values.len());
        for (inp, v) in inputs.iter_mut().zip(values) {
            inp.j_obs_zz = v;
        }
    } else if from_model.is_none() {
        inputs.clear();
    }

    let (g1, g2) = match (&from_model, args.g1, args.g2) {
        (Some(m), _, _) => (m.ion1.ground, m.ion2.ground),
        (None, Some(a), Some(b)) => (a, b),
        _ => unreachable!("checked above"),
    };
    let dir = args
        .axis
        .normalized()
        .ok_or_else(|| UsageError("--axis must be non-zero".into()))?;
    let j_dd = dipole_coupling(&g1, &g2, dir * args.r_angstrom)?;
    println!(
        "J_dd (ground state) at {} Å along ({}, {}, {}):",
        args.r_angstrom, dir[0], dir[1], dir[2]
    );
    for i in 0..3 {
        println!(
            "  [{:>12.5} {:>12.5} {:>12.5}]",
            j_dd[(i, 0)],
            j_dd[(i, 1)],
            j_dd[(i, 2)]
        );
    }
    println!("|J_dd,zz| = {:.3} GHz", j_dd[(2, 2)].abs());

    let mut out = DipoleFile {
        r_angstrom: args.r_angstrom,
        axis: dir,
        j_dd_ground: j_dd,
        report: None,
        scan: None,
    };
    if !inputs.is_empty() {
        let report = exchange_report(&inputs, dir, args.r_angstrom)?;
        for s in &report.states {
            println!(
                "state {}: J_obs,zz {:.3}  J_dd,zz {:.3}  exchange fraction {:.4}",
                s.state,
                s.j_obs_zz,
                s.j_dd[(2, 2)],
                s.fraction
            );
        }
        println!(
            "aggregate exchange fraction {:.4}",
            report.aggregate_fraction
        );
        out.report = Some(report);
        if let Some(scan) = &args.scan {
            let grid = parse_scan(scan)?;
            let s = min_exchange_scan(&inputs, dir, &grid)?;
            println!(
                "scan: smallest worst-state fraction {:.4} at {:.3} Å",
                s.best_max_fraction, s.best_r_angstrom
            );
            out.scan = Some(s);
        }
    } else if args.scan.is_some() {
        bail!(UsageError(
            "--scan needs measured couplings (--jobs, --preset or --config)".into()
        ));
    }
    if let Some(p) = &args.out {
        io::write_json(&out, p)?;
    }
    Ok(())
}

fn extract(args: &ExtractArgs) -> Result<()> {
    let map = io::read_raw_map(&args.map)?;
    let peaks = spinpair::io::extract_peaks(
        &map,
        &ExtractOptions {
            k_mad: args.kmad,
            min_separation: args.min_sep,
        },
    )?;
    io::write_peaks(&peaks, &args.out)?;
    println!(
        "{}: {} peaks from {} columns",
        args.out.display(),
        peaks.len(),
        map.fields.len()
    );
    Ok(())
}

fn preset(args: &PresetArgs) -> Result<()> {
    if args.list {
        for n in spinpair::spectrum::presets::PRESET_NAMES {
            println!("{n}");
        }
        return Ok(());
    }
    let Some(name) = &args.name else {
        bail!(UsageError("give a preset name or --list".into()));
    };
    let cfg = ModelConfig::new(preset_model(name)?);
    match &args.out {
        Some(p) => cfg.write(p)?,
        None => println!("{}", serde_json::to_string_pretty(&cfg)?),
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if cause.is::<NotConverged>() {
            return EXIT_NUMERICAL;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_DATA
            };
        }
    }
    EXIT_DATA
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Anticross(a) => anticross(a),
        Command::Dipole(a) => dipole(a),
        Command::Extract(a) => extract(a),
        Command::Preset(a) => preset(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            // help and version go to stdout, errors with usage to stderr
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
