//! `dermacal` command-line front end.
//!
//! Exit status: 0 success, 1 validation error (bad flags, files or
//! configuration), 2 analysis infeasible (e.g. zero pairs), 3 I/O error.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dermacal::calibration::{ccm_apply, Ccm};
use dermacal::clinical::clinical_indices;
use dermacal::colorspace::{srgb_decode, srgb_encode, srgb_to_lab};
use dermacal::error::{Error, ErrorClass, Result};
use dermacal::pipeline::config::{parse_analyses, Analysis, RunConfig, RunConfigFile, CONFIG_ENV};
use dermacal::pipeline::record::{records_to_csv, write_csv};
use dermacal::pipeline::report::{to_json, write_outputs, ReportFormat};
use dermacal::pipeline::{ingest_all, run_analysis, PatchRecord, PatchRgb, ReliabilityReport};
use dermacal::simulate::{default_targets, generate_cohort, tune_device_gains, SimulatorConfig};
use dermacal::stats::IccForm;

#[derive(Parser)]
#[command(name = "dermacal", version, about = "Cross-device skin colorimetry and reliability analysis")]
struct Cli {
    /// Run configuration file (TOML). Defaults to $DERMACAL_CONFIG when set.
    /// Explicit flags override values from the file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert patch RGB to CIELAB and clinical indices, one row per record.
    Convert {
        #[arg(long = "input", value_name = "CSV", required = true)]
        inputs: Vec<PathBuf>,
        /// Output CSV; stdout when absent.
        #[arg(long, value_name = "CSV")]
        output: Option<PathBuf>,
    },
    /// CIEDE2000 differences between each device and the reference.
    Deltae(RunArgs),
    /// Colour-correction matrices.
    Ccm {
        #[command(subcommand)]
        action: CcmAction,
    },
    /// Melanin index, erythema index and ITA summaries per device.
    Indices(RunArgs),
    /// Inter-device ICC for the clinical indices and L*a*b* channels.
    Icc(CorrectableArgs),
    /// Bland-Altman bias and limits of agreement per channel.
    BlandAltman(CorrectableArgs),
    /// One-way ANOVA of raw ΔE00 by region, device and angle.
    Anova(RunArgs),
    /// ITA sensitivity to L* and b* at the reference mean colour.
    Sensitivity(RunArgs),
    /// Generate a synthetic multi-device cohort as patch CSV.
    Simulate(SimulateArgs),
    /// Run every enabled analysis and write report.json, report.md and CCMs.
    Report(ReportArgs),
}

#[derive(Subcommand)]
enum CcmAction {
    /// Fit one CCM per device on all pairs and write ccm_<device>_to_<ref>.json.
    Fit(RunArgs),
    /// Apply a fitted CCM to one device's records and write them as decimals.
    Apply {
        /// CCM file written by `ccm fit` or `report`.
        #[arg(long, value_name = "JSON")]
        ccm: PathBuf,
        #[arg(long = "input", value_name = "CSV", required = true)]
        inputs: Vec<PathBuf>,
        /// Device whose records are corrected; other devices are dropped.
        #[arg(long)]
        device: String,
        /// Output CSV; stdout when absent.
        #[arg(long, value_name = "CSV")]
        output: Option<PathBuf>,
    },
    /// Subject-grouped k-fold cross-validation of the CCM fit.
    Crossval(RunArgs),
}

/// Flags shared by the analysis subcommands. Unset flags fall back to the
/// config file, then to built-in defaults.
#[derive(Args, Clone, Default)]
struct RunArgs {
    /// Patch CSV; repeat for several files.
    #[arg(long = "input", value_name = "CSV")]
    inputs: Vec<PathBuf>,
    #[arg(long, value_name = "DEVICE")]
    reference_device: Option<String>,
    /// Cross-validation folds.
    #[arg(long)]
    folds: Option<usize>,
    /// Fold-assignment seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Clinical acceptability threshold on ΔE00.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, value_enum)]
    icc_form: Option<IccFormArg>,
    /// Output directory for written files.
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct CorrectableArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Use raw consumer colours instead of CCM-corrected ones.
    #[arg(long)]
    raw: bool,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated analyses, `all` or `none`.
    #[arg(long)]
    analyses: Option<String>,
    /// Report formats to write, comma-separated.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "json,markdown")]
    format: Vec<FormatArg>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Simulator configuration (TOML); the built-in default when absent.
    #[arg(long, value_name = "FILE")]
    simulator_config: Option<PathBuf>,
    #[arg(long)]
    subjects: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Re-tune consumer gains against the device mean targets first.
    #[arg(long)]
    tune_gains: bool,
    #[arg(long, default_value_t = 4, requires = "tune_gains")]
    tune_iterations: usize,
    /// Write the effective simulator configuration here.
    #[arg(long, value_name = "FILE")]
    write_config: Option<PathBuf>,
    /// Cohort CSV; required unless only --write-config is wanted.
    #[arg(long, value_name = "CSV", required_unless_present = "write_config")]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum IccFormArg {
    Consistency,
    AbsoluteAgreement,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum FormatArg {
    Json,
    Markdown,
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
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Validation => 1,
                ErrorClass::Infeasible => 2,
                ErrorClass::Io => 3,
            })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = cli
        .config
        .or_else(|| std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from));
    let config = config.as_deref();
    match cli.command {
        Command::Convert { inputs, output } => convert(&inputs, output.as_deref()),
        Command::Deltae(args) => section(config, &args, &[Analysis::DeltaE], |r| to_json(&r.deltae)),
        Command::Indices(args) => section(config, &args, &[Analysis::Indices], |r| to_json(&r.indices)),
        Command::Anova(args) => section(config, &args, &[Analysis::Anova], |r| to_json(&r.anova)),
        Command::Sensitivity(args) => {
            section(config, &args, &[Analysis::Sensitivity], |r| to_json(&r.sensitivity))
        }
        Command::Icc(args) => {
            let set = correctable(Analysis::Icc, args.raw);
            section(config, &args.run, &set, |r| to_json(&r.icc))
        }
        Command::BlandAltman(args) => {
            let set = correctable(Analysis::BlandAltman, args.raw);
            section(config, &args.run, &set, |r| to_json(&r.bland_altman))
        }
        Command::Ccm { action } => match action {
            CcmAction::Crossval(args) => section(config, &args, &[Analysis::Ccm], |r| to_json(&r.ccm)),
            CcmAction::Fit(args) => ccm_fit(config, &args),
            CcmAction::Apply {
                ccm,
                inputs,
                device,
                output,
            } => ccm_apply_cmd(&ccm, &inputs, &device, output.as_deref()),
        },
        Command::Simulate(args) => simulate(&args),
        Command::Report(args) => report(config, &args),
    }
}

fn correctable(a: Analysis, raw: bool) -> Vec<Analysis> {
    if raw {
        vec![a]
    } else {
        vec![Analysis::Ccm, a]
    }
}

/// Defaults, then the config file, then explicit flags.
fn resolve(config: Option<&Path>, args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = config {
        RunConfigFile::load(path)?.apply(&mut cfg, path.parent())?;
    }
    if !args.inputs.is_empty() {
        cfg.inputs = args.inputs.clone();
    }
    if let Some(v) = &args.reference_device {
        cfg.reference_device = v.clone();
    }
    if let Some(v) = args.folds {
        cfg.folds = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.threshold {
        cfg.threshold = v;
    }
    if let Some(v) = args.icc_form {
        cfg.icc_form = match v {
            IccFormArg::Consistency => IccForm::Consistency,
            IccFormArg::AbsoluteAgreement => IccForm::AbsoluteAgreement,
        };
    }
    if let Some(v) = &args.out_dir {
        cfg.out_dir = v.clone();
    }
    if cfg.inputs.is_empty() {
        return Err(Error::Config("no input given (use --input or the config file)".into()));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn analyse(cfg: &RunConfig) -> Result<ReliabilityReport> {
    let records = ingest_all(&cfg.inputs)?;
    run_analysis(cfg, &records)
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> Result<()> {
    match std::io::stdout().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::Io {
            path: PathBuf::from("<stdout>"),
            source: e,
        }),
        _ => Ok(()),
    }
}

fn emit_to(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        }),
        None => emit(text),
    }
}

/// Runs the given analyses and prints one section as JSON.
fn section(
    config: Option<&Path>,
    args: &RunArgs,
    analyses: &[Analysis],
    pick: impl Fn(&ReliabilityReport) -> Result<String>,
) -> Result<()> {
    let mut cfg = resolve(config, args)?;
    cfg.analyses = analyses.iter().copied().collect();
    emit(&pick(&analyse(&cfg)?)?)
}

fn report(config: Option<&Path>, args: &ReportArgs) -> Result<()> {
    let mut cfg = resolve(config, &args.run)?;
    if let Some(list) = &args.analyses {
        cfg.analyses = parse_analyses(list)?;
    }
    let formats: Vec<ReportFormat> = args
        .format
        .iter()
        .map(|f| match f {
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Markdown => ReportFormat::Markdown,
        })
        .collect();
    let report = analyse(&cfg)?;
    let written = write_outputs(&report, &cfg.out_dir, &formats)?;
    let list: String = written.iter().map(|p| format!("{}\n", p.display())).collect();
    emit(&list)
}

fn ccm_fit(config: Option<&Path>, args: &RunArgs) -> Result<()> {
    let mut cfg = resolve(config, args)?;
    cfg.analyses = [Analysis::Ccm].into_iter().collect();
    let report = analyse(&cfg)?;
    let written = write_outputs(&report, &cfg.out_dir, &[])?;
    let list: String = written.iter().map(|p| format!("{}\n", p.display())).collect();
    emit(&list)
}

fn ccm_apply_cmd(ccm_path: &Path, inputs: &[PathBuf], device: &str, output: Option<&Path>) -> Result<()> {
    let text = std::fs::read_to_string(ccm_path).map_err(|e| Error::Io {
        path: ccm_path.to_path_buf(),
        source: e,
    })?;
    let ccm: Ccm = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: not a CCM file: {e}", ccm_path.display())))?;
    if !ccm.is_finite() {
        return Err(Error::Config(format!("{}: CCM has non-finite entries", ccm_path.display())));
    }
    let corrected: Vec<PatchRecord> = ingest_all(inputs)?
        .into_iter()
        .filter(|r| r.device == device)
        .map(|r| {
            let lin = ccm_apply(&ccm, srgb_decode(r.rgb.to_srgb())?);
            let out = srgb_encode(lin)?;
            Ok(PatchRecord {
                rgb: PatchRgb::Unit([out.r, out.g, out.b]),
                ..r
            })
        })
        .collect::<Result<_>>()?;
    if corrected.is_empty() {
        return Err(Error::InsufficientData(format!("no records for device `{device}`")));
    }
    match output {
        Some(path) => write_csv(path, &corrected),
        None => emit(&records_to_csv(&corrected)?),
    }
}

fn convert(inputs: &[PathBuf], output: Option<&Path>) -> Result<()> {
    let mut out = String::from(
        "subject_id,device,region,angle,l_star,a_star,b_star,melanin_index,erythema_index,ita_degrees,ita_degenerate\n",
    );
    for r in ingest_all(inputs)? {
        let lab = srgb_to_lab(r.rgb.to_srgb())?;
        let ix = clinical_indices(lab)?;
        out.push_str(&format!(
            "{},{},{},{},{:?},{:?},{:?},{:?},{:?},{:?},{}\n",
            r.subject_id,
            r.device,
            r.region,
            r.angle,
            lab.l,
            lab.a,
            lab.b,
            ix.melanin_index,
            ix.erythema_index,
            ix.ita_degrees,
            ix.ita_degenerate
        ));
    }
    emit_to(output, &out)
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let mut sim = match &args.simulator_config {
        Some(path) => SimulatorConfig::load(path)?,
        None => SimulatorConfig::default(),
    };
    if let Some(n) = args.subjects {
        sim.cohort.subject_count = n;
    }
    if let Some(s) = args.seed {
        sim.cohort.seed = s;
    }
    if args.tune_gains {
        sim.devices = tune_device_gains(&sim.cohort, &sim.devices, &default_targets(), args.tune_iterations)?;
    }
    if let Some(path) = &args.write_config {
        emit_to(Some(path), &sim.to_toml()?)?;
    }
    if let Some(path) = &args.output {
        generate_cohort(&sim.cohort, &sim.devices)?.write_csv(path)?;
    }
    Ok(())
}
