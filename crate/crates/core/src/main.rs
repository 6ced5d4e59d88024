use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use zcal::binning::{BinCount, Scheme};
use zcal::dataset::{
    correlation_matrix, load_dataset, stratification_profile, ColumnMapping, Variable,
};
use zcal::plots::{emit_plot_series, PlotKind};
use zcal::report::{run_validate, AnalysisConfig, ValidationReport, EXIT_ERROR};
use zcal::stats::StatKind;
use zcal::synth::{generate, FeatureRecipe, SynthSpec, UncertaintyLaw};
use zcal::{Error, Result};

#[derive(Parser)]
#[command(name = "zcal", version, about = "Z-score calibration diagnostics for uncertainty quantification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run average calibration, consistency and adaptivity tests.
    Validate(ValidateArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Stratification profile and rank correlations of a dataset.
    Profile(ProfileArgs),
    /// Emit plot series from a saved report.
    Plots(PlotsArgs),
}

#[derive(Args)]
struct ValidateArgs {
    /// TOML configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    /// `E=<col>,uE=<col>` or `R=<col>,V=<col>[,uR=<col>][,uV=<col>]`.
    #[arg(long)]
    map: Option<String>,
    /// Conditioning variables (`uE` for consistency, feature columns for adaptivity).
    #[arg(long, value_delimiter = ',')]
    by: Option<Vec<String>>,
    /// Bin count or `auto`.
    #[arg(long)]
    bins: Option<BinCount>,
    /// Binning scheme(s): equal, strata.
    #[arg(long, value_delimiter = ',')]
    binning: Option<Vec<Scheme>>,
    #[arg(long)]
    min_stratum: Option<usize>,
    /// Statistics: ZM, ZMS, ZVAR.
    #[arg(long, value_delimiter = ',')]
    kinds: Option<Vec<StatKind>>,
    #[arg(long)]
    level: Option<f64>,
    #[arg(long)]
    boot: Option<usize>,
    /// Reordering replicates; 0 disables the perturbation study.
    #[arg(long)]
    perms: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write SVG sketches of each panel.
    #[arg(long)]
    svg: bool,
}

impl ValidateArgs {
    fn into_config(self) -> Result<AnalysisConfig> {
        let mut c = match &self.config {
            Some(path) => AnalysisConfig::from_file(path)?,
            None => AnalysisConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(if let Some(v) = self.$field { c.$field = v; })*};
        }
        set!(map, by, bins, binning, min_stratum, kinds, level, boot, perms, seed);
        if self.input.is_some() {
            c.input = self.input;
        }
        if self.out.is_some() {
            c.out = self.out;
        }
        c.svg |= self.svg;
        Ok(c)
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Spec file (TOML, or JSON with a .json extension).
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Dataset size when no spec is given, or override of the spec size.
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output table.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ProfileArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "E=E,uE=uE")]
    map: String,
    #[arg(long, value_delimiter = ',')]
    by: Vec<String>,
    /// Write the profile as JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotsArgs {
    #[arg(long)]
    report: PathBuf,
    /// average, homoscedasticity, lz, acf, fv-summary, reliability or all.
    #[arg(long, default_value = "all")]
    kind: PlotKind,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    svg: bool,
}

fn validate(args: ValidateArgs) -> Result<i32> {
    let config = args.into_config()?;
    let report = run_validate(&config)?;
    if let Some(out) = &config.out {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        report.write(out.join("report.json"))?;
        emit_plot_series(&report, PlotKind::All, out, config.svg)?;
    } else {
        print!("{}", report.to_json()?);
    }
    let v = &report.verdicts;
    eprintln!("average calibration: {:?}", v.average_calibration);
    if let Some(c) = v.consistency {
        eprintln!("consistency: {c:?}");
    }
    for a in &v.adaptivity {
        eprintln!("adaptivity ({}): {:?}", a.variable, a.verdict);
    }
    if let Some(f) = v.first_failure() {
        eprintln!("first failed target: {f}");
    }
    Ok(report.exit_code())
}

fn synth(args: SynthArgs) -> Result<i32> {
    let mut spec = match &args.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            if path.extension().is_some_and(|e| e == "json") {
                serde_json::from_str::<SynthSpec>(&text)?
            } else {
                toml::from_str::<SynthSpec>(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
        }
        None => SynthSpec::new(10_000, UncertaintyLaw::LogUniform { low: 0.1, high: 1.0 }, 0)
            .with_feature(FeatureRecipe::Uniform { name: "X1".into(), low: 0.0, high: 1.0 }),
    };
    if let Some(n) = args.size {
        spec.size = n;
    }
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    let d = generate(&spec)?;
    let file = std::fs::File::create(&args.out).map_err(|e| Error::io(&args.out, e))?;
    d.write_csv(std::io::BufWriter::new(file))?;
    eprintln!("wrote {} rows to {}", d.len(), args.out.display());
    Ok(0)
}

fn profile(args: ProfileArgs) -> Result<i32> {
    let mapping = ColumnMapping::parse(&args.map)?.with_features(
        &args.by.iter().filter(|b| !Variable::parse(b).is_uncertainty()).collect::<Vec<_>>(),
    );
    let loaded = load_dataset(&args.input, &mapping)?;
    let d = &loaded.dataset;
    let profiles = args
        .by
        .iter()
        .map(|b| {
            let v = Variable::parse(b);
            stratification_profile(v.name(), d.values(&v)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = serde_json::json!({
        "size": d.len(),
        "rejected": loaded.rejected,
        "unique": profiles.iter().map(|p| (p.variable.clone(), p.unique())).collect::<Vec<_>>(),
        "profiles": profiles,
        "correlations": correlation_matrix(d),
    });
    let text = serde_json::to_string_pretty(&summary)? + "\n";
    match args.out {
        Some(path) => std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?,
        None => print!("{text}"),
    }
    Ok(0)
}

fn plots(args: PlotsArgs) -> Result<i32> {
    let report = ValidationReport::read(&args.report)?;
    for path in emit_plot_series(&report, args.kind, &args.out, args.svg)? {
        println!("{}", path.display());
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Validate(a) => validate(a),
        Command::Synth(a) => synth(a),
        Command::Profile(a) => profile(a),
        Command::Plots(a) => plots(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
