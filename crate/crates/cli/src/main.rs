use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use equibundle::io::{
    apply_overrides, failure_report, load_config_for, run, validate, OutputFormat, Overrides, RunOutcome,
};
use equibundle::Error;

#[derive(Parser)]
#[command(
    name = "equibundle",
    version,
    about = "Equilibrium loci of parametric systems with first integrals"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the non-degeneracy conditions at one point.
    Audit(CommonArgs),
    /// Locate equilibria on a level set of the first integrals.
    Find(CommonArgs),
    /// Trace the one-dimensional fiber through an equilibrium.
    TraceFiber(CommonArgs),
    /// Transport an equilibrium along a parameter path.
    Transport(CommonArgs),
    /// Permutation of a fiber induced by a closed parameter loop.
    Holonomy(CommonArgs),
    /// Compare a direct transport with the composition of two others.
    Cocycle(CommonArgs),
    /// Monodromy of the nonzero Jacobian spectrum around a fiber loop.
    EigenLoop(CommonArgs),
    /// Monodromy of the nonzero spectrum of a closed matrix family.
    TrackMatrixLoop(CommonArgs),
}

impl Cmd {
    fn split(&self) -> (&'static str, &CommonArgs) {
        match self {
            Cmd::Audit(a) => ("audit", a),
            Cmd::Find(a) => ("find", a),
            Cmd::TraceFiber(a) => ("trace-fiber", a),
            Cmd::Transport(a) => ("transport", a),
            Cmd::Holonomy(a) => ("holonomy", a),
            Cmd::Cocycle(a) => ("cocycle", a),
            Cmd::EigenLoop(a) => ("eigen-loop", a),
            Cmd::TrackMatrixLoop(a) => ("track-matrix-loop", a),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
    Both,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => OutputFormat::Json,
            Format::Csv => OutputFormat::Csv,
            Format::Both => OutputFormat::Both,
        }
    }
}

#[derive(Args)]
struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Write the report here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Multistart seed (find, holonomy).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tol_equilibrium: Option<f64>,
    #[arg(long)]
    tol_rank: Option<f64>,
    #[arg(long)]
    tol_newton: Option<f64>,
    #[arg(long)]
    tol_newton_max_iter: Option<usize>,
    #[arg(long)]
    tol_level: Option<f64>,
    #[arg(long)]
    tol_domain_slack: Option<f64>,
    #[arg(long)]
    tol_cluster: Option<f64>,
    #[arg(long)]
    tol_boundary: Option<f64>,
    #[arg(long)]
    tol_transport: Option<f64>,
    #[arg(long)]
    tol_zero: Option<f64>,
    #[arg(long)]
    tol_gap_min: Option<f64>,
}

impl CommonArgs {
    fn overrides(&self) -> Overrides {
        let tolerances = [
            ("equilibrium", self.tol_equilibrium),
            ("rank", self.tol_rank),
            ("newton", self.tol_newton),
            ("newton_max_iter", self.tol_newton_max_iter.map(|v| v as f64)),
            ("level", self.tol_level),
            ("domain_slack", self.tol_domain_slack),
            ("cluster", self.tol_cluster),
            ("boundary", self.tol_boundary),
            ("transport", self.tol_transport),
            ("zero", self.tol_zero),
            ("gap_min", self.tol_gap_min),
        ]
        .into_iter()
        .filter_map(|(name, v)| v.map(|v| (name.to_string(), v)))
        .collect();
        Overrides {
            seed: self.seed,
            tolerances,
            output: self.output.as_ref().map(|p| p.display().to_string()),
            format: self.format.map(Into::into),
        }
    }
}

fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn emit(out: &RunOutcome, path: Option<&Path>, format: OutputFormat) -> std::io::Result<()> {
    let csv = out.csv.as_deref();
    match (path, format) {
        (None, OutputFormat::Csv) if csv.is_some() => print!("{}", csv.unwrap_or_default()),
        (None, _) => print!("{}", out.json),
        (Some(p), OutputFormat::Json) => write_atomic(p, &out.json)?,
        (Some(p), OutputFormat::Csv) => match csv {
            Some(c) => write_atomic(p, c)?,
            None => write_atomic(p, &out.json)?,
        },
        (Some(p), OutputFormat::Both) => {
            write_atomic(&p.with_extension("json"), &out.json)?;
            if let Some(c) = csv {
                write_atomic(&p.with_extension("csv"), c)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args) = cli.command.split();
    let overrides = args.overrides();
    let prepared = load_config_for(&args.config, Some(name)).and_then(|mut cfg| {
        apply_overrides(&mut cfg, &overrides)?;
        if cfg.output.path.is_none() && cfg.output.format == OutputFormat::Both {
            return Err(Error::Input("format `both` needs an output path".into()));
        }
        validate(&cfg)?;
        Ok(cfg)
    });
    let (outcome, path, format) = match prepared {
        Ok(cfg) => {
            let out = run(&cfg);
            let path = cfg.output.path.as_ref().map(PathBuf::from);
            (out, path, cfg.output.format)
        }
        Err(e) => (failure_report(Some(name), &e), args.output.clone(), OutputFormat::Json),
    };
    if outcome.exit_code != 0 {
        if let Some(msg) = serde_json::from_str::<serde_json::Value>(&outcome.json)
            .ok()
            .and_then(|v| v["error"]["message"].as_str().map(str::to_owned))
        {
            eprintln!("equibundle: {msg}");
        }
    }
    if let Err(e) = emit(&outcome, path.as_deref(), format) {
        eprintln!("equibundle: cannot write report: {e}");
        return ExitCode::from(1);
    }
    ExitCode::from(outcome.exit_code as u8)
}
