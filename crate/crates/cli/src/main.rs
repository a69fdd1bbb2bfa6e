mod selftest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use slocc_core::catalog::{build_catalog, Catalog};
use slocc_core::classify::{classify, compare, CompareOptions, Verdict, DEFAULT_CERT_TOL, DEFAULT_TOL};
use slocc_core::search::SearchBudget;
use slocc_core::{SloccError, StateTensor};

/// Exit codes.
const EXIT_OK: u8 = 0;
const EXIT_INEQUIVALENT: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_UNDECIDED: u8 = 4;
const EXIT_DIMS: u8 = 5;

#[derive(Parser)]
#[command(name = "slocc", version, about = "SLOCC family classification and equivalence certificates")]
struct Cli {
    #[command(flatten)]
    config: RunConfig,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
struct RunConfig {
    /// Relative rank threshold.
    #[arg(long, global = true, default_value_t = DEFAULT_TOL)]
    tol: f64,
    /// Largest accepted certificate residual.
    #[arg(long, global = true, default_value_t = DEFAULT_CERT_TOL)]
    cert_tol: f64,
    /// Orbit-search restarts (overrides the preset).
    #[arg(long, global = true)]
    restarts: Option<usize>,
    /// Iterations per restart (overrides the preset).
    #[arg(long, global = true)]
    iters: Option<usize>,
    /// Seed of every randomized search step.
    #[arg(long, global = true, env = "SLOCC_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Human)]
    format: Format,
    /// Search budget: fast is 50 x 500, thorough 200 x 2000.
    #[arg(long, global = true, value_enum, default_value_t = Preset::Fast)]
    budget_preset: Preset,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Human,
    Json,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Preset {
    Fast,
    Thorough,
}

#[derive(Subcommand)]
enum Command {
    /// Print the family label and standard form of a state.
    Classify { path: PathBuf },
    /// Decide whether two states are SLOCC equivalent.
    Compare { a: PathBuf, b: PathBuf },
    /// List the family catalog.
    Catalog {
        #[arg(long, default_value = slocc_core::catalog::SYSTEM)]
        system: String,
        #[command(subcommand)]
        action: Option<CatalogAction>,
    },
    /// Run the built-in consistency suites.
    Selftest,
}

#[derive(Subcommand)]
enum CatalogAction {
    /// Regenerate the catalog and write it as JSON.
    Build {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

impl RunConfig {
    fn budget(&self) -> SearchBudget {
        let base = match self.budget_preset {
            Preset::Fast => SearchBudget::fast(),
            Preset::Thorough => SearchBudget::thorough(),
        };
        SearchBudget {
            restarts: self.restarts.unwrap_or(base.restarts),
            max_iterations: self.iters.unwrap_or(base.max_iterations),
            ..base.with_seed(self.seed)
        }
    }

    fn validate(&self) -> Result<(), String> {
        for (name, v) in [("--tol", self.tol), ("--cert-tol", self.cert_tol)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(format!("{name} must lie in (0, 1), got {v}"));
            }
        }
        if !self.budget().is_valid() {
            return Err("--restarts and --iters must be positive".into());
        }
        Ok(())
    }

    fn compare_options(&self) -> CompareOptions {
        CompareOptions { tol: self.tol, cert_tol: self.cert_tol, budget: self.budget() }
    }
}

fn exit_for(err: &SloccError) -> u8 {
    match err {
        SloccError::DimsMismatch(..) => EXIT_DIMS,
        SloccError::RankDecisionUnstable { .. } | SloccError::NotInvertible(_) | SloccError::Reconstruction(_) => {
            EXIT_NUMERICAL
        }
        _ => EXIT_INPUT,
    }
}

fn load(path: &Path) -> Result<StateTensor, SloccError> {
    StateTensor::load(path).map_err(|e| match e {
        SloccError::Io(io) => SloccError::Malformed(format!("{}: {io}", path.display())),
        other => other,
    })
}

fn cmd_classify(path: &Path, cfg: &RunConfig) -> Result<u8, SloccError> {
    let state = load(path)?;
    let c = classify(&state, cfg.tol)?;
    let catalog = Catalog::shipped();
    let slot = catalog.slot_for(&c.label).map(|e| e.id);
    if cfg.format == Format::Json {
        let doc = serde_json::json!({
            "label": c.label,
            "label_key": c.label.key(),
            "catalog_id": slot,
            "effective_shape": c.standard_form.effective_shape,
            "residual": c.transforms.residual,
            "genuine": c.genuine.genuine,
            "genuine_explanation": c.genuine.explanation,
        });
        println!("{}", serde_json::to_string_pretty(&doc)?);
    } else {
        println!("dims: {:?}", c.label.dims);
        println!("label: {}", c.label.key());
        match slot {
            Some(id) => println!("catalog id: {id}"),
            None => println!("catalog id: none"),
        }
        let sf = &c.standard_form;
        println!("pencil shape: {:?} (effective {:?}, transposed {})", sf.shape, sf.effective_shape, c.label.transposed);
        println!("reconstruction residual: {:.3e}", c.transforms.residual);
        println!("genuine: {}", c.genuine.genuine);
        println!("  {}", c.genuine.explanation);
    }
    Ok(EXIT_OK)
}

fn cmd_compare(a: &Path, b: &Path, cfg: &RunConfig) -> Result<u8, SloccError> {
    let (sa, sb) = (load(a)?, load(b)?);
    let cert = compare(&sa, &sb, &cfg.compare_options())?;
    if cfg.format == Format::Json {
        println!("{}", cert.to_json());
    } else {
        println!("verdict: {:?}", cert.verdict);
        println!("label a: {}", cert.diagnostics.label_a.key());
        println!("label b: {}", cert.diagnostics.label_b.key());
        if let Some(s) = &cert.diagnostics.search {
            println!(
                "search: phase {:?}, {} gauge alternative(s), orbit dimension {}, best gap {:.3e}",
                s.phase, s.gauge_alternatives, s.orbit_dimension, s.best_gap
            );
        }
        if let (Some(ops), Some(res)) = (&cert.operators, cert.residual) {
            println!("residual: {res:.3e}");
            for (k, m) in ops.ops().iter().enumerate() {
                println!("A{}:", k + 1);
                for i in 0..m.nrows() {
                    let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.6}", m[(i, j)])).collect();
                    println!("  [{}]", row.join(", "));
                }
            }
        }
    }
    Ok(match cert.verdict {
        Verdict::Equivalent => EXIT_OK,
        Verdict::Inequivalent => EXIT_INEQUIVALENT,
        Verdict::SameFamilyUndecided => EXIT_UNDECIDED,
    })
}

fn cmd_catalog(system: &str, action: Option<&CatalogAction>, cfg: &RunConfig) -> Result<u8, SloccError> {
    let catalog = match action {
        Some(CatalogAction::Build { .. }) => {
            Catalog::for_system(system)?;
            build_catalog()?
        }
        None => Catalog::for_system(system)?,
    };
    if let Some(CatalogAction::Build { out: Some(path) }) = action {
        std::fs::write(path, catalog.to_json() + "\n")?;
        eprintln!("wrote {} entries to {}", catalog.entries.len(), path.display());
        return Ok(EXIT_OK);
    }
    if cfg.format == Format::Json {
        println!("{}", catalog.to_json());
        return Ok(EXIT_OK);
    }
    println!("system {}: {} family slots", catalog.system, catalog.entries.len());
    let split: Vec<String> = catalog.counts_by_source().iter().map(|(s, n)| format!("{s}: {n}")).collect();
    println!("split: {}", split.join(", "));
    for e in &catalog.entries {
        let param = e.parameter.as_ref().map(|p| format!(" [parameter {} = {:?}, sample]", p.name, p.sample));
        println!("{:>2}  {}  {}{}", e.id, e.source_system, e.ket_string(), param.unwrap_or_default());
    }
    Ok(EXIT_OK)
}

fn run(cli: &Cli) -> Result<u8, SloccError> {
    let cfg = &cli.config;
    match &cli.command {
        Command::Classify { path } => cmd_classify(path, cfg),
        Command::Compare { a, b } => cmd_compare(a, b, cfg),
        Command::Catalog { system, action } => cmd_catalog(system, action.as_ref(), cfg),
        Command::Selftest => selftest::run(cfg.tol, cfg.seed, cfg.format == Format::Json),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = cli.config.validate() {
        eprintln!("error: {msg}");
        return ExitCode::from(EXIT_INPUT);
    }
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}
