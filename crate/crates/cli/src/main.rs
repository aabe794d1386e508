//! Command-line driver: wires ingest, geocoding, assignment, the filter
//! pipeline, design selection, estimation and diagnostics behind a single
//! JSON configuration.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use blockdisc_core::designs::DesignKind;
use blockdisc_core::estimator::{estimate_fe_outcomes, estimate_fe_scoped, Outcome, Scope};

#[global_allocator]
static ALLOC: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser)]
#[command(
    name = "blockdisc",
    version,
    about = "Block-level analysis of polling place assignment and voting behavior"
)]
struct Cli {
    /// Worker threads (falls back to BLOCKDISC_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct StageArgs {
    /// Path to the run configuration JSON.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum DesignArg {
    Distance,
    Shock,
}

impl From<DesignArg> for DesignKind {
    fn from(value: DesignArg) -> Self {
        match value {
            DesignArg::Distance => DesignKind::Distance,
            DesignArg::Shock => DesignKind::Shock,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OutcomeArg {
    InPerson,
    Substitution,
    Any,
}

impl From<OutcomeArg> for Outcome {
    fn from(value: OutcomeArg) -> Self {
        match value {
            OutcomeArg::InPerson => Outcome::InPerson,
            OutcomeArg::Substitution => Outcome::Substitution,
            OutcomeArg::Any => Outcome::Any,
        }
    }
}

#[derive(Args)]
struct DesignArgs {
    #[command(flatten)]
    stage: StageArgs,
    /// Which design to select.
    #[arg(long, value_enum)]
    design: DesignArg,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    stage: StageArgs,
    /// Which design's rows to estimate on.
    #[arg(long, value_enum)]
    design: DesignArg,
    /// Restrict to one outcome.
    #[arg(long, value_enum)]
    outcome: Option<OutcomeArg>,
    /// Also estimate per state.
    #[arg(long)]
    by_state: bool,
    /// Also estimate within the window of gaps above this many miles.
    #[arg(long)]
    window: Option<f64>,
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for the generated bundle.
    #[arg(long, default_value = "synth-out")]
    out: PathBuf,
    /// RNG seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Number of analysis blocks.
    #[arg(long, default_value_t = 1000)]
    blocks: usize,
    /// Design to generate for.
    #[arg(long, value_enum, default_value = "distance")]
    design: DesignArg,
    /// True in-person effect.
    #[arg(long, default_value_t = -0.016, allow_hyphen_values = true)]
    theta_in_person: f64,
    /// True substitution effect.
    #[arg(long, default_value_t = 0.017, allow_hyphen_values = true)]
    theta_substitution: f64,
    /// Optional JSON file of generator parameters overriding the flags.
    #[arg(long)]
    params: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the whole pipeline and write every artifact.
    Run(StageArgs),
    /// Parse the input files and write records plus reject sidecars.
    Ingest(StageArgs),
    /// Validate and fill polling-place geocodes.
    Geocode(StageArgs),
    /// Assign voters, run the filter pipeline, and build blocks.
    Blocks(StageArgs),
    /// Select analysis blocks for one design.
    Design(DesignArgs),
    /// Estimate effects from a design dataset.
    Estimate(EstimateArgs),
    /// Balance tables and gap summaries.
    Balance(DesignArgs),
    /// Generate a synthetic population bundle with known ground truth.
    Synth(SynthArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads(cli.threads);
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn init_threads(flag: Option<usize>) {
    let threads =
        flag.or_else(|| std::env::var("BLOCKDISC_THREADS").ok().and_then(|v| v.parse().ok()));
    if let Some(n) = threads {
        // Ignore failure: the global pool can only be set once.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

struct Ctx {
    loaded: config::LoadedConfig,
    out: PathBuf,
}

fn context(args: &StageArgs) -> Result<Ctx> {
    let mut loaded = config::load_config(&args.config)?;
    if let Some(seed) = args.seed {
        loaded.config.seed = seed;
    }
    let out = args.out.clone().unwrap_or_else(|| loaded.config.output_dir.clone());
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok(Ctx { loaded, out })
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run(args) => {
            let ctx = context(&args)?;
            let stage = commands::Stage { loaded: &ctx.loaded, out: &ctx.out };
            commands::run_all(&stage)
        }
        Command::Ingest(args) => {
            let ctx = context(&args)?;
            let stage = commands::Stage { loaded: &ctx.loaded, out: &ctx.out };
            let parsed = commands::run_ingest(&stage)?;
            commands::write_ingest_artifacts(&stage, &parsed)
        }
        Command::Geocode(args) => {
            let ctx = context(&args)?;
            let stage = commands::Stage { loaded: &ctx.loaded, out: &ctx.out };
            let mut parsed = commands::load_ingest_artifacts(&stage)
                .context("geocode needs the ingest artifacts; run `blockdisc ingest` first")?;
            commands::run_geocode(&stage, &mut parsed.places)?;
            commands::write_ingest_artifacts(&stage, &parsed)
        }
        Command::Blocks(args) => {
            let ctx = context(&args)?;
            let stage = commands::Stage { loaded: &ctx.loaded, out: &ctx.out };
            let parsed = commands::load_ingest_artifacts(&stage)
                .context("blocks needs the ingest artifacts; run `blockdisc geocode` first")?;
            commands::run_blocks(&stage, parsed).map(|_| ())
        }
        Command::Design(args) => {
            let ctx = context(&args.stage)?;
            let stage = commands::Stage { loaded: &ctx.loaded, out: &ctx.out };
            let blocks = commands::load_block_artifacts(&stage)
                .context("design needs the block artifacts; run `blockdisc blocks` first")?;
            commands::run_design(&stage, &blocks, args.design.into()).map(|_| ())
        }
        Command::Estimate(args) => {
            let ctx = context(&args.stage)?;
            let stage = commands::Stage { loaded: &ctx.loaded, out: &ctx.out };
            let kind: DesignKind = args.design.into();
            let dataset = commands::load_design(&stage, kind)
                .context("estimate needs a design dataset; run `blockdisc design` first")?;
            estimate_command(&stage, &dataset, &args)
        }
        Command::Balance(args) => {
            let ctx = context(&args.stage)?;
            let stage = commands::Stage { loaded: &ctx.loaded, out: &ctx.out };
            let blocks = commands::load_block_artifacts(&stage)
                .context("balance needs the block artifacts; run `blockdisc blocks` first")?;
            let kind: DesignKind = args.design.into();
            let dataset = commands::load_design(&stage, kind)?;
            let (distance, shock) = match kind {
                DesignKind::Distance => (Some(&dataset), None),
                DesignKind::Shock => (None, Some(&dataset)),
            };
            commands::run_diagnostics(&stage, &blocks.registrants, distance, shock)
        }
        Command::Synth(args) => synth_command(&args),
    }
}

fn estimate_command(
    stage: &commands::Stage,
    dataset: &blockdisc_core::designs::DesignDataset,
    args: &EstimateArgs,
) -> Result<()> {
    let mut estimates = Vec::new();
    let mut scopes = vec![Scope::Pooled];
    if args.by_state {
        let mut states: Vec<&str> = dataset.rows.iter().map(|r| r.state.as_str()).collect();
        states.sort();
        states.dedup();
        scopes.extend(states.into_iter().map(|s| Scope::State(s.to_string())));
    }
    if let Some(threshold) = args.window {
        scopes.push(Scope::Window(threshold));
    }

    for scope in scopes {
        let rows: Vec<blockdisc_core::designs::DesignRow> = match &scope {
            Scope::Pooled => dataset.rows.clone(),
            Scope::State(state) => {
                dataset.rows.iter().filter(|r| &r.state == state).cloned().collect()
            }
            Scope::Window(t) => blockdisc_core::designs::window_subset(dataset, *t).rows,
        };
        let result = match args.outcome {
            Some(outcome) => {
                estimate_fe_scoped(&rows, outcome.into(), scope.clone()).map(|e| vec![e])
            }
            None => estimate_fe_outcomes(&rows, scope.clone()).map(|batch| batch.to_vec()),
        };
        match result {
            Ok(batch) => estimates.extend(batch),
            Err(e) => eprintln!("warning: scope {} skipped: {e}", scope.label()),
        }
    }

    println!(
        "{:<18} {:<13} {:>10} {:>10} {:>10} {:>9}",
        "scope", "outcome", "theta", "ci_low", "ci_high", "n"
    );
    for e in &estimates {
        println!(
            "{:<18} {:<13} {:>10.5} {:>10.5} {:>10.5} {:>9}",
            e.scope.label(),
            e.outcome.label(),
            e.theta_hat,
            e.ci_low,
            e.ci_high,
            e.n_units
        );
    }
    stage.write_json("estimates.json", &estimates)?;
    let file = std::fs::File::create(stage.out.join("estimates.csv"))?;
    blockdisc_core::estimator::write_estimates_csv(&estimates, std::io::BufWriter::new(file))?;
    Ok(())
}

fn synth_command(args: &SynthArgs) -> Result<()> {
    use blockdisc_core::synth::{generate, SynthParams};

    let mut params = match &args.params {
        Some(path) => {
            let bytes =
                std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_slice::<SynthParams>(&bytes)?
        }
        None => SynthParams::default(),
    };
    if args.params.is_none() {
        params.seed = args.seed;
        params.n_blocks = args.blocks;
        params.design = args.design.into();
        params.theta_in_person = args.theta_in_person;
        params.theta_substitution = args.theta_substitution;
        if params.design == DesignKind::Shock {
            params.gap_miles = blockdisc_core::synth::GapRange { min: -0.25, max: 1.0 };
        }
    }

    let out = &args.out;
    std::fs::create_dir_all(out)?;
    let bundle = generate(&params)?;
    std::fs::write(out.join("voters_2012.csv"), &bundle.voters_2012)?;
    std::fs::write(out.join("voters_2016.csv"), &bundle.voters_2016)?;
    std::fs::write(out.join("places.csv"), &bundle.places)?;
    std::fs::write(out.join("geocoder_fixture.jsonl"), &bundle.geocoder_fixture)?;
    std::fs::write(out.join("state_covariates.csv"), &bundle.state_covariates)?;
    std::fs::write(out.join("vote_centers.csv"), "state,county\n")?;

    let manifest = serde_json::json!({
        "params": params,
        "truth": bundle.truth,
    });
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(out.join("manifest.json"), text)?;

    // A ready-to-run config pointing at the bundle.
    let config = serde_json::json!({
        "inputs": {
            "voters_2012": "voters_2012.csv",
            "voters_2016": "voters_2016.csv",
            "places_2012": "places.csv",
            "places_2016": "places.csv",
            "vote_center_counties": "vote_centers.csv",
            "geocoder_fixture": "geocoder_fixture.jsonl",
            "state_covariates": "state_covariates.csv"
        },
        "output_dir": "out",
        "seed": params.seed
    });
    let mut text = serde_json::to_string_pretty(&config)?;
    text.push('\n');
    std::fs::write(out.join("config.json"), text)?;
    println!(
        "wrote synthetic bundle to {} ({} units, checksum {})",
        out.display(),
        bundle.truth.n_units,
        &bundle.truth.checksum[..12]
    );
    Ok(())
}
