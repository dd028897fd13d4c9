use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use simelig::instrument::{MaternalMode, Variant};
use simelig::pipeline::{self, EstimateOptions, ImputeOptions, InstrumentOptions, PipelineError};
use simelig::policy_rules::synth::SynthRulesConfig;
use simelig::policy_rules::ReferencePeriod;

/// Simulated Medicaid eligibility pipeline.
#[derive(Parser)]
#[command(name = "simelig", version)]
struct Cli {
    /// Global seed; stage seeds are derived from it and the stage name.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rule database commands.
    #[command(subcommand)]
    Rules(RulesCommand),
    /// Generate a synthetic population and state panel.
    Gen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Link families, assign birth months and evaluate own-state eligibility.
    Impute {
        #[arg(long)]
        population: PathBuf,
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        state_panel: Option<PathBuf>,
        #[arg(long, default_value = "last_year")]
        reference: ReferencePeriod,
        /// Keep mothers whose outcome is imputed instead of reweighting.
        #[arg(long)]
        keep_imputed: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the simulated-eligibility table and family totals.
    Instrument(InstrumentArgs),
    /// Fit a regression spec.
    Estimate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        /// Also regress the treatment on each model's fixed effects.
        #[arg(long)]
        remaining_variation: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// TOT conversions, elasticities and fiscal ledgers.
    Report {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        fit: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum RulesCommand {
    /// Check every invariant of a rules directory.
    Validate { dir: PathBuf },
    /// Write a synthetic rules directory.
    Synth {
        #[arg(long, default_value_t = 20)]
        states: usize,
        #[arg(long, default_value_t = 1986)]
        first_year: i32,
        #[arg(long, default_value_t = 2000)]
        last_year: i32,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct InstrumentArgs {
    /// Directory holding the impute outputs.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    rules: PathBuf,
    #[arg(long, default_value = "annual")]
    variant: Variant,
    #[arg(long)]
    inflator: Option<PathBuf>,
    #[arg(long)]
    regions: Option<PathBuf>,
    #[arg(long)]
    base_year: Option<i32>,
    #[arg(long, default_value = "last_year")]
    reference: ReferencePeriod,
    /// Include own-state donors (diagnostic).
    #[arg(long)]
    no_leave_one_out: bool,
    #[arg(long)]
    maternal: Option<MaternalMode>,
    #[arg(long)]
    out: PathBuf,
}

const DEFAULT_SEED: u64 = 1;

fn run(cli: Cli) -> Result<ExitCode, PipelineError> {
    match cli.command {
        Command::Rules(RulesCommand::Validate { dir }) => {
            let report = pipeline::rules_validate(&dir)?;
            for line in &report.lines {
                println!("{line}");
            }
            return Ok(if report.ok { ExitCode::SUCCESS } else { ExitCode::from(1) });
        }
        Command::Rules(RulesCommand::Synth { states, first_year, last_year, out }) => {
            let cfg = SynthRulesConfig { n_states: states, first_year, last_year, seed: cli.seed.unwrap_or(DEFAULT_SEED) };
            pipeline::rules_synth(&cfg, &out)?;
        }
        Command::Gen { config, rules, out } => {
            pipeline::run_gen(&config, &rules, cli.seed, &out)?;
        }
        Command::Impute { population, rules, state_panel, reference, keep_imputed, out } => {
            let opts = ImputeOptions { reference, drop_imputed: !keep_imputed };
            pipeline::run_impute(&population, &rules, state_panel.as_deref(), cli.seed.unwrap_or(DEFAULT_SEED), &opts, &out)?;
        }
        Command::Instrument(a) => {
            let opts = InstrumentOptions {
                variant: a.variant,
                inflator: a.inflator,
                regions: a.regions,
                base_year: a.base_year,
                reference: a.reference,
                leave_one_out: !a.no_leave_one_out,
                maternal: a.maternal,
            };
            pipeline::run_instrument(&a.input, &a.rules, &opts, &a.out)?;
        }
        Command::Estimate { data, spec, remaining_variation, out } => {
            let opts = EstimateOptions { remaining_variation, ..Default::default() };
            let (_, fit) = pipeline::run_estimate(&data, &spec, &opts, &out)?;
            for (i, term) in fit.terms.iter().enumerate().take(10) {
                println!("{term}\t{:.6}\t({:.6})", fit.coefficients[i], fit.std_errors[i]);
            }
            println!("n = {}, clusters = {}, adj. R2 = {:.4}", fit.n_obs, fit.n_clusters, fit.adj_r2);
        }
        Command::Report { config, fit, out } => {
            pipeline::run_report(&config, fit.as_deref(), &out)?;
            print!("{}", std::fs::read_to_string(out.join("summary.txt")).unwrap_or_default());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: worker pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
