use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use multirem::bf_tests::{
    all_orderings, fractional_bf, parse_hypotheses, test_homogeneity, test_variance_order,
    Fraction, PlugIn, PriorMode, VarianceOrderConfig,
};
use multirem::config::RunConfig;
use multirem::event_data::{load_dataset, Dataset};
use multirem::fit::{fit, read_draws, write_draws, write_sampler_stats};
use multirem::fit_diagnostics::{
    deviance_residuals, posterior_mean_effects, residual_distribution, write_paired,
    write_residual_summary, write_residuals,
};
use multirem::model::{Dims, Model};
use multirem::sampler::PosteriorDraws;
use multirem::simulator::simulate;
use multirem::statistics::Side;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "multirem", version, about = "Multilevel relational event models: simulate, fit, test, diagnose")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset from the true values in a config file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `[simulation] seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit the model to an event sequence.
    Fit(FitArgs),
    /// Fit to the first ceil(f * M) events of every cluster.
    Fraction {
        #[arg(long)]
        f: f64,
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Bayes-factor tests on saved draws.
    Test(TestArgs),
    /// Deviance residuals at the posterior mean or per draw.
    Diagnose(DiagnoseArgs),
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    actors: PathBuf,
    /// Optional `cluster,tau` window ends.
    #[arg(long)]
    tau: Option<PathBuf>,
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    chains: Option<usize>,
    /// Total iterations per chain, warmup included.
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    target_accept: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TestKind {
    /// Are the cluster effects of one statistic equal?
    Homogeneity,
    /// Orderings of random-effect standard deviations.
    Order,
    /// Constraints on fixed effects and random-effect means.
    Fractional,
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    Sender,
    Receiver,
}

#[derive(Args)]
struct TestArgs {
    #[arg(long, value_enum)]
    kind: TestKind,
    #[arg(long)]
    draws: PathBuf,
    /// Hypothesis file (`label: constraints` per line).
    #[arg(long)]
    hypotheses: Option<PathBuf>,
    /// Comma-separated standard deviations; all orderings are tested.
    #[arg(long, value_delimiter = ',')]
    exploratory: Vec<String>,
    /// Statistic name for the homogeneity test.
    #[arg(long)]
    effect: Option<String>,
    #[arg(long, value_enum, default_value = "sender")]
    side: SideArg,
    #[arg(long, default_value = "mean")]
    plug_in: String,
    /// Config whose `[test]` section supplies fractions, Monte-Carlo size and seed.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Fit summary; supplies model size for automatic fractions.
    #[arg(long)]
    summary: Option<PathBuf>,
    #[arg(long)]
    b_snd: Option<Fraction>,
    #[arg(long)]
    b_rec: Option<Fraction>,
    #[arg(long)]
    mc_samples: Option<usize>,
    /// Prior probabilities of orderings by sampling instead of 1/n!.
    #[arg(long)]
    monte_carlo_prior: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    draws: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also summarize residuals over every `thin`-th draw.
    #[arg(long)]
    per_draw: bool,
    #[arg(long, default_value_t = 10)]
    thin: usize,
    /// Second model to compare against, as `--compare-draws` plus `--compare-model`.
    #[arg(long, requires = "compare_model")]
    compare_draws: Option<PathBuf>,
    #[arg(long)]
    compare_model: Option<PathBuf>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    ))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    std::io::Write::write_all(&mut w, b"\n")?;
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn load(data: &DataArgs) -> Result<(Dataset, RunConfig)> {
    let cfg = RunConfig::load(&data.model)?;
    let ds = load_dataset(&data.events, &data.actors, data.tau.as_deref())
        .with_context(|| format!("loading {}", data.events.display()))?;
    Ok((ds, cfg))
}

fn run_simulate(config: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let mut sim_cfg = cfg.sim_config()?;
    if let Some(s) = seed {
        sim_cfg.seed = s;
    }
    let sim = simulate(&sim_cfg)?;
    ensure_dir(out)?;
    sim.dataset.write_events(create(&out.join("events.csv"))?)?;
    sim.dataset.write_actors(create(&out.join("actors.csv"))?)?;
    write_json(&out.join("truth.json"), &sim.truth_json(&sim_cfg.spec)?)?;
    Ok(())
}

fn run_fit(args: &FitArgs, fraction: Option<f64>) -> Result<()> {
    let (mut ds, cfg) = load(&args.data)?;
    if let Some(f) = fraction {
        ds = ds.truncate_fraction(f)?;
    }
    let mut chain = cfg.sampler.clone();
    if let Some(v) = args.seed {
        chain.seed = v;
    }
    if let Some(v) = args.chains {
        chain.chains = v;
    }
    if let Some(v) = args.iters {
        chain.iterations = v;
    }
    if let Some(v) = args.warmup {
        chain.warmup = v;
    }
    if let Some(v) = args.target_accept {
        chain.target_accept = v;
    }
    let model = Model::new(ds, cfg.model_spec()?)?;
    let (draws, summary) = fit(&model, &chain)?;
    ensure_dir(&args.out)?;
    write_draws(&draws, create(&args.out.join("draws.csv"))?)?;
    write_sampler_stats(&draws, create(&args.out.join("sampler_stats.csv"))?)?;
    write_json(&args.out.join("summary.json"), &summary)?;
    if fraction.is_some() {
        model.dataset.write_events(create(&args.out.join("events_used.csv"))?)?;
    }
    Ok(())
}

fn read_draws_file(path: &Path) -> Result<PosteriorDraws> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(read_draws(f).with_context(|| path.display().to_string())?)
}

fn summary_dims(path: &Path) -> Result<(Dims, usize)> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let v: serde_json::Value = serde_json::from_str(&text)?;
    let dims: Dims = serde_json::from_value(v["dims"].clone()).context("summary has no `dims`")?;
    let total = v["total_actors"]
        .as_u64()
        .context("summary has no `total_actors`")? as usize;
    Ok((dims, total))
}

fn run_test(a: &TestArgs) -> Result<()> {
    let draws = read_draws_file(&a.draws)?;
    let cfg = match &a.model {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let hyps = || -> Result<_> {
        let p = a.hypotheses.as_ref().context("--hypotheses is required for this test")?;
        let text = fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
        Ok(parse_hypotheses(&text)?)
    };
    match a.kind {
        TestKind::Homogeneity => {
            let effect = a.effect.as_deref().context("--effect is required for the homogeneity test")?;
            let side = match a.side {
                SideArg::Sender => Side::Sender,
                SideArg::Receiver => Side::Receiver,
            };
            let plug = match a.plug_in.as_str() {
                "mean" => PlugIn::Mean,
                "median" => PlugIn::Median,
                other => bail!("--plug-in must be `mean` or `median`, got `{other}`"),
            };
            write_json(&a.out, &test_homogeneity(&draws, effect, side, plug)?)
        }
        TestKind::Order => {
            let (names, hs) = if a.exploratory.is_empty() {
                hyps()?
            } else {
                (a.exploratory.clone(), all_orderings(&a.exploratory))
            };
            let mut vc = VarianceOrderConfig::default();
            if a.monte_carlo_prior {
                vc.prior = PriorMode::MonteCarlo;
            }
            if let Some(n) = a.mc_samples {
                vc.prior_samples = n;
            }
            if let Some(s) = a.seed {
                vc.seed = s;
            }
            vc.cauchy_scale = cfg.hyper.cauchy_scale;
            write_json(&a.out, &test_variance_order(&draws, &names, &hs, &vc)?)
        }
        TestKind::Fractional => {
            let (names, hs) = hyps()?;
            let mut tc = cfg.test;
            if let Some(b) = a.b_snd {
                tc.b_snd = b;
            }
            if let Some(b) = a.b_rec {
                tc.b_rec = b;
            }
            if let Some(n) = a.mc_samples {
                tc.mc_samples = n;
            }
            if let Some(s) = a.seed {
                tc.seed = s;
            }
            let size = a.summary.as_deref().map(summary_dims).transpose()?;
            write_json(&a.out, &fractional_bf(&draws, &names, &hs, &tc, size)?)
        }
    }
}

fn run_diagnose(a: &DiagnoseArgs) -> Result<()> {
    let (ds, cfg) = load(&a.data)?;
    let model = Model::new(ds.clone(), cfg.model_spec()?)?;
    let draws = read_draws_file(&a.draws)?;
    let res = deviance_residuals(&model, &posterior_mean_effects(&model, &draws)?)?;
    ensure_dir(&a.out)?;
    write_residuals(&res, create(&a.out.join("residuals.csv"))?)?;
    if a.per_draw {
        let dist = residual_distribution(&model, &draws, a.thin)?;
        write_residual_summary(&dist, create(&a.out.join("residuals_per_draw.csv"))?)?;
    }
    if let (Some(d2), Some(m2)) = (&a.compare_draws, &a.compare_model) {
        let model_b = Model::new(ds, RunConfig::load(m2)?.model_spec()?)?;
        let draws_b = read_draws_file(d2)?;
        let res_b = deviance_residuals(&model_b, &posterior_mean_effects(&model_b, &draws_b)?)?;
        write_paired(&res, &res_b, create(&a.out.join("paired_residuals.csv"))?)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Command::Simulate { config, out, seed } => run_simulate(&config, &out, seed),
        Command::Fit(a) => run_fit(&a, None),
        Command::Fraction { f, fit } => run_fit(&fit, Some(f)),
        Command::Test(a) => run_test(&a),
        Command::Diagnose(a) => run_diagnose(&a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}");
            let one_line = msg.split_whitespace().collect::<Vec<_>>().join(" ");
            eprintln!("error: {one_line}");
            ExitCode::from(1)
        }
    }
}
