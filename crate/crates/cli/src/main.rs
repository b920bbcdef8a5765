//! `diffkg` command-line front end.
//!
//! Exit status: 0 on success, 1 for usage or configuration errors, 2 for
//! data and I/O errors, 3 when training diverges.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use diffkg::data::ingest;
use diffkg::graph::IdMap;
use diffkg::synth::write_synthetic;
use diffkg::{ConfigError, Dataset, EpochStats, Error, Model, Precision, RunConfig};
use numgrad::{Checkpoint, NumError, Real};

const CHECKPOINT: &str = "model.ckpt";
const METRICS: &str = "metrics.csv";
const CONFIG_ECHO: &str = "config.txt";

#[derive(Parser)]
#[command(name = "diffkg", version, about = "Knowledge-graph diffusion recommender")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Flat `key=value` configuration file.
    #[arg(long, short)]
    config: Option<PathBuf>,

    /// Overrides one key; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_override)]
    overrides: Vec<(String, String)>,
}

#[derive(Subcommand)]
enum Command {
    /// Filter raw interactions to a k-core, split them and write the dense
    /// dataset to `data_dir`.
    Ingest {
        /// `user item` pairs with raw ids.
        #[arg(long)]
        interactions: PathBuf,
        /// `head relation tail` triplets sharing the raw item ids.
        #[arg(long)]
        kg: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train on `data_dir`; writes the checkpoint, per-epoch metrics and the
    /// resolved configuration to `out_dir`.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Export the denoised knowledge graph of a trained model as triplets.
    GenKg {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Defaults to `<out_dir>/kg_prime.txt`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Recall@N and NDCG@N of a trained model on the test split.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Top-N unseen items for the given raw user ids.
    Recommend {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long = "user", required = true, num_args = 1..)]
        users: Vec<u64>,
        /// Defaults to the configured N.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Write a synthetic dataset with planted structure.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn parse_override(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected KEY=VALUE, got `{s}`"))
}

fn resolve(args: &ConfigArgs) -> Result<RunConfig> {
    Ok(RunConfig::resolve(args.config.as_deref(), &args.overrides)?)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Config(_) => 1,
                Error::NonFinite { .. } | Error::Num(NumError::NonFiniteGradient(_)) => 3,
                _ => 2,
            };
        }
        if cause.downcast_ref::<ConfigError>().is_some() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<NumError>() {
            return if matches!(e, NumError::NonFiniteGradient(_)) { 3 } else { 2 };
        }
    }
    2
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest { interactions, kg, cfg } => {
            let cfg = resolve(&cfg)?;
            let hp = &cfg.hp;
            let s = ingest(&interactions, &kg, hp.kcore, hp.test_ratio, hp.seed, &cfg.data_dir)?;
            write_config(&cfg, &cfg.data_dir)?;
            log::info!(
                "{} users, {} items, {} train / {} test interactions, {} entities, {} relations, {} triplets",
                s.users,
                s.items,
                s.train,
                s.test,
                s.entities,
                s.relations,
                s.triplets
            );
            Ok(())
        }
        Command::Synth { out, seed } => {
            write_synthetic(&out, seed)?;
            log::info!("synthetic dataset written to {}", out.display());
            Ok(())
        }
        Command::Train { cfg } => {
            let cfg = resolve(&cfg)?;
            match cfg.hp.precision {
                Precision::F32 => train::<f32>(&cfg),
                Precision::F64 => train::<f64>(&cfg),
            }
        }
        Command::GenKg { cfg, checkpoint, output } => {
            let cfg = resolve(&cfg)?;
            let output = output.unwrap_or_else(|| cfg.out_dir.join("kg_prime.txt"));
            match cfg.hp.precision {
                Precision::F32 => gen_kg::<f32>(&cfg, checkpoint.as_deref(), &output),
                Precision::F64 => gen_kg::<f64>(&cfg, checkpoint.as_deref(), &output),
            }
        }
        Command::Eval { cfg, checkpoint } => {
            let cfg = resolve(&cfg)?;
            match cfg.hp.precision {
                Precision::F32 => eval::<f32>(&cfg, checkpoint.as_deref()),
                Precision::F64 => eval::<f64>(&cfg, checkpoint.as_deref()),
            }
        }
        Command::Recommend { cfg, checkpoint, users, n } => {
            let cfg = resolve(&cfg)?;
            let n = n.unwrap_or(cfg.hp.top_n);
            match cfg.hp.precision {
                Precision::F32 => recommend::<f32>(&cfg, checkpoint.as_deref(), &users, n),
                Precision::F64 => recommend::<f64>(&cfg, checkpoint.as_deref(), &users, n),
            }
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_config(cfg: &RunConfig, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    let path = dir.join(CONFIG_ECHO);
    fs::write(&path, cfg.to_text()).with_context(|| format!("writing {}", path.display()))
}

fn load_data<T: Real>(cfg: &RunConfig) -> Result<Dataset<T>> {
    Dataset::load(&cfg.data_dir).with_context(|| format!("loading dataset from {}", cfg.data_dir.display()))
}

fn train<T: Real>(cfg: &RunConfig) -> Result<()> {
    let data = load_data::<T>(cfg)?;
    write_config(cfg, &cfg.out_dir)?;
    let hp = &cfg.hp;
    let mut model = Model::new(hp.clone(), cfg.schedule()?, &data)?;
    let metrics_path = cfg.out_dir.join(METRICS);
    let mut metrics = fs::File::create(&metrics_path).with_context(|| format!("creating {}", metrics_path.display()))?;
    writeln!(metrics, "{}", EpochStats::csv_header(hp.top_n))?;
    let ckpt_path = cfg.out_dir.join(CHECKPOINT);
    log::info!(
        "training on {} users, {} items, {} entities for {} epochs",
        data.n_users(),
        data.n_items(),
        data.kg.n_entities(),
        hp.epochs
    );
    for e in 0..hp.epochs {
        let stats = model.train_epoch(&data)?;
        let last = e + 1 == hp.epochs;
        let due = hp.eval_every > 0 && (e + 1) % hp.eval_every == 0;
        let report = if last || due { Some(model.evaluate(&data)?) } else { None };
        writeln!(metrics, "{}", stats.csv_row(report.as_ref()))?;
        metrics.flush()?;
        match report {
            Some(r) => log::info!(
                "epoch {e}: elbo {:.5} ckgc {:.5} bpr {:.5} cl {:.5} recall@{n} {:.4} ndcg@{n} {:.4}",
                stats.elbo,
                stats.ckgc,
                stats.bpr,
                stats.cl,
                r.recall,
                r.ndcg,
                n = r.n
            ),
            None => log::info!(
                "epoch {e}: elbo {:.5} ckgc {:.5} bpr {:.5} cl {:.5}",
                stats.elbo,
                stats.ckgc,
                stats.bpr,
                stats.cl
            ),
        }
        model.checkpoint().save(&ckpt_path)?;
    }
    if hp.epochs == 0 {
        model.checkpoint().save(&ckpt_path)?;
    }
    log::info!("checkpoint written to {}", ckpt_path.display());
    Ok(())
}

fn load_model<T: Real>(cfg: &RunConfig, data: &Dataset<T>, checkpoint: Option<&Path>) -> Result<Model<T>> {
    let path = checkpoint.map_or_else(|| cfg.out_dir.join(CHECKPOINT), Path::to_path_buf);
    if !path.exists() {
        bail!("checkpoint {} not found; run `diffkg train` first", path.display());
    }
    let ck = Checkpoint::<T>::load(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Model::from_checkpoint(cfg.hp.clone(), cfg.schedule()?, data, &ck)
        .with_context(|| format!("restoring {} (does the configuration match training?)", path.display()))?)
}

fn gen_kg<T: Real>(cfg: &RunConfig, checkpoint: Option<&Path>, output: &Path) -> Result<()> {
    let data = load_data::<T>(cfg)?;
    let model = load_model(cfg, &data, checkpoint)?;
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    model.kg_prime().write_triplets(output)?;
    log::info!("{} denoised triplets written to {}", model.kg_prime().n_edges(), output.display());
    Ok(())
}

fn eval<T: Real>(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<()> {
    let data = load_data::<T>(cfg)?;
    let model = load_model(cfg, &data, checkpoint)?;
    let r = model.evaluate(&data)?;
    println!("recall@{n}\t{:.6}\nndcg@{n}\t{:.6}\nusers\t{}", r.recall, r.ndcg, r.users, n = r.n);
    Ok(())
}

/// Raw-id map written at ingestion, or the identity when absent.
fn id_map(dir: &Path, file: &str, n: usize) -> Result<IdMap> {
    let path = dir.join(file);
    if path.exists() {
        Ok(IdMap::read(&path)?)
    } else {
        Ok(IdMap::identity(n))
    }
}

fn recommend<T: Real>(cfg: &RunConfig, checkpoint: Option<&Path>, users: &[u64], n: usize) -> Result<()> {
    let data = load_data::<T>(cfg)?;
    let user_map = id_map(&cfg.data_dir, "user_map.txt", data.n_users())?;
    let item_map = id_map(&cfg.data_dir, "item_map.txt", data.n_items())?;
    let dense: Vec<usize> = users
        .iter()
        .map(|&raw| {
            user_map
                .dense(raw)
                .ok_or_else(|| Error::Invalid(format!("unknown user id {raw}")))
        })
        .collect::<std::result::Result<_, _>>()?;
    let model = load_model(cfg, &data, checkpoint)?;
    let mut out = std::io::stdout().lock();
    for (&raw, &u) in users.iter().zip(&dense) {
        for (item, score) in model.recommend(&data, u, n)? {
            writeln!(out, "{raw}\t{}\t{score:.6}", item_map.original(item))?;
        }
    }
    Ok(())
}
