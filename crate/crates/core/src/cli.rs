//! Command-line entry points: data generation, training, evaluation, the
//! toy behavior-cloning runs and the tabular checks.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::{
    load_dataset, rollout_behavior, save_dataset, write_csv, DataError, Environment, PointNavEnv, ScriptedMixture,
};
use crate::ganjoint::{
    evaluate_policy, load_checkpoint, save_checkpoint, train_with, write_metrics_header, write_metrics_row, Checkpoint,
    GanJointError, TrainConfig,
};
use crate::stream_seed;
use crate::theorylab::{run_suite, write_report, CheckKind};
use crate::toybc::{run_toy, write_samples, ToyConfig, ToyVariant};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const DEFAULT_TRANSITIONS: usize = 50_000;
pub const DEFAULT_EVAL_EPISODES: usize = 10;
pub const DEFAULT_INSTANCES: usize = 100;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments, configuration or missing inputs.
    #[error("{0}")]
    Usage(String),
    /// A run that started but did not succeed.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Failed(_) => EXIT_CHECK_FAILED,
        }
    }
}

fn failed<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Failed(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "ganjoint", version, about = "Offline RL with joint state-action matching")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Roll out the scripted point-nav mixture into an offline dataset.
    GenData(CommonArgs),
    /// Train on an offline dataset, writing metrics and a checkpoint.
    Train(CommonArgs),
    /// Evaluate a checkpoint in the point-nav environment.
    Eval(CommonArgs),
    /// Fit a behavior-cloning variant on the eight-Gaussian data.
    ToyBc(CommonArgs),
    /// Run the tabular checks on random instances.
    Theory(TheoryArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// `key = value` configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Master seed; overrides any `seed` key.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Random instances per check; overrides any `instances` key.
    #[arg(long)]
    pub instances: Option<usize>,
}

/// Ordered `key = value` pairs; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("line {}: expected `key = value`, got {raw:?}", i + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(CliError::Usage(format!("line {}: empty key", i + 1)));
        }
        if out.iter().any(|(seen, _)| seen == k) {
            return Err(CliError::Usage(format!("line {}: duplicate key {k:?}", i + 1)));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

/// Parsed configuration with keys removed as they are consumed, so that
/// leftovers can be reported as unknown.
struct Settings {
    entries: BTreeMap<String, String>,
    order: Vec<String>,
    base: PathBuf,
}

impl Settings {
    fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let pairs = parse_config(&text)?;
        Ok(Self {
            order: pairs.iter().map(|(k, _)| k.clone()).collect(),
            entries: pairs.into_iter().collect(),
            base: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        })
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    fn take_parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>, CliError> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| CliError::Usage(format!("bad value {v:?} for {key}"))),
        }
    }

    /// Paths in the config are relative to the config file.
    fn take_path(&mut self, key: &str) -> Option<PathBuf> {
        self.take(key).map(|v| {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                self.base.join(p)
            }
        })
    }

    /// Remaining keys in file order.
    fn rest(&mut self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for k in &self.order {
            if let Some(v) = self.entries.remove(k) {
                out.push((k.clone(), v));
            }
        }
        out
    }

    fn finish(mut self) -> Result<(), CliError> {
        match self.rest().first() {
            Some((k, _)) => Err(CliError::Usage(format!("unknown config key {k:?}"))),
            None => Ok(()),
        }
    }
}

fn create_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))
}

fn create_file(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| failed(format!("cannot write {}: {e}", path.display())))
}

fn master_seed(flag: Option<u64>, settings: &mut Settings) -> Result<u64, CliError> {
    let from_file = settings.take_parsed::<u64>("seed")?;
    Ok(flag.or(from_file).unwrap_or(0))
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn dispatch(cmd: &Command) -> Result<i32, CliError> {
    match cmd {
        Command::GenData(a) => gen_data(a).map(|_| EXIT_OK),
        Command::Train(a) => train(a).map(|_| EXIT_OK),
        Command::Eval(a) => eval(a).map(|_| EXIT_OK),
        Command::ToyBc(a) => toy_bc(a).map(|_| EXIT_OK),
        Command::Theory(a) => theory(a),
    }
}

fn gen_data(a: &CommonArgs) -> Result<(), CliError> {
    let mut s = Settings::load(&a.config)?;
    let seed = master_seed(a.seed, &mut s)?;
    let n = s.take_parsed::<usize>("n_transitions")?.unwrap_or(DEFAULT_TRANSITIONS);
    s.finish()?;
    if n == 0 {
        return Err(CliError::Usage("n_transitions must be positive".into()));
    }
    create_out(&a.out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 0));
    let mut ds = rollout_behavior(&mut PointNavEnv::new(), &ScriptedMixture::default(), n, &mut rng);
    ds.provenance.push_str(&format!(", seed {seed}"));
    save_dataset(&ds, a.out.join("dataset.bin")).map_err(failed)?;
    write_csv(&ds, create_file(&a.out.join("dataset.csv"))?).map_err(failed)?;
    let mean = ds.mean_episode_return().unwrap_or(f64::NAN);
    println!("wrote {} transitions, behavior mean episode return {mean}", ds.len());
    Ok(())
}

/// Builds a training configuration: `preset` first, then every other key in
/// file order.
fn train_config(s: &mut Settings, seed_flag: Option<u64>) -> Result<TrainConfig, CliError> {
    let mut cfg = match s.take("preset").as_deref() {
        None | Some("toy") => TrainConfig::toy(),
        Some("paper") => TrainConfig::paper_defaults(),
        Some(p) => return Err(CliError::Usage(format!("unknown preset {p:?}"))),
    };
    for (k, v) in s.rest() {
        cfg.set(&k, &v).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    if let Some(seed) = seed_flag {
        cfg.seed = seed;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn train(a: &CommonArgs) -> Result<(), CliError> {
    let mut s = Settings::load(&a.config)?;
    let dataset = s
        .take_path("dataset")
        .ok_or_else(|| CliError::Usage("train needs a `dataset` key".into()))?;
    let use_env = match s.take("eval_env").as_deref() {
        None | Some("pointnav") => true,
        Some("none") => false,
        Some(v) => return Err(CliError::Usage(format!("unknown eval_env {v:?}"))),
    };
    let cfg = train_config(&mut s, a.seed)?;
    s.finish()?;
    let ds = load_dataset(&dataset).map_err(|e| CliError::Usage(format!("dataset {}: {e}", dataset.display())))?;
    create_out(&a.out)?;

    let mut resolved = create_file(&a.out.join("config.txt"))?;
    writeln!(resolved, "dataset = {}", dataset.display()).map_err(failed)?;
    for (k, v) in cfg.entries() {
        writeln!(resolved, "{k} = {v}").map_err(failed)?;
    }
    resolved.flush().map_err(failed)?;

    let mut metrics = create_file(&a.out.join("metrics.csv"))?;
    write_metrics_header(&mut metrics).map_err(failed)?;
    let mut env = PointNavEnv::new();
    let env: Option<&mut dyn Environment> = if use_env { Some(&mut env) } else { None };
    let out = train_with(&ds, &cfg, env, |row| {
        write_metrics_row(&mut metrics, row)
            .and_then(|_| metrics.flush())
            .map_err(|e| GanJointError::Data(DataError::Io(e)))
    })
    .map_err(failed)?;
    save_checkpoint(&Checkpoint::from(&out.agent), a.out.join("checkpoint.bin")).map_err(failed)?;
    if let Some(last) = out.metrics.last() {
        println!(
            "trained {} epochs; final eval return {} ± {}",
            out.metrics.len(),
            last.eval_return_mean,
            last.eval_return_std
        );
    }
    Ok(())
}

fn eval(a: &CommonArgs) -> Result<(), CliError> {
    let mut s = Settings::load(&a.config)?;
    let seed = master_seed(a.seed, &mut s)?;
    let path = s
        .take_path("checkpoint")
        .ok_or_else(|| CliError::Usage("eval needs a `checkpoint` key".into()))?;
    let episodes = s.take_parsed::<usize>("episodes")?.unwrap_or(DEFAULT_EVAL_EPISODES);
    s.finish()?;
    let ck = load_checkpoint(&path).map_err(|e| CliError::Usage(format!("checkpoint {}: {e}", path.display())))?;
    let mut env = PointNavEnv::new();
    if ck.actor.state_dim() != env.state_dim() || ck.actor.action_dim() != env.action_dim() {
        return Err(CliError::Usage(format!(
            "checkpoint dims ({}, {}) do not match the environment ({}, {})",
            ck.actor.state_dim(),
            ck.actor.action_dim(),
            env.state_dim(),
            env.action_dim()
        )));
    }
    create_out(&a.out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 3));
    let returns = evaluate_policy(&mut env, &ck.actor, &ck.critics.q1, episodes, &mut rng).map_err(failed)?;
    let n = returns.len().max(1) as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let std = (returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
    let mut w = create_file(&a.out.join("eval.csv"))?;
    (|| -> std::io::Result<()> {
        writeln!(w, "episode,return")?;
        for (i, r) in returns.iter().enumerate() {
            writeln!(w, "{i},{r}")?;
        }
        writeln!(w, "mean,{mean}")?;
        writeln!(w, "std,{std}")?;
        w.flush()
    })()
    .map_err(failed)?;
    println!("mean return {mean} std {std} over {} episodes", returns.len());
    Ok(())
}

fn toy_bc(a: &CommonArgs) -> Result<(), CliError> {
    let mut s = Settings::load(&a.config)?;
    let variant: ToyVariant = s
        .take("variant")
        .ok_or_else(|| CliError::Usage("toy-bc needs a `variant` key".into()))?
        .parse()
        .map_err(|e: crate::toybc::ToyError| CliError::Usage(e.to_string()))?;
    let mut cfg = ToyConfig::new(variant);
    for (k, v) in s.rest() {
        cfg.set(&k, &v).map_err(CliError::Usage)?;
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    create_out(&a.out)?;
    let run = run_toy(&cfg).map_err(failed)?;
    write_samples(create_file(&a.out.join("samples.csv"))?, &run).map_err(failed)?;
    run.report
        .write_csv(create_file(&a.out.join("mode_report.csv"))?)
        .map_err(failed)?;
    let mut losses = create_file(&a.out.join("losses.csv"))?;
    (|| -> std::io::Result<()> {
        writeln!(losses, "epoch,gen_loss,disc_loss")?;
        for h in &run.trained.history {
            writeln!(losses, "{},{},{}", h.epoch, h.gen_loss, h.disc_loss)?;
        }
        losses.flush()
    })()
    .map_err(failed)?;
    println!(
        "{variant}: {} modes covered, off-manifold {} at seen states",
        run.report.modes_covered, run.report.off_manifold_seen
    );
    Ok(())
}

fn theory(a: &TheoryArgs) -> Result<i32, CliError> {
    let mut s = Settings::load(&a.common.config)?;
    let seed = master_seed(a.common.seed, &mut s)?;
    let from_file = s.take_parsed::<usize>("instances")?;
    s.finish()?;
    let instances = a.instances.or(from_file).unwrap_or(DEFAULT_INSTANCES);
    if instances == 0 {
        return Err(CliError::Usage("instances must be positive".into()));
    }
    create_out(&a.common.out)?;
    let rows = run_suite(seed, instances).map_err(failed)?;
    write_report(create_file(&a.common.out.join("theory_report.csv"))?, &rows).map_err(failed)?;
    let failures: Vec<_> = rows.iter().filter(|r| !r.holds).collect();
    for f in &failures {
        eprintln!(
            "FAILED {} instance_seed {}: gap {:e} > {:e}",
            f.check, f.instance_seed, f.gap, f.bound
        );
    }
    println!(
        "{} rows ({} checks x {instances} instances), {} failures",
        rows.len(),
        CheckKind::ALL.len(),
        failures.len()
    );
    Ok(if failures.is_empty() {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parsing() {
        let text = "# header\nepochs = 3 # trailing\n\n  hidden=8,8\n";
        let p = parse_config(text).unwrap();
        assert_eq!(p, vec![("epochs".into(), "3".into()), ("hidden".into(), "8,8".into())]);
        assert!(matches!(parse_config("epochs 3"), Err(CliError::Usage(_))));
        assert!(matches!(parse_config("a = 1\na = 2"), Err(CliError::Usage(_))));
        assert!(matches!(parse_config(" = 2"), Err(CliError::Usage(_))));
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(["ganjoint"]), EXIT_USAGE);
        assert_eq!(run(["ganjoint", "bogus"]), EXIT_USAGE);
        assert_eq!(run(["ganjoint", "theory"]), EXIT_USAGE);
        assert_eq!(
            run(["ganjoint", "theory", "--config", "/nonexistent/x.cfg"]),
            EXIT_USAGE
        );
    }
}
