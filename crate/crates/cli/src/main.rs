use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use langdrive::config::Config;
use langdrive::dataset::Dataset;
use langdrive::evalkit::MetricMode;
use langdrive::model::Model;
use langdrive::pipeline::{
    ablate, ablation_csv, check_compatible, evaluate_run, load_checkpoint, metrics_csv,
    save_checkpoint, train_phase1, train_phase2, Phase, StepLog,
};
use langdrive::render::render_svg;
use langdrive::scenegen::GeneratorConfig;
use langdrive::{Error, Result};

#[derive(Parser)]
#[command(
    name = "langdrive",
    version,
    about = "Language-guided planning on synthetic driving scenes"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate scenes with seeds S, S+1, .. and write them with descriptions.
    GenData {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
        /// Take generator settings from this config.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Language-only pretraining.
    Pretrain {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// End-to-end training, optionally starting from a checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Metrics of a checkpoint over every scene in a file.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        mode: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate the four module on/off configurations.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw one scene, with the planned trajectory if a checkpoint is given.
    Render {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        index: usize,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Prints one line per finished epoch with its mean loss.
struct EpochLog {
    key: Option<(Phase, usize)>,
    sum: f64,
    n: usize,
}

impl EpochLog {
    fn new() -> Self {
        Self {
            key: None,
            sum: 0.0,
            n: 0,
        }
    }

    fn flush(&mut self) {
        if let Some((phase, epoch)) = self.key.take() {
            eprintln!(
                "{} epoch {:>3} mean loss {:.6}",
                phase.as_str(),
                epoch,
                self.sum / self.n as f64
            );
        }
        self.sum = 0.0;
        self.n = 0;
    }

    fn push(&mut self, s: &StepLog) {
        if self.key != Some((s.phase, s.epoch)) {
            self.flush();
            self.key = Some((s.phase, s.epoch));
        }
        self.sum += s.total;
        self.n += 1;
    }
}

fn read_data(path: &Path, cfg: &Config) -> Result<Dataset> {
    let ds = Dataset::read_file(path)?;
    if !ds.is_empty() {
        check_compatible(cfg, &ds.header)?;
    }
    Ok(ds)
}

fn write(path: &Path, bytes: &str) -> Result<()> {
    std::fs::write(path, bytes)?;
    Ok(())
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::GenData {
            seed,
            count,
            out,
            config,
        } => {
            let gen = match config {
                Some(p) => Config::from_file(&p)?.generator,
                None => GeneratorConfig::default(),
            };
            Dataset::generate(seed, count, &gen)?.write_file(&out)?;
            eprintln!("wrote {count} scenes to {}", out.display());
        }
        Cmd::Pretrain { config, data, out } => {
            let cfg = Config::from_file(&config)?;
            let ds = read_data(&data, &cfg)?;
            let mut model = Model::new(cfg.model.clone(), cfg.seed, false)?;
            let mut log = EpochLog::new();
            train_phase1(&mut model, &ds.records, &cfg, &mut |s| log.push(s))?;
            log.flush();
            save_checkpoint(&model, &cfg, Phase::Pretrain, &out)?;
        }
        Cmd::Train {
            config,
            data,
            init,
            out,
        } => {
            let cfg = Config::from_file(&config)?;
            let ds = read_data(&data, &cfg)?;
            let mut model = Model::new(cfg.model.clone(), cfg.seed, false)?;
            if let Some(p) = init {
                let (m, init_cfg, _) = load_checkpoint(&p)?;
                if init_cfg.dims_hash() != cfg.dims_hash() {
                    return Err(Error::Checkpoint(format!(
                        "config hash mismatch: {} was trained with different model dimensions",
                        p.display()
                    )));
                }
                model.load_store(&m.store)?;
            }
            let mut log = EpochLog::new();
            train_phase2(&mut model, &ds.records, &cfg, &mut |s| log.push(s))?;
            log.flush();
            save_checkpoint(&model, &cfg, Phase::Finetune, &out)?;
        }
        Cmd::Eval {
            ckpt,
            data,
            mode,
            out,
        } => {
            let mode: MetricMode = mode.parse()?;
            let (model, cfg, _) = load_checkpoint(&ckpt)?;
            let ds = read_data(&data, &cfg)?;
            let report = evaluate_run(&model, &cfg, &ds.records, mode)?;
            write(&out, &metrics_csv(&report))?;
        }
        Cmd::Ablate { config, data, out } => {
            let cfg = Config::from_file(&config)?;
            let ds = Dataset::read_file(&data)?;
            let mut log = EpochLog::new();
            let rows = ablate(&cfg, &ds, &mut |s| log.push(s))?;
            log.flush();
            write(&out, &ablation_csv(&rows))?;
        }
        Cmd::Render {
            data,
            index,
            ckpt,
            out,
        } => {
            let ds = Dataset::read_file(&data)?;
            let rec = ds.records.get(index).ok_or_else(|| {
                Error::Data(format!(
                    "index {index} out of range for {} scenes",
                    ds.len()
                ))
            })?;
            let (plan, extent) = match ckpt {
                Some(p) => {
                    let (model, cfg, _) = load_checkpoint(&p)?;
                    check_compatible(&cfg, &ds.header)?;
                    (
                        Some(model.plan(&rec.scene, cfg.tgm_enabled)?),
                        cfg.generator.extent,
                    )
                }
                None => (None, ds.header.extent),
            };
            write(&out, &render_svg(&rec.scene, plan.as_deref(), extent))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
