use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use owis::error::{Error, Result};
use owis::formats::{self, Checkpoint, GroundTruthFile, PredictionsFile, SceneFile, ScenePredictions, Subset};
use owis::harness::{self, ExperimentConfig, SplitSpec};
use owis_core::autolabel::SelectionMode;
use owis_core::error::Error as CoreError;
use owis_core::incremental::{relabel_for_eval, replay_scenes, select_exemplars, Phase};
use owis_core::metrics::{self, oracle};
use owis_core::scene::ClassCatalog;
use owis_core::splits::{bundled_catalog, N_TASKS};
use owis_core::synthgen::GenConfig;
use owis_core::train::{Config, Learner};

#[derive(Parser)]
#[command(name = "owis", version, about = "Open-world 3D instance segmentation on synthetic voxel scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitKind {
    Freq,
    Region,
    Random,
    #[value(name = "bundled-A")]
    BundledA,
    #[value(name = "bundled-B")]
    BundledB,
    #[value(name = "bundled-C")]
    BundledC,
}

#[derive(Clone, Copy, ValueEnum)]
enum SubsetArg {
    Train,
    Test,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset: DIR/catalog.json, DIR/train/, DIR/test/.
    Gen {
        #[arg(long, default_value_t = 80)]
        scenes: usize,
        #[arg(long, default_value_t = 0)]
        test_scenes: usize,
        #[arg(long, default_value_t = 12)]
        classes: usize,
        #[arg(long, default_value_t = 16)]
        grid: u32,
        /// Defaults to $OWIS_SEED, then 0.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Partition the catalog's classes into three tasks.
    Split {
        #[arg(long)]
        kind: SplitKind,
        /// Dataset root; bundled splits default to the bundled catalog without it.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Comma-separated task sizes (default: thirds of the catalog).
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 0.1)]
        tolerance: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one task's main phase; writes OUT/checkpoint.json and OUT/train_log.json.
    Train {
        #[arg(long)]
        split: PathBuf,
        /// 1-based task number.
        #[arg(long)]
        task: usize,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Continue from this checkpoint (it must already be at TASK).
        #[arg(long)]
        ckpt: Option<PathBuf>,
        /// Epochs for this run (default: the config's epochs for TASK).
        #[arg(long)]
        epochs: Option<usize>,
        /// Select pseudo-labels by top-k instead of the confidence threshold.
        #[arg(long)]
        no_ct: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Move a checkpoint to the next task, widening the class head.
    Advance {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exemplar replay fine-tuning. The exemplar file is created if missing.
    Finetune {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        exemplars: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        /// Defaults to overwriting CKPT.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint and write the report.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        /// 1-based task the checkpoint is expected to be at.
        #[arg(long)]
        task: usize,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        subset: SubsetArg,
        #[arg(long)]
        report: PathBuf,
        /// Disable probability correction.
        #[arg(long)]
        no_pc: bool,
        /// Accepted for symmetry with `train`; selection only matters during training.
        #[arg(long)]
        no_ct: bool,
        /// Also write a one-row CSV in the results-table layout.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Dump detections for `owis oracle`.
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Dump the evaluation-relabeled ground truth for `owis oracle`.
        #[arg(long)]
        gt: Option<PathBuf>,
    },
    /// Run the three-task protocol (or the 2x2x2 ablation grid) end to end.
    Protocol {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        grid: bool,
        /// Reuse checkpoints already under OUT.
        #[arg(long)]
        resume: bool,
    },
    /// Exhaustive-search evaluation of a predictions file (small scenes only).
    Oracle {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
    },
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var("OWIS_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CoreError::Config(format!("OWIS_SEED={s:?} is not an unsigned integer")).into()),
        Err(_) => Ok(None),
    }
}

/// Experiment config from a file or the defaults, with `OWIS_SEED` applied.
fn load_experiment(path: Option<&Path>) -> Result<ExperimentConfig> {
    let mut exp = match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = env_seed()? {
        exp.seeds = vec![seed];
        exp.modules = exp.modules.with_seed(seed);
    }
    Ok(exp)
}

fn task_index(task: usize) -> Result<usize> {
    if task == 0 || task > N_TASKS {
        return Err(CoreError::Config(format!("--task must be 1..={N_TASKS}")).into());
    }
    Ok(task - 1)
}

fn load_checkpoint(path: &Path, catalog: &ClassCatalog) -> Result<Checkpoint> {
    let ck = formats::read_checkpoint(path)?;
    ck.check_catalog(catalog)?;
    Ok(ck)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen {
            scenes,
            test_scenes,
            classes,
            grid,
            seed,
            out,
        } => {
            let gen = GenConfig {
                scenes,
                classes,
                grid,
                seed: seed.or(env_seed()?).unwrap_or(0),
                ..GenConfig::default()
            };
            let data = harness::generate_data(&gen, test_scenes)?;
            formats::write_dataset(&out, &data.catalog, &data.train, &data.test)?;
            eprintln!(
                "wrote {} training and {} test scenes to {}",
                data.train.len(),
                data.test.len(),
                out.display()
            );
        }

        Command::Split {
            kind,
            data,
            sizes,
            seed,
            tolerance,
            out,
        } => {
            let (catalog, scenes) = match &data {
                Some(d) => formats::read_dataset(d, Subset::Train)?,
                None => match kind {
                    SplitKind::BundledA | SplitKind::BundledB | SplitKind::BundledC => (bundled_catalog(), Vec::new()),
                    _ => return Err(CoreError::Config("--data is required for this split kind".into()).into()),
                },
            };
            let sizes: [usize; N_TASKS] = match sizes {
                Some(v) => v
                    .try_into()
                    .map_err(|_| CoreError::Config(format!("--sizes needs {N_TASKS} values")))?,
                None => {
                    let third = catalog.len() / N_TASKS;
                    [third, third, catalog.len() - 2 * third]
                }
            };
            let spec = match kind {
                SplitKind::Freq => SplitSpec::Freq { sizes },
                SplitKind::Region => SplitSpec::Region { sizes, tolerance },
                SplitKind::Random => SplitSpec::Random {
                    size: sizes[0],
                    seed: seed.or(env_seed()?).unwrap_or(0),
                },
                SplitKind::BundledA => SplitSpec::Bundled { which: "A".into() },
                SplitKind::BundledB => SplitSpec::Bundled { which: "B".into() },
                SplitKind::BundledC => SplitSpec::Bundled { which: "C".into() },
            };
            let (split, warnings) = harness::build_split(&spec, &catalog, &scenes)?;
            for w in warnings {
                eprintln!("warning: {w}");
            }
            formats::write_json(&out, &split)?;
            eprintln!("task sizes {:?}", split.sizes());
        }

        Command::Train {
            split,
            task,
            data,
            config,
            ckpt,
            epochs,
            no_ct,
            out,
        } => {
            let task = task_index(task)?;
            let (catalog, scenes) = formats::read_dataset(&data, Subset::Train)?;
            let split = formats::read_split(&split, &catalog)?;
            let exp = load_experiment(config.as_deref())?;
            let (mut cfg, mut learner) = match &ckpt {
                Some(p) => {
                    let ck = load_checkpoint(p, &catalog)?;
                    if ck.learner.state.split != split {
                        return Err(Error::Checkpoint("checkpoint was trained on a different split".into()));
                    }
                    if ck.learner.state.task != task {
                        return Err(Error::Checkpoint(format!(
                            "checkpoint is at task {}, not {}",
                            ck.learner.state.task + 1,
                            task + 1
                        )));
                    }
                    let cfg = if config.is_some() { exp.modules.clone() } else { ck.config };
                    (cfg, ck.learner)
                }
                None => {
                    let cfg = exp.modules.clone();
                    let l = Learner::new(&cfg, split, task)?;
                    (cfg, l)
                }
            };
            if no_ct {
                cfg.autolabel.mode = SelectionMode::TopK;
            }
            let epochs = epochs.unwrap_or(exp.epochs[task]);
            let log = learner.train(&scenes, Phase::Main, epochs, &cfg)?;
            formats::write_checkpoint(&Checkpoint::new(&catalog, cfg, learner), &out.join("checkpoint.json"))?;
            formats::write_json(&out.join("train_log.json"), &log)?;
            if let Some(last) = log.last() {
                eprintln!("epoch {} mean loss {:.4}", last.epoch + 1, last.mean_loss);
            }
        }

        Command::Advance { ckpt, split, out } => {
            let mut ck = formats::read_checkpoint(&ckpt)?;
            let split: owis_core::splits::TaskSplit = formats::read_json(&split)?;
            if ck.learner.state.split != split {
                return Err(Error::Checkpoint("checkpoint was trained on a different split".into()));
            }
            ck.learner.advance()?;
            eprintln!("now at task {}", ck.learner.state.task + 1);
            formats::write_checkpoint(&ck, &out)?;
        }

        Command::Finetune {
            ckpt,
            exemplars,
            data,
            epochs,
            out,
        } => {
            let (catalog, scenes) = formats::read_dataset(&data, Subset::Train)?;
            let mut ck = load_checkpoint(&ckpt, &catalog)?;
            let set = if exemplars.is_file() {
                formats::read_exemplars(&exemplars)?
            } else {
                let (set, warnings) = select_exemplars(&scenes, &ck.learner.state, &ck.config.replay)?;
                for w in warnings {
                    eprintln!("warning: {w}");
                }
                formats::write_json(&exemplars, &set)?;
                set
            };
            ck.learner.state.exemplars = set;
            let replay = replay_scenes(&scenes, &ck.learner.state);
            let main_epochs = ExperimentConfig::default().epochs[ck.learner.state.task];
            let epochs = epochs.unwrap_or_else(|| harness::finetune_epochs(&ck.config, main_epochs));
            let cfg = ck.config.clone();
            ck.learner.train(&replay, Phase::Replay, epochs, &cfg)?;
            eprintln!("fine-tuned {epochs} epochs on {} scenes", replay.len());
            formats::write_checkpoint(&ck, out.as_deref().unwrap_or(&ckpt))?;
        }

        Command::Eval {
            ckpt,
            task,
            data,
            subset,
            report,
            no_pc,
            no_ct,
            csv,
            predictions,
            gt,
        } => {
            let task = task_index(task)?;
            let subset = match subset {
                SubsetArg::Train => Subset::Train,
                SubsetArg::Test => Subset::Test,
            };
            let (catalog, scenes) = formats::read_dataset(&data, subset)?;
            let ck = load_checkpoint(&ckpt, &catalog)?;
            if ck.learner.state.task != task {
                return Err(Error::Checkpoint(format!(
                    "checkpoint is at task {}, not {}",
                    ck.learner.state.task + 1,
                    task + 1
                )));
            }
            if no_ct {
                eprintln!("note: --no-ct has no effect at evaluation; pass it to `owis train`");
            }
            let l = &ck.learner;
            let correction = (!no_pc).then_some(&ck.config.ow);
            let r = l.evaluate(&scenes, correction, &ck.config.eval)?;
            formats::write_report(&r, &report)?;
            if let Some(path) = csv {
                formats::write_table(&path, &[formats::table_columns(task, &r)])?;
            }
            if predictions.is_some() || gt.is_some() {
                let relabeled: Vec<_> = scenes.iter().map(|s| relabel_for_eval(s, &l.state)).collect();
                if let Some(path) = predictions {
                    let mut file = PredictionsFile {
                        prev: l.state.previous(),
                        curr: l.state.current().to_vec(),
                        scenes: Vec::new(),
                    };
                    for s in &relabeled {
                        file.scenes.push(ScenePredictions::new(&s.id, &l.detect(s, correction)?));
                    }
                    formats::write_json(&path, &file)?;
                }
                if let Some(path) = gt {
                    let file = GroundTruthFile {
                        scenes: relabeled.iter().map(SceneFile::from).collect(),
                    };
                    formats::write_json(&path, &file)?;
                }
            }
            let pct = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{:.2}", 100.0 * x));
            eprintln!(
                "mAP prev {} curr {} all {} | U-Recall {} | WI {:.4} | A-OSE {}",
                pct(r.map_prev),
                pct(r.map_curr),
                pct(r.map_all),
                pct(r.u_recall),
                r.wi,
                r.a_ose
            );
        }

        Command::Protocol {
            config,
            out,
            grid,
            resume,
        } => {
            let exp = load_experiment(config.as_deref())?;
            let manifest = harness::run_experiment(&exp, &out, grid, resume)?;
            eprintln!(
                "{} run(s) x {} seed(s); manifest at {}",
                manifest.runs.len(),
                manifest.seeds.len(),
                out.join("manifest.json").display()
            );
        }

        Command::Oracle {
            predictions,
            gt,
            config,
            report,
        } => {
            let cfg: Config = match config {
                Some(p) => ExperimentConfig::load(&p)?.modules,
                None => ExperimentConfig::default().modules,
            };
            let (preds, pairs) = formats::read_oracle_inputs(&predictions, &gt)?;
            let refs: Vec<_> = pairs.iter().map(|(s, d)| (s, d.clone())).collect();
            let r = oracle::evaluate(&refs, &preds.prev, &preds.curr, &cfg.eval)?;
            formats::write_report(&r, &report)?;
            let fast = metrics::evaluate(&refs, &preds.prev, &preds.curr, &cfg.eval)?;
            if fast != r {
                eprintln!("warning: the fast evaluator disagrees with the oracle");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
