use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use medaug::augment::{run_augmentation, AugmentationPlan, KlScope, NoiseMode, PromptMode, Strategy};
use medaug::classifier::{score_corpus, ClassifierFactory, ClassifierModel, ClfConfig, ClfTrainConfig};
use medaug::corpus::{build_vocab, load_jsonl, make_split, save_jsonl, synth_benchmark, SplitRatios, SynthBenchSpec};
use medaug::distill::{pretrain_teacher, train_student, DistillConfig};
use medaug::exp::{regenerate_report, run_experiment, threads_from_env, ExperimentConfig};
use medaug::genlm::{lm_finetune, sample, GenConfig, GeneratorModel, LmTrainConfig, PromptSpec};
use medaug::metrics::{evaluate, pr_curve, roc_curve, write_curve_csv};
use medaug::tensor::KlDirection;

#[derive(Parser)]
#[command(name = "medaug", version, about = "Label-conditioned augmentation with teacher-student noise control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthetic benchmark corpora.
    Corpus {
        #[command(subcommand)]
        command: CorpusCommand,
    },
    /// Generator training and sampling.
    Lm {
        #[command(subcommand)]
        command: LmCommand,
    },
    /// Classifier training.
    Clf {
        #[command(subcommand)]
        command: ClfCommand,
    },
    /// Generate synthetic positives and apply an integration strategy.
    Augment(AugmentArgs),
    /// Train a teacher on original data and a KL-guided student on the combined set.
    Distill(DistillArgs),
    /// Score a labeled corpus with a classifier checkpoint.
    Eval(EvalArgs),
    /// Configured experiment sweeps.
    Experiment {
        #[command(subcommand)]
        command: ExperimentCommand,
    },
    /// Rebuild tables and the summary from a run directory.
    Report {
        #[arg(long)]
        run_dir: PathBuf,
    },
}

#[derive(Subcommand)]
enum CorpusCommand {
    /// Write train/valid/test JSONL splits of a generated benchmark.
    Gen {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 5000)]
        num_docs: usize,
        #[arg(long, default_value_t = 0.2)]
        positive_fraction: f64,
        #[arg(long, default_value_t = 0.0)]
        label_noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum LmCommand {
    /// Fine-tune a fresh generator on a training split.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 64)]
        d_model: usize,
        #[arg(long, default_value_t = 2)]
        heads: usize,
        #[arg(long, default_value_t = 2)]
        layers: usize,
        #[arg(long, default_value_t = 128)]
        context: usize,
        #[arg(long, default_value_t = 3)]
        epochs: usize,
        #[arg(long, default_value_t = 3e-3)]
        lr: f64,
        /// Under-sample the majority class before fine-tuning.
        #[arg(long)]
        balanced: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print label-conditioned samples as JSONL.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 1)]
        label: u8,
        /// Words the body starts with.
        #[arg(long, default_value = "")]
        context: String,
        #[arg(long, default_value_t = 5)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
        #[arg(long, default_value_t = 40)]
        top_k: usize,
        #[arg(long, default_value_t = 64)]
        max_len: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct ClfArgs {
    #[arg(long, default_value_t = 32)]
    embed_dim: usize,
    #[arg(long, default_value_t = 32)]
    hidden_dim: usize,
    #[arg(long, default_value_t = 6)]
    epochs: usize,
    #[arg(long, default_value_t = 5e-3)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
}

impl ClfArgs {
    fn config(&self) -> ClfConfig {
        ClfConfig {
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            ..Default::default()
        }
    }

    fn training(&self, seed: u64) -> ClfTrainConfig {
        ClfTrainConfig {
            epochs: self.epochs,
            lr: self.lr,
            batch_size: self.batch_size,
            seed,
        }
    }
}

#[derive(Subcommand)]
enum ClfCommand {
    /// Train a classifier; the vocabulary comes from the training file.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        clf: ClfArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    None,
    Base,
    ConfidenceFilter,
    Medaug,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScopeArg {
    AllSamples,
    SyntheticOnly,
}

impl From<ScopeArg> for KlScope {
    fn from(s: ScopeArg) -> Self {
        match s {
            ScopeArg::AllSamples => KlScope::AllSamples,
            ScopeArg::SyntheticOnly => KlScope::SyntheticOnly,
        }
    }
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    count: usize,
    #[arg(long, value_enum, default_value = "base")]
    strategy: StrategyArg,
    #[arg(long, default_value_t = 0.5)]
    keep_fraction: f64,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    #[arg(long, value_enum, default_value = "all-samples")]
    kl_scope: ScopeArg,
    #[arg(long)]
    without_context: bool,
    #[arg(long)]
    no_dedup: bool,
    #[arg(long, default_value_t = 0.0)]
    noise_fraction: f64,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long, default_value_t = 40)]
    top_k: usize,
    #[arg(long, default_value_t = 64)]
    max_len: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Combined training set.
    #[arg(long)]
    out: PathBuf,
    /// JSON provenance report.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct DistillArgs {
    /// Original training documents (teacher data).
    #[arg(long)]
    train: PathBuf,
    /// Combined documents (student data).
    #[arg(long)]
    combined: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    #[arg(long, value_enum, default_value = "all-samples")]
    kl_scope: ScopeArg,
    /// Use KL(student || teacher) instead of KL(teacher || student).
    #[arg(long)]
    reverse_kl: bool,
    #[command(flatten)]
    clf: ClfArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    teacher_out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    roc_csv: Option<PathBuf>,
    #[arg(long)]
    pr_csv: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ExperimentCommand {
    /// Run every configured cell for every seed.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_docs(path: &Path) -> Result<Vec<medaug::corpus::LabeledDocument>> {
    load_jsonl(path).with_context(|| format!("reading {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Corpus {
            command:
                CorpusCommand::Gen {
                    out_dir,
                    num_docs,
                    positive_fraction,
                    label_noise,
                    seed,
                },
        } => {
            let spec = SynthBenchSpec {
                num_docs,
                positive_fraction,
                label_noise,
                seed,
                ..Default::default()
            };
            let split = make_split(&synth_benchmark(&spec)?, SplitRatios::default(), seed)?;
            for (name, docs) in [("train", &split.train), ("valid", &split.valid), ("test", &split.test)] {
                save_jsonl(docs, out_dir.join(format!("{name}.jsonl")))?;
            }
            log::info!(
                "wrote {} / {} / {} documents to {}",
                split.train.len(),
                split.valid.len(),
                split.test.len(),
                out_dir.display()
            );
        }
        Command::Lm {
            command:
                LmCommand::Train {
                    train,
                    out,
                    d_model,
                    heads,
                    layers,
                    context,
                    epochs,
                    lr,
                    balanced,
                    seed,
                },
        } => {
            let docs = load_docs(&train)?;
            let cfg = GenConfig {
                d_model,
                heads,
                layers,
                context,
            };
            let mut model = GeneratorModel::new(build_vocab(&docs, 1)?, cfg, seed)?;
            let lm = LmTrainConfig {
                epochs,
                lr,
                seed,
                ..Default::default()
            };
            let report = lm_finetune(&mut model, &docs, balanced, &lm)?;
            log::info!(
                "trained on {} documents, epoch losses {:?}",
                report.docs_used,
                report.history.epochs
            );
            model.save(&out)?;
        }
        Command::Lm {
            command:
                LmCommand::Sample {
                    model,
                    label,
                    context,
                    n,
                    temperature,
                    top_k,
                    max_len,
                    seed,
                },
        } => {
            let model = GeneratorModel::load(&model)?;
            let mut stdout = std::io::stdout().lock();
            for i in 0..n {
                let prompt = PromptSpec {
                    label,
                    context: context.split_whitespace().map(String::from).collect(),
                    temperature,
                    top_k,
                    max_len,
                    seed: medaug::rng::derive_index(seed, "cli-sample", i as u64),
                };
                if let Some(doc) = sample(&model, &prompt)?.into_document(format!("sample{i:05}")) {
                    serde_json::to_writer(&mut stdout, &doc)?;
                    writeln!(stdout)?;
                }
            }
        }
        Command::Clf {
            command: ClfCommand::Train { train, out, clf, seed },
        } => {
            let docs = load_docs(&train)?;
            let factory = ClassifierFactory::new(build_vocab(&docs, 1)?, clf.config())?;
            let (model, history) = factory.train(&docs, &clf.training(seed))?;
            log::info!("final epoch loss {:?}", history.epochs.last());
            model.save(&out)?;
        }
        Command::Augment(a) => {
            let generator = GeneratorModel::load(&a.model)?;
            let train = load_docs(&a.train)?;
            let strategy = match a.strategy {
                StrategyArg::None => Strategy::None,
                StrategyArg::Base => Strategy::Base,
                StrategyArg::ConfidenceFilter => Strategy::ConfidenceFilter {
                    keep_fraction: a.keep_fraction,
                },
                StrategyArg::Medaug => Strategy::Medaug {
                    tau: a.tau,
                    kl_scope: a.kl_scope.into(),
                },
            };
            let plan = AugmentationPlan {
                count: a.count,
                prompt_mode: if a.without_context {
                    PromptMode::WithoutContext
                } else {
                    PromptMode::WithContext
                },
                dedup: !a.no_dedup,
                noise_fraction: a.noise_fraction,
                noise_mode: NoiseMode::Offlabel,
                seed: a.seed,
                temperature: a.temperature,
                top_k: a.top_k,
                max_len: a.max_len,
            };
            let factory = ClassifierFactory::new(generator.vocab().clone(), ClfConfig::default())?;
            let filter_cfg = ClfTrainConfig {
                seed: a.seed,
                ..Default::default()
            };
            let (combined, report) = run_augmentation(&train, &generator, &plan, &strategy, &factory, &filter_cfg)?;
            save_jsonl(&combined, &a.out)?;
            let json = serde_json::to_string_pretty(&report)?;
            match a.report {
                Some(path) => std::fs::write(path, json + "\n")?,
                None => println!("{json}"),
            }
        }
        Command::Distill(d) => {
            let train = load_docs(&d.train)?;
            let combined = load_docs(&d.combined)?;
            let factory = ClassifierFactory::new(build_vocab(&train, 1)?, d.clf.config())?;
            let cfg = DistillConfig {
                tau: d.tau,
                kl_scope: d.kl_scope.into(),
                direction: if d.reverse_kl {
                    KlDirection::ModelToTarget
                } else {
                    KlDirection::TargetToModel
                },
                teacher: d.clf.training(medaug::rng::derive(d.seed, "teacher")),
                student: d.clf.training(medaug::rng::derive(d.seed, "student")),
            };
            let teacher = pretrain_teacher(&factory, &train, &cfg)?;
            let (student, history) = train_student(&factory, &combined, &teacher, &cfg)?;
            for (i, e) in history.epochs.iter().enumerate() {
                log::info!("epoch {i}: student {:.5} kl {:.5} total {:.5}", e.student, e.kl, e.total);
            }
            if let Some(path) = d.teacher_out {
                teacher.model().save(path)?;
            }
            student.save(&d.out)?;
        }
        Command::Eval(e) => {
            let model = ClassifierModel::load(&e.model)?;
            let docs = load_docs(&e.data)?;
            if docs.iter().any(|d| d.is_synthetic()) {
                bail!("{} contains synthetic documents; evaluate on original data", e.data.display());
            }
            let sp = score_corpus(&model, &docs)?;
            println!("{}", serde_json::to_string_pretty(&evaluate(&sp)?)?);
            if let Some(path) = e.roc_csv {
                write_curve_csv(&roc_curve(&sp)?.points, &path)?;
            }
            if let Some(path) = e.pr_csv {
                write_curve_csv(&pr_curve(&sp)?.points, &path)?;
            }
        }
        Command::Experiment {
            command: ExperimentCommand::Run { config, out },
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = out.unwrap_or_else(|| cfg.output.clone());
            let artifacts = run_experiment(&cfg, &dir, threads_from_env())?;
            log::info!(
                "{} runs, {} table rows written to {}",
                artifacts.records.len(),
                artifacts.table.rows.len(),
                dir.display()
            );
        }
        Command::Report { run_dir } => {
            let table = regenerate_report(&run_dir)?;
            log::info!("regenerated {} rows in {}", table.rows.len(), run_dir.display());
        }
    }
    Ok(())
}
