use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentMode, StrategyKind};
use super::table::{render_markdown, ResultTable};
use crate::augment::{apply_strategy, generate_synthetic, AugmentReport, AugmentationPlan, PromptMode, Strategy, SyntheticSet};
use crate::classifier::{score_corpus, ClassifierFactory, ClfTrainConfig};
use crate::corpus::{build_vocab, make_split, synth_benchmark, CorpusSplit, SynthBenchSpec};
use crate::distill::{docs_hash, pretrain_teacher, train_student, DistillConfig, Teacher};
use crate::error::{invalid, Error, Result};
use crate::genlm::{lm_finetune, GeneratorModel};
use crate::io::write_atomic;
use crate::metrics::{evaluate, MetricSet};
use crate::rng;

/// One row of a result table before seed aggregation. Fields that do not
/// apply to the strategy are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub strategy: Strategy,
    pub count: Option<usize>,
    pub prompt: Option<PromptMode>,
    pub balanced: Option<bool>,
}

/// Every configured cell in table order.
pub fn cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for kind in &cfg.strategies {
        if *kind == StrategyKind::None {
            out.push(Cell {
                strategy: Strategy::None,
                count: None,
                prompt: None,
                balanced: None,
            });
            continue;
        }
        let variants: Vec<Strategy> = match kind {
            StrategyKind::Base => vec![Strategy::Base],
            StrategyKind::ConfidenceFilter => cfg
                .keep_fractions
                .iter()
                .map(|&keep_fraction| Strategy::ConfidenceFilter { keep_fraction })
                .collect(),
            StrategyKind::Medaug => cfg
                .taus
                .iter()
                .map(|&tau| Strategy::Medaug {
                    tau,
                    kl_scope: cfg.kl_scope,
                })
                .collect(),
            StrategyKind::None => unreachable!(),
        };
        for &prompt in &cfg.prompts {
            for &balanced in &cfg.balanced {
                for &count in &cfg.counts {
                    for s in &variants {
                        out.push(Cell {
                            strategy: *s,
                            count: Some(count),
                            prompt: Some(prompt),
                            balanced: Some(balanced),
                        });
                    }
                }
            }
        }
    }
    out
}

/// Outcome of one cell under one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub seed: u64,
    pub cell: Cell,
    pub valid: MetricSet,
    /// Absent for validation-only sweeps.
    pub test: Option<MetricSet>,
    pub corpus_hash: String,
    pub generator_hash: Option<String>,
    pub synthetic_hash: Option<String>,
    pub student_hash: String,
    pub augmentation: AugmentReport,
}

/// Seeds every stage of one seed's runs.
#[derive(Clone, Copy, Debug)]
struct SeedPlan {
    seed: u64,
}

impl SeedPlan {
    fn get(&self, stream: &str) -> u64 {
        rng::derive(self.seed, stream)
    }
}

struct SeedContext<'a> {
    cfg: &'a ExperimentConfig,
    seeds: SeedPlan,
    split: CorpusSplit,
    factory: ClassifierFactory,
    generators: BTreeMap<bool, GeneratorModel>,
    pools: BTreeMap<(bool, PromptModeKey), SyntheticSet>,
    teacher: Option<Teacher>,
}

/// `PromptMode` has no `Ord`; this orders its variants.
type PromptModeKey = u8;

fn prompt_key(p: PromptMode) -> PromptModeKey {
    match p {
        PromptMode::WithContext => 0,
        PromptMode::WithoutContext => 1,
    }
}

impl ExperimentConfig {
    fn training(&self, seed: u64) -> ClfTrainConfig {
        ClfTrainConfig { seed, ..self.training }
    }

    fn distill(&self, seeds: SeedPlan, tau: f64) -> DistillConfig {
        DistillConfig {
            tau,
            kl_scope: self.kl_scope,
            direction: self.direction,
            teacher: self.training(seeds.get("teacher")),
            student: self.training(seeds.get("student")),
        }
    }
}

/// Benchmark corpus and split for one seed.
pub fn seed_split(cfg: &ExperimentConfig, seed: u64) -> Result<CorpusSplit> {
    let spec = SynthBenchSpec {
        seed: rng::derive_index(cfg.benchmark.seed, "benchmark", seed),
        ..cfg.benchmark.clone()
    };
    make_split(&synth_benchmark(&spec)?, cfg.split, rng::derive(seed, "split"))
}

fn prepare<'a>(cfg: &'a ExperimentConfig, seed: u64, cells: &[Cell]) -> Result<SeedContext<'a>> {
    let seeds = SeedPlan { seed };
    let split = seed_split(cfg, seed).map_err(|e| e.in_stage("corpus"))?;
    let vocab = build_vocab(&split.train, cfg.vocab_min_freq).map_err(|e| e.in_stage("corpus"))?;
    let factory = ClassifierFactory::new(vocab.clone(), cfg.classifier)?;
    let mut generators = BTreeMap::new();
    let mut pools = BTreeMap::new();
    let mut max_count: BTreeMap<(bool, PromptModeKey), (usize, PromptMode)> = BTreeMap::new();
    for c in cells.iter().filter(|c| c.strategy.uses_synthetic()) {
        let (Some(count), Some(prompt), Some(balanced)) = (c.count, c.prompt, c.balanced) else {
            continue;
        };
        let e = max_count.entry((balanced, prompt_key(prompt))).or_insert((0, prompt));
        e.0 = e.0.max(count);
    }
    let needed: BTreeSet<bool> = max_count.keys().map(|k| k.0).collect();
    for balanced in needed {
        log::info!("seed {seed}: fine-tuning generator (balanced = {balanced})");
        let mut g = GeneratorModel::new(vocab.clone(), cfg.generator, seeds.get("generator-init"))
            .map_err(|e| e.in_stage("finetune"))?;
        let lm = crate::genlm::LmTrainConfig {
            seed: seeds.get("lm"),
            ..cfg.lm
        };
        lm_finetune(&mut g, &split.train, balanced, &lm).map_err(|e| e.in_stage("finetune"))?;
        generators.insert(balanced, g);
    }
    for (&(balanced, key), &(count, prompt)) in &max_count {
        log::info!("seed {seed}: generating {count} documents ({prompt:?}, balanced = {balanced})");
        let plan = AugmentationPlan {
            count,
            prompt_mode: prompt,
            dedup: cfg.dedup,
            seed: seeds.get("generation"),
            temperature: cfg.temperature,
            top_k: cfg.top_k,
            max_len: cfg.max_len,
            noise_fraction: cfg.noise_fraction,
            noise_mode: cfg.noise_mode,
        };
        let pool = generate_synthetic(&generators[&balanced], &plan, &split.train).map_err(|e| e.in_stage("generate"))?;
        pools.insert((balanced, key), pool);
    }
    let teacher = if cells.iter().any(|c| matches!(c.strategy, Strategy::Medaug { tau, .. } if tau > 0.0)) {
        let dc = cfg.distill(seeds, 0.0);
        Some(pretrain_teacher(&factory, &split.train, &dc).map_err(|e| e.in_stage("teacher"))?)
    } else {
        None
    };
    Ok(SeedContext {
        cfg,
        seeds,
        split,
        factory,
        generators,
        pools,
        teacher,
    })
}

fn prefix(pool: &SyntheticSet, n: usize) -> SyntheticSet {
    let docs = pool.docs[..n.min(pool.docs.len())].to_vec();
    let ids: BTreeSet<&str> = docs.iter().map(|d| d.id.as_str()).collect();
    SyntheticSet {
        noisy: pool.noisy.iter().filter(|id| ids.contains(id.as_str())).cloned().collect(),
        attempts: pool.attempts,
        docs,
    }
}

fn run_cell(ctx: &SeedContext<'_>, cell: &Cell, config_hash: &str, with_test: bool) -> Result<RunRecord> {
    let cfg = ctx.cfg;
    let pool = match (cell.count, cell.prompt, cell.balanced) {
        (Some(n), Some(p), Some(b)) if cell.strategy.uses_synthetic() => prefix(&ctx.pools[&(b, prompt_key(p))], n),
        _ => SyntheticSet::default(),
    };
    let filter_cfg = cfg.training(ctx.seeds.get("filter"));
    let (combined, augmentation) = apply_strategy(&ctx.split.train, &pool, &cell.strategy, &ctx.factory, &filter_cfg)
        .map_err(|e| e.in_stage("augment"))?;
    let student = match cell.strategy {
        Strategy::Medaug { tau, .. } if tau > 0.0 => {
            let teacher = ctx.teacher.as_ref().expect("teacher prepared for medaug cells");
            train_student(&ctx.factory, &combined, teacher, &cfg.distill(ctx.seeds, tau))
        }
        _ => ctx.factory.train(&combined, &cfg.training(ctx.seeds.get("student"))),
    }
    .map_err(|e| e.in_stage("student"))?
    .0;
    let valid = evaluate(&score_corpus(&student, &ctx.split.valid)?).map_err(|e| e.in_stage("evaluate"))?;
    let test = if with_test {
        Some(evaluate(&score_corpus(&student, &ctx.split.test)?).map_err(|e| e.in_stage("evaluate"))?)
    } else {
        None
    };
    Ok(RunRecord {
        config_hash: config_hash.to_string(),
        seed: ctx.seeds.seed,
        cell: cell.clone(),
        valid,
        test,
        corpus_hash: docs_hash(&ctx.split.train),
        generator_hash: cell.balanced.filter(|_| cell.strategy.uses_synthetic()).map(|b| ctx.generators[&b].params_hash()),
        synthetic_hash: cell.strategy.uses_synthetic().then(|| docs_hash(&pool.docs)),
        student_hash: student.params_hash(),
        augmentation,
    })
}

fn run_seed(cfg: &ExperimentConfig, seed: u64, cells: &[Cell], config_hash: &str) -> Result<(Vec<RunRecord>, f64)> {
    let start = Instant::now();
    let ctx = prepare(cfg, seed, cells)?;
    let with_test = cfg.mode == ExperimentMode::Compare;
    let records = cells
        .iter()
        .map(|c| run_cell(&ctx, c, config_hash, with_test))
        .collect::<Result<Vec<_>>>()?;
    log::info!("seed {seed}: {} runs in {:.1}s", records.len(), start.elapsed().as_secs_f64());
    Ok((records, start.elapsed().as_secs_f64()))
}

/// Runs every (cell, seed) pair. Seeds run in parallel on up to
/// `threads` workers; records come back in seed-major, cell order.
pub fn run_records(cfg: &ExperimentConfig, threads: usize) -> Result<(Vec<RunRecord>, Vec<f64>)> {
    cfg.validate()?;
    let cells = cells(cfg);
    let hash = cfg.hash();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| invalid(format!("thread pool: {e}")))?;
    let per_seed: Vec<Result<(Vec<RunRecord>, f64)>> =
        pool.install(|| cfg.seeds.par_iter().map(|&s| run_seed(cfg, s, &cells, &hash)).collect());
    let mut records = Vec::new();
    let mut timings = Vec::new();
    for r in per_seed {
        let (recs, secs) = r?;
        records.extend(recs);
        timings.push(secs);
    }
    Ok((records, timings))
}

/// Files written by [`run_experiment`].
#[derive(Clone, Debug, PartialEq)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub records: Vec<RunRecord>,
    pub table: ResultTable,
}

pub const RUNS_FILE: &str = "runs.jsonl";
pub const CONFIG_FILE: &str = "config.json";
pub const TABLE_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.md";
pub const TIMINGS_FILE: &str = "timings.json";

/// Runs the experiment and writes `config.json`, `runs.jsonl`,
/// `results.csv`, `summary.md` and `timings.json` into `out_dir`. All
/// but the timings are byte-identical across reruns.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path, threads: usize) -> Result<RunArtifacts> {
    let (records, timings) = run_records(cfg, threads)?;
    write_atomic(&out_dir.join(CONFIG_FILE), |f| {
        serde_json::to_writer_pretty(&mut *f, &serde_json::json!({ "hash": cfg.hash(), "config": cfg }))?;
        writeln!(f)?;
        Ok(())
    })?;
    write_atomic(&out_dir.join(RUNS_FILE), |f| {
        for r in &records {
            serde_json::to_writer(&mut *f, r)?;
            writeln!(f)?;
        }
        Ok(())
    })?;
    let seconds: BTreeMap<String, f64> = cfg.seeds.iter().map(|s| s.to_string()).zip(timings).collect();
    write_atomic(&out_dir.join(TIMINGS_FILE), |f| {
        serde_json::to_writer_pretty(&mut *f, &seconds)?;
        Ok(())
    })?;
    let table = write_tables(cfg, &records, out_dir)?;
    Ok(RunArtifacts {
        dir: out_dir.to_path_buf(),
        records,
        table,
    })
}

fn write_tables(cfg: &ExperimentConfig, records: &[RunRecord], out_dir: &Path) -> Result<ResultTable> {
    let table = ResultTable::aggregate(records)?;
    write_atomic(&out_dir.join(TABLE_FILE), |f| table.write_csv(f))?;
    let md = render_markdown(&cfg.name, cfg.mode, &cfg.hash(), &table);
    crate::io::write_bytes_atomic(&out_dir.join(SUMMARY_FILE), md.as_bytes())?;
    Ok(table)
}

/// Rebuilds `results.csv` and `summary.md` from a run directory's
/// `config.json` and `runs.jsonl`.
pub fn regenerate_report(run_dir: &Path) -> Result<ResultTable> {
    let config_path = run_dir.join(CONFIG_FILE);
    let raw: serde_json::Value = serde_json::from_reader(std::fs::File::open(&config_path)?)?;
    let cfg: ExperimentConfig = serde_json::from_value(raw["config"].clone())?;
    let runs_path = run_dir.join(RUNS_FILE);
    let mut records = Vec::new();
    for (i, line) in std::fs::read_to_string(&runs_path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(line).map_err(|e| Error::Parse {
            path: runs_path.clone(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    let hash = cfg.hash();
    if let Some(r) = records.iter().find(|r: &&RunRecord| r.config_hash != hash) {
        return Err(invalid(format!(
            "run for seed {} was produced by config {}, not {hash}",
            r.seed, r.config_hash
        )));
    }
    write_tables(&cfg, &records, run_dir)
}

/// Worker count from `MEDAUG_THREADS`, defaulting to the available
/// parallelism.
pub fn threads_from_env() -> usize {
    std::env::var("MEDAUG_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, usize::from))
}
