//! Command-line front end. Every command reads files, writes files plus a
//! `manifest.json` describing the run, and removes its partial outputs if it
//! fails.
//!
//! Settings resolve as: command-line flag, then the `--config` TOML file,
//! then the built-in defaults.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::candgen::{enumerate_topk, CandidateList};
use crate::config::{MadeConfig, MaskSaConfig, RerankConfig, TrainConfig, DEFAULT_ALPHA_GRID, DEFAULT_BETA_GRID};
use crate::data::{
    self, block_mixture, file_digest, gen_synthetic, load_checkpoint, read_candidates, read_gold, read_joint_table,
    read_marginals, read_vocab, save_made, save_masksa, write_gold, write_reranked, Checkpoint, SyntheticSpec,
};
use crate::error::{Error, Result};
use crate::eval::{
    align_by_id, avg_best_rank, bucketed_f1, label_frequencies, micro_macro_f1, sweep_k, EvalReport,
};
use crate::labels::{LabelSet, LabelSpace, MarginalPrediction};
use crate::made::{train_made, TrainReport};
use crate::masksa::train_masksa;
use crate::rerank::{diff_prediction, grid_search_with_raw, raw_scores, rescore_with_raw, Objective, SetScorer, TableScorer};

#[derive(Debug, Parser)]
#[command(name = "labelset-rerank", version, about = "Top-k label-set generation and reranking")]
pub struct Cli {
    /// Random seed for data generation and model initialisation.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Label vocabulary, one code per line.
    #[arg(long, global = true)]
    pub vocab: Option<PathBuf>,
    /// Directory receiving every output of the command.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// TOML file with `[synth]`, `[made]`, `[masksa]` and `[rerank]` tables.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with correlated labels.
    Synth(SynthArgs),
    /// Train a reranker on the label sets of a gold file.
    Train(TrainArgs),
    /// Generate top-k candidates from marginals and rerank them.
    Rerank(RerankArgs),
    /// Score predictions or candidate lists against gold sets.
    Eval(EvalArgs),
    /// Grid-search alpha and beta, and trace F1 against the candidate count.
    Sweep(SweepArgs),
    /// Show which labels reranking added or removed per instance.
    Diff(DiffArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub labels: Option<usize>,
    #[arg(long)]
    pub components: Option<usize>,
    /// Probability of labels inside a component's block.
    #[arg(long)]
    pub hi: Option<f64>,
    /// Probability of labels outside a component's block.
    #[arg(long)]
    pub lo: Option<f64>,
    /// Logit-space noise on the emitted marginals.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub train: Option<usize>,
    #[arg(long)]
    pub val: Option<usize>,
    #[arg(long)]
    pub test: Option<usize>,
    /// Require the exact joint table (fails above 20 labels).
    #[arg(long, conflicts_with = "no_exact_joint")]
    pub exact_joint: bool,
    /// Skip the exact joint table.
    #[arg(long)]
    pub no_exact_joint: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Made,
    Masksa,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(value_enum)]
    pub kind: ModelKind,
    /// Training label sets in gold format.
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub step_size: Option<f64>,
    /// MADE hidden width.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// MADE ordering-ensemble size.
    #[arg(long)]
    pub orderings: Option<usize>,
    /// Mask-SA model width.
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub ffn_width: Option<usize>,
}

/// Where the reranker score comes from.
#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct ScorerArgs {
    /// Trained MADE or Mask-SA checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Exact joint table, for oracle reranking of synthetic data.
    #[arg(long)]
    pub joint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RerankArgs {
    #[arg(long)]
    pub marginals: PathBuf,
    #[command(flatten)]
    pub scorer: ScorerArgs,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub gold: PathBuf,
    /// Top-1 predictions in gold format.
    #[arg(long, required_unless_present = "candidates")]
    pub predictions: Option<PathBuf>,
    /// Candidate or reranked file; adds the average best rank.
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    /// Training gold sets, for frequency-bucketed F1.
    #[arg(long)]
    pub train_gold: Option<PathBuf>,
    #[arg(long, default_value_t = 6)]
    pub buckets: usize,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Gold sets of the instances in `--marginals`.
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub marginals: PathBuf,
    #[command(flatten)]
    pub scorer: ScorerArgs,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub grid_alpha: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub grid_beta: Option<Vec<f64>>,
    #[arg(long, default_value = "micro")]
    pub objective: Objective,
    /// Candidate counts to trace, as `a..b` (inclusive) or a comma list.
    #[arg(long)]
    pub k_curve: Option<String>,
    /// Fixed alpha for the k curve; defaults to the chosen grid cell.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Fixed beta for the k curve; defaults to the chosen grid cell.
    #[arg(long)]
    pub beta: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DiffArgs {
    /// Base predictions in gold format.
    #[arg(long)]
    pub base: PathBuf,
    /// Reranked predictions in gold format.
    #[arg(long)]
    pub reranked: PathBuf,
    /// Optional gold sets, to mark each change as a fix or a regression.
    #[arg(long)]
    pub gold: Option<PathBuf>,
}

/// Settings for the synthetic generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub labels: usize,
    pub components: usize,
    pub hi: f64,
    pub lo: f64,
    pub noise: f64,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            labels: 10,
            components: 3,
            hi: 0.8,
            lo: 0.08,
            noise: 1.0,
            train: 20_000,
            val: 2_000,
            test: 2_000,
        }
    }
}

/// Contents of a `--config` file. Missing tables and keys take defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub synth: SynthConfig,
    pub made: MadeConfig,
    pub masksa: MaskSaConfig,
    pub rerank: RerankConfig,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Serialize)]
struct FileRecord {
    path: PathBuf,
    sha256: String,
}

/// Written as `manifest.json` next to every command's outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    inputs: Vec<FileRecord>,
    outputs: Vec<FileRecord>,
    pub duration_secs: f64,
}

/// Collects outputs so they can be digested on success or deleted on failure.
struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    /// Registers `name` before it is written, so a failed write is cleaned up too.
    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(p.clone());
        p
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        let p = self.path(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    }

    fn write_jsonl<T: Serialize>(&mut self, name: &str, records: &[T]) -> Result<()> {
        let mut text = String::new();
        for r in records {
            text.push_str(&serde_json::to_string(r).map_err(|e| Error::input(e.to_string()))?);
            text.push('\n');
        }
        self.write_text(name, &text)
    }

    fn remove_all(&self) {
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
        let _ = fs::remove_file(self.dir.join("manifest.json"));
    }
}

struct Run<'a> {
    cli: &'a Cli,
    file: FileConfig,
    seed: u64,
    inputs: Vec<PathBuf>,
    out: Outputs,
}

impl Run<'_> {
    fn input(&mut self, path: &Path) -> PathBuf {
        self.inputs.push(path.to_path_buf());
        path.to_path_buf()
    }

    fn vocab(&mut self) -> Result<LabelSpace> {
        let path = self
            .cli
            .vocab
            .clone()
            .ok_or_else(|| Error::config("--vocab is required for this command"))?;
        read_vocab(&self.input(&path))
    }

    fn manifest(&self, command: &str, config: serde_json::Value, started: Instant) -> Result<()> {
        let records = |paths: &[PathBuf]| -> Result<Vec<FileRecord>> {
            paths
                .iter()
                .map(|p| {
                    Ok(FileRecord {
                        path: p.clone(),
                        sha256: file_digest(p)?,
                    })
                })
                .collect()
        };
        let manifest = RunManifest {
            command: command.to_string(),
            seed: self.seed,
            config,
            inputs: records(&self.inputs)?,
            outputs: records(&self.out.written)?,
            duration_secs: started.elapsed().as_secs_f64(),
        };
        let path = self.out.dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::input(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }
}

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("settings serialise")
}

/// Parses `a..b` (inclusive) or `a,b,c`.
pub fn parse_k_values(text: &str) -> Result<Vec<usize>> {
    let bad = || Error::config(format!("cannot parse candidate counts {text:?}"));
    let values: Vec<usize> = if let Some((a, b)) = text.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().parse().map_err(|_| bad())?;
        (a..=b).collect()
    } else {
        text.split(',')
            .map(|s| s.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    if values.is_empty() || values.contains(&0) {
        return Err(bad());
    }
    Ok(values)
}

fn train_overrides(train: &mut TrainConfig, a: &TrainArgs) {
    if let Some(v) = a.epochs {
        train.epochs = v;
    }
    if let Some(v) = a.batch_size {
        train.batch_size = v;
    }
    if let Some(v) = a.step_size {
        train.step_size = v;
    }
}

fn candidates(marginals: &[MarginalPrediction], k: usize) -> Result<Vec<CandidateList>> {
    use rayon::prelude::*;
    marginals.par_iter().map(|m| enumerate_topk(m, k)).collect()
}

fn scorer(run: &mut Run<'_>, args: &ScorerArgs, space: &LabelSpace) -> Result<Box<dyn SetScorer + Send>> {
    if let Some(path) = &args.checkpoint {
        let path = run.input(path);
        return Ok(match load_checkpoint(&path, space)? {
            Checkpoint::Made(m) => Box::new(m),
            Checkpoint::MaskSa(m) => Box::new(m),
        });
    }
    let path = run.input(args.joint.as_ref().expect("clap requires one scorer source"));
    Ok(Box::new(TableScorer::from_probabilities(space.len(), &read_joint_table(&path, space.len())?)?))
}

/// Gold sets for every marginals instance, in marginals order.
fn gold_for(marginals: &[MarginalPrediction], gold: &BTreeMap<String, LabelSet>) -> Result<Vec<LabelSet>> {
    let preds: BTreeMap<String, LabelSet> = marginals
        .iter()
        .map(|m| (m.instance_id.clone(), LabelSet::empty()))
        .collect();
    align_by_id(&preds, gold)?;
    Ok(marginals.iter().map(|m| gold[&m.instance_id].clone()).collect())
}

fn cmd_synth(run: &mut Run<'_>, a: &SynthArgs) -> Result<serde_json::Value> {
    let mut s = run.file.synth;
    macro_rules! flag {
        ($($f:ident),*) => { $( if let Some(v) = a.$f { s.$f = v; } )* };
    }
    flag!(labels, components, hi, lo, noise, train, val, test);
    let exact_joint = if a.exact_joint {
        true
    } else if a.no_exact_joint {
        false
    } else {
        s.labels <= data::synthetic::MAX_EXACT_LABELS
    };
    let spec = SyntheticSpec {
        num_labels: s.labels,
        components: block_mixture(s.labels, s.components, s.hi, s.lo, run.seed)?,
        noise: s.noise,
        seed: run.seed,
        train: s.train,
        val: s.val,
        test: s.test,
        exact_joint,
    };
    let data = gen_synthetic(&spec)?;
    for name in ["vocab.txt", "train.gold.tsv", "train.marginals.tsv", "val.gold.tsv", "val.marginals.tsv", "test.gold.tsv", "test.marginals.tsv", "joint.tsv"] {
        if name != "joint.tsv" || exact_joint {
            run.out.path(name);
        }
    }
    data.write(&run.out.dir)?;
    run.out.write_text("spec.json", &(serde_json::to_string_pretty(&spec).expect("spec serialises") + "\n"))?;
    Ok(serde_json::json!({ "synth": s, "exact_joint": exact_joint }))
}

fn loss_curve(report: &TrainReport) -> String {
    let mut text = String::from("epoch\tloss\n");
    for (e, l) in report.epoch_losses.iter().enumerate() {
        text.push_str(&format!("{}\t{l:.16e}\n", e + 1));
    }
    text
}

fn cmd_train(run: &mut Run<'_>, a: &TrainArgs) -> Result<serde_json::Value> {
    let space = run.vocab()?;
    let gold_path = run.input(&a.gold);
    let corpus: Vec<LabelSet> = read_gold(&gold_path, &space)?.into_values().collect();
    if corpus.is_empty() {
        return Err(Error::input(format!("{} contains no label sets", gold_path.display())));
    }
    match a.kind {
        ModelKind::Made => {
            let mut c = run.file.made;
            c.seed = run.seed;
            train_overrides(&mut c.train, a);
            if let Some(v) = a.hidden {
                c.hidden = v;
            }
            if let Some(v) = a.orderings {
                c.n_orderings = v;
            }
            let (model, report) = train_made(&space, &corpus, c)?;
            save_made(&model, &run.out.path("made.ckpt"))?;
            run.out.write_text("loss_curve.tsv", &loss_curve(&report))?;
            Ok(serde_json::json!({ "kind": a.kind, "made": c, "steps": report.steps }))
        }
        ModelKind::Masksa => {
            let mut c = run.file.masksa;
            c.seed = run.seed;
            train_overrides(&mut c.train, a);
            if let Some(v) = a.width {
                c.width = v;
            }
            if let Some(v) = a.layers {
                c.layers = v;
            }
            if let Some(v) = a.heads {
                c.heads = v;
            }
            if let Some(v) = a.ffn_width {
                c.ffn_width = v;
            }
            let (model, report) = train_masksa(&space, &corpus, c)?;
            save_masksa(&model, &run.out.path("masksa.ckpt"))?;
            run.out.write_text("loss_curve.tsv", &loss_curve(&report))?;
            Ok(serde_json::json!({ "kind": a.kind, "masksa": c, "steps": report.steps }))
        }
    }
}

fn cmd_rerank(run: &mut Run<'_>, a: &RerankArgs) -> Result<serde_json::Value> {
    let space = run.vocab()?;
    let mut c = run.file.rerank;
    if let Some(v) = a.k {
        c.k = v;
    }
    if let Some(v) = a.alpha {
        c.alpha = v;
    }
    if let Some(v) = a.beta {
        c.beta = v;
    }
    c.validate()?;
    let marginals_path = run.input(&a.marginals);
    let marginals = read_marginals(&marginals_path, &space)?;
    let scorer = scorer(run, &a.scorer, &space)?;
    let lists = candidates(&marginals, c.k)?;
    let raw = raw_scores(&lists, &scorer)?;
    let reranked: Vec<_> = lists
        .iter()
        .zip(&raw)
        .map(|(l, r)| rescore_with_raw(l, r, c.alpha, c.beta))
        .collect();
    write_reranked(&run.out.path("reranked.tsv"), &space, &reranked)?;
    let tops: Vec<LabelSet> = reranked.iter().map(|l| l.top().cloned().unwrap_or_default()).collect();
    write_gold(
        &run.out.path("predictions.tsv"),
        &space,
        reranked.iter().map(|l| l.instance_id.as_str()).zip(&tops),
    )?;
    let base: Vec<LabelSet> = marginals.iter().map(MarginalPrediction::map_set).collect();
    write_gold(
        &run.out.path("base_predictions.tsv"),
        &space,
        marginals.iter().map(|m| m.instance_id.as_str()).zip(&base),
    )?;
    Ok(serde_json::json!({ "rerank": c }))
}

#[derive(Serialize)]
struct RankRecord {
    avg_best_rank_before: f64,
    avg_best_rank_after: f64,
}

fn cmd_eval(run: &mut Run<'_>, a: &EvalArgs) -> Result<serde_json::Value> {
    let space = run.vocab()?;
    let gold_path = run.input(&a.gold);
    let gold = read_gold(&gold_path, &space)?;
    let mut summary = serde_json::Map::new();
    let mut table = String::new();

    let mut report: Option<EvalReport> = None;
    if let Some(p) = &a.predictions {
        let p = run.input(p);
        let preds = read_gold(&p, &space)?;
        let (_, pv, gv) = align_by_id(&preds, &gold)?;
        let mut r = micro_macro_f1(&pv, &gv, space.len())?;
        if let Some(t) = &a.train_gold {
            let t = run.input(t);
            let train: Vec<LabelSet> = read_gold(&t, &space)?.into_values().collect();
            r.buckets = Some(bucketed_f1(&pv, &gv, &label_frequencies(&train, space.len()), a.buckets)?);
        }
        table.push_str(&r.to_table());
        report = Some(r);
    }
    if let Some(c) = &a.candidates {
        let c = run.input(c);
        let lists = read_candidates(&c, &space)?;
        let ids: BTreeMap<String, LabelSet> = lists
            .iter()
            .map(|l| (l.instance_id.clone(), LabelSet::empty()))
            .collect();
        align_by_id(&ids, &gold)?;
        let ranked: Vec<Vec<LabelSet>> = lists
            .iter()
            .map(|l| l.candidates.iter().map(|c| c.set.clone()).collect())
            .collect();
        let gv: Vec<LabelSet> = lists.iter().map(|l| gold[&l.instance_id].clone()).collect();
        let after = avg_best_rank(&ranked, &gv)?;
        // Generation order is recoverable by sorting on the base score.
        let before_lists: Vec<Vec<LabelSet>> = lists
            .iter()
            .map(|l| {
                let mut cs = l.candidates.clone();
                cs.sort_by(|x, y| y.base_logprob.total_cmp(&x.base_logprob));
                cs.into_iter().map(|c| c.set).collect()
            })
            .collect();
        let before = avg_best_rank(&before_lists, &gv)?;
        table.push_str(&format!("{:<16} {:>10}\n", "", "avg_rank"));
        table.push_str(&format!("{:<16} {:>10.2}\n", "base", before));
        table.push_str(&format!("{:<16} {:>10.2}\n", "reranked", after));
        summary.insert("avg_best_rank_before".into(), before.into());
        summary.insert("avg_best_rank_after".into(), after.into());
        run.out.write_jsonl(
            "ranks.jsonl",
            &[RankRecord {
                avg_best_rank_before: before,
                avg_best_rank_after: after,
            }],
        )?;
    }
    if let Some(r) = &report {
        run.out.write_jsonl("labels.jsonl", &r.per_label)?;
        if let Some(b) = &r.buckets {
            run.out.write_jsonl("buckets.jsonl", b)?;
        }
        let mut overall = to_json(r);
        if let Some(o) = overall.as_object_mut() {
            o.remove("per_label");
            o.remove("buckets");
        }
        run.out.write_jsonl("report.jsonl", &[overall])?;
        summary.insert("micro_f1".into(), r.micro_f1.into());
        summary.insert("macro_f1".into(), r.macro_f1.into());
    }
    run.out.write_text("report.txt", &table)?;
    print!("{table}");
    Ok(serde_json::json!({ "buckets": a.buckets, "summary": summary }))
}

fn cmd_sweep(run: &mut Run<'_>, a: &SweepArgs) -> Result<serde_json::Value> {
    let space = run.vocab()?;
    let mut c = run.file.rerank;
    if let Some(v) = a.k {
        c.k = v;
    }
    c.validate()?;
    let gold_path = run.input(&a.gold);
    let gold = read_gold(&gold_path, &space)?;
    let marginals_path = run.input(&a.marginals);
    let marginals = read_marginals(&marginals_path, &space)?;
    let gv = gold_for(&marginals, &gold)?;
    let scorer = scorer(run, &a.scorer, &space)?;
    let lists = candidates(&marginals, c.k)?;
    let raw = raw_scores(&lists, &scorer)?;

    let alphas = a.grid_alpha.clone().unwrap_or_else(|| DEFAULT_ALPHA_GRID.to_vec());
    let betas = a.grid_beta.clone().unwrap_or_else(|| DEFAULT_BETA_GRID.to_vec());
    let grid = grid_search_with_raw(&lists, &raw, &gv, space.len(), &alphas, &betas, a.objective)?;

    let mut table = format!("{:>8} {:>8} {:>10} {:>10}\n", "alpha", "beta", "micro_f1", "macro_f1");
    for cell in &grid.cells {
        let mark = if *cell == grid.chosen { " *" } else { "" };
        table.push_str(&format!(
            "{:>8} {:>8} {:>10.4} {:>10.4}{mark}\n",
            cell.alpha, cell.beta, cell.micro_f1, cell.macro_f1
        ));
    }
    run.out.write_jsonl("grid.jsonl", &grid.cells)?;
    run.out.write_jsonl("chosen.jsonl", &[grid.chosen])?;

    let (alpha, beta) = (a.alpha.unwrap_or(grid.chosen.alpha), a.beta.unwrap_or(grid.chosen.beta));
    if let Some(spec) = &a.k_curve {
        let ks = parse_k_values(spec)?;
        let shortest = lists.iter().map(CandidateList::len).min().unwrap_or(0);
        if let Some(&too_big) = ks.iter().find(|&&k| k > shortest) {
            return Err(Error::config(format!("k = {too_big} exceeds the {shortest} candidates available")));
        }
        let curve = sweep_k(&lists, &raw, &gv, space.len(), alpha, beta, &ks)?;
        table.push_str(&format!("\n{:>6} {:>10} {:>10} {:>10}\n", "k", "micro_f1", "macro_f1", "oracle"));
        for p in &curve {
            table.push_str(&format!(
                "{:>6} {:>10.4} {:>10.4} {:>10.4}\n",
                p.k, p.micro_f1, p.macro_f1, p.oracle_instance_f1
            ));
        }
        run.out.write_jsonl("curve.jsonl", &curve)?;
    }
    run.out.write_text("sweep.txt", &table)?;
    print!("{table}");
    Ok(serde_json::json!({
        "rerank": c,
        "grid_alpha": alphas,
        "grid_beta": betas,
        "objective": a.objective,
        "curve_alpha": alpha,
        "curve_beta": beta,
        "k_curve": a.k_curve,
    }))
}

fn cmd_diff(run: &mut Run<'_>, a: &DiffArgs) -> Result<serde_json::Value> {
    let space = run.vocab()?;
    let base_path = run.input(&a.base);
    let base = read_gold(&base_path, &space)?;
    let reranked_path = run.input(&a.reranked);
    let reranked = read_gold(&reranked_path, &space)?;
    let (ids, rv, bv) = align_by_id(&reranked, &base)?;
    let gold = match &a.gold {
        Some(g) => {
            let g = run.input(g);
            let gold = read_gold(&g, &space)?;
            Some(align_by_id(&base, &gold)?.2)
        }
        None => None,
    };
    let mut text = String::from("instance_id\tbase\treranked\tadded\tremoved\tverdict\n");
    let (mut changed, mut fixes, mut regressions) = (0usize, 0usize, 0usize);
    for (i, id) in ids.iter().enumerate() {
        if rv[i] == bv[i] {
            continue;
        }
        changed += 1;
        let (added, removed) = diff_prediction(&bv[i], &rv[i]);
        let verdict = match &gold {
            Some(g) => {
                let (b, r) = (crate::eval::instance_f1(&bv[i], &g[i]), crate::eval::instance_f1(&rv[i], &g[i]));
                if r > b {
                    fixes += 1;
                    "better"
                } else if r < b {
                    regressions += 1;
                    "worse"
                } else {
                    "same"
                }
            }
            None => "NA",
        };
        text.push_str(&format!(
            "{id}\t{}\t{}\t{}\t{}\t{verdict}\n",
            space.format_set(&bv[i]),
            space.format_set(&rv[i]),
            space.format_set(&added),
            space.format_set(&removed)
        ));
    }
    run.out.write_text("diff.tsv", &text)?;
    println!("{changed} of {} predictions changed", ids.len());
    if gold.is_some() {
        println!("{fixes} improved, {regressions} worsened");
    }
    Ok(serde_json::json!({ "changed": changed, "improved": fixes, "worsened": regressions }))
}

fn dispatch(run: &mut Run<'_>) -> Result<(&'static str, serde_json::Value)> {
    match &run.cli.command {
        Command::Synth(a) => Ok(("synth", cmd_synth(run, a)?)),
        Command::Train(a) => Ok(("train", cmd_train(run, a)?)),
        Command::Rerank(a) => Ok(("rerank", cmd_rerank(run, a)?)),
        Command::Eval(a) => Ok(("eval", cmd_eval(run, a)?)),
        Command::Sweep(a) => Ok(("sweep", cmd_sweep(run, a)?)),
        Command::Diff(a) => Ok(("diff", cmd_diff(run, a)?)),
    }
}

/// Runs one parsed command; outputs are removed again if anything fails.
pub fn run(cli: &Cli) -> Result<()> {
    let started = Instant::now();
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let seed = cli.seed.or(file.seed).unwrap_or(0);
    let mut run = Run {
        cli,
        file,
        seed,
        inputs: Vec::new(),
        out: Outputs::new(&cli.out_dir)?,
    };
    if let Some(p) = &cli.config {
        run.input(p);
    }
    let result = (|| {
        let (name, config) = dispatch(&mut run)?;
        run.manifest(name, config, started)
    })();
    if result.is_err() {
        run.out.remove_all();
    }
    result
}

/// Entry point for the binary: parses arguments, applies `--threads`, and
/// maps errors to a non-zero exit code.
pub fn main() -> std::process::ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} threads: {e}");
            return std::process::ExitCode::FAILURE;
        }
    }
    match run(&cli) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            std::process::ExitCode::FAILURE
        }
    }
}
