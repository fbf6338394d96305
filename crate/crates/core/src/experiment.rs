//! Run configuration and the end-to-end procedures behind the CLI verbs:
//! data preparation, training on a split, holdout / k-fold evaluation,
//! early-detection sweeps and attack cost curves.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attacks::{
    attack_cost_curve, median_profile, AttackConfig, AttackContext, AttackError, AttackMode,
    CostCurve,
};
use crate::data::{
    compute_metrics, early_cutoff, filter_connected_users, generate_synthetic, kfold_split,
    load_dataset, split, DataError, Dataset, Label, MetricsReport, Provenance, SynthConfig,
    SynthTruth,
};
use crate::encoders::{load_embeddings, tokenize, EncoderError};
use crate::model::{
    mix_seed,
    evaluate, train, Featurizer, Model, ModelConfig, ModelError, StopReason, TrainConfig,
    TrainOutcome,
};
use crate::numerics::OptimizerState;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Attack(#[from] AttackError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Instances JSONL; when absent a synthetic set is generated.
    pub instances: Option<PathBuf>,
    /// Users JSONL, required with `instances`.
    pub users: Option<PathBuf>,
    pub provenance: Provenance,
    pub synthetic: SynthConfig,
    /// Keep only users who interact with at least two source tweets.
    pub filter_users: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            instances: None,
            users: None,
            provenance: Provenance::Synthetic,
            synthetic: SynthConfig::default(),
            filter_users: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    /// Number of cross-validation folds; below 2 means a single holdout split.
    pub folds: usize,
    pub holdout_ratio: f64,
    /// Share of each training portion held out for early stopping.
    pub validation_fraction: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            holdout_ratio: 0.8,
            validation_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EarlyConfig {
    /// Deadlines in minutes; an uncut evaluation is always added at the end.
    pub deadlines_min: Vec<f64>,
}

impl Default for EarlyConfig {
    fn default() -> Self {
        Self {
            deadlines_min: vec![0.0, 15.0, 30.0, 60.0, 120.0, 240.0],
        }
    }
}

/// Every knob of a run. Serialized into each artifact it produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub protocol: ProtocolConfig,
    pub early: EarlyConfig,
    pub attack: AttackConfig,
    /// Optional GloVe-format word vectors matching `model.embed_dim`.
    pub embeddings: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            data: DataConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            protocol: ProtocolConfig::default(),
            early: EarlyConfig::default(),
            attack: AttackConfig::default(),
            embeddings: None,
        }
    }
}

impl RunConfig {
    /// Parses JSON, reporting the path of the offending field on error.
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            ExperimentError::Config(format!("at `{}`: {}", e.path(), e.inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let compact = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(compact.as_bytes()))
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.data.instances.is_some() != self.data.users.is_some() {
            return bad("data.instances and data.users must be given together".into());
        }
        if !(0.0..1.0).contains(&self.protocol.validation_fraction) {
            return bad("protocol.validation_fraction must lie in [0, 1)".into());
        }
        if !(self.protocol.holdout_ratio > 0.0 && self.protocol.holdout_ratio < 1.0) {
            return bad("protocol.holdout_ratio must lie in (0, 1)".into());
        }
        if self.train.batch_size == 0 || self.train.eval_batch_size == 0 {
            return bad("train batch sizes must be positive".into());
        }
        if self.early.deadlines_min.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return bad("early.deadlines_min must be finite and non-negative".into());
        }
        if self.attack.budgets.windows(2).any(|w| w[0] > w[1]) {
            return bad("attack.budgets must be sorted ascending".into());
        }
        if !(self.attack.edge_cost > 0.0 && self.attack.comment_cost > 0.0) {
            return bad("attack unit costs must be positive".into());
        }
        self.model.validate()?;
        Ok(())
    }
}

/// A result together with the configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub kind: String,
    pub config_hash: String,
    pub seed: u64,
    pub config: RunConfig,
    pub result: T,
}

impl<T> Artifact<T> {
    pub fn new(kind: &str, config: &RunConfig, result: T) -> Self {
        Self {
            kind: kind.to_string(),
            config_hash: config.hash(),
            seed: config.seed,
            config: config.clone(),
            result,
        }
    }
}

/// Loads or generates the dataset and applies the user filter.
pub fn prepare_dataset(cfg: &RunConfig) -> Result<(Dataset, Option<SynthTruth>), ExperimentError> {
    let (ds, truth) = match (&cfg.data.instances, &cfg.data.users) {
        (Some(i), Some(u)) => (load_dataset(i, u, cfg.data.provenance)?, None),
        _ => {
            let (ds, truth) = generate_synthetic(&cfg.data.synthetic, mix_seed(&[cfg.seed, 0]))?;
            (ds, Some(truth))
        }
    };
    let ds = if cfg.data.filter_users {
        filter_connected_users(&ds)
    } else {
        ds
    };
    if ds.is_empty() {
        return Err(DataError::EmptySplit("dataset".into()).into());
    }
    Ok((ds, truth))
}

/// `(train, test)` index pairs for the configured protocol.
pub fn protocol_splits(dataset: &Dataset, cfg: &RunConfig) -> Vec<(Vec<usize>, Vec<usize>)> {
    let labels = dataset.labels();
    let seed = mix_seed(&[cfg.seed, 1]);
    if cfg.protocol.folds >= 2 {
        let folds = kfold_split(&labels, cfg.protocol.folds, seed);
        (0..folds.folds.len()).map(|i| folds.train_test(i)).collect()
    } else {
        vec![split(&labels, cfg.protocol.holdout_ratio, seed)]
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub featurizer: Featurizer,
    pub model: Model,
    pub optimizer: OptimizerState,
    pub outcome: TrainOutcome,
    pub fit_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
}

/// Carves a stratified validation set out of `train_idx`, fits the
/// featurizer on the rest and trains.
pub fn train_split(dataset: &Dataset, train_idx: &[usize], cfg: &RunConfig, seed: u64) -> Result<Trained, ExperimentError> {
    if train_idx.is_empty() {
        return Err(DataError::EmptySplit("training split".into()).into());
    }
    let (fit_idx, val_idx) = if cfg.protocol.validation_fraction > 0.0 {
        let labels: Vec<Label> = train_idx.iter().map(|&i| dataset.instances[i].label).collect();
        let (a, b) = split(&labels, 1.0 - cfg.protocol.validation_fraction, mix_seed(&[seed, 2]));
        (
            a.into_iter().map(|k| train_idx[k]).collect::<Vec<_>>(),
            b.into_iter().map(|k| train_idx[k]).collect::<Vec<_>>(),
        )
    } else {
        (train_idx.to_vec(), Vec::new())
    };
    let featurizer = Featurizer::fit(dataset, &fit_idx, cfg.model.max_len, cfg.model.vocab_min_count)?;
    let data = featurizer.encode(dataset)?;
    let mut model = Model::new(cfg.model.clone(), featurizer.vocab.len(), mix_seed(&[seed, 3]))?;
    if let Some(path) = &cfg.embeddings {
        let table = load_embeddings(path, &featurizer.vocab, cfg.model.embed_dim)?;
        model.set_embeddings(table.matrix)?;
    }
    let mut optimizer = OptimizerState::for_params(model.params.tensors());
    let outcome = train(&mut model, &mut optimizer, &data, &fit_idx, &val_idx, &cfg.train, mix_seed(&[seed, 4]))?;
    Ok(Trained {
        featurizer,
        model,
        optimizer,
        outcome,
        fit_indices: fit_idx,
        val_indices: val_idx,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    /// Test instances with no users left in the bipartite graph.
    pub flagged_test: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub stop: StopReason,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return Self { mean: 0.0, std: 0.0 };
        }
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub folds: Vec<FoldReport>,
    pub accuracy: Summary,
    /// Per-class F1 summaries in N, F, T, U order.
    pub f1: Vec<Summary>,
}

impl EvalReport {
    pub fn to_table(&self) -> String {
        use std::fmt::Write as _;
        let mut s = format!(
            "{:>5} {:>9} {:>7} {:>7} {:>7} {:>7} {:>5} {:>8}\n",
            "fold", "accuracy", "N(F1)", "F(F1)", "T(F1)", "U(F1)", "n", "flagged"
        );
        for f in &self.folds {
            let m = &f.metrics;
            let _ = writeln!(
                s,
                "{:>5} {:>9.3} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>5} {:>8}",
                f.fold, m.accuracy, m.f1[0], m.f1[1], m.f1[2], m.f1[3], m.n_eval, f.flagged_test
            );
        }
        let _ = writeln!(
            s,
            "{:>5} {:>9} {:>7} {:>7} {:>7} {:>7}",
            "mean",
            format!("{:.3}", self.accuracy.mean),
            format!("{:.3}", self.f1[0].mean),
            format!("{:.3}", self.f1[1].mean),
            format!("{:.3}", self.f1[2].mean),
            format!("{:.3}", self.f1[3].mean)
        );
        let _ = writeln!(
            s,
            "{:>5} {:>9} {:>7} {:>7} {:>7} {:>7}",
            "std",
            format!("{:.3}", self.accuracy.std),
            format!("{:.3}", self.f1[0].std),
            format!("{:.3}", self.f1[1].std),
            format!("{:.3}", self.f1[2].std),
            format!("{:.3}", self.f1[3].std)
        );
        s
    }
}

/// Metrics of a trained model on `indices` of `dataset`.
pub fn evaluate_model(
    dataset: &Dataset,
    model: &Model,
    featurizer: &Featurizer,
    indices: &[usize],
    chunk: usize,
) -> Result<MetricsReport, ExperimentError> {
    let data = featurizer.encode(dataset)?;
    let ev = evaluate(model, &data, indices, chunk)?;
    Ok(compute_metrics(&ev.predictions, &data.labels(indices))?)
}

fn fold_report(
    fold: usize,
    trained: &Trained,
    eval_set: &Dataset,
    train_size: usize,
    test: &[usize],
    chunk: usize,
) -> Result<FoldReport, ExperimentError> {
    let data = trained.featurizer.encode(eval_set)?;
    let ev = evaluate(&trained.model, &data, test, chunk)?;
    let labels = data.labels(test);
    Ok(FoldReport {
        fold,
        train_size,
        test_size: test.len(),
        flagged_test: test.iter().filter(|&&i| data.instances[i].graph_tweet.is_none()).count(),
        epochs_run: trained.outcome.history.len(),
        best_epoch: trained.outcome.best_epoch,
        stop: trained.outcome.stop,
        metrics: compute_metrics(&ev.predictions, &labels)?,
    })
}

fn summarize(folds: Vec<FoldReport>) -> EvalReport {
    let acc: Vec<f64> = folds.iter().map(|f| f.metrics.accuracy).collect();
    let f1 = (0..4)
        .map(|c| Summary::of(&folds.iter().map(|f| f.metrics.f1[c]).collect::<Vec<_>>()))
        .collect();
    EvalReport {
        accuracy: Summary::of(&acc),
        f1,
        folds,
    }
}

/// Trains and tests on every split of the configured protocol.
pub fn run_eval(dataset: &Dataset, cfg: &RunConfig) -> Result<EvalReport, ExperimentError> {
    let mut folds = Vec::new();
    for (k, (train_idx, test)) in protocol_splits(dataset, cfg).into_iter().enumerate() {
        let trained = train_split(dataset, &train_idx, cfg, mix_seed(&[cfg.seed, 10, k as u64]))?;
        folds.push(fold_report(k, &trained, dataset, train_idx.len(), &test, cfg.train.eval_batch_size)?);
    }
    Ok(summarize(folds))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyPoint {
    /// `None` is the uncut evaluation.
    pub deadline_min: Option<f64>,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyReport {
    pub points: Vec<EarlyPoint>,
}

impl EarlyReport {
    pub fn to_table(&self) -> String {
        use std::fmt::Write as _;
        let mut s = format!("{:>10} {:>9} {:>7}\n", "deadline", "accuracy", "std");
        for p in &self.points {
            let d = p.deadline_min.map_or("none".to_string(), |d| format!("{d:.0}m"));
            let _ = writeln!(s, "{:>10} {:>9.3} {:>7.3}", d, p.report.accuracy.mean, p.report.accuracy.std);
        }
        s
    }
}

/// Trains each split on complete data, then evaluates with the test
/// instances cut at every deadline (training instances stay complete).
pub fn run_early(dataset: &Dataset, cfg: &RunConfig) -> Result<EarlyReport, ExperimentError> {
    let mut deadlines: Vec<Option<f64>> = cfg.early.deadlines_min.iter().copied().map(Some).collect();
    deadlines.push(None);
    let mut per_deadline: Vec<Vec<FoldReport>> = vec![Vec::new(); deadlines.len()];
    for (k, (train_idx, test)) in protocol_splits(dataset, cfg).into_iter().enumerate() {
        let trained = train_split(dataset, &train_idx, cfg, mix_seed(&[cfg.seed, 10, k as u64]))?;
        for (d, deadline) in deadlines.iter().enumerate() {
            let eval_set = match deadline {
                Some(minutes) => {
                    let mut cut = dataset.clone();
                    let cut_test = early_cutoff(&dataset.subset(&test), *minutes);
                    for (slot, inst) in test.iter().zip(cut_test.instances) {
                        cut.instances[*slot] = inst;
                    }
                    cut
                }
                None => dataset.clone(),
            };
            per_deadline[d].push(fold_report(k, &trained, &eval_set, train_idx.len(), &test, cfg.train.eval_batch_size)?);
        }
    }
    Ok(EarlyReport {
        points: deadlines
            .into_iter()
            .zip(per_deadline)
            .map(|(deadline_min, folds)| EarlyPoint {
                deadline_min,
                report: summarize(folds),
            })
            .collect(),
    })
}

/// Keyword-style reply templates taken from the most frequent tokens of
/// each class's training replies.
pub fn templates_from_training(dataset: &Dataset, train_idx: &[usize], per_class: usize, len: usize) -> Vec<String> {
    let mut out = Vec::new();
    for label in Label::ALL {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for &i in train_idx {
            let inst = &dataset.instances[i];
            if inst.label != label {
                continue;
            }
            for c in &inst.comments {
                for t in tokenize(&c.text) {
                    *counts.entry(t).or_default() += 1;
                }
            }
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let words: Vec<String> = ranked.into_iter().map(|(w, _)| w).take(per_class * len).collect();
        if words.is_empty() {
            continue;
        }
        for j in 0..per_class {
            let t: Vec<&str> = (0..len).map(|k| words[(j * len + k) % words.len()].as_str()).collect();
            out.push(t.join(" "));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDominance {
    /// Targets flipped by both single-mode attacks.
    pub doubly_successful: usize,
    /// Of those, targets where the joint attack cost no more than the
    /// cheaper single mode.
    pub joint_not_worse: usize,
    /// Targets where joint cost more, with `(joint, graph, comment)` costs.
    pub violations: Vec<(String, Option<f64>, f64, f64)>,
}

impl JointDominance {
    pub fn rate(&self) -> Option<f64> {
        (self.doubly_successful > 0).then(|| self.joint_not_worse as f64 / self.doubly_successful as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub targets: Vec<String>,
    pub curves: Vec<CostCurve>,
    pub joint_dominance: JointDominance,
}

impl AttackReport {
    pub fn to_table(&self) -> String {
        let mut s = format!("{} targets\n", self.targets.len());
        for c in &self.curves {
            s.push_str(&c.to_table());
        }
        if let Some(rate) = self.joint_dominance.rate() {
            s.push_str(&format!(
                "joint <= min(single) on {}/{} doubly successful targets ({rate:.3})\n",
                self.joint_dominance.joint_not_worse, self.joint_dominance.doubly_successful
            ));
        }
        s
    }
}

pub fn joint_dominance(curves: &[CostCurve]) -> JointDominance {
    let find = |m: AttackMode| curves.iter().find(|c| c.mode == m);
    let mut out = JointDominance {
        doubly_successful: 0,
        joint_not_worse: 0,
        violations: Vec::new(),
    };
    let (Some(g), Some(c), Some(j)) = (find(AttackMode::Graph), find(AttackMode::Comment), find(AttackMode::Joint)) else {
        return out;
    };
    for ((rg, rc), rj) in g.results.iter().zip(&c.results).zip(&j.results) {
        let (Some(cg), Some(cc)) = (rg.cost_to_flip(), rc.cost_to_flip()) else {
            continue;
        };
        out.doubly_successful += 1;
        match rj.cost_to_flip() {
            Some(cj) if cj <= cg.min(cc) + 1e-12 => out.joint_not_worse += 1,
            other => out.violations.push((rj.target.clone(), other, cg, cc)),
        }
    }
    out
}

/// Trains on the first split, then attacks every correctly classified
/// test instance in each mode.
pub fn run_attacks(dataset: &Dataset, truth: Option<&SynthTruth>, cfg: &RunConfig) -> Result<AttackReport, ExperimentError> {
    let (train_idx, test) = protocol_splits(dataset, cfg).swap_remove(0);
    let trained = train_split(dataset, &train_idx, cfg, mix_seed(&[cfg.seed, 10, 0]))?;
    attack_trained(dataset, truth, cfg, &trained.model, &trained.featurizer, &train_idx, &test)
}

/// Attacks the correctly classified instances of `test` with a trained
/// model; `train_idx` supplies the fake-account profile and, without
/// synthetic ground truth, the reply templates.
pub fn attack_trained(
    dataset: &Dataset,
    truth: Option<&SynthTruth>,
    cfg: &RunConfig,
    model: &Model,
    featurizer: &Featurizer,
    train_idx: &[usize],
    test: &[usize],
) -> Result<AttackReport, ExperimentError> {
    let data = featurizer.encode(dataset)?;
    let ev = evaluate(model, &data, test, cfg.train.eval_batch_size)?;
    let mut targets: Vec<String> = test
        .iter()
        .zip(&ev.predictions)
        .filter(|(&i, &p)| data.instances[i].label == p)
        .map(|(&i, _)| data.instances[i].tweet_id.clone())
        .collect();
    if let Some(n) = cfg.attack.max_targets {
        targets.truncate(n);
    }
    let templates = match truth {
        Some(t) => t
            .template_bank(cfg.attack.templates_per_class, cfg.attack.template_len)
            .into_iter()
            .map(|(_, s)| s)
            .collect(),
        None => templates_from_training(dataset, train_idx, cfg.attack.templates_per_class, cfg.attack.template_len),
    };
    let fake = median_profile(dataset, train_idx);
    let ctx = AttackContext::new(model, featurizer, &data, &fake, &templates, cfg.attack.clone())?;
    let curves = AttackMode::ALL
        .iter()
        .map(|&m| attack_cost_curve(&ctx, &targets, m, &cfg.attack.budgets))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AttackReport {
        joint_dominance: joint_dominance(&curves),
        targets,
        curves,
    })
}
