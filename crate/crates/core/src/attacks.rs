//! Greedy white-box attacks that try to flip a prediction by attaching
//! accounts to the target tweet (graph attack), posting replies under it
//! (comment attack), or both (joint attack).

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::encoders::{extract_user_features, EncoderError, TokenSequence, UserProfile};
use crate::model::{Encoded, Featurizer, Mode, Model, ModelError};
use crate::numerics::argmax;

#[derive(Debug, thiserror::Error)]
pub enum AttackError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error("unknown target tweet {0}")]
    UnknownTarget(String),
    #[error("comment attacks need a nonempty template bank")]
    EmptyTemplates,
    #[error("budgets must be sorted ascending")]
    UnsortedBudgets,
    #[error("success rate dropped from {from} to {to} between budgets {lo} and {hi}")]
    NonMonotone { lo: f64, hi: f64, from: f64, to: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMode {
    Graph,
    Comment,
    Joint,
}

impl AttackMode {
    pub const ALL: [AttackMode; 3] = [AttackMode::Graph, AttackMode::Comment, AttackMode::Joint];

    pub fn graph(self) -> bool {
        self != AttackMode::Comment
    }

    pub fn comment(self) -> bool {
        self != AttackMode::Graph
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PerturbationKind {
    AddEdge { user_id: String, tweet_id: String, fresh: bool },
    /// `parent` indexes the current tree of the target instance.
    AddComment { parent: usize, template: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    #[serde(flatten)]
    pub kind: PerturbationKind,
    pub unit_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    /// Fresh accounts the attacker controls.
    pub pool_size: usize,
    /// Cap on existing accounts (nearest first) offered as edge candidates.
    pub max_existing_users: usize,
    /// Existing accounts within this many hops of the target tweet are
    /// eligible to attach to it.
    pub existing_user_hops: usize,
    pub edge_cost: f64,
    pub comment_cost: f64,
    pub templates_per_class: usize,
    pub template_len: usize,
    pub budgets: Vec<f64>,
    /// Limit on attacked instances per run; `None` attacks every eligible one.
    pub max_targets: Option<usize>,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            pool_size: 20,
            max_existing_users: 20,
            existing_user_hops: 3,
            edge_cost: 1.0,
            comment_cost: 1.0,
            templates_per_class: 4,
            template_len: 6,
            budgets: vec![0.0, 1.0, 2.0, 4.0, 8.0],
            max_targets: None,
        }
    }
}

/// Median of each profile field over the given instances' users.
pub fn median_profile(dataset: &Dataset, instances: &[usize]) -> UserProfile {
    let ids: BTreeSet<&str> = instances
        .iter()
        .flat_map(|&i| dataset.instances[i].users.iter().map(|u| u.id.as_str()))
        .collect();
    let profiles: Vec<&UserProfile> = ids.iter().filter_map(|id| dataset.users.get(*id)).collect();
    fn median(mut v: Vec<f64>) -> f64 {
        if v.is_empty() {
            return 0.0;
        }
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            (v[n / 2 - 1] + v[n / 2]) / 2.0
        }
    }
    let field = |f: &dyn Fn(&UserProfile) -> f64| median(profiles.iter().map(|p| f(p)).collect());
    UserProfile {
        follower_count: field(&|p| p.follower_count as f64).round() as i64,
        friend_count: field(&|p| p.friend_count as f64).round() as i64,
        account_age_days: field(&|p| p.account_age_days),
        tweet_count: field(&|p| p.tweet_count as f64).round() as i64,
        verified: u8::from(field(&|p| f64::from(p.verified)) >= 0.5),
        has_description: u8::from(field(&|p| f64::from(p.has_description)) >= 0.5),
    }
}

/// Read-only attack setting shared by every target.
pub struct AttackContext<'a> {
    pub model: &'a Model,
    pub base: &'a Encoded,
    /// Normalized feature row given to fresh accounts.
    pub fresh_features: Vec<f64>,
    pub templates: Vec<TokenSequence>,
    pub config: AttackConfig,
}

impl<'a> AttackContext<'a> {
    pub fn new(
        model: &'a Model,
        featurizer: &Featurizer,
        base: &'a Encoded,
        fake_profile: &UserProfile,
        templates: &[String],
        config: AttackConfig,
    ) -> Result<Self, AttackError> {
        let fresh_features = featurizer
            .normalizer
            .apply(&extract_user_features(fake_profile)?)
            .to_vec();
        Ok(Self {
            model,
            base,
            fresh_features,
            templates: templates.iter().map(|t| featurizer.text(t)).collect(),
            config,
        })
    }

    fn fresh_id(k: usize) -> String {
        format!("attacker-{k:03}")
    }
}

/// Candidate edges for the target: every fresh account, then existing
/// accounts within `existing_user_hops` of the target (nearest first, then
/// by id), minus accounts already attached.
pub fn enumerate_graph_perturbations(ctx: &AttackContext, state: &Encoded, target: usize) -> Vec<Perturbation> {
    let tweet_id = &state.instances[target].tweet_id;
    let g = &state.graph;
    let edge = |user_id: String, fresh: bool| Perturbation {
        kind: PerturbationKind::AddEdge {
            user_id,
            tweet_id: tweet_id.clone(),
            fresh,
        },
        unit_cost: ctx.config.edge_cost,
    };
    let tweet = state.instances[target].graph_tweet;
    let attached = |uid: &str| match (tweet, g.user_index(uid)) {
        (Some(t), Some(u)) => g.has_edge(u, t),
        _ => false,
    };
    let mut out: Vec<Perturbation> = (0..ctx.config.pool_size)
        .map(AttackContext::fresh_id)
        .filter(|id| !attached(id))
        .map(|id| edge(id, true))
        .collect();

    if let Some(t) = tweet {
        let start = g.tweet_node(t);
        let mut dist = vec![usize::MAX; g.num_nodes()];
        dist[start] = 0;
        let mut queue = VecDeque::from([start]);
        let mut found: Vec<(usize, &str)> = Vec::new();
        while let Some(v) = queue.pop_front() {
            if dist[v] >= ctx.config.existing_user_hops {
                continue;
            }
            for &w in g.neighbors(v) {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                    if w < g.num_users() && dist[w] > 1 {
                        found.push((dist[w], &g.user_ids()[w]));
                    }
                }
            }
        }
        found.sort();
        out.extend(
            found
                .into_iter()
                .filter(|(_, id)| !id.starts_with("attacker-"))
                .take(ctx.config.max_existing_users)
                .map(|(_, id)| edge(id.to_string(), false)),
        );
    }
    out
}

/// Candidate replies: every template under the root and under each
/// depth-1 node, in node order.
pub fn enumerate_comment_perturbations(
    ctx: &AttackContext,
    state: &Encoded,
    target: usize,
) -> Result<Vec<Perturbation>, AttackError> {
    if ctx.templates.is_empty() {
        return Err(AttackError::EmptyTemplates);
    }
    let tree = &state.instances[target].tree;
    let mut parents = vec![tree.root];
    parents.extend(tree.children(tree.root));
    let mut out = Vec::new();
    for parent in parents {
        for template in 0..ctx.templates.len() {
            out.push(Perturbation {
                kind: PerturbationKind::AddComment { parent, template },
                unit_cost: ctx.config.comment_cost,
            });
        }
    }
    Ok(out)
}

fn candidates(ctx: &AttackContext, state: &Encoded, target: usize, mode: AttackMode) -> Result<Vec<Perturbation>, AttackError> {
    let mut out = Vec::new();
    if mode.graph() {
        out.extend(enumerate_graph_perturbations(ctx, state, target));
    }
    if mode.comment() {
        out.extend(enumerate_comment_perturbations(ctx, state, target)?);
    }
    Ok(out)
}

pub fn apply_perturbation(
    ctx: &AttackContext,
    state: &Encoded,
    target: usize,
    p: &Perturbation,
) -> Result<Encoded, AttackError> {
    Ok(match &p.kind {
        PerturbationKind::AddEdge { user_id, tweet_id, .. } => {
            state.with_edge(user_id, tweet_id, Some(&ctx.fresh_features))?
        }
        PerturbationKind::AddComment { parent, template } => {
            state.with_leaf(target, *parent, ctx.templates[*template].clone())?
        }
    })
}

fn probs_of(model: &Model, state: &Encoded, target: usize) -> Result<Vec<f64>, AttackError> {
    Ok(model.forward(state, &[target], Mode::Eval)?.probs.row(0).to_vec())
}

fn true_class_loss(probs: &[f64], label: usize) -> f64 {
    -probs[label].max(f64::MIN_POSITIVE).ln()
}

/// Scores a candidate without materializing a full copy for replies.
fn score(
    ctx: &AttackContext,
    state: &mut Encoded,
    target: usize,
    p: &Perturbation,
) -> Result<Vec<f64>, AttackError> {
    match &p.kind {
        PerturbationKind::AddComment { parent, template } => {
            let tree = &mut state.instances[target].tree;
            let n = tree.len();
            tree.push_leaf(*parent, ctx.templates[*template].clone())
                .map_err(ModelError::from)?;
            let out = probs_of(ctx.model, state, target);
            let tree = &mut state.instances[target].tree;
            tree.nodes.truncate(n);
            tree.parent.truncate(n);
            out
        }
        PerturbationKind::AddEdge { .. } => {
            let next = apply_perturbation(ctx, state, target, p)?;
            probs_of(ctx.model, &next, target)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackStop {
    /// The model already misclassified the target; nothing was attempted.
    AlreadyWrong,
    Flipped,
    BudgetExhausted,
    Stalled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub target: String,
    pub mode: AttackMode,
    pub budget: f64,
    pub succeeded: bool,
    pub steps: Vec<Perturbation>,
    pub total_cost: f64,
    pub probs_before: Vec<f64>,
    pub probs_after: Vec<f64>,
    pub stop: AttackStop,
}

impl AttackResult {
    /// Cost at which the prediction flipped, if it did.
    pub fn cost_to_flip(&self) -> Option<f64> {
        self.succeeded.then_some(self.total_cost)
    }
}

/// Repeatedly applies the affordable candidate with the largest increase of
/// the true-class loss per unit cost (first candidate wins ties) until the
/// prediction leaves the true label, the budget runs out, or no candidate
/// increases the loss.
pub fn greedy_attack(
    ctx: &AttackContext,
    target_id: &str,
    mode: AttackMode,
    budget: f64,
) -> Result<AttackResult, AttackError> {
    let target = ctx
        .base
        .instance_index(target_id)
        .ok_or_else(|| AttackError::UnknownTarget(target_id.to_string()))?;
    let label = ctx.base.instances[target].label;
    let mut state = ctx.base.clone();
    let before = probs_of(ctx.model, &state, target)?;
    let mut current = before.clone();
    let mut steps = Vec::new();
    let mut spent = 0.0;
    let mut stop = if argmax(&before) != label {
        AttackStop::AlreadyWrong
    } else {
        AttackStop::BudgetExhausted
    };

    while stop == AttackStop::BudgetExhausted {
        let remaining = budget - spent;
        let cands: Vec<Perturbation> = candidates(ctx, &state, target, mode)?
            .into_iter()
            .filter(|c| c.unit_cost <= remaining + 1e-12)
            .collect();
        if cands.is_empty() {
            break;
        }
        let base_loss = true_class_loss(&current, label);
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for (k, c) in cands.iter().enumerate() {
            let probs = score(ctx, &mut state, target, c)?;
            let gain = (true_class_loss(&probs, label) - base_loss) / c.unit_cost;
            if best.as_ref().is_none_or(|(g, ..)| gain > *g) {
                best = Some((gain, k, probs));
            }
        }
        let (gain, k, probs) = best.expect("nonempty candidates");
        if gain <= 0.0 {
            stop = AttackStop::Stalled;
            break;
        }
        state = apply_perturbation(ctx, &state, target, &cands[k])?;
        spent += cands[k].unit_cost;
        steps.push(cands[k].clone());
        current = probs;
        if argmax(&current) != label {
            stop = AttackStop::Flipped;
        }
    }

    Ok(AttackResult {
        target: target_id.to_string(),
        mode,
        budget,
        succeeded: stop == AttackStop::Flipped,
        steps,
        total_cost: spent,
        probs_before: before,
        probs_after: current,
        stop,
    })
}

/// Re-applies `steps` to the clean state and returns the final probabilities.
pub fn replay(ctx: &AttackContext, target_id: &str, steps: &[Perturbation]) -> Result<Vec<f64>, AttackError> {
    let target = ctx
        .base
        .instance_index(target_id)
        .ok_or_else(|| AttackError::UnknownTarget(target_id.to_string()))?;
    let mut state = ctx.base.clone();
    for p in steps {
        state = apply_perturbation(ctx, &state, target, p)?;
    }
    probs_of(ctx.model, &state, target)
}

/// Minimum cost to flip over every candidate sequence of at most
/// `max_steps` perturbations (candidates recomputed after each step).
pub fn exhaustive_cost_to_flip(
    ctx: &AttackContext,
    target_id: &str,
    mode: AttackMode,
    max_steps: usize,
) -> Result<Option<f64>, AttackError> {
    let target = ctx
        .base
        .instance_index(target_id)
        .ok_or_else(|| AttackError::UnknownTarget(target_id.to_string()))?;
    let label = ctx.base.instances[target].label;
    fn search(
        ctx: &AttackContext,
        state: &Encoded,
        target: usize,
        label: usize,
        mode: AttackMode,
        depth: usize,
        spent: f64,
        best: &mut Option<f64>,
    ) -> Result<(), AttackError> {
        if argmax(&probs_of(ctx.model, state, target)?) != label {
            if best.is_none_or(|b| spent < b) {
                *best = Some(spent);
            }
            return Ok(());
        }
        if depth == 0 {
            return Ok(());
        }
        for c in candidates(ctx, state, target, mode)? {
            let next = apply_perturbation(ctx, state, target, &c)?;
            search(ctx, &next, target, label, mode, depth - 1, spent + c.unit_cost, best)?;
        }
        Ok(())
    }
    let mut best = None;
    search(ctx, ctx.base, target, label, mode, max_steps, 0.0, &mut best)?;
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostCurvePoint {
    pub budget: f64,
    pub success_rate: f64,
    pub mean_cost_of_successes: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostCurve {
    pub mode: AttackMode,
    pub points: Vec<CostCurvePoint>,
    /// The greedy run at the largest budget for every target.
    pub results: Vec<AttackResult>,
}

/// Success rate and mean cost per budget. Each target is attacked once at
/// the largest budget; with a smaller budget greedy takes the same path
/// until it can no longer afford the next step, so the outcome at budget
/// `b` is "flipped with total cost ≤ b".
pub fn attack_cost_curve(
    ctx: &AttackContext,
    targets: &[String],
    mode: AttackMode,
    budgets: &[f64],
) -> Result<CostCurve, AttackError> {
    if budgets.windows(2).any(|w| w[0] > w[1]) {
        return Err(AttackError::UnsortedBudgets);
    }
    let max_budget = budgets.last().copied().unwrap_or(0.0);
    let results = targets
        .iter()
        .map(|t| greedy_attack(ctx, t, mode, max_budget))
        .collect::<Result<Vec<_>, _>>()?;
    let points: Vec<CostCurvePoint> = budgets
        .iter()
        .map(|&b| {
            let costs: Vec<f64> = results
                .iter()
                .filter_map(AttackResult::cost_to_flip)
                .filter(|&c| c <= b + 1e-12)
                .collect();
            let n = results.len().max(1) as f64;
            CostCurvePoint {
                budget: b,
                success_rate: costs.len() as f64 / n,
                mean_cost_of_successes: (!costs.is_empty())
                    .then(|| costs.iter().sum::<f64>() / costs.len() as f64),
            }
        })
        .collect();
    for w in points.windows(2) {
        if w[1].success_rate < w[0].success_rate {
            return Err(AttackError::NonMonotone {
                lo: w[0].budget,
                hi: w[1].budget,
                from: w[0].success_rate,
                to: w[1].success_rate,
            });
        }
    }
    Ok(CostCurve {
        mode,
        points,
        results,
    })
}

impl CostCurve {
    pub fn to_table(&self) -> String {
        use std::fmt::Write as _;
        let mut s = format!("{:?} attack\n{:>8} {:>9} {:>10}\n", self.mode, "budget", "success", "mean_cost");
        for p in &self.points {
            let cost = p.mean_cost_of_successes.map_or("-".to_string(), |c| format!("{c:.2}"));
            let _ = writeln!(s, "{:>8.1} {:>9.3} {:>10}", p.budget, p.success_rate, cost);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, Comment, Instance, SynthConfig, UserAction};
    use crate::model::{ModelConfig, Mode};

    struct Fixture {
        model: Model,
        featurizer: Featurizer,
        data: Encoded,
        dataset: Dataset,
        templates: Vec<String>,
    }

    fn fixture(seed: u64) -> Fixture {
        let synth = SynthConfig {
            n_instances: 12,
            n_background_users: 20,
            pool_size: 4,
            ..SynthConfig::default()
        };
        let (mut dataset, truth) = generate_synthetic(&synth, seed).unwrap();
        // An isolated, reply-free instance whose only user touches nothing else.
        dataset.instances.push(Instance {
            tweet_id: "lonely".into(),
            label: crate::data::Label::N,
            source_text: "fkw0 w1".into(),
            comments: vec![],
            users: vec![UserAction {
                id: "hermit".into(),
                action: "post".into(),
                comment: None,
            }],
        });
        let some_profile = dataset.users.values().next().unwrap().clone();
        dataset.users.insert("hermit".into(), some_profile);
        let all: Vec<usize> = (0..dataset.len()).collect();
        let config = ModelConfig {
            embed_dim: 6,
            text_hidden: 5,
            user_hidden: 5,
            graph_hidden: 4,
            tree_hidden: 4,
            fusion_hidden: 6,
            ..ModelConfig::default()
        };
        let featurizer = Featurizer::fit(&dataset, &all, config.max_len, 1).unwrap();
        let mut data = featurizer.encode(&dataset).unwrap();
        let model = Model::new(config, featurizer.vocab.len(), seed).unwrap();
        // Relabel so every instance starts out correctly classified.
        let probs = model.predict_proba(&data, &all, 64).unwrap();
        for (i, inst) in data.instances.iter_mut().enumerate() {
            inst.label = argmax(probs.row(i));
        }
        let templates = truth.template_bank(4, 6).into_iter().map(|(_, t)| t).collect();
        Fixture {
            model,
            featurizer,
            data,
            dataset,
            templates,
        }
    }

    fn ctx<'a>(f: &'a Fixture, config: AttackConfig) -> AttackContext<'a> {
        let fake = median_profile(&f.dataset, &(0..f.dataset.len()).collect::<Vec<_>>());
        AttackContext::new(&f.model, &f.featurizer, &f.data, &fake, &f.templates, config).unwrap()
    }

    #[test]
    fn zero_budget_is_a_no_op() {
        let f = fixture(1);
        let c = ctx(&f, AttackConfig::default());
        for mode in AttackMode::ALL {
            let r = greedy_attack(&c, "t0000", mode, 0.0).unwrap();
            assert!(!r.succeeded);
            assert!(r.steps.is_empty());
            assert_eq!(r.probs_before, r.probs_after);
        }
    }

    #[test]
    fn isolated_target_gets_only_fresh_accounts() {
        let f = fixture(2);
        let c = ctx(&f, AttackConfig::default());
        let target = f.data.instance_index("lonely").unwrap();
        let cands = enumerate_graph_perturbations(&c, &f.data, target);
        assert_eq!(cands.len(), 20);
        let next = apply_perturbation(&c, &f.data, target, &cands[0]).unwrap();
        assert_eq!(next.graph.num_edges(), f.data.graph.num_edges() + 1);
        let again = enumerate_graph_perturbations(&c, &next, target);
        assert_eq!(again.len(), 19);
        assert!(!again.contains(&cands[0]));
    }

    #[test]
    fn edge_edit_matches_re_encoding() {
        let f = fixture(3);
        let target = f.data.instance_index("t0002").unwrap();
        let existing = f.data.graph.user_ids()[0].clone();
        let edited = f.data.with_edge(&existing, "t0002", None).unwrap();
        let mut ds = f.dataset.clone();
        ds.instances[target].users.push(UserAction {
            id: existing,
            action: "retweet".into(),
            comment: None,
        });
        let fresh = f.featurizer.encode(&ds).unwrap();
        assert_eq!(edited.graph, fresh.graph);
        assert_eq!(edited.user_features, fresh.user_features);
        assert_eq!(edited.tweet_seqs, fresh.tweet_seqs);
        let a = f.model.forward(&edited, &[target], Mode::Eval).unwrap().probs;
        let b = f.model.forward(&fresh, &[target], Mode::Eval).unwrap().probs;
        assert_eq!(a, b);
    }

    #[test]
    fn comment_candidates_and_undo() {
        let f = fixture(4);
        let c = ctx(&f, AttackConfig::default());
        let target = f.data.instance_index("lonely").unwrap();
        let cands = enumerate_comment_perturbations(&c, &f.data, target).unwrap();
        assert_eq!(cands.len(), 16);
        let before = probs_of(&f.model, &f.data, target).unwrap();
        let mut state = f.data.clone();
        let scored = score(&c, &mut state, target, &cands[3]).unwrap();
        assert_eq!(state.instances[target].tree, f.data.instances[target].tree);
        assert_eq!(probs_of(&f.model, &state, target).unwrap(), before);
        let grown = apply_perturbation(&c, &f.data, target, &cands[3]).unwrap();
        assert_eq!(grown.instances[target].tree.len(), 2);
        assert_eq!(probs_of(&f.model, &grown, target).unwrap(), scored);
    }

    #[test]
    fn empty_template_bank_rejected() {
        let f = fixture(5);
        let fake = median_profile(&f.dataset, &[0]);
        let c = AttackContext::new(&f.model, &f.featurizer, &f.data, &fake, &[], AttackConfig::default()).unwrap();
        assert!(matches!(
            enumerate_comment_perturbations(&c, &f.data, 0),
            Err(AttackError::EmptyTemplates)
        ));
    }

    #[test]
    fn joint_candidates_are_the_union() {
        let f = fixture(6);
        let c = ctx(&f, AttackConfig::default());
        let target = f.data.instance_index("t0001").unwrap();
        let mut expect = enumerate_graph_perturbations(&c, &f.data, target);
        expect.extend(enumerate_comment_perturbations(&c, &f.data, target).unwrap());
        assert_eq!(candidates(&c, &f.data, target, AttackMode::Joint).unwrap(), expect);
    }

    #[test]
    fn results_replay_and_account_costs() {
        let f = fixture(7);
        let c = ctx(&f, AttackConfig::default());
        for mode in AttackMode::ALL {
            let r = greedy_attack(&c, "t0003", mode, 5.0).unwrap();
            assert_eq!(r.total_cost, r.steps.len() as f64);
            assert!(r.total_cost <= 5.0);
            let replayed = replay(&c, "t0003", &r.steps).unwrap();
            for (a, b) in replayed.iter().zip(&r.probs_after) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn cost_curve_is_monotone() {
        let f = fixture(8);
        let c = ctx(&f, AttackConfig::default());
        let targets: Vec<String> = ["t0000", "t0001", "t0002", "lonely"].iter().map(|s| s.to_string()).collect();
        let curve = attack_cost_curve(&c, &targets, AttackMode::Comment, &[0.0, 1.0, 3.0]).unwrap();
        assert_eq!(curve.points[0].success_rate, 0.0);
        assert!(curve.points.windows(2).all(|w| w[0].success_rate <= w[1].success_rate));
        assert!(matches!(
            attack_cost_curve(&c, &targets, AttackMode::Comment, &[2.0, 1.0]),
            Err(AttackError::UnsortedBudgets)
        ));
        assert!(curve.to_table().contains("budget"));
    }

    #[test]
    fn median_profile_of_three() {
        let (mut ds, _) = generate_synthetic(&SynthConfig { n_instances: 4, ..SynthConfig::default() }, 1).unwrap();
        ds.instances.truncate(1);
        ds.instances[0].comments = Vec::<Comment>::new();
        ds.instances[0].users.truncate(1);
        let id = ds.instances[0].users[0].id.clone();
        assert_eq!(median_profile(&ds, &[0]), ds.users[&id]);
    }
}
