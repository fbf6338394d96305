use std::collections::HashMap;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::layers::{
    fuse_and_classify, propagation_forward, user_correlation_forward, Dropout, FusionParams,
    FusionTrace, GraphBranchParams, GraphBranchTrace, TreeBatch, TreeBranchParams,
    TreeBranchTrace,
};
use super::ModelError;
use crate::data::{Dataset, Instance};
use crate::encoders::{
    build_vocab, encode_users, extract_user_features, gru_backward, gru_forward_batch, tokenize,
    tokenize_and_pad, FeatureNormalizer, GruParams, GruTrace, TokenSequence, UserEncoderParams,
    UserEncoderTrace, Vocabulary, PAD, UNK, USER_FEATURE_DIM,
};
use crate::graphs::{
    build_bipartite, build_bipartite_from_pairs, k_hop_subgraph, normalize_adjacency, BipartiteGraph, NormalizedAdjacency,
    PropagationTree,
};
use crate::numerics::{softmax_cross_entropy, Matrix};

pub const NUM_CLASSES: usize = 4;

/// Which branches feed the classifier; a disabled branch contributes zeros.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branches {
    Full,
    PropagationOnly,
    UserOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub text_hidden: usize,
    pub user_hidden: usize,
    pub graph_hidden: usize,
    pub tree_hidden: usize,
    pub fusion_hidden: usize,
    /// Token sequence length after truncation / padding.
    pub max_len: usize,
    pub vocab_min_count: usize,
    /// Std of the random embedding init used when no pretrained vectors
    /// are supplied.
    pub embedding_scale: f64,
    pub dropout: f64,
    /// Radius of the per-batch bipartite subgraph; `None` uses the whole graph.
    pub k_hop: Option<usize>,
    pub branches: Branches,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 100,
            text_hidden: 64,
            user_hidden: 64,
            graph_hidden: 64,
            tree_hidden: 64,
            fusion_hidden: 64,
            max_len: 40,
            vocab_min_count: 1,
            embedding_scale: 0.1,
            dropout: 0.2,
            k_hop: Some(2),
            branches: Branches::Full,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let dims = [
            self.embed_dim,
            self.text_hidden,
            self.user_hidden,
            self.graph_hidden,
            self.tree_hidden,
            self.fusion_hidden,
            self.max_len,
        ];
        if dims.contains(&0) {
            return Err(ModelError::Mismatch("model dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::Mismatch(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// Vocabulary and profile normalizer fitted on training instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Featurizer {
    pub vocab: Vocabulary,
    pub normalizer: FeatureNormalizer,
    pub max_len: usize,
}

impl Featurizer {
    pub fn fit(dataset: &Dataset, train: &[usize], max_len: usize, min_count: usize) -> Result<Self, ModelError> {
        let mut docs: Vec<Vec<String>> = Vec::new();
        let mut rows = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        for &i in train {
            let inst = &dataset.instances[i];
            docs.push(tokenize(&inst.source_text));
            docs.extend(inst.comments.iter().map(|c| tokenize(&c.text)));
            for u in &inst.users {
                if seen.insert(u.id.as_str()) {
                    let profile = dataset.users.get(&u.id).ok_or_else(|| {
                        ModelError::Mismatch(format!("user {} has no profile", u.id))
                    })?;
                    rows.push(extract_user_features(profile)?);
                }
            }
        }
        let vocab = build_vocab(docs.iter().map(Vec::as_slice), min_count);
        let normalizer = if rows.is_empty() {
            FeatureNormalizer::identity(USER_FEATURE_DIM)
        } else {
            FeatureNormalizer::fit(&rows)
        };
        Ok(Self {
            vocab,
            normalizer,
            max_len,
        })
    }

    pub fn text(&self, text: &str) -> TokenSequence {
        tokenize_and_pad(text, &self.vocab, self.max_len)
    }

    pub fn encode(&self, dataset: &Dataset) -> Result<Encoded, ModelError> {
        let graph = build_bipartite(&dataset.interactions());
        let mut user_features = Matrix::zeros(graph.num_users(), USER_FEATURE_DIM);
        for (k, id) in graph.user_ids().iter().enumerate() {
            let profile = dataset
                .users
                .get(id)
                .ok_or_else(|| ModelError::Mismatch(format!("user {id} has no profile")))?;
            let f = self.normalizer.apply(&extract_user_features(profile)?);
            user_features.row_mut(k).copy_from_slice(&f);
        }
        let by_id: HashMap<&str, &Instance> =
            dataset.instances.iter().map(|i| (i.tweet_id.as_str(), i)).collect();
        let tweet_seqs = graph
            .tweet_ids()
            .iter()
            .map(|id| self.text(&by_id[id.as_str()].source_text))
            .collect();
        let instances = dataset
            .instances
            .iter()
            .map(|inst| {
                let mut nodes = vec![self.text(&inst.source_text)];
                nodes.extend(inst.comments.iter().map(|c| self.text(&c.text)));
                Ok(EncodedInstance {
                    tweet_id: inst.tweet_id.clone(),
                    label: inst.label.index(),
                    tree: PropagationTree::new(nodes, inst.tree_parents())?,
                    graph_tweet: graph.tweet_index(&inst.tweet_id),
                })
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        Ok(Encoded {
            graph,
            full_adj: OnceLock::new(),
            user_features,
            tweet_seqs,
            instances,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedInstance {
    pub tweet_id: String,
    pub label: usize,
    pub tree: PropagationTree<TokenSequence>,
    /// Tweet index in the bipartite graph; `None` when no users remain.
    pub graph_tweet: Option<usize>,
}

/// A dataset in model-ready form. The bipartite graph spans every
/// instance, so evaluation sees the same user context as training.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub graph: BipartiteGraph,
    full_adj: OnceLock<NormalizedAdjacency>,
    /// Normalized profile features, one row per graph user.
    pub user_features: Matrix,
    /// Source-text tokens, one per graph tweet.
    pub tweet_seqs: Vec<TokenSequence>,
    pub instances: Vec<EncodedInstance>,
}

impl Encoded {
    pub fn labels(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.instances[i].label).collect()
    }

    pub fn instance_index(&self, tweet_id: &str) -> Option<usize> {
        self.instances.iter().position(|i| i.tweet_id == tweet_id)
    }

    fn full_adjacency(&self) -> Result<&NormalizedAdjacency, ModelError> {
        if let Some(a) = self.full_adj.get() {
            return Ok(a);
        }
        let a = normalize_adjacency(self.graph.adjacency(), true)?;
        Ok(self.full_adj.get_or_init(|| a))
    }

    /// Copy with one extra user-tweet edge. `features` (already normalized)
    /// is required when `user_id` is not yet in the graph.
    pub fn with_edge(
        &self,
        user_id: &str,
        tweet_id: &str,
        features: Option<&[f64]>,
    ) -> Result<Encoded, ModelError> {
        let target = self
            .instance_index(tweet_id)
            .ok_or_else(|| ModelError::Mismatch(format!("unknown tweet {tweet_id}")))?;
        let g = &self.graph;
        let nu = g.num_users();
        let mut pairs: Vec<(&str, &str)> = Vec::with_capacity(g.num_edges() + 1);
        for u in 0..nu {
            for &node in g.neighbors(u) {
                pairs.push((&g.user_ids()[u], &g.tweet_ids()[node - nu]));
            }
        }
        pairs.push((user_id, tweet_id));
        let graph = build_bipartite_from_pairs(pairs);

        let mut user_features = Matrix::zeros(graph.num_users(), self.user_features.cols());
        for (k, id) in graph.user_ids().iter().enumerate() {
            let row = match g.user_index(id) {
                Some(old) => self.user_features.row(old),
                None => features.ok_or_else(|| {
                    ModelError::Mismatch(format!("new user {id} needs a feature row"))
                })?,
            };
            if row.len() != user_features.cols() {
                return Err(ModelError::Mismatch("feature row has the wrong width".into()));
            }
            user_features.row_mut(k).copy_from_slice(row);
        }
        let tweet_seqs = graph
            .tweet_ids()
            .iter()
            .map(|id| match g.tweet_index(id) {
                Some(old) => self.tweet_seqs[old].clone(),
                None => {
                    let tree = &self.instances[target].tree;
                    tree.nodes[tree.root].clone()
                }
            })
            .collect();
        let mut instances = self.instances.clone();
        for inst in &mut instances {
            inst.graph_tweet = graph.tweet_index(&inst.tweet_id);
        }
        Ok(Encoded {
            graph,
            full_adj: OnceLock::new(),
            user_features,
            tweet_seqs,
            instances,
        })
    }

    /// Copy with one extra reply under `parent` in instance `instance`.
    pub fn with_leaf(&self, instance: usize, parent: usize, text: TokenSequence) -> Result<Encoded, ModelError> {
        let mut out = self.clone();
        out.instances
            .get_mut(instance)
            .ok_or_else(|| ModelError::Mismatch(format!("instance {instance} out of range")))?
            .tree
            .push_leaf(parent, text)?;
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub user: UserEncoderParams,
    pub embedding: Matrix,
    pub gru: GruParams,
    pub graph: GraphBranchParams,
    pub tree: TreeBranchParams,
    pub fusion: FusionParams,
}

impl ModelParams {
    pub const NAMES: [&'static str; 26] = [
        "user.w1", "user.b1", "user.w2", "user.b2", "embedding", "gru.w_z", "gru.w_r", "gru.w_h",
        "gru.u_z", "gru.u_r", "gru.u_h", "gru.b_z", "gru.b_r", "gru.b_h", "graph.user_proj_w",
        "graph.user_proj_b", "graph.tweet_proj_w", "graph.tweet_proj_b", "graph.w1", "graph.w2",
        "tree.w1", "tree.w2", "fusion.w1", "fusion.b1", "fusion.w2", "fusion.b2",
    ];

    pub fn zeros_like(&self) -> Self {
        Self {
            user: self.user.zeros_like(),
            embedding: self.embedding.zeros_like(),
            gru: self.gru.zeros_like(),
            graph: self.graph.zeros_like(),
            tree: self.tree.zeros_like(),
            fusion: self.fusion.zeros_like(),
        }
    }

    /// All tensors in `NAMES` order.
    pub fn tensors(&self) -> Vec<&Matrix> {
        let (u, g, gb, t, f) = (&self.user, &self.gru, &self.graph, &self.tree, &self.fusion);
        vec![
            &u.w1, &u.b1, &u.w2, &u.b2, &self.embedding, &g.w_z, &g.w_r, &g.w_h, &g.u_z, &g.u_r,
            &g.u_h, &g.b_z, &g.b_r, &g.b_h, &gb.user_proj_w, &gb.user_proj_b, &gb.tweet_proj_w,
            &gb.tweet_proj_b, &gb.w1, &gb.w2, &t.w1, &t.w2, &f.w1, &f.b1, &f.w2, &f.b2,
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let (u, g, gb, t, f) = (
            &mut self.user,
            &mut self.gru,
            &mut self.graph,
            &mut self.tree,
            &mut self.fusion,
        );
        vec![
            &mut u.w1, &mut u.b1, &mut u.w2, &mut u.b2, &mut self.embedding, &mut g.w_z,
            &mut g.w_r, &mut g.w_h, &mut g.u_z, &mut g.u_r, &mut g.u_h, &mut g.b_z, &mut g.b_r,
            &mut g.b_h, &mut gb.user_proj_w, &mut gb.user_proj_b, &mut gb.tweet_proj_w,
            &mut gb.tweet_proj_b, &mut gb.w1, &mut gb.w2, &mut t.w1, &mut t.w2, &mut f.w1,
            &mut f.b1, &mut f.w2, &mut f.b2,
        ]
    }

    pub fn from_tensors(template: &Self, tensors: &[Matrix]) -> Result<Self, ModelError> {
        let mut out = template.clone();
        let slots = out.tensors_mut();
        if slots.len() != tensors.len() {
            return Err(ModelError::Mismatch(format!(
                "expected {} tensors, got {}",
                slots.len(),
                tensors.len()
            )));
        }
        for (slot, t) in slots.into_iter().zip(tensors) {
            if slot.shape() != t.shape() {
                return Err(ModelError::Mismatch("tensor shape changed".into()));
            }
            *slot = t.clone();
        }
        Ok(out)
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Eval,
    /// Dropout active, with the mask stream seeded by `seed`.
    Train { seed: u64 },
}

#[derive(Debug, Clone)]
struct GraphPart {
    adj: NormalizedAdjacency,
    user_trace: UserEncoderTrace,
    branch: GraphBranchTrace,
    /// Batch rows that have a graph tweet.
    present: Vec<usize>,
    num_tweets: usize,
}

#[derive(Debug, Clone)]
struct TreePart {
    batch: TreeBatch,
    branch: TreeBranchTrace,
}

/// Activations of one batch plus what backward needs.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// User embeddings of the subgraph users (empty when the branch is off).
    pub h_u: Matrix,
    /// Text embeddings: subgraph tweets first, then every tree node.
    pub s_t: Matrix,
    pub h_g: Matrix,
    pub h_t: Matrix,
    pub logits: Matrix,
    pub probs: Matrix,
    /// Batch rows whose source tweet has no users in the graph.
    pub flagged: Vec<usize>,
    gru: GruTrace,
    graph: Option<GraphPart>,
    tree: Option<TreePart>,
    fusion: FusionTrace,
}

impl ForwardTrace {
    pub fn fused(&self) -> &Matrix {
        self.fusion.fused()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

fn embedding_init(vocab: usize, dim: usize, scale: f64, rng: &mut ChaCha8Rng) -> Matrix {
    let normal = Normal::new(0.0, scale.max(0.0)).expect("finite scale");
    let mut m = Matrix::zeros(vocab, dim);
    for r in 0..vocab {
        if r == PAD || r == UNK {
            continue;
        }
        for v in m.row_mut(r) {
            *v = normal.sample(rng);
        }
    }
    m
}

impl Model {
    pub fn new(config: ModelConfig, vocab_size: usize, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = &config;
        let params = ModelParams {
            user: UserEncoderParams::init(USER_FEATURE_DIM, c.user_hidden, c.user_hidden, &mut rng),
            embedding: embedding_init(vocab_size, c.embed_dim, c.embedding_scale, &mut rng),
            gru: GruParams::init(c.embed_dim, c.text_hidden, &mut rng),
            graph: GraphBranchParams::init(c.user_hidden, c.text_hidden, c.graph_hidden, &mut rng),
            tree: TreeBranchParams::init(c.text_hidden, c.tree_hidden, &mut rng),
            fusion: FusionParams::init(
                c.graph_hidden + c.tree_hidden,
                c.fusion_hidden,
                NUM_CLASSES,
                &mut rng,
            ),
        };
        Ok(Self { config, params })
    }

    /// Replaces the embedding table (e.g. with pretrained vectors).
    pub fn set_embeddings(&mut self, table: Matrix) -> Result<(), ModelError> {
        if table.shape() != self.params.embedding.shape() {
            return Err(ModelError::Mismatch(format!(
                "embedding table {}x{} but model expects {}x{}",
                table.rows(),
                table.cols(),
                self.params.embedding.rows(),
                self.params.embedding.cols()
            )));
        }
        self.params.embedding = table;
        Ok(())
    }

    pub fn forward(&self, data: &Encoded, batch: &[usize], mode: Mode) -> Result<ForwardTrace, ModelError> {
        if batch.is_empty() {
            return Err(ModelError::Empty("batch".into()));
        }
        if let Some(&bad) = batch.iter().find(|&&i| i >= data.instances.len()) {
            return Err(ModelError::Mismatch(format!("instance {bad} out of range")));
        }
        let p = &self.params;
        let c = &self.config;
        let insts: Vec<&EncodedInstance> = batch.iter().map(|&i| &data.instances[i]).collect();
        let use_graph = c.branches != Branches::PropagationOnly;
        let use_tree = c.branches != Branches::UserOnly;
        let flagged: Vec<usize> = (0..insts.len()).filter(|&b| insts[b].graph_tweet.is_none()).collect();

        // Subgraph selection.
        let present: Vec<usize> = (0..insts.len()).filter(|&b| insts[b].graph_tweet.is_some()).collect();
        let seeds: Vec<usize> = present.iter().map(|&b| insts[b].graph_tweet.unwrap()).collect();
        let sub = if use_graph && !seeds.is_empty() {
            Some(match c.k_hop {
                Some(k) => {
                    let (g, m) = k_hop_subgraph(&data.graph, &seeds, k)?;
                    (normalize_adjacency(g.adjacency(), true)?, m.users, m.tweets, m.seeds)
                }
                None => (
                    data.full_adjacency()?.clone(),
                    (0..data.graph.num_users()).collect(),
                    (0..data.graph.num_tweets()).collect(),
                    seeds.clone(),
                ),
            })
        } else {
            None
        };

        // Text encoding for subgraph tweets and all tree nodes in one pass.
        let mut seqs: Vec<TokenSequence> = Vec::new();
        if let Some((_, _, tweets, _)) = &sub {
            seqs.extend(tweets.iter().map(|&t| data.tweet_seqs[t].clone()));
        }
        let num_graph_tweets = seqs.len();
        if use_tree {
            for inst in &insts {
                seqs.extend(inst.tree.nodes.iter().cloned());
            }
        }
        let (s_t, gru) = gru_forward_batch(&seqs, &p.embedding, &p.gru)?;
        let graph_rows: Vec<usize> = (0..num_graph_tweets).collect();
        let tree_rows: Vec<usize> = (num_graph_tweets..seqs.len()).collect();

        let mut h_g = Matrix::zeros(insts.len(), c.graph_hidden);
        let mut h_u = Matrix::zeros(0, c.user_hidden);
        let graph = match sub {
            Some((adj, users, tweets, seed_pos)) => {
                let x_u = data.user_features.select_rows(&users);
                let (hu, user_trace) = encode_users(&x_u, &p.user)?;
                let dropout = match mode {
                    Mode::Train { seed } if c.dropout > 0.0 => Some(Dropout {
                        rate: c.dropout,
                        seed,
                    }),
                    _ => None,
                };
                let (rows, branch) = user_correlation_forward(
                    &adj,
                    &hu,
                    &s_t.select_rows(&graph_rows),
                    &seed_pos,
                    &p.graph,
                    dropout,
                )?;
                for (k, &b) in present.iter().enumerate() {
                    h_g.row_mut(b).copy_from_slice(rows.row(k));
                }
                h_u = hu;
                Some(GraphPart {
                    adj,
                    user_trace,
                    branch,
                    present,
                    num_tweets: tweets.len(),
                })
            }
            None => None,
        };

        let (h_t, tree) = if use_tree {
            let trees: Vec<&PropagationTree<TokenSequence>> = insts.iter().map(|i| &i.tree).collect();
            let tb = TreeBatch::new(&trees)?;
            let (h_t, branch) = propagation_forward(&tb, &s_t.select_rows(&tree_rows), &p.tree)?;
            (h_t, Some(TreePart { batch: tb, branch }))
        } else {
            (Matrix::zeros(insts.len(), c.tree_hidden), None)
        };

        let (logits, probs, fusion) = fuse_and_classify(&h_g, &h_t, &p.fusion)?;
        Ok(ForwardTrace {
            h_u,
            s_t,
            h_g,
            h_t,
            logits,
            probs,
            flagged,
            gru,
            graph,
            tree,
            fusion,
        })
    }

    /// Parameter gradients for upstream `grad_logits`.
    pub fn backward(&self, trace: &ForwardTrace, grad_logits: &Matrix) -> Result<ModelParams, ModelError> {
        let p = &self.params;
        let mut grads = p.zeros_like();
        let (dh_g, dh_t) = trace.fusion.backward(grad_logits, &p.fusion, &mut grads.fusion)?;
        let mut ds = Matrix::zeros(trace.s_t.rows(), trace.s_t.cols());
        if let Some(g) = &trace.graph {
            let d_seeds = dh_g.select_rows(&g.present);
            let (dh_u, ds_graph) = g.branch.backward(&g.adj, &d_seeds, &p.graph, &mut grads.graph)?;
            g.user_trace.backward(&dh_u, &p.user, &mut grads.user)?;
            for r in 0..g.num_tweets {
                ds.row_mut(r).copy_from_slice(ds_graph.row(r));
            }
        }
        if let Some(t) = &trace.tree {
            let ds_tree = t.branch.backward(&t.batch, &dh_t, &p.tree, &mut grads.tree)?;
            let offset = trace.s_t.rows() - ds_tree.rows();
            for r in 0..ds_tree.rows() {
                ds.row_mut(offset + r).copy_from_slice(ds_tree.row(r));
            }
        }
        let g = gru_backward(&trace.gru, &ds, &p.embedding, &p.gru)?;
        grads.gru = g.params;
        grads.embedding = g.emb;
        Ok(grads)
    }

    /// Mean cross-entropy over `batch` and its parameter gradients.
    pub fn loss_and_grads(
        &self,
        data: &Encoded,
        batch: &[usize],
        mode: Mode,
    ) -> Result<(f64, ModelParams, ForwardTrace), ModelError> {
        let trace = self.forward(data, batch, mode)?;
        let ce = softmax_cross_entropy(&trace.logits, &data.labels(batch))?;
        let grads = self.backward(&trace, &ce.grad_logits)?;
        Ok((ce.loss, grads, trace))
    }

    /// Class probabilities in eval mode, computed in chunks of `chunk`.
    pub fn predict_proba(&self, data: &Encoded, indices: &[usize], chunk: usize) -> Result<Matrix, ModelError> {
        let mut out = Matrix::zeros(indices.len(), NUM_CLASSES);
        let mut row = 0;
        for part in indices.chunks(chunk.max(1)) {
            let trace = self.forward(data, part, Mode::Eval)?;
            for r in 0..part.len() {
                out.row_mut(row).copy_from_slice(trace.probs.row(r));
                row += 1;
            }
        }
        Ok(out)
    }
}

/// Mixes several counters into one well-spread 64-bit seed.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut rng_seed = 0x9e37_79b9_7f4a_7c15u64;
    for &p in parts {
        let mut z = rng_seed ^ p.wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        rng_seed = z ^ (z >> 31);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    rng.gen()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SynthConfig};
    use crate::numerics::{argmax, finite_difference_check, DEFAULT_FD_EPSILON};

    fn small_config() -> ModelConfig {
        ModelConfig {
            embed_dim: 5,
            text_hidden: 4,
            user_hidden: 4,
            graph_hidden: 3,
            tree_hidden: 3,
            fusion_hidden: 5,
            max_len: 4,
            ..ModelConfig::default()
        }
    }

    fn tiny_synth() -> SynthConfig {
        SynthConfig {
            n_instances: 8,
            n_background_users: 6,
            pool_size: 3,
            users_per_instance: (1, 3),
            comments_per_instance: (0, 3),
            tokens_per_text: (1, 3),
            keywords_per_class: 3,
            background_words: 5,
            ..SynthConfig::default()
        }
    }

    fn setup(config: ModelConfig, seed: u64) -> (Model, Encoded) {
        let (ds, _) = generate_synthetic(&tiny_synth(), seed).unwrap();
        let all: Vec<usize> = (0..ds.len()).collect();
        let f = Featurizer::fit(&ds, &all, config.max_len, 1).unwrap();
        let data = f.encode(&ds).unwrap();
        let model = Model::new(config, f.vocab.len(), seed).unwrap();
        (model, data)
    }

    #[test]
    fn probabilities_are_normalized() {
        let (model, data) = setup(small_config(), 1);
        let trace = model.forward(&data, &[0, 1, 2, 3], Mode::Eval).unwrap();
        for r in 0..4 {
            let s: f64 = trace.probs.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
        assert!(trace.h_u.is_finite() && trace.s_t.is_finite() && trace.fused().is_finite());
    }

    #[test]
    fn end_to_end_gradients() {
        for branches in [Branches::Full, Branches::PropagationOnly, Branches::UserOnly] {
            let config = ModelConfig {
                branches,
                ..small_config()
            };
            let (model, data) = setup(config, 2);
            let batch = [0, 3, 5, 6];
            let (_, grads, _) = model.loss_and_grads(&data, &batch, Mode::Eval).unwrap();
            let labels = data.labels(&batch);
            let mut flat: Vec<Matrix> = model.params.tensors().into_iter().cloned().collect();
            let analytic: Vec<Matrix> = grads.tensors().into_iter().cloned().collect();
            let template = model.params.clone();
            let report = finite_difference_check(
                |t| {
                    let m = Model {
                        config: model.config.clone(),
                        params: ModelParams::from_tensors(&template, t).unwrap(),
                    };
                    let trace = m.forward(&data, &batch, Mode::Eval).unwrap();
                    softmax_cross_entropy(&trace.logits, &labels).unwrap().loss
                },
                &mut flat,
                &analytic,
                DEFAULT_FD_EPSILON,
            )
            .unwrap();
            assert!(
                report.max_rel_error < 1e-4,
                "{branches:?}: {} at {}",
                report.max_rel_error,
                ModelParams::NAMES[report.worst.0]
            );
        }
    }

    #[test]
    fn frozen_embedding_rows_get_no_gradient() {
        let (model, data) = setup(small_config(), 3);
        let (_, grads, _) = model.loss_and_grads(&data, &[0, 1, 2], Mode::Train { seed: 4 }).unwrap();
        assert!(grads.embedding.row(PAD).iter().all(|&v| v == 0.0));
        assert!(grads.embedding.row(UNK).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn batch_rows_match_single_instances_on_full_graph() {
        let config = ModelConfig {
            k_hop: None,
            ..small_config()
        };
        let (model, data) = setup(config, 5);
        let batch: Vec<usize> = (0..8).collect();
        let all = model.forward(&data, &batch, Mode::Eval).unwrap();
        for &i in &batch {
            let one = model.forward(&data, &[i], Mode::Eval).unwrap();
            for (a, b) in one.probs.row(0).iter().zip(all.probs.row(i)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn eval_is_deterministic() {
        let (model, data) = setup(small_config(), 6);
        let a = model.forward(&data, &[0, 1, 2], Mode::Eval).unwrap();
        let b = model.forward(&data, &[0, 1, 2], Mode::Eval).unwrap();
        assert_eq!(a.probs, b.probs);
    }

    #[test]
    fn dropout_changes_training_forward_only() {
        let (model, data) = setup(small_config(), 7);
        let a = model.forward(&data, &[0, 1], Mode::Train { seed: 1 }).unwrap();
        let b = model.forward(&data, &[0, 1], Mode::Train { seed: 1 }).unwrap();
        let c = model.forward(&data, &[0, 1], Mode::Train { seed: 2 }).unwrap();
        assert_eq!(a.probs, b.probs);
        assert_ne!(a.probs, c.probs);
    }

    #[test]
    fn initial_loss_near_uniform() {
        let mut total = 0.0;
        for seed in 0..20 {
            let (model, data) = setup(ModelConfig::default(), 100 + seed);
            let batch: Vec<usize> = (0..8).collect();
            let trace = model.forward(&data, &batch, Mode::Eval).unwrap();
            total += softmax_cross_entropy(&trace.logits, &data.labels(&batch)).unwrap().loss;
        }
        let mean = total / 20.0;
        assert!((mean - 4f64.ln()).abs() < 0.3, "mean initial loss {mean}");
    }

    fn relabel(tree: &PropagationTree<TokenSequence>, perm: &[usize]) -> PropagationTree<TokenSequence> {
        // perm[old] = new
        let n = tree.len();
        let mut nodes = vec![TokenSequence::from_ids(&[], 1); n];
        let mut parent = vec![None; n];
        for old in 0..n {
            nodes[perm[old]] = tree.nodes[old].clone();
            parent[perm[old]] = tree.parent[old].map(|p| perm[p]);
        }
        PropagationTree::new(nodes, parent).unwrap()
    }

    #[test]
    fn node_relabeling_is_invisible() {
        let (model, mut data) = setup(small_config(), 8);
        let i = (0..data.instances.len())
            .max_by_key(|&i| data.instances[i].tree.len())
            .unwrap();
        let before = model.forward(&data, &[i], Mode::Eval).unwrap().probs;
        let n = data.instances[i].tree.len();
        let perm: Vec<usize> = (0..n).rev().collect();
        data.instances[i].tree = relabel(&data.instances[i].tree, &perm);
        let after = model.forward(&data, &[i], Mode::Eval).unwrap().probs;
        assert!(before.max_abs_diff(&after) < 1e-9);
    }

    #[test]
    fn ablations_ignore_the_disabled_input() {
        let (model, data) = setup(
            ModelConfig {
                branches: Branches::PropagationOnly,
                ..small_config()
            },
            9,
        );
        let mut perturbed = data.clone();
        perturbed.user_features = perturbed.user_features.map(|v| v + 3.0);
        let a = model.forward(&data, &[0, 1], Mode::Eval).unwrap();
        let b = model.forward(&perturbed, &[0, 1], Mode::Eval).unwrap();
        assert_eq!(a.probs, b.probs);

        let (model, data) = setup(
            ModelConfig {
                branches: Branches::UserOnly,
                ..small_config()
            },
            9,
        );
        let mut perturbed = data.clone();
        for inst in &mut perturbed.instances {
            inst.tree.push_leaf(0, TokenSequence::from_ids(&[2, 3], 4)).unwrap();
        }
        let a = model.forward(&data, &[0, 1], Mode::Eval).unwrap();
        let b = model.forward(&perturbed, &[0, 1], Mode::Eval).unwrap();
        assert_eq!(a.probs, b.probs);
    }

    #[test]
    fn tie_breaks_to_lowest_class() {
        let (mut model, data) = setup(small_config(), 10);
        model.params.fusion.w2.fill(0.0);
        let trace = model.forward(&data, &[0], Mode::Eval).unwrap();
        assert_eq!(argmax(trace.probs.row(0)), 0);
    }

    #[test]
    fn mixed_seeds_differ() {
        assert_ne!(mix_seed(&[1, 0, 0]), mix_seed(&[1, 0, 1]));
        assert_eq!(mix_seed(&[5, 6]), mix_seed(&[5, 6]));
    }
}
