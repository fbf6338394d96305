//! The three model stages with their hand-written backward passes: the
//! bipartite user-correlation GCN, the top-down propagation GCN with root
//! enhancement, and the fusion classifier.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::graphs::{normalize_adjacency, tree_adjacency, NormalizedAdjacency, PropagationTree};
use crate::numerics::{
    affine_backward, affine_forward, relu, relu_backward, softmax_rows, xavier_uniform, Matrix,
    NumericsError,
};

/// Saved intermediates of one `σ(Â H W)` application.
#[derive(Debug, Clone)]
pub struct GcnTrace {
    ah: Matrix,
    pre: Matrix,
    activate: bool,
}

/// `Â · H · W`, followed by ReLU when `activate` is set.
pub fn gcn_layer(
    adj: &NormalizedAdjacency,
    h: &Matrix,
    w: &Matrix,
    activate: bool,
) -> Result<Matrix, ModelError> {
    Ok(gcn_layer_traced(adj, h, w, activate)?.0)
}

pub fn gcn_layer_traced(
    adj: &NormalizedAdjacency,
    h: &Matrix,
    w: &Matrix,
    activate: bool,
) -> Result<(Matrix, GcnTrace), ModelError> {
    let ah = adj.spmm(h)?;
    let pre = ah.matmul(w)?;
    let out = if activate { relu(&pre) } else { pre.clone() };
    Ok((out, GcnTrace { ah, pre, activate }))
}

impl GcnTrace {
    /// Returns `(dH, dW)`.
    pub fn backward(
        &self,
        adj: &NormalizedAdjacency,
        grad_out: &Matrix,
        w: &Matrix,
    ) -> Result<(Matrix, Matrix), ModelError> {
        let dpre = if self.activate {
            relu_backward(grad_out, &self.pre)?
        } else {
            grad_out.clone()
        };
        let dw = self.ah.t_matmul(&dpre)?;
        let dh = adj.spmm_t(&dpre.matmul_t(w)?)?;
        Ok((dh, dw))
    }
}

/// Per-role projections into the shared node space plus two GCN weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphBranchParams {
    pub user_proj_w: Matrix,
    pub user_proj_b: Matrix,
    pub tweet_proj_w: Matrix,
    pub tweet_proj_b: Matrix,
    pub w1: Matrix,
    pub w2: Matrix,
}

impl GraphBranchParams {
    pub fn init<R: Rng + ?Sized>(user_dim: usize, text_dim: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            user_proj_w: xavier_uniform(user_dim, hidden, rng),
            user_proj_b: Matrix::zeros(1, hidden),
            tweet_proj_w: xavier_uniform(text_dim, hidden, rng),
            tweet_proj_b: Matrix::zeros(1, hidden),
            w1: xavier_uniform(hidden, hidden, rng),
            w2: xavier_uniform(hidden, hidden, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            user_proj_w: self.user_proj_w.zeros_like(),
            user_proj_b: self.user_proj_b.zeros_like(),
            tweet_proj_w: self.tweet_proj_w.zeros_like(),
            tweet_proj_b: self.tweet_proj_b.zeros_like(),
            w1: self.w1.zeros_like(),
            w2: self.w2.zeros_like(),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.w2.cols()
    }
}

/// Inverted dropout applied after the first graph layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dropout {
    pub rate: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct GraphBranchTrace {
    h_u: Matrix,
    s_t: Matrix,
    layer1: GcnTrace,
    mask: Option<Matrix>,
    layer2: GcnTrace,
    seeds: Vec<usize>,
    num_nodes: usize,
}

/// Two GCN layers over the unified `[users ∥ tweets]` node set. `seeds`
/// are tweet indices (rows of `s_t`); the result has one row per seed.
pub fn user_correlation_forward(
    adj: &NormalizedAdjacency,
    h_u: &Matrix,
    s_t: &Matrix,
    seeds: &[usize],
    params: &GraphBranchParams,
    dropout: Option<Dropout>,
) -> Result<(Matrix, GraphBranchTrace), ModelError> {
    let num_nodes = h_u.rows() + s_t.rows();
    if adj.n() != num_nodes {
        return Err(ModelError::Mismatch(format!(
            "graph has {} nodes but {} user rows and {} tweet rows were given",
            adj.n(),
            h_u.rows(),
            s_t.rows()
        )));
    }
    if let Some(&bad) = seeds.iter().find(|&&s| s >= s_t.rows()) {
        return Err(ModelError::Mismatch(format!("seed tweet {bad} out of range")));
    }
    let pu = affine_forward(h_u, &params.user_proj_w, &params.user_proj_b)?;
    let pt = affine_forward(s_t, &params.tweet_proj_w, &params.tweet_proj_b)?;
    let x0 = pu.vcat(&pt)?;
    let (h1, layer1) = gcn_layer_traced(adj, &x0, &params.w1, true)?;
    let (h1, mask) = match dropout {
        Some(d) if d.rate > 0.0 => {
            let mut rng = ChaCha8Rng::seed_from_u64(d.seed);
            let keep = 1.0 - d.rate;
            let mask = Matrix::from_vec(
                h1.rows(),
                h1.cols(),
                (0..h1.len())
                    .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                    .collect(),
            )?;
            (h1.hadamard(&mask)?, Some(mask))
        }
        _ => (h1, None),
    };
    let (h2, layer2) = gcn_layer_traced(adj, &h1, &params.w2, false)?;
    let rows: Vec<usize> = seeds.iter().map(|&s| h_u.rows() + s).collect();
    Ok((
        h2.select_rows(&rows),
        GraphBranchTrace {
            h_u: h_u.clone(),
            s_t: s_t.clone(),
            layer1,
            mask,
            layer2,
            seeds: rows,
            num_nodes,
        },
    ))
}

impl GraphBranchTrace {
    /// Accumulates into `grads`; returns `(dH_u, dS_t)`.
    pub fn backward(
        &self,
        adj: &NormalizedAdjacency,
        grad_seeds: &Matrix,
        params: &GraphBranchParams,
        grads: &mut GraphBranchParams,
    ) -> Result<(Matrix, Matrix), ModelError> {
        if grad_seeds.rows() != self.seeds.len() {
            return Err(NumericsError::shape(grad_seeds.shape(), (self.seeds.len(), params.output_dim())).into());
        }
        let mut dh2 = Matrix::zeros(self.num_nodes, grad_seeds.cols());
        for (k, &row) in self.seeds.iter().enumerate() {
            for (d, g) in dh2.row_mut(row).iter_mut().zip(grad_seeds.row(k)) {
                *d += g;
            }
        }
        let (dh1, dw2) = self.layer2.backward(adj, &dh2, &params.w2)?;
        let dh1 = match &self.mask {
            Some(m) => dh1.hadamard(m)?,
            None => dh1,
        };
        let (dx0, dw1) = self.layer1.backward(adj, &dh1, &params.w1)?;
        let (dpu, dpt) = split_rows(&dx0, self.h_u.rows());
        let gu = affine_backward(&dpu, &self.h_u, &params.user_proj_w)?;
        let gt = affine_backward(&dpt, &self.s_t, &params.tweet_proj_w)?;
        grads.w2.add_assign(&dw2)?;
        grads.w1.add_assign(&dw1)?;
        grads.user_proj_w.add_assign(&gu.dw)?;
        grads.user_proj_b.add_assign(&gu.db)?;
        grads.tweet_proj_w.add_assign(&gt.dw)?;
        grads.tweet_proj_b.add_assign(&gt.db)?;
        Ok((gu.dx, gt.dx))
    }
}

fn split_rows(m: &Matrix, at: usize) -> (Matrix, Matrix) {
    let top: Vec<usize> = (0..at).collect();
    let bottom: Vec<usize> = (at..m.rows()).collect();
    (m.select_rows(&top), m.select_rows(&bottom))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeBranchParams {
    pub w1: Matrix,
    /// Consumes `[layer-1 output ∥ root's layer-1 output]`.
    pub w2: Matrix,
}

impl TreeBranchParams {
    pub fn init<R: Rng + ?Sized>(text_dim: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            w1: xavier_uniform(text_dim, hidden, rng),
            w2: xavier_uniform(2 * hidden, hidden, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            w1: self.w1.zeros_like(),
            w2: self.w2.zeros_like(),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.w2.cols()
    }
}

/// Several trees packed into one block-diagonal adjacency.
#[derive(Debug, Clone)]
pub struct TreeBatch {
    pub adj: NormalizedAdjacency,
    /// `(first row, node count)` per tree.
    pub spans: Vec<(usize, usize)>,
    /// Global row of each tree's root.
    pub roots: Vec<usize>,
}

impl TreeBatch {
    pub fn new<T>(trees: &[&PropagationTree<T>]) -> Result<Self, ModelError> {
        let mut blocks = Vec::with_capacity(trees.len());
        let mut spans = Vec::with_capacity(trees.len());
        let mut roots = Vec::with_capacity(trees.len());
        let mut offset = 0;
        for t in trees {
            blocks.push(normalize_adjacency(&tree_adjacency(t)?, true)?);
            spans.push((offset, t.len()));
            roots.push(offset + t.root);
            offset += t.len();
        }
        Ok(Self {
            adj: NormalizedAdjacency::block_diagonal(&blocks),
            spans,
            roots,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.adj.n()
    }

    /// Tree index of every global row.
    fn owner(&self) -> Vec<usize> {
        let mut owner = vec![0; self.num_nodes()];
        for (t, &(start, len)) in self.spans.iter().enumerate() {
            owner[start..start + len].iter_mut().for_each(|o| *o = t);
        }
        owner
    }
}

#[derive(Debug, Clone)]
pub struct TreeBranchTrace {
    layer1: GcnTrace,
    layer2: GcnTrace,
    hidden: usize,
}

/// Top-down tree GCN: ReLU layer, root enhancement, linear layer, mean
/// pool. Returns one row per tree.
pub fn propagation_forward(
    batch: &TreeBatch,
    node_embs: &Matrix,
    params: &TreeBranchParams,
) -> Result<(Matrix, TreeBranchTrace), ModelError> {
    if node_embs.rows() != batch.num_nodes() {
        return Err(ModelError::Mismatch(format!(
            "{} tree nodes but {} embedding rows",
            batch.num_nodes(),
            node_embs.rows()
        )));
    }
    let (h1, layer1) = gcn_layer_traced(&batch.adj, node_embs, &params.w1, true)?;
    let owner = batch.owner();
    let root_rows: Vec<usize> = owner.iter().map(|&t| batch.roots[t]).collect();
    let enhanced = h1.hcat(&h1.select_rows(&root_rows))?;
    let (h2, layer2) = gcn_layer_traced(&batch.adj, &enhanced, &params.w2, false)?;
    let mut pooled = Matrix::zeros(batch.spans.len(), h2.cols());
    for (t, &(start, len)) in batch.spans.iter().enumerate() {
        let out = pooled.row_mut(t);
        for r in start..start + len {
            for (o, v) in out.iter_mut().zip(h2.row(r)) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|o| *o /= len as f64);
    }
    Ok((
        pooled,
        TreeBranchTrace {
            layer1,
            layer2,
            hidden: h1.cols(),
        },
    ))
}

impl TreeBranchTrace {
    /// Accumulates into `grads`; returns the gradient for the node embeddings.
    pub fn backward(
        &self,
        batch: &TreeBatch,
        grad_pooled: &Matrix,
        params: &TreeBranchParams,
        grads: &mut TreeBranchParams,
    ) -> Result<Matrix, ModelError> {
        let owner = batch.owner();
        let mut dh2 = Matrix::zeros(batch.num_nodes(), grad_pooled.cols());
        for (r, &t) in owner.iter().enumerate() {
            let scale = 1.0 / batch.spans[t].1 as f64;
            for (d, g) in dh2.row_mut(r).iter_mut().zip(grad_pooled.row(t)) {
                *d = g * scale;
            }
        }
        let (denh, dw2) = self.layer2.backward(&batch.adj, &dh2, &params.w2)?;
        let (mut dh1, droot) = denh.hsplit(self.hidden);
        for (r, &t) in owner.iter().enumerate() {
            let root = batch.roots[t];
            for j in 0..self.hidden {
                let v = dh1.get(root, j) + droot.get(r, j);
                dh1.set(root, j, v);
            }
        }
        let (dx, dw1) = self.layer1.backward(&batch.adj, &dh1, &params.w1)?;
        grads.w1.add_assign(&dw1)?;
        grads.w2.add_assign(&dw2)?;
        Ok(dx)
    }
}

/// Hidden FC + ReLU, then the linear classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionParams {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

impl FusionParams {
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, classes: usize, rng: &mut R) -> Self {
        Self {
            w1: xavier_uniform(input, hidden, rng),
            b1: Matrix::zeros(1, hidden),
            w2: xavier_uniform(hidden, classes, rng),
            b2: Matrix::zeros(1, classes),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            w1: self.w1.zeros_like(),
            b1: self.b1.zeros_like(),
            w2: self.w2.zeros_like(),
            b2: self.b2.zeros_like(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FusionTrace {
    fused: Matrix,
    pre: Matrix,
    hidden: Matrix,
    graph_dim: usize,
}

/// Concatenates the two branch outputs and classifies. Returns
/// `(logits, probabilities)`.
pub fn fuse_and_classify(
    h_g: &Matrix,
    h_t: &Matrix,
    params: &FusionParams,
) -> Result<(Matrix, Matrix, FusionTrace), ModelError> {
    let fused = h_g.hcat(h_t)?;
    let pre = affine_forward(&fused, &params.w1, &params.b1)?;
    let hidden = relu(&pre);
    let logits = affine_forward(&hidden, &params.w2, &params.b2)?;
    let probs = softmax_rows(&logits);
    Ok((
        logits,
        probs,
        FusionTrace {
            fused,
            pre,
            hidden,
            graph_dim: h_g.cols(),
        },
    ))
}

impl FusionTrace {
    pub fn fused(&self) -> &Matrix {
        &self.fused
    }

    /// Accumulates into `grads`; returns `(dH_g, dĤ_t)`.
    pub fn backward(
        &self,
        grad_logits: &Matrix,
        params: &FusionParams,
        grads: &mut FusionParams,
    ) -> Result<(Matrix, Matrix), ModelError> {
        let g2 = affine_backward(grad_logits, &self.hidden, &params.w2)?;
        let dpre = relu_backward(&g2.dx, &self.pre)?;
        let g1 = affine_backward(&dpre, &self.fused, &params.w1)?;
        grads.w2.add_assign(&g2.dw)?;
        grads.b2.add_assign(&g2.db)?;
        grads.w1.add_assign(&g1.dw)?;
        grads.b1.add_assign(&g1.db)?;
        Ok(g1.dx.hsplit(self.graph_dim))
    }
}
