//! GRU text encoder with backpropagation through time.
//!
//! Row-vector convention: `z = σ(x W_z + h U_z + b_z)`, likewise for `r`,
//! `h̃ = tanh(x W_h + (r ⊙ h) U_h + b_h)`, `h' = (1 − z) ⊙ h + z ⊙ h̃`.
//! Sequences are post-padded, so at step `t` only sequences with
//! `true_length > t` advance and padded steps carry the state unchanged.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{EncoderError, TokenSequence, PAD, UNK};
use crate::numerics::{xavier_uniform, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruParams {
    pub w_z: Matrix,
    pub w_r: Matrix,
    pub w_h: Matrix,
    pub u_z: Matrix,
    pub u_r: Matrix,
    pub u_h: Matrix,
    pub b_z: Matrix,
    pub b_r: Matrix,
    pub b_h: Matrix,
}

impl GruParams {
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            w_z: xavier_uniform(input, hidden, rng),
            w_r: xavier_uniform(input, hidden, rng),
            w_h: xavier_uniform(input, hidden, rng),
            u_z: xavier_uniform(hidden, hidden, rng),
            u_r: xavier_uniform(hidden, hidden, rng),
            u_h: xavier_uniform(hidden, hidden, rng),
            b_z: Matrix::zeros(1, hidden),
            b_r: Matrix::zeros(1, hidden),
            b_h: Matrix::zeros(1, hidden),
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_z: Matrix::zeros(input, hidden),
            w_r: Matrix::zeros(input, hidden),
            w_h: Matrix::zeros(input, hidden),
            u_z: Matrix::zeros(hidden, hidden),
            u_r: Matrix::zeros(hidden, hidden),
            u_h: Matrix::zeros(hidden, hidden),
            b_z: Matrix::zeros(1, hidden),
            b_r: Matrix::zeros(1, hidden),
            b_h: Matrix::zeros(1, hidden),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_z.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_z.cols()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim(), self.hidden_dim())
    }

    fn check(&self, emb: &Matrix) -> Result<(), EncoderError> {
        let (e, h) = (self.input_dim(), self.hidden_dim());
        let ok = emb.cols() == e
            && [&self.w_z, &self.w_r, &self.w_h]
                .iter()
                .all(|m| m.shape() == (e, h))
            && [&self.u_z, &self.u_r, &self.u_h]
                .iter()
                .all(|m| m.shape() == (h, h))
            && [&self.b_z, &self.b_r, &self.b_h]
                .iter()
                .all(|m| m.shape() == (1, h));
        if ok {
            Ok(())
        } else {
            Err(EncoderError::TraceMismatch(format!(
                "GRU params inconsistent with embedding dim {}",
                emb.cols()
            )))
        }
    }
}

#[derive(Debug, Clone)]
struct Step {
    active: Vec<usize>,
    tokens: Vec<usize>,
    x: Matrix,
    h_prev: Matrix,
    z: Matrix,
    r: Matrix,
    cand: Matrix,
    rh: Matrix,
}

#[derive(Debug, Clone)]
pub struct GruTrace {
    n: usize,
    hidden: usize,
    steps: Vec<Step>,
}

#[derive(Debug, Clone)]
pub struct GruGrads {
    pub params: GruParams,
    /// Dense gradient for the embedding matrix; `PAD` and `UNK` rows are zero.
    pub emb: Matrix,
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Encodes one sequence; returns a `1 × h` row.
pub fn gru_forward(
    seq: &TokenSequence,
    emb: &Matrix,
    params: &GruParams,
) -> Result<(Matrix, GruTrace), EncoderError> {
    gru_forward_batch(std::slice::from_ref(seq), emb, params)
}

/// Encodes a batch; row `i` of the result is the state after the last
/// non-PAD token of `seqs[i]` (zero if it has none).
pub fn gru_forward_batch(
    seqs: &[TokenSequence],
    emb: &Matrix,
    params: &GruParams,
) -> Result<(Matrix, GruTrace), EncoderError> {
    params.check(emb)?;
    let h = params.hidden_dim();
    let n = seqs.len();
    let mut state = Matrix::zeros(n, h);
    let max_len = seqs.iter().map(|s| s.true_length).max().unwrap_or(0);
    let mut steps = Vec::with_capacity(max_len);
    for t in 0..max_len {
        let active: Vec<usize> = (0..n).filter(|&i| seqs[i].true_length > t).collect();
        let tokens: Vec<usize> = active.iter().map(|&i| seqs[i].ids[t]).collect();
        if let Some(&bad) = tokens.iter().find(|&&tok| tok >= emb.rows()) {
            return Err(EncoderError::TraceMismatch(format!(
                "token id {bad} outside embedding table of {} rows",
                emb.rows()
            )));
        }
        let x = emb.select_rows(&tokens);
        let h_prev = state.select_rows(&active);

        let mut z = x.matmul(&params.w_z)?;
        z.add_assign(&h_prev.matmul(&params.u_z)?)?;
        z.add_row_broadcast(&params.b_z)?;
        let z = z.map(sigmoid);

        let mut r = x.matmul(&params.w_r)?;
        r.add_assign(&h_prev.matmul(&params.u_r)?)?;
        r.add_row_broadcast(&params.b_r)?;
        let r = r.map(sigmoid);

        let rh = r.hadamard(&h_prev)?;
        let mut cand = x.matmul(&params.w_h)?;
        cand.add_assign(&rh.matmul(&params.u_h)?)?;
        cand.add_row_broadcast(&params.b_h)?;
        let cand = cand.map(f64::tanh);

        for (a, &row) in active.iter().enumerate() {
            let zr = z.row(a);
            let cr = cand.row(a);
            let hp = h_prev.row(a);
            for (j, out) in state.row_mut(row).iter_mut().enumerate() {
                *out = (1.0 - zr[j]) * hp[j] + zr[j] * cr[j];
            }
        }
        steps.push(Step {
            active,
            tokens,
            x,
            h_prev,
            z,
            r,
            cand,
            rh,
        });
    }
    Ok((
        state,
        GruTrace {
            n,
            hidden: h,
            steps,
        },
    ))
}

/// Backpropagation through time over the non-PAD steps recorded in `trace`.
pub fn gru_backward(
    trace: &GruTrace,
    grad_out: &Matrix,
    emb: &Matrix,
    params: &GruParams,
) -> Result<GruGrads, EncoderError> {
    if grad_out.shape() != (trace.n, trace.hidden) {
        return Err(EncoderError::TraceMismatch(format!(
            "grad_out {}x{} for trace of {} sequences, hidden {}",
            grad_out.rows(),
            grad_out.cols(),
            trace.n,
            trace.hidden
        )));
    }
    params.check(emb)?;
    let mut grads = params.zeros_like();
    let mut demb = Matrix::zeros(emb.rows(), emb.cols());
    let mut dstate = grad_out.clone();

    for step in trace.steps.iter().rev() {
        let dh = dstate.select_rows(&step.active);
        let a = step.active.len();
        let hid = trace.hidden;

        let mut da_z = Matrix::zeros(a, hid);
        let mut da_h = Matrix::zeros(a, hid);
        let mut dh_prev = Matrix::zeros(a, hid);
        for i in 0..a {
            for j in 0..hid {
                let g = dh.get(i, j);
                let z = step.z.get(i, j);
                let c = step.cand.get(i, j);
                let hp = step.h_prev.get(i, j);
                dh_prev.set(i, j, g * (1.0 - z));
                da_z.set(i, j, g * (c - hp) * z * (1.0 - z));
                da_h.set(i, j, g * z * (1.0 - c * c));
            }
        }
        let d_rh = da_h.matmul_t(&params.u_h)?;
        let mut da_r = Matrix::zeros(a, hid);
        for i in 0..a {
            for j in 0..hid {
                let r = step.r.get(i, j);
                let drh = d_rh.get(i, j);
                da_r.set(i, j, drh * step.h_prev.get(i, j) * r * (1.0 - r));
                let cur = dh_prev.get(i, j);
                dh_prev.set(i, j, cur + drh * r);
            }
        }

        grads.w_z.add_assign(&step.x.t_matmul(&da_z)?)?;
        grads.w_r.add_assign(&step.x.t_matmul(&da_r)?)?;
        grads.w_h.add_assign(&step.x.t_matmul(&da_h)?)?;
        grads.u_z.add_assign(&step.h_prev.t_matmul(&da_z)?)?;
        grads.u_r.add_assign(&step.h_prev.t_matmul(&da_r)?)?;
        grads.u_h.add_assign(&step.rh.t_matmul(&da_h)?)?;
        grads.b_z.add_assign(&da_z.sum_rows())?;
        grads.b_r.add_assign(&da_r.sum_rows())?;
        grads.b_h.add_assign(&da_h.sum_rows())?;

        dh_prev.add_assign(&da_z.matmul_t(&params.u_z)?)?;
        dh_prev.add_assign(&da_r.matmul_t(&params.u_r)?)?;

        let mut dx = da_z.matmul_t(&params.w_z)?;
        dx.add_assign(&da_r.matmul_t(&params.w_r)?)?;
        dx.add_assign(&da_h.matmul_t(&params.w_h)?)?;
        for (i, &tok) in step.tokens.iter().enumerate() {
            if tok == PAD || tok == UNK {
                continue;
            }
            for (d, g) in demb.row_mut(tok).iter_mut().zip(dx.row(i)) {
                *d += g;
            }
        }
        for (i, &row) in step.active.iter().enumerate() {
            dstate.row_mut(row).copy_from_slice(dh_prev.row(i));
        }
    }
    Ok(GruGrads {
        params: grads,
        emb: demb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::finite_difference_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap()
    }

    fn random_params(e: usize, h: usize, rng: &mut ChaCha8Rng) -> GruParams {
        GruParams {
            w_z: random(e, h, rng),
            w_r: random(e, h, rng),
            w_h: random(e, h, rng),
            u_z: random(h, h, rng),
            u_r: random(h, h, rng),
            u_h: random(h, h, rng),
            b_z: random(1, h, rng),
            b_r: random(1, h, rng),
            b_h: random(1, h, rng),
        }
    }

    fn to_vec(p: &GruParams) -> Vec<Matrix> {
        vec![
            p.w_z.clone(),
            p.w_r.clone(),
            p.w_h.clone(),
            p.u_z.clone(),
            p.u_r.clone(),
            p.u_h.clone(),
            p.b_z.clone(),
            p.b_r.clone(),
            p.b_h.clone(),
        ]
    }

    fn from_slice(p: &[Matrix]) -> GruParams {
        GruParams {
            w_z: p[0].clone(),
            w_r: p[1].clone(),
            w_h: p[2].clone(),
            u_z: p[3].clone(),
            u_r: p[4].clone(),
            u_h: p[5].clone(),
            b_z: p[6].clone(),
            b_r: p[7].clone(),
            b_h: p[8].clone(),
        }
    }

    #[test]
    fn zero_params_are_a_fixed_point() {
        let emb = Matrix::filled(5, 3, 0.7);
        let params = GruParams::zeros(3, 4);
        let seq = TokenSequence::from_ids(&[2, 3, 4], 6);
        let (out, trace) = gru_forward(&seq, &emb, &params).unwrap();
        assert_eq!(out, Matrix::zeros(1, 4));
        for s in &trace.steps {
            assert!(s.z.data().iter().all(|&z| z == 0.5));
            assert!(s.cand.data().iter().all(|&c| c == 0.0));
        }
    }

    #[test]
    fn empty_sequence_encodes_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let emb = random(5, 3, &mut rng);
        let params = random_params(3, 4, &mut rng);
        let (out, _) = gru_forward(&TokenSequence::from_ids(&[], 4), &emb, &params).unwrap();
        assert_eq!(out, Matrix::zeros(1, 4));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let emb = random(5, 3, &mut rng);
        let params = random_params(3, 4, &mut rng);
        let seq = TokenSequence::from_ids(&[2, 3], 4);
        let (_, trace) = gru_forward(&seq, &emb, &params).unwrap();
        let g = gru_backward(&trace, &Matrix::zeros(1, 4), &emb, &params).unwrap();
        assert!(to_vec(&g.params).iter().all(|m| m.data().iter().all(|&v| v == 0.0)));
        assert!(g.emb.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn padding_and_batching_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let emb = random(6, 3, &mut rng);
        let params = random_params(3, 5, &mut rng);
        let short = TokenSequence::from_ids(&[2, 5, 3], 3);
        let long = TokenSequence::from_ids(&[2, 5, 3], 12);
        let (a, _) = gru_forward(&short, &emb, &params).unwrap();
        let (b, _) = gru_forward(&long, &emb, &params).unwrap();
        assert_eq!(a, b);
        let other = TokenSequence::from_ids(&[4, 4, 4, 4, 4, 4], 12);
        let (batch, _) = gru_forward_batch(&[other, long], &emb, &params).unwrap();
        assert_eq!(batch.row(1), a.row(0));
    }

    #[test]
    fn single_step_matches_hand_derivation() {
        // One step from h0 = 0: h = z ⊙ tanh(x W_h + b_h), z = σ(x W_z + b_z).
        // dh/dW_h[i][j] = z_j (1 - c_j²) x_i for upstream 1 on unit j.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let emb = random(4, 2, &mut rng);
        let params = random_params(2, 3, &mut rng);
        let seq = TokenSequence::from_ids(&[2], 1);
        let (out, trace) = gru_forward(&seq, &emb, &params).unwrap();
        let x = emb.row(2);
        let mut up = Matrix::zeros(1, 3);
        up.set(0, 1, 1.0);
        let g = gru_backward(&trace, &up, &emb, &params).unwrap();
        let j = 1;
        let az = x[0] * params.w_z.get(0, j) + x[1] * params.w_z.get(1, j) + params.b_z.get(0, j);
        let ah = x[0] * params.w_h.get(0, j) + x[1] * params.w_h.get(1, j) + params.b_h.get(0, j);
        let z = 1.0 / (1.0 + (-az).exp());
        let c = ah.tanh();
        assert!((out.get(0, j) - z * c).abs() < 1e-14);
        for i in 0..2 {
            let expected = z * (1.0 - c * c) * x[i];
            assert!((g.params.w_h.get(i, j) - expected).abs() < 1e-14);
            let expected_z = c * z * (1.0 - z) * x[i];
            assert!((g.params.w_z.get(i, j) - expected_z).abs() < 1e-14);
        }
        // r multiplies h0 = 0, so it receives no gradient on the first step
        assert!(g.params.w_r.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn three_step_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (v, e, h) = (6, 4, 5);
        let emb = random(v, e, &mut rng);
        let params = random_params(e, h, &mut rng);
        let seqs = [
            TokenSequence::from_ids(&[2, 3, 4], 5),
            TokenSequence::from_ids(&[5, 1, 2], 5),
            TokenSequence::from_ids(&[3], 5),
        ];
        let upstream = random(3, h, &mut rng);
        let (_, trace) = gru_forward_batch(&seqs, &emb, &params).unwrap();
        let grads = gru_backward(&trace, &upstream, &emb, &params).unwrap();

        let mut flat = to_vec(&params);
        flat.push(emb.clone());
        let mut analytic = to_vec(&grads.params);
        analytic.push(grads.emb.clone());

        // UNK is frozen: pin its row so the numeric derivative is zero too.
        let loss = |p: &[Matrix]| {
            let mut table = p[9].clone();
            table.row_mut(UNK).copy_from_slice(emb.row(UNK));
            let (out, _) = gru_forward_batch(&seqs, &table, &from_slice(p)).unwrap();
            out.hadamard(&upstream).unwrap().data().iter().sum::<f64>()
        };
        let report = finite_difference_check(loss, &mut flat, &analytic, 1e-5).unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn hidden_state_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let emb = random(10, 4, &mut rng).scale(5.0);
        let params = random_params(4, 6, &mut rng);
        let params = GruParams {
            w_h: params.w_h.scale(10.0),
            ..params
        };
        let seq = TokenSequence::from_ids(&[2, 3, 4, 5, 6, 7, 8, 9], 8);
        let (out, _) = gru_forward(&seq, &emb, &params).unwrap();
        assert!(out.data().iter().all(|v| v.abs() < 1.0));
    }
}
