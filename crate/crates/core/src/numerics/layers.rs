use rand::Rng;

use super::{Matrix, NumericsError};

/// `x · w + b` with `b` broadcast over rows. `b` is a `1 × w.cols` row vector.
pub fn affine_forward(x: &Matrix, w: &Matrix, b: &Matrix) -> Result<Matrix, NumericsError> {
    if x.cols() != w.rows() {
        return Err(NumericsError::shape(x.shape(), w.shape()));
    }
    let mut out = x.matmul(w)?;
    out.add_row_broadcast(b)?;
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct AffineGrads {
    pub dx: Matrix,
    pub dw: Matrix,
    pub db: Matrix,
}

pub fn affine_backward(
    grad_out: &Matrix,
    x: &Matrix,
    w: &Matrix,
) -> Result<AffineGrads, NumericsError> {
    Ok(AffineGrads {
        dx: grad_out.matmul_t(w)?,
        dw: x.t_matmul(grad_out)?,
        db: grad_out.sum_rows(),
    })
}

pub fn relu(x: &Matrix) -> Matrix {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Zeroes the gradient wherever the pre-activation was `<= 0`.
pub fn relu_backward(grad: &Matrix, x: &Matrix) -> Result<Matrix, NumericsError> {
    if grad.shape() != x.shape() {
        return Err(NumericsError::shape(grad.shape(), x.shape()));
    }
    let mut out = grad.clone();
    for (g, &v) in out.data_mut().iter_mut().zip(x.data()) {
        if v <= 0.0 {
            *g = 0.0;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SoftmaxCrossEntropy {
    /// Mean loss over the batch.
    pub loss: f64,
    pub probs: Matrix,
    pub grad_logits: Matrix,
}

pub fn softmax_cross_entropy(
    logits: &Matrix,
    labels: &[usize],
) -> Result<SoftmaxCrossEntropy, NumericsError> {
    let (n, d) = logits.shape();
    if labels.len() != n {
        return Err(NumericsError::shape((n, d), (labels.len(), 1)));
    }
    let mut probs = Matrix::zeros(n, d);
    let mut loss = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        if label >= d {
            return Err(NumericsError::LabelOutOfRange {
                row: r,
                label,
                classes: d,
            });
        }
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for &v in row {
            sum += (v - max).exp();
        }
        let log_sum = sum.ln();
        for (p, &v) in probs.row_mut(r).iter_mut().zip(row) {
            *p = (v - max).exp() / sum;
        }
        // -log softmax computed in log space for stability.
        loss += log_sum - (row[label] - max);
    }
    let scale = if n > 0 { 1.0 / n as f64 } else { 0.0 };
    let mut grad_logits = probs.clone();
    for (r, &label) in labels.iter().enumerate() {
        let row = grad_logits.row_mut(r);
        row[label] -= 1.0;
        row.iter_mut().for_each(|g| *g *= scale);
    }
    Ok(SoftmaxCrossEntropy {
        loss: loss * scale,
        probs,
        grad_logits,
    })
}

/// Row-wise softmax.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Glorot uniform initialization.
pub fn xavier_uniform<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let limit = (6.0 / (rows + cols).max(1) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-limit..=limit))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("length matches")
}
