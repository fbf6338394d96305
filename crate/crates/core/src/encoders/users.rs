use rand::Rng;
use serde::{Deserialize, Serialize};

use super::EncoderError;
use crate::numerics::{affine_backward, affine_forward, relu, relu_backward, xavier_uniform, Matrix};

pub const USER_FEATURE_DIM: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub follower_count: i64,
    pub friend_count: i64,
    pub account_age_days: f64,
    pub tweet_count: i64,
    pub verified: u8,
    pub has_description: u8,
}

impl UserProfile {
    pub fn validate(&self) -> Result<(), EncoderError> {
        let bad = |what: &str| Err(EncoderError::InvalidProfile(what.to_string()));
        if self.follower_count < 0 {
            return bad("negative follower_count");
        }
        if self.friend_count < 0 {
            return bad("negative friend_count");
        }
        if self.tweet_count < 0 {
            return bad("negative tweet_count");
        }
        if !self.account_age_days.is_finite() || self.account_age_days < 0.0 {
            return bad("account_age_days must be finite and >= 0");
        }
        if self.verified > 1 || self.has_description > 1 {
            return bad("verified/has_description must be 0 or 1");
        }
        Ok(())
    }
}

/// Raw (pre-normalization) feature vector: log(1+x) of the four counts, then
/// the two flags.
pub fn extract_user_features(profile: &UserProfile) -> Result<[f64; USER_FEATURE_DIM], EncoderError> {
    profile.validate()?;
    Ok([
        (profile.follower_count as f64).ln_1p(),
        (profile.friend_count as f64).ln_1p(),
        profile.account_age_days.ln_1p(),
        (profile.tweet_count as f64).ln_1p(),
        f64::from(profile.verified),
        f64::from(profile.has_description),
    ])
}

/// Per-component z-scoring fitted on training users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNormalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureNormalizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Population mean/std per column. Zero-variance columns keep std 1.
    pub fn fit(rows: &[[f64; USER_FEATURE_DIM]]) -> Self {
        if rows.is_empty() {
            return Self::identity(USER_FEATURE_DIM);
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; USER_FEATURE_DIM];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = [0.0; USER_FEATURE_DIM];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, raw: &[f64; USER_FEATURE_DIM]) -> [f64; USER_FEATURE_DIM] {
        let mut out = [0.0; USER_FEATURE_DIM];
        for i in 0..USER_FEATURE_DIM {
            out[i] = (raw[i] - self.mean[i]) / self.std[i];
        }
        out
    }
}

/// Two affine + ReLU layers mapping profile features to user embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserEncoderParams {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

impl UserEncoderParams {
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Self {
        Self {
            w1: xavier_uniform(input, hidden, rng),
            b1: Matrix::zeros(1, hidden),
            w2: xavier_uniform(hidden, output, rng),
            b2: Matrix::zeros(1, output),
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
pub struct UserEncoderTrace {
    x: Matrix,
    pre1: Matrix,
    h1: Matrix,
    pre2: Matrix,
}

pub fn encode_users(
    features: &Matrix,
    params: &UserEncoderParams,
) -> Result<(Matrix, UserEncoderTrace), EncoderError> {
    let pre1 = affine_forward(features, &params.w1, &params.b1)?;
    let h1 = relu(&pre1);
    let pre2 = affine_forward(&h1, &params.w2, &params.b2)?;
    let out = relu(&pre2);
    Ok((
        out,
        UserEncoderTrace {
            x: features.clone(),
            pre1,
            h1,
            pre2,
        },
    ))
}

impl UserEncoderTrace {
    /// Accumulates parameter gradients into `grads`; returns the input gradient.
    pub fn backward(
        &self,
        grad_out: &Matrix,
        params: &UserEncoderParams,
        grads: &mut UserEncoderParams,
    ) -> Result<Matrix, EncoderError> {
        let d2 = relu_backward(grad_out, &self.pre2)?;
        let g2 = affine_backward(&d2, &self.h1, &params.w2)?;
        let d1 = relu_backward(&g2.dx, &self.pre1)?;
        let g1 = affine_backward(&d1, &self.x, &params.w1)?;
        grads.w2.add_assign(&g2.dw)?;
        grads.b2.add_assign(&g2.db)?;
        grads.w1.add_assign(&g1.dw)?;
        grads.b1.add_assign(&g1.db)?;
        Ok(g1.dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::finite_difference_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_profile() -> UserProfile {
        UserProfile {
            follower_count: 0,
            friend_count: 0,
            account_age_days: 0.0,
            tweet_count: 0,
            verified: 0,
            has_description: 0,
        }
    }

    #[test]
    fn zero_profile_gives_zero_features() {
        assert_eq!(extract_user_features(&zero_profile()).unwrap(), [0.0; 6]);
    }

    #[test]
    fn log_identity() {
        // followers = e - 1 is not an integer count; use the age field for the
        // exact identity and check the count path at 0.
        let mut p = zero_profile();
        p.account_age_days = std::f64::consts::E - 1.0;
        let f = extract_user_features(&p).unwrap();
        assert!((f[2] - 1.0).abs() < 1e-15);
        p.follower_count = 1;
        assert!((extract_user_features(&p).unwrap()[0] - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn negative_counts_rejected() {
        let mut p = zero_profile();
        p.friend_count = -1;
        assert!(matches!(
            extract_user_features(&p),
            Err(EncoderError::InvalidProfile(_))
        ));
        let mut p = zero_profile();
        p.verified = 2;
        assert!(extract_user_features(&p).is_err());
    }

    #[test]
    fn z_scored_training_mean_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<[f64; 6]> = (0..50)
            .map(|_| {
                let p = UserProfile {
                    follower_count: rng.gen_range(0..10_000),
                    friend_count: rng.gen_range(0..500),
                    account_age_days: rng.gen_range(0.0..3000.0),
                    tweet_count: rng.gen_range(0..20_000),
                    verified: rng.gen_range(0..2),
                    has_description: 1,
                };
                extract_user_features(&p).unwrap()
            })
            .collect();
        let norm = FeatureNormalizer::fit(&rows);
        let mut mean = [0.0; 6];
        for r in &rows {
            let z = norm.apply(r);
            for i in 0..6 {
                mean[i] += z[i] / rows.len() as f64;
            }
        }
        for m in mean {
            assert!(m.abs() < 1e-9);
        }
        // constant column keeps std 1 and maps to 0
        assert_eq!(norm.std[5], 1.0);
    }

    #[test]
    fn zero_weights_give_relu_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut params = UserEncoderParams::init(6, 4, 3, &mut rng);
        params.w1.fill(0.0);
        params.w2.fill(0.0);
        params.b2 = Matrix::row_vector(&[0.5, -1.0, 2.0]);
        let x = Matrix::from_rows(&[vec![1.0; 6], vec![-3.0; 6]]);
        let (out, _) = encode_users(&x, &params).unwrap();
        assert_eq!(out.row(0), [0.5, 0.0, 2.0]);
        assert_eq!(out.row(0), out.row(1));
    }

    #[test]
    fn row_independence() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = UserEncoderParams::init(6, 8, 8, &mut rng);
        let row: Vec<f64> = (0..6).map(|i| i as f64 * 0.3 - 0.7).collect();
        let single = Matrix::from_rows(std::slice::from_ref(&row));
        let mut rows = vec![row];
        for k in 0..4 {
            rows.push((0..6).map(|i| (i + k) as f64 * 0.1).collect());
        }
        let batch = Matrix::from_rows(&rows);
        let (a, _) = encode_users(&single, &params).unwrap();
        let (b, _) = encode_users(&batch, &params).unwrap();
        assert_eq!(a.row(0), b.row(0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut params = UserEncoderParams::init(6, 5, 4, &mut rng);
        // positive biases keep most units active so both layers carry gradient
        params.b1.fill(0.3);
        params.b2.fill(0.3);
        let x = Matrix::from_vec(3, 6, (0..18).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let upstream =
            Matrix::from_vec(3, 4, (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let (_, trace) = encode_users(&x, &params).unwrap();
        let mut grads = params.zeros_like();
        let dx = trace.backward(&upstream, &params, &mut grads).unwrap();

        let loss = |p: &[Matrix]| {
            let params = UserEncoderParams {
                w1: p[0].clone(),
                b1: p[1].clone(),
                w2: p[2].clone(),
                b2: p[3].clone(),
            };
            let (out, _) = encode_users(&p[4], &params).unwrap();
            out.hadamard(&upstream).unwrap().data().iter().sum()
        };
        let mut flat = [params.w1, params.b1, params.w2, params.b2, x];
        let analytic = [grads.w1, grads.b1, grads.w2, grads.b2, dx];
        let report = finite_difference_check(loss, &mut flat, &analytic, 1e-5).unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }
}
