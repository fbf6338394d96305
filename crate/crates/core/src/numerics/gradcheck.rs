use super::{Matrix, NumericsError};

pub const DEFAULT_FD_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(tensor, flat index)` of the worst coordinate.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates: usize,
}

/// Compares `analytic` against central differences of `loss` at `params`.
///
/// Relative error per coordinate is `|a - n| / max(1, |a|, |n|)`. `params`
/// are perturbed in place and restored before returning.
pub fn finite_difference_check<F>(
    mut loss: F,
    params: &mut [Matrix],
    analytic: &[Matrix],
    epsilon: f64,
) -> Result<GradCheckReport, NumericsError>
where
    F: FnMut(&[Matrix]) -> f64,
{
    if !(epsilon > 0.0) {
        return Err(NumericsError::BadEpsilon(epsilon));
    }
    if params.len() != analytic.len() {
        return Err(NumericsError::shape((params.len(), 0), (analytic.len(), 0)));
    }
    for (p, a) in params.iter().zip(analytic) {
        if p.shape() != a.shape() {
            return Err(NumericsError::shape(p.shape(), a.shape()));
        }
    }

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
        coordinates: 0,
    };
    for t in 0..params.len() {
        for i in 0..params[t].len() {
            let orig = params[t].data()[i];
            params[t].data_mut()[i] = orig + epsilon;
            let plus = loss(params);
            params[t].data_mut()[i] = orig - epsilon;
            let minus = loss(params);
            params[t].data_mut()[i] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(NumericsError::NonFiniteLoss { tensor: t, index: i });
            }
            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = analytic[t].data()[i];
            let rel = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            report.coordinates += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = (t, i);
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
