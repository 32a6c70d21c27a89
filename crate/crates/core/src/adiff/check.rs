use super::{AdiffError, Tape, Var};

/// Outcome of a central-difference gradient check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_leaf: usize,
}

/// Compares reverse-mode leaf gradients of `output` at `point` against
/// central differences with step `h`.
///
/// The error per leaf is |autodiff − fd| / max(1, |fd|). The tape is left
/// evaluated at `point`.
pub fn grad_check(
    tape: &Tape,
    output: Var<'_>,
    point: &[f64],
    h: f64,
) -> Result<GradCheck, AdiffError> {
    tape.forward(output, point)?;
    let analytic = tape.backward(output)?.leaves();
    let mut probe = point.to_vec();
    let mut worst = GradCheck {
        max_rel_error: 0.0,
        worst_leaf: 0,
    };
    for leaf in 0..point.len() {
        probe[leaf] = point[leaf] + h;
        let up = tape.forward(output, &probe)?;
        probe[leaf] = point[leaf] - h;
        let down = tape.forward(output, &probe)?;
        probe[leaf] = point[leaf];
        let estimate = (up - down) / (2.0 * h);
        if !estimate.is_finite() {
            tape.forward(output, point)?;
            return Err(AdiffError::CheckFailure { leaf, estimate });
        }
        let err = (analytic[leaf] - estimate).abs() / estimate.abs().max(1.0);
        if err > worst.max_rel_error || err.is_nan() {
            worst = GradCheck {
                max_rel_error: err,
                worst_leaf: leaf,
            };
        }
    }
    tape.forward(output, point)?;
    Ok(worst)
}
