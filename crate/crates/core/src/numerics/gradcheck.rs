use super::Tensor;

/// Outcome of comparing analytic gradients against central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub probes: usize,
    pub max_relative_error: f64,
    /// `(tensor, element)` of the worst probe.
    pub worst: Option<(usize, usize)>,
}

/// Relative error `|n - a| / max(|n|, |a|, floor)`.
pub fn relative_error(numeric: f64, analytic: f64, floor: f64) -> f64 {
    (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(floor)
}

/// Central differences `(f(θ + h) - f(θ - h)) / 2h` at each probed
/// `(tensor, element)` of `params`, compared against `analytic`.
pub fn check_gradients<F>(
    params: &[Tensor],
    analytic: &[Tensor],
    probes: &[(usize, usize)],
    h: f64,
    floor: f64,
    mut f: F,
) -> GradCheck
where
    F: FnMut(&[Tensor]) -> f64,
{
    let mut work = params.to_vec();
    let mut out = GradCheck {
        probes: 0,
        max_relative_error: 0.0,
        worst: None,
    };
    for &(t, i) in probes {
        let original = work[t].values()[i];
        work[t].values_mut()[i] = original + h;
        let up = f(&work);
        work[t].values_mut()[i] = original - h;
        let down = f(&work);
        work[t].values_mut()[i] = original;
        let numeric = (up - down) / (2.0 * h);
        let rel = relative_error(numeric, analytic[t].values()[i], floor);
        out.probes += 1;
        if out.worst.is_none() || rel > out.max_relative_error {
            out.max_relative_error = rel;
            out.worst = Some((t, i));
        }
    }
    out
}
