use super::{Bound, ParamStore, Scalar, Tape, TensorError, Var};

/// Outcome of comparing analytic gradients with central differences.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat coordinate of the worst disagreement.
    pub worst: Option<(String, usize)>,
    /// Analytic and numeric derivative at `worst`.
    pub worst_values: (f64, f64),
    pub coordinates: usize,
}

/// Relative error with an absolute fallback when both magnitudes are below 1e-8.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    let scale = analytic.abs().max(numeric.abs());
    if scale < 1e-8 {
        diff
    } else {
        diff / scale
    }
}

/// Checks every coordinate of every parameter. `loss_fn` builds the loss terms
/// on the given tape from the bound parameter leaves and must be deterministic.
/// The loss is the sum of all entries of the returned tensor; central
/// differences are taken per entry and summed, so small terms are not rounded
/// against large ones.
pub fn finite_diff_check<T, E, F>(
    params: &mut ParamStore<T>,
    eps: T,
    mut loss_fn: F,
) -> Result<GradCheckReport, E>
where
    T: Scalar,
    E: From<TensorError>,
    F: FnMut(&Tape<T>, &Bound) -> Result<Var, E>,
{
    let analytic = {
        let tape = Tape::new();
        let vars = params.bind(&tape);
        let terms = loss_fn(&tape, &vars)?;
        tape.backward(tape.sum_all(terms))?;
        vars.vars().iter().map(|&v| tape.grad_or_zeros(v)).collect::<Vec<_>>()
    };

    let mut eval = |params: &ParamStore<T>| -> Result<Vec<f64>, E> {
        let tape = Tape::new();
        let vars = params.bind(&tape);
        let terms = loss_fn(&tape, &vars)?;
        Ok(tape.with_value(terms, |t| t.data().iter().map(|v| v.as_f64()).collect()))
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        worst_values: (0.0, 0.0),
        coordinates: 0,
    };
    let two_eps = 2.0 * eps.as_f64();
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        for k in 0..params.get(id).len() {
            let orig = params.get(id).data()[k];
            params.get_mut(id).data_mut()[k] = orig + eps;
            let up = eval(params)?;
            params.get_mut(id).data_mut()[k] = orig - eps;
            let down = eval(params)?;
            params.get_mut(id).data_mut()[k] = orig;
            let numeric = up.iter().zip(&down).map(|(u, d)| u - d).sum::<f64>() / two_eps;
            let a = analytic[id.index()].data()[k].as_f64();
            let err = relative_error(a, numeric);
            report.coordinates += 1;
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((params.name(id).to_string(), k));
                report.worst_values = (a, numeric);
            }
        }
    }
    Ok(report)
}
