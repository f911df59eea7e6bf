//! Central finite-difference gradient checking.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ParamStore, Tape, TensorError, Var};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub eps: f64,
    /// Coordinates probed per parameter; smaller parameters are checked in
    /// full.
    pub samples_per_param: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            eps: 1e-4,
            samples_per_param: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub coordinates: usize,
}

/// `|a - n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

fn eval<F>(store: &ParamStore, f: &F) -> Result<f64, TensorError>
where
    F: Fn(&mut Tape<'_>) -> Result<Var, TensorError>,
{
    let mut tape = Tape::new(store);
    let loss = f(&mut tape)?;
    Ok(tape.value(loss).item())
}

/// Compares tape gradients of the scalar produced by `f` against central
/// differences over every trainable parameter. `f` must be deterministic.
pub fn grad_check<F>(store: &mut ParamStore, f: F, config: GradCheckConfig) -> Result<GradCheckReport, TensorError>
where
    F: Fn(&mut Tape<'_>) -> Result<Var, TensorError>,
{
    let grads = {
        let mut tape = Tape::new(store);
        let loss = f(&mut tape)?;
        tape.backward(loss)?
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        coordinates: 0,
    };
    let ids: Vec<_> = store.ids().filter(|id| store.param(*id).trainable).collect();
    for id in ids {
        let n = store.value(id).len();
        let coords: Vec<usize> = if n <= config.samples_per_param {
            (0..n).collect()
        } else {
            sample(&mut rng, n, config.samples_per_param).into_vec()
        };
        for k in coords {
            let analytic = grads.get(id).map_or(0.0, |g| g.data()[k]);
            let orig = store.value(id).data()[k];
            store.value_mut(id).data_mut()[k] = orig + config.eps;
            let plus = eval(store, &f);
            store.value_mut(id).data_mut()[k] = orig - config.eps;
            let minus = eval(store, &f);
            store.value_mut(id).data_mut()[k] = orig;
            let numeric = (plus? - minus?) / (2.0 * config.eps);
            let err = relative_error(analytic, numeric);
            report.coordinates += 1;
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((store.param(id).name.clone(), k));
            }
        }
    }
    Ok(report)
}
