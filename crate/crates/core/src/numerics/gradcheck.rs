use super::params::ParamStore;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// Gradients smaller than this are compared in absolute rather than
/// relative terms: the error is divided by `max(|analytic|, |numeric|, floor)`.
/// Central differences at step 1e-5 carry roundoff near 1e-11 times the loss
/// scale, which makes a purely relative test meaningless for near-zero entries.
pub const RELATIVE_FLOOR: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    /// Flat index of the worst element.
    pub worst_index: usize,
    pub passed: bool,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub tol: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn all_passed(&self) -> bool {
        self.params.iter().all(|p| p.passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    pub fn failures(&self) -> Vec<&ParamCheck> {
        self.params.iter().filter(|p| !p.passed).collect()
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compares tape gradients of `f` against central differences for every
/// scalar of every parameter in `store`.
///
/// `f` must rebuild the whole computation on the tape it is given, reading
/// parameters from the store it is given; it is called once for the analytic
/// pass and twice per scalar.
pub fn grad_check<F>(store: &mut ParamStore, step: f64, tol: f64, mut f: F) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape, &ParamStore) -> Result<Var>,
{
    if step <= 0.0 {
        return Err(Error::Config(format!("finite-difference step must be positive, got {step}")));
    }
    store.zero_grad();
    let mut tape = Tape::new();
    let loss = f(&mut tape, store)?;
    tape.backward(loss, store)?;

    let mut eval = |store: &ParamStore| -> Result<f64> {
        let mut t = Tape::new();
        let l = f(&mut t, store)?;
        t.value(l).item()
    };

    let ids: Vec<_> = store.ids().collect();
    let mut params = Vec::with_capacity(ids.len());
    for id in ids {
        let numel = store.value(id).numel();
        let mut worst = (0.0, 0usize);
        for e in 0..numel {
            let original = store.value(id).data()[e];
            store.value_mut(id)?.data_mut()[e] = original + step;
            let plus = eval(store)?;
            store.value_mut(id)?.data_mut()[e] = original - step;
            let minus = eval(store)?;
            store.value_mut(id)?.data_mut()[e] = original;
            let numeric = (plus - minus) / (2.0 * step);
            let analytic = store.get(id).grad.data()[e];
            let err = relative_error(analytic, numeric);
            if err > worst.0 || err.is_nan() {
                worst = (err, e);
            }
        }
        params.push(ParamCheck {
            name: store.get(id).name.clone(),
            max_rel_error: worst.0,
            worst_index: worst.1,
            passed: worst.0 <= tol,
        });
    }
    Ok(GradCheckReport { tol, params })
}
