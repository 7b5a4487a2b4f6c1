//! Central finite-difference gradient checks.

use super::tape::{Mode, Tape, Var};
use super::tensor::{ParamStore, Tensor};
use crate::error::{Error, Result};

/// Default central-difference step for 64-bit checks.
pub const DEFAULT_STEP: f64 = 1e-5;

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(1.0)
}

fn scalar_of(tape: &Tape, root: Var) -> Result<f64> {
    let v = tape.value(root);
    if v.numel() != 1 {
        return Err(Error::NonScalarRoot(v.shape().to_vec()));
    }
    let x = v.item();
    if !x.is_finite() {
        return Err(Error::NonFinite("finite-difference evaluation".into()));
    }
    Ok(x)
}

/// Compares the tape gradient of `f` at `x` with central differences and
/// returns the maximum of `|analytic - numeric| / max(1, |analytic|)`.
///
/// `f` must be pure: it receives a fresh eval-mode tape on every call.
pub fn finite_difference_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    if h <= 0.0 {
        return Err(Error::InvalidArgument(format!("step {h} must be positive")));
    }
    let mut tape = Tape::new(Mode::Eval);
    let leaf = tape.leaf(x.clone().with_grad())?;
    let root = f(&mut tape, leaf)?;
    scalar_of(&tape, root)?;
    let grads = tape.backward(root)?;
    let zeros = vec![0.0; x.numel()];
    let analytic = grads.wrt(leaf).unwrap_or(&zeros).to_vec();

    let eval = |point: Tensor| -> Result<f64> {
        let mut tape = Tape::new(Mode::Eval);
        let v = tape.constant(point)?;
        let root = f(&mut tape, v)?;
        scalar_of(&tape, root)
    };
    let mut worst = 0.0f64;
    for i in 0..x.numel() {
        let mut plus = x.clone();
        plus.data_mut()[i] += h;
        let mut minus = x.clone();
        minus.data_mut()[i] -= h;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * h);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    Ok(worst)
}

/// Same check over every coordinate of every tensor in a parameter store.
pub fn finite_difference_check_params<F>(store: &ParamStore, f: F, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    if h <= 0.0 {
        return Err(Error::InvalidArgument(format!("step {h} must be positive")));
    }
    let mut tape = Tape::new(Mode::Eval);
    let root = f(&mut tape, store)?;
    scalar_of(&tape, root)?;
    let grads = tape.backward(root)?;

    let eval = |s: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new(Mode::Eval);
        let root = f(&mut tape, s)?;
        scalar_of(&tape, root)
    };
    let mut worst = 0.0f64;
    let mut probe = store.clone();
    for id in store.ids() {
        let n = store.get(id).numel();
        let zeros = vec![0.0; n];
        let analytic = grads.param(id).unwrap_or(&zeros).to_vec();
        for i in 0..n {
            let orig = store.get(id).data()[i];
            probe.get_mut(id).data_mut()[i] = orig + h;
            let up = eval(&probe)?;
            probe.get_mut(id).data_mut()[i] = orig - h;
            let down = eval(&probe)?;
            probe.get_mut(id).data_mut()[i] = orig;
            worst = worst.max(relative_error(analytic[i], (up - down) / (2.0 * h)));
        }
    }
    Ok(worst)
}
