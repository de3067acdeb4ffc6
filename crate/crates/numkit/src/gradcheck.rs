//! Finite-difference verification of taped gradients.

use crate::error::{NumError, Result};
use crate::params::{Binder, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Gradients of `f` at `inputs` computed by the tape.
///
/// Inputs that the output does not depend on get a zero gradient.
pub fn analytic_gradient<F>(f: &F, inputs: &[Tensor]) -> Result<Vec<Tensor>>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let mut grads = tape.backward(out)?;
    Ok(vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| {
            grads
                .take(v)
                .unwrap_or_else(|| Tensor::zeros(t.rows(), t.cols()))
        })
        .collect())
}

/// Central differences `(f(x + ε) - f(x - ε)) / 2ε`, one coordinate at a time.
pub fn numeric_gradient<F>(f: &F, inputs: &[Tensor], eps: f64) -> Result<Vec<Tensor>>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        let v = tape.value(out);
        if v.shape() != (1, 1) {
            return Err(NumError::NonScalarLoss(v.rows(), v.cols()));
        }
        Ok(v.item())
    };
    let mut work = inputs.to_vec();
    let mut out = Vec::with_capacity(inputs.len());
    for i in 0..inputs.len() {
        let mut g = Tensor::zeros(inputs[i].rows(), inputs[i].cols());
        for j in 0..inputs[i].len() {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + eps;
            let plus = eval(&work)?;
            work[i].data_mut()[j] = orig - eps;
            let minus = eval(&work)?;
            work[i].data_mut()[j] = orig;
            g.data_mut()[j] = (plus - minus) / (2.0 * eps);
        }
        out.push(g);
    }
    Ok(out)
}

/// `max |analytic − numeric| / max(1, |numeric|)` over every coordinate.
pub fn grad_error(analytic: &[Tensor], numeric: &[Tensor]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .flat_map(|(a, n)| a.data().iter().zip(n.data()))
        .map(|(&a, &n)| (a - n).abs() / n.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Compares the taped gradient of the scalar function `f` with central
/// differences and returns the worst relative error.
pub fn grad_check<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let analytic = analytic_gradient(&f, inputs)?;
    let numeric = numeric_gradient(&f, inputs, eps)?;
    Ok(grad_error(&analytic, &numeric))
}

/// [`grad_check`] over every parameter of `store`, for functions that read
/// their parameters through a [`Binder`].
pub fn param_grad_check<F, E>(store: &ParamStore, f: F, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &mut Binder) -> std::result::Result<Var, E>,
    E: std::fmt::Display,
{
    let scalar = |tape: &Tape, out: Var| -> Result<f64> {
        let v = tape.value(out);
        if v.shape() != (1, 1) {
            return Err(NumError::NonScalarLoss(v.rows(), v.cols()));
        }
        Ok(v.item())
    };
    let eval = |s: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let mut bind = Binder::frozen(s);
        let out = f(&mut tape, &mut bind).map_err(|e| NumError::Invalid(e.to_string()))?;
        scalar(&tape, out)
    };
    let mut tape = Tape::new();
    let mut bind = Binder::new(store);
    let out = f(&mut tape, &mut bind).map_err(|e| NumError::Invalid(e.to_string()))?;
    scalar(&tape, out)?;
    let mut grads = tape.backward(out)?;
    let analytic: Vec<Tensor> = bind
        .collect(&mut grads)
        .into_iter()
        .zip(store.iter())
        .map(|(g, (_, t))| g.unwrap_or_else(|| Tensor::zeros(t.rows(), t.cols())))
        .collect();

    let mut work = store.clone();
    let ids: Vec<_> = store.ids().collect();
    let mut numeric = Vec::with_capacity(ids.len());
    for &id in &ids {
        let (r, c) = store.get(id).shape();
        let mut g = Tensor::zeros(r, c);
        for j in 0..r * c {
            let orig = work.get(id).data()[j];
            work.get_mut(id).data_mut()[j] = orig + eps;
            let plus = eval(&work)?;
            work.get_mut(id).data_mut()[j] = orig - eps;
            let minus = eval(&work)?;
            work.get_mut(id).data_mut()[j] = orig;
            g.data_mut()[j] = (plus - minus) / (2.0 * eps);
        }
        numeric.push(g);
    }
    Ok(grad_error(&analytic, &numeric))
}
