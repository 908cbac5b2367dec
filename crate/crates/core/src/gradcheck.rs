//! Central-difference verification of analytic gradients, in `f64`.

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Denominator floor of the relative error. Gradients below it compare by
/// absolute difference scaled by the floor: central differences of an O(1)
/// loss in f64 carry roughly 1e-11 of rounding noise at h = 1e-4, which
/// swamps the relative error of entries near 1e-8.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub index: usize,
    pub max_rel_error: f64,
    pub worst_element: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Builds `f` over leaves bound to `params` and returns the loss value.
pub fn evaluate<F>(f: &F, params: &[Tensor<f64>]) -> Result<f64>
where
    F: for<'g> Fn(&mut Graph<'g, f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.param(p)).collect();
    let loss = f(&mut g, &vars)?;
    if g.value(loss).numel() != 1 {
        return Err(Error::Contract("gradient check needs a scalar function".into()));
    }
    Ok(g.value(loss).item())
}

/// Reverse-mode gradients of `f` for every tensor in `params`.
pub fn analytic_gradients<F>(f: &F, params: &[Tensor<f64>]) -> Result<Vec<Vec<f64>>>
where
    F: for<'g> Fn(&mut Graph<'g, f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.param(p)).collect();
    let loss = f(&mut g, &vars)?;
    g.backward(loss)?;
    Ok(vars
        .iter()
        .zip(params)
        .map(|(&v, p)| {
            g.grad(v)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; p.numel()])
        })
        .collect())
}

/// Compares supplied gradients against central differences with step `h`.
pub fn compare_gradients<F>(
    f: &F,
    params: &[Tensor<f64>],
    analytic: &[Vec<f64>],
    h: f64,
    tol: f64,
) -> Result<GradCheckReport>
where
    F: for<'g> Fn(&mut Graph<'g, f64>, &[Var]) -> Result<Var>,
{
    if h.is_nan() || h <= 0.0 {
        return Err(Error::Parameter(format!("finite-difference step must be > 0, got {h}")));
    }
    if analytic.len() != params.len() {
        return Err(Error::Contract("one gradient per parameter tensor required".into()));
    }
    let first = evaluate(f, params)?;
    let second = evaluate(f, params)?;
    if first.to_bits() != second.to_bits() {
        return Err(Error::InvalidCheck(format!(
            "function is not deterministic ({first} vs {second}); disable dropout or pin its seed"
        )));
    }

    let mut work: Vec<Tensor<f64>> = params.to_vec();
    let mut report = Vec::with_capacity(params.len());
    for (pi, grad) in analytic.iter().enumerate() {
        if grad.len() != params[pi].numel() {
            return Err(Error::Dimension {
                op: "grad_check",
                lhs: params[pi].shape().to_vec(),
                rhs: vec![grad.len()],
            });
        }
        let mut worst = ParamCheck {
            index: pi,
            max_rel_error: 0.0,
            worst_element: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for (e, &g) in grad.iter().enumerate() {
            let orig = work[pi].data()[e];
            work[pi].data_mut()[e] = orig + h;
            let plus = evaluate(f, &work)?;
            work[pi].data_mut()[e] = orig - h;
            let minus = evaluate(f, &work)?;
            work[pi].data_mut()[e] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let err = relative_error(g, numeric);
            // A NaN error is the worst possible and stays recorded.
            if e == 0 || (!worst.max_rel_error.is_nan() && (err.is_nan() || err > worst.max_rel_error)) {
                worst.max_rel_error = err;
                worst.worst_element = e;
                worst.analytic = g;
                worst.numeric = numeric;
            }
        }
        report.push(worst);
    }
    let max_rel_error = report
        .iter()
        .map(|p| p.max_rel_error)
        .fold(0.0, |a: f64, b| if a.is_nan() || b.is_nan() { f64::NAN } else { a.max(b) });
    Ok(GradCheckReport {
        passed: max_rel_error < tol,
        params: report,
        max_rel_error,
        tolerance: tol,
    })
}

/// Analytic gradients of `f` checked against central differences.
pub fn grad_check<F>(f: F, params: &[Tensor<f64>], h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: for<'g> Fn(&mut Graph<'g, f64>, &[Var]) -> Result<Var>,
{
    let analytic = analytic_gradients(&f, params)?;
    compare_gradients(&f, params, &analytic, h, tol)
}
