//! Central finite-difference verification of analytic gradients.

use crate::autodiff::{Graph, Var};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Denominator floor for the relative error, so exact zeros compare cleanly.
pub const REL_ERR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub index: usize,
    pub max_rel_error: f64,
    /// Flat element index where the worst error occurred.
    pub worst_element: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| !p.flagged)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    pub fn flagged(&self) -> Vec<usize> {
        self.params.iter().filter(|p| p.flagged).map(|p| p.index).collect()
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

fn evaluate<T, F>(params: &[Tensor<T>], f: &F) -> Result<f64>
where
    T: Scalar,
    F: Fn(&mut Graph<T>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new(false);
    let vars: Vec<Var> = params.iter().map(|p| g.param(p.clone())).collect();
    let loss = f(&mut g, &vars)?;
    Ok(g.value(loss).data()[0].as_f64())
}

/// Loss value and per-parameter gradients from one backward pass.
pub fn analytic_grads<T, F>(params: &[Tensor<T>], f: &F) -> Result<(f64, Vec<Vec<T>>)>
where
    T: Scalar,
    F: Fn(&mut Graph<T>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new(false);
    let vars: Vec<Var> = params.iter().map(|p| g.param(p.clone())).collect();
    let loss = f(&mut g, &vars)?;
    g.backward(loss)?;
    let value = g.value(loss).data()[0].as_f64();
    Ok((value, vars.iter().map(|&v| g.grad(v)).collect()))
}

/// Compares `analytic` against `(f(x+ε) − f(x−ε)) / 2ε` for every element of
/// every parameter. `f` must be deterministic.
pub fn finite_diff_check<T, F>(
    params: &[Tensor<T>],
    f: &F,
    analytic: &[Vec<T>],
    eps: f64,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    T: Scalar,
    F: Fn(&mut Graph<T>, &[Var]) -> Result<Var>,
{
    let mut work: Vec<Tensor<T>> = params.to_vec();
    let mut report = Vec::with_capacity(params.len());
    for (pi, grad) in analytic.iter().enumerate() {
        let mut check = ParamCheck {
            index: pi,
            max_rel_error: 0.0,
            worst_element: 0,
            analytic: 0.0,
            numeric: 0.0,
            flagged: false,
        };
        for e in 0..work[pi].len() {
            let orig = work[pi].data()[e];
            work[pi].data_mut()[e] = T::from_f64_lossy(orig.as_f64() + eps);
            let plus = evaluate(&work, f)?;
            work[pi].data_mut()[e] = T::from_f64_lossy(orig.as_f64() - eps);
            let minus = evaluate(&work, f)?;
            work[pi].data_mut()[e] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = grad[e].as_f64();
            let err = relative_error(a, numeric);
            if err > check.max_rel_error || e == 0 {
                check.max_rel_error = err;
                check.worst_element = e;
                check.analytic = a;
                check.numeric = numeric;
            }
        }
        check.flagged = check.max_rel_error > tolerance;
        report.push(check);
    }
    Ok(GradCheckReport { params: report, tolerance })
}

/// [`analytic_grads`] followed by [`finite_diff_check`].
pub fn check_gradients<T, F>(params: &[Tensor<T>], f: &F, eps: f64, tolerance: f64) -> Result<GradCheckReport>
where
    T: Scalar,
    F: Fn(&mut Graph<T>, &[Var]) -> Result<Var>,
{
    let (_, grads) = analytic_grads(params, f)?;
    finite_diff_check(params, f, &grads, eps, tolerance)
}
