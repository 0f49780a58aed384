//! Central finite-difference gradient checking.
//!
//! The numeric side only re-evaluates the forward closure at perturbed
//! inputs; it never touches the backward machinery it is checking.

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Central-difference gradient of `f` with respect to every element of every
/// input buffer: (f(x+h) - f(x-h)) / 2h.
pub fn numeric_gradient<F>(f: F, inputs: &[Vec<f64>], h: f64) -> Vec<Vec<f64>>
where
    F: Fn(&[Vec<f64>]) -> f64,
{
    let mut work: Vec<Vec<f64>> = inputs.to_vec();
    let mut grads = Vec::with_capacity(inputs.len());
    for ti in 0..inputs.len() {
        let mut g = vec![0.0; inputs[ti].len()];
        for ei in 0..inputs[ti].len() {
            let orig = work[ti][ei];
            work[ti][ei] = orig + h;
            let plus = f(&work);
            work[ti][ei] = orig - h;
            let minus = f(&work);
            work[ti][ei] = orig;
            g[ei] = (plus - minus) / (2.0 * h);
        }
        grads.push(g);
    }
    grads
}

/// Relative error with an absolute floor of 1 so that near-zero gradients are
/// compared absolutely.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1.0))
        .fold(0.0, f64::max)
}

/// Checks analytic gradients of a scalar-valued graph against central finite
/// differences. `build` constructs the loss from parameter tensors whose data
/// comes from `inputs`; the same closure serves both the analytic pass and
/// the numeric re-evaluations.
///
/// Returns the worst relative error across all inputs.
pub fn check_gradients<F>(shapes: &[Vec<usize>], inputs: &[Vec<f64>], build: F, h: f64) -> f64
where
    F: Fn(&[Tensor<f64>]) -> Tensor<f64>,
{
    assert_eq!(shapes.len(), inputs.len());
    let params: Vec<Tensor<f64>> = shapes
        .iter()
        .zip(inputs)
        .map(|(s, d)| Tensor::param(s, d.clone()).unwrap())
        .collect();
    let loss = build(&params);
    loss.backward().expect("backward failed in gradient check");
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .map(|p| p.grad().unwrap_or_else(|| vec![0.0; p.numel()]))
        .collect();

    let eval = |data: &[Vec<f64>]| -> f64 {
        let fresh: Vec<Tensor<f64>> = shapes
            .iter()
            .zip(data)
            .map(|(s, d)| Tensor::param(s, d.clone()).unwrap())
            .collect();
        build(&fresh).item()
    };
    let numeric = numeric_gradient(eval, inputs, h);

    analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| max_rel_error(a, n))
        .fold(0.0, f64::max)
}
