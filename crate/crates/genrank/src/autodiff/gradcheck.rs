//! Central finite-difference gradient checking.
//!
//! The checker re-evaluates a forward function at perturbed inputs and never
//! touches backward rules, so it stays an independent oracle for them.

use crate::autodiff::Tensor;

/// Relative error with a unit floor, so near-zero gradients are compared
/// absolutely: |a-b| / max(1, |a|, |b|).
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1.0_f64.max(a.abs()).max(b.abs())
}

/// Central finite differences of `f` at `inputs`, one tensor of partials per
/// input, all coordinates.
pub fn finite_difference<F>(f: F, inputs: &[Tensor], h: f64) -> Vec<Tensor>
where
    F: Fn(&[Tensor]) -> f64,
{
    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut grads = Vec::with_capacity(inputs.len());
    for i in 0..inputs.len() {
        let mut g = vec![0.0; inputs[i].numel()];
        for j in 0..inputs[i].numel() {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + h;
            let up = f(&work);
            work[i].data_mut()[j] = orig - h;
            let down = f(&work);
            work[i].data_mut()[j] = orig;
            g[j] = (up - down) / (2.0 * h);
        }
        grads.push(Tensor::new(inputs[i].shape().to_vec(), g).expect("shape matches input"));
    }
    grads
}

/// Central finite differences at a sampled subset of coordinates of one
/// input: returns `(coordinate, partial)` pairs.
pub fn finite_difference_at<F>(
    f: F,
    inputs: &[Tensor],
    which: usize,
    coords: &[usize],
    h: f64,
) -> Vec<(usize, f64)>
where
    F: Fn(&[Tensor]) -> f64,
{
    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut out = Vec::with_capacity(coords.len());
    for &j in coords {
        let orig = work[which].data()[j];
        work[which].data_mut()[j] = orig + h;
        let up = f(&work);
        work[which].data_mut()[j] = orig - h;
        let down = f(&work);
        work[which].data_mut()[j] = orig;
        out.push((j, (up - down) / (2.0 * h)));
    }
    out
}

/// Worst relative error between analytic gradients and full finite
/// differences of the same forward function.
pub fn max_gradient_error<F>(f: F, inputs: &[Tensor], analytic: &[Tensor], h: f64) -> f64
where
    F: Fn(&[Tensor]) -> f64,
{
    let fd = finite_difference(&f, inputs, h);
    let mut worst = 0.0_f64;
    for (a, b) in analytic.iter().zip(&fd) {
        for (&x, &y) in a.data().iter().zip(b.data()) {
            worst = worst.max(relative_error(x, y));
        }
    }
    worst
}
