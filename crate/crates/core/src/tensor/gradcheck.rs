//! Central-finite-difference verification of reverse-mode gradients.
//!
//! [`check`] evaluates a scalar-valued function twice per input element with
//! symmetric perturbations and compares the numeric slope against the
//! recorded gradient. It is the independent oracle used by the operator unit
//! tests and by the gradient acceptance suite.

use super::{Tape, Tensor};
use ndarray::ArrayD;

/// Step size for central differences. With f64 this balances truncation
/// (O(h²) ≈ 1e-10) against round-off (O(eps/h) ≈ 1e-11).
pub const DEFAULT_STEP: f64 = 1e-5;

/// Outcome of a finite-difference sweep over every element of every input.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Largest relative error observed across all elements.
    pub max_rel_err: f64,
    /// (input index, flat element index) where the worst error occurred.
    pub worst_element: (usize, usize),
    /// Analytic and numeric derivative at the worst element.
    pub worst_pair: (f64, f64),
    /// Total number of elements checked.
    pub checked: usize,
}

/// Relative error with a unit floor: tiny derivatives are compared absolutely
/// so a zero gradient against a 1e-12 slope does not explode the ratio.
fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

/// Compare reverse-mode gradients of `f` against central differences at
/// every element of every input.
///
/// `f` must produce a one-element tensor from the given inputs. Every input is
/// treated as differentiable. The returned report carries the worst relative
/// error; callers assert it against their tolerance.
pub fn check<F>(inputs: &[ArrayD<f64>], step: f64, f: F) -> GradCheckReport
where
    F: Fn(&Tape, &[Tensor]) -> Tensor,
{
    let coords: Vec<(usize, usize)> = inputs
        .iter()
        .enumerate()
        .flat_map(|(i, arr)| (0..arr.len()).map(move |e| (i, e)))
        .collect();
    check_coords(inputs, step, &coords, f)
}

/// Like [`check`], but probing a deterministic random subset of coordinates:
/// up to `per_array` elements of each input (all of them for small inputs).
/// Suitable for large models where the full sweep is quadratic pain; every
/// input still gets probed.
pub fn check_sampled<F>(
    inputs: &[ArrayD<f64>],
    step: f64,
    per_array: usize,
    seed: u64,
    f: F,
) -> GradCheckReport
where
    F: Fn(&Tape, &[Tensor]) -> Tensor,
{
    use rand::SeedableRng;
    assert!(per_array > 0, "gradcheck: per_array must be positive");
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut coords = Vec::new();
    for (i, arr) in inputs.iter().enumerate() {
        if arr.len() <= per_array {
            coords.extend((0..arr.len()).map(|e| (i, e)));
        } else {
            let picks = rand::seq::index::sample(&mut rng, arr.len(), per_array);
            coords.extend(picks.into_iter().map(|e| (i, e)));
        }
    }
    check_coords(inputs, step, &coords, f)
}

/// Shared sweep over an explicit list of `(input index, flat element)`
/// coordinates.
fn check_coords<F>(
    inputs: &[ArrayD<f64>],
    step: f64,
    coords: &[(usize, usize)],
    f: F,
) -> GradCheckReport
where
    F: Fn(&Tape, &[Tensor]) -> Tensor,
{
    assert!(step > 0.0, "gradcheck: step must be positive");
    let tape = Tape::new();
    let leaves: Vec<Tensor> = inputs.iter().map(|x| tape.leaf(x.clone())).collect();
    let loss = f(&tape, &leaves);
    assert_eq!(loss.len(), 1, "gradcheck: objective must be scalar");
    let grads = tape.backward(&loss);
    // Standardize layout so flat indices line up with the (standard-layout)
    // inputs regardless of how backward passes ordered their outputs.
    let analytic: Vec<ArrayD<f64>> = leaves
        .iter()
        .map(|l| grads.get_or_zero(l).as_standard_layout().to_owned())
        .collect();

    let eval = |xs: &[ArrayD<f64>]| -> f64 {
        let t = Tape::new();
        let consts: Vec<Tensor> = xs.iter().map(|x| Tensor::constant(x.clone())).collect();
        f(&t, &consts).scalar()
    };

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_element: (0, 0),
        worst_pair: (0.0, 0.0),
        checked: 0,
    };
    let mut work: Vec<ArrayD<f64>> = inputs.to_vec();
    for &(i, e) in coords {
        let orig = work[i].as_slice_mut().unwrap()[e];
        work[i].as_slice_mut().unwrap()[e] = orig + step;
        let plus = eval(&work);
        work[i].as_slice_mut().unwrap()[e] = orig - step;
        let minus = eval(&work);
        work[i].as_slice_mut().unwrap()[e] = orig;
        let numeric = (plus - minus) / (2.0 * step);
        let a = analytic[i].as_slice().unwrap()[e];
        let err = rel_err(a, numeric);
        report.checked += 1;
        if err > report.max_rel_err {
            report.max_rel_err = err;
            report.worst_element = (i, e);
            report.worst_pair = (a, numeric);
        }
    }
    report
}
