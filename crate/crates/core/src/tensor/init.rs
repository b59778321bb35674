//! Parameter initialization: orthogonal matrices with configurable gain, plus
//! plain Gaussian and zero fills.

use ndarray::{Array1, Array2, ArrayD};
use rand::Rng;
use rand_distr::StandardNormal;

/// Gain for layers followed by a ReLU (`sqrt(2)`).
pub const RELU_GAIN: f64 = std::f64::consts::SQRT_2;

/// Orthogonally-initialized `(rows, cols)` matrix scaled by `gain`.
///
/// The matrix is the Q factor of a Gaussian draw with signs fixed from the
/// diagonal of R, so the distribution is uniform over orthogonal matrices.
/// When `rows >= cols` the columns are orthonormal; otherwise the rows are.
pub fn orthogonal<R: Rng>(rng: &mut R, rows: usize, cols: usize, gain: f64) -> Array2<f64> {
    assert!(rows > 0 && cols > 0, "orthogonal: empty shape {rows}x{cols}");
    let transpose = rows < cols;
    let (m, n) = if transpose { (cols, rows) } else { (rows, cols) };
    let a = Array2::from_shape_simple_fn((m, n), || rng.sample::<f64, _>(StandardNormal));
    let (mut q, rdiag) = reduced_qr(a);
    for (j, d) in rdiag.iter().enumerate() {
        if *d < 0.0 {
            q.column_mut(j).mapv_inplace(|v| -v);
        }
    }
    q.mapv_inplace(|v| v * gain);
    if transpose {
        q.reversed_axes().as_standard_layout().to_owned()
    } else {
        q
    }
}

/// Householder QR of a tall matrix (`m >= n`), returning the reduced Q
/// (`m x n`, orthonormal columns) and the diagonal of R.
fn reduced_qr(a: Array2<f64>) -> (Array2<f64>, Vec<f64>) {
    let (m, n) = a.dim();
    assert!(m >= n, "reduced_qr: expected tall matrix, got {m}x{n}");
    let mut r = a;
    let mut reflectors: Vec<Array1<f64>> = Vec::with_capacity(n);
    for k in 0..n {
        let mut v: Array1<f64> = r.slice(ndarray::s![k.., k]).to_owned();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let alpha = -v[0].signum() * norm;
        v[0] -= alpha;
        let vnorm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if vnorm > 0.0 {
            v.mapv_inplace(|x| x / vnorm);
            for j in k..n {
                let dot: f64 = v.iter().zip(r.slice(ndarray::s![k.., j])).map(|(a, b)| a * b).sum();
                let mut col = r.slice_mut(ndarray::s![k.., j]);
                for (c, vv) in col.iter_mut().zip(v.iter()) {
                    *c -= 2.0 * dot * vv;
                }
            }
        }
        reflectors.push(v);
    }
    let rdiag: Vec<f64> = (0..n).map(|k| r[[k, k]]).collect();
    let mut q = Array2::<f64>::zeros((m, n));
    for i in 0..n {
        q[[i, i]] = 1.0;
    }
    for k in (0..n).rev() {
        let v = &reflectors[k];
        for j in 0..n {
            let dot: f64 = v.iter().zip(q.slice(ndarray::s![k.., j])).map(|(a, b)| a * b).sum();
            let mut col = q.slice_mut(ndarray::s![k.., j]);
            for (c, vv) in col.iter_mut().zip(v.iter()) {
                *c -= 2.0 * dot * vv;
            }
        }
    }
    (q, rdiag)
}

/// Standard-normal draw of an arbitrary shape, scaled by `std`.
pub fn normal<R: Rng>(rng: &mut R, shape: &[usize], std: f64) -> ArrayD<f64> {
    ArrayD::from_shape_simple_fn(ndarray::IxDyn(shape), || {
        rng.sample::<f64, _>(StandardNormal) * std
    })
}

/// Zero-filled 1-D array (bias vectors).
pub fn zeros1(len: usize) -> Array1<f64> {
    Array1::zeros(len)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn orthogonal_columns_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(rows, cols) in &[(64usize, 22usize), (64, 64), (48, 16), (5, 5)] {
            let q = orthogonal(&mut rng, rows, cols, 1.0);
            let gram = q.t().dot(&q);
            for i in 0..cols {
                for j in 0..cols {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!(
                        (gram[[i, j]] - expect).abs() < 1e-10,
                        "gram[{i},{j}] = {} for {rows}x{cols}",
                        gram[[i, j]]
                    );
                }
            }
        }
    }

    #[test]
    fn orthogonal_rows_when_wide() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let q = orthogonal(&mut rng, 16, 48, 1.0);
        let gram = q.dot(&q.t());
        for i in 0..16 {
            for j in 0..16 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((gram[[i, j]] - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn gain_scales_norms() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let q = orthogonal(&mut rng, 32, 8, 0.01);
        for col in q.columns() {
            let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 0.01).abs() < 1e-12, "column norm {norm}");
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let a = orthogonal(&mut ChaCha8Rng::seed_from_u64(3), 10, 4, 1.0);
        let b = orthogonal(&mut ChaCha8Rng::seed_from_u64(3), 10, 4, 1.0);
        assert_eq!(a, b);
    }
}
