//! Fully-connected head networks: orthogonally-initialized linear layers
//! with ReLU between them and a configurable gain on the output layer.

use rand_chacha::ChaCha8Rng;

use crate::tensor::init::{orthogonal, zeros1, RELU_GAIN};
use crate::tensor::params::{BoundParams, ParamId, ParamStore};
use crate::tensor::{Tape, Tensor};

/// A stack of linear layers `(w, b)`; weights are stored `(input, output)`.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<(ParamId, ParamId)>,
}

impl Mlp {
    /// Register layers `dims[0] → dims[1] → … → dims.last()`. Hidden layers
    /// use the ReLU gain; the output layer uses `out_gain` (small for actor
    /// logits, 1 for the critic). Biases start at zero.
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        dims: &[usize],
        out_gain: f64,
    ) -> Self {
        assert!(dims.len() >= 2, "mlp needs at least one layer");
        let layers = (0..dims.len() - 1)
            .map(|i| {
                let gain = if i + 2 == dims.len() { out_gain } else { RELU_GAIN };
                let w = store.add(
                    format!("{prefix}.fc{i}.w"),
                    orthogonal(rng, dims[i], dims[i + 1], gain).into_dyn(),
                );
                let b = store.add(format!("{prefix}.fc{i}.b"), zeros1(dims[i + 1]).into_dyn());
                (w, b)
            })
            .collect();
        Mlp { layers }
    }

    /// Forward pass: ReLU after every layer except the last.
    pub fn forward(&self, tape: &Tape, params: &BoundParams, x: &Tensor) -> Tensor {
        let mut h = x.clone();
        for (i, (w, b)) in self.layers.iter().enumerate() {
            h = tape.add_bias(&tape.matmul(&h, params.get(*w)), params.get(*b));
            if i + 1 < self.layers.len() {
                h = tape.relu(&h);
            }
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::SeedableRng;

    #[test]
    fn shapes_and_parameter_count() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mlp = Mlp::new(&mut store, &mut rng, "actor", &[22, 64, 64, 5], 0.01);
        assert_eq!(mlp.layers.len(), 3);
        // 22·64+64 + 64·64+64 + 64·5+5.
        assert_eq!(store.n_scalars(), 1472 + 4160 + 325);

        let tape = Tape::new();
        let params = store.bind_constants();
        let x = Tensor::constant(Array2::<f64>::zeros((7, 22)).into_dyn());
        let y = mlp.forward(&tape, &params, &x);
        assert_eq!(y.shape(), &[7, 5]);
        // Zero input → biases only → zeros everywhere.
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_gain_scales_final_layer() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mlp = Mlp::new(&mut store, &mut rng, "m", &[8, 16, 4], 0.01);
        let (w_out, _) = mlp.layers[1];
        let w = &store.values[w_out.0];
        // Orthogonal columns scaled by 0.01: every column norm equals 0.01.
        let w2 = w.view().into_dimensionality::<ndarray::Ix2>().unwrap();
        for c in 0..4 {
            let norm: f64 = (0..16).map(|r| w2[[r, c]].powi(2)).sum::<f64>().sqrt();
            assert!((norm - 0.01).abs() < 1e-12, "column {c} norm {norm}");
        }
        // Hidden layer carries the ReLU gain; its weight is wide (8x16), so
        // the rows are the orthonormal direction.
        let (w_h, _) = mlp.layers[0];
        let h = store.values[w_h.0].view().into_dimensionality::<ndarray::Ix2>().unwrap();
        let norm: f64 = (0..16).map(|c| h[[0, c]].powi(2)).sum::<f64>().sqrt();
        assert!((norm - RELU_GAIN).abs() < 1e-12);
    }
}
