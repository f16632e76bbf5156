//! Central finite-difference checks of graph gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Graph, Scalar, Tensor, Var};

/// Uniform values in `[-1, 1)`, seeded.
pub fn random_tensor<T: Scalar>(shape: &[usize], seed: u64) -> Tensor<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::lit(rng.random_range(-1.0..1.0))).collect();
    Tensor::new(shape.to_vec(), data).expect("shape and data agree")
}

fn evaluate<T: Scalar>(inputs: &[Tensor<T>], build: &dyn Fn(&mut Graph<T>, &[Var]) -> Var) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let loss = build(&mut g, &vars);
    g.value(loss).item().to_f64().unwrap()
}

/// Largest relative error between analytic gradients and central differences
/// with step `h`, over every element of every input. `build` must return a
/// one-element loss.
///
/// Relative error is `|a - fd| / max(|a|, |fd|, 1e-6)`.
pub fn check_gradients<T: Scalar>(inputs: &[Tensor<T>], build: &dyn Fn(&mut Graph<T>, &[Var]) -> Var, h: f64) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone(), true)).collect();
    let loss = build(&mut g, &vars);
    g.backward(loss).expect("scalar loss");
    let mut worst = 0.0f64;
    for (k, v) in vars.iter().enumerate() {
        let analytic: Vec<f64> = match g.grad(*v) {
            Some(gr) => gr.iter().map(|x| x.to_f64().unwrap()).collect(),
            None => vec![0.0; inputs[k].len()],
        };
        for (idx, &a) in analytic.iter().enumerate() {
            let mut probe = inputs.to_vec();
            let orig = probe[k].data()[idx];
            probe[k].data_mut()[idx] = orig + T::lit(h);
            let plus = evaluate(&probe, build);
            probe[k].data_mut()[idx] = orig - T::lit(h);
            let minus = evaluate(&probe, build);
            let fd = (plus - minus) / (2.0 * h);
            let err = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
            worst = worst.max(err);
        }
    }
    worst
}
