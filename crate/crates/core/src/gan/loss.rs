//! Least-squares adversarial losses, L1 reconstruction and the T60 proxy
//! term.

use crate::acoustics::{t60_proxy_grid, FitStatus, GridLayout, GridShape, ProxyAxis};
use crate::autodiff::{CustomOp, Graph, Scalar, Tensor, Var};
use crate::error::{Error, Result};

use super::model::Normalization;

/// `mean((D(real) - 1)^2) + mean(D(fake)^2)`.
pub fn discriminator_loss<T: Scalar>(g: &mut Graph<T>, d_real: Var, d_fake: Var) -> Result<Var> {
    let real = g.mean_square_to(d_real, T::one());
    let fake = g.mean_square_to(d_fake, T::zero());
    g.weighted_sum(&[(real, T::one()), (fake, T::one())])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub l1: f64,
    pub t60: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { l1: 100.0, t60: 100.0 }
    }
}

/// Weighted generator loss terms; their sum is the optimized total.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossTerms {
    pub adversarial: f64,
    pub l1: f64,
    pub t60p: f64,
    /// Samples whose target T60 could not be fitted and were left out.
    pub t60p_skipped: usize,
}

impl LossTerms {
    pub fn total(&self) -> f64 {
        self.adversarial + self.l1 + self.t60p
    }
}

/// Per-sample T60 proxy targets for a batch and how to read the generated
/// grids.
#[derive(Debug, Clone, Copy)]
pub struct T60pTargets<'a> {
    /// `None` marks a target with no regular fit.
    pub targets: &'a [Option<f64>],
    pub norm: Normalization,
    pub frame_period: f64,
}

/// T60 proxy of one bin-major log-magnitude grid, `None` unless the
/// [-5, -20] dB span was found.
pub fn proxy_target(logmag: &[f32], bins: usize, frames: usize, frame_period: f64) -> Option<f64> {
    let values: Vec<f64> = logmag.iter().map(|&v| v as f64).collect();
    let shape = GridShape {
        frames,
        bins,
        layout: GridLayout::BinMajor,
    };
    let out = t60_proxy_grid(&values, shape, frame_period, ProxyAxis::Frequency);
    (out.status == FitStatus::Regular).then_some(out.t60)
}

struct T60pOp {
    /// d(term)/d(input) for every input element.
    grad: Vec<f64>,
}

impl<T: Scalar> CustomOp<T> for T60pOp {
    fn backward(&self, _: &[&Tensor<T>], _: &Tensor<T>, grad: &[T]) -> Vec<Option<Vec<T>>> {
        let up = grad[0].to_f64().unwrap();
        vec![Some(self.grad.iter().map(|&d| T::lit(d * up)).collect())]
    }
}

/// `mean_i |T60p(fake_i) - t_i| / t_i` over samples with a valid target,
/// on denormalized `[N, 1, bins, frames]` grids. Returns the term and the
/// number of skipped samples; with no valid sample the term is a constant 0.
pub fn t60p_loss<T: Scalar>(g: &mut Graph<T>, fake: Var, t: &T60pTargets) -> Result<(Var, usize)> {
    let shape = g.value(fake).shape().to_vec();
    let [n, 1, bins, frames] = shape[..] else {
        return Err(Error::invalid("fake", format!("expected [N, 1, bins, frames], got {shape:?}")));
    };
    if t.targets.len() != n {
        return Err(Error::ShapeMismatch {
            expected: vec![n],
            actual: vec![t.targets.len()],
        });
    }
    let valid = t.targets.iter().filter(|x| x.is_some()).count();
    let skipped = n - valid;
    if valid == 0 {
        return Ok((g.input(Tensor::scalar(T::zero())), skipped));
    }
    let plane = bins * frames;
    let (lo, half) = (t.norm.min as f64, t.norm.half_range() as f64);
    let grid = GridShape {
        frames,
        bins,
        layout: GridLayout::BinMajor,
    };
    let xv = g.value(fake).data();
    let mut grad = vec![0.0f64; xv.len()];
    let mut total = 0.0;
    for (s, target) in t.targets.iter().enumerate() {
        let Some(target) = *target else { continue };
        let values: Vec<f64> = xv[s * plane..(s + 1) * plane]
            .iter()
            .map(|v| lo + (v.to_f64().unwrap() + 1.0) * half)
            .collect();
        let out = t60_proxy_grid(&values, grid, t.frame_period, ProxyAxis::Frequency);
        let diff = out.t60 - target;
        total += diff.abs() / target;
        let scale = diff.signum() / target * half / valid as f64;
        for (d, gv) in grad[s * plane..(s + 1) * plane].iter_mut().zip(&out.gradient) {
            *d = scale * gv;
        }
    }
    let value = Tensor::scalar(T::lit(total / valid as f64));
    Ok((g.custom(&[fake], value, Box::new(T60pOp { grad })), skipped))
}

/// `(1 - D(fake))^2 + l1 mean|fake - real| + t60 T60p`, with the weighted
/// terms reported separately. The proxy term is skipped entirely when its
/// weight is zero or no targets are given.
pub fn generator_loss<T: Scalar>(
    g: &mut Graph<T>,
    d_fake: Var,
    fake: Var,
    real: Var,
    weights: LossWeights,
    t60: Option<&T60pTargets>,
) -> Result<(Var, LossTerms)> {
    let adv = g.mean_square_to(d_fake, T::one());
    let l1 = g.mean_abs_diff(fake, real)?;
    let (wl1, wt60) = (T::lit(weights.l1), T::lit(weights.t60));
    let mut terms = vec![(adv, T::one()), (l1, wl1)];
    let mut report = LossTerms {
        adversarial: g.value(adv).item().to_f64().unwrap(),
        l1: (wl1 * g.value(l1).item()).to_f64().unwrap(),
        ..LossTerms::default()
    };
    if let Some(t) = t60.filter(|_| weights.t60 != 0.0) {
        let (term, skipped) = t60p_loss(g, fake, t)?;
        report.t60p = (wt60 * g.value(term).item()).to_f64().unwrap();
        report.t60p_skipped = skipped;
        terms.push((term, wt60));
    }
    Ok((g.weighted_sum(&terms)?, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck::check_gradients;

    fn decaying_grid(bins: usize, frames: usize, rate: f64, jitter: f64, seed: u64) -> Vec<f32> {
        let mut state = seed;
        (0..bins * frames)
            .map(|i| {
                let frame = i % frames;
                state = crate::dataset::splitmix64(state);
                let u = (state >> 40) as f64 / (1u64 << 24) as f64 - 0.5;
                (-rate * frame as f64 + jitter * u) as f32
            })
            .collect()
    }

    #[test]
    fn d_loss_identities() {
        let mut g = Graph::<f64>::new();
        let one = g.input(Tensor::filled(vec![4, 1], 1.0));
        let zero = g.input(Tensor::filled(vec![4, 1], 0.0));
        let best = discriminator_loss(&mut g, one, zero).unwrap();
        let worst = discriminator_loss(&mut g, zero, one).unwrap();
        assert_eq!(g.value(best).item(), 0.0);
        assert_eq!(g.value(worst).item(), 2.0);
    }

    #[test]
    fn l1_term_and_offset_invariance() {
        let (bins, frames) = (8, 32);
        // Multiples of 2^-10 keep the f32 and f64 denormalizations identical.
        let real: Vec<f32> = decaying_grid(bins, frames, 0.02, 0.01, 1).iter().map(|v| (v * 1024.0).round() / 1024.0).collect();
        let norm = Normalization::new(-8.0, 0.0).unwrap();
        let targets = [proxy_target(&real.iter().map(|&v| norm.denormalize(v)).collect::<Vec<_>>(), bins, frames, 0.01)];
        assert!(targets[0].is_some());
        let t = T60pTargets {
            targets: &targets,
            norm,
            frame_period: 0.01,
        };
        let mut g = Graph::<f64>::new();
        let real_t: Tensor<f64> = Tensor::new(vec![1, 1, bins, frames], real.iter().map(|&v| v as f64).collect()).unwrap();
        let fake_t = Tensor::new(vec![1, 1, bins, frames], real_t.data().iter().map(|v| v + 0.01).collect()).unwrap();
        let rv = g.input(real_t);
        let fv = g.input(fake_t);
        let d = g.input(Tensor::filled(vec![1, 1], 1.0));
        let (total, terms) = generator_loss(&mut g, d, fv, rv, LossWeights::default(), Some(&t)).unwrap();
        assert_eq!(terms.adversarial, 0.0);
        assert!((terms.l1 - 1.0).abs() < 1e-9, "{}", terms.l1);
        assert!(terms.t60p.abs() < 1e-9, "{}", terms.t60p);
        assert_eq!(g.value(total).item(), terms.total());
    }

    #[test]
    fn t60p_gradient_matches_differences() {
        let (bins, frames) = (4, 24);
        let norm = Normalization::new(-8.0, 0.0).unwrap();
        let real = decaying_grid(bins, frames, 0.3, 0.3, 5);
        let targets = [proxy_target(&real, bins, frames, 0.02), None];
        // A slower decay than the target, in normalized units.
        let fake: Vec<f64> = (0..2)
            .flat_map(|s| decaying_grid(bins, frames, 0.2, 0.3, 9 + s))
            .map(|v| norm.normalize(v) as f64)
            .collect();
        let input = Tensor::new(vec![2, 1, bins, frames], fake).unwrap();
        let build = move |g: &mut Graph<f64>, v: &[Var]| {
            let t = T60pTargets {
                targets: &targets,
                norm,
                frame_period: 0.02,
            };
            t60p_loss(g, v[0], &t).unwrap().0
        };
        let worst = check_gradients(&[input], &build, 1e-5);
        assert!(worst < 1e-3, "{worst}");
    }

    #[test]
    fn zero_weight_or_no_targets_gives_exact_zero() {
        let mut g = Graph::<f32>::new();
        let x = g.input(Tensor::filled(vec![2, 1, 4, 8], 0.5));
        let targets = [None, None];
        let t = T60pTargets {
            targets: &targets,
            norm: Normalization::new(-1.0, 1.0).unwrap(),
            frame_period: 0.01,
        };
        let (term, skipped) = t60p_loss(&mut g, x, &t).unwrap();
        assert_eq!((g.value(term).item(), skipped), (0.0, 2));
        let d = g.input(Tensor::filled(vec![2, 1], 0.0));
        let w = LossWeights { l1: 100.0, t60: 0.0 };
        let (_, terms) = generator_loss(&mut g, d, x, x, w, Some(&t)).unwrap();
        assert_eq!(terms.t60p, 0.0);
        assert_eq!(terms.total(), 1.0);
    }
}
