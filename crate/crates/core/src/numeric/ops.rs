use crate::error::{Error, Result};

/// Negative slope used by every LeakyReLU in the crate.
pub const LEAKY_SLOPE: f64 = 0.2;

pub fn inner(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    Ok(dot_unchecked(x, y))
}

#[inline]
pub(crate) fn dot_unchecked(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::Empty("softmax logits"));
    }
    Ok(softmax_unchecked(logits))
}

pub(crate) fn softmax_unchecked(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = out.iter().sum();
    for v in &mut out {
        *v /= total;
    }
    out
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Binary cross-entropy on a logit: `-log σ(z)` for label 1 and
/// `-log(1 - σ(z))` for label 0.
pub fn log_loss(label: u8, logit: f64) -> f64 {
    if label == 1 {
        softplus(-logit)
    } else {
        softplus(logit)
    }
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub fn leaky_relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn inner_examples() {
        assert_eq!(inner(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(inner(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
        assert!(matches!(
            inner(&[1.0], &[1.0, 2.0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn inner_matches_naive_sum_128d() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..128).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..128).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut naive = 0.0;
        for k in 0..128 {
            naive += x[k] * y[k];
        }
        assert_abs_diff_eq!(inner(&x, &y).unwrap(), naive, epsilon = 1e-12);
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[42.0]).unwrap(), vec![1.0]);
        assert_eq!(softmax(&[-3.5, -3.5]).unwrap(), vec![0.5, 0.5]);
        assert!(softmax(&[]).is_err());
        // exp-normalize oracle evaluated without shifting
        let e: Vec<f64> = [1.0f64, 2.0, 3.0].iter().map(|z| z.exp()).collect();
        let total: f64 = e.iter().sum();
        let got = softmax(&[1.0, 2.0, 3.0]).unwrap();
        for (g, x) in got.iter().zip(&e) {
            assert_abs_diff_eq!(*g, x / total, epsilon = 1e-12);
        }
    }

    #[test]
    fn log_loss_examples() {
        assert_abs_diff_eq!(log_loss(1, 0.0), std::f64::consts::LN_2, epsilon = 1e-15);
        assert!(log_loss(1, 50.0) <= 1e-20);
        let oracle = -(1.0 - 1.0 / (1.0 + 3f64.exp())).ln();
        assert_abs_diff_eq!(log_loss(0, -3.0), oracle, epsilon = 1e-12);
        assert!(log_loss(0, 1e3).is_finite());
        assert!(log_loss(1, -1e3).is_finite());
        assert_abs_diff_eq!(log_loss(1, -1e3), 1e3, epsilon = 1e-9);
    }

    proptest! {
        #[test]
        fn softmax_is_probability_and_shift_invariant(
            logits in prop::collection::vec(-30.0f64..30.0, 1..20),
            shift in -100.0f64..100.0,
        ) {
            let p = softmax(&logits).unwrap();
            prop_assert!(p.iter().all(|&v| v > 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let shifted: Vec<f64> = logits.iter().map(|z| z + shift).collect();
            let q = softmax(&shifted).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn log_loss_nonnegative(label in 0u8..2, z in -1e3f64..1e3) {
            let l = log_loss(label, z);
            prop_assert!(l >= 0.0 && l.is_finite());
        }
    }
}
