//! Log-domain weight arithmetic.
//!
//! The shifted-exponential sum inside [`logsumexp`] is the innermost loop of
//! the O(N²) marginal weight computation, so it uses a branch-free
//! exponential that the compiler can vectorize. Accuracy is within a few ulp
//! of `f64::exp` on `(-708, 0]`.

use std::ops::Deref;

use crate::error::{Error, Result};

const LANES: usize = 8;

/// `exp(x)` for `x <= 0`, flushed to exactly zero below `-708`.
#[inline(always)]
pub(crate) fn exp_nonpositive(x: f64) -> f64 {
    const LOG2E: f64 = std::f64::consts::LOG2_E;
    const LN2_HI: f64 = 6.931_471_803_691_238e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    // 1.5 * 2^52: adding it rounds to an integer held in the low mantissa bits.
    const SHIFT: f64 = 6_755_399_441_055_744.0;

    // Written as selects rather than `f64::max` so the loop vectorizes.
    let clamped = if x > -708.0 { x } else { -708.0 };
    let kt = clamped.mul_add(LOG2E, SHIFT);
    let k = kt - SHIFT;
    let r = (-k).mul_add(LN2_LO, (-k).mul_add(LN2_HI, clamped));
    let mut p: f64 = 1.0 / 39_916_800.0;
    p = p.mul_add(r, 1.0 / 3_628_800.0);
    p = p.mul_add(r, 1.0 / 362_880.0);
    p = p.mul_add(r, 1.0 / 40_320.0);
    p = p.mul_add(r, 1.0 / 5_040.0);
    p = p.mul_add(r, 1.0 / 720.0);
    p = p.mul_add(r, 1.0 / 120.0);
    p = p.mul_add(r, 1.0 / 24.0);
    p = p.mul_add(r, 1.0 / 6.0);
    p = p.mul_add(r, 0.5);
    p = p.mul_add(r, 1.0);
    p = p.mul_add(r, 1.0);
    let scale = f64::from_bits(kt.to_bits().wrapping_add(1023) << 52);
    let v = p * scale;
    if x < -708.0 {
        0.0
    } else {
        v
    }
}

#[inline]
fn lane_max(v: &[f64]) -> f64 {
    let mut acc = [f64::NEG_INFINITY; LANES];
    let chunks = v.chunks_exact(LANES);
    let tail = chunks.remainder();
    for c in chunks {
        for l in 0..LANES {
            acc[l] = if c[l] > acc[l] { c[l] } else { acc[l] };
        }
    }
    let mut m = acc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for &t in tail {
        m = m.max(t);
    }
    m
}

/// Σ exp(v_i − shift) with a fixed lane-wise reduction order, plus the raw
/// sum Σ v_i, which is NaN exactly when some entry is (no entry is +inf here).
#[inline]
fn shifted_exp_sum(v: &[f64], shift: f64) -> (f64, f64) {
    let mut acc = [0.0f64; LANES];
    let mut raw = [0.0f64; LANES];
    let chunks = v.chunks_exact(LANES);
    let tail = chunks.remainder();
    for c in chunks {
        for l in 0..LANES {
            acc[l] += exp_nonpositive(c[l] - shift);
            raw[l] += c[l];
        }
    }
    let (mut s, mut r) = (0.0, 0.0);
    for l in 0..LANES {
        s += acc[l];
        r += raw[l];
    }
    for &t in tail {
        s += exp_nonpositive(t - shift);
        r += t;
    }
    (s, r)
}

/// `log Σ exp(v_i)`, stabilized by the maximum entry.
pub fn logsumexp(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::InvalidInput("logsumexp of an empty vector".into()));
    }
    let m = lane_max(v);
    if m == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    if m == f64::NEG_INFINITY {
        if v.iter().any(|x| x.is_nan()) {
            return Err(Error::InvalidInput("NaN log-weight".into()));
        }
        return Err(Error::extinction("all log-weights are -inf"));
    }
    let (s, raw) = shifted_exp_sum(v, m);
    if raw.is_nan() {
        return Err(Error::InvalidInput("NaN log-weight".into()));
    }
    Ok(m + s.ln())
}

/// Normalized weights `exp(v_i − logsumexp(v))` and the log mean weight
/// `logsumexp(v) − ln N`.
pub fn normalize_log_weights(v: &[f64]) -> Result<(Vec<f64>, f64)> {
    let lse = logsumexp(v)?;
    if !lse.is_finite() {
        return Err(Error::InvalidInput(
            "log-weights contain +inf; cannot normalize".into(),
        ));
    }
    let weights = v.iter().map(|&x| (x - lse).exp()).collect();
    Ok((weights, lse - (v.len() as f64).ln()))
}

/// Log of the normalized weights, `v_i − logsumexp(v)`.
pub fn normalized_log_weights(v: &[f64]) -> Result<Vec<f64>> {
    let lse = logsumexp(v)?;
    Ok(v.iter().map(|&x| x - lse).collect())
}

/// Effective sample size `1 / Σ W_i²` of a normalized weight vector.
pub fn ess(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().map(|w| w * w).sum();
    1.0 / s
}

/// A non-empty vector of natural-log weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LogWeights(Vec<f64>);

impl LogWeights {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("empty log-weight vector".into()));
        }
        Ok(LogWeights(values))
    }

    /// `N` equal weights (all zero in log domain).
    pub fn uniform(n: usize) -> Self {
        LogWeights(vec![0.0; n.max(1)])
    }

    pub fn logsumexp(&self) -> Result<f64> {
        logsumexp(&self.0)
    }

    pub fn normalize(&self) -> Result<(Vec<f64>, f64)> {
        normalize_log_weights(&self.0)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for LogWeights {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fast_exp_matches_libm() {
        let mut worst = 0.0f64;
        for i in 0..200_000 {
            let x = -(i as f64) * 0.00354;
            let rel = ((exp_nonpositive(x) - x.exp()) / x.exp()).abs();
            worst = worst.max(rel);
        }
        assert!(worst < 1e-14, "worst relative error {worst:e}");
        assert_eq!(exp_nonpositive(0.0), 1.0);
        assert_eq!(exp_nonpositive(f64::NEG_INFINITY), 0.0);
        assert_eq!(exp_nonpositive(-1000.0), 0.0);
    }

    #[test]
    fn logsumexp_examples() {
        let ln2 = std::f64::consts::LN_2;
        assert!((logsumexp(&[0.0, 0.0]).unwrap() - ln2).abs() < 1e-15);
        assert!((logsumexp(&[-1000.0, -1000.0]).unwrap() - (-1000.0 + ln2)).abs() < 1e-12);
        assert!((logsumexp(&[0.0, 3f64.ln()]).unwrap() - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn logsumexp_rejects_degenerate_input() {
        assert!(matches!(
            logsumexp(&[f64::NEG_INFINITY; 3]),
            Err(Error::Extinction { .. })
        ));
        assert!(matches!(logsumexp(&[]), Err(Error::InvalidInput(_))));
        assert!(matches!(
            logsumexp(&[0.0, f64::NAN]),
            Err(Error::InvalidInput(_))
        ));
        assert_eq!(logsumexp(&[0.0, f64::INFINITY]).unwrap(), f64::INFINITY);
    }

    #[test]
    fn logsumexp_ignores_minus_infinity_entries() {
        let v = [f64::NEG_INFINITY, 1.5, f64::NEG_INFINITY];
        assert_eq!(logsumexp(&v).unwrap(), 1.5);
    }

    #[test]
    fn normalize_examples() {
        let (w, lm) = normalize_log_weights(&[0.0, 0.0]).unwrap();
        assert_eq!(w, vec![0.5, 0.5]);
        assert_eq!(lm, 0.0);

        let (w, lm) = normalize_log_weights(&[0.0, 3f64.ln()]).unwrap();
        assert!((w[0] - 0.25).abs() < 1e-15 && (w[1] - 0.75).abs() < 1e-15);
        assert!((lm - 2f64.ln()).abs() < 1e-15);

        let (w, lm) = normalize_log_weights(&[-5.0; 4]).unwrap();
        assert!(w.iter().all(|&x| (x - 0.25).abs() < 1e-15));
        assert!((lm + 5.0).abs() < 1e-14);
    }

    #[test]
    fn normalize_all_zero_weights_is_extinction() {
        let err = normalize_log_weights(&[f64::NEG_INFINITY; 4]).unwrap_err();
        assert!(err.is_numerical());
    }

    #[test]
    fn ess_examples() {
        assert!((ess(&[0.125; 8]) - 8.0).abs() < 1e-12);
        assert_eq!(ess(&[0.0, 1.0, 0.0]), 1.0);
        assert!((ess(&[0.5, 0.5, 0.0, 0.0]) - 2.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn logsumexp_shift_invariance(
            v in prop::collection::vec(-50.0f64..50.0, 1..200),
            c in -1.0e6f64..1.0e6,
        ) {
            let base = logsumexp(&v).unwrap();
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let moved = logsumexp(&shifted).unwrap();
            // Adding c to each entry rounds at the scale of |c|.
            let tol = 1e-12 + 4.0 * f64::EPSILON * c.abs();
            prop_assert!((moved - base - c).abs() < tol);
        }

        #[test]
        fn normalized_weights_sum_to_one_and_permute(
            v in prop::collection::vec(-300.0f64..300.0, 1..300),
            rot in 0usize..300,
        ) {
            let (w, _) = normalize_log_weights(&v).unwrap();
            let s: f64 = w.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);

            let k = rot % v.len();
            let mut rotated = v.clone();
            rotated.rotate_left(k);
            let (wr, _) = normalize_log_weights(&rotated).unwrap();
            let mut expect = w.clone();
            expect.rotate_left(k);
            // Summation order may move the normalizer by an ulp of |lse|,
            // which every weight inherits as relative error.
            let lse = logsumexp(&v).unwrap();
            let rel = 8.0 * f64::EPSILON * (1.0 + lse.abs());
            for (a, b) in wr.iter().zip(&expect) {
                prop_assert!((a - b).abs() <= rel * b.max(1e-300) + 1e-300);
            }
        }

        #[test]
        fn ess_is_between_one_and_n(v in prop::collection::vec(-30.0f64..30.0, 1..100)) {
            let (w, _) = normalize_log_weights(&v).unwrap();
            let e = ess(&w);
            prop_assert!(e >= 1.0 - 1e-12 && e <= v.len() as f64 * (1.0 + 1e-12));
        }
    }
}
