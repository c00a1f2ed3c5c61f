use rand::Rng;

use crate::error::{Error, Result};
use crate::probkit::SeededStream;

/// Ancestor indices drawn by resampling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResampleOutcome {
    pub ancestors: Vec<usize>,
}

fn cumulative(weights: &[f64]) -> Result<Vec<f64>> {
    if weights.is_empty() {
        return Err(Error::InvalidInput("cannot resample an empty cloud".into()));
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidInput(
            "resampling weights must be finite and nonnegative".into(),
        ));
    }
    let mut acc = 0.0;
    let cum: Vec<f64> = weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect();
    if (acc - 1.0).abs() > 1e-9 {
        return Err(Error::Unnormalized { sum: acc });
    }
    Ok(cum)
}

/// `count` i.i.d. categorical draws with probabilities `weights`.
pub fn multinomial_draws(weights: &[f64], count: usize, stream: SeededStream) -> Result<Vec<usize>> {
    let cum = cumulative(weights)?;
    let total = cum[cum.len() - 1];
    // Rounding can push a draw onto the final boundary; send it to the last
    // index that actually carries mass.
    let last_live = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
    let mut rng = stream.rng();
    Ok((0..count)
        .map(|_| {
            let u = rng.random::<f64>() * total;
            cum.partition_point(|&c| c <= u).min(last_live)
        })
        .collect())
}

/// Multinomial resampling of `N = weights.len()` ancestors.
pub fn multinomial_resample(weights: &[f64], stream: SeededStream) -> Result<ResampleOutcome> {
    Ok(ResampleOutcome {
        ancestors: multinomial_draws(weights, weights.len(), stream)?,
    })
}
