//! Marginal importance weights.
//!
//! For a new particle `x`, the approximate weight is the ratio of two
//! mixtures over the weighted cloud of the previous step:
//!
//! `G_n^N(x) = Σ_j W_j U_n(X_j, x) k_n(X_j, x) / Σ_j W_j m_n(X_j, x)`.
//!
//! Each query is independent and its sums run in a fixed order, so the
//! output does not depend on chunking or thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{mixture_lse, MarginalModel, MixtureWeights, ModelStep, ParticleCloud, State};
use crate::probkit::normalized_log_weights;

/// Single-particle weight `log U + (log k − log m)` at a given ancestor.
#[inline]
pub(crate) fn ancestor_log_weight<S>(st: &ModelStep<S>, prev: &S, x: &S) -> f64 {
    let lu = st.potential.log_value(prev, x);
    let lk = st.kernel.log_density(prev, x);
    let lm = st.proposal.log_density(prev, x);
    lu + (lk - lm)
}

/// `log G_n^N(x)` for every new position.
///
/// `prev` must be the weighted cloud of step `n − 1` before resampling. At
/// `n = 0` the exact weight `U_0 k_0 / m_0` is returned.
pub fn compute_marginal_log_weights<S: State>(
    prev: &ParticleCloud<S>,
    new_positions: &[S],
    model: &MarginalModel<S>,
    n: usize,
    chunk_size: usize,
) -> Result<Vec<f64>> {
    let st = model.step(n)?;
    if n == 0 {
        let origin = S::default();
        return Ok(new_positions
            .iter()
            .map(|x| ancestor_log_weight(st, &origin, x))
            .collect());
    }
    let s = st.structure;
    let origin = S::default();

    // Bootstrap-shaped step: the two mixtures coincide and cancel exactly.
    if s.proposal_is_kernel && s.potential_prev_free {
        return Ok(new_positions
            .iter()
            .map(|x| st.potential.log_value(&origin, x) + 0.0)
            .collect());
    }

    let anc = &prev.positions;
    let mix = MixtureWeights::from_log(normalized_log_weights(&prev.log_weights)?);
    // A product-form potential folds its `x'` factor into the mixture weights.
    let split = match (s.kernel_prev_free, s.potential_prev_free) {
        (false, false) => anc
            .iter()
            .map(|p| st.potential.log_prev_factor(p))
            .collect::<Option<Vec<f64>>>()
            .map(|a| (a[0], mix.tilted(&a))),
        _ => None,
    };

    let mut out = vec![0.0; new_positions.len()];
    out.par_chunks_mut(chunk_size.max(1))
        .zip(new_positions.par_chunks(chunk_size.max(1)))
        .try_for_each(|(out_chunk, xs)| -> Result<()> {
            let m = anc.len();
            let mut scratch = vec![0.0; m];
            let mut aux = vec![0.0; m];
            for (o, x) in out_chunk.iter_mut().zip(xs) {
                let num = match (s.kernel_prev_free, s.potential_prev_free, &split) {
                    (true, true, _) => st.kernel.log_density(&origin, x) + st.potential.log_value(&origin, x),
                    (true, false, _) => {
                        st.potential.log_value_batch(anc, x, &mut aux);
                        for (a, lw) in aux.iter_mut().zip(&mix.log_w) {
                            *a += lw;
                        }
                        st.kernel.log_density(&origin, x) + mixture_lse(&aux)?
                    }
                    (false, true, _) => {
                        st.potential.log_value(&origin, x) + st.kernel.log_mixture_density(anc, &mix, x, &mut scratch)?
                    }
                    (false, false, Some((a0, tilted))) => {
                        let b = st.potential.log_value(&anc[0], x) - a0;
                        b + st.kernel.log_mixture_density(anc, tilted, x, &mut scratch)?
                    }
                    (false, false, None) => {
                        st.kernel.log_density_batch(anc, x, &mut scratch);
                        st.potential.log_value_batch(anc, x, &mut aux);
                        for ((a, t), lw) in aux.iter_mut().zip(&scratch).zip(&mix.log_w) {
                            *a += t + lw;
                        }
                        mixture_lse(&aux)?
                    }
                };
                let den = if s.proposal_prev_free {
                    st.proposal.log_density(&origin, x)
                } else {
                    st.proposal.log_mixture_density(anc, &mix, x, &mut scratch)?
                };
                if den == f64::NEG_INFINITY {
                    return Err(Error::extinction(format!(
                        "proposal mixture vanishes at a sampled point (step {n})"
                    )));
                }
                *o = num - den;
            }
            Ok(())
        })?;
    Ok(out)
}
