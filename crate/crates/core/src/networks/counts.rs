use serde::{Deserialize, Serialize};

use super::{ExplanatorySpec, PredictiveSpec};

/// Reference explanatory-network count that the formula does not reproduce; reported only.
pub const P_EXP_REFERENCE: usize = 161;

/// Closed-form count of a dense network `i -> h_0 -> ... -> h_{L-1} -> o`.
pub fn p_pre_formula(i: usize, hidden: &[usize], o: usize) -> usize {
    let Some((&first, _)) = hidden.split_first() else {
        return i * o + o;
    };
    let last = hidden[hidden.len() - 1];
    let inner: usize = hidden.windows(2).map(|w| w[0] * w[1]).sum();
    i * first + inner + o * last + hidden.iter().sum::<usize>() + o
}

/// Split of [`p_pre_formula`] at hidden layer `b` (the latent layer):
/// `(P_encoding, P_decoding)`.
pub fn split_formula(i: usize, hidden: &[usize], o: usize, b: usize) -> (usize, usize) {
    let enc = i * hidden[0]
        + hidden[..=b].windows(2).map(|w| w[0] * w[1]).sum::<usize>()
        + hidden[..=b].iter().sum::<usize>();
    let last = hidden[hidden.len() - 1];
    let dec = hidden[b..].windows(2).map(|w| w[0] * w[1]).sum::<usize>()
        + o * last
        + hidden[b + 1..].iter().sum::<usize>()
        + o;
    (enc, dec)
}

/// Encoder count for the input of `4 (N_x + N_y)` boundary values, widths 20, 10 and `n`.
pub fn encoder_formula(nx: usize, ny: usize, n: usize) -> usize {
    80 * (nx + ny) + 230 + 11 * n
}

/// Closed-form count of the pixel-wise explanatory network with `n` filters
/// and hidden widths `h'`.
pub fn p_exp_formula(c_in: usize, n_filters: usize, hidden: &[usize], c_out: usize) -> usize {
    let n = n_filters;
    let first = hidden.first().copied().unwrap_or(n);
    let last = hidden.last().copied().unwrap_or(n);
    let inner: usize = hidden.windows(2).map(|w| w[0] * w[1]).sum();
    c_in * n
        + first * n
        + inner
        + last * n
        + hidden.iter().sum::<usize>()
        + 2 * n
        + c_out * n
        + c_out
}

/// Closed-form parameter counts of a predictive/explanatory pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterCounts {
    pub p_encoding: usize,
    /// Count of the baseline decoder architecture.
    pub p_decoding: usize,
    /// `p_decoding` for trainable decoders, zero for fixed ones.
    pub p_decoding_trainable: usize,
    pub p_pre: usize,
    pub p_exp_formula: usize,
    pub p_exp_reference: usize,
}

impl ParameterCounts {
    pub fn trainable_total(&self) -> usize {
        self.p_encoding + self.p_decoding_trainable + self.p_exp_formula
    }
}

pub fn count_parameters(
    predictive: &PredictiveSpec,
    explanatory: &ExplanatorySpec,
) -> ParameterCounts {
    let mut hidden = predictive.hidden.clone();
    hidden.push(predictive.n);
    hidden.extend(predictive.hidden.iter().rev());
    let (i, o) = (predictive.input_size(), predictive.output_size());
    let b = predictive.hidden.len();
    let (p_encoding, p_decoding) = split_formula(i, &hidden, o, b);
    ParameterCounts {
        p_encoding,
        p_decoding,
        p_decoding_trainable: if predictive.decoder.is_trainable() {
            p_decoding
        } else {
            0
        },
        p_pre: p_pre_formula(i, &hidden, o),
        p_exp_formula: p_exp_formula(
            explanatory.c_in,
            explanatory.n_filters,
            &explanatory.hidden,
            explanatory.c_out,
        ),
        p_exp_reference: P_EXP_REFERENCE,
    }
}
