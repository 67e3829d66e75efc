use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, FinalActivation, MlpSpec};

/// How the five MLP shapes are derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UnitMode {
    /// Input widths follow the features each MLP actually consumes.
    #[default]
    Equations,
    /// Fixed `{5,8,16} {19,8,4} {7,8,4} {10,8,16} {27,8,1}` units; inputs are
    /// zero-padded up to the listed width. Requires `d_u = d_w = 4`, `d_msg = 16`.
    PaperTriples,
}

const TRIPLES: [[usize; 3]; 5] = [[5, 8, 16], [19, 8, 4], [7, 8, 4], [10, 8, 16], [27, 8, 1]];

/// Architecture of the unrolled network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UwgnnConfig {
    /// Unrolled layers (WMMSE iterations).
    pub layers: usize,
    pub d_u: usize,
    pub d_w: usize,
    /// Width of the pooled messages.
    pub d_msg: usize,
    /// Hidden width of every MLP.
    pub hidden: usize,
    pub activation: Activation,
    /// Layer 1 gets its own parameters and layers `2..K` share one set;
    /// when false every layer has its own set.
    pub share_parameters: bool,
    pub unit_mode: UnitMode,
}

impl Default for UwgnnConfig {
    fn default() -> Self {
        Self {
            layers: 3,
            d_u: 4,
            d_w: 4,
            d_msg: 16,
            hidden: 8,
            activation: Activation::LeakyRelu,
            share_parameters: true,
            unit_mode: UnitMode::Equations,
        }
    }
}

impl UwgnnConfig {
    /// Widths of the features each MLP consumes, before any padding:
    /// `(h_ij, v_j)`, `(h_ii, v_i, alpha_u)`, `(h_ii, v_i, u_i)`,
    /// `(h_ji, u_j, w_j)`, `(lambda_i, h_ii, u_i, w_i, alpha_v)`.
    pub fn feature_widths(&self) -> [usize; 5] {
        [
            2,
            2 + self.d_msg,
            2 + self.d_u,
            1 + self.d_u + self.d_w,
            2 + self.d_u + self.d_w + self.d_msg,
        ]
    }

    pub fn output_widths(&self) -> [usize; 5] {
        [self.d_msg, self.d_u, self.d_w, self.d_msg, 1]
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_u == 0 || self.d_w == 0 || self.d_msg == 0 || self.hidden == 0 {
            return Err(Error::invalid("UWGNN widths must be positive"));
        }
        if self.unit_mode == UnitMode::PaperTriples {
            if self.output_widths() != TRIPLES.map(|t| t[2]) || self.hidden != 8 {
                return Err(Error::invalid(
                    "paper-triples units need d_u = d_w = 4, d_msg = 16 and hidden = 8",
                ));
            }
            for (natural, t) in self.feature_widths().iter().zip(TRIPLES) {
                if *natural > t[0] {
                    return Err(Error::invalid("feature width exceeds fixed unit width"));
                }
            }
        }
        Ok(())
    }

    /// The five MLP specs (message, u, w, message, power).
    pub fn mlp_specs(&self) -> Result<[MlpSpec; 5]> {
        self.validate()?;
        let inputs = match self.unit_mode {
            UnitMode::Equations => self.feature_widths(),
            UnitMode::PaperTriples => TRIPLES.map(|t| t[0]),
        };
        let outputs = self.output_widths();
        let mut specs = Vec::with_capacity(5);
        for m in 0..5 {
            let fin = if m == 4 { FinalActivation::Sigmoid } else { FinalActivation::None };
            specs.push(MlpSpec::new(vec![inputs[m], self.hidden, outputs[m]], self.activation, fin)?);
        }
        Ok(specs.try_into().expect("five specs"))
    }

    /// Number of distinct parameter sets.
    pub fn param_sets(&self) -> usize {
        if self.share_parameters {
            self.layers.clamp(1, 2)
        } else {
            self.layers.max(1)
        }
    }

    /// Parameter set used by layer `k` (0-based).
    pub fn set_for_layer(&self, k: usize) -> usize {
        k.min(self.param_sets() - 1)
    }

    pub fn param_count(&self) -> Result<usize> {
        let per_set: usize = self.mlp_specs()?.iter().map(MlpSpec::param_count).sum();
        Ok(per_set * self.param_sets())
    }
}
