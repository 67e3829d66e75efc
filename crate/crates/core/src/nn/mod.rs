//! Dense-network machinery: matrices, MLPs with exact reverse-mode
//! gradients, max pooling, Adam and checkpoint files.

mod adam;
mod checkpoint;
mod matrix;
mod mlp;
mod params;
mod pool;

pub use adam::AdamState;
pub use checkpoint::{load_params, parse_checkpoint, save_params, CheckpointMeta, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use matrix::Matrix;
pub use mlp::{backward, mlp_forward, Activation, FinalActivation, Mlp, MlpSpec, MlpTape};
pub use params::{init_params, init_tensors, Gradients, ParamSet, ParamTensor};
pub use pool::{max_pool, max_pool_backward, PoolTape};

/// Logistic function, evaluated without overflow for large `|x|`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
