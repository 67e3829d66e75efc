//! WMMSE-unrolled graph network.
//!
//! Each layer mirrors one WMMSE round on the interference graph: a first
//! aggregation over incoming interference edges produces `u` and `w`, a second
//! aggregation over outgoing edges produces the new amplitude `v`.

mod config;
mod model;
mod train;

pub use config::{UnitMode, UwgnnConfig};
pub use model::{loss, loss_grad, LayerTape, NodeState, Uwgnn};
pub use train::{train, CurvePoint, TrainOptions, TrainingCurve};
