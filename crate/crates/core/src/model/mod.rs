//! GT U-Net: group Transformer blocks assembled into a U-shaped
//! encoder/decoder, plus the attention cost model.

mod attention;
mod block;
pub mod checkpoint;
mod complexity;
mod config;
mod group;
mod layers;
mod unet;

pub use attention::{count_mhsa_macs, mhsa, mhsa_forward, MhsaOutput, MhsaShape, MhsaVars, MhsaWeights};
pub use block::GtBlock;
pub use complexity::{complexity, instrumented_counts, Complexity, InstrumentedCounts};
pub use config::GtUNetConfig;
pub use group::{group_merge, group_partition, merge_groups, partition_groups};
pub use layers::{BatchNorm, Conv, Ctx, Mode, BN_EPS, BN_MOMENTUM};
pub use unet::GtUNet;
