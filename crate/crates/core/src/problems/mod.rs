//! Desk-scale objectives with analytic Euclidean gradients.

pub mod completion;
pub mod grassmann;
pub mod spd_proto;
pub mod stiefel;

pub use completion::{gen_completion, CompletionInstance, CompletionMeta};
pub use grassmann::{gen_grassmann, GrassmannInstance, GrassmannMeta};
pub use spd_proto::{gen_spd_proto, SpdProtoInstance, SpdProtoMeta};
pub use stiefel::{gen_stiefel, StiefelInstance, StiefelMeta};
