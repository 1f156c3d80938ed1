//! Transport of fundamental matrices along paths in the punctured plane.

mod field;
mod path;
mod scaled;
mod transfer;

pub use field::CoefficientField;
pub use path::{Path, PathSegment};
pub use scaled::ScaledMatrix;
pub use transfer::{default_d_min, transfer, transfer_matrix, TransferOptions, TransferReport};
