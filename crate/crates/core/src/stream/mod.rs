//! Disk-resident streams and the double-buffered transfer pipeline.

mod budget;
mod format;
mod pipeline;
mod transform;

pub use budget::{Footprint, MemoryBudget};
pub use format::{
    open_stream, write_dense, StreamHeader, StreamKind, StreamReader, StreamWriter, HEADER_LEN, MAGIC, VERSION,
};
pub use pipeline::{pipeline_run, Buffering, DoubleBuffer, PipelineStats, Workspace};
pub use transform::{preloop_stream_transform, TransformTarget};
