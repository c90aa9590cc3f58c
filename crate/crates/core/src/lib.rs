//! Design-space exploration for streaming multi-engine CNN accelerators.
//!
//! * [`netspec`]: layer/network model, text format, builtin networks
//! * [`costmodel`]: MAC counts, FM access counts and their ratios
//! * [`memmodel`]: on-chip buffers and off-chip traffic per group boundary
//! * [`allocator`]: parallel spaces, memory allocation, parallelism tuning
//! * [`dfsim`]: line-buffer dataflow simulator
//! * [`cli`]: command-line front end

pub mod allocator;
pub mod cli;
pub mod costmodel;
pub mod dfsim;
pub mod error;
pub mod memmodel;
pub mod netspec;

pub use error::Error;
