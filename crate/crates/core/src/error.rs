use thiserror::Error;

use crate::allocator::AllocError;
use crate::dfsim::SimError;
use crate::memmodel::MemError;
use crate::netspec::NetError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Mem(#[from] MemError),
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl Error {
    /// 2 for configuration problems, 3 for infeasible budgets, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Net(NetError::Io { .. }) | Error::Io { .. } => 4,
            Error::Alloc(AllocError::DspInfeasible { .. } | AllocError::SramInfeasible { .. }) => 3,
            _ => 2,
        }
    }
}
