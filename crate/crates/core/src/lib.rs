mod alloc;
pub mod analysis;
pub mod ansatz;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod operator;
pub mod paths;
pub mod schedule;
pub mod state;
pub mod variational;

pub use error::{CdError, CdResult};
