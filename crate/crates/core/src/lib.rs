pub mod aggregate;
pub mod error;
pub mod exec;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod prior;
pub mod quantile_loss;
pub mod sampler;
pub mod selection;
pub mod simdata;
pub mod splines;

pub use error::{QdagError, Result};
