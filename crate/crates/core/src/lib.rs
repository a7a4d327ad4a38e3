pub mod energy;
pub mod error;
pub mod linsys;
pub mod model;
pub mod simplex;
pub mod optimizer;
pub mod scores;
pub mod spectral;

pub use error::{Error, Result};
pub use model::GramianModel;
