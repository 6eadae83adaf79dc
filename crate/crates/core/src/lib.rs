pub mod conditions;
pub mod cone;
pub mod dynamics;
pub mod error;
pub mod exec;
pub mod flow;
pub mod interp;
pub mod linalg;
pub mod manifold;
pub mod pipeline;
pub mod report;
pub mod sample;
pub mod synthesis;
pub mod system;
pub mod tracking;

pub use error::{Error, Result};
pub use exec::Exec;
