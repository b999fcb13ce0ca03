pub mod arrangements;
pub mod ensembles;
pub mod error;
pub mod experiments;
pub mod isometry;
pub mod numerics;
pub mod recovery;
pub mod seed;
pub mod solvers;
pub mod theory;

pub use error::{Error, Result};

pub type Mat = numerics::Matrix<f64>;
pub type Svd = numerics::CompactSvd<f64>;
pub type Problem = solvers::GroupProblem<f64>;
pub type Solution = solvers::BlockSolution<f64>;
