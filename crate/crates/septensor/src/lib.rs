pub mod adam;
pub mod assembly;
pub mod banded;
pub mod basis;
pub mod cli;
pub mod config;
pub mod field;
pub mod error;
pub mod inverse;
pub mod mesh;
pub mod oracle;
pub mod problems;
pub mod solver;
pub mod trainer;
pub mod quadrature;
