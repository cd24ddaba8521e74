pub mod cli;
pub mod data;
pub mod error;
pub mod inference;
pub mod kernels;
pub mod model;
pub mod moments;
pub mod oracle;
