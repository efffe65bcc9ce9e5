pub mod error;
pub mod lti;
pub mod sequences;
pub mod simulator;
pub mod builder;
pub mod parallel;
pub mod solver;
pub mod cli;
