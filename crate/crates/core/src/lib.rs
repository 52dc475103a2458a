pub mod cli;
pub mod coherent;
pub mod correlation;
pub mod error;
pub mod fock;
pub mod inequality;
pub mod logdomain;
pub mod optimizer;
pub mod sphere;
