pub mod ansatz;
pub mod audit;
pub mod calibration;
pub mod dataset;
pub mod error;
pub mod exec;
pub mod gradients;
pub mod graph;
pub mod objective;
pub mod observables;
pub mod pine;
pub mod seed;
pub mod statevector;
pub mod training;
