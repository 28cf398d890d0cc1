pub mod bohm;
pub mod cli;
pub mod config;
pub mod density;
pub mod ensemble;
pub mod error;
pub mod grid;
pub mod interp;
pub mod io;
pub mod metrics;
pub mod reconstruction;
pub mod sensor;
pub mod smoothing;
pub mod synthetic;
pub mod wavefield;
pub mod weak_momentum;
