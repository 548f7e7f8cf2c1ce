pub mod calibration;
pub mod density;
pub mod error;
pub mod indemnity;
pub mod loss;
pub mod models;
pub mod numerics;
pub mod optim;
pub mod solver;
pub mod types;
