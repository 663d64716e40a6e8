pub mod cli;
pub mod exec;
pub mod mc;
pub mod model;
pub mod numerics;
pub mod policy;
pub mod riccati;
pub mod verify;
