pub mod numerics;
pub mod data;
pub mod model;
pub mod train;
pub mod explain;
pub mod eval;
pub mod config;
