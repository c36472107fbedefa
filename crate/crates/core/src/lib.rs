pub mod error;
pub mod grid2d;
pub mod framework;
pub mod eit;
pub mod magnet;
pub mod acoustics;
pub mod cli;
