//! Context-driven edge computing platform for AR glasses.

pub mod bench;
pub mod client;
pub mod facerec;
pub mod geom;
pub mod image;
pub mod navigation;
pub mod netem;
pub mod platform;
pub mod server;
pub mod wire;
