pub mod classifier;
pub mod color_metric;
pub mod color_network;
pub mod descriptor;
pub mod error;
pub mod mapper;
pub mod pipeline;
pub mod pointcloud;
pub mod spatial;
pub mod synth;
pub mod topology;

pub use error::{Error, Result};
