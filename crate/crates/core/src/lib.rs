pub mod checkpoint;
pub mod config;
pub mod contrastive;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod fft;
pub mod freq_filter;
pub mod graph;
pub mod imageio;
pub mod init;
pub mod losses;
pub mod mask;
pub mod metrics;
pub mod model;
pub mod network;
pub mod optim;
pub mod params;
pub mod synthesis;
pub mod tensor;
pub mod train;

pub use checkpoint::Checkpoint;
pub use config::TrainConfig;
pub use error::{Error, Result};
pub use model::Model;
pub use tensor::Tensor;
