//! Classical nonlinear dimensionality reduction, neural decoders that map
//! embeddings back to images, and denoising diffusion in embedding space.

pub mod diffusion;
pub mod error;
pub mod graph;
pub mod image;
pub mod nldr;
pub mod nn;
pub mod recon;
pub mod rng;
pub mod spectral;
pub mod synthetic;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
