//! Question-guided key-frame reduction for video question answering.
//!
//! A video is coarse-sampled, the question is rewritten into CLIP-style
//! prompts, frames are ranked by their best prompt similarity and the top-k
//! become key frames. Every other frame is then folded into the key frame it
//! is most similar to by similarity-weighted pixel averaging.
//!
//! ```no_run
//! use tifre::pipeline::{run_tifre, RunConfig};
//! use tifre::prompt::Question;
//!
//! let mut cfg = RunConfig::new("frames/", "out/");
//! cfg.question = Some(Question::new("What is the order of fruits?", vec![]).unwrap());
//! let manifest = run_tifre(&cfg).unwrap();
//! println!("kept {:?}", manifest.key_indices);
//! ```

pub mod embedding;
pub mod error;
pub mod eval;
pub mod fmm;
mod http;
pub mod llm;
pub mod math;
pub mod pipeline;
pub mod prompt;
pub mod selection;
pub mod video;

/// Re-exported so callers can build [`video::Frame`] images without a
/// separate dependency.
pub use image;
pub use error::{Error, Result};
pub use http::RetryPolicy;
