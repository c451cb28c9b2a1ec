//! HTTP annotation service and command-line front end for nerforge models.
//!
//! Endpoints:
//!
//! - `GET /models`: loaded models with their kind, tagsets and languages
//! - `POST /recognize`: annotate text (see [`api::RecognizeRequest`])
//! - `POST /admin/reload`: re-read model checkpoints and swap them in
//! - `GET /`: the web client page

pub mod api;
pub mod cli;
pub mod config;
pub mod error;
pub mod server;
pub mod store;

pub use api::{recognize, RecognizeRequest, RecognizeResponse};
pub use error::ApiError;
pub use server::{router, ServerConfig};
pub use store::ModelStore;
