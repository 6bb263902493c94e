//! Local chat-completions gateway: pseudonymizes the latest user message,
//! forwards it upstream and restores the original entities in the response.

pub mod audit;
pub mod backends;
pub mod config;
pub mod oneshot;
pub mod pipeline;
pub mod review;
pub mod server;
pub mod session;

pub use config::{GatewayConfig, PrivacyMode};
pub use pipeline::Pipeline;
pub use server::{router, serve, AppState, Upstream};
