//! Framed TCP protocol exposing an [`ObjectEngine`](crate::engine::ObjectEngine)
//! to other processes.

mod client;
pub mod frame;
pub mod proto;
mod server;

pub use client::RemoteEngine;
pub use frame::{read_frame, write_frame, Frame, FrameError, MAX_FRAME_LEN};
pub use server::{serve, serve_root, Server};

pub const DEFAULT_PORT: u16 = 7447;
/// Environment variable overriding [`DEFAULT_PORT`].
pub const PORT_ENV: &str = "FDB_ENGINE_PORT";

pub fn default_port() -> u16 {
    std::env::var(PORT_ENV)
        .ok()
        .and_then(|p| p.parse().ok())
        .unwrap_or(DEFAULT_PORT)
}
