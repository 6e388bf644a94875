//! Framed binary protocol for delegating super-resolution to a child process.
//!
//! The client speaks to the child over its stdin/stdout. Every frame carries a
//! 10-byte header (magic `CSSR`, version, message type, little-endian payload
//! length). A session opens with HELLO/CAPS and then alternates SR_REQUEST
//! with exactly one SR_RESPONSE or ERROR.

mod client;
pub mod frame;
pub mod server;

use std::io;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use thiserror::Error;

pub use client::{BackendClient, Timeouts, DEFAULT_HANDSHAKE_TIMEOUT, DEFAULT_REQUEST_TIMEOUT};
pub use frame::{Capabilities, Frame, MsgType, SrPayload};

use crate::image::Image;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend i/o: {0}")]
    Io(#[from] io::Error),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("handshake failed: {0}")]
    Handshake(String),
    #[error("backend timed out after {0:?}")]
    Timeout(Duration),
    #[error("backend broken: {0}")]
    Broken(String),
    #[error("cannot start backend: {0}")]
    Spawn(String),
    #[error("backend error: {0}")]
    Remote(String),
    #[error("scale {scale} not advertised by backend (supports {supported:?})")]
    UnsupportedScale { scale: u8, supported: Vec<u8> },
    #[error("image {width}x{height} exceeds backend limit {max_width}x{max_height}")]
    TooLarge {
        width: usize,
        height: usize,
        max_width: u32,
        max_height: u32,
    },
    #[error("backend returned {got:?} (w, h, c), expected {expected:?}")]
    ShapeMismatch {
        expected: (usize, usize, usize),
        got: (usize, usize, usize),
    },
}

/// Shared handle used by [`crate::operators::SrKind::External`].
///
/// The mutex enforces the one-request-in-flight rule when a handle is shared.
pub type BackendHandle = Arc<Mutex<BackendClient>>;

pub fn shared(client: BackendClient) -> BackendHandle {
    Arc::new(Mutex::new(client))
}

/// Upscales `img` through `handle`.
pub fn sr_via_backend(
    img: &Image,
    scale: u8,
    handle: &BackendHandle,
) -> Result<Image, BackendError> {
    let mut client = handle
        .lock()
        .map_err(|_| BackendError::Broken("backend handle poisoned".into()))?;
    client.super_resolve(img, scale)
}
