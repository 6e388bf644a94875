//! Generic server loop for the backend protocol.

use std::io::{Read, Write};

use super::frame::{read_frame, Capabilities, Frame, MsgType, SrPayload};
use super::BackendError;

/// Answers frames from `input` until it reaches end of stream.
///
/// `handler` receives each decoded SR request and returns the upscaled
/// payload or an error message, which is sent back as an ERROR frame.
/// Requests for unadvertised scales are refused before reaching the handler.
/// A malformed frame is answered with ERROR and the loop carries on, except
/// when the header itself is unreadable, which ends the session.
pub fn serve<R, W, F>(
    mut input: R,
    mut output: W,
    caps: &Capabilities,
    mut handler: F,
) -> Result<(), BackendError>
where
    R: Read,
    W: Write,
    F: FnMut(&SrPayload) -> Result<SrPayload, String>,
{
    loop {
        let frame = match read_frame(&mut input) {
            Ok(Some(frame)) => frame,
            Ok(None) => return Ok(()),
            Err(BackendError::Io(e)) => return Err(BackendError::Io(e)),
            Err(e) => {
                Frame::error(&e.to_string()).write_to(&mut output)?;
                return Err(e);
            }
        };
        let reply = match frame.msg_type {
            MsgType::Hello => Frame::new(MsgType::Caps, caps.encode()),
            MsgType::SrRequest => match SrPayload::decode(&frame.payload) {
                Err(e) => Frame::error(&e.to_string()),
                Ok(req) if !caps.supports(req.scale) => {
                    Frame::error(&format!("unsupported scale {}", req.scale))
                }
                Ok(req) => match handler(&req) {
                    Ok(resp) => Frame::new(MsgType::SrResponse, resp.encode()),
                    Err(msg) => Frame::error(&msg),
                },
            },
            other => Frame::error(&format!("unexpected message {other:?}")),
        };
        reply.write_to(&mut output)?;
    }
}
