//! Frame layout and payload codecs.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "CSSR"
//! 4       1     version (1)
//! 5       1     message type
//! 6       4     payload length, u32 little-endian
//! 10      n     payload
//! ```

use std::io::{self, Read, Write};

use super::BackendError;
use crate::image::{ColorSpace, Image};

pub const MAGIC: [u8; 4] = *b"CSSR";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MsgType {
    Hello = 1,
    Caps = 2,
    SrRequest = 3,
    SrResponse = 4,
    Error = 5,
}

impl TryFrom<u8> for MsgType {
    type Error = BackendError;

    fn try_from(v: u8) -> Result<Self, BackendError> {
        Ok(match v {
            1 => MsgType::Hello,
            2 => MsgType::Caps,
            3 => MsgType::SrRequest,
            4 => MsgType::SrResponse,
            5 => MsgType::Error,
            other => {
                return Err(BackendError::Protocol(format!(
                    "unknown message type {other}"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: MsgType,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(msg_type: MsgType, payload: Vec<u8>) -> Self {
        Frame { msg_type, payload }
    }

    pub fn hello() -> Self {
        Frame::new(MsgType::Hello, Vec::new())
    }

    pub fn error(message: &str) -> Self {
        Frame::new(MsgType::Error, message.as_bytes().to_vec())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        self.write_header(&mut out);
        out.extend_from_slice(&self.payload);
        out
    }

    fn write_header(&self, out: &mut Vec<u8>) {
        let len = u32::try_from(self.payload.len()).expect("payload exceeds u32 length field");
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.msg_type as u8);
        out.extend_from_slice(&len.to_le_bytes());
    }

    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        let mut header = Vec::with_capacity(HEADER_LEN);
        self.write_header(&mut header);
        w.write_all(&header)?;
        w.write_all(&self.payload)?;
        w.flush()
    }

    /// Decodes one frame from the front of `bytes`, returning it and the bytes consumed.
    pub fn decode(bytes: &[u8]) -> Result<(Frame, usize), BackendError> {
        let mut cursor = io::Cursor::new(bytes);
        let frame =
            read_frame(&mut cursor)?.ok_or_else(|| BackendError::Protocol("empty input".into()))?;
        Ok((frame, cursor.position() as usize))
    }

    pub fn error_message(&self) -> String {
        String::from_utf8_lossy(&self.payload).into_owned()
    }
}

/// Reads one frame. `Ok(None)` means clean end of stream before any header byte.
pub fn read_frame(r: &mut impl Read) -> Result<Option<Frame>, BackendError> {
    let mut header = [0u8; HEADER_LEN];
    let mut filled = 0;
    while filled < HEADER_LEN {
        match r.read(&mut header[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => {
                return Err(BackendError::Protocol(
                    "stream ended inside a frame header".into(),
                ))
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(BackendError::Io(e)),
        }
    }
    if header[..4] != MAGIC {
        return Err(BackendError::Protocol(format!(
            "bad magic {:02x?}",
            &header[..4]
        )));
    }
    if header[4] != VERSION {
        return Err(BackendError::Protocol(format!(
            "unsupported protocol version {}",
            header[4]
        )));
    }
    let msg_type = MsgType::try_from(header[5])?;
    let len = u32::from_le_bytes(header[6..10].try_into().unwrap()) as u64;
    let mut payload = Vec::new();
    r.take(len).read_to_end(&mut payload)?;
    if payload.len() as u64 != len {
        return Err(BackendError::Protocol(format!(
            "truncated payload: expected {len} bytes, got {}",
            payload.len()
        )));
    }
    Ok(Some(Frame { msg_type, payload }))
}

/// Server capabilities advertised in the CAPS frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Capabilities {
    pub scales: Vec<u8>,
    pub max_width: u32,
    pub max_height: u32,
}

impl Capabilities {
    pub fn encode(&self) -> Vec<u8> {
        let count = u8::try_from(self.scales.len()).expect("at most 255 scales");
        let mut out = vec![count];
        out.extend_from_slice(&self.scales);
        out.extend_from_slice(&self.max_width.to_le_bytes());
        out.extend_from_slice(&self.max_height.to_le_bytes());
        out
    }

    pub fn decode(payload: &[u8]) -> Result<Self, BackendError> {
        let bad =
            || BackendError::Protocol(format!("malformed CAPS payload ({} bytes)", payload.len()));
        let (&count, rest) = payload.split_first().ok_or_else(bad)?;
        let count = usize::from(count);
        if rest.len() != count + 8 {
            return Err(bad());
        }
        let scales = rest[..count].to_vec();
        let max_width = u32::from_le_bytes(rest[count..count + 4].try_into().unwrap());
        let max_height = u32::from_le_bytes(rest[count + 4..count + 8].try_into().unwrap());
        Ok(Capabilities {
            scales,
            max_width,
            max_height,
        })
    }

    pub fn supports(&self, scale: u8) -> bool {
        self.scales.contains(&scale)
    }
}

/// Body shared by SR_REQUEST and SR_RESPONSE.
#[derive(Debug, Clone, PartialEq)]
pub struct SrPayload {
    pub scale: u8,
    pub channels: u8,
    pub width: u32,
    pub height: u32,
    /// Planar samples, channel-major then row-major.
    pub data: Vec<f32>,
}

const SR_HEADER_LEN: usize = 10;

impl SrPayload {
    pub fn from_image(img: &Image, scale: u8) -> Result<Self, BackendError> {
        let width = u32::try_from(img.width())
            .map_err(|_| BackendError::Protocol("image width exceeds u32".into()))?;
        let height = u32::try_from(img.height())
            .map_err(|_| BackendError::Protocol("image height exceeds u32".into()))?;
        Ok(SrPayload {
            scale,
            channels: img.channels() as u8,
            width,
            height,
            data: img.data().to_vec(),
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(SR_HEADER_LEN + 4 * self.data.len());
        out.push(self.scale);
        out.push(self.channels);
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(payload: &[u8]) -> Result<Self, BackendError> {
        if payload.len() < SR_HEADER_LEN {
            return Err(BackendError::Protocol(format!(
                "SR payload too short ({} bytes)",
                payload.len()
            )));
        }
        let scale = payload[0];
        let channels = payload[1];
        let width = u32::from_le_bytes(payload[2..6].try_into().unwrap());
        let height = u32::from_le_bytes(payload[6..10].try_into().unwrap());
        let count = u64::from(width) * u64::from(height) * u64::from(channels);
        let body = &payload[SR_HEADER_LEN..];
        if body.len() as u64 != 4 * count {
            return Err(BackendError::Protocol(format!(
                "SR payload data is {} bytes, expected 4*{width}*{height}*{channels}",
                body.len()
            )));
        }
        let data = body
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Ok(SrPayload {
            scale,
            channels,
            width,
            height,
            data,
        })
    }

    /// Rebuilds an image; 3-channel data takes `three_channel_space`.
    pub fn into_image(self, three_channel_space: ColorSpace) -> Result<Image, BackendError> {
        let color_space = match self.channels {
            1 => ColorSpace::Gray,
            3 => three_channel_space,
            c => {
                return Err(BackendError::Protocol(format!(
                    "unsupported channel count {c}"
                )))
            }
        };
        Image::new(
            self.width as usize,
            self.height as usize,
            color_space,
            self.data,
        )
        .map_err(|e| BackendError::Protocol(e.to_string()))
    }
}
