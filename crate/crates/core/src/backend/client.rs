use std::io::{Read, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use super::frame::{read_frame, Capabilities, Frame, MsgType, SrPayload};
use super::BackendError;
use crate::image::{ColorSpace, Image};

pub const DEFAULT_HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(10);
pub const DEFAULT_REQUEST_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Timeouts {
    pub handshake: Duration,
    pub request: Duration,
}

impl Default for Timeouts {
    fn default() -> Self {
        Timeouts {
            handshake: DEFAULT_HANDSHAKE_TIMEOUT,
            request: DEFAULT_REQUEST_TIMEOUT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum State {
    Connected,
    Ready(Capabilities),
    Broken(String),
}

type FrameResult = Result<Frame, BackendError>;

/// Client side of one backend connection.
///
/// A connection carries at most one request at a time and alternates strictly
/// between a request and its reply. Any timeout or protocol fault marks the
/// connection broken; later calls fail fast.
pub struct BackendClient {
    writer: Option<Box<dyn Write + Send>>,
    frames: Receiver<FrameResult>,
    child: Option<Child>,
    state: State,
    timeouts: Timeouts,
    label: String,
}

impl std::fmt::Debug for BackendClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BackendClient")
            .field("label", &self.label)
            .field("state", &self.state)
            .finish_non_exhaustive()
    }
}

fn spawn_reader(mut reader: impl Read + Send + 'static) -> Receiver<FrameResult> {
    let (tx, rx) = mpsc::channel();
    thread::Builder::new()
        .name("cssr-backend-reader".into())
        .spawn(move || loop {
            let msg = match read_frame(&mut reader) {
                Ok(Some(frame)) => Ok(frame),
                Ok(None) => Err(BackendError::Broken("backend closed its output".into())),
                Err(e) => Err(e),
            };
            let stop = msg.is_err();
            if tx.send(msg).is_err() || stop {
                break;
            }
        })
        .expect("spawn reader thread");
    rx
}

impl BackendClient {
    /// Wraps an already-connected pair of streams. No handshake is performed.
    pub fn from_streams(
        reader: impl Read + Send + 'static,
        writer: impl Write + Send + 'static,
        timeouts: Timeouts,
    ) -> Self {
        BackendClient {
            writer: Some(Box::new(writer)),
            frames: spawn_reader(reader),
            child: None,
            state: State::Connected,
            timeouts,
            label: "streams".into(),
        }
    }

    /// Spawns `argv` with the protocol on its stdin/stdout and performs the handshake.
    pub fn spawn(argv: &[String], timeouts: Timeouts) -> Result<Self, BackendError> {
        let (program, args) = argv
            .split_first()
            .ok_or_else(|| BackendError::Spawn("empty backend command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| BackendError::Spawn(format!("{program}: {e}")))?;
        let stdin: ChildStdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut client = BackendClient {
            writer: Some(Box::new(stdin)),
            frames: spawn_reader(stdout),
            child: Some(child),
            state: State::Connected,
            timeouts,
            label: argv.join(" "),
        };
        client.handshake()?;
        Ok(client)
    }

    pub fn capabilities(&self) -> Option<&Capabilities> {
        match &self.state {
            State::Ready(caps) => Some(caps),
            _ => None,
        }
    }

    pub fn is_broken(&self) -> bool {
        matches!(self.state, State::Broken(_))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    fn fail(&mut self, err: BackendError) -> BackendError {
        let reason = err.to_string();
        self.state = State::Broken(reason);
        self.writer = None;
        if let Some(child) = &mut self.child {
            let _ = child.kill();
        }
        err
    }

    /// Adds the child's exit status to stream-closed errors.
    fn describe_exit(&mut self, err: BackendError) -> BackendError {
        match (err, self.child.as_mut()) {
            (BackendError::Broken(msg), Some(child)) => {
                // Give the process a moment to be reaped.
                for _ in 0..20 {
                    if let Ok(Some(status)) = child.try_wait() {
                        return BackendError::Broken(format!("{msg} ({status})"));
                    }
                    thread::sleep(Duration::from_millis(10));
                }
                BackendError::Broken(msg)
            }
            (err, _) => err,
        }
    }

    fn ensure_usable(&self) -> Result<(), BackendError> {
        match &self.state {
            State::Broken(reason) => Err(BackendError::Broken(format!(
                "connection unusable after earlier failure: {reason}"
            ))),
            _ => Ok(()),
        }
    }

    /// Sends one frame and waits for exactly one reply.
    fn exchange(&mut self, frame: &Frame, timeout: Duration) -> Result<Frame, BackendError> {
        self.ensure_usable()?;
        let writer = self.writer.as_mut().expect("writer present while usable");
        if let Err(e) = frame.write_to(writer) {
            let err = if e.kind() == std::io::ErrorKind::BrokenPipe {
                self.describe_exit(BackendError::Broken("backend closed its input".into()))
            } else {
                BackendError::Io(e)
            };
            return Err(self.fail(err));
        }
        match self.frames.recv_timeout(timeout) {
            Ok(Ok(reply)) => Ok(reply),
            Ok(Err(e)) => {
                let e = self.describe_exit(e);
                Err(self.fail(e))
            }
            Err(RecvTimeoutError::Timeout) => Err(self.fail(BackendError::Timeout(timeout))),
            Err(RecvTimeoutError::Disconnected) => {
                let e = self.describe_exit(BackendError::Broken("reader stopped".into()));
                Err(self.fail(e))
            }
        }
    }

    /// Sends HELLO and decodes the CAPS reply.
    pub fn handshake(&mut self) -> Result<Capabilities, BackendError> {
        let reply = self
            .exchange(&Frame::hello(), self.timeouts.handshake)
            .map_err(|e| BackendError::Handshake(e.to_string()))?;
        let caps = match reply.msg_type {
            MsgType::Caps => Capabilities::decode(&reply.payload),
            MsgType::Error => Err(BackendError::Remote(reply.error_message())),
            other => Err(BackendError::Protocol(format!(
                "expected CAPS, got {other:?}"
            ))),
        }
        .map_err(|e| self.fail(BackendError::Handshake(e.to_string())))?;
        self.state = State::Ready(caps.clone());
        Ok(caps)
    }

    /// Sends an arbitrary frame and returns the reply. Used by conformance probes.
    pub fn exchange_raw(&mut self, frame: &Frame) -> Result<Frame, BackendError> {
        let timeout = self.timeouts.request;
        self.exchange(frame, timeout)
    }

    /// Upscales `img` by `scale` on the backend.
    pub fn super_resolve(&mut self, img: &Image, scale: u8) -> Result<Image, BackendError> {
        self.ensure_usable()?;
        let caps = self
            .capabilities()
            .ok_or_else(|| BackendError::Protocol("handshake not completed".into()))?;
        if !caps.supports(scale) {
            return Err(BackendError::UnsupportedScale {
                scale,
                supported: caps.scales.clone(),
            });
        }
        if img.width() as u64 > u64::from(caps.max_width)
            || img.height() as u64 > u64::from(caps.max_height)
        {
            return Err(BackendError::TooLarge {
                width: img.width(),
                height: img.height(),
                max_width: caps.max_width,
                max_height: caps.max_height,
            });
        }
        let request = SrPayload::from_image(img, scale)?;
        let reply = self.exchange_raw(&Frame::new(MsgType::SrRequest, request.encode()))?;
        let response = match reply.msg_type {
            MsgType::SrResponse => SrPayload::decode(&reply.payload).map_err(|e| self.fail(e))?,
            MsgType::Error => return Err(BackendError::Remote(reply.error_message())),
            other => {
                return Err(self.fail(BackendError::Protocol(format!(
                    "expected SR_RESPONSE, got {other:?}"
                ))))
            }
        };
        let expected = (
            img.width() * usize::from(scale),
            img.height() * usize::from(scale),
            img.channels(),
        );
        let got = (
            response.width as usize,
            response.height as usize,
            usize::from(response.channels),
        );
        if got != expected || response.scale != scale {
            return Err(BackendError::ShapeMismatch { expected, got });
        }
        let three = match img.color_space() {
            ColorSpace::Gray => ColorSpace::Rgb,
            cs => cs,
        };
        response.into_image(three)
    }
}

impl Drop for BackendClient {
    fn drop(&mut self) {
        // Closing stdin asks a conforming server to exit.
        self.writer = None;
        if let Some(mut child) = self.child.take() {
            for _ in 0..50 {
                if let Ok(Some(_)) = child.try_wait() {
                    return;
                }
                thread::sleep(Duration::from_millis(10));
            }
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}
