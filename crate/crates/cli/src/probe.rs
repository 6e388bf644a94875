//! The `protocol-check` subcommand: conformance probes against a backend command.

use std::fmt;

use cssr_core::backend::{BackendClient, BackendError, Frame, MsgType, SrPayload, Timeouts};
use cssr_core::{ColorSpace, Image};

use crate::exit::{CliResult, Failure};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Probe {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Probe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {}: {}", self.name, self.detail)
    }
}

fn probe(name: impl Into<String>, outcome: Result<String, String>) -> Probe {
    let (passed, detail) = match outcome {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    Probe {
        name: name.into(),
        passed,
        detail,
    }
}

fn pattern(w: usize, h: usize, cs: ColorSpace) -> Image {
    let n = w * h * cs.channels();
    let data = (0..n)
        .map(|i| ((i * 37 + 11) % 101) as f32 / 100.0)
        .collect();
    Image::new(w, h, cs, data).expect("valid probe image")
}

/// Sends `frame` raw and expects an ERROR reply.
fn expect_error(client: &mut BackendClient, frame: &Frame) -> Result<String, String> {
    match client.exchange_raw(frame) {
        Ok(reply) if reply.msg_type == MsgType::Error => {
            Ok(format!("ERROR \"{}\"", reply.error_message()))
        }
        Ok(reply) => Err(format!("expected ERROR, got {:?}", reply.msg_type)),
        Err(e) => Err(e.to_string()),
    }
}

fn shape_probe(client: &mut BackendClient, scale: u8, img: &Image) -> Result<String, String> {
    let out = client
        .super_resolve(img, scale)
        .map_err(|e| e.to_string())?;
    Ok(format!(
        "{}x{}x{} -> {}x{}x{}",
        img.width(),
        img.height(),
        img.channels(),
        out.width(),
        out.height(),
        out.channels()
    ))
}

/// Runs every probe against a handshaken client. Probes stop early once the
/// connection is broken, since later results would be meaningless.
pub fn run_probes(client: &mut BackendClient) -> Vec<Probe> {
    let mut probes = Vec::new();
    let Some(caps) = client.capabilities().cloned() else {
        probes.push(probe("handshake", Err("no capabilities".into())));
        return probes;
    };
    probes.push(probe(
        "capabilities",
        if caps.scales.is_empty() || caps.scales.contains(&0) {
            Err(format!("invalid scale list {:?}", caps.scales))
        } else if caps.max_width == 0 || caps.max_height == 0 {
            Err(format!(
                "zero max size {}x{}",
                caps.max_width, caps.max_height
            ))
        } else {
            Ok(format!(
                "scales {:?}, max {}x{}",
                caps.scales, caps.max_width, caps.max_height
            ))
        },
    ));

    for &scale in &caps.scales {
        for img in [
            pattern(5, 3, ColorSpace::Rgb),
            pattern(3, 4, ColorSpace::Gray),
        ] {
            let name = format!("echo-shape scale {scale} {}ch", img.channels());
            probes.push(probe(name, shape_probe(client, scale, &img)));
            if client.is_broken() {
                return probes;
            }
        }
    }

    let unadvertised = (1..=u8::MAX).find(|s| !caps.supports(*s));
    if let Some(scale) = unadvertised {
        let req = SrPayload::from_image(&pattern(2, 2, ColorSpace::Gray), scale).expect("payload");
        let frame = Frame::new(MsgType::SrRequest, req.encode());
        probes.push(probe(
            format!("error-path unadvertised scale {scale}"),
            expect_error(client, &frame),
        ));
    }

    let short = Frame::new(MsgType::SrRequest, vec![caps.scales[0], 1, 2]);
    if !client.is_broken() {
        probes.push(probe(
            "error-path truncated payload",
            expect_error(client, &short),
        ));
    }

    let mut mismatched = SrPayload::from_image(&pattern(2, 2, ColorSpace::Gray), caps.scales[0])
        .expect("payload")
        .encode();
    mismatched.truncate(mismatched.len() - 4);
    let mismatched = Frame::new(MsgType::SrRequest, mismatched);
    if !client.is_broken() {
        probes.push(probe(
            "error-path data length mismatch",
            expect_error(client, &mismatched),
        ));
    }

    if !client.is_broken() {
        probes.push(probe(
            "alive after errors",
            shape_probe(client, caps.scales[0], &pattern(4, 4, ColorSpace::Rgb)),
        ));
    }
    probes
}

/// Spawns `argv`, handshakes, and runs the probes.
///
/// Failing to start or handshake is a backend error; failed probes are
/// reported in the returned list.
pub fn protocol_check(argv: &[String], timeouts: Timeouts) -> CliResult<Vec<Probe>> {
    let mut client = BackendClient::spawn(argv, timeouts).map_err(|e: BackendError| {
        Failure::backend(e).context(format!("backend `{}`", argv.join(" ")))
    })?;
    let mut probes = vec![probe("handshake", Ok("CAPS received".into()))];
    probes.extend(run_probes(&mut client));
    Ok(probes)
}
