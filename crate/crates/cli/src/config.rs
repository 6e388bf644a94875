//! Run configuration: defaults, flat `key=value` config files, and flag overrides.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use cssr_core::backend::Timeouts;
use cssr_core::{CompressOp, DownsampleKind, InitMode, LoopConfig, MetricMode, MetricOptions};

/// Super-resolution unit as named on the command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SrSpec {
    Nearest,
    Bilinear,
    Bicubic,
    /// Backend command line, already split into argv.
    External(Vec<String>),
}

impl fmt::Display for SrSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SrSpec::Nearest => f.write_str("nearest"),
            SrSpec::Bilinear => f.write_str("bilinear"),
            SrSpec::Bicubic => f.write_str("bicubic"),
            SrSpec::External(argv) => write!(
                f,
                "external:{}",
                shlex::try_join(argv.iter().map(String::as_str)).unwrap_or_default()
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input_dir: PathBuf,
    pub output_dir: PathBuf,
    pub ds: DownsampleKind,
    pub cp: CompressOp,
    pub sr: SrSpec,
    pub scale: usize,
    pub lambda: f32,
    pub iters: usize,
    pub init: InitMode,
    pub clamp_each_iter: bool,
    pub early_stop_tol: Option<f64>,
    pub metrics: MetricOptions,
    pub dump_images: bool,
    pub dump_traces: bool,
    pub jobs: usize,
    pub timeouts: Timeouts,
}

/// Every recognized key with its default, in manifest order.
pub const KEYS: &[(&str, &str)] = &[
    ("input_dir", ""),
    ("output_dir", ""),
    ("ds", "nearest"),
    ("cp", "dct:10"),
    ("sr", "bicubic"),
    ("scale", "4"),
    ("lambda", "0.1"),
    ("iters", "10"),
    ("init", "serial"),
    ("clamp_each_iter", "false"),
    ("early_stop_tol", "none"),
    ("metrics_mode", "rgb"),
    ("eight_bit", "false"),
    ("shave", "0"),
    ("dump_images", "false"),
    ("dump_traces", "false"),
    ("jobs", "1"),
    ("handshake_timeout", "10"),
    ("request_timeout", "120"),
];

/// Raw settings keyed by canonical (underscore) names.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Settings(BTreeMap<String, String>);

fn canonical_key(key: &str) -> Result<String> {
    let k = key.trim().replace('-', "_");
    if KEYS.iter().any(|(name, _)| *name == k) {
        Ok(k)
    } else {
        bail!("unknown config key `{}`", key.trim())
    }
}

impl Settings {
    pub fn defaults() -> Self {
        Settings(
            KEYS.iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        )
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        self.0.insert(canonical_key(key)?, value.into());
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.0.get(key).map(String::as_str).unwrap_or("")
    }

    /// Overlays a flat `key = value` file; `#` starts a comment line.
    pub fn merge_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{}:{}: expected key=value", path.display(), n + 1))?;
            self.set(k, v.trim())
                .with_context(|| format!("{}:{}", path.display(), n + 1))?;
        }
        Ok(())
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        let cfg = RunConfig {
            input_dir: PathBuf::from(self.get("input_dir")),
            output_dir: PathBuf::from(self.get("output_dir")),
            ds: parse_ds(self.get("ds"))?,
            cp: parse_cp(self.get("cp"))?,
            sr: parse_sr(self.get("sr"))?,
            scale: parse_num(self, "scale")?,
            lambda: parse_num(self, "lambda")?,
            iters: parse_num(self, "iters")?,
            init: parse_init(self.get("init"))?,
            clamp_each_iter: parse_bool(self, "clamp_each_iter")?,
            early_stop_tol: match self.get("early_stop_tol") {
                "" | "none" => None,
                _ => Some(parse_num(self, "early_stop_tol")?),
            },
            metrics: MetricOptions {
                mode: match self.get("metrics_mode") {
                    "rgb" => MetricMode::Rgb,
                    "y" => MetricMode::Y,
                    other => bail!("metrics_mode must be rgb or y, got `{other}`"),
                },
                eight_bit: parse_bool(self, "eight_bit")?,
                shave: parse_num(self, "shave")?,
            },
            dump_images: parse_bool(self, "dump_images")?,
            dump_traces: parse_bool(self, "dump_traces")?,
            jobs: parse_num(self, "jobs")?,
            timeouts: Timeouts {
                handshake: Duration::from_secs_f64(parse_num(self, "handshake_timeout")?),
                request: Duration::from_secs_f64(parse_num(self, "request_timeout")?),
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_num<T: std::str::FromStr>(s: &Settings, key: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    let raw = s.get(key);
    raw.trim()
        .parse()
        .map_err(|e| anyhow!("invalid {key} `{raw}`: {e}"))
}

fn parse_bool(s: &Settings, key: &str) -> Result<bool> {
    match s.get(key).trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => bail!("invalid {key} `{other}`: expected true or false"),
    }
}

pub fn parse_ds(s: &str) -> Result<DownsampleKind> {
    match s.trim() {
        "nearest" => Ok(DownsampleKind::Nearest),
        "bicubic" => Ok(DownsampleKind::Bicubic),
        other => bail!("ds must be nearest or bicubic, got `{other}`"),
    }
}

/// `identity`, `uniform:<step>`, or `dct:<q>[,sub=<bool>]`.
pub fn parse_cp(s: &str) -> Result<CompressOp> {
    let s = s.trim();
    let op = if s == "identity" {
        CompressOp::Identity
    } else if let Some(step) = s.strip_prefix("uniform:") {
        CompressOp::UniformQuant {
            step: step
                .parse()
                .map_err(|e| anyhow!("invalid uniform step `{step}`: {e}"))?,
        }
    } else if let Some(rest) = s.strip_prefix("dct:") {
        let (q, opts) = rest.split_once(',').unwrap_or((rest, ""));
        let quality = q
            .parse()
            .map_err(|e| anyhow!("invalid dct quality `{q}`: {e}"))?;
        let chroma_subsample = match opts {
            "" => true,
            "sub=true" => true,
            "sub=false" => false,
            other => bail!("unknown dct option `{other}`"),
        };
        CompressOp::DctQuant {
            quality,
            chroma_subsample,
        }
    } else {
        bail!("cp must be identity, uniform:<step> or dct:<q>[,sub=<bool>], got `{s}`");
    };
    op.validate()?;
    Ok(op)
}

pub fn parse_sr(s: &str) -> Result<SrSpec> {
    match s.trim() {
        "nearest" => Ok(SrSpec::Nearest),
        "bilinear" => Ok(SrSpec::Bilinear),
        "bicubic" => Ok(SrSpec::Bicubic),
        other => {
            let Some(cmd) = other.strip_prefix("external:") else {
                bail!("sr must be nearest, bilinear, bicubic or external:<command>, got `{other}`");
            };
            let argv = shlex::split(cmd)
                .filter(|a| !a.is_empty())
                .ok_or_else(|| anyhow!("cannot parse backend command `{cmd}`"))?;
            Ok(SrSpec::External(argv))
        }
    }
}

/// `serial`, `zero`, or `random:<seed>`.
pub fn parse_init(s: &str) -> Result<InitMode> {
    match s.trim() {
        "serial" => Ok(InitMode::FromSerial),
        "zero" => Ok(InitMode::Zero),
        other => match other.strip_prefix("random:") {
            Some(seed) => {
                Ok(InitMode::Random(seed.parse().map_err(|e| {
                    anyhow!("invalid random seed `{seed}`: {e}")
                })?))
            }
            None => bail!("init must be serial, zero or random:<seed>, got `{other}`"),
        },
    }
}

fn init_name(init: InitMode) -> String {
    match init {
        InitMode::FromSerial => "serial".into(),
        InitMode::Zero => "zero".into(),
        InitMode::Random(seed) => format!("random:{seed}"),
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scale == 0 || self.scale > 255 {
            bail!("scale must be in 1..=255, got {}", self.scale);
        }
        if self.jobs == 0 {
            bail!("jobs must be at least 1");
        }
        self.loop_config().validate()?;
        self.cp.validate()?;
        Ok(())
    }

    pub fn loop_config(&self) -> LoopConfig {
        LoopConfig {
            lambda: self.lambda,
            iterations: self.iters,
            init: self.init,
            clamp_each_iter: self.clamp_each_iter,
            early_stop_tol: self.early_stop_tol,
        }
    }

    /// Resolved settings as `key=value` lines in a fixed order.
    pub fn to_lines(&self) -> Vec<String> {
        let ds = match self.ds {
            DownsampleKind::Nearest => "nearest",
            DownsampleKind::Bicubic => "bicubic",
        };
        let cp = match self.cp {
            CompressOp::Identity => "identity".to_string(),
            CompressOp::UniformQuant { step } => format!("uniform:{step}"),
            CompressOp::DctQuant {
                quality,
                chroma_subsample,
            } => format!("dct:{quality},sub={chroma_subsample}"),
        };
        let mode = match self.metrics.mode {
            MetricMode::Rgb => "rgb",
            MetricMode::Y => "y",
        };
        vec![
            format!("input_dir={}", self.input_dir.display()),
            format!("output_dir={}", self.output_dir.display()),
            format!("ds={ds}"),
            format!("cp={cp}"),
            format!("sr={}", self.sr),
            format!("scale={}", self.scale),
            format!("lambda={}", self.lambda),
            format!("iters={}", self.iters),
            format!("init={}", init_name(self.init)),
            format!("clamp_each_iter={}", self.clamp_each_iter),
            format!(
                "early_stop_tol={}",
                self.early_stop_tol
                    .map_or_else(|| "none".to_string(), |t| t.to_string())
            ),
            format!("metrics_mode={mode}"),
            format!("eight_bit={}", self.metrics.eight_bit),
            format!("shave={}", self.metrics.shave),
            format!("dump_images={}", self.dump_images),
            format!("dump_traces={}", self.dump_traces),
            format!("jobs={}", self.jobs),
            format!(
                "handshake_timeout={}",
                self.timeouts.handshake.as_secs_f64()
            ),
            format!("request_timeout={}", self.timeouts.request.as_secs_f64()),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_reference_operating_point() {
        let cfg = Settings::defaults().resolve().unwrap();
        assert_eq!(cfg.lambda, 0.1);
        assert_eq!(cfg.iters, 10);
        assert_eq!(cfg.scale, 4);
        assert_eq!(cfg.cp, CompressOp::jpeg(10));
        assert_eq!(cfg.sr, SrSpec::Bicubic);
        assert_eq!(cfg.init, InitMode::FromSerial);
        assert_eq!(cfg.timeouts, Timeouts::default());
    }

    #[test]
    fn compress_specs() {
        assert_eq!(parse_cp("identity").unwrap(), CompressOp::Identity);
        assert_eq!(
            parse_cp("uniform:0.25").unwrap(),
            CompressOp::UniformQuant { step: 0.25 }
        );
        assert_eq!(
            parse_cp("dct:30,sub=false").unwrap(),
            CompressOp::DctQuant {
                quality: 30,
                chroma_subsample: false
            }
        );
        assert!(parse_cp("dct:0").is_err());
        assert!(parse_cp("dct:101").is_err());
        assert!(parse_cp("uniform:-1").is_err());
        assert!(parse_cp("webp:10").is_err());
    }

    #[test]
    fn sr_and_init_specs() {
        assert_eq!(
            parse_sr("external:python3 'my server.py' --mode bicubic").unwrap(),
            SrSpec::External(vec![
                "python3".into(),
                "my server.py".into(),
                "--mode".into(),
                "bicubic".into()
            ])
        );
        assert!(parse_sr("external:").is_err());
        assert!(parse_sr("lanczos").is_err());
        assert_eq!(parse_init("random:42").unwrap(), InitMode::Random(42));
        assert!(parse_init("random:x").is_err());
    }

    #[test]
    fn file_then_flags_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "# comment\nlambda = 0.5\niters=3\ncp=dct:50\n").unwrap();
        let mut s = Settings::defaults();
        s.merge_file(&path).unwrap();
        s.set("iters", "7").unwrap();
        let cfg = s.resolve().unwrap();
        assert_eq!(cfg.lambda, 0.5);
        assert_eq!(cfg.iters, 7);
        assert_eq!(cfg.cp, CompressOp::jpeg(50));

        std::fs::write(&path, "bogus=1\n").unwrap();
        assert!(Settings::defaults().merge_file(&path).is_err());
    }

    #[test]
    fn validation_rejects_bad_values() {
        for (k, v) in [
            ("lambda", "0"),
            ("lambda", "1.5"),
            ("jobs", "0"),
            ("scale", "0"),
            ("iters", "-1"),
        ] {
            let mut s = Settings::defaults();
            s.set(k, v).unwrap();
            assert!(s.resolve().is_err(), "{k}={v}");
        }
    }

    #[test]
    fn manifest_lines_round_trip() {
        let mut s = Settings::defaults();
        s.set("sr", "external:backend --mode 'a b'").unwrap();
        s.set("early-stop-tol", "0.001").unwrap();
        let cfg = s.resolve().unwrap();
        let mut again = Settings::defaults();
        for line in cfg.to_lines() {
            let (k, v) = line.split_once('=').unwrap();
            again.set(k, v).unwrap();
        }
        assert_eq!(again.resolve().unwrap(), cfg);
    }
}
