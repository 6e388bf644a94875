use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cssr_bench::config::Settings;
use cssr_bench::exit::{CliResult, Failure};
use cssr_bench::{bench, diff, probe};
use cssr_core::backend::Timeouts;
use std::time::Duration;
use tracing_subscriber::EnvFilter;

/// Serial vs. closed-loop restoration of compressed, down-sampled images.
#[derive(Parser)]
#[command(name = "cssr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Benchmark every .ppm/.pgm image in a directory.
    Run(RunArgs),
    /// Restore one image and print its per-iteration trace.
    Single {
        image: PathBuf,
        #[command(flatten)]
        args: RunArgs,
    },
    /// Write |a - b| as an image, optionally amplified.
    Diff {
        a: PathBuf,
        b: PathBuf,
        out: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        gain: f32,
    },
    /// Handshake with a backend command and run conformance probes.
    ProtocolCheck {
        #[arg(long, default_value_t = 10.0)]
        handshake_timeout: f64,
        #[arg(long, default_value_t = 120.0)]
        request_timeout: f64,
        /// Backend command line, e.g. `-- python3 server.py --mode bicubic`.
        #[arg(required = true, trailing_var_arg = true, allow_hyphen_values = true)]
        command: Vec<String>,
    },
}

/// Flags override the config file, which overrides built-in defaults.
#[derive(Args, Default)]
struct RunArgs {
    /// Flat key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input_dir: Option<String>,
    #[arg(long)]
    output_dir: Option<String>,
    /// nearest | bicubic
    #[arg(long)]
    ds: Option<String>,
    /// identity | uniform:<step> | dct:<q>[,sub=<bool>]
    #[arg(long)]
    cp: Option<String>,
    /// nearest | bilinear | bicubic | external:<command line>
    #[arg(long)]
    sr: Option<String>,
    #[arg(long)]
    scale: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    iters: Option<String>,
    /// serial | zero | random:<seed>
    #[arg(long)]
    init: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    clamp_each_iter: Option<String>,
    #[arg(long)]
    early_stop_tol: Option<String>,
    /// rgb | y
    #[arg(long)]
    metrics_mode: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    eight_bit: Option<String>,
    #[arg(long)]
    shave: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    dump_images: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    dump_traces: Option<String>,
    #[arg(long)]
    jobs: Option<String>,
    /// Seconds.
    #[arg(long)]
    handshake_timeout: Option<String>,
    /// Seconds.
    #[arg(long)]
    request_timeout: Option<String>,
}

impl RunArgs {
    fn settings(&self) -> CliResult<Settings> {
        let mut s = Settings::defaults();
        if let Some(path) = &self.config {
            s.merge_file(path).map_err(Failure::config)?;
        }
        let flags = [
            ("input_dir", &self.input_dir),
            ("output_dir", &self.output_dir),
            ("ds", &self.ds),
            ("cp", &self.cp),
            ("sr", &self.sr),
            ("scale", &self.scale),
            ("lambda", &self.lambda),
            ("iters", &self.iters),
            ("init", &self.init),
            ("clamp_each_iter", &self.clamp_each_iter),
            ("early_stop_tol", &self.early_stop_tol),
            ("metrics_mode", &self.metrics_mode),
            ("eight_bit", &self.eight_bit),
            ("shave", &self.shave),
            ("dump_images", &self.dump_images),
            ("dump_traces", &self.dump_traces),
            ("jobs", &self.jobs),
            ("handshake_timeout", &self.handshake_timeout),
            ("request_timeout", &self.request_timeout),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                s.set(key, v.as_str()).map_err(Failure::config)?;
            }
        }
        Ok(s)
    }
}

fn secs(v: f64) -> CliResult<Duration> {
    Duration::try_from_secs_f64(v)
        .map_err(|e| Failure::config(anyhow::anyhow!("bad timeout {v}: {e}")))
}

fn execute(command: Command) -> CliResult<()> {
    match command {
        Command::Run(args) => {
            let cfg = args.settings()?.resolve().map_err(Failure::config)?;
            if cfg.input_dir.as_os_str().is_empty() || cfg.output_dir.as_os_str().is_empty() {
                return Err(Failure::config(anyhow::anyhow!(
                    "run needs --input-dir and --output-dir"
                )));
            }
            let report = bench::run_benchmark(&cfg)?;
            print!("{}", report.summary());
            Ok(())
        }
        Command::Single { image, args } => {
            let cfg = args.settings()?.resolve().map_err(Failure::config)?;
            let report = bench::run_single(&image, &cfg)?;
            print!("{}", report.text);
            Ok(())
        }
        Command::Diff { a, b, out, gain } => {
            let map = diff::diff_images(&a, &b, &out, gain)?;
            if map.is_zero() {
                println!("images are identical");
            }
            Ok(())
        }
        Command::ProtocolCheck {
            handshake_timeout,
            request_timeout,
            command,
        } => {
            let timeouts = Timeouts {
                handshake: secs(handshake_timeout)?,
                request: secs(request_timeout)?,
            };
            let probes = probe::protocol_check(&command, timeouts)?;
            for p in &probes {
                println!("{p}");
            }
            let failed = probes.iter().filter(|p| !p.passed).count();
            if failed > 0 {
                return Err(Failure::backend(anyhow::anyhow!(
                    "{failed} probe(s) failed"
                )));
            }
            println!("protocol-check passed ({} probes)", probes.len());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_env("CSSR_LOG").unwrap_or_else(|_| EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.code() as u8)
        }
    }
}
