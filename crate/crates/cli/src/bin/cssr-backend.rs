//! Native reference backend speaking the SR wire protocol on stdin/stdout.

use std::io::{self, BufReader};
use std::process::ExitCode;
use std::thread;
use std::time::Duration;

use clap::Parser;
use cssr_bench::reference::Mode;
use cssr_core::backend::server::serve;
use cssr_core::backend::Capabilities;

#[derive(Parser)]
#[command(name = "cssr-backend", version)]
struct Args {
    /// echo | nearest | bilinear | bicubic
    #[arg(long, default_value = "bicubic")]
    mode: Mode,
    /// Comma-separated advertised scales. Defaults to 1 for echo, else 2,4.
    #[arg(long, value_delimiter = ',')]
    scales: Vec<u8>,
    #[arg(long, default_value_t = 4096)]
    max_dim: u32,
    /// Sleep before every SR reply (fault injection).
    #[arg(long, hide = true, default_value_t = 0)]
    delay_ms: u64,
    /// Exit without replying once this many SR requests were served (fault injection).
    #[arg(long, hide = true)]
    exit_after: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let scales = if args.scales.is_empty() {
        args.mode.default_scales()
    } else {
        args.scales.clone()
    };
    let caps = Capabilities {
        scales,
        max_width: args.max_dim,
        max_height: args.max_dim,
    };
    let mut served = 0usize;
    let handler = |req: &_| {
        if args.exit_after.is_some_and(|n| served >= n) {
            std::process::exit(1);
        }
        served += 1;
        if args.delay_ms > 0 {
            thread::sleep(Duration::from_millis(args.delay_ms));
        }
        args.mode.handle(req)
    };
    let stdin = BufReader::new(io::stdin().lock());
    match serve(stdin, io::stdout().lock(), &caps, handler) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cssr-backend: {e}");
            ExitCode::from(1)
        }
    }
}
