//! Benchmark runner: ground truth in, metrics CSV, summary and dumps out.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::{anyhow, Context};
use cssr_core::backend::{shared, BackendClient};
use cssr_core::image::abs_diff_named;
use cssr_core::{
    circular_refine_with_reference, crop_to_multiple, load_ppm, save_ppm, serial_pipeline,
    upsample_for_metric, ColorSpace, DownsampleOp, Image, LoopTrace, OperatorChain, SrKind, SrOp,
};
use tracing::{info, warn};

use crate::config::{RunConfig, SrSpec};
use crate::exit::{CliResult, ExitKind, Failure};

/// Column names of `results.csv`, in order.
pub const CSV_HEADER: &str = "image_id,psnr_compressed,ssim_compressed,psnr_serial,ssim_serial,\
psnr_circular,ssim_circular,residual_initial,residual_final,iterations_run,wall_ms";

const INPUT_EXTENSIONS: &[&str] = &["ppm", "pgm", "pnm"];

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub image_id: String,
    pub psnr_compressed: f64,
    pub ssim_compressed: f64,
    pub psnr_serial: f64,
    pub ssim_serial: f64,
    pub psnr_circular: f64,
    pub ssim_circular: f64,
    pub residual_initial: f64,
    pub residual_final: f64,
    pub iterations_run: usize,
    pub wall_ms: u128,
}

fn fmt_metric(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else {
        format!("{v:.6}")
    }
}

impl ResultRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{:.6e},{:.6e},{},{}",
            self.image_id,
            fmt_metric(self.psnr_compressed),
            fmt_metric(self.ssim_compressed),
            fmt_metric(self.psnr_serial),
            fmt_metric(self.ssim_serial),
            fmt_metric(self.psnr_circular),
            fmt_metric(self.ssim_circular),
            self.residual_initial,
            self.residual_final,
            self.iterations_run,
            self.wall_ms
        )
    }
}

/// Reconstructions kept for dumping.
#[derive(Debug, Clone)]
pub struct Reconstructions {
    pub compressed_up: Image,
    pub serial: Image,
    pub circular: Image,
    pub ground_truth: Image,
}

#[derive(Debug, Clone)]
pub struct ImageOutcome {
    pub row: ResultRow,
    pub trace: LoopTrace,
    pub images: Reconstructions,
}

/// Builds the operator chain, spawning and handshaking a backend if needed.
pub fn build_chain(cfg: &RunConfig) -> CliResult<OperatorChain> {
    let kind = match &cfg.sr {
        SrSpec::Nearest => SrKind::Nearest,
        SrSpec::Bilinear => SrKind::Bilinear,
        SrSpec::Bicubic => SrKind::Bicubic,
        SrSpec::External(argv) => {
            let client = BackendClient::spawn(argv, cfg.timeouts).map_err(|e| {
                Failure::backend(e).context(format!("starting backend `{}`", argv.join(" ")))
            })?;
            SrKind::External(shared(client))
        }
    };
    OperatorChain::new(
        DownsampleOp::new(cfg.ds, cfg.scale),
        cfg.cp,
        SrOp::new(kind, cfg.scale),
    )
    .map_err(Failure::from_core)
}

/// Runs serial and circular restoration on one ground-truth image and scores both.
pub fn process_image(
    id: &str,
    original: &Image,
    chain: &OperatorChain,
    cfg: &RunConfig,
) -> cssr_core::Result<ImageOutcome> {
    let start = Instant::now();
    let x_h0 = crop_to_multiple(original, cfg.scale)?;
    let serial = serial_pipeline(&x_h0, chain)?;
    let (x_h, trace) =
        circular_refine_with_reference(&serial.x_s0, chain, &cfg.loop_config(), Some(&x_h0))?;
    let compressed_up = upsample_for_metric(&serial.x_c0, x_h0.width(), x_h0.height())?;

    let (psnr_compressed, ssim_compressed) = cfg.metrics.evaluate(&compressed_up, &x_h0)?;
    let (psnr_serial, ssim_serial) = cfg.metrics.evaluate(&serial.x_s0, &x_h0)?;
    let (psnr_circular, ssim_circular) = cfg.metrics.evaluate(&x_h, &x_h0)?;

    let row = ResultRow {
        image_id: id.to_string(),
        psnr_compressed,
        ssim_compressed,
        psnr_serial,
        ssim_serial,
        psnr_circular,
        ssim_circular,
        residual_initial: trace.initial_residual_l2,
        residual_final: trace.final_residual_l2(),
        iterations_run: trace.iterations_run,
        wall_ms: start.elapsed().as_millis(),
    };
    Ok(ImageOutcome {
        row,
        trace,
        images: Reconstructions {
            compressed_up,
            serial: serial.x_s0,
            circular: x_h,
            ground_truth: x_h0,
        },
    })
}

/// One line per completed iteration: index, residual, control norm,
/// ratio to the previous residual, and PSNR against ground truth.
pub fn format_trace(trace: &LoopTrace) -> String {
    let ratios = trace.decay_ratios();
    let mut out = String::new();
    for k in 0..trace.iterations_run {
        let psnr = trace
            .psnr_vs_reference
            .as_ref()
            .map_or_else(|| "-".to_string(), |p| fmt_metric(p[k]));
        let _ = writeln!(
            out,
            "{}\t{:.9e}\t{:.9e}\t{:.6}\t{}",
            k + 1,
            trace.residual_l2[k],
            trace.control_l2[k],
            ratios[k],
            psnr
        );
    }
    out
}

fn ext(space: ColorSpace) -> &'static str {
    if space == ColorSpace::Gray {
        "pgm"
    } else {
        "ppm"
    }
}

fn write_image(dir: &Path, name: &str, img: &Image) -> anyhow::Result<()> {
    let path = dir.join(format!("{name}.{}", ext(img.color_space())));
    fs::write(&path, save_ppm(img)?).with_context(|| format!("writing {}", path.display()))
}

/// Writes the reconstructions and the two error maps for one image.
pub fn dump_images(dir: &Path, id: &str, rec: &Reconstructions) -> anyhow::Result<()> {
    write_image(dir, &format!("{id}_compressed"), &rec.compressed_up)?;
    write_image(dir, &format!("{id}_serial"), &rec.serial.clamped())?;
    write_image(dir, &format!("{id}_circular"), &rec.circular)?;
    let serial_err = abs_diff_named(&rec.serial.clamped(), &rec.ground_truth, "serial", id)?;
    let circular_err = abs_diff_named(&rec.circular, &rec.ground_truth, "circular", id)?;
    write_image(dir, &format!("{id}_diff_serial"), &serial_err.image)?;
    write_image(dir, &format!("{id}_diff_circular"), &circular_err.image)?;
    Ok(())
}

/// Netpbm files directly inside `dir`, sorted by name.
pub fn collect_inputs(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let entries = fs::read_dir(dir)
        .with_context(|| format!("reading input directory {}", dir.display()))
        .map_err(Failure::data)?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| INPUT_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    files.sort();
    Ok(files)
}

pub fn image_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Everything a benchmark run produced.
#[derive(Debug, Clone, Default)]
pub struct BenchReport {
    pub rows: Vec<ResultRow>,
    pub skipped: Vec<(PathBuf, String)>,
    pub inputs: Vec<PathBuf>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// `a - b`, treating equal infinities as no change.
fn increment(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        a - b
    }
}

fn fmt_db(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".into()
    } else {
        format!("{v:.2}")
    }
}

impl BenchReport {
    pub fn csv(&self) -> String {
        let mut rows: Vec<&ResultRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| a.image_id.cmp(&b.image_id));
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in rows {
            out.push_str(&row.to_csv());
            out.push('\n');
        }
        out
    }

    pub fn mean_psnr(&self) -> (f64, f64, f64) {
        (
            mean(self.rows.iter().map(|r| r.psnr_compressed)),
            mean(self.rows.iter().map(|r| r.psnr_serial)),
            mean(self.rows.iter().map(|r| r.psnr_circular)),
        )
    }

    pub fn mean_ssim(&self) -> (f64, f64, f64) {
        (
            mean(self.rows.iter().map(|r| r.ssim_compressed)),
            mean(self.rows.iter().map(|r| r.ssim_serial)),
            mean(self.rows.iter().map(|r| r.ssim_circular)),
        )
    }

    /// Mean circular PSNR minus mean serial PSNR.
    pub fn psnr_increment(&self) -> f64 {
        let (_, serial, circular) = self.mean_psnr();
        increment(circular, serial)
    }

    pub fn ssim_increment(&self) -> f64 {
        let (_, serial, circular) = self.mean_ssim();
        increment(circular, serial)
    }

    pub fn summary(&self) -> String {
        let (pc, ps, ph) = self.mean_psnr();
        let (sc, ss, sh) = self.mean_ssim();
        let mut out = String::new();
        let _ = writeln!(out, "images: {}", self.rows.len());
        let _ = writeln!(out, "skipped: {}", self.skipped.len());
        let _ = writeln!(out, "method      psnr_db  ssim");
        let _ = writeln!(out, "compressed  {:>7}  {sc:.4}", fmt_db(pc));
        let _ = writeln!(out, "serial      {:>7}  {ss:.4}", fmt_db(ps));
        let _ = writeln!(out, "circular    {:>7}  {sh:.4}", fmt_db(ph));
        let _ = writeln!(out, "increment_psnr_db: {:+.2}", self.psnr_increment());
        let _ = writeln!(out, "increment_ssim: {:+.4}", self.ssim_increment());
        out
    }

    pub fn manifest(&self, cfg: &RunConfig) -> String {
        let mut out = format!("tool=cssr {}\n", env!("CARGO_PKG_VERSION"));
        out.push_str("[config]\n");
        for line in cfg.to_lines() {
            out.push_str(&line);
            out.push('\n');
        }
        out.push_str("[inputs]\n");
        for p in &self.inputs {
            let _ = writeln!(out, "{}", p.display());
        }
        out.push_str("[skipped]\n");
        for (p, why) in &self.skipped {
            let _ = writeln!(out, "{}: {why}", p.display());
        }
        out
    }
}

enum Job {
    Done(Box<ImageOutcome>),
    Skipped(PathBuf, String),
}

fn run_one(path: &Path, chain: &OperatorChain, cfg: &RunConfig) -> CliResult<Job> {
    let id = image_id(path);
    let original = match fs::read(path)
        .map_err(anyhow::Error::from)
        .and_then(|bytes| Ok(load_ppm(&bytes)?))
    {
        Ok(img) => img,
        Err(e) => {
            warn!("skipping {}: {e:#}", path.display());
            return Ok(Job::Skipped(path.to_path_buf(), format!("{e:#}")));
        }
    };
    match process_image(&id, &original, chain, cfg) {
        Ok(outcome) => {
            info!(
                "{id}: serial {:.2} dB, circular {:.2} dB",
                outcome.row.psnr_serial, outcome.row.psnr_circular
            );
            Ok(Job::Done(Box::new(outcome)))
        }
        Err(e) => {
            let failure = Failure::from_core(e);
            if failure.kind == ExitKind::Data {
                warn!("skipping {}: {}", path.display(), failure);
                Ok(Job::Skipped(path.to_path_buf(), failure.to_string()))
            } else {
                Err(failure.context(format!("image {id}")))
            }
        }
    }
}

fn write_outputs(cfg: &RunConfig, outcome: &ImageOutcome) -> anyhow::Result<()> {
    let id = &outcome.row.image_id;
    if cfg.dump_images {
        dump_images(&cfg.output_dir, id, &outcome.images)?;
    }
    if cfg.dump_traces {
        let path = cfg.output_dir.join(format!("{id}_trace.tsv"));
        fs::write(&path, format_trace(&outcome.trace))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

/// Processes every image under `cfg.input_dir` and writes the run outputs.
///
/// Each of the `cfg.jobs` workers builds its own operator chain, so external
/// backends are never shared between threads.
pub fn run_benchmark(cfg: &RunConfig) -> CliResult<BenchReport> {
    cfg.validate().map_err(Failure::config)?;
    let inputs = collect_inputs(&cfg.input_dir)?;
    if inputs.is_empty() {
        return Err(Failure::data(anyhow!(
            "no .ppm/.pgm images in {}",
            cfg.input_dir.display()
        )));
    }
    fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("creating {}", cfg.output_dir.display()))
        .map_err(Failure::data)?;

    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let results: Mutex<Vec<Result<ResultRow, (PathBuf, String)>>> =
        Mutex::new(Vec::with_capacity(inputs.len()));
    let workers = cfg.jobs.min(inputs.len());

    let worker = || -> CliResult<()> {
        let chain = build_chain(cfg)?;
        loop {
            if abort.load(Ordering::Relaxed) {
                return Ok(());
            }
            let i = next.fetch_add(1, Ordering::Relaxed);
            let Some(path) = inputs.get(i) else {
                return Ok(());
            };
            let job =
                run_one(path, &chain, cfg).inspect_err(|_| abort.store(true, Ordering::Relaxed))?;
            let entry = match job {
                Job::Done(outcome) => {
                    write_outputs(cfg, &outcome).map_err(|e| {
                        abort.store(true, Ordering::Relaxed);
                        Failure::data(e)
                    })?;
                    Ok(outcome.row)
                }
                Job::Skipped(path, why) => Err((path, why)),
            };
            results.lock().expect("result lock").push(entry);
        }
    };

    let outcomes: Vec<CliResult<()>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers).map(|_| s.spawn(worker)).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    if let Some(err) = outcomes.into_iter().find_map(Result::err) {
        return Err(err);
    }

    let mut report = BenchReport {
        inputs,
        ..BenchReport::default()
    };
    for entry in results.into_inner().expect("result lock") {
        match entry {
            Ok(row) => report.rows.push(row),
            Err(skip) => report.skipped.push(skip),
        }
    }
    report.rows.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    report.skipped.sort();

    if report.rows.is_empty() {
        return Err(Failure::data(anyhow!(
            "none of the {} input files could be processed",
            report.inputs.len()
        )));
    }
    let write = |name: &str, text: String| {
        let path = cfg.output_dir.join(name);
        fs::write(&path, text)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(Failure::data)
    };
    write("results.csv", report.csv())?;
    write("summary.txt", report.summary())?;
    write("manifest.txt", report.manifest(cfg))?;
    if !report.skipped.is_empty() {
        warn!("{} input file(s) skipped", report.skipped.len());
    }
    Ok(report)
}

/// Result of [`run_single`].
#[derive(Debug, Clone)]
pub struct SingleReport {
    pub outcome: ImageOutcome,
    pub text: String,
}

/// One image: the metric row, the trace, and optional dumps in `cfg.output_dir`.
pub fn run_single(path: &Path, cfg: &RunConfig) -> CliResult<SingleReport> {
    cfg.validate().map_err(Failure::config)?;
    let bytes = fs::read(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::data)?;
    let original = load_ppm(&bytes)
        .map_err(|e| Failure::data(e).context(format!("loading {}", path.display())))?;
    let chain = build_chain(cfg)?;
    let id = image_id(path);
    let outcome = process_image(&id, &original, &chain, cfg)
        .map_err(|e| Failure::from_core(e).context(format!("image {id}")))?;

    let r = &outcome.row;
    let mut text = String::new();
    let _ = writeln!(text, "image: {id}");
    let _ = writeln!(
        text,
        "compressed  psnr {:>7}  ssim {:.4}",
        fmt_db(r.psnr_compressed),
        r.ssim_compressed
    );
    let _ = writeln!(
        text,
        "serial      psnr {:>7}  ssim {:.4}",
        fmt_db(r.psnr_serial),
        r.ssim_serial
    );
    let _ = writeln!(
        text,
        "circular    psnr {:>7}  ssim {:.4}",
        fmt_db(r.psnr_circular),
        r.ssim_circular
    );
    let _ = writeln!(
        text,
        "increment_psnr_db: {:+.2}",
        increment(r.psnr_circular, r.psnr_serial)
    );
    let _ = writeln!(text, "residual_initial: {:.9e}", r.residual_initial);
    let _ = writeln!(text, "iter\tresidual_l2\tcontrol_l2\tratio\tpsnr_db");
    text.push_str(&format_trace(&outcome.trace));

    if !cfg.output_dir.as_os_str().is_empty() {
        fs::create_dir_all(&cfg.output_dir)
            .and_then(|_| {
                fs::write(
                    cfg.output_dir.join(format!("{id}_trace.tsv")),
                    format_trace(&outcome.trace),
                )
            })
            .with_context(|| format!("writing trace to {}", cfg.output_dir.display()))
            .map_err(Failure::data)?;
        if cfg.dump_images {
            dump_images(&cfg.output_dir, &id, &outcome.images).map_err(Failure::data)?;
        }
    }
    Ok(SingleReport { outcome, text })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Settings;

    fn row(id: &str, serial: f64, circular: f64) -> ResultRow {
        ResultRow {
            image_id: id.into(),
            psnr_compressed: 20.0,
            ssim_compressed: 0.5,
            psnr_serial: serial,
            ssim_serial: 0.6,
            psnr_circular: circular,
            ssim_circular: 0.61,
            residual_initial: 1.0,
            residual_final: 0.5,
            iterations_run: 10,
            wall_ms: 3,
        }
    }

    #[test]
    fn csv_is_sorted_and_renders_inf() {
        let report = BenchReport {
            rows: vec![row("b", 30.0, 30.5), row("a", f64::INFINITY, f64::INFINITY)],
            ..Default::default()
        };
        let csv = report.csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert!(lines[1].starts_with("a,20.000000,0.500000,inf,0.600000,inf,"));
        assert!(lines[2].starts_with("b,"));
        assert_eq!(lines[1].split(',').count(), CSV_HEADER.split(',').count());
    }

    #[test]
    fn increments_handle_infinity() {
        let report = BenchReport {
            rows: vec![row("a", f64::INFINITY, f64::INFINITY)],
            ..Default::default()
        };
        assert_eq!(report.psnr_increment(), 0.0);
        assert!(report.summary().contains("increment_psnr_db: +0.00"));

        let report = BenchReport {
            rows: vec![row("a", 30.0, 30.25), row("b", 31.0, 30.9)],
            ..Default::default()
        };
        assert!((report.psnr_increment() - 0.075).abs() < 1e-12);
        assert!(report.summary().contains("increment_psnr_db: +0.07"));
    }

    #[test]
    fn trace_has_one_line_per_iteration() {
        let trace = LoopTrace {
            initial_residual_l2: 1.0,
            residual_l2: vec![0.5, 0.25],
            control_l2: vec![0.1, 0.05],
            psnr_vs_reference: None,
            iterations_run: 2,
        };
        let text = format_trace(&trace);
        assert_eq!(text.lines().count(), 2);
        assert!(text
            .lines()
            .all(|l| l.split('\t').nth(3) == Some("0.500000")));
    }

    #[test]
    fn process_image_crops_to_the_scale() {
        let mut s = Settings::defaults();
        s.set("cp", "identity").unwrap();
        s.set("sr", "nearest").unwrap();
        s.set("scale", "2").unwrap();
        s.set("iters", "3").unwrap();
        let cfg = s.resolve().unwrap();
        let chain = build_chain(&cfg).unwrap();
        let data = (0..15 * 13).map(|i| (i % 17) as f32 / 16.0).collect();
        let img = Image::new(15, 13, ColorSpace::Gray, data).unwrap();
        let out = process_image("g", &img, &chain, &cfg).unwrap();
        assert_eq!(out.images.ground_truth.width(), 14);
        assert_eq!(out.images.ground_truth.height(), 12);
        assert_eq!(out.row.iterations_run, 3);
    }
}
