//! `hivewatch`: evaluation, dataset statistics, video detection, timing
//! benchmarks and the HTTP service from the command line.
//!
//! Exit codes: 0 success, 1 domain error, 2 usage error. Data goes to
//! stdout, diagnostics to stderr.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hivewatch_core::artifacts::{run_detection, REPORT_CSV, SUMMARY_JSON};
use hivewatch_core::backend::{build_backend, BackendSpec};
use hivewatch_core::bench::run_bench;
use hivewatch_core::dataset::{compute_stats, load_corpus, split, SplitSizes};
use hivewatch_core::evaluation::io::{load_prediction_dir, load_truth_dir};
use hivewatch_core::evaluation::{evaluate_dataset, EvalConfig};
use hivewatch_core::media::{open_video, FrameRate};
use hivewatch_core::pipeline::KeyframePolicy;
use hivewatch_core::report::ReportSummary;
use hivewatch_core::synthetic::SyntheticVideo;
use hivewatch_service::{ServiceConfig, DATA_DIR_ENV, DEFAULT_UPLOAD_LIMIT, DEFAULT_WORKERS};

#[derive(Parser)]
#[command(
    name = "hivewatch",
    version,
    about = "Pollinator detection evaluation and video reporting"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Default, ValueEnum)]
enum Format {
    #[default]
    Table,
    Csv,
}

#[derive(Args)]
struct Output {
    /// Output format for the result table.
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Score prediction files against ground truth.
    Eval {
        /// Ground-truth annotation directory (uses `labels/` when present).
        #[arg(long)]
        truth: PathBuf,
        /// Prediction directory: `class cx cy w h confidence` per line.
        #[arg(long)]
        preds: PathBuf,
        /// Extra single-threshold mAP columns, e.g. `0.75,0.9`.
        #[arg(long, value_delimiter = ',')]
        iou_thresholds: Vec<f64>,
        /// Confidence threshold for precision and recall.
        #[arg(long, default_value_t = 0.25)]
        conf: f64,
        /// IoU threshold for precision and recall.
        #[arg(long, default_value_t = 0.5)]
        iou: f64,
        /// Row label; defaults to the predictions directory name.
        #[arg(long)]
        model: Option<String>,
        #[command(flatten)]
        output: Output,
    },
    /// Corpus statistics and histograms.
    Stats {
        #[arg(long)]
        dataset: PathBuf,
        /// Directory for histogram CSVs.
        #[arg(long)]
        histograms: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Seeded train/validation/test split of a corpus.
    Split {
        #[arg(long)]
        dataset: PathBuf,
        /// Exact sizes `TRAIN,VAL,TEST`.
        #[arg(long, value_delimiter = ',', conflicts_with = "ratios")]
        counts: Option<Vec<usize>>,
        /// Relative weights `TRAIN,VAL,TEST`.
        #[arg(long, value_delimiter = ',')]
        ratios: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Writes `train.txt`, `val.txt`, `test.txt` here.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run detection over a video and write the report artifacts.
    Detect {
        #[arg(long)]
        video: PathBuf,
        /// `replay:TRUTH_DIR[,drop=F,jitter=PX,seed=N]` or `model:PATH`.
        #[arg(long)]
        backend: String,
        /// Keyframe stride; 2 samples at half the frame rate.
        #[arg(long, default_value_t = 2)]
        stride: u32,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        output: Output,
    },
    /// Mean per-stage timing over repeated passes.
    Bench {
        #[arg(long)]
        video: PathBuf,
        #[arg(long)]
        backend: String,
        #[arg(long, default_value_t = 1)]
        repeat: usize,
        #[arg(long, default_value_t = 2)]
        stride: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        output: Output,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Job store root.
        #[arg(long, env = DATA_DIR_ENV)]
        data_dir: PathBuf,
        #[arg(long)]
        backend: String,
        #[arg(long, default_value_t = 2)]
        stride: u32,
        #[arg(long, default_value_t = DEFAULT_WORKERS)]
        workers: usize,
        /// Maximum upload size in bytes.
        #[arg(long, default_value_t = DEFAULT_UPLOAD_LIMIT)]
        upload_limit: u64,
        /// Directory served under `/` (the web UI build).
        #[arg(long)]
        static_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a synthetic annotated video (`video.y4m` plus `truth/`).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        seconds: u32,
        #[arg(long, default_value_t = 30)]
        fps: u32,
        #[arg(long, default_value_t = 96)]
        width: u32,
        #[arg(long, default_value_t = 64)]
        height: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

enum Failure {
    Usage(String),
    Domain(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Domain(e.into())
    }
}

type CmdResult = Result<(), Failure>;

fn require_file(path: &Path, what: &str) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Usage(format!(
            "{what} {} does not exist",
            path.display()
        )))
    }
}

fn require_dir(path: &Path, what: &str) -> Result<(), Failure> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Failure::Usage(format!(
            "{what} {} is not a directory",
            path.display()
        )))
    }
}

fn parse_backend(spec: &str) -> Result<BackendSpec, Failure> {
    spec.parse()
        .map_err(|e: hivewatch_core::Error| Failure::Usage(e.to_string()))
}

fn policy(stride: u32) -> Result<KeyframePolicy, Failure> {
    KeyframePolicy::new(stride).map_err(|e| Failure::Usage(e.to_string()))
}

fn metric_table(rows: &[(&str, String)], format: Format) -> String {
    match format {
        Format::Csv => {
            let mut out = String::from("Metric,Value\n");
            for (m, v) in rows {
                let _ = writeln!(out, "{m},{v}");
            }
            out
        }
        Format::Table => {
            let mw = rows.iter().map(|(m, _)| m.len()).max().unwrap_or(0).max(6);
            let vw = rows.iter().map(|(_, v)| v.len()).max().unwrap_or(0).max(5);
            let mut out = format!("{:<mw$}  {:>vw$}\n", "Metric", "Value");
            for (m, v) in rows {
                let _ = writeln!(out, "{m:<mw$}  {v:>vw$}");
            }
            out
        }
    }
}

fn cmd_eval(
    truth: &Path,
    preds: &Path,
    extra: Vec<f64>,
    conf: f64,
    iou: f64,
    model: Option<String>,
    format: Format,
) -> CmdResult {
    require_dir(truth, "truth directory")?;
    require_dir(preds, "predictions directory")?;
    if !(0.0..=1.0).contains(&conf) || !(iou > 0.0 && iou <= 1.0) {
        return Err(Failure::Usage(
            "--conf must be in [0, 1] and --iou in (0, 1]".into(),
        ));
    }
    if let Some(t) = extra.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
        return Err(Failure::Usage(format!("IoU threshold {t} outside (0, 1]")));
    }
    let gt = load_truth_dir(truth)?;
    let loaded = load_prediction_dir(preds)?;
    let orphans: Vec<&PathBuf> = loaded
        .iter()
        .filter(|(id, _)| !gt.contains_key(*id))
        .map(|(_, (path, _))| path)
        .collect();
    if !orphans.is_empty() {
        for p in &orphans {
            eprintln!("unmatched prediction file: {}", p.display());
        }
        return Err(anyhow!("{} prediction file(s) have no ground truth", orphans.len()).into());
    }
    let detections: BTreeMap<_, _> = loaded.into_iter().map(|(id, (_, d))| (id, d)).collect();
    let config = EvalConfig {
        confidence_threshold: conf,
        iou_threshold: iou,
        extra_thresholds: extra,
    };
    let summary = evaluate_dataset(&detections, &gt, None, &config)?;
    let label = model.unwrap_or_else(|| {
        preds
            .canonicalize()
            .ok()
            .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .unwrap_or_else(|| "model".into())
    });
    match format {
        Format::Table => print!("{}", summary.render_table(&label)),
        Format::Csv => print!("{}", summary.render_csv(&label)?),
    }
    Ok(())
}

fn cmd_stats(dataset: &Path, histograms: Option<PathBuf>, format: Format) -> CmdResult {
    require_dir(dataset, "dataset directory")?;
    let corpus = load_corpus(dataset)?;
    let stats = compute_stats(&corpus)?;
    if let Some(dir) = histograms {
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        for (name, body) in [
            ("boxes_per_image.csv", stats.boxes_per_image_csv()),
            ("box_area.csv", stats.area_histogram.to_csv()),
            ("aspect_ratio.csv", stats.aspect_histogram.to_csv()),
        ] {
            let path = dir.join(name);
            fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        }
    }
    match format {
        Format::Table => print!("{}", stats.render_table()),
        Format::Csv => print!("{}", stats.render_csv()),
    }
    Ok(())
}

fn cmd_split(
    dataset: &Path,
    counts: Option<Vec<usize>>,
    ratios: Option<Vec<f64>>,
    seed: u64,
    out: &Path,
) -> CmdResult {
    require_dir(dataset, "dataset directory")?;
    let sizes = match (counts, ratios) {
        (Some(c), None) if c.len() == 3 => SplitSizes::Counts([c[0], c[1], c[2]]),
        (None, Some(r)) if r.len() == 3 => SplitSizes::Ratios([r[0], r[1], r[2]]),
        _ => {
            return Err(Failure::Usage(
                "give three values to exactly one of --counts or --ratios".into(),
            ))
        }
    };
    let ids: Vec<_> = load_corpus(dataset)?.into_iter().map(|i| i.image_id).collect();
    let spec = split(&ids, sizes, seed)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut parts = vec![("train", &spec.train), ("val", &spec.val), ("test", &spec.test)];
    if !spec.unassigned.is_empty() {
        parts.push(("unassigned", &spec.unassigned));
    }
    for (name, ids) in &parts {
        let body: String = ids.iter().map(|i| format!("{i}\n")).collect();
        fs::write(out.join(format!("{name}.txt")), body)?;
    }
    let rows: Vec<(&str, String)> = parts.iter().map(|(n, ids)| (*n, ids.len().to_string())).collect();
    print!("{}", metric_table(&rows, Format::Table));
    Ok(())
}

fn summary_rows(s: &ReportSummary, keyframes: usize, gallery: usize) -> Vec<(&'static str, String)> {
    let dash = |o: &Option<String>| o.clone().unwrap_or_else(|| "-".into());
    vec![
        ("Seconds analysed", s.total_seconds.to_string()),
        ("Seconds with detections", s.detection_seconds.to_string()),
        ("Max simultaneous", s.max_simultaneous.to_string()),
        ("First detection", dash(&s.first_detection)),
        ("Last detection", dash(&s.last_detection)),
        ("Keyframes processed", keyframes.to_string()),
        ("Gallery frames", gallery.to_string()),
    ]
}

fn cmd_detect(video: &Path, backend: &str, stride: u32, out: &Path, seed: u64, format: Format) -> CmdResult {
    require_file(video, "video")?;
    let spec = parse_backend(backend)?;
    let policy = policy(stride)?;
    let mut detector = build_backend(&spec, seed)?;
    let source = open_video(video)?;
    let run = run_detection(source, &mut detector, &policy, out, &mut |_| true)?;
    print!(
        "{}",
        metric_table(
            &summary_rows(&run.summary, run.output.events.len(), run.gallery),
            format
        )
    );
    eprintln!("wrote {} and {} to {}", REPORT_CSV, SUMMARY_JSON, out.display());
    match run.output.interruption {
        None => Ok(()),
        Some(stop) => {
            eprintln!("partial report: {stop}");
            Err(anyhow!(
                "processing stopped early; artifacts cover {} of {} keyframes",
                run.output.events.len(),
                run.output.planned
            )
            .into())
        }
    }
}

fn cmd_bench(
    video: &Path,
    backend: &str,
    repeat: usize,
    stride: u32,
    seed: u64,
    format: Format,
) -> CmdResult {
    require_file(video, "video")?;
    if repeat == 0 {
        return Err(Failure::Usage("--repeat must be at least 1".into()));
    }
    let spec = parse_backend(backend)?;
    let policy = policy(stride)?;
    let mut detector = build_backend(&spec, seed)?;
    let report = run_bench(&mut || open_video(video), &mut detector, &policy, repeat)?;
    match format {
        Format::Table => print!("{}", report.render_table()),
        Format::Csv => print!("{}", report.render_csv()),
    }
    if report.non_additive > 0 {
        return Err(anyhow!("stage timings are not additive").into());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_serve(
    host: String,
    port: u16,
    data_dir: PathBuf,
    backend: &str,
    stride: u32,
    workers: usize,
    upload_limit: u64,
    static_dir: Option<PathBuf>,
    seed: u64,
) -> CmdResult {
    let spec = parse_backend(backend)?;
    if workers == 0 {
        return Err(Failure::Usage("--workers must be at least 1".into()));
    }
    if let Some(dir) = &static_dir {
        require_dir(dir, "static directory")?;
    }
    let mut config = ServiceConfig::new(data_dir, spec);
    config.policy = policy(stride)?;
    config.workers = workers;
    config.upload_limit = upload_limit;
    config.static_dir = static_dir;
    config.seed = seed;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((host.as_str(), port))
            .await
            .with_context(|| format!("binding {host}:{port}"))?;
        hivewatch_service::serve(config, listener, shutdown_signal()).await?;
        eprintln!("shut down cleanly");
        Ok(())
    })
}

async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        let mut term = signal(SignalKind::terminate()).expect("installing SIGTERM handler");
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    let _ = tokio::signal::ctrl_c().await;
}

fn cmd_synth(out: &Path, seconds: u32, fps: u32, width: u32, height: u32, seed: u64) -> CmdResult {
    let rate = FrameRate::new(fps, 1).map_err(|e| Failure::Usage(e.to_string()))?;
    if width < 2 || height < 2 {
        return Err(Failure::Usage("--width and --height must be at least 2".into()));
    }
    let video = SyntheticVideo::random(seconds, rate, seed).with_size(width, height);
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    video.write(&out.join("video.y4m"), &out.join("truth"))?;
    let occupancy: String = video
        .occupancy_series()
        .iter()
        .map(|(s, n)| format!("{s},{n}\n"))
        .collect();
    fs::write(out.join("occupancy.csv"), format!("second,bees\n{occupancy}"))?;
    println!("{}", out.join("video.y4m").display());
    Ok(())
}

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Eval {
            truth,
            preds,
            iou_thresholds,
            conf,
            iou,
            model,
            output,
        } => cmd_eval(&truth, &preds, iou_thresholds, conf, iou, model, output.format),
        Command::Stats {
            dataset,
            histograms,
            output,
        } => cmd_stats(&dataset, histograms, output.format),
        Command::Split {
            dataset,
            counts,
            ratios,
            seed,
            out,
        } => cmd_split(&dataset, counts, ratios, seed, &out),
        Command::Detect {
            video,
            backend,
            stride,
            out,
            seed,
            output,
        } => cmd_detect(&video, &backend, stride, &out, seed, output.format),
        Command::Bench {
            video,
            backend,
            repeat,
            stride,
            seed,
            output,
        } => cmd_bench(&video, &backend, repeat, stride, seed, output.format),
        Command::Serve {
            port,
            host,
            data_dir,
            backend,
            stride,
            workers,
            upload_limit,
            static_dir,
            seed,
        } => cmd_serve(
            host,
            port,
            data_dir,
            &backend,
            stride,
            workers,
            upload_limit,
            static_dir,
            seed,
        ),
        Command::Synth {
            out,
            seconds,
            fps,
            width,
            height,
            seed,
        } => cmd_synth(&out, seconds, fps, width, height, seed),
    }
}

/// Joins the error chain, skipping causes already quoted by their parent.
fn chain(e: &anyhow::Error) -> String {
    let mut out = e.to_string();
    for cause in e.chain().skip(1) {
        let text = cause.to_string();
        if !out.ends_with(&text) {
            out = format!("{out}: {text}");
        }
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let default_level = if matches!(cli.command, Command::Serve { .. }) {
        "info"
    } else {
        "warn"
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default_level)),
        )
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Domain(e)) => {
            eprintln!("error: {}", chain(&e));
            ExitCode::from(1)
        }
    }
}
