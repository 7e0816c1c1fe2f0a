use clap::{Args, Parser, Subcommand};
use dals::io::{self, FieldFile, FieldKind, ManifestRecord};
use dals::metrics::{self, confidence_interval, MetricsReport};
use dals::phantom::{generate_batch, Preset};
use dals::{lambda_maps, segment, threshold, BinaryMask, Error, EvolutionConfig, ProbabilityMap, Result, ScalarField};
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "dals",
    version,
    about = "Level-set lesion segmentation driven by probability maps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate seeded synthetic lesions with emulated localizer output.
    Phantom {
        #[arg(long)]
        preset: Preset,
        #[arg(long, default_value_t = 1)]
        count: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Refine a probability map into a segmentation.
    Segment(SegmentArgs),
    /// Score one predicted mask against a reference mask.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = metrics::DEFAULT_BOUNDF_TOLERANCE)]
        boundf_tol: f64,
    },
    /// Score every manifest entry against predictions found in a directory.
    EvalBatch {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        pred_dir: PathBuf,
    },
    /// Write the λ1 and λ2 maps derived from a probability map.
    Lambda {
        #[arg(long)]
        prob: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SegmentArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    prob: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    mu: f64,
    #[arg(long, default_value_t = 1.5)]
    epsilon: f64,
    #[arg(long, default_value_t = 21)]
    window: usize,
    #[arg(long, default_value_t = 0.45)]
    dt: f64,
    #[arg(long, default_value_t = 6.0)]
    band: f64,
    #[arg(long, default_value_t = 300)]
    max_iters: usize,
    /// Also write overlay.png with the final contour over the image.
    #[arg(long)]
    overlay: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {msg}", e.code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Phantom {
            preset,
            count,
            seed,
            out,
        } => phantom(preset, count, seed, &out),
        Command::Segment(args) => segment_cmd(&args),
        Command::Eval { pred, gt, boundf_tol } => {
            let report = MetricsReport::compute(&load_mask(&pred)?, &load_mask(&gt)?, boundf_tol)?;
            println!("{report}");
            Ok(())
        }
        Command::EvalBatch { manifest, pred_dir } => eval_batch(&manifest, &pred_dir),
        Command::Lambda { prob, out } => {
            let maps = lambda_maps(&load_probability(&prob)?);
            fs::create_dir_all(&out)?;
            io::write_field(out.join("lambda1.dals"), &FieldFile::scalar(maps.lambda1())?)?;
            io::write_field(out.join("lambda2.dals"), &FieldFile::scalar(maps.lambda2())?)?;
            Ok(())
        }
    }
}

fn is_png(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

fn load_image(path: &Path) -> Result<ScalarField> {
    if is_png(path) {
        return io::import_png8(path);
    }
    Ok(io::read_field(path)?.to_scalar())
}

fn load_probability(path: &Path) -> Result<ProbabilityMap> {
    if is_png(path) {
        return Ok(ProbabilityMap::new(io::import_png8(path)?));
    }
    io::read_field(path)?.to_probability()
}

/// Masks are read from mask files directly; probability maps and PNGs are
/// cut at 0.5.
fn load_mask(path: &Path) -> Result<BinaryMask> {
    if is_png(path) {
        return Ok(threshold(&io::import_png8(path)?, 0.5));
    }
    let f = io::read_field(path)?;
    match f.kind() {
        FieldKind::Probability => Ok(threshold(&f.to_scalar(), 0.5)),
        _ => f.to_mask(),
    }
}

fn phantom(preset: Preset, count: u64, seed: u64, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let seeds: Vec<u64> = (seed..seed + count).collect();
    let samples = generate_batch(&preset.spec(seed), &seeds)?;
    let mut records = Vec::with_capacity(samples.len());
    for (s, &seed) in samples.iter().zip(&seeds) {
        let id = format!("{preset}-{seed:06}");
        let name = |part: &str| PathBuf::from(format!("{id}_{part}.dals"));
        let record = ManifestRecord {
            id: id.clone(),
            seed,
            preset: preset.name().to_string(),
            image: name("image"),
            gt: name("gt"),
            prob: name("prob"),
        };
        io::write_field(out.join(&record.image), &FieldFile::scalar(&s.image)?)?;
        io::write_field(out.join(&record.gt), &FieldFile::mask(&s.gt)?)?;
        io::write_field(out.join(&record.prob), &FieldFile::probability(&s.prob)?)?;
        records.push(record);
    }
    io::write_manifest(out.join("manifest.csv"), &records)?;
    println!("wrote {} samples to {}", records.len(), out.display());
    Ok(())
}

#[derive(Serialize)]
struct TraceRow {
    iteration: usize,
    energy: f64,
}

fn segment_cmd(a: &SegmentArgs) -> Result<()> {
    let cfg = EvolutionConfig::builder()
        .mu(a.mu)
        .epsilon(a.epsilon)
        .window(a.window)
        .dt(a.dt)
        .band_half_width(a.band)
        .max_iters(a.max_iters)
        .build()?;
    let image = load_image(&a.image)?;
    let prob = load_probability(&a.prob)?;
    let res = segment(&image, &prob, &cfg)?;

    fs::create_dir_all(&a.out)?;
    io::write_field(a.out.join("y_out.dals"), &FieldFile::probability(&res.y_out)?)?;
    io::write_field(a.out.join("mask.dals"), &FieldFile::mask(&res.mask)?)?;
    io::write_field(a.out.join("phi.dals"), &FieldFile::sdm(&res.phi_final)?)?;
    let mut w = csv::Writer::from_path(a.out.join("energy.csv")).map_err(csv_error)?;
    for (iteration, &energy) in res.energy_trace.iter().enumerate() {
        w.serialize(TraceRow { iteration, energy }).map_err(csv_error)?;
    }
    w.flush()?;
    if a.overlay {
        io::export_overlay(a.out.join("overlay.png"), &image, &res.phi_final)?;
    }
    let status = if res.collapsed {
        "collapsed"
    } else if res.converged {
        "converged"
    } else {
        "max_iters"
    };
    println!("iterations={} status={status}", res.iterations_run);
    Ok(())
}

#[derive(Serialize)]
struct MetricsRow<'a> {
    id: &'a str,
    dice: f64,
    hausdorff: f64,
    boundf: f64,
}

/// Looks for `<id>/mask.dals` (segment output layout), then `<id>.dals`.
fn prediction_path(dir: &Path, id: &str) -> Result<PathBuf> {
    [dir.join(id).join("mask.dals"), dir.join(format!("{id}.dals"))]
        .into_iter()
        .find(|p| p.is_file())
        .ok_or_else(|| Error::InvalidParameter(format!("no prediction for {id} under {}", dir.display())))
}

fn eval_batch(manifest: &Path, pred_dir: &Path) -> Result<()> {
    let base = manifest.parent().unwrap_or(Path::new("."));
    let records = io::read_manifest(manifest)?;
    let mut rows = Vec::with_capacity(records.len());
    for r in &records {
        let pred = load_mask(&prediction_path(pred_dir, &r.id)?)?;
        let gt = load_mask(&base.join(&r.gt))?;
        // An empty prediction is a valid "nothing found" outcome: it scores
        // Dice normally, BoundF 0, and has no defined Hausdorff distance.
        let row = if pred.is_all_zero() {
            MetricsRow {
                id: &r.id,
                dice: metrics::dice(&pred, &gt)?,
                hausdorff: f64::NAN,
                boundf: 0.0,
            }
        } else {
            let m = MetricsReport::compute(&pred, &gt, metrics::DEFAULT_BOUNDF_TOLERANCE)?;
            MetricsRow {
                id: &r.id,
                dice: m.dice,
                hausdorff: m.hausdorff,
                boundf: m.boundf,
            }
        };
        rows.push(row);
    }

    let out = pred_dir.join("metrics.csv");
    let mut w = csv::Writer::from_path(&out).map_err(csv_error)?;
    for row in &rows {
        w.serialize(row).map_err(csv_error)?;
    }
    w.flush()?;

    let columns = [
        ("dice", rows.iter().map(|r| r.dice).collect::<Vec<_>>()),
        ("hausdorff", rows.iter().map(|r| r.hausdorff).collect()),
        ("boundf", rows.iter().map(|r| r.boundf).collect()),
    ];
    for (name, column) in columns {
        let values: Vec<f64> = column.into_iter().filter(|v| !v.is_nan()).collect();
        match confidence_interval(&values) {
            Ok(ci) => println!(
                "{name} mean={:.6} ci95={:.6} n={}",
                ci.mean,
                ci.half_width,
                values.len()
            ),
            Err(Error::InsufficientSamples(n)) => {
                let mean = values.iter().sum::<f64>() / n as f64;
                println!("{name} mean={mean:.6} ci95=nan n={n}")
            }
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidParameter(format!("csv: {other:?}")),
    }
}
