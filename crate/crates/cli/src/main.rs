use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use switchbeam::beamform::{beamform_cube, ApertureCube};
use switchbeam::envelope::{parse_pgm, render_pgm};
use switchbeam::geometry::{simulate_rf, RfCube};
use switchbeam::io::cube::cube_checksum;
use switchbeam::io::{read_cube, write_cube, ExperimentConfig, MaskSpec};
use switchbeam::metrics::{cnr, cr, gcnr};
use switchbeam::par;
use switchbeam::perf::bench_model;
use switchbeam::pipeline::{das_envelope, resolve_psf, style_image};
use switchbeam::switchable::{build_dataset, infer_frame, load_weights, save_weights, train, Style, SwitchableModel, TrainHistory};
use switchbeam::{Error, Result};

#[derive(Parser)]
#[command(name = "switchbeam", version, about = "Switchable ultrasound beamforming")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one frame of RF channel data into a URFC cube.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        out: PathBuf,
        /// Frame index; diffuse scatterers use seed `phantom.seed + frame`.
        #[arg(long, default_value_t = 0)]
        frame: usize,
    },
    /// Classical reconstruction of a cube into a PGM image.
    Beamform {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        cube: PathBuf,
        #[arg(long, value_parser = parse_style, default_value = "das")]
        style: Style,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate `phantom.frames` cubes into a directory.
    MakeDataset {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the switchable model on a dataset directory.
    Train {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        data: PathBuf,
        /// Weight file to write.
        #[arg(long)]
        out: PathBuf,
        /// Loss history file; defaults to `<out>.history.txt`.
        #[arg(long)]
        history: Option<PathBuf>,
        /// Overrides `training.epochs`.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Style-switched inference, one PGM per style.
    Infer {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        cube: PathBuf,
        /// Repeatable; all four styles when omitted.
        #[arg(long = "style", value_parser = parse_style)]
        styles: Vec<Style>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// CR, CNR and GCNR of a PGM image over a mask spec.
    Metrics {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        mask: PathBuf,
    },
    /// Per-plane inference latency and depth scaling.
    Bench {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        cube: PathBuf,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        /// Worker threads; the default pool when omitted.
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, value_parser = parse_style, default_value = "das")]
        style: Style,
    },
}

fn parse_style(s: &str) -> std::result::Result<Style, String> {
    Style::from_key(s).ok_or_else(|| format!("unknown style `{s}` (das, despeckle, deconv, deconv-despeckle)"))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidGeometry(_) | Error::Io(_) => 2,
        Error::CorruptFile(_) => 3,
        Error::EmptyRegion | Error::ZeroVariance | Error::ZeroMean => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn load_cube(cfg: &ExperimentConfig, path: &Path) -> Result<ApertureCube> {
    let (header, data) = read_cube(&read(path)?)?;
    let geom = header.apply(&cfg.geometry)?;
    Ok(beamform_cube(&RfCube { data, geom }))
}

fn simulate_frame(cfg: &ExperimentConfig, frame: usize) -> Result<RfCube> {
    simulate_rf(&cfg.geometry, &cfg.phantom_for_frame(frame), &cfg.pulse_model()).map_err(|e| match e {
        Error::EmptyPhantom => Error::Config("phantom has no scatterers".into()),
        other => other,
    })
}

fn frame_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("frame_{k:03}.urfc"))
}

fn history_text(h: &TrainHistory) -> String {
    let mut s = String::from("epoch train_loss val_loss");
    for st in Style::ALL {
        s.push_str(&format!(" val_{}", st.key()));
    }
    s.push('\n');
    for e in &h.epochs {
        s.push_str(&format!("{} {:.6} {:.6}", e.epoch, e.train_loss, e.val_loss));
        for v in e.val_per_style {
            s.push_str(&format!(" {v:.6}"));
        }
        s.push('\n');
    }
    s
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate { cfg, out, frame } => {
            let cfg = ExperimentConfig::load(&cfg.config)?;
            let bytes = write_cube(&simulate_frame(&cfg, frame)?);
            write(&out, &bytes)?;
            let g = &cfg.geometry;
            println!("lines={} depth={} elements={}", g.scan_lines, g.depth_samples, g.element_count);
            println!("crc32={:08x}", cube_checksum(&bytes).unwrap_or(0));
        }
        Command::Beamform { cfg, cube, style, out } => {
            let cfg = ExperimentConfig::load(&cfg.config)?;
            let ap = load_cube(&cfg, &cube)?;
            let env = das_envelope(&ap);
            let psf = resolve_psf(&cfg.pipeline, &cfg.geometry, &cfg.pulse_model(), &env)?;
            let img = style_image(&env, style, &psf, &cfg.pipeline)?;
            write(&out, &render_pgm(&img, cfg.pipeline.dynamic_range))?;
            println!("style={} rows={} cols={}", style.key(), img.rows(), img.cols());
        }
        Command::MakeDataset { cfg, out } => {
            let cfg = ExperimentConfig::load(&cfg.config)?;
            if cfg.phantom.frames == 0 {
                return Err(Error::Config("phantom.frames must be >= 1".into()));
            }
            fs::create_dir_all(&out)?;
            for k in 0..cfg.phantom.frames {
                let bytes = write_cube(&simulate_frame(&cfg, k)?);
                write(&frame_path(&out, k), &bytes)?;
                println!("frame={k} crc32={:08x}", cube_checksum(&bytes).unwrap_or(0));
            }
        }
        Command::Train {
            cfg,
            data,
            out,
            history,
            epochs,
        } => {
            let cfg = ExperimentConfig::load(&cfg.config)?;
            let mut cubes = Vec::new();
            while frame_path(&data, cubes.len()).exists() {
                cubes.push(load_cube(&cfg, &frame_path(&data, cubes.len()))?);
            }
            if cubes.is_empty() {
                return Err(Error::Config(format!("{}: no frame_000.urfc", data.display())));
            }
            let psf = resolve_psf(&cfg.pipeline, &cfg.geometry, &cfg.pulse_model(), &das_envelope(&cubes[0]))?;
            let ds = build_dataset(&cubes, &psf, &cfg.pipeline, cfg.training.depth_context, cfg.training.split_seed)?;
            let mut tc = cfg.train_config()?;
            if let Some(e) = epochs {
                tc.epochs = e.max(1);
            }
            let mut model = SwitchableModel::<f32>::new(cfg.arch(), cfg.training.seed);
            let hist = train(&mut model, &ds.train, &ds.val, &tc)?;
            save_weights(&model, &out)?;
            let hpath = history.unwrap_or_else(|| {
                let mut p = out.clone().into_os_string();
                p.push(".history.txt");
                p.into()
            });
            write(&hpath, history_text(&hist).as_bytes())?;
            println!(
                "train_samples={} val_samples={} epochs={} best_epoch={} best_val={:.4}",
                ds.train.len(),
                ds.val.len(),
                hist.epochs.len(),
                hist.best_epoch,
                hist.epochs[hist.best_epoch].val_loss
            );
        }
        Command::Infer {
            cfg,
            weights,
            cube,
            styles,
            out_dir,
        } => {
            let cfg = ExperimentConfig::load(&cfg.config)?;
            let model = load_weights(&weights)?;
            let ap = load_cube(&cfg, &cube)?;
            let styles = if styles.is_empty() { Style::ALL.to_vec() } else { styles };
            fs::create_dir_all(&out_dir)?;
            for s in styles {
                let (img, t) = infer_frame(&model, &ap, s, cfg.pipeline.dynamic_range)?;
                let path = out_dir.join(format!("{}.pgm", s.key()));
                write(&path, &render_pgm(&img, cfg.pipeline.dynamic_range))?;
                println!("style={} path={} frame_ms={:.3}", s.key(), path.display(), t.total.as_secs_f64() * 1e3);
            }
        }
        Command::Metrics { image, mask } => {
            let spec = MaskSpec::load(&mask).map_err(|e| match e {
                Error::Io(io) => Error::Config(format!("{}: {io}", mask.display())),
                other => other,
            })?;
            let img = parse_pgm(&read(&image)?, spec.dynamic_range)?;
            let m = spec.resolve(img.rows(), img.cols())?;
            println!("cr={:.6}", cr(&img, &m)?);
            println!("cnr={:.6}", cnr(&img, &m)?);
            println!("gcnr={:.6}", gcnr(&img, &m, spec.bins)?);
        }
        Command::Bench {
            cfg,
            weights,
            cube,
            repeats,
            threads,
            style,
        } => {
            let cfg = ExperimentConfig::load(&cfg.config)?;
            let model = load_weights(&weights)?;
            let ap = load_cube(&cfg, &cube)?;
            let report = match threads {
                Some(t) => par::with_threads(t.max(1), || bench_model(&model, &ap, style, repeats))?,
                None => bench_model(&model, &ap, style, repeats)?,
            };
            let ms = |d: std::time::Duration| d.as_secs_f64() * 1e3;
            println!("threads={}", report.threads);
            println!("repeats={}", report.repeats);
            println!("planes={}", report.planes);
            println!("plane_samples={}", report.per_plane.samples);
            println!("plane_mean_ms={:.4}", ms(report.per_plane.mean));
            println!("plane_median_ms={:.4}", ms(report.per_plane.median));
            println!("plane_p95_ms={:.4}", ms(report.per_plane.p95));
            println!("frame_median_ms={:.4}", ms(report.frame.median));
            println!("scaling_ratio={:.4}", report.scaling.ratio);
            println!("scaling_within_band={}", report.scaling.within_band());
            if !report.scaling.within_band() {
                eprintln!("error: time(2N)/time(N) = {:.3} outside [1.6, 2.4]", report.scaling.ratio);
                return Err(Error::InvalidInput("depth scaling outside band".into()));
            }
        }
    }
    Ok(())
}
