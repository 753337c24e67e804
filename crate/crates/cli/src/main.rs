//! `gsr`: initialize, simulate and inspect runs on disk.
//!
//! A run directory holds `run.json` (the resolved configuration),
//! `frame_NNNN.gsr` snapshots, `init_loss.csv`, optionally
//! `stage2_loss.csv`, and per-frame `frame_NNNN_loss.csv` files.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gsr_fluid::config::RunConfig;
use gsr_fluid::dynamics::{max_anisotropy, mean_abs_divergence};
use gsr_fluid::io::{init_csv, mse_metric, projection_csv, rasterize, FrameSnapshot, Quantity};
use gsr_fluid::rng::{stream, Purpose};
use gsr_fluid::sim::{initialize, resolve, run_frames};
use gsr_fluid::{GsrError, Result, Scene};

const RUN_FILE: &str = "run.json";

#[derive(Parser)]
#[command(name = "gsr", version, about = "Gaussian spatial representation fluid solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit frame 0 and write it with the loss history.
    Init {
        #[arg(long)]
        scene: Option<String>,
        /// JSON run configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run directory; falls back to `output` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
    },
    /// Step frames 1..=K from frame 0, replacing later frames.
    Simulate {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        frames: u64,
        /// Also write an image of this quantity per frame. Repeatable.
        #[arg(long = "image")]
        images: Vec<Quantity>,
    },
    /// Step K more frames from the latest snapshot.
    Resume {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        frames: u64,
        #[arg(long = "image")]
        images: Vec<Quantity>,
    },
    /// Render one snapshot to a binary PPM.
    Rasterize {
        snapshot: PathBuf,
        #[arg(long, default_value = "vorticity")]
        quantity: Quantity,
        /// Image width in pixels.
        #[arg(long)]
        resolution: Option<usize>,
        /// Color scale limit; max |value| when absent.
        #[arg(long)]
        range: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Run directory; defaults to the snapshot's directory.
        #[arg(long)]
        run: Option<PathBuf>,
    },
    /// Print diagnostics for one snapshot.
    Metrics {
        snapshot: PathBuf,
        #[arg(long)]
        run: Option<PathBuf>,
        #[arg(long, default_value_t = 4096)]
        samples: usize,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let text = e.render().to_string();
            let line = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("error: {}", line.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    if let Err(e) = set_threads() {
        eprintln!("error: {e}");
        return ExitCode::FAILURE;
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}

fn set_threads() -> Result<()> {
    let Ok(v) = std::env::var("GSR_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .map_err(|_| GsrError::Config(format!("GSR_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| GsrError::Config(e.to_string()))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Init {
            scene,
            config,
            out,
            seed,
        } => init(scene, config.as_deref(), out, seed),
        Command::Simulate { run, frames, images } => step(&run, 0, frames, &images),
        Command::Resume { run, frames, images } => {
            let latest = latest_frame(&run)?;
            step(&run, latest, frames, &images)
        }
        Command::Rasterize {
            snapshot,
            quantity,
            resolution,
            range,
            out,
            run,
        } => {
            let run = Run::load(&run_dir(&snapshot, run))?;
            let snap = FrameSnapshot::read(&snapshot)?;
            let width = resolution.unwrap_or_else(|| run.image_resolution());
            let img = run.render(&snap, quantity, width, range)?;
            fs::write(out, img)?;
            Ok(())
        }
        Command::Metrics { snapshot, run, samples } => {
            let run = Run::load(&run_dir(&snapshot, run))?;
            let snap = FrameSnapshot::read(&snapshot)?;
            println!("{}", run.metrics(&snap, samples)?);
            Ok(())
        }
    }
}

fn run_dir(snapshot: &Path, run: Option<PathBuf>) -> PathBuf {
    run.unwrap_or_else(|| snapshot.parent().map(Path::to_path_buf).unwrap_or_default())
}

fn snapshot_path(dir: &Path, frame: u64) -> PathBuf {
    dir.join(format!("frame_{frame:04}.gsr"))
}

fn latest_frame(dir: &Path) -> Result<u64> {
    let mut latest = None;
    for entry in fs::read_dir(dir)? {
        let name = entry?.file_name();
        let name = name.to_string_lossy();
        if let Some(n) = name.strip_prefix("frame_").and_then(|r| r.strip_suffix(".gsr")) {
            if let Ok(n) = n.parse::<u64>() {
                latest = latest.max(Some(n));
            }
        }
    }
    latest.ok_or_else(|| GsrError::Config(format!("no snapshots in {}", dir.display())))
}

fn init(scene: Option<String>, config: Option<&Path>, out: Option<PathBuf>, seed: u64) -> Result<()> {
    let mut cfg = match config {
        Some(p) => RunConfig::from_json(&fs::read_to_string(p)?)?,
        None => RunConfig::default(),
    };
    if scene.is_some() {
        cfg.scene = scene;
    }
    cfg.seed = Some(seed);
    if let Some(mesh) = &cfg.mesh {
        let base = config.and_then(Path::parent).unwrap_or(Path::new("."));
        cfg.mesh = Some(fs::canonicalize(base.join(mesh))?.to_string_lossy().into_owned());
    }
    let dir = out
        .or_else(|| cfg.output.as_ref().map(PathBuf::from))
        .ok_or_else(|| GsrError::Config("no output directory given".into()))?;
    cfg.output = None;
    let run = Run::from_config(cfg)?;
    fs::create_dir_all(&dir)?;
    fs::write(dir.join(RUN_FILE), run.config.to_json() + "\n")?;
    let report = initialize(&run.scene, &run.hyper)?;
    fs::write(dir.join("init_loss.csv"), init_csv(&report.history))?;
    if let Some(s2) = &report.stage2 {
        fs::write(dir.join("stage2_loss.csv"), projection_csv(&s2.history))?;
    }
    FrameSnapshot {
        frame: 0,
        time: 0.0,
        field: report.field,
    }
    .write(&snapshot_path(&dir, 0))?;
    println!("frame 0 particles {} iterations {}", run.scene.particles, report.history.len());
    Ok(())
}

fn step(dir: &Path, from: u64, frames: u64, images: &[Quantity]) -> Result<()> {
    if frames == 0 {
        return Ok(());
    }
    let run = Run::load(dir)?;
    let start = FrameSnapshot::read(&snapshot_path(dir, from))?;
    if start.frame != from {
        return Err(GsrError::Config(format!("snapshot for frame {from} holds frame {}", start.frame)));
    }
    let to = from + frames;
    let result = run_frames(start.field, &run.scene, &run.hyper, from, to, |frame, r| {
        let snap = FrameSnapshot {
            frame,
            time: frame as f64 * run.scene.dt,
            field: r.field.clone(),
        };
        snap.write(&snapshot_path(dir, frame))?;
        fs::write(dir.join(format!("frame_{frame:04}_loss.csv")), projection_csv(&r.projection.history))?;
        for &q in images {
            let img = run.render(&snap, q, run.image_resolution(), None)?;
            fs::write(dir.join(format!("frame_{frame:04}_{}.ppm", quantity_name(q))), img)?;
        }
        println!(
            "frame {frame} particles {} iterations {} splits {}",
            r.field.len(),
            r.projection.history.len(),
            r.splits
        );
        Ok(())
    });
    match result {
        Ok(_) => Ok(()),
        Err(GsrError::Diverged { frame, field, iteration, what }) => {
            let snap = FrameSnapshot {
                frame,
                time: frame as f64 * run.scene.dt,
                field: *field,
            };
            snap.write(&dir.join(format!("diverged_{frame:04}.gsr")))?;
            Err(GsrError::Diverged {
                frame,
                iteration,
                what,
                field: Box::new(snap.field),
            })
        }
        Err(e) => Err(e),
    }
}

fn quantity_name(q: Quantity) -> &'static str {
    match q {
        Quantity::Vorticity => "vorticity",
        Quantity::Divergence => "divergence",
        Quantity::Speed => "speed",
    }
}

struct Run {
    config: RunConfig,
    scene: Scene,
    hyper: gsr_fluid::config::Hyperparams,
}

impl Run {
    fn from_config(config: RunConfig) -> Result<Self> {
        let mesh = match &config.mesh {
            Some(p) => Some(fs::read_to_string(p)?),
            None => None,
        };
        let (scene, hyper) = resolve(&config, mesh.as_deref())?;
        Ok(Run { config, scene, hyper })
    }

    fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(RUN_FILE);
        let text = fs::read_to_string(&path)
            .map_err(|e| GsrError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_config(RunConfig::from_json(&text)?)
    }

    fn image_resolution(&self) -> usize {
        self.config.image_resolution.unwrap_or(256)
    }

    /// The scene in original units, for the analytic initial field.
    fn original(&self) -> Result<Scene> {
        Scene::by_name(&self.scene.name)
    }

    fn check(&self, snap: &FrameSnapshot) -> Result<()> {
        if snap.field.dim() != self.scene.dim {
            return Err(GsrError::Dimension {
                expected: self.scene.dim,
                got: snap.field.dim(),
            });
        }
        Ok(())
    }

    fn render(&self, snap: &FrameSnapshot, q: Quantity, width: usize, range: Option<f64>) -> Result<Vec<u8>> {
        self.check(snap)?;
        if width == 0 {
            return Err(GsrError::Config("resolution must be positive".into()));
        }
        let domain = self.original()?.active_domain(snap.time);
        Ok(rasterize(&snap.field, self.scene.scale, &domain, q, width, range).to_ppm())
    }

    fn metrics(&self, snap: &FrameSnapshot, samples: usize) -> Result<String> {
        self.check(snap)?;
        let original = self.original()?;
        let mse = mse_metric(
            &snap.field,
            self.scene.scale,
            &original.initial_field(),
            &original.active_domain(snap.time),
            60,
        );
        let mut rng = stream(self.hyper.seed, Purpose::Metrics, snap.frame, 0);
        let pts = self.scene.sample_interior(snap.time, samples.max(1), &mut rng);
        let div = mean_abs_divergence(&snap.field, &pts);
        Ok(format!(
            "frame={} time={} particles={} mse_initial={:e} mean_abs_div={:e} max_aniso={}",
            snap.frame,
            snap.time,
            snap.field.len(),
            mse,
            div,
            max_anisotropy(&snap.field)
        ))
    }
}
