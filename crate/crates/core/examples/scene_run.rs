//! Steps a scene at a reduced budget and prints per-frame diagnostics.
//! Settings come from SCENE, PARTICLES, FRAMES, PROJ and ITERS.

use std::time::Instant;

use gsr_fluid::config::RunConfig;
use gsr_fluid::dynamics::{max_anisotropy, mean_abs_divergence};
use gsr_fluid::rng::{stream, Purpose};
use gsr_fluid::sim::{initialize, resolve, run_frames};

fn env<T: std::str::FromStr>(name: &str) -> Option<T> {
    std::env::var(name).ok().and_then(|s| s.parse().ok())
}

fn main() -> gsr_fluid::Result<()> {
    let config = RunConfig {
        scene: Some(env("SCENE").unwrap_or_else(|| "leapfrog2d".to_string())),
        frames: Some(env("FRAMES").unwrap_or(5)),
        particles: env("PARTICLES"),
        init_iterations: env("ITERS"),
        projection_iterations: env("PROJ"),
        ..Default::default()
    };
    let (scene, hyper) = resolve(&config, None)?;
    let t = Instant::now();
    let init = initialize(&scene, &hyper)?;
    println!("init n {} in {:.1?}", init.field.len(), t.elapsed());
    run_frames(init.field, &scene, &hyper, 0, scene.frames as u64, |frame, r| {
        let mut rng = stream(0, Purpose::Metrics, frame, 0);
        let pts = scene.sample_interior(frame as f64 * scene.dt, 4096, &mut rng);
        println!(
            "frame {frame} iters {} splits {} n {} aniso {:.3} / {:.3} div {:.3e} at {:.1?}",
            r.projection.history.len(),
            r.splits,
            r.field.len(),
            r.reseed_max_anisotropy,
            max_anisotropy(&r.field),
            mean_abs_divergence(&r.field, &pts),
            t.elapsed()
        );
        Ok(())
    })?;
    Ok(())
}
