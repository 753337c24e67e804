//! Small-budget solver runs for the static page in `www/`.

use gsr_fluid::config::RunConfig;
use gsr_fluid::dynamics::step_frame;
use gsr_fluid::io::{rasterize, Quantity};
use gsr_fluid::sim::{initialize, resolve};
use gsr_fluid::{GsrField, Scene};
use wasm_bindgen::prelude::*;

fn js_err(e: gsr_fluid::GsrError) -> JsError {
    JsError::new(&e.to_string())
}

/// A 2D scene at browser scale.
#[wasm_bindgen]
pub struct Demo {
    scene: Scene,
    original: Scene,
    hyper: gsr_fluid::config::Hyperparams,
    field: GsrField,
    frame: u64,
    iterations: usize,
}

#[wasm_bindgen]
impl Demo {
    /// Fits frame 0 of `scene` with `particles` kernels.
    #[wasm_bindgen(constructor)]
    pub fn new(scene: &str, particles: usize, seed: u64) -> Result<Demo, JsError> {
        Self::build(scene, particles, seed).map_err(js_err)
    }

    /// Advances one frame and returns the projection iteration count.
    pub fn step(&mut self) -> Result<usize, JsError> {
        let r = step_frame(&self.field, &self.scene, &self.hyper, self.frame + 1).map_err(js_err)?;
        self.field = r.field;
        self.frame += 1;
        self.iterations = r.projection.history.len();
        Ok(self.iterations)
    }

    /// RGBA pixels of `quantity` ("vorticity", "divergence" or "speed"),
    /// `width` wide; height follows the domain aspect.
    pub fn render(&self, quantity: &str, width: usize) -> Result<Vec<u8>, JsError> {
        let q: Quantity = quantity.parse().map_err(js_err)?;
        let domain = self.original.active_domain(self.time());
        let img = rasterize(&self.field, self.scene.scale, &domain, q, width.max(1), None);
        Ok(img.rgb.chunks(3).flat_map(|p| [p[0], p[1], p[2], 255]).collect())
    }

    pub fn height_for(&self, width: usize) -> usize {
        let d = &self.original.domain;
        ((width as f64 * d.extent(1) / d.extent(0)).round() as usize).max(1)
    }

    pub fn frame(&self) -> u64 {
        self.frame
    }

    pub fn particles(&self) -> usize {
        self.field.len()
    }

    pub fn time(&self) -> f64 {
        self.frame as f64 * self.scene.dt
    }
}

impl Demo {
    pub fn build(name: &str, particles: usize, seed: u64) -> gsr_fluid::Result<Self> {
        let config = RunConfig {
            scene: Some(name.to_string()),
            particles: Some(particles),
            seed: Some(seed),
            init_iterations: Some(60),
            projection_iterations: Some(40),
            reseed_iterations: Some(10),
            interior_samples: Some(512),
            boundary_samples: Some(64),
            reseed_samples: Some(128),
            ..Default::default()
        };
        let (scene, hyper) = resolve(&config, None)?;
        if scene.dim != 2 {
            return Err(gsr_fluid::GsrError::Config(format!("`{name}` is not a 2D scene")));
        }
        let field = initialize(&scene, &hyper)?.field;
        Ok(Demo {
            original: Scene::by_name(name)?,
            scene,
            hyper,
            field,
            frame: 0,
            iterations: 0,
        })
    }

    pub fn field(&self) -> &GsrField {
        &self.field
    }
}
