//! Frame-0 initialization and frame stepping for a catalogue scene.

use crate::config::{Hyperparams, RunConfig};
use crate::dynamics::{project, step_frame, FlowMapContext, FrameReport, ProjectionReport, ProjectionSetup};
use crate::error::{GsrError, Result};
use crate::fitting::{fit_initial, init_layout, InitRecord};
use crate::geometry::TriMesh;
use crate::gsr::GsrField;
use crate::params::Group;
use crate::scenes::{Scene, StageOverrides};

#[derive(Clone, Debug)]
pub struct InitReport {
    pub field: GsrField,
    pub history: Vec<InitRecord>,
    pub stage2: Option<ProjectionReport>,
}

/// Resolves a run configuration into a normalized scene and hyperparameters.
/// `mesh_text` is the OBJ source for `config.mesh`, if any.
pub fn resolve(config: &RunConfig, mesh_text: Option<&str>) -> Result<(Scene, Hyperparams)> {
    let name = config
        .scene
        .as_deref()
        .ok_or_else(|| GsrError::Config("no scene given".into()))?;
    let mut scene = Scene::by_name(name)?;
    if let Some(dt) = config.dt {
        scene.dt = dt;
    }
    if let Some(f) = config.frames {
        scene.frames = f;
    }
    if let Some(p) = config.particles {
        scene.particles = p;
    }
    if let Some(text) = mesh_text {
        scene.replace_mesh(TriMesh::from_obj(text)?);
    }
    if config.normalize.unwrap_or(true) {
        scene = scene.normalized();
    }
    scene.validate()?;
    let mut hyper = Hyperparams::defaults(scene.dim);
    config.apply(&mut hyper);
    hyper.validate()?;
    Ok((scene, hyper))
}

/// Layout on the initial domain, fit to the initial field, plus the second
/// stage for scenes that define one.
pub fn initialize(scene: &Scene, hyper: &Hyperparams) -> Result<InitReport> {
    let domain = scene.active_domain(0.0);
    let mut field = init_layout(&domain, scene.particles, hyper.clamp)?;
    let target = scene.initial_field();
    let history = fit_initial(&mut field, &target, &domain, &scene.obstacles(), hyper)?;
    let stage2 = match &scene.stage2 {
        Some(o) => Some(karman_two_stage_init(&mut field, scene, hyper, o)?),
        None => None,
    };
    Ok(InitReport {
        field,
        history,
        stage2,
    })
}

/// One projection pass at `t = 0` with zero advection, so the vorticity
/// target is the curl of the fitted field, under the stage overrides.
pub fn karman_two_stage_init(
    field: &mut GsrField,
    scene: &Scene,
    hyper: &Hyperparams,
    overrides: &StageOverrides,
) -> Result<ProjectionReport> {
    let frozen = field.clone();
    let ctx = FlowMapContext::new(&frozen, 0.0, scene.domain.diagonal());
    let anchors = field.params().group(Group::Position).to_vec();
    let setup = ProjectionSetup {
        scene,
        time: 0.0,
        frame: 0,
        weights: &overrides.weights,
        rates: &overrides.rates,
        hyper,
    };
    project(field, &ctx, &anchors, &setup)
}

/// Steps frames `from + 1 ..= to`, calling `on_frame` after each.
pub fn run_frames(
    mut field: GsrField,
    scene: &Scene,
    hyper: &Hyperparams,
    from: u64,
    to: u64,
    mut on_frame: impl FnMut(u64, &FrameReport) -> Result<()>,
) -> Result<GsrField> {
    for frame in from + 1..=to {
        let report = step_frame(&field, scene, hyper, frame)?;
        on_frame(frame, &report)?;
        field = report.field;
    }
    Ok(field)
}
