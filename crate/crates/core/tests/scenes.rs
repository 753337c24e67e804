use gsr_fluid::config::Hyperparams;
use gsr_fluid::field::VelocityField;
use gsr_fluid::geometry::{Condition, Geometry};
use gsr_fluid::gsr::GsrField;
use gsr_fluid::io::FrameSnapshot;
use gsr_fluid::linalg::Vec3;
use gsr_fluid::optim::GroupRates;
use gsr_fluid::rng::{stream, Purpose};
use gsr_fluid::scenes::{InitialField, Scene, POINT_VORTEX_STRENGTH, SCENE_NAMES};
use gsr_fluid::sim::{initialize, run_frames};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const GOLDEN: &str = include_str!("data/catalogue.json");

fn fd_jacobian(f: &dyn VelocityField, x: &Vec3, h: f64) -> [[f64; 3]; 3] {
    let mut j = [[0.0; 3]; 3];
    for k in 0..f.dim() {
        let (mut p, mut m) = (*x, *x);
        p[k] += h;
        m[k] -= h;
        let (up, um) = (f.velocity(&p), f.velocity(&m));
        for l in 0..f.dim() {
            j[k][l] = (up[l] - um[l]) / (2.0 * h);
        }
    }
    j
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for raw in Scene::catalogue() {
        for scene in [raw.clone(), raw.normalized()] {
            let f = scene.initial_field();
            let h = 1e-5 * scene.domain.shortest_side();
            for _ in 0..100 {
                let x = scene.domain.sample(&mut rng);
                let an = f.jacobian(&x);
                let fd = fd_jacobian(&f, &x, h);
                let size = an.iter().flatten().fold(1e-3f64, |m, v| m.max(v.abs()));
                for k in 0..3 {
                    for l in 0..3 {
                        assert!(
                            (an[k][l] - fd[k][l]).abs() <= 1e-6 * size,
                            "{} k={} at {x:?}: {} vs {}",
                            scene.name,
                            scene.scale,
                            an[k][l],
                            fd[k][l]
                        );
                    }
                }
            }
        }
    }
}

#[test]
fn taylor_green_is_divergence_free() {
    let s = Scene::by_name("taylor_green").unwrap();
    let f = s.initial_field();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let j = f.jacobian(&s.domain.sample(&mut rng));
        assert!((j[0][0] + j[1][1]).abs() < 1e-12);
    }
}

#[test]
fn taylor_vortex_decay_and_mirror() {
    let s = Scene::by_name("taylor_vortex").unwrap();
    let f = s.initial_field();
    for k in 0..16 {
        let a = k as f64 * std::f64::consts::TAU / 16.0;
        let u = f.velocity(&[5.0 * a.cos(), 5.0 * a.sin(), 0.0]);
        assert!((u[0] * u[0] + u[1] * u[1]).sqrt() < 1e-6);
    }
    // equal vortices at (±0.8, 0): u_x is even and u_y odd under x → −x
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let (x, y) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let (a, b) = (f.velocity(&[x, y, 0.0]), f.velocity(&[-x, y, 0.0]));
        assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] + b[1]).abs() < 1e-12);
    }
}

#[test]
fn vortex_kernel_vanishes_at_its_center() {
    let s = Scene::by_name("leapfrog2d").unwrap();
    let InitialField::Vortices { vortices, .. } = &s.initial else { panic!() };
    let single = InitialField::Vortices {
        vortices: vec![vortices[0]],
        epsilon: 1e-6,
    }
    .compile();
    let c = vortices[0].center;
    assert_eq!(single.velocity(&[c[0], c[1], 0.0]), [0.0, 0.0, 0.0]);
}

#[test]
fn catalogue_constants() {
    let vp = Scene::by_name("vortices_pass").unwrap();
    let InitialField::PointVortices { particles, epsilon } = &vp.initial else { panic!() };
    assert_eq!(*epsilon, 0.1);
    assert_eq!(particles.len(), 48);
    assert!(particles.iter().all(|p| p.strength.abs() == 0.0416666679084301));
    assert_eq!(POINT_VORTEX_STRENGTH, 0.0416666679084301);

    let k = Scene::by_name("karman").unwrap();
    let cyl = k.boundaries.iter().find_map(|b| match (&b.geometry, b.condition) {
        (Geometry::Ball { center, radius }, Condition::Velocity(u)) => Some((*center, *radius, u)),
        _ => None,
    });
    assert_eq!(cyl, Some(([-0.80356845, -0.00502235, 0.0], 0.04553178393357534, [0.0; 3])));
    let o = k.stage2.unwrap();
    assert_eq!((o.weights.vor, o.weights.div, o.weights.aniso, o.weights.vol, o.weights.pos), (1.0, 10.0, 10.0, 10.0, 0.0));
    assert_eq!(
        o.rates,
        GroupRates {
            position: 1e-4,
            log_inv_scale: 1e-5,
            rotation: 1.201956e-5,
            weight: 1e-4,
        }
    );
    assert_eq!(k.initial, InitialField::Uniform { velocity: [0.5, 0.0, 0.0] });
}

/// The catalogue as JSON, with mesh contents reduced to their sizes.
fn catalogue_json() -> Value {
    let mut v = serde_json::to_value(Scene::catalogue()).unwrap();
    fn strip(v: &mut Value) {
        match v {
            Value::Object(m) => {
                if let (Some(Value::Array(vs)), Some(Value::Array(ts))) = (m.get("vertices"), m.get("triangles")) {
                    let (nv, nt) = (vs.len(), ts.len());
                    m.insert("vertices".into(), nv.into());
                    m.insert("triangles".into(), nt.into());
                    return;
                }
                m.values_mut().for_each(strip);
            }
            Value::Array(a) => a.iter_mut().for_each(strip),
            _ => {}
        }
    }
    strip(&mut v);
    v
}

#[test]
fn catalogue_matches_golden_file() {
    let golden: Value = serde_json::from_str(GOLDEN).unwrap();
    let now = catalogue_json();
    if std::env::var_os("GSR_BLESS").is_some() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/catalogue.json");
        std::fs::write(path, serde_json::to_string_pretty(&now).unwrap() + "\n").unwrap();
        return;
    }
    if golden != now {
        panic!("catalogue changed:\n{}", serde_json::to_string_pretty(&now).unwrap());
    }
    let names: Vec<&str> = golden.as_array().unwrap().iter().map(|s| s["name"].as_str().unwrap()).collect();
    assert_eq!(names, SCENE_NAMES);
}

#[test]
fn scenes_round_trip_through_json() {
    for s in Scene::catalogue() {
        let text = serde_json::to_string(&s).unwrap();
        let back: Scene = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }
}

#[test]
fn karman_interior_follows_the_dynamic_domain() {
    let s = Scene::by_name("karman").unwrap().normalized();
    let t_half = 0.5 * s.total_time();
    let inflow = s.inflow.unwrap();
    let left = inflow.x_min - s.total_time() * inflow.speed / 2.0;
    let mut rng = stream(0, Purpose::Test, 0, 0);
    let pts = s.sample_interior(t_half, 4096, &mut rng);
    assert!(pts.iter().all(|p| p[0] >= left - 1e-12));
    assert!(pts.iter().any(|p| p[0] < inflow.x_min));
    assert_eq!(s.active_domain(s.total_time()), s.domain);
}

fn small_karman() -> (Scene, Hyperparams) {
    let mut s = Scene::by_name("karman").unwrap();
    s.frames = 10;
    s.particles = 1200;
    let s = s.normalized();
    let mut h = Hyperparams::defaults(2);
    h.init_iterations = 150;
    h.projection_iterations = 150;
    h.interior_samples = 2048;
    h.boundary_samples = 256;
    h.reseed_iterations = 20;
    h.reseed_samples = 256;
    (s, h)
}

/// Mean `|ṽ·n|` on the cylinder.
fn cylinder_flow(field: &GsrField, scene: &Scene) -> f64 {
    let mut rng = stream(9, Purpose::Test, 0, 0);
    let piece = &scene.boundaries[0];
    let samples = piece.sample(&scene.domain, 2048, &mut rng);
    samples
        .iter()
        .map(|w| {
            let v = field.evaluate(&w.point);
            (v[0] * w.normal[0] + v[1] * w.normal[1]).abs()
        })
        .sum::<f64>()
        / samples.len() as f64
}

#[test]
fn karman_second_stage_enforces_the_cylinder() {
    let (scene, hyper) = small_karman();
    let staged = initialize(&scene, &hyper).unwrap();
    let hist = &staged.stage2.as_ref().unwrap().history;
    assert!(hist.last().unwrap().loss.b1 < hist[0].loss.b1);

    let plain = initialize(&Scene { stage2: None, ..scene.clone() }, &hyper).unwrap();
    assert!(plain.stage2.is_none());
    let (with, without) = (cylinder_flow(&staged.field, &scene), cylinder_flow(&plain.field, &scene));
    assert!(without > with, "{without:e} vs {with:e}");
    assert!(without > 0.0);
}

#[test]
fn karman_short_run_on_the_moving_domain() {
    let (scene, hyper) = small_karman();
    let init = initialize(&scene, &hyper).unwrap();
    let n0 = init.field.len();
    let mut lefts = Vec::new();
    let last = run_frames(init.field, &scene, &hyper, 0, scene.frames as u64, |frame, r| {
        let d = scene.active_domain(frame as f64 * scene.dt);
        lefts.push(d.min[0]);
        assert!(r.projection.history.iter().all(|h| h.loss.total.is_finite()));
        assert!(r.field.len() >= n0);
        Ok(())
    })
    .unwrap();
    assert_eq!(lefts.len(), 10);
    assert!(lefts.windows(2).all(|w| w[1] > w[0]));
    assert!((lefts[9] - scene.domain.min[0]).abs() < 1e-9);
    // the stream still flows toward +x in the wake region
    let mid = last.evaluate(&[0.5 * (scene.domain.min[0] + scene.domain.max[0]) + 2.0, 3.0, 0.0]);
    assert!(mid[0] > 0.0);
}

#[test]
fn frame_zero_is_reproducible() {
    let mut s = Scene::by_name("taylor_vortex").unwrap();
    s.particles = 400;
    let s = s.normalized();
    let mut h = Hyperparams::defaults(2);
    h.init_iterations = 30;
    h.interior_samples = 512;
    let snap = |f: GsrField| FrameSnapshot { frame: 0, time: 0.0, field: f }.to_text();
    let a = snap(initialize(&s, &h).unwrap().field);
    let b = snap(initialize(&s, &h).unwrap().field);
    assert_eq!(a, b);
    h.seed = 1;
    assert_ne!(a, snap(initialize(&s, &h).unwrap().field));
}
