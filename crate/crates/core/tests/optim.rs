use gsr_fluid::gsr::{GaussianParticle, GsrField, DEFAULT_CLAMP};
use gsr_fluid::optim::{pcgrad_combine, Adam, GroupRates, PlateauScheduler};
use gsr_fluid::params::{Group, ParamSet};
use proptest::collection::vec;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..40).prop_flat_map(|n| (vec(-10.0f64..10.0, n), vec(-10.0f64..10.0, n)))
}

/// Pairs whose dot product has the requested sign, made by flipping `b`.
fn signed_pair(conflicting: bool) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    pair().prop_map(move |(a, mut b)| {
        if (dot(&a, &b) < 0.0) != conflicting {
            b.iter_mut().for_each(|x| *x = -*x);
        }
        (a, b)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn pcgrad_conflicts_become_orthogonal((a, b) in signed_pair(true)) {
        prop_assume!(dot(&a, &b) < 0.0 && norm(&a) > 1e-6 && norm(&b) > 1e-6);
        let (pa, pb) = pcgrad_combine(&a, &b);
        prop_assert!(dot(&pa, &b).abs() < 1e-9 * norm(&pa).max(1.0) * norm(&b));
        prop_assert!(dot(&pb, &a).abs() < 1e-9 * norm(&pb).max(1.0) * norm(&a));
    }

    #[test]
    fn pcgrad_never_grows((a, b) in pair()) {
        let (pa, pb) = pcgrad_combine(&a, &b);
        prop_assert!(norm(&pa) <= norm(&a) * (1.0 + 1e-12));
        prop_assert!(norm(&pb) <= norm(&b) * (1.0 + 1e-12));
    }

    #[test]
    fn pcgrad_leaves_agreeing_pairs((a, b) in signed_pair(false)) {
        prop_assume!(dot(&a, &b) >= 0.0);
        let (pa, pb) = pcgrad_combine(&a, &b);
        prop_assert!(pa.iter().zip(&a).all(|(x, y)| x.to_bits() == y.to_bits()));
        prop_assert!(pb.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn pcgrad_worked_example() {
    let (a, b) = pcgrad_combine(&[1.0, 0.0], &[-1.0, 1.0]);
    assert!((a[0] - 0.5).abs() < 1e-12 && (a[1] - 0.5).abs() < 1e-12);
    assert!(b[0].abs() < 1e-12 && (b[1] - 1.0).abs() < 1e-12);
}

fn single(x: f64) -> ParamSet {
    let mut p = ParamSet::zeros(2, 1);
    p.group_mut(Group::Weight)[0] = x;
    p
}

fn only_weight(lr: f64) -> GroupRates {
    GroupRates {
        position: 0.0,
        log_inv_scale: 0.0,
        rotation: 0.0,
        weight: lr,
    }
}

/// Textbook Adam on one scalar.
struct Reference {
    m: f64,
    v: f64,
    t: i32,
}

impl Reference {
    fn step(&mut self, x: f64, g: f64, lr: f64) -> f64 {
        self.t += 1;
        self.m = 0.9 * self.m + 0.1 * g;
        self.v = 0.999 * self.v + 0.001 * g * g;
        let mh = self.m / (1.0 - 0.9f64.powi(self.t));
        let vh = self.v / (1.0 - 0.999f64.powi(self.t));
        x - lr * mh / (vh.sqrt() + 1e-8)
    }
}

#[test]
fn adam_matches_reference_over_many_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut p = single(0.3);
    let mut adam = Adam::new(&p, &only_weight(0.01));
    let mut r = Reference { m: 0.0, v: 0.0, t: 0 };
    let mut x = 0.3;
    for _ in 0..1000 {
        let g: f64 = rng.gen_range(-2.0..2.0) + x;
        let mut grad = ParamSet::zeros(2, 1);
        grad.group_mut(Group::Weight)[0] = g;
        adam.step(&mut p, &grad).unwrap();
        x = r.step(x, g, 0.01);
        assert!((p.group(Group::Weight)[0] - x).abs() < 1e-10);
    }
    assert_eq!(adam.step_count(Group::Weight), 1000);
}

#[test]
fn adam_descends_a_parabola() {
    let mut p = single(1.0);
    let mut adam = Adam::new(&p, &only_weight(0.1));
    for _ in 0..100 {
        let x = p.group(Group::Weight)[0];
        let mut grad = ParamSet::zeros(2, 1);
        grad.group_mut(Group::Weight)[0] = 2.0 * x;
        adam.step(&mut p, &grad).unwrap();
    }
    assert!(p.group(Group::Weight)[0].abs() < 0.5);
}

#[test]
fn scheduler_rate_is_exact_power() {
    let p = single(0.0);
    let lr0 = 5e-3;
    let mut adam = Adam::new(&p, &only_weight(lr0));
    let mut s = PlateauScheduler::new(0.9, 50);
    let mut rates = Vec::new();
    for _ in 0..20_000 {
        if s.step(1.0, &mut adam) {
            rates.push(adam.learning_rate(Group::Weight));
        }
    }
    assert_eq!(rates.len(), s.reductions());
    assert!(rates.len() > 100);
    for (k, r) in rates.iter().enumerate() {
        assert_eq!(*r, lr0 * 0.9f64.powi(k as i32 + 1));
    }
    assert!(rates.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn hash_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for trial in 0..1000 {
        let dim = 2 + trial % 2;
        let n = rng.gen_range(1..30);
        let ps: Vec<GaussianParticle> = (0..n)
            .map(|_| {
                let mut p = GaussianParticle {
                    position: [0.0; 3],
                    log_inv_scale: [0.0; 3],
                    rotation: [0.0; 4],
                    weight: [1.0; 3],
                };
                for k in 0..dim {
                    p.position[k] = rng.gen_range(-2.0..2.0);
                    p.log_inv_scale[k] = rng.gen_range(-0.5..3.0);
                }
                if dim == 2 {
                    p.rotation[0] = rng.gen_range(-3.2..3.2);
                } else {
                    let q: [f64; 4] = [0; 4].map(|_| rng.gen_range(-1.0..1.0));
                    let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
                    p.rotation = q.map(|x| x / n);
                }
                p
            })
            .collect();
        let f = GsrField::from_particles(dim, DEFAULT_CLAMP, &ps).unwrap();
        for _ in 0..50 {
            let mut x = [0.0; 3];
            for v in x.iter_mut().take(dim) {
                *v = rng.gen_range(-3.0..3.0);
            }
            let mut a = f.neighbors(&x);
            a.sort_unstable();
            assert_eq!(a, f.neighbors_brute_force(&x), "trial {trial}");
        }
    }
}
