//! Brute-force reference implementations working on raw distances.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ranknet::{Dataset, Metric, Prior};

pub struct Instance {
    pub dataset: Dataset,
    pub metric: Metric,
    pub prior: Prior,
}

impl Instance {
    pub fn d(&self, a: usize, b: usize) -> f64 {
        self.metric
            .distance(self.dataset.item(a), self.dataset.item(b))
    }

    pub fn n(&self) -> usize {
        self.dataset.len()
    }
}

/// Random points on a small integer grid (so distance ties are common),
/// random metric, and a random prior that sometimes leaves items massless.
pub fn random_instance(seed: u64, max_n: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=max_n);
    let dim = rng.random_range(1..=3);
    let side = rng.random_range(2..=6);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(0..side) as f64).collect())
        .collect();
    let metric = if rng.random_bool(0.5) {
        Metric::Euclidean
    } else {
        Metric::Manhattan
    };
    let mut weights: Vec<f64> = (0..n)
        .map(|_| {
            if rng.random_bool(0.15) {
                0.0
            } else {
                rng.random_range(0.05..1.0)
            }
        })
        .collect();
    if weights.iter().all(|w| *w == 0.0) {
        weights[0] = 1.0;
    }
    Instance {
        dataset: Dataset::new(format!("random-{seed}"), rows).unwrap(),
        metric,
        prior: Prior::from_weights(weights).unwrap(),
    }
}

pub fn answer(inst: &Instance, z: usize, x: usize, y: usize) -> i8 {
    if inst.d(x, z) < inst.d(y, z) {
        1
    } else {
        -1
    }
}

/// 1-based index of the smallest distance class around `y` whose ball
/// (over all items) reaches `rho` of the domain's mass.
pub fn radius_rank(inst: &Instance, domain: &[usize], y: usize, rho: f64) -> u32 {
    let target = rho * domain.iter().map(|&z| inst.prior.mass(z)).sum::<f64>();
    let mut radii: Vec<f64> = (0..inst.n()).map(|z| inst.d(y, z)).collect();
    radii.sort_by(f64::total_cmp);
    radii.dedup();
    for (k, &r) in radii.iter().enumerate() {
        let ball: f64 = (0..inst.n())
            .filter(|&z| inst.d(y, z) <= r)
            .map(|z| inst.prior.mass(z))
            .sum();
        if ball >= target - 1e-12 {
            return k as u32 + 1;
        }
    }
    radii.len() as u32
}

pub fn gbs_objective(inst: &Instance, space: &[usize], x: usize, y: usize) -> f64 {
    let mut s = 0.0;
    for &z in space {
        s += inst.prior.mass(z) * answer(inst, z, x, y) as f64;
    }
    s.abs()
}

pub fn doubling_constant(inst: &Instance) -> f64 {
    let n = inst.n();
    let ball = |x: usize, r: f64| -> f64 {
        (0..n)
            .filter(|&z| inst.d(x, z) <= r)
            .map(|z| inst.prior.mass(z))
            .sum()
    };
    let mut best: f64 = 1.0;
    for x in (0..n).filter(|&x| inst.prior.mass(x) > 0.0) {
        for z in 0..n {
            for r in [inst.d(x, z), inst.d(x, z) / 2.0] {
                best = best.max(ball(x, 2.0 * r) / ball(x, r));
            }
        }
    }
    best
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}
