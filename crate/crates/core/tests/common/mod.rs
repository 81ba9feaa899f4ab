#![allow(dead_code)]

use chatterfree::library::{Cs1Regime, StickSlip2Params};
use chatterfree::HybridModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Unit masses and spring with random friction levels.
pub fn random_cs1_params(rng: &mut ChaCha8Rng) -> StickSlip2Params {
    StickSlip2Params {
        fc1: rng.random_range(0.005..0.15),
        fc2: rng.random_range(0.005..0.15),
        ..StickSlip2Params::default()
    }
}

/// Random state whose net drive `u - k x_m` equals `drive`.
pub fn cs1_state_with_drive(p: &StickSlip2Params, drive: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let t = rng.random_range(0.0..100.0);
    let x_m = (p.forcing(t) - drive) / p.k;
    vec![
        x_m,
        rng.random_range(-1.0..1.0),
        rng.random_range(-2.0..2.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-2.0..2.0),
        rng.random_range(-1.0..1.0),
        t,
    ]
}

/// Places `x` on the manifolds of `regime`, with the inactive relative
/// velocity on the side the regime names.
pub fn place_on(regime: Cs1Regime, x: &mut [f64], rng: &mut ChaCha8Rng) {
    let gap = rng.random_range(0.05..1.0);
    match regime {
        Cs1Regime::A1 => {
            x[3] = x[1];
            x[5] = x[1] - gap;
        }
        Cs1Regime::A2 => {
            x[3] = x[1];
            x[5] = x[1] + gap;
        }
        Cs1Regime::B1 => {
            x[5] = x[1];
            x[3] = x[1] - gap;
        }
        Cs1Regime::B2 => {
            x[5] = x[1];
            x[3] = x[1] + gap;
        }
        Cs1Regime::Delta => {
            x[3] = x[1];
            x[5] = x[1];
        }
    }
}

/// Classical fourth-order Runge-Kutta on `[0, t_end]` with `n` steps,
/// recording the state at every step.
pub fn rk4(f: impl Fn(&[f64], &mut [f64]), x0: &[f64], t_end: f64, n: usize) -> Vec<Vec<f64>> {
    let h = t_end / n as f64;
    let d = x0.len();
    let mut x = x0.to_vec();
    let mut out = vec![x.clone()];
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mut tmp = vec![0.0; d];
    for _ in 0..n {
        f(&x, &mut k1);
        for i in 0..d {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        f(&tmp, &mut k2);
        for i in 0..d {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        f(&tmp, &mut k3);
        for i in 0..d {
            tmp[i] = x[i] + h * k3[i];
        }
        f(&tmp, &mut k4);
        for i in 0..d {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out.push(x.clone());
    }
    out
}

/// Brute-force chattering on a single manifold `j`: fixed-step midpoint
/// integration that switches flow only once `gamma_j` leaves the band
/// `[-delta, delta]`. The other manifolds keep the signs they have at `x0`.
/// Returns the state every `record_every` steps.
pub fn hysteresis_run(
    model: &HybridModel,
    j: usize,
    x0: &[f64],
    delta: f64,
    h: f64,
    steps: usize,
    record_every: usize,
) -> Vec<Vec<f64>> {
    let d = model.dim();
    let mut signs: Vec<i8> = model.gammas(x0).iter().map(|g| if *g > 0.0 { 1 } else { -1 }).collect();
    let mut x = x0.to_vec();
    let (mut k1, mut k2, mut mid) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mut out = vec![x.clone()];
    for step in 1..=steps {
        let g = model.gamma(j, &x);
        if g > delta {
            signs[j] = 1;
        } else if g < -delta {
            signs[j] = -1;
        }
        let flow = model.flow(model.region_from_signs(&signs));
        flow.eval(&x, &mut k1);
        for i in 0..d {
            mid[i] = x[i] + 0.5 * h * k1[i];
        }
        flow.eval(&mid, &mut k2);
        for i in 0..d {
            x[i] += h * k2[i];
        }
        if step % record_every == 0 {
            out.push(x.clone());
        }
    }
    out
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
}
