//! Sweeps the unreported forcing amplitude (and optionally phase) of the
//! built-in case studies and scores each run against a target event timeline.
//!
//! Usage: `amplitude_sweep <1|2> <amp_lo> <amp_hi> <n_amp> [phi_lo phi_hi n_phi]`

use chatterfree::library::{make_case_study_1, make_case_study_2, Belt3Params, StickSlip2Params};
use chatterfree::{simulate, EventKind, SimConfig, SimTrace};

/// Ordered event pattern for the two-mass stick-slip timeline: (kind, target region, time).
const CS1_TARGET: [(EventKind, &str, f64); 4] = [
    (EventKind::SlidingEntry, "slide{b}[q3,q2]", 32.69),
    (EventKind::SlidingExit, "q3", 77.23),
    (EventKind::Crossing, "", 92.04),
    (EventKind::SlidingEntry, "slide{a}[q3,q4]", 108.0),
];

/// Sum of time errors of the first in-order match of the target pattern.
/// Each missing event costs a fixed 20 s.
fn cs1_score(trace: &SimTrace) -> Option<f64> {
    let mut score = 0.0;
    let mut from = 0;
    for (kind, to, t) in CS1_TARGET {
        let pos = trace.events[from..].iter().position(|e| {
            e.kind == kind && (to.is_empty() || &*e.to == to) && (!to.is_empty() || e.manifolds.len() == 2)
        });
        match pos {
            Some(pos) => {
                score += (trace.events[from + pos].t - t).abs();
                from += pos + 1;
            }
            None => score += 20.0,
        }
    }
    Some(score)
}

/// Time error of a triple-intersection pass near 76.69 s, provided a sliding
/// interval on the a/b intersection overlaps [74.84, 89.07].
fn cs2_score(trace: &SimTrace) -> Option<f64> {
    let ab = trace.intervals_where(|r| r.starts_with("slide{a,b}"));
    if !ab.iter().any(|&(a, b)| a <= 89.07 && b >= 74.84) {
        return None;
    }
    trace
        .events
        .iter()
        .filter(|e| e.manifolds.len() == 3)
        .map(|e| (e.t - 76.69).abs())
        .min_by(f64::total_cmp)
}

fn summary(trace: &SimTrace) -> String {
    trace
        .events
        .iter()
        .map(|e| format!("{:.2}:{}>{}", e.t, e.kind.as_str(), e.to))
        .collect::<Vec<_>>()
        .join(" ")
}

fn main() {
    let args: Vec<f64> = std::env::args()
        .skip(1)
        .map(|s| s.parse().expect("numeric argument"))
        .collect();
    if args.len() < 4 {
        eprintln!("usage: amplitude_sweep <1|2> <amp_lo> <amp_hi> <n_amp> [phi_lo phi_hi n_phi]");
        std::process::exit(1);
    }
    let case = args[0] as u32;
    let grid = |lo: f64, hi: f64, n: f64| -> Vec<f64> {
        let n = n as usize;
        (0..=n)
            .map(|i| {
                if n == 0 {
                    lo
                } else {
                    lo + (hi - lo) * i as f64 / n as f64
                }
            })
            .collect()
    };
    let amps = grid(args[1], args[2], args[3]);
    let phis = if args.len() >= 7 {
        grid(args[4], args[5], args[6])
    } else {
        vec![0.0]
    };
    let mut best: Option<(f64, f64, f64)> = None;
    for &phi in &phis {
        for &amp in &amps {
            let (model, x0, t_end) = if case == 1 {
                let p = StickSlip2Params {
                    amp,
                    phi,
                    ..Default::default()
                };
                (make_case_study_1(p).unwrap(), p.initial_state(), 120.0)
            } else {
                let p = Belt3Params {
                    amp,
                    ..Default::default()
                };
                (make_case_study_2(p).unwrap(), p.initial_state(), 100.0)
            };
            let cfg = SimConfig {
                t_end,
                ..Default::default()
            };
            let trace = match simulate(&model, &x0, &cfg) {
                Ok(t) => t,
                Err(e) => {
                    println!("amp {amp:.4} phi {phi:.4} error: {}", e.source);
                    continue;
                }
            };
            let tangential = trace.events_of(EventKind::Crossing).count();
            let score = if case == 1 {
                cs1_score(&trace)
            } else {
                cs2_score(&trace)
            };
            if let Some(s) = score {
                if best.is_none_or(|b| s < b.2) {
                    best = Some((amp, phi, s));
                }
            }
            let score = score.map_or("-".to_string(), |s| format!("{s:.2}"));
            if phis.len() == 1 || case == 2 {
                println!(
                    "amp {amp:.4} phi {phi:.4} switches {} crossings {tangential} score {score} | {}",
                    trace.mode_switches(),
                    summary(&trace)
                );
            }
        }
    }
    if let Some((amp, phi, s)) = best {
        println!("best amp {amp:.4} phi {phi:.4} score {s:.3}");
    }
}
