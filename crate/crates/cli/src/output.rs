use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chatterfree::library::{make_case_study_1, make_case_study_2};
use chatterfree::{simulate, HybridModel, SimTrace};
use serde::Serialize;

use crate::plot::render_svg;
use crate::spec::{CliError, CliResult, ModelId, RunSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;

#[derive(Debug, Serialize)]
struct EventRecord<'a> {
    t: f64,
    kind: &'a str,
    /// One-based manifold indices.
    manifolds: Vec<usize>,
    from: &'a str,
    to: &'a str,
    x: &'a [f64],
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("cannot write {}: {e}", path.display()))
}

pub fn build_model(spec: &RunSpec) -> CliResult<HybridModel> {
    let built = match spec.model {
        ModelId::StickSlip2 => make_case_study_1(spec.stick_slip_params()),
        ModelId::Belt3 => make_case_study_2(spec.belt_params()),
    };
    built.map_err(|e| CliError::Usage(e.to_string()))
}

pub fn initial_state(spec: &RunSpec) -> Vec<f64> {
    match spec.model {
        ModelId::StickSlip2 => spec.stick_slip_params().initial_state(),
        ModelId::Belt3 => spec.belt_params().initial_state(),
    }
}

/// Number of trace columns that hold physical state (the clock is last).
fn state_width(spec: &RunSpec) -> usize {
    spec.model.state_names().len()
}

pub fn write_trace(path: &Path, spec: &RunSpec, trace: &SimTrace) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_error(path, e))?;
    let width = state_width(spec);
    let mut header = vec!["t".to_string()];
    header.extend(spec.model.state_names());
    header.push("regime".into());
    w.write_record(&header).map_err(|e| io_error(path, e))?;
    for s in &trace.samples {
        let mut row = Vec::with_capacity(width + 2);
        row.push(format!("{:.16e}", s.t));
        row.extend(s.state[..width].iter().map(|v| format!("{v:.16e}")));
        row.push(s.regime.to_string());
        w.write_record(&row).map_err(|e| io_error(path, e))?;
    }
    w.flush().map_err(|e| io_error(path, e))
}

pub fn write_events(path: &Path, spec: &RunSpec, trace: &SimTrace) -> CliResult<()> {
    let width = state_width(spec);
    let records: Vec<EventRecord> = trace
        .events
        .iter()
        .map(|e| EventRecord {
            t: e.t,
            kind: e.kind.as_str(),
            manifolds: e.manifolds.iter().map(|j| j + 1).collect(),
            from: &e.from,
            to: &e.to,
            x: &e.state[..width],
        })
        .collect();
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, &records).map_err(|e| io_error(path, e))?;
    out.write_all(b"\n")
        .and_then(|_| out.flush())
        .map_err(|e| io_error(path, e))
}

pub fn write_plot(path: &Path, spec: &RunSpec, trace: &SimTrace) -> CliResult<()> {
    let names = spec.model.state_names();
    let vars: Vec<String> = if spec.plot_vars.is_empty() {
        names.clone()
    } else {
        spec.plot_vars.clone()
    };
    let columns: Vec<(String, usize)> = vars
        .into_iter()
        .map(|v| {
            let i = names.iter().position(|n| *n == v).expect("validated plot variable");
            (v, i)
        })
        .collect();
    let svg = render_svg(trace, &columns);
    std::fs::write(path, svg).map_err(|e| io_error(path, e))
}

fn write_outputs(spec: &RunSpec, trace: &SimTrace) -> CliResult<()> {
    if let Some(p) = &spec.trace {
        write_trace(p, spec, trace)?;
    }
    if let Some(p) = &spec.events {
        write_events(p, spec, trace)?;
    }
    if let Some(p) = &spec.plot {
        write_plot(p, spec, trace)?;
    }
    Ok(())
}

fn summary(trace: &SimTrace) -> String {
    let t = trace.last().map_or(0.0, |s| s.t);
    format!(
        "reached t = {t}: {} accepted steps, {} rejected, {} events ({} mode switches)",
        trace.accepted_steps,
        trace.rejected_steps,
        trace.events.len(),
        trace.mode_switches()
    )
}

/// Runs the simulation and writes the requested outputs; returns the exit code.
pub fn run(spec: &RunSpec) -> i32 {
    let model = match build_model(spec) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let x0 = initial_state(spec);
    let (trace, failure) = match simulate(&model, &x0, &spec.sim) {
        Ok(trace) => (trace, None),
        Err(e) => (*e.trace, Some(e.source)),
    };
    if let Err(e) = write_outputs(spec, &trace) {
        eprintln!("error: {e}");
        return EXIT_USAGE;
    }
    println!("{}", summary(&trace));
    match failure {
        Some(e) => {
            eprintln!("error: {e}; partial outputs written");
            EXIT_NUMERIC
        }
        None => EXIT_OK,
    }
}
