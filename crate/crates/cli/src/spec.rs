//! Run specifications: built-in model choice, parameter overrides, solver
//! settings and output paths, read from a flat config file and flags.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use chatterfree::library::{Belt3Params, StickSlip2Params};
use chatterfree::SimConfig;
use clap::Parser;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
}

pub type CliResult<T> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelId {
    StickSlip2,
    Belt3,
}

const STICK_SLIP_KEYS: [&str; 15] = [
    "m", "M1", "M2", "k", "Fc1", "Fc2", "amp", "omega", "phi", "x0_1", "x0_2", "x0_3", "x0_4", "x0_5", "x0_6",
];

const BELT_KEYS: [&str; 21] = [
    "m1", "m2", "m3", "k1", "k2", "k3", "k12", "k13", "k23", "Fc1", "Fc2", "Fc3", "v_d", "amp", "omega", "x0_1",
    "x0_2", "x0_3", "x0_4", "x0_5", "x0_6",
];

impl ModelId {
    pub const ALL: [ModelId; 2] = [ModelId::StickSlip2, ModelId::Belt3];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelId::StickSlip2 => "stickslip2",
            ModelId::Belt3 => "belt3",
        }
    }

    /// Parameter keys accepted by `--set` and the config file.
    pub fn param_keys(self) -> &'static [&'static str] {
        match self {
            ModelId::StickSlip2 => &STICK_SLIP_KEYS,
            ModelId::Belt3 => &BELT_KEYS,
        }
    }

    /// Trace columns between `t` and `regime`.
    pub fn state_names(self) -> Vec<String> {
        let names: &[&str] = match self {
            ModelId::StickSlip2 => &["x_m", "v_m", "x_M1", "v_M1", "x_M2", "v_M2"],
            ModelId::Belt3 => &["x1", "v1", "x2", "v2", "x3", "v3"],
        };
        names.iter().map(|s| s.to_string()).collect()
    }
}

fn model_list() -> String {
    ModelId::ALL.map(ModelId::as_str).join(", ")
}

impl FromStr for ModelId {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        ModelId::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| usage(format!("unknown model `{s}`; available models: {}", model_list())))
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

const SIM_REAL_KEYS: [&str; 13] = [
    "t_end",
    "dt_init",
    "dt_min",
    "dt_max",
    "atol",
    "rtol",
    "eps_root",
    "eps_slide",
    "eps_exit",
    "eps_gamma",
    "eps_lie",
    "eps_den",
    "merge_tol",
];

const SIM_COUNT_KEYS: [&str; 5] = [
    "max_newton",
    "max_fixed_point",
    "max_sweeps",
    "max_grazing_retries",
    "max_steps",
];

fn real_slot<'a>(cfg: &'a mut SimConfig, key: &str) -> Option<&'a mut f64> {
    Some(match key {
        "t_end" => &mut cfg.t_end,
        "dt_init" => &mut cfg.dt_init,
        "dt_min" => &mut cfg.dt_min,
        "dt_max" => &mut cfg.dt_max,
        "atol" => &mut cfg.atol,
        "rtol" => &mut cfg.rtol,
        "eps_root" => &mut cfg.eps_root,
        "eps_slide" => &mut cfg.eps_slide,
        "eps_exit" => &mut cfg.eps_exit,
        "eps_lie" => &mut cfg.eps_lie,
        "eps_den" => &mut cfg.eps_den,
        "merge_tol" => &mut cfg.merge_tol,
        _ => return None,
    })
}

fn count_slot<'a>(cfg: &'a mut SimConfig, key: &str) -> Option<&'a mut usize> {
    Some(match key {
        "max_newton" => &mut cfg.max_newton,
        "max_fixed_point" => &mut cfg.max_fixed_point,
        "max_sweeps" => &mut cfg.max_sweeps,
        "max_grazing_retries" => &mut cfg.max_grazing_retries,
        "max_steps" => &mut cfg.max_steps,
        _ => return None,
    })
}

fn parse_real(key: &str, raw: &str) -> CliResult<f64> {
    raw.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| usage(format!("value `{raw}` for `{key}` is not a finite decimal number")))
}

fn parse_count<T: FromStr>(key: &str, raw: &str) -> CliResult<T> {
    raw.trim()
        .parse::<T>()
        .map_err(|_| usage(format!("value `{raw}` for `{key}` is not a non-negative integer")))
}

/// Everything needed for one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub model: ModelId,
    /// Overridden model parameters; unset keys keep the built-in defaults.
    pub params: BTreeMap<String, f64>,
    pub sim: SimConfig,
    pub trace: Option<PathBuf>,
    pub events: Option<PathBuf>,
    pub plot: Option<PathBuf>,
    /// Plotted state names; empty means all.
    pub plot_vars: Vec<String>,
    /// Reserved.
    pub seed: Option<u64>,
}

impl RunSpec {
    pub fn new(model: ModelId) -> Self {
        Self {
            model,
            params: BTreeMap::new(),
            sim: SimConfig::default(),
            trace: None,
            events: None,
            plot: None,
            plot_vars: Vec::new(),
            seed: None,
        }
    }

    /// Applies one `key = value` setting. Model parameters, solver settings
    /// and output keys share one namespace.
    pub fn set(&mut self, key: &str, raw: &str) -> CliResult<()> {
        let raw = raw.trim();
        match key {
            "model" => {
                let model: ModelId = raw.parse()?;
                if model != self.model {
                    return Err(usage(format!("model `{model}` conflicts with `{}`", self.model)));
                }
            }
            "trace" => self.trace = Some(PathBuf::from(raw)),
            "events" => self.events = Some(PathBuf::from(raw)),
            "plot" => self.plot = Some(PathBuf::from(raw)),
            "plot_vars" => {
                self.plot_vars = raw
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            }
            "seed" => self.seed = Some(parse_count(key, raw)?),
            "eps_gamma" => self.sim.eps_gamma = Some(parse_real(key, raw)?),
            _ if self.model.param_keys().contains(&key) => {
                self.params.insert(key.to_string(), parse_real(key, raw)?);
            }
            _ => {
                if let Some(slot) = real_slot(&mut self.sim, key) {
                    *slot = parse_real(key, raw)?;
                } else if let Some(slot) = count_slot(&mut self.sim, key) {
                    *slot = parse_count(key, raw)?;
                } else {
                    return Err(usage(format!(
                        "unknown key `{key}` for model {}; parameters: {}",
                        self.model,
                        self.model.param_keys().join(", ")
                    )));
                }
            }
        }
        Ok(())
    }

    /// Serializes to the flat config format read by [`RunSpec::from_config`].
    pub fn to_config(&self) -> String {
        let mut out = format!("model = {}\n", self.model);
        if !self.params.is_empty() {
            out.push_str("\n# model parameters\n");
            for (k, v) in &self.params {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out.push_str("\n# solver\n");
        let mut sim = self.sim.clone();
        for key in SIM_REAL_KEYS {
            if key == "eps_gamma" {
                if let Some(v) = sim.eps_gamma {
                    out.push_str(&format!("eps_gamma = {v}\n"));
                }
                continue;
            }
            let v = *real_slot(&mut sim, key).expect("listed key");
            out.push_str(&format!("{key} = {v}\n"));
        }
        for key in SIM_COUNT_KEYS {
            let v = *count_slot(&mut sim, key).expect("listed key");
            out.push_str(&format!("{key} = {v}\n"));
        }
        let paths = [("trace", &self.trace), ("events", &self.events), ("plot", &self.plot)];
        if paths.iter().any(|(_, p)| p.is_some()) || !self.plot_vars.is_empty() || self.seed.is_some() {
            out.push_str("\n# outputs\n");
        }
        for (key, path) in paths {
            if let Some(p) = path {
                out.push_str(&format!("{key} = {}\n", p.display()));
            }
        }
        if !self.plot_vars.is_empty() {
            out.push_str(&format!("plot_vars = {}\n", self.plot_vars.join(",")));
        }
        if let Some(seed) = self.seed {
            out.push_str(&format!("seed = {seed}\n"));
        }
        out
    }

    /// Parses a config file; it must name the model.
    pub fn from_config(text: &str) -> CliResult<Self> {
        let entries = config_entries(text)?;
        let model = entries
            .iter()
            .find(|(k, _)| k == "model")
            .ok_or_else(|| {
                usage(format!(
                    "config does not name a model; available models: {}",
                    model_list()
                ))
            })?
            .1
            .parse()?;
        let mut spec = RunSpec::new(model);
        for (k, v) in &entries {
            spec.set(k, v)?;
        }
        Ok(spec)
    }

    pub fn stick_slip_params(&self) -> StickSlip2Params {
        let mut p = StickSlip2Params::default();
        for (k, &v) in &self.params {
            match k.as_str() {
                "m" => p.m = v,
                "M1" => p.m1 = v,
                "M2" => p.m2 = v,
                "k" => p.k = v,
                "Fc1" => p.fc1 = v,
                "Fc2" => p.fc2 = v,
                "amp" => p.amp = v,
                "omega" => p.omega = v,
                "phi" => p.phi = v,
                other => set_x0(&mut p.x0, other, v),
            }
        }
        p
    }

    pub fn belt_params(&self) -> Belt3Params {
        let mut p = Belt3Params::default();
        for (k, &v) in &self.params {
            match k.as_str() {
                "m1" => p.m[0] = v,
                "m2" => p.m[1] = v,
                "m3" => p.m[2] = v,
                "k1" => p.k[0] = v,
                "k2" => p.k[1] = v,
                "k3" => p.k[2] = v,
                "k12" => p.k12 = v,
                "k13" => p.k13 = v,
                "k23" => p.k23 = v,
                "Fc1" => p.fc[0] = v,
                "Fc2" => p.fc[1] = v,
                "Fc3" => p.fc[2] = v,
                "v_d" => p.v_d = v,
                "amp" => p.amp = v,
                "omega" => p.omega = v,
                other => set_x0(&mut p.x0, other, v),
            }
        }
        p
    }

    /// Checks the settings that can be judged before a run.
    pub fn validate(&self) -> CliResult<()> {
        self.sim.validate().map_err(|e| usage(e.to_string()))?;
        let names = self.model.state_names();
        if let Some(bad) = self.plot_vars.iter().find(|v| !names.contains(v)) {
            return Err(usage(format!(
                "cannot plot `{bad}`; state names of {} are {}",
                self.model,
                names.join(", ")
            )));
        }
        Ok(())
    }
}

/// `x0_i` sets the i-th state, in trace column order.
fn set_x0(x0: &mut [f64; 6], key: &str, v: f64) {
    let i: usize = key
        .strip_prefix("x0_")
        .and_then(|s| s.parse().ok())
        .expect("validated key");
    x0[i - 1] = v;
}

fn config_entries(text: &str) -> CliResult<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("config line {}: expected `key = value`, got `{line}`", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[derive(Debug, Parser)]
#[command(
    name = "chatterfree",
    version,
    about = "Simulate a built-in friction oscillator with sliding modes",
    after_help = "Models: stickslip2 (mass on a spring with two friction contacts), belt3 (three masses on a moving belt)."
)]
struct Args {
    /// Built-in model: stickslip2 or belt3.
    #[arg(long)]
    model: Option<String>,
    /// Override a model parameter or solver setting (repeatable).
    #[arg(long = "set", value_name = "KEY=VAL")]
    set: Vec<String>,
    /// Flat `key = value` file applied before the flags.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Final time [s].
    #[arg(long = "t-end", allow_negative_numbers = true)]
    t_end: Option<f64>,
    /// Largest step [s].
    #[arg(long = "dt-max")]
    dt_max: Option<f64>,
    #[arg(long)]
    atol: Option<f64>,
    #[arg(long)]
    rtol: Option<f64>,
    /// Trace CSV output.
    #[arg(long, value_name = "PATH")]
    trace: Option<PathBuf>,
    /// Event JSON output.
    #[arg(long, value_name = "PATH")]
    events: Option<PathBuf>,
    /// SVG plot output.
    #[arg(long, value_name = "PATH")]
    plot: Option<PathBuf>,
    /// Comma-separated state names to plot.
    #[arg(long = "plot-vars", value_name = "A,B,C", value_delimiter = ',')]
    plot_vars: Option<Vec<String>>,
    /// Reserved; has no effect.
    #[arg(long)]
    seed: Option<u64>,
}

/// Outcome of argument parsing.
pub enum Parsed {
    Run(Box<RunSpec>),
    /// Help or version text to print before exiting successfully.
    Info(String),
}

/// Builds the run spec from command-line arguments (program name first).
/// Precedence: built-in defaults, then the config file, then flags.
pub fn parse_run_spec<I, T>(args: I) -> CliResult<Parsed>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => Ok(Parsed::Info(e.to_string())),
                _ => Err(usage(e.to_string())),
            };
        }
    };
    let config = match &args.config {
        Some(path) => Some(
            std::fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?,
        ),
        None => None,
    };
    let mut spec = match (&args.model, &config) {
        (Some(m), Some(text)) => {
            let model: ModelId = m.parse()?;
            let mut spec = RunSpec::new(model);
            for (k, v) in config_entries(text)? {
                if k != "model" {
                    spec.set(&k, &v)?;
                }
            }
            spec
        }
        (None, Some(text)) => RunSpec::from_config(text)?,
        (Some(m), None) => RunSpec::new(m.parse()?),
        (None, None) => {
            return Err(usage(format!(
                "no model selected; pass --model with one of: {}",
                model_list()
            )))
        }
    };
    for item in &args.set {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| usage(format!("--set expects KEY=VAL, got `{item}`")))?;
        spec.set(k.trim(), v)?;
    }
    if let Some(v) = args.t_end {
        spec.sim.t_end = v;
    }
    if let Some(v) = args.dt_max {
        spec.sim.dt_max = v;
    }
    if let Some(v) = args.atol {
        spec.sim.atol = v;
    }
    if let Some(v) = args.rtol {
        spec.sim.rtol = v;
    }
    if args.trace.is_some() {
        spec.trace = args.trace;
    }
    if args.events.is_some() {
        spec.events = args.events;
    }
    if args.plot.is_some() {
        spec.plot = args.plot;
    }
    if let Some(vars) = args.plot_vars {
        spec.plot_vars = vars;
    }
    if args.seed.is_some() {
        spec.seed = args.seed;
    }
    spec.validate()?;
    Ok(Parsed::Run(Box::new(spec)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> CliResult<RunSpec> {
        let mut full = vec!["chatterfree"];
        full.extend_from_slice(args);
        match parse_run_spec(full)? {
            Parsed::Run(s) => Ok(*s),
            Parsed::Info(_) => panic!("unexpected info output"),
        }
    }

    #[test]
    fn flags_override_defaults() {
        let s = parse(&[
            "--model",
            "stickslip2",
            "--set",
            "k=0.88",
            "--set",
            "Fc1=0.01996",
            "--t-end",
            "120",
        ])
        .unwrap();
        assert_eq!(s.model, ModelId::StickSlip2);
        assert_eq!(s.sim.t_end, 120.0);
        let p = s.stick_slip_params();
        assert_eq!((p.k, p.fc1), (0.88, 0.01996));
    }

    #[test]
    fn no_arguments_lists_models() {
        let err = parse(&[]).unwrap_err().to_string();
        assert!(err.contains("stickslip2") && err.contains("belt3"), "{err}");
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse(&["--model", "belt3", "--set", "bogus=1"])
            .unwrap_err()
            .to_string();
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn unknown_model_is_named() {
        let err = parse(&["--model", "pendulum"]).unwrap_err().to_string();
        assert!(err.contains("pendulum"), "{err}");
    }

    #[test]
    fn non_numeric_value_is_named() {
        let err = parse(&["--model", "belt3", "--set", "v_d=fast"])
            .unwrap_err()
            .to_string();
        assert!(err.contains("fast"), "{err}");
    }

    #[test]
    fn unknown_plot_variable_is_rejected() {
        let err = parse(&["--model", "belt3", "--plot-vars", "v1,speed"])
            .unwrap_err()
            .to_string();
        assert!(err.contains("speed"), "{err}");
    }

    #[test]
    fn config_sits_between_defaults_and_flags() {
        let dir = std::env::temp_dir().join(format!("chatterfree-spec-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.conf");
        std::fs::write(&path, "model = belt3  # three masses\namp = 0.3\nt_end = 50\n").unwrap();
        let s = parse(&["--config", path.to_str().unwrap(), "--t-end", "20"]).unwrap();
        assert_eq!(s.model, ModelId::Belt3);
        assert_eq!(s.belt_params().amp, 0.3);
        assert_eq!(s.sim.t_end, 20.0);
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn x0_keys_follow_trace_columns() {
        let s = parse(&["--model", "stickslip2", "--set", "x0_2=-0.25"]).unwrap();
        assert_eq!(s.stick_slip_params().x0[1], -0.25);
    }
}
