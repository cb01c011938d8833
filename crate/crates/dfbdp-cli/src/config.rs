//! Experiment configuration: a flat, sectioned key-value format so every
//! run is reproducible from a checked-in text file.
//!
//! ```text
//! [benchmark]
//! name = ex1_uniform
//!
//! [grid]
//! n = 30
//! t = 1.0
//!
//! [train]
//! m = 1000
//! seed = 1
//!
//! [output]
//! runs = 10
//! dir = out
//! emit = summary,curves
//! ```
//!
//! Unset keys take benchmark-specific defaults. `render` emits every field
//! explicitly; `parse` of that output reproduces the config exactly.

use std::fmt::Write as _;

use dfbdp::benchmarks::BenchmarkId;
use dfbdp::error::{Error, Result};
use dfbdp::solver::TrainConfig;

/// Which artifact families to write.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmitFlags {
    pub summary: bool,
    pub loss_traces: bool,
    pub curves: bool,
    pub paths: bool,
    pub checkpoints: bool,
}

impl Default for EmitFlags {
    fn default() -> Self {
        EmitFlags {
            summary: true,
            loss_traces: false,
            curves: false,
            paths: false,
            checkpoints: false,
        }
    }
}

impl EmitFlags {
    fn parse(value: &str, line: usize) -> Result<Self> {
        let mut flags = EmitFlags {
            summary: false,
            loss_traces: false,
            curves: false,
            paths: false,
            checkpoints: false,
        };
        for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item {
                "summary" => flags.summary = true,
                "loss_traces" => flags.loss_traces = true,
                "curves" => flags.curves = true,
                "paths" => flags.paths = true,
                "checkpoints" => flags.checkpoints = true,
                other => {
                    return Err(Error::invalid(format!("line {line}: unknown emit flag '{other}'")))
                }
            }
        }
        Ok(flags)
    }

    fn render(&self) -> String {
        let mut items = Vec::new();
        if self.summary {
            items.push("summary");
        }
        if self.loss_traces {
            items.push("loss_traces");
        }
        if self.curves {
            items.push("curves");
        }
        if self.paths {
            items.push("paths");
        }
        if self.checkpoints {
            items.push("checkpoints");
        }
        items.join(",")
    }
}

/// A fully-resolved experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub benchmark: BenchmarkId,
    /// Number of grid intervals.
    pub steps: usize,
    pub horizon: f64,
    /// Explicit grid knots; empty means uniform.
    pub knots: Vec<f64>,
    pub train: TrainConfig,
    /// Independent solver runs.
    pub runs: usize,
    /// Samples for evaluation measures.
    pub eval_batch: usize,
    pub out_dir: String,
    pub emit: EmitFlags,
}

impl ExperimentConfig {
    /// Benchmark-specific defaults with everything else at the reference
    /// training budget.
    pub fn defaults(benchmark: BenchmarkId) -> Self {
        ExperimentConfig {
            benchmark,
            steps: benchmark.default_steps(),
            horizon: 1.0,
            knots: Vec::new(),
            train: TrainConfig::new(1000, benchmark.default_hidden(), 1),
            runs: benchmark.default_runs(),
            eval_batch: 1000,
            out_dir: "out".to_string(),
            emit: EmitFlags::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::invalid("grid needs at least one interval"));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::invalid("horizon must be positive"));
        }
        if self.runs == 0 {
            return Err(Error::invalid("need at least one run"));
        }
        if self.eval_batch == 0 {
            return Err(Error::invalid("evaluation batch must be at least 1"));
        }
        if !self.knots.is_empty() && self.knots.len() != self.steps + 1 {
            return Err(Error::invalid(format!(
                "{} explicit knots do not match n = {}",
                self.knots.len(),
                self.steps
            )));
        }
        self.train.validate()
    }

    /// Canonical text form; `parse_config(render(c)) == c`.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[benchmark]");
        let _ = writeln!(s, "name = {}", self.benchmark.name());
        let _ = writeln!(s, "d = {}", self.benchmark.dim());
        let _ = writeln!(s);
        let _ = writeln!(s, "[grid]");
        let _ = writeln!(s, "n = {}", self.steps);
        let _ = writeln!(s, "t = {}", self.horizon);
        if !self.knots.is_empty() {
            let knots: Vec<String> = self.knots.iter().map(|k| k.to_string()).collect();
            let _ = writeln!(s, "knots = {}", knots.join(","));
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "[train]");
        let _ = writeln!(s, "m = {}", self.train.batch_size);
        let _ = writeln!(s, "first_iters = {}", self.train.first_step_iters);
        let _ = writeln!(s, "warm_iters = {}", self.train.warm_step_iters);
        let _ = writeln!(s, "lr = {}", self.train.lr.initial);
        let _ = writeln!(s, "lr_decay = {}", self.train.lr.decay);
        let _ = writeln!(s, "lr_decay_every = {}", self.train.lr.decay_every);
        let _ = writeln!(s, "fd_step = {}", self.train.fd_step);
        let _ = writeln!(s, "quad_nodes = {}", self.train.quad_nodes);
        let _ = writeln!(s, "hidden = {}", self.train.hidden);
        let _ = writeln!(s, "seed = {}", self.train.master_seed);
        if let Some(g) = self.train.clip_gamma {
            let _ = writeln!(s, "clip_gamma = {g}");
        }
        let _ = writeln!(s, "fixed_batch = {}", self.train.fixed_batch);
        let _ = writeln!(s);
        let _ = writeln!(s, "[output]");
        let _ = writeln!(s, "runs = {}", self.runs);
        let _ = writeln!(s, "eval_m = {}", self.eval_batch);
        let _ = writeln!(s, "dir = {}", self.out_dir);
        let _ = writeln!(s, "emit = {}", self.emit.render());
        s
    }
}

fn parse_num<T: std::str::FromStr>(value: &str, key: &str, line: usize) -> Result<T> {
    value.parse().map_err(|_| {
        Error::invalid(format!(
            "line {line}: value '{value}' for key '{key}' is not a valid {}",
            std::any::type_name::<T>()
        ))
    })
}

fn parse_bool(value: &str, key: &str, line: usize) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::invalid(format!(
            "line {line}: value '{value}' for key '{key}' is not a boolean"
        ))),
    }
}

/// Parse the documented key-value format and apply benchmark defaults.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    // First pass: collect (section, key, value, line) entries.
    let mut entries: Vec<(String, String, String, usize)> = Vec::new();
    let mut section = String::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with(';') {
            continue;
        }
        if let Some(name) = trimmed.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or_else(|| {
                Error::invalid(format!("line {line}: unterminated section header"))
            })?;
            section = name.trim().to_string();
            match section.as_str() {
                "benchmark" | "grid" | "train" | "output" => {}
                other => {
                    return Err(Error::invalid(format!("line {line}: unknown section '[{other}]'")))
                }
            }
            continue;
        }
        let (key, value) = trimmed.split_once('=').ok_or_else(|| {
            Error::invalid(format!("line {line}: expected 'key = value', got '{trimmed}'"))
        })?;
        if section.is_empty() {
            return Err(Error::invalid(format!("line {line}: key before any [section] header")));
        }
        entries.push((section.clone(), key.trim().to_string(), value.trim().to_string(), line));
    }

    // The benchmark identity decides the defaults; resolve it first.
    let mut name: Option<(String, usize)> = None;
    let mut dim: Option<(usize, usize)> = None;
    for (section, key, value, line) in &entries {
        if section == "benchmark" {
            match key.as_str() {
                "name" => name = Some((value.clone(), *line)),
                "d" => dim = Some((parse_num(value, key, *line)?, *line)),
                other => {
                    return Err(Error::invalid(format!(
                        "line {line}: unknown key '{other}' in [benchmark]"
                    )))
                }
            }
        }
    }
    let (name, name_line) =
        name.ok_or_else(|| Error::invalid("missing required key 'name' in [benchmark]"))?;
    let benchmark = BenchmarkId::from_name(&name, dim.map(|(d, _)| d))
        .map_err(|e| Error::invalid(format!("line {name_line}: {e}")))?;
    let mut config = ExperimentConfig::defaults(benchmark);

    for (section, key, value, line) in &entries {
        let line = *line;
        match (section.as_str(), key.as_str()) {
            ("benchmark", _) => {} // handled above
            ("grid", "n") => config.steps = parse_num(value, key, line)?,
            ("grid", "t") => config.horizon = parse_num(value, key, line)?,
            ("grid", "knots") => {
                config.knots = value
                    .split(',')
                    .map(|v| parse_num(v.trim(), key, line))
                    .collect::<Result<Vec<f64>>>()?;
            }
            ("train", "m") => config.train.batch_size = parse_num(value, key, line)?,
            ("train", "first_iters") => {
                config.train.first_step_iters = parse_num(value, key, line)?
            }
            ("train", "warm_iters") => config.train.warm_step_iters = parse_num(value, key, line)?,
            ("train", "lr") => config.train.lr.initial = parse_num(value, key, line)?,
            ("train", "lr_decay") => config.train.lr.decay = parse_num(value, key, line)?,
            ("train", "lr_decay_every") => {
                config.train.lr.decay_every = parse_num(value, key, line)?
            }
            ("train", "fd_step") => config.train.fd_step = parse_num(value, key, line)?,
            ("train", "quad_nodes") => config.train.quad_nodes = parse_num(value, key, line)?,
            ("train", "hidden") => config.train.hidden = parse_num(value, key, line)?,
            ("train", "seed") => config.train.master_seed = parse_num(value, key, line)?,
            ("train", "clip_gamma") => config.train.clip_gamma = Some(parse_num(value, key, line)?),
            ("train", "fixed_batch") => config.train.fixed_batch = parse_bool(value, key, line)?,
            ("output", "runs") => config.runs = parse_num(value, key, line)?,
            ("output", "eval_m") => config.eval_batch = parse_num(value, key, line)?,
            ("output", "dir") => config.out_dir = value.clone(),
            ("output", "emit") => config.emit = EmitFlags::parse(value, line)?,
            (section, key) => {
                return Err(Error::invalid(format!(
                    "line {line}: unknown key '{key}' in [{section}]"
                )))
            }
        }
    }
    config.validate()?;
    Ok(config)
}
