//! Scenario files: a line-oriented ASCII format for maps, agents and
//! solver parameters.
//!
//! ```text
//! name: narrowing
//! horizon: 20
//! orientations: 8
//! tau: 0.5
//! eta: 0.5
//! lambda_coll: 100
//! epsilon_idle: 0.05
//! max_iters: 200
//! mode: exact
//! map:
//! .....#####.....
//! ...............
//! .....#####.....
//! agent: start=1,1,E goals=13,1,any
//! agent: start=12,1,W goals=1,1,any;0,1,W
//! ```
//!
//! `.` is free space, `#` an obstacle. Headings use the eight compass
//! labels (E, NE, N, NW, W, SW, S, SE); a goal heading may also be `any`.
//! `horizon` is required; everything else has defaults. Parsing validates
//! the whole file and reports *every* violation, each tagged with its line
//! number and a stable diagnostic code.

use std::fmt::Write as _;

use crate::coop::{AgentSpec, CoopConfig, CoopProblem};
use crate::error::{Error, Result};
use crate::lattice::{Pose, TransitionModel};
use crate::planner::{Goal, Planner};

/// Which pooling flavour a scenario asks for by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMode {
    Exact,
    Soft,
}

impl SolveMode {
    pub fn label(self) -> &'static str {
        match self {
            SolveMode::Exact => "exact",
            SolveMode::Soft => "soft",
        }
    }
}

/// Solver parameters carried by a scenario file.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverParams {
    pub tau: f64,
    pub eta: f64,
    pub lambda_coll: f64,
    pub epsilon_idle: f64,
    pub max_iters: usize,
    pub mode: SolveMode,
}

impl Default for SolverParams {
    fn default() -> Self {
        let c = CoopConfig::default();
        SolverParams {
            tau: c.tau,
            eta: c.eta,
            lambda_coll: c.lambda_coll,
            epsilon_idle: c.epsilon_idle,
            max_iters: c.max_iters,
            mode: SolveMode::Exact,
        }
    }
}

/// One agent as written in the file.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioAgent {
    pub start: Pose,
    pub goals: Vec<Goal>,
}

/// A parsed, validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub blocked: Vec<bool>,
    pub horizon: usize,
    pub orientations: usize,
    pub agents: Vec<ScenarioAgent>,
    pub params: SolverParams,
}

impl Scenario {
    pub fn is_blocked(&self, x: usize, y: usize) -> bool {
        self.blocked[y * self.width + x]
    }

    pub fn config(&self) -> CoopConfig {
        CoopConfig {
            tau: self.params.tau,
            eta: self.params.eta,
            lambda_coll: self.params.lambda_coll,
            max_iters: self.params.max_iters,
            epsilon_idle: self.params.epsilon_idle,
        }
    }

    pub fn problem(&self) -> CoopProblem {
        CoopProblem {
            width: self.width,
            height: self.height,
            blocked: self.blocked.clone(),
            orientations: self.orientations,
            horizon: self.horizon,
            agents: self
                .agents
                .iter()
                .map(|a| AgentSpec {
                    start: a.start,
                    goals: a.goals.clone(),
                })
                .collect(),
            config: self.config(),
        }
    }

    pub fn planner(&self) -> Result<Planner> {
        Planner::new(
            self.width,
            self.height,
            &self.blocked,
            self.orientations,
            self.horizon,
            self.params.epsilon_idle,
        )
    }
}

struct Diagnostics {
    items: Vec<String>,
}

impl Diagnostics {
    fn new() -> Self {
        Diagnostics { items: Vec::new() }
    }

    fn push(&mut self, line: usize, code: &str, msg: impl AsRef<str>) {
        self.items
            .push(format!("line {line}: [{code}] {}", msg.as_ref()));
    }

    fn into_result(self, scenario: Scenario) -> Result<Scenario> {
        if self.items.is_empty() {
            Ok(scenario)
        } else {
            Err(Error::Scenario(self.items.join("\n")))
        }
    }
}

fn parse_float(
    diags: &mut Diagnostics,
    line: usize,
    key: &str,
    raw: &str,
    positive: bool,
) -> Option<f64> {
    match raw.trim().parse::<f64>() {
        Ok(v) if !positive || v > 0.0 => Some(v),
        Ok(v) => {
            diags.push(line, "VALUE", format!("{key} must be positive, got {v}"));
            None
        }
        Err(_) => {
            diags.push(line, "VALUE", format!("{key} is not a number: {raw:?}"));
            None
        }
    }
}

struct AgentLine {
    line: usize,
    start: (usize, usize, String),
    goals: Vec<(usize, usize, String)>,
}

fn parse_triple(raw: &str) -> Option<(usize, usize, String)> {
    let mut parts = raw.split(',');
    let x = parts.next()?.trim().parse().ok()?;
    let y = parts.next()?.trim().parse().ok()?;
    let h = parts.next()?.trim().to_string();
    if parts.next().is_some() || h.is_empty() {
        return None;
    }
    Some((x, y, h))
}

fn parse_agent_line(diags: &mut Diagnostics, line: usize, rest: &str) -> Option<AgentLine> {
    let mut start = None;
    let mut goals = None;
    for field in rest.split_whitespace() {
        if let Some(raw) = field.strip_prefix("start=") {
            match parse_triple(raw) {
                Some(t) => start = Some(t),
                None => {
                    diags.push(
                        line,
                        "SYNTAX",
                        format!("bad start {raw:?}, expected x,y,heading"),
                    );
                    return None;
                }
            }
        } else if let Some(raw) = field.strip_prefix("goals=") {
            let mut parsed = Vec::new();
            for g in raw.split(';') {
                match parse_triple(g) {
                    Some(t) => parsed.push(t),
                    None => {
                        diags.push(
                            line,
                            "SYNTAX",
                            format!("bad goal {g:?}, expected x,y,heading or x,y,any"),
                        );
                        return None;
                    }
                }
            }
            goals = Some(parsed);
        } else {
            diags.push(line, "SYNTAX", format!("unknown agent field {field:?}"));
            return None;
        }
    }
    match (start, goals) {
        (Some(start), Some(goals)) if !goals.is_empty() => Some(AgentLine { line, start, goals }),
        _ => {
            diags.push(line, "SYNTAX", "agent needs both start= and goals=");
            None
        }
    }
}

/// Parses and validates scenario text, reporting every violation at once.
pub fn parse(text: &str) -> Result<Scenario> {
    let mut diags = Diagnostics::new();
    let mut name = String::new();
    let mut horizon: Option<usize> = None;
    let mut horizon_seen = false;
    let mut orientations = 8usize;
    let mut params = SolverParams::default();
    let mut map_rows: Vec<(usize, String)> = Vec::new();
    let mut in_map = false;
    let mut agent_lines: Vec<AgentLine> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim_end();
        if in_map {
            if !trimmed.is_empty() && trimmed.chars().all(|c| c == '.' || c == '#') {
                map_rows.push((line, trimmed.to_string()));
                continue;
            }
            in_map = false;
        }
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix("agent:") {
            if let Some(agent) = parse_agent_line(&mut diags, line, rest.trim()) {
                agent_lines.push(agent);
            }
            continue;
        }
        let Some((key, value)) = trimmed.split_once(':') else {
            diags.push(
                line,
                "SYNTAX",
                format!("expected `key: value`, got {trimmed:?}"),
            );
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        match key {
            "name" => name = value.to_string(),
            "horizon" => {
                horizon_seen = true;
                match value.parse::<usize>() {
                    Ok(v) if v > 0 => horizon = Some(v),
                    _ => diags.push(
                        line,
                        "HORIZON",
                        format!("horizon must be a positive integer, got {value:?}"),
                    ),
                }
            }
            "orientations" => match value.parse::<usize>() {
                Ok(v) if v == 4 || v == 8 => orientations = v,
                _ => diags.push(
                    line,
                    "VALUE",
                    format!("orientations must be 4 or 8, got {value:?}"),
                ),
            },
            "tau" => {
                if let Some(v) = parse_float(&mut diags, line, "tau", value, true) {
                    params.tau = v;
                }
            }
            "eta" => {
                if let Some(v) = parse_float(&mut diags, line, "eta", value, true) {
                    params.eta = v;
                }
            }
            "lambda_coll" => {
                if let Some(v) = parse_float(&mut diags, line, "lambda_coll", value, true) {
                    params.lambda_coll = v;
                }
            }
            "epsilon_idle" => {
                if let Some(v) = parse_float(&mut diags, line, "epsilon_idle", value, false) {
                    if v < 0.0 {
                        diags.push(
                            line,
                            "VALUE",
                            format!("epsilon_idle must not be negative, got {v}"),
                        );
                    } else {
                        params.epsilon_idle = v;
                    }
                }
            }
            "max_iters" => match value.parse::<usize>() {
                Ok(v) if v > 0 => params.max_iters = v,
                _ => diags.push(
                    line,
                    "VALUE",
                    format!("max_iters must be a positive integer, got {value:?}"),
                ),
            },
            "mode" => match value {
                "exact" => params.mode = SolveMode::Exact,
                "soft" => params.mode = SolveMode::Soft,
                other => diags.push(
                    line,
                    "VALUE",
                    format!("mode must be exact or soft, got {other:?}"),
                ),
            },
            "map" if value.is_empty() => in_map = true,
            _ => diags.push(line, "SYNTAX", format!("unknown key {key:?}")),
        }
    }

    if !horizon_seen {
        diags.push(0, "HORIZON", "missing required key `horizon`");
    }

    // Map shape.
    let (width, height) = match map_rows.first() {
        None => {
            diags.push(0, "MAP", "missing `map:` block");
            (0, 0)
        }
        Some((_, first)) => (first.len(), map_rows.len()),
    };
    let mut blocked = Vec::with_capacity(width * height);
    for (line, row) in &map_rows {
        if row.len() != width {
            diags.push(
                *line,
                "RAGGED",
                format!("map row has {} cells, expected {width}", row.len()),
            );
            blocked.extend(std::iter::repeat_n(false, width));
            continue;
        }
        blocked.extend(row.chars().map(|c| c == '#'));
    }

    // Agents, with placement checks against the map.
    let model = TransitionModel::standard(orientations).ok();
    let mut agents = Vec::new();
    let mut seen_starts: Vec<(usize, usize)> = Vec::new();
    for al in &agent_lines {
        let mut ok = true;
        let heading = |diags: &mut Diagnostics, h: &str, what: &str| -> Option<usize> {
            let th = model.as_ref().and_then(|m| m.heading_from_label(h));
            if th.is_none() {
                diags.push(
                    al.line,
                    "HEADING",
                    format!("unknown {what} heading {h:?} for {orientations} orientations"),
                );
            }
            th
        };
        let check_cell = |diags: &mut Diagnostics, x: usize, y: usize, what: &str| -> bool {
            if width == 0 || height == 0 {
                return false;
            }
            if x >= width || y >= height {
                diags.push(
                    al.line,
                    "PLACEMENT",
                    format!("{what} ({x}, {y}) is outside the {width}x{height} map"),
                );
                return false;
            }
            if blocked.get(y * width + x).copied().unwrap_or(false) {
                diags.push(
                    al.line,
                    "PLACEMENT",
                    format!("{what} ({x}, {y}) is on an obstacle"),
                );
                return false;
            }
            true
        };

        let (sx, sy, ref sh) = al.start;
        let start_theta = heading(&mut diags, sh, "start");
        if !check_cell(&mut diags, sx, sy, "start") || start_theta.is_none() {
            ok = false;
        }
        if seen_starts.contains(&(sx, sy)) {
            diags.push(
                al.line,
                "PLACEMENT",
                format!("start cell ({sx}, {sy}) is already taken by another agent"),
            );
            ok = false;
        }
        seen_starts.push((sx, sy));

        let mut goals = Vec::new();
        for (gx, gy, gh) in &al.goals {
            let theta = if gh == "any" {
                None
            } else {
                Some(heading(&mut diags, gh, "goal"))
            };
            if !check_cell(&mut diags, *gx, *gy, "goal") {
                ok = false;
                continue;
            }
            match theta {
                None => goals.push(Goal {
                    x: *gx,
                    y: *gy,
                    theta: None,
                }),
                Some(Some(th)) => goals.push(Goal {
                    x: *gx,
                    y: *gy,
                    theta: Some(th),
                }),
                Some(None) => ok = false,
            }
        }
        if let Some(th) = start_theta {
            if ok {
                agents.push(ScenarioAgent {
                    start: Pose::new(sx, sy, th),
                    goals,
                });
            }
        }
    }

    if agent_lines.is_empty() {
        diags.push(0, "AGENTS", "scenario declares no agents");
    }

    let scenario = Scenario {
        name,
        width,
        height,
        blocked,
        horizon: horizon.unwrap_or(1),
        orientations,
        agents,
        params,
    };
    diags.into_result(scenario)
}

/// Canonical text form; [`parse`] of the output reproduces the scenario.
pub fn serialize(s: &Scenario) -> String {
    let model = TransitionModel::standard(s.orientations).expect("valid orientation count");
    let mut out = String::new();
    let _ = writeln!(out, "name: {}", s.name);
    let _ = writeln!(out, "horizon: {}", s.horizon);
    let _ = writeln!(out, "orientations: {}", s.orientations);
    let _ = writeln!(out, "tau: {}", s.params.tau);
    let _ = writeln!(out, "eta: {}", s.params.eta);
    let _ = writeln!(out, "lambda_coll: {}", s.params.lambda_coll);
    let _ = writeln!(out, "epsilon_idle: {}", s.params.epsilon_idle);
    let _ = writeln!(out, "max_iters: {}", s.params.max_iters);
    let _ = writeln!(out, "mode: {}", s.params.mode.label());
    let _ = writeln!(out, "map:");
    for y in 0..s.height {
        for x in 0..s.width {
            out.push(if s.is_blocked(x, y) { '#' } else { '.' });
        }
        out.push('\n');
    }
    for a in &s.agents {
        let _ = write!(
            out,
            "agent: start={},{},{}",
            a.start.x,
            a.start.y,
            model.heading_label(a.start.theta)
        );
        let goals: Vec<String> = a
            .goals
            .iter()
            .map(|g| match g.theta {
                Some(th) => format!("{},{},{}", g.x, g.y, model.heading_label(th)),
                None => format!("{},{},any", g.x, g.y),
            })
            .collect();
        let _ = writeln!(out, " goals={}", goals.join(";"));
    }
    out
}
