//! Scenario files: a named JSON description of one analysis operation on
//! one parameter set, plus the runner that turns it into on-disk datasets.
//!
//! Every run writes its artifacts into `<out_root>/<scenario name>/` and
//! finishes with a `report.json` listing exactly the files produced, the
//! SHA-256 of the scenario text, and per-point status counts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Deserialize;
use serde_json::json;

use crate::attractor::{
    criticality_probe, hysteresis_scan, periodic_branch_end, sweep, tag_curve_criticality,
    ClassifyTols, ProbeOptions, SweepOptions, DEFAULT_PROBE_DELTAS,
};
use crate::continuation::{continue_hopf_2d, HopfCurve, StepControl};
use crate::error::ScenarioError;
use crate::integrator::{default_step, integrate, InitialHistory, Trajectory};
use crate::model::{equilibria, positive_equilibrium, State};
use crate::params::{Axis, ModelParams, SV_TO_M3_PER_YR};
use crate::report::{
    branch_csv, branch_sidecar, equilibria_csv, hopf_curve_csv, roots_csv, trajectory_csv,
    trajectory_sidecar, ArtifactSink, RunReport,
};
use crate::stability::{linearize, locate_hopf_1d, rightmost_roots, Criticality, HopfPoint};

/// Parameter grid: either an inclusive linspace or an explicit list.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Linspace { start: f64, stop: f64, count: usize },
    Explicit(Vec<f64>),
}

impl Grid {
    /// Validated grid values: finite, at least one point, strictly monotone.
    pub fn values(&self) -> Result<Vec<f64>, ScenarioError> {
        let vals = match self {
            Grid::Linspace { start, stop, count } => {
                if *count < 2 {
                    return Err(ScenarioError::BadOption(
                        "grid count must be at least 2".into(),
                    ));
                }
                let n = *count;
                (0..n)
                    .map(|i| start + (stop - start) * i as f64 / (n - 1) as f64)
                    .collect::<Vec<f64>>()
            }
            Grid::Explicit(v) => v.clone(),
        };
        if vals.is_empty() {
            return Err(ScenarioError::BadOption("grid is empty".into()));
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(ScenarioError::BadOption(
                "grid contains a non-finite value".into(),
            ));
        }
        let up = vals.windows(2).all(|w| w[1] > w[0]);
        let down = vals.windows(2).all(|w| w[1] < w[0]);
        if vals.len() > 1 && !up && !down {
            return Err(ScenarioError::BadOption(
                "grid must be strictly monotone".into(),
            ));
        }
        Ok(vals)
    }
}

fn axis_from_key(key: &str) -> Result<Axis, ScenarioError> {
    match key {
        "f1_sv" | "f1" => Ok(Axis::F1),
        "f2_sv" | "f2" => Ok(Axis::F2),
        "sigma_sv" | "sigma" => Ok(Axis::Sigma),
        "tau_yr" | "tau" => Ok(Axis::Tau),
        "t_star" => Ok(Axis::TStar),
        other => Err(ScenarioError::BadOption(format!(
            "unknown parameter axis: {other}"
        ))),
    }
}

/// Applies `set` overrides (axis name -> external-unit value) to `p`.
fn apply_overrides(
    p: &ModelParams,
    set: &BTreeMap<String, f64>,
) -> Result<ModelParams, ScenarioError> {
    let mut out = *p;
    for (key, value) in set {
        if !value.is_finite() {
            return Err(ScenarioError::BadOption(format!(
                "non-finite override for {key}"
            )));
        }
        out = out.with_axis(axis_from_key(key)?, *value);
    }
    Ok(out)
}

fn default_perturbation() -> f64 {
    1e-3
}

fn default_horizon() -> f64 {
    200_000.0
}

fn default_transient() -> f64 {
    50_000.0
}

fn default_true() -> bool {
    true
}

fn default_stride() -> usize {
    10
}

fn default_n_roots() -> usize {
    8
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateOpts {
    #[serde(default)]
    pub set: BTreeMap<String, f64>,
    pub horizon_yr: f64,
    #[serde(default)]
    pub h_yr: Option<f64>,
    /// Explicit initial state; default is the equilibrium plus the
    /// perturbation on s1.
    #[serde(default)]
    pub init: Option<State>,
    #[serde(default = "default_perturbation")]
    pub perturbation_psu: f64,
    /// When set, also classify the post-transient window.
    #[serde(default)]
    pub transient_yr: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct EquilibriaOpts {
    #[serde(default)]
    pub set: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct StabilityOpts {
    #[serde(default)]
    pub set: BTreeMap<String, f64>,
    #[serde(default = "default_n_roots")]
    pub n_roots: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepOpts {
    #[serde(default)]
    pub set: BTreeMap<String, f64>,
    pub axis: String,
    pub grid: Grid,
    #[serde(default = "default_true")]
    pub inherit: bool,
    #[serde(default = "default_horizon")]
    pub horizon_yr: f64,
    #[serde(default = "default_transient")]
    pub transient_yr: f64,
    #[serde(default)]
    pub h_yr: Option<f64>,
    #[serde(default = "default_perturbation")]
    pub perturbation_psu: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HysteresisOpts {
    #[serde(default)]
    pub set: BTreeMap<String, f64>,
    pub axis: String,
    pub grid: Grid,
    #[serde(default = "default_horizon")]
    pub horizon_yr: f64,
    #[serde(default = "default_transient")]
    pub transient_yr: f64,
    #[serde(default)]
    pub h_yr: Option<f64>,
    #[serde(default = "default_perturbation")]
    pub perturbation_psu: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HopfCurveOpts {
    #[serde(default)]
    pub set: BTreeMap<String, f64>,
    /// The two plane axes; the curve is traced in (plane[0], plane[1]).
    pub plane: [String; 2],
    /// Axis varied to locate the starting Hopf point.
    pub locate_axis: String,
    pub locate_bracket: (f64, f64),
    pub a_range: (f64, f64),
    pub b_range: (f64, f64),
    /// Probe every `tag_stride`-th point for criticality; 0 disables.
    #[serde(default = "default_stride")]
    pub tag_stride: usize,
    /// Probe offsets along `probe_axis` (defaults to the first plane axis).
    #[serde(default)]
    pub probe_deltas: Option<Vec<f64>>,
    #[serde(default)]
    pub probe_axis: Option<String>,
    #[serde(default)]
    pub max_points: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticalityOpts {
    #[serde(default)]
    pub set: BTreeMap<String, f64>,
    pub axis: String,
    pub bracket: (f64, f64),
    #[serde(default)]
    pub deltas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FigureOpts {
    pub id: String,
}

#[derive(Debug, Clone)]
pub enum Operation {
    Simulate(SimulateOpts),
    Equilibria(EquilibriaOpts),
    Stability(StabilityOpts),
    Sweep(SweepOpts),
    Hysteresis(HysteresisOpts),
    HopfCurve(HopfCurveOpts),
    Criticality(CriticalityOpts),
    Figure(FigureOpts),
}

pub const FIGURE_IDS: [&str; 7] = [
    "fig4a", "fig4b", "fig4c", "fig5", "fig6b", "fig7b", "fig8",
];

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    params_file: String,
    operation: String,
    #[serde(default)]
    options: serde_json::Value,
}

/// A parsed and validated scenario, ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub params: ModelParams,
    pub operation: Operation,
    /// Raw scenario file bytes, hashed into the run report.
    pub raw: Vec<u8>,
}

fn parse_options<T: serde::de::DeserializeOwned>(
    v: &serde_json::Value,
) -> Result<T, ScenarioError> {
    serde_json::from_value(v.clone()).map_err(|e| ScenarioError::BadOption(e.to_string()))
}

/// Loads and fully validates a scenario file. `seed_params` overrides the
/// scenario's own params file when given. Relative params paths resolve
/// against the scenario file's directory.
pub fn load_scenario(
    path: &Path,
    seed_params: Option<&Path>,
) -> Result<Scenario, ScenarioError> {
    let raw = std::fs::read(path)
        .map_err(|e| ScenarioError::Io(path.display().to_string(), e.to_string()))?;
    let file: ScenarioFile = serde_json::from_slice(&raw)
        .map_err(|e| ScenarioError::Malformed(e.to_string()))?;
    if file.name.is_empty()
        || !file
            .name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
    {
        return Err(ScenarioError::BadOption(format!(
            "scenario name must be a nonempty [A-Za-z0-9_-]+ token, got {:?}",
            file.name
        )));
    }
    let params_path: PathBuf = match seed_params {
        Some(p) => p.to_path_buf(),
        None => {
            let rel = PathBuf::from(&file.params_file);
            if rel.is_absolute() {
                rel
            } else {
                path.parent().unwrap_or(Path::new(".")).join(rel)
            }
        }
    };
    let params = ModelParams::from_file(&params_path)?;

    let operation = match file.operation.as_str() {
        "simulate" => Operation::Simulate(parse_options(&file.options)?),
        "equilibria" => Operation::Equilibria(parse_options(&file.options)?),
        "stability" => Operation::Stability(parse_options(&file.options)?),
        "sweep" => Operation::Sweep(parse_options(&file.options)?),
        "hysteresis" => Operation::Hysteresis(parse_options(&file.options)?),
        "hopf-curve" => Operation::HopfCurve(parse_options(&file.options)?),
        "criticality" => Operation::Criticality(parse_options(&file.options)?),
        "figure" => Operation::Figure(parse_options(&file.options)?),
        other => return Err(ScenarioError::UnknownOperation(other.to_string())),
    };

    // Referential and range checks beyond the serde schema.
    match &operation {
        Operation::Simulate(o) => {
            apply_overrides(&params, &o.set)?;
            if !(o.horizon_yr > 0.0) {
                return Err(ScenarioError::BadOption(
                    "horizon_yr must be positive".into(),
                ));
            }
        }
        Operation::Equilibria(o) => {
            apply_overrides(&params, &o.set)?;
        }
        Operation::Stability(o) => {
            apply_overrides(&params, &o.set)?;
        }
        Operation::Sweep(o) => {
            apply_overrides(&params, &o.set)?;
            axis_from_key(&o.axis)?;
            o.grid.values()?;
        }
        Operation::Hysteresis(o) => {
            apply_overrides(&params, &o.set)?;
            axis_from_key(&o.axis)?;
            o.grid.values()?;
        }
        Operation::HopfCurve(o) => {
            apply_overrides(&params, &o.set)?;
            axis_from_key(&o.plane[0])?;
            axis_from_key(&o.plane[1])?;
            let loc = axis_from_key(&o.locate_axis)?;
            if loc != axis_from_key(&o.plane[0])? && loc != axis_from_key(&o.plane[1])? {
                return Err(ScenarioError::BadOption(
                    "locate_axis must be one of the plane axes".into(),
                ));
            }
            if let Some(a) = &o.probe_axis {
                axis_from_key(a)?;
            }
            for (lo, hi) in [o.locate_bracket, o.a_range, o.b_range] {
                if !(lo < hi) {
                    return Err(ScenarioError::BadOption(
                        "brackets and ranges must be ordered (lo < hi)".into(),
                    ));
                }
            }
        }
        Operation::Criticality(o) => {
            apply_overrides(&params, &o.set)?;
            axis_from_key(&o.axis)?;
            if !(o.bracket.0 < o.bracket.1) {
                return Err(ScenarioError::BadOption(
                    "bracket must be ordered (lo < hi)".into(),
                ));
            }
            if let Some(d) = &o.deltas {
                if d.is_empty() || d.iter().any(|x| !(*x > 0.0)) {
                    return Err(ScenarioError::BadOption(
                        "deltas must be positive".into(),
                    ));
                }
            }
        }
        Operation::Figure(o) => {
            if !FIGURE_IDS.contains(&o.id.as_str()) {
                return Err(ScenarioError::UnknownFigure(o.id.clone()));
            }
        }
    }

    Ok(Scenario {
        name: file.name,
        params,
        operation,
        raw,
    })
}

/// Outcome of a run: the report plus whether any point-level work failed.
pub struct RunOutcome {
    pub report: RunReport,
    pub partial_failure: bool,
    pub out_dir: PathBuf,
}

struct RunCtx {
    sink: ArtifactSink,
    report: RunReport,
}

impl RunCtx {
    fn write_text(&mut self, name: &str, text: &str) -> Result<(), String> {
        self.sink
            .write_text(name, text)
            .map(|_| ())
            .map_err(|e| format!("writing {name}: {e}"))
    }

    fn write_json(&mut self, name: &str, v: &serde_json::Value) -> Result<(), String> {
        self.sink
            .write_json(name, v)
            .map(|_| ())
            .map_err(|e| format!("writing {name}: {e}"))
    }
}

/// Runs a validated scenario, writing artifacts and a `report.json` under
/// `<out_root>/<name>/`. Point-level errors are recorded in the report and
/// surface as `partial_failure`; only I/O trouble creating the output
/// directory is a hard error.
pub fn run_scenario(sc: &Scenario, out_root: &Path) -> Result<RunOutcome, ScenarioError> {
    let out_dir = out_root.join(&sc.name);
    let sink = ArtifactSink::new(&out_dir)
        .map_err(|e| ScenarioError::Io(out_dir.display().to_string(), e.to_string()))?;
    let started = Instant::now();

    let mut ctx = RunCtx {
        sink,
        report: RunReport::new(&sc.name, &sc.raw),
    };
    let result = match &sc.operation {
        Operation::Simulate(o) => run_simulate(&sc.params, o, &mut ctx),
        Operation::Equilibria(o) => run_equilibria(&sc.params, o, &mut ctx),
        Operation::Stability(o) => run_stability(&sc.params, o, &mut ctx),
        Operation::Sweep(o) => run_sweep(&sc.params, o, &mut ctx),
        Operation::Hysteresis(o) => run_hysteresis(&sc.params, o, &mut ctx),
        Operation::HopfCurve(o) => run_hopf_curve(&sc.params, o, &mut ctx),
        Operation::Criticality(o) => run_criticality(&sc.params, o, &mut ctx),
        Operation::Figure(o) => run_figure(&sc.params, o, &mut ctx),
    };
    if let Err(e) = result {
        ctx.report.failures.push(e);
    }
    let RunCtx { sink, mut report } = ctx;
    report.artifacts = sink.into_artifact_names();

    report.wall_time_s = started.elapsed().as_secs_f64();
    report.artifacts.push("report.json".to_string());
    let partial_failure = !report.failures.is_empty();
    let text = serde_json::to_string_pretty(&report).expect("report serialization");
    std::fs::write(out_dir.join("report.json"), text)
        .map_err(|e| ScenarioError::Io(out_dir.display().to_string(), e.to_string()))?;
    Ok(RunOutcome {
        report,
        partial_failure,
        out_dir,
    })
}

fn run_simulate(
    base: &ModelParams,
    o: &SimulateOpts,
    ctx: &mut RunCtx,
) -> Result<(), String> {
    let p = apply_overrides(base, &o.set).map_err(|e| e.to_string())?;
    let init = match o.init {
        Some(s) => s,
        None => {
            let eq = positive_equilibrium(&p)
                .map_err(|e| e.to_string())?
                .ok_or("no m>0 equilibrium at these parameters")?;
            State::new(eq.state.s1 + o.perturbation_psu, eq.state.s2)
        }
    };
    let h = o.h_yr.unwrap_or_else(|| default_step(p.tau));
    let traj = integrate(&p, &InitialHistory::Constant(init), o.horizon_yr, h)
        .map_err(|e| e.to_string())?;
    write_trajectory(&traj, &p, "trajectory", ctx)?;
    if let Some(transient) = o.transient_yr {
        let summary = crate::attractor::classify(&traj, transient, &ClassifyTols::default())
            .map_err(|e| e.to_string())?;
        ctx.write_json("summary.json", &json!(summary))?;
        ctx.report.count(&summary.kind.to_string(), 1);
    } else {
        ctx.report.count("ok", 1);
    }
    Ok(())
}

fn write_trajectory(
    traj: &Trajectory,
    p: &ModelParams,
    stem: &str,
    ctx: &mut RunCtx,
) -> Result<(), String> {
    ctx.write_text(&format!("{stem}.csv"), &trajectory_csv(traj, p))?;
    ctx.write_json(&format!("{stem}.json"), &trajectory_sidecar(traj, p))
}

fn run_equilibria(
    base: &ModelParams,
    o: &EquilibriaOpts,
    ctx: &mut RunCtx,
) -> Result<(), String> {
    let p = apply_overrides(base, &o.set).map_err(|e| e.to_string())?;
    let eqs = equilibria(&p).map_err(|e| e.to_string())?;
    ctx.write_text("equilibria.csv", &equilibria_csv(&eqs))?;
    ctx.write_json(
        "equilibria.json",
        &json!({ "params": p.to_config(), "count": eqs.len() }),
    )?;
    for e in &eqs {
        ctx.report.count(&format!("{:?}", e.branch), 1);
    }
    Ok(())
}

fn run_stability(
    base: &ModelParams,
    o: &StabilityOpts,
    ctx: &mut RunCtx,
) -> Result<(), String> {
    let p = apply_overrides(base, &o.set).map_err(|e| e.to_string())?;
    let (eq, lin) = linearize(&p).map_err(|e| e.to_string())?;
    let roots = rightmost_roots(&lin, o.n_roots).map_err(|e| e.to_string())?;
    ctx.write_text("roots.csv", &roots_csv(&roots))?;
    ctx.write_json(
        "stability.json",
        &json!({
            "params": p.to_config(),
            "equilibrium": { "s1_psu": eq.state.s1, "s2_psu": eq.state.s2,
                             "m_sv": eq.m / SV_TO_M3_PER_YR },
            "verdict": roots.verdict,
            "max_re_per_yr": roots.max_re(),
        }),
    )?;
    ctx.report.count(&format!("{:?}", roots.verdict), 1);
    Ok(())
}

fn sweep_options(horizon: f64, transient: f64, h: Option<f64>, pert: f64) -> SweepOptions {
    SweepOptions {
        horizon,
        transient,
        h,
        perturbation: pert,
        tols: ClassifyTols::default(),
    }
}

fn record_branch(branch: &crate::attractor::BranchData, ctx: &mut RunCtx) {
    for pt in &branch.points {
        match &pt.summary {
            Some(s) => ctx.report.count(&s.kind.to_string(), 1),
            None => {
                ctx.report.count("error", 1);
                if let Some(e) = &pt.error {
                    ctx.report
                        .failures
                        .push(format!("{} = {}: {e}", branch.axis.name(), pt.value));
                }
            }
        }
    }
}

fn run_sweep(base: &ModelParams, o: &SweepOpts, ctx: &mut RunCtx) -> Result<(), String> {
    let p = apply_overrides(base, &o.set).map_err(|e| e.to_string())?;
    let axis = axis_from_key(&o.axis).map_err(|e| e.to_string())?;
    let values = o.grid.values().map_err(|e| e.to_string())?;
    let opts = sweep_options(o.horizon_yr, o.transient_yr, o.h_yr, o.perturbation_psu);
    let branch = sweep(&p, axis, &values, o.inherit, &opts);
    ctx.write_text("branch.csv", &branch_csv(&branch))?;
    let extra = json!({
        "params": p.to_config(),
        "inherit": o.inherit,
        "horizon_yr": o.horizon_yr,
        "transient_yr": o.transient_yr,
        "periodic_end_bracket": periodic_branch_end(&branch),
    });
    ctx.write_json("branch.json", &branch_sidecar(&branch, extra))?;
    record_branch(&branch, ctx);
    Ok(())
}

fn run_hysteresis(
    base: &ModelParams,
    o: &HysteresisOpts,
    ctx: &mut RunCtx,
) -> Result<(), String> {
    let p = apply_overrides(base, &o.set).map_err(|e| e.to_string())?;
    let axis = axis_from_key(&o.axis).map_err(|e| e.to_string())?;
    let mut values = o.grid.values().map_err(|e| e.to_string())?;
    if values.len() >= 2 && values[1] < values[0] {
        values.reverse();
    }
    let opts = sweep_options(o.horizon_yr, o.transient_yr, o.h_yr, o.perturbation_psu);
    let result = hysteresis_scan(&p, axis, &values, &opts);
    ctx.write_text("up.csv", &branch_csv(&result.up))?;
    ctx.write_text("down.csv", &branch_csv(&result.down))?;
    ctx.write_json(
        "hysteresis.json",
        &json!({
            "params": p.to_config(),
            "axis": axis.name(),
            "windows": result.windows,
            "fold_estimate": result.fold_estimate,
        }),
    )?;
    record_branch(&result.up, ctx);
    record_branch(&result.down, ctx);
    Ok(())
}

fn write_hopf_curve(
    curve: &HopfCurve,
    start: &HopfPoint,
    stem: &str,
    ctx: &mut RunCtx,
) -> Result<(), String> {
    ctx.write_text(&format!("{stem}.csv"), &hopf_curve_csv(curve))?;
    ctx.write_json(
        &format!("{stem}.json"),
        &json!({
            "axis_a": curve.axis_a.name(),
            "axis_b": curve.axis_b.name(),
            "n_points": curve.points.len(),
            "closed_loop": curve.closed_loop,
            "both_criticalities": curve.has_both_criticalities(),
            "start": {
                "params": start.params.to_config(),
                "omega_per_yr": start.omega,
            },
        }),
    )?;
    for pt in &curve.points {
        ctx.report.count(&format!("{:?}", pt.criticality), 1);
    }
    Ok(())
}

fn run_hopf_curve(
    base: &ModelParams,
    o: &HopfCurveOpts,
    ctx: &mut RunCtx,
) -> Result<(), String> {
    let p = apply_overrides(base, &o.set).map_err(|e| e.to_string())?;
    let axis_a = axis_from_key(&o.plane[0]).map_err(|e| e.to_string())?;
    let axis_b = axis_from_key(&o.plane[1]).map_err(|e| e.to_string())?;
    let locate_axis = axis_from_key(&o.locate_axis).map_err(|e| e.to_string())?;
    let start = locate_hopf_1d(&p, locate_axis, o.locate_bracket).map_err(|e| e.to_string())?;
    let mut ctl = StepControl::new(o.a_range, o.b_range);
    if let Some(n) = o.max_points {
        ctl.max_points = n;
    }
    let mut curve = continue_hopf_2d(&start, axis_a, axis_b, &ctl).map_err(|e| e.to_string())?;
    if o.tag_stride > 0 {
        let probe_axis = match &o.probe_axis {
            Some(a) => axis_from_key(a).map_err(|e| e.to_string())?,
            None => axis_a,
        };
        let deltas = o
            .probe_deltas
            .clone()
            .unwrap_or_else(|| default_deltas(probe_axis));
        tag_curve_criticality(
            &mut curve,
            &p,
            probe_axis,
            o.tag_stride,
            &deltas,
            &ProbeOptions::default(),
        );
    }
    write_hopf_curve(&curve, &start, "hopf_curve", ctx)
}

/// Probe offsets sized to the natural scale of each axis.
pub fn default_deltas(axis: Axis) -> Vec<f64> {
    let unit = match axis {
        Axis::F1 | Axis::F2 => 1.0,
        Axis::Sigma => 100.0,
        Axis::Tau => 1e5,
        Axis::TStar => 10.0,
    };
    DEFAULT_PROBE_DELTAS.iter().map(|d| d * unit).collect()
}

fn run_criticality(
    base: &ModelParams,
    o: &CriticalityOpts,
    ctx: &mut RunCtx,
) -> Result<(), String> {
    let p = apply_overrides(base, &o.set).map_err(|e| e.to_string())?;
    let axis = axis_from_key(&o.axis).map_err(|e| e.to_string())?;
    let hopf = locate_hopf_1d(&p, axis, o.bracket).map_err(|e| e.to_string())?;
    let deltas = o.deltas.clone().unwrap_or_else(|| default_deltas(axis));
    let criticality = criticality_probe(&hopf, axis, &deltas, &ProbeOptions::default())
        .map_err(|e| e.to_string())?;
    ctx.write_json(
        "criticality.json",
        &json!({
            "axis": axis.name(),
            "value": hopf.params.get_axis(axis),
            "omega_per_yr": hopf.omega,
            "period_yr": 2.0 * std::f64::consts::PI / hopf.omega,
            "criticality": criticality,
            "deltas": deltas,
        }),
    )?;
    ctx.report.count(&format!("{criticality:?}"), 1);
    Ok(())
}

fn run_figure(base: &ModelParams, o: &FigureOpts, ctx: &mut RunCtx) -> Result<(), String> {
    match o.id.as_str() {
        "fig4a" => figure_4a(base, ctx),
        "fig4b" => figure_4b(base, ctx),
        "fig4c" => figure_4c(base, ctx),
        "fig5" => figure_5(base, ctx),
        "fig6b" => figure_6b(base, ctx),
        "fig7b" => figure_7b(base, ctx),
        "fig8" => figure_8(base, ctx),
        other => Err(format!("unknown figure id: {other}")),
    }
}

fn linspace(start: f64, stop: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| start + (stop - start) * i as f64 / (count - 1) as f64)
        .collect()
}

/// Equilibrium branch with verdicts over an axis grid, as CSV.
fn verdict_transect(p: &ModelParams, axis: Axis, values: &[f64]) -> String {
    let rows: Vec<String> = values
        .par_iter()
        .map(|&v| {
            let pv = p.with_axis(axis, v);
            match linearize(&pv).and_then(|(eq, lin)| Ok((eq, rightmost_roots(&lin, 6)?))) {
                Ok((eq, roots)) => format!(
                    "{},{},{},{},{},{:?}",
                    v,
                    eq.state.s1,
                    eq.state.s2,
                    eq.m / SV_TO_M3_PER_YR,
                    roots.max_re(),
                    roots.verdict
                ),
                Err(e) => format!("{v},,,,,error: {e}"),
            }
        })
        .collect();
    let mut out = String::from("param,s1_psu,s2_psu,m_sv,max_re_per_yr,verdict\n");
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}

/// Undelayed limit: equilibrium branch over F1 with verdicts, plus the
/// located Hopf point and its criticality.
fn figure_4a(base: &ModelParams, ctx: &mut RunCtx) -> Result<(), String> {
    let p = base.with_axis(Axis::Sigma, 0.0).with_axis(Axis::Tau, 0.0);
    let values = linspace(-0.30, -0.16, 141);
    ctx.write_text(
        "equilibrium_branch.csv",
        &verdict_transect(&p, Axis::F1, &values),
    )?;
    let hopf = locate_hopf_1d(&p, Axis::F1, (-0.30, -0.20)).map_err(|e| e.to_string())?;
    let criticality = criticality_probe(
        &hopf,
        Axis::F1,
        &default_deltas(Axis::F1),
        &ProbeOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    ctx.write_json(
        "hopf.json",
        &json!({
            "f1_sv": hopf.params.f1_sv(),
            "omega_per_yr": hopf.omega,
            "period_yr": 2.0 * std::f64::consts::PI / hopf.omega,
            "criticality": criticality,
        }),
    )?;
    ctx.report.count(&format!("{criticality:?}"), 1);
    Ok(())
}

/// Delayed bifurcation diagram: inherited up-sweep in F1 at the default
/// sigma and tau, with the Hopf point and the end of the periodic branch.
fn figure_4b(base: &ModelParams, ctx: &mut RunCtx) -> Result<(), String> {
    let p = base
        .with_axis(Axis::F1, -0.24)
        .with_axis(Axis::Sigma, 11.0)
        .with_axis(Axis::Tau, 900.0);
    let values = linspace(-0.24, -0.195, 91);
    let branch = sweep(&p, Axis::F1, &values, true, &SweepOptions::default());
    ctx.write_text("branch.csv", &branch_csv(&branch))?;
    ctx.write_json(
        "branch.json",
        &branch_sidecar(&branch, json!({ "params": p.to_config(), "inherit": true })),
    )?;
    record_branch(&branch, ctx);
    let hopf = locate_hopf_1d(&p, Axis::F1, (-0.25, -0.18)).map_err(|e| e.to_string())?;
    ctx.write_json(
        "markers.json",
        &json!({
            "hopf_f1_sv": hopf.params.f1_sv(),
            "hopf_period_yr": 2.0 * std::f64::consts::PI / hopf.omega,
            "periodic_end_bracket": periodic_branch_end(&branch),
        }),
    )?;
    Ok(())
}

/// Sustained millennial oscillation time series just past the Hopf point.
fn figure_4c(base: &ModelParams, ctx: &mut RunCtx) -> Result<(), String> {
    let p = base
        .with_axis(Axis::F1, -0.208)
        .with_axis(Axis::Sigma, 11.0)
        .with_axis(Axis::Tau, 900.0);
    let eq = positive_equilibrium(&p)
        .map_err(|e| e.to_string())?
        .ok_or("no m>0 equilibrium")?;
    let init = InitialHistory::Constant(State::new(eq.state.s1 + 1e-3, eq.state.s2));
    // The orbit grows slowly out of the 1e-3 kick; 200 kyr reaches the
    // saturated cycle (60 kyr still reads as a growing transient).
    let traj = integrate(&p, &init, 200_000.0, default_step(p.tau)).map_err(|e| e.to_string())?;
    write_trajectory(&traj, &p, "trajectory", ctx)?;
    let summary = crate::attractor::classify(&traj, 50_000.0, &ClassifyTols::default())
        .map_err(|e| e.to_string())?;
    ctx.write_json("summary.json", &json!(summary))?;
    ctx.report.count(&summary.kind.to_string(), 1);
    Ok(())
}

/// Hopf curves in the (F1, sigma) plane for three delay values, tagged
/// with criticality.
fn figure_5(base: &ModelParams, ctx: &mut RunCtx) -> Result<(), String> {
    let cases: [(f64, (f64, f64)); 3] = [
        (850.0, (1.0, 9.0)),
        (900.0, (1.0, 8.0)),
        (1100.0, (4.0, 12.0)),
    ];
    for (tau, sigma_bracket) in cases {
        let p = base
            .with_axis(Axis::F1, -0.22)
            .with_axis(Axis::Tau, tau)
            .with_axis(Axis::Sigma, 11.0);
        let start =
            locate_hopf_1d(&p, Axis::Sigma, sigma_bracket).map_err(|e| e.to_string())?;
        let ctl = StepControl::new((-0.35, -0.10), (0.0, 25.0));
        let mut curve =
            continue_hopf_2d(&start, Axis::F1, Axis::Sigma, &ctl).map_err(|e| e.to_string())?;
        tag_curve_criticality(
            &mut curve,
            &p,
            Axis::F1,
            10,
            &default_deltas(Axis::F1),
            &ProbeOptions::default(),
        );
        write_hopf_curve(&curve, &start, &format!("hopf_tau{}", tau as i64), ctx)?;
    }
    Ok(())
}

/// Stability window bounded by Hopf points on both sides: inherited sweep
/// plus the three located crossings.
fn figure_6b(base: &ModelParams, ctx: &mut RunCtx) -> Result<(), String> {
    let p = base
        .with_axis(Axis::Sigma, 9.5)
        .with_axis(Axis::Tau, 1100.0);
    let values = linspace(-0.225, -0.18, 91);
    let branch = sweep(&p, Axis::F1, &values, true, &SweepOptions::default());
    ctx.write_text("branch.csv", &branch_csv(&branch))?;
    ctx.write_json(
        "branch.json",
        &branch_sidecar(&branch, json!({ "params": p.to_config(), "inherit": true })),
    )?;
    record_branch(&branch, ctx);

    let brackets = [(-0.225, -0.205), (-0.205, -0.192), (-0.192, -0.183)];
    let mut hopfs = Vec::new();
    for bracket in brackets {
        let hp = locate_hopf_1d(&p, Axis::F1, bracket).map_err(|e| e.to_string())?;
        let criticality = criticality_probe(
            &hp,
            Axis::F1,
            &default_deltas(Axis::F1),
            &ProbeOptions::default(),
        )
        .unwrap_or(Criticality::Inconclusive);
        ctx.report.count(&format!("{criticality:?}"), 1);
        hopfs.push(json!({
            "f1_sv": hp.params.f1_sv(),
            "omega_per_yr": hp.omega,
            "period_yr": 2.0 * std::f64::consts::PI / hp.omega,
            "criticality": criticality,
        }));
    }
    ctx.write_json("hopf_points.json", &json!(hopfs))
}

/// Bistability scan: up and down sweeps in F1 disagree between the fold of
/// the periodic branch and the subcritical Hopf point.
fn figure_7b(base: &ModelParams, ctx: &mut RunCtx) -> Result<(), String> {
    let p = base.with_axis(Axis::Sigma, 9.0).with_axis(Axis::Tau, 850.0);
    let values = linspace(-0.216, -0.204, 49);
    let result = hysteresis_scan(&p, Axis::F1, &values, &SweepOptions::default());
    ctx.write_text("up.csv", &branch_csv(&result.up))?;
    ctx.write_text("down.csv", &branch_csv(&result.down))?;
    record_branch(&result.up, ctx);
    record_branch(&result.down, ctx);
    let hopf = locate_hopf_1d(&p, Axis::F1, (-0.215, -0.205)).map_err(|e| e.to_string())?;
    ctx.write_json(
        "hysteresis.json",
        &json!({
            "params": p.to_config(),
            "windows": result.windows,
            "fold_estimate": result.fold_estimate,
            "hopf_f1_sv": hopf.params.f1_sv(),
        }),
    )
}

/// Stability island in the (sigma, tau) plane at fixed F1, plus verdict
/// transects at fixed delays.
fn figure_8(base: &ModelParams, ctx: &mut RunCtx) -> Result<(), String> {
    let p = base
        .with_axis(Axis::F1, -0.22)
        .with_axis(Axis::Sigma, 11.0)
        .with_axis(Axis::Tau, 900.0);
    let start = locate_hopf_1d(&p, Axis::Sigma, (1.0, 8.0)).map_err(|e| e.to_string())?;
    let ctl = StepControl::new((0.0, 40.0), (0.0, 4000.0));
    let mut curve =
        continue_hopf_2d(&start, Axis::Sigma, Axis::Tau, &ctl).map_err(|e| e.to_string())?;
    // Probe along F1: the curve's own plane axes have near-degenerate
    // crossing speeds on the upper branch (|d Re/d sigma| down to ~1e-5
    // per Sv), so their probes stall at the horizon cap, while the F1
    // growth rates are ~30x stronger at the same points.
    tag_curve_criticality(
        &mut curve,
        &p,
        Axis::F1,
        12,
        &default_deltas(Axis::F1),
        &ProbeOptions::default(),
    );
    write_hopf_curve(&curve, &start, "island", ctx)?;
    let sigmas = linspace(0.0, 20.0, 41);
    for tau in [900.0, 1100.0] {
        let pt = p.with_axis(Axis::Tau, tau);
        ctx.write_text(
            &format!("transect_tau{}.csv", tau as i64),
            &verdict_transect(&pt, Axis::Sigma, &sigmas),
        )?;
    }
    let taus = linspace(50.0, 2000.0, 40);
    ctx.write_text(
        "transect_sigma11.csv",
        &verdict_transect(&p, Axis::Tau, &taus),
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_params(dir: &Path) -> PathBuf {
        let path = dir.join("params.json");
        let mut f = std::fs::File::create(&path).unwrap();
        write!(
            f,
            r#"{{"k":23e17,"alpha":1.7e-4,"beta":0.8e-3,"s0":35,"vol":3.5e17,
                "f1_sv":-0.22,"f2_sv":1,"t_star":0,"sigma_sv":11,"tau_yr":900}}"#
        )
        .unwrap();
        path
    }

    fn write_scenario(dir: &Path, text: &str) -> PathBuf {
        let path = dir.join("scenario.json");
        std::fs::write(&path, text).unwrap();
        path
    }

    #[test]
    fn loads_a_sweep_scenario() {
        let tmp = tempfile::tempdir().unwrap();
        write_params(tmp.path());
        let path = write_scenario(
            tmp.path(),
            r#"{"name":"demo","params_file":"params.json","operation":"sweep",
                "options":{"axis":"f1_sv","grid":{"start":-0.24,"stop":-0.20,"count":5}}}"#,
        );
        let sc = load_scenario(&path, None).unwrap();
        assert_eq!(sc.name, "demo");
        assert!(matches!(sc.operation, Operation::Sweep(_)));
    }

    #[test]
    fn rejects_unknown_operation_and_figure() {
        let tmp = tempfile::tempdir().unwrap();
        write_params(tmp.path());
        let path = write_scenario(
            tmp.path(),
            r#"{"name":"x","params_file":"params.json","operation":"dance","options":{}}"#,
        );
        assert!(matches!(
            load_scenario(&path, None),
            Err(ScenarioError::UnknownOperation(_))
        ));
        let path = write_scenario(
            tmp.path(),
            r#"{"name":"x","params_file":"params.json","operation":"figure",
                "options":{"id":"fig99"}}"#,
        );
        assert!(matches!(
            load_scenario(&path, None),
            Err(ScenarioError::UnknownFigure(_))
        ));
    }

    #[test]
    fn rejects_unknown_option_keys() {
        let tmp = tempfile::tempdir().unwrap();
        write_params(tmp.path());
        let path = write_scenario(
            tmp.path(),
            r#"{"name":"x","params_file":"params.json","operation":"simulate",
                "options":{"horizon_yr":10000,"bogus":1}}"#,
        );
        assert!(matches!(
            load_scenario(&path, None),
            Err(ScenarioError::BadOption(_))
        ));
    }

    #[test]
    fn rejects_non_monotone_grid() {
        let grid = Grid::Explicit(vec![-0.2, -0.21, -0.205]);
        assert!(grid.values().is_err());
        let grid = Grid::Explicit(vec![-0.2, -0.21, -0.22]);
        assert!(grid.values().is_ok());
        let grid = Grid::Linspace {
            start: -0.2,
            stop: -0.1,
            count: 1,
        };
        assert!(grid.values().is_err());
    }

    #[test]
    fn missing_params_file_is_a_config_error() {
        let tmp = tempfile::tempdir().unwrap();
        let path = write_scenario(
            tmp.path(),
            r#"{"name":"x","params_file":"nope.json","operation":"equilibria","options":{}}"#,
        );
        assert!(matches!(
            load_scenario(&path, None),
            Err(ScenarioError::Params(_))
        ));
    }

    #[test]
    fn simulate_run_writes_declared_artifacts() {
        let tmp = tempfile::tempdir().unwrap();
        write_params(tmp.path());
        let path = write_scenario(
            tmp.path(),
            r#"{"name":"sim","params_file":"params.json","operation":"simulate",
                "options":{"horizon_yr":3000,"set":{"f1_sv":-0.26}}}"#,
        );
        let sc = load_scenario(&path, None).unwrap();
        let out = run_scenario(&sc, tmp.path()).unwrap();
        assert!(!out.partial_failure);
        for name in &out.report.artifacts {
            assert!(out.out_dir.join(name).is_file(), "{name} missing");
        }
        assert!(out.report.artifacts.contains(&"trajectory.csv".to_string()));
        assert!(out.report.artifacts.contains(&"report.json".to_string()));
        let header = std::fs::read_to_string(out.out_dir.join("trajectory.csv")).unwrap();
        assert!(header.starts_with("t_yr,s1_psu,s2_psu,s3_psu,m_sv\n"));
    }

    #[test]
    fn reruns_are_bit_identical() {
        let tmp = tempfile::tempdir().unwrap();
        write_params(tmp.path());
        let path = write_scenario(
            tmp.path(),
            r#"{"name":"rep","params_file":"params.json","operation":"sweep",
                "options":{"axis":"f1_sv","grid":{"start":-0.26,"stop":-0.25,"count":3},
                           "horizon_yr":5000,"transient_yr":2000,"inherit":false}}"#,
        );
        let sc = load_scenario(&path, None).unwrap();
        let a = run_scenario(&sc, &tmp.path().join("a")).unwrap();
        let b = run_scenario(&sc, &tmp.path().join("b")).unwrap();
        let csv_a = std::fs::read(a.out_dir.join("branch.csv")).unwrap();
        let csv_b = std::fs::read(b.out_dir.join("branch.csv")).unwrap();
        assert_eq!(csv_a, csv_b);
        assert_eq!(a.report.config_sha256, b.report.config_sha256);
    }
}
