//! Long-run behavior: attractor classification, branch sweeps with state
//! inheritance, hysteresis scanning, and the numerical Hopf criticality
//! probe.

use rayon::prelude::*;
use serde::Serialize;

use crate::continuation::HopfCurve;
use crate::error::AnalysisError;
use crate::integrator::{default_step, integrate, step_for_delay, InitialHistory, Trajectory};
use crate::model::{positive_equilibrium, State};
use crate::params::{Axis, ModelParams};
use crate::stability::{linearize, rightmost_roots, Criticality, HopfPoint, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AttractorKind {
    Steady,
    Periodic,
    Quasiperiodic,
    NonConverged,
    MSignViolated,
}

impl std::fmt::Display for AttractorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AttractorKind::Steady => "steady",
            AttractorKind::Periodic => "periodic",
            AttractorKind::Quasiperiodic => "quasiperiodic",
            AttractorKind::NonConverged => "nonconverged",
            AttractorKind::MSignViolated => "m_sign_violated",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AttractorSummary {
    pub kind: AttractorKind,
    /// max(s1) - min(s1) over the post-transient window, psu.
    pub amplitude: f64,
    pub s1_max: f64,
    /// Mean inter-peak spacing, yr; Periodic only.
    pub period: Option<f64>,
    pub mean_state: State,
}

#[derive(Debug, Clone, Copy)]
pub struct ClassifyTols {
    /// Below this total range the verdict is Steady, psu.
    pub eps_amp: f64,
    /// Coefficient-of-variation bound for the periodicity test.
    pub tol_per: f64,
}

impl Default for ClassifyTols {
    fn default() -> Self {
        ClassifyTols {
            eps_amp: 1e-6,
            tol_per: 1e-3,
        }
    }
}

/// A local maximum of s1 with 3-point quadratic refinement.
struct Peak {
    t: f64,
    height: f64,
}

fn find_peaks(traj: &Trajectory, start_idx: usize) -> Vec<Peak> {
    let s1 = &traj.s1;
    let mut peaks = Vec::new();
    let lo = start_idx.max(1);
    if traj.len() < 3 {
        return peaks;
    }
    for i in lo..traj.len() - 1 {
        if s1[i] > s1[i - 1] && s1[i] >= s1[i + 1] {
            let a = s1[i - 1];
            let b = s1[i];
            let c = s1[i + 1];
            let denom = a - 2.0 * b + c;
            let (dt, height) = if denom.abs() > 0.0 {
                let off = 0.5 * (a - c) / denom;
                (off, b - 0.25 * (a - c) * off)
            } else {
                (0.0, b)
            };
            peaks.push(Peak {
                t: traj.time(i) + dt * traj.h,
                height,
            });
        }
    }
    peaks
}

fn coeff_of_variation(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    if mean.abs() == 0.0 {
        f64::INFINITY
    } else {
        var.sqrt() / mean.abs()
    }
}

/// Fraction of the peak-height range explained by a linear drift in time.
fn drift_fraction(peaks: &[Peak]) -> f64 {
    let n = peaks.len() as f64;
    if peaks.len() < 4 {
        return 0.0;
    }
    let tm = peaks.iter().map(|p| p.t).sum::<f64>() / n;
    let hm = peaks.iter().map(|p| p.height).sum::<f64>() / n;
    let sxy: f64 = peaks.iter().map(|p| (p.t - tm) * (p.height - hm)).sum();
    let sxx: f64 = peaks.iter().map(|p| (p.t - tm) * (p.t - tm)).sum();
    if sxx == 0.0 {
        return 0.0;
    }
    let slope = sxy / sxx;
    let span = peaks.last().unwrap().t - peaks[0].t;
    let range = peaks
        .iter()
        .map(|p| p.height)
        .fold(f64::NEG_INFINITY, f64::max)
        - peaks
            .iter()
            .map(|p| p.height)
            .fold(f64::INFINITY, f64::min);
    if range == 0.0 {
        return 0.0;
    }
    (slope * span).abs() / range
}

/// Classifies the post-transient part of a trajectory.
///
/// An m-sign crossing after the transient dominates every other verdict;
/// a truncated (non-finite) run is NonConverged unless a crossing was
/// seen. Periodicity requires the last 8 peak heights and the last 8
/// inter-peak intervals to each vary by less than `tol_per` (CV).
pub fn classify(
    traj: &Trajectory,
    t_transient: f64,
    tols: &ClassifyTols,
) -> Result<AttractorSummary, AnalysisError> {
    let start_idx = (t_transient / traj.h).ceil() as usize;
    if traj.len() <= start_idx + 16 {
        if !traj.escaped() {
            return Err(AnalysisError::TooFewSamples(
                traj.len().saturating_sub(start_idx),
            ));
        }
    }
    let start_idx = start_idx.min(traj.len().saturating_sub(1));
    let window = &traj.s1[start_idx..];
    let s1_max = window.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s1_min = window.iter().copied().fold(f64::INFINITY, f64::min);
    let amplitude = s1_max - s1_min;
    let n = window.len() as f64;
    let mean_state = State::new(
        window.iter().sum::<f64>() / n,
        traj.s2[start_idx..].iter().sum::<f64>() / n,
    );

    let m_violation = traj
        .events
        .iter()
        .any(|e| e.kind == crate::integrator::EventKind::MSignCrossing && e.t >= t_transient);
    let base = AttractorSummary {
        kind: AttractorKind::NonConverged,
        amplitude,
        s1_max,
        period: None,
        mean_state,
    };
    if m_violation {
        return Ok(AttractorSummary {
            kind: AttractorKind::MSignViolated,
            ..base
        });
    }
    if traj.escaped() {
        return Ok(base);
    }
    if amplitude < tols.eps_amp {
        return Ok(AttractorSummary {
            kind: AttractorKind::Steady,
            ..base
        });
    }
    let peaks = find_peaks(traj, start_idx);
    if peaks.len() >= 9 {
        let heights: Vec<f64> = peaks[peaks.len() - 8..].iter().map(|p| p.height).collect();
        let intervals: Vec<f64> = peaks[peaks.len() - 9..]
            .windows(2)
            .map(|w| w[1].t - w[0].t)
            .collect();
        // CV of heights is measured on the oscillation about the mean
        // level, not the absolute salinity, so shift by the window mean.
        let rel_heights: Vec<f64> = heights.iter().map(|h| h - s1_min).collect();
        let cv_h = coeff_of_variation(&rel_heights);
        let cv_i = coeff_of_variation(&intervals);
        if cv_h < tols.tol_per && cv_i < tols.tol_per {
            let period = intervals.iter().sum::<f64>() / intervals.len() as f64;
            return Ok(AttractorSummary {
                kind: AttractorKind::Periodic,
                period: Some(period),
                ..base
            });
        }
        if peaks.len() >= 16 && cv_h >= 10.0 * tols.tol_per && drift_fraction(&peaks) < 0.5 {
            return Ok(AttractorSummary {
                kind: AttractorKind::Quasiperiodic,
                ..base
            });
        }
    }
    Ok(base)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SweepDirection {
    Up,
    Down,
}

#[derive(Debug, Clone, Serialize)]
pub struct BranchPoint {
    pub value: f64,
    pub summary: Option<AttractorSummary>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BranchData {
    pub axis: Axis,
    pub direction: SweepDirection,
    pub points: Vec<BranchPoint>,
}

#[derive(Debug, Clone, Copy)]
pub struct SweepOptions {
    pub horizon: f64,
    pub transient: f64,
    /// Requested step; adjusted per point so the delay divides it.
    pub h: Option<f64>,
    /// Initial s1 offset from the equilibrium for non-inherited starts, psu.
    pub perturbation: f64,
    pub tols: ClassifyTols,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            horizon: 200_000.0,
            transient: 50_000.0,
            h: None,
            perturbation: 1e-3,
            tols: ClassifyTols::default(),
        }
    }
}

fn perturbed_equilibrium_start(p: &ModelParams, perturbation: f64) -> Result<State, String> {
    match positive_equilibrium(p) {
        Ok(Some(eq)) => Ok(State::new(eq.state.s1 + perturbation, eq.state.s2)),
        Ok(None) => Err("no m>0 equilibrium at this parameter value".to_string()),
        Err(e) => Err(e.to_string()),
    }
}

fn run_point(
    p: &ModelParams,
    init: &InitialHistory,
    opts: &SweepOptions,
) -> Result<(AttractorSummary, Trajectory), String> {
    let h = opts.h.unwrap_or_else(|| default_step(p.tau));
    let traj = integrate(p, init, opts.horizon, h).map_err(|e| e.to_string())?;
    let summary = classify(&traj, opts.transient, &opts.tols).map_err(|e| e.to_string())?;
    Ok((summary, traj))
}

/// One-parameter family of attractor summaries along `values`.
///
/// With `inherit` the initial history of each point is the terminal
/// window of the previous point's trajectory, which tracks a stable
/// branch through folds; without it every point restarts from the local
/// equilibrium plus a small s1 perturbation, and points run in parallel.
pub fn sweep(
    p0: &ModelParams,
    axis: Axis,
    values: &[f64],
    inherit: bool,
    opts: &SweepOptions,
) -> BranchData {
    let direction = if values.len() >= 2 && values[1] < values[0] {
        SweepDirection::Down
    } else {
        SweepDirection::Up
    };
    let points = if inherit {
        let mut points = Vec::with_capacity(values.len());
        let mut prev: Option<Trajectory> = None;
        for &v in values {
            let p = p0.with_axis(axis, v);
            let h = opts.h.unwrap_or_else(|| default_step(p.tau));
            let (n_tau, _) = step_for_delay(p.tau, h);
            let init = prev
                .as_ref()
                .and_then(|t| t.terminal_window(n_tau + 1))
                .map(Ok)
                .unwrap_or_else(|| {
                    perturbed_equilibrium_start(&p, opts.perturbation)
                        .map(InitialHistory::Constant)
                });
            let point = match init {
                Ok(init) => match run_point(&p, &init, opts) {
                    Ok((summary, traj)) => {
                        if !traj.escaped() {
                            prev = Some(traj);
                        }
                        BranchPoint {
                            value: v,
                            summary: Some(summary),
                            error: None,
                        }
                    }
                    Err(e) => BranchPoint {
                        value: v,
                        summary: None,
                        error: Some(e),
                    },
                },
                Err(e) => BranchPoint {
                    value: v,
                    summary: None,
                    error: Some(e),
                },
            };
            points.push(point);
        }
        points
    } else {
        values
            .par_iter()
            .map(|&v| {
                let p = p0.with_axis(axis, v);
                match perturbed_equilibrium_start(&p, opts.perturbation)
                    .map(InitialHistory::Constant)
                    .and_then(|init| run_point(&p, &init, opts))
                {
                    Ok((summary, _)) => BranchPoint {
                        value: v,
                        summary: Some(summary),
                        error: None,
                    },
                    Err(e) => BranchPoint {
                        value: v,
                        summary: None,
                        error: Some(e),
                    },
                }
            })
            .collect()
    };
    BranchData {
        axis,
        direction,
        points,
    }
}

/// Amplitude below which a Periodic verdict is treated as the near-Hopf
/// numerical-noise response of a marginally stable focus rather than a
/// macroscopic orbit (observed noise floor ≤ 5e-4 psu; real branches
/// start around 0.1 psu).
pub const LARGE_AMP_FLOOR: f64 = 1e-2;

/// Bracket (last Periodic value, first non-Periodic value) where a stable
/// large-amplitude periodic branch stops being observed. The far side is
/// Quasiperiodic when a torus attractor is resolvable; otherwise the
/// quasiperiodic transient escapes through an m-sign violation or blow-up
/// and shows up as MSignViolated/NonConverged.
pub fn periodic_branch_end(branch: &BranchData) -> Option<(f64, f64)> {
    for w in branch.points.windows(2) {
        let a = w[0].summary;
        let b = w[1].summary;
        let on_branch = matches!(a, Some(s) if s.kind == AttractorKind::Periodic
            && s.amplitude >= LARGE_AMP_FLOOR);
        let off_branch = matches!(
            b.map(|s| s.kind),
            Some(AttractorKind::Quasiperiodic)
                | Some(AttractorKind::MSignViolated)
                | Some(AttractorKind::NonConverged)
        );
        if on_branch && off_branch {
            return Some((w[0].value, w[1].value));
        }
    }
    None
}

#[derive(Debug, Clone, Serialize)]
pub struct HysteresisResult {
    pub up: BranchData,
    pub down: BranchData,
    /// Maximal parameter intervals where up and down sweeps disagree.
    pub windows: Vec<(f64, f64)>,
    /// Lower edge of the window where the large-amplitude periodic
    /// solution persists below the Hopf point.
    pub fold_estimate: Option<f64>,
}

fn points_disagree(a: &BranchPoint, b: &BranchPoint, eps_amp: f64) -> bool {
    match (&a.summary, &b.summary) {
        (Some(x), Some(y)) => {
            x.kind != y.kind || (x.amplitude - y.amplitude).abs() > 10.0 * eps_amp
        }
        (None, None) => false,
        _ => true,
    }
}

/// Up- and down-sweep with inheritance; disagreement marks bistability.
pub fn hysteresis_scan(
    p0: &ModelParams,
    axis: Axis,
    values: &[f64],
    opts: &SweepOptions,
) -> HysteresisResult {
    let mut desc: Vec<f64> = values.to_vec();
    desc.reverse();
    let (up, down_rev) = rayon::join(
        || sweep(p0, axis, values, true, opts),
        || sweep(p0, axis, &desc, true, opts),
    );
    let mut down = down_rev;
    down.points.reverse();

    let mut windows = Vec::new();
    let mut open: Option<usize> = None;
    for i in 0..values.len() {
        let disagree = points_disagree(&up.points[i], &down.points[i], opts.tols.eps_amp);
        match (disagree, open) {
            (true, None) => open = Some(i),
            (false, Some(s)) => {
                windows.push((values[s], values[i - 1]));
                open = None;
            }
            _ => {}
        }
    }
    if let Some(s) = open {
        windows.push((values[s], *values.last().unwrap()));
    }

    // Fold of periodic orbits: the smallest parameter value where the
    // down sweep still carries a large-amplitude periodic solution while
    // the up sweep sits on the steady branch (possibly dressed in the
    // sub-floor noise oscillation of a weakly damped focus).
    let fold_estimate = (0..values.len())
        .find(|&i| {
            let down_periodic = matches!(down.points[i].summary,
                Some(s) if s.kind == AttractorKind::Periodic && s.amplitude >= LARGE_AMP_FLOOR);
            let up_steady = matches!(up.points[i].summary,
                Some(s) if s.amplitude < LARGE_AMP_FLOOR);
            down_periodic && up_steady
        })
        .map(|i| values[i]);

    HysteresisResult {
        up,
        down,
        windows,
        fold_estimate,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ProbeOptions {
    /// Integration chunk length, yr.
    pub chunk: f64,
    /// Give up extending a probe run past this horizon, yr.
    pub max_horizon: f64,
    /// Initial s1 offset from the equilibrium, psu.
    pub perturbation: f64,
    pub tols: ClassifyTols,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            chunk: 200_000.0,
            max_horizon: 5_000_000.0,
            perturbation: 1e-4,
            tols: ClassifyTols::default(),
        }
    }
}

pub const DEFAULT_PROBE_DELTAS: [f64; 4] = [1e-4, 2e-4, 4e-4, 8e-4];

#[derive(Debug, Clone, Copy)]
enum ProbeOutcome {
    /// Settled on a bounded attractor with this s1 amplitude.
    Settled(f64),
    /// Left the m > 0 regime or blew up.
    Escaped,
    /// Hit the horizon cap before settling or escaping.
    Undecided,
}

fn probe_one(p: &ModelParams, opts: &ProbeOptions) -> Result<ProbeOutcome, String> {
    let start = perturbed_equilibrium_start(p, opts.perturbation)?;
    let h = default_step(p.tau);
    let (n_tau, _) = step_for_delay(p.tau, h);
    let mut init = InitialHistory::Constant(start);
    let mut elapsed = 0.0;
    let mut last_amp: Option<f64> = None;
    while elapsed < opts.max_horizon {
        let chunk = opts.chunk.max(p.tau * 2.0);
        let traj = integrate(p, &init, chunk, h).map_err(|e| e.to_string())?;
        elapsed += chunk;
        let summary = classify(&traj, chunk * 0.25, &opts.tols).map_err(|e| e.to_string())?;
        match summary.kind {
            AttractorKind::MSignViolated => return Ok(ProbeOutcome::Escaped),
            AttractorKind::Periodic | AttractorKind::Quasiperiodic => {
                if let Some(prev) = last_amp {
                    if (summary.amplitude - prev).abs() <= 1e-3 * prev.abs().max(1e-12) {
                        return Ok(ProbeOutcome::Settled(summary.amplitude));
                    }
                }
                last_amp = Some(summary.amplitude);
            }
            AttractorKind::Steady => {
                // On the unstable side a Steady verdict means growth is
                // slower than the chunk resolves; keep integrating.
                last_amp = Some(summary.amplitude);
            }
            AttractorKind::NonConverged => {
                if traj.escaped() {
                    return Ok(ProbeOutcome::Escaped);
                }
                last_amp = Some(summary.amplitude);
            }
        }
        match traj.terminal_window(n_tau + 1) {
            Some(w) => init = w,
            None => return Ok(ProbeOutcome::Escaped),
        }
    }
    Ok(ProbeOutcome::Undecided)
}

/// Classifies Hopf criticality by integrating on the unstable side at a
/// ladder of parameter offsets.
///
/// Supercritical: bounded periodic attractors whose amplitude follows the
/// square-root law in the offset (smallest/largest ratio within 30% of
/// sqrt(delta ratio)). Subcritical: the smallest offset escapes, or the
/// amplitude refuses to shrink with the offset (jump to a remote
/// attractor). Anything else is Inconclusive.
pub fn criticality_probe(
    hopf: &HopfPoint,
    axis: Axis,
    deltas: &[f64],
    opts: &ProbeOptions,
) -> Result<Criticality, AnalysisError> {
    let (_, lin) = linearize(&hopf.params).map_err(|e| AnalysisError::Integrate(
        crate::error::IntegrateError::EventEncountered(e.to_string()),
    ))?;
    let roots = rightmost_roots(&lin, 8).map_err(|e| {
        AnalysisError::Integrate(crate::error::IntegrateError::EventEncountered(e.to_string()))
    })?;
    let re = roots.rightmost_complex().map(|c| c.re).unwrap_or(f64::NAN);
    if !(re.abs() < 1e-8) {
        return Err(AnalysisError::HopfNotVerified(re.abs()));
    }

    let mut deltas: Vec<f64> = deltas.to_vec();
    deltas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let v0 = hopf.params.get_axis(axis);
    let d_ref = *deltas.last().unwrap();

    // Which side of the Hopf point is unstable for this axis.
    let side_of = |s: f64| -> Option<Verdict> {
        let p = hopf.params.with_axis(axis, v0 + s * d_ref);
        linearize(&p)
            .and_then(|(_, lin)| rightmost_roots(&lin, 6))
            .ok()
            .map(|r| r.verdict)
    };
    let side = match (side_of(1.0), side_of(-1.0)) {
        (Some(Verdict::Unstable), _) => 1.0,
        (_, Some(Verdict::Unstable)) => -1.0,
        _ => return Ok(Criticality::Inconclusive),
    };

    let outcomes: Vec<(f64, Result<ProbeOutcome, String>)> = deltas
        .par_iter()
        .map(|&d| {
            let p = hopf.params.with_axis(axis, v0 + side * d);
            (d, probe_one(&p, opts))
        })
        .collect();

    let mut settled: Vec<(f64, f64)> = Vec::new();
    let mut smallest_escaped = false;
    let mut any_escaped = false;
    for (i, (d, out)) in outcomes.iter().enumerate() {
        match out {
            Ok(ProbeOutcome::Settled(a)) => settled.push((*d, *a)),
            Ok(ProbeOutcome::Escaped) => {
                any_escaped = true;
                if i == 0 {
                    smallest_escaped = true;
                }
            }
            Ok(ProbeOutcome::Undecided) | Err(_) => {}
        }
    }
    if smallest_escaped {
        return Ok(Criticality::Subcritical);
    }
    if settled.len() >= 2 {
        let (d_min, a_min) = settled[0];
        let (d_max, a_max) = *settled.last().unwrap();
        if a_max > 0.0 {
            let expected = (d_min / d_max).sqrt();
            let ratio = a_min / a_max;
            if (ratio / expected - 1.0).abs() <= 0.30 {
                return Ok(Criticality::Supercritical);
            }
            // No shrink toward the bifurcation: the orbit reached is a
            // remote attractor, the signature of a subcritical Hopf.
            if ratio >= 0.5 {
                return Ok(Criticality::Subcritical);
            }
        }
        return Ok(Criticality::Inconclusive);
    }
    if any_escaped && settled.is_empty() {
        return Ok(Criticality::Subcritical);
    }
    Ok(Criticality::Inconclusive)
}

/// Tags criticality along a Hopf curve by probing every `stride`-th point
/// (plus the endpoints), bisecting once between conclusive neighbors that
/// disagree, and assigning each remaining point the tag of the nearest
/// conclusive probe. Points where the assigned tag flips are flagged as
/// degeneracy candidates.
pub fn tag_curve_criticality(
    curve: &mut HopfCurve,
    base: &ModelParams,
    probe_axis: Axis,
    stride: usize,
    deltas: &[f64],
    opts: &ProbeOptions,
) {
    let n = curve.points.len();
    if n == 0 || stride == 0 {
        return;
    }
    let conclusive =
        |c: Criticality| matches!(c, Criticality::Supercritical | Criticality::Subcritical);
    let probed: Vec<(usize, Criticality)> = {
        let probe = |i: usize| -> Criticality {
            let hp = curve.hopf_point_at(base, i);
            criticality_probe(&hp, probe_axis, deltas, opts)
                .unwrap_or(Criticality::Inconclusive)
        };
        let mut idxs: Vec<usize> = (0..n).step_by(stride).collect();
        if *idxs.last().unwrap() != n - 1 {
            idxs.push(n - 1);
        }
        let mut tags: Vec<(usize, Criticality)> =
            idxs.par_iter().map(|&i| (i, probe(i))).collect();
        let midpoints: Vec<usize> = tags
            .windows(2)
            .filter(|w| {
                let ((i, a), (j, b)) = (w[0], w[1]);
                conclusive(a) && conclusive(b) && a != b && j > i + 1
            })
            .map(|w| (w[0].0 + w[1].0) / 2)
            .collect();
        tags.par_extend(midpoints.par_iter().map(|&i| (i, probe(i))));
        tags.sort_by_key(|t| t.0);
        tags.into_iter().filter(|(_, c)| conclusive(*c)).collect()
    };
    for (i, pt) in curve.points.iter_mut().enumerate() {
        pt.criticality = probed
            .iter()
            .min_by_key(|(j, _)| (*j as isize - i as isize).abs())
            .map(|(_, c)| *c)
            .unwrap_or(Criticality::Inconclusive);
    }
    for i in 1..n {
        if curve.points[i].criticality != curve.points[i - 1].criticality {
            curve.points[i].degeneracy_flag = true;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stability::locate_hopf_1d;

    fn params(f1_sv: f64, sigma_sv: f64, tau: f64) -> ModelParams {
        ModelParams::reference_defaults()
            .with_axis(Axis::F1, f1_sv)
            .with_axis(Axis::Sigma, sigma_sv)
            .with_axis(Axis::Tau, tau)
    }

    fn classify_at(p: &ModelParams, horizon: f64, transient: f64) -> AttractorSummary {
        let start = perturbed_equilibrium_start(p, 1e-3).unwrap();
        let traj = integrate(p, &InitialHistory::Constant(start), horizon, default_step(p.tau)).unwrap();
        classify(&traj, transient, &ClassifyTols::default()).unwrap()
    }

    #[test]
    fn steady_verdict_at_linearly_stable_point() {
        let s = classify_at(&params(-0.23, 11.0, 900.0), 200_000.0, 50_000.0);
        assert_eq!(s.kind, AttractorKind::Steady);
        assert!(s.amplitude < 1e-6, "amplitude {:e}", s.amplitude);
    }

    #[test]
    fn millennial_oscillation_is_periodic() {
        let s = classify_at(&params(-0.208, 11.0, 900.0), 200_000.0, 50_000.0);
        assert_eq!(s.kind, AttractorKind::Periodic);
        let period = s.period.unwrap();
        assert!(period >= 1800.0 && period <= 10_000.0, "period {period}");
        assert!(s.amplitude > LARGE_AMP_FLOOR);
    }

    #[test]
    fn classification_invariant_to_horizon_doubling() {
        for (p, expect) in [
            (params(-0.23, 11.0, 900.0), AttractorKind::Steady),
            (params(-0.208, 11.0, 900.0), AttractorKind::Periodic),
        ] {
            let a = classify_at(&p, 200_000.0, 50_000.0);
            let b = classify_at(&p, 400_000.0, 50_000.0);
            assert_eq!(a.kind, expect);
            assert_eq!(a.kind, b.kind);
        }
    }

    fn synthetic_branch(points: &[(f64, AttractorKind, f64)]) -> BranchData {
        BranchData {
            axis: Axis::F1,
            direction: SweepDirection::Up,
            points: points
                .iter()
                .map(|&(value, kind, amplitude)| BranchPoint {
                    value,
                    summary: Some(AttractorSummary {
                        kind,
                        amplitude,
                        s1_max: 35.0 + amplitude,
                        period: (kind == AttractorKind::Periodic).then_some(2000.0),
                        mean_state: State::new(35.0, 35.0),
                    }),
                    error: None,
                })
                .collect(),
        }
    }

    #[test]
    fn branch_end_ignores_subfloor_oscillations() {
        use AttractorKind::*;
        // A sub-floor Periodic -> NonConverged transition (decaying /
        // noise-level transients near the Hopf point) must not be taken
        // for the end of the macroscopic branch.
        let branch = synthetic_branch(&[
            (-0.30, Periodic, 1e-4),
            (-0.29, NonConverged, 2e-4),
            (-0.28, Periodic, 0.15),
            (-0.27, Periodic, 0.16),
            (-0.26, Quasiperiodic, 0.30),
            (-0.25, NonConverged, 0.0),
        ]);
        assert_eq!(periodic_branch_end(&branch), Some((-0.27, -0.26)));
    }

    #[test]
    fn branch_end_absent_without_large_orbits() {
        use AttractorKind::*;
        let branch = synthetic_branch(&[
            (-0.30, Steady, 1e-9),
            (-0.29, Periodic, 1e-4),
            (-0.28, NonConverged, 0.0),
        ]);
        assert_eq!(periodic_branch_end(&branch), None);
    }

    #[test]
    fn hysteresis_windows_empty_in_monostable_regime() {
        let p = params(-0.26, 11.0, 900.0);
        let values: Vec<f64> = (0..5).map(|i| -0.26 + 0.0025 * i as f64).collect();
        let res = hysteresis_scan(&p, Axis::F1, &values, &SweepOptions::default());
        assert!(res.windows.is_empty(), "windows {:?}", res.windows);
        assert!(res.fold_estimate.is_none());
    }

    #[test]
    fn undelayed_hopf_is_subcritical() {
        let p = params(-0.26, 0.0, 900.0);
        let hopf = locate_hopf_1d(&p, Axis::F1, (-0.26, -0.24)).unwrap();
        assert!((hopf.params.f1_sv() + 0.25).abs() < 1e-3);
        let c = criticality_probe(&hopf, Axis::F1, &DEFAULT_PROBE_DELTAS, &ProbeOptions::default())
            .unwrap();
        assert_eq!(c, Criticality::Subcritical);
    }
}
