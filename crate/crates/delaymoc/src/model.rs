//! Three-box salinity model: transport law, salt closure, right-hand side
//! and equilibrium solving.
//!
//! The state carries only the two polar salinities; the equatorial box is
//! eliminated through salt conservation and recomputed on demand. Only the
//! m > 0 form of the equations is implemented; sign changes of the
//! transport are the integrator's job to flag.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::params::ModelParams;

/// Salinities of the southern (s1) and northern (s2) polar boxes, psu.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub s1: f64,
    pub s2: f64,
}

impl State {
    pub fn new(s1: f64, s2: f64) -> Self {
        State { s1, s2 }
    }

    pub fn is_finite(&self) -> bool {
        self.s1.is_finite() && self.s2.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    PositiveM,
    NegativeM,
    Degenerate,
}

/// A steady state of the undelayed system. The delayed term vanishes on
/// constant solutions, so equilibria do not depend on sigma or tau.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equilibrium {
    pub state: State,
    pub s3: f64,
    /// Overturning transport at the equilibrium, m³ yr⁻¹.
    pub m: f64,
    pub branch: Branch,
}

/// Volume transport between boxes, m³ yr⁻¹: m = k[beta (S2 - S1) - alpha T*].
pub fn transport_m(s: &State, p: &ModelParams) -> f64 {
    p.k * (p.beta * (s.s2 - s.s1) - p.alpha * p.t_star)
}

/// Equatorial box salinity from salt conservation: S3 = 3 S0 - S1 - S2.
pub fn salt_closure(s: &State, p: &ModelParams) -> f64 {
    3.0 * p.s0 - s.s1 - s.s2
}

/// Time derivatives (psu yr⁻¹) of the two polar salinities, given the
/// delayed southern salinity S1(t - tau).
pub fn rhs(s: &State, s1_delayed: f64, p: &ModelParams) -> (f64, f64) {
    let m = transport_m(s, p);
    let s3 = salt_closure(s, p);
    let d1 = (p.s0 * p.f1 + m * (s.s2 - s.s1) + p.sigma * (s1_delayed - s.s1)) / p.vol;
    let d2 = (-p.s0 * p.f2 + m * (s3 - s.s2)) / p.vol;
    (d1, d2)
}

/// Residual of the steady system in psu yr⁻¹ (delayed term dropped, since
/// it is identically zero on constant solutions).
fn steady_residual(s: &State, p: &ModelParams) -> (f64, f64) {
    let m = transport_m(s, p);
    let s3 = salt_closure(s, p);
    (
        (p.s0 * p.f1 + m * (s.s2 - s.s1)) / p.vol,
        (-p.s0 * p.f2 + m * (s3 - s.s2)) / p.vol,
    )
}

/// Residual scale for convergence tests, psu yr⁻¹.
fn residual_scale(p: &ModelParams) -> f64 {
    let a = (p.s0 * p.f1 / p.vol).abs();
    let b = (p.s0 * p.f2 / p.vol).abs();
    a.max(b).max(1e-6)
}

/// Closed-form m > 0 equilibrium for T* = 0:
/// dS = sqrt(-S0 F1 / (k beta)), m = k beta dS,
/// S2 = (3 S0 + dS - S0 F2 / m) / 3.
///
/// Returns None when no such equilibrium exists (F1 > 0), and the
/// degenerate branch endpoint (dS = m = 0) when F1 = 0.
pub fn equilibrium_closed_form(p: &ModelParams) -> Option<Equilibrium> {
    if p.t_star != 0.0 {
        return None;
    }
    if p.f1 > 0.0 {
        return None;
    }
    if p.f1 == 0.0 {
        let state = State::new(p.s0, p.s0);
        return Some(Equilibrium {
            state,
            s3: p.s0,
            m: 0.0,
            branch: Branch::Degenerate,
        });
    }
    let ds = (-p.s0 * p.f1 / (p.k * p.beta)).sqrt();
    let m = p.k * p.beta * ds;
    let s2 = (3.0 * p.s0 + ds - p.s0 * p.f2 / m) / 3.0;
    let state = State::new(s2 - ds, s2);
    Some(Equilibrium {
        state,
        s3: salt_closure(&state, p),
        m,
        branch: Branch::PositiveM,
    })
}

const NEWTON_MAX_ITER: usize = 100;
const NEWTON_REL_TOL: f64 = 1e-12;
const DAMPING: f64 = 0.5;
const MAX_DAMPING_STEPS: usize = 30;

fn newton_solve(seed: State, p: &ModelParams) -> Option<State> {
    let tol = NEWTON_REL_TOL * residual_scale(p);
    let mut s = seed;
    for _ in 0..NEWTON_MAX_ITER {
        let (g1, g2) = steady_residual(&s, p);
        let norm = g1.hypot(g2);
        if !norm.is_finite() {
            return None;
        }
        if norm < tol {
            return Some(s);
        }
        // Analytic Jacobian of the steady system (times 1/V already applied).
        let m = transport_m(&s, p);
        let ds = s.s2 - s.s1;
        let g = salt_closure(&s, p) - s.s2;
        let kb = p.k * p.beta;
        let j11 = (-kb * ds - m) / p.vol;
        let j12 = (kb * ds + m) / p.vol;
        let j21 = (-kb * g - m) / p.vol;
        let j22 = (kb * g - 2.0 * m) / p.vol;
        let det = j11 * j22 - j12 * j21;
        if det.abs() < 1e-300 {
            return None;
        }
        let dx1 = (g1 * j22 - g2 * j12) / det;
        let dx2 = (g2 * j11 - g1 * j21) / det;
        // Damped update: halve the step until the residual shrinks.
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_DAMPING_STEPS {
            let trial = State::new(s.s1 - lambda * dx1, s.s2 - lambda * dx2);
            let (t1, t2) = steady_residual(&trial, p);
            let tnorm = t1.hypot(t2);
            if tnorm.is_finite() && tnorm < norm {
                s = trial;
                accepted = true;
                break;
            }
            lambda *= DAMPING;
        }
        if !accepted {
            return None;
        }
    }
    let (g1, g2) = steady_residual(&s, p);
    if g1.hypot(g2) < tol {
        Some(s)
    } else {
        None
    }
}

/// All real equilibria of the (m > 0 form of the) model, found by damped
/// Newton from seeds bracketing both transport branches. The returned
/// branch tag records the sign of the transport at the solution; only
/// `PositiveM` entries are steady states of the physical m > 0 model.
pub fn equilibria(p: &ModelParams) -> Result<Vec<Equilibrium>, ModelError> {
    let ds_mag = (p.s0 * p.f1 / (p.k * p.beta)).abs().sqrt();
    let ds_therm = p.alpha * p.t_star / p.beta;
    let seeds = [ds_mag, -ds_mag, ds_therm + 0.1, ds_therm - 0.1];

    let mut found: Vec<Equilibrium> = Vec::new();
    let mut any_converged = false;
    for ds in seeds {
        let m = p.k * (p.beta * ds - p.alpha * p.t_star);
        if m.abs() < 1e-30 * p.k {
            continue;
        }
        let s2 = (3.0 * p.s0 + ds - p.s0 * p.f2 / m) / 3.0;
        let seed = State::new(s2 - ds, s2);
        if !seed.is_finite() {
            continue;
        }
        if let Some(sol) = newton_solve(seed, p) {
            any_converged = true;
            let m_sol = transport_m(&sol, p);
            let dup = found.iter().any(|e| {
                (e.state.s1 - sol.s1).abs() < 1e-8 && (e.state.s2 - sol.s2).abs() < 1e-8
            });
            if !dup {
                let branch = if m_sol > 0.0 {
                    Branch::PositiveM
                } else if m_sol < 0.0 {
                    Branch::NegativeM
                } else {
                    Branch::Degenerate
                };
                found.push(Equilibrium {
                    state: sol,
                    s3: salt_closure(&sol, p),
                    m: m_sol,
                    branch,
                });
            }
        }
    }

    // Degenerate branch endpoint at F1 = 0, T* = 0.
    if p.f1 == 0.0 && p.t_star == 0.0 {
        any_converged = true;
        if let Some(eq) = equilibrium_closed_form(p) {
            found.push(eq);
        }
    }

    if !any_converged {
        // Distinguish "no m > 0 equilibrium exists" from solver stagnation:
        // with T* = 0 and F1 > 0 the positive branch provably does not exist.
        if p.t_star == 0.0 && p.f1 > 0.0 {
            return Ok(Vec::new());
        }
        return Err(ModelError::NoConvergence);
    }

    found.sort_by(|a, b| b.m.partial_cmp(&a.m).unwrap());
    Ok(found)
}

/// The unique m > 0 equilibrium when one exists.
pub fn positive_equilibrium(p: &ModelParams) -> Result<Option<Equilibrium>, ModelError> {
    Ok(equilibria(p)?
        .into_iter()
        .find(|e| e.branch == Branch::PositiveM))
}
