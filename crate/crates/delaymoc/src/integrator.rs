//! Fixed-step method-of-steps integrator for the constant-delay system.
//!
//! The step is adjusted so the delay is an exact integer number of steps,
//! which keeps the delayed lookups needed by the RK4 stages either exactly
//! on the stored grid or exactly halfway between two stored samples.

use crate::error::IntegrateError;
use crate::model::{rhs, transport_m, State};
use crate::params::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum EventKind {
    MSignCrossing,
    NonFinite,
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
}

/// Initial function on [-tau, 0].
#[derive(Debug, Clone)]
pub enum InitialHistory {
    Constant(State),
    /// Uniform samples at the integration step covering [-tau, 0],
    /// oldest first; length must equal tau/h + 1.
    Window(Vec<State>),
}

/// Uniformly sampled solution path. Sample i sits at t = i * h.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub h: f64,
    pub h_requested: f64,
    pub s1: Vec<f64>,
    pub s2: Vec<f64>,
    /// Transport at each sample, m³ yr⁻¹.
    pub m: Vec<f64>,
    pub events: Vec<Event>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.s1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s1.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.h
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.len() - 1)
    }

    pub fn state(&self, i: usize) -> State {
        State::new(self.s1[i], self.s2[i])
    }

    pub fn terminal_state(&self) -> State {
        self.state(self.len() - 1)
    }

    /// True when the run ended early on a non-finite state.
    pub fn escaped(&self) -> bool {
        self.events.iter().any(|e| e.kind == EventKind::NonFinite)
    }

    pub fn first_m_sign_crossing(&self) -> Option<f64> {
        self.events
            .iter()
            .find(|e| e.kind == EventKind::MSignCrossing)
            .map(|e| e.t)
    }

    /// Last n samples as an initial history window for a follow-up run.
    pub fn terminal_window(&self, n: usize) -> Option<InitialHistory> {
        if self.len() < n || self.escaped() {
            return None;
        }
        let start = self.len() - n;
        Some(InitialHistory::Window(
            (start..self.len()).map(|i| self.state(i)).collect(),
        ))
    }
}

/// Ring buffer of the trailing [t - tau, t] window of states.
#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    samples: Vec<State>,
    head: usize,
    /// Time of the newest sample.
    t_now: f64,
    h: f64,
    /// Delay in steps; buffer holds n_tau + 1 samples.
    n_tau: usize,
}

impl HistoryBuffer {
    pub fn new(init: &[State], h: f64, t_now: f64) -> Self {
        HistoryBuffer {
            samples: init.to_vec(),
            head: 0,
            t_now,
            h,
            n_tau: init.len() - 1,
        }
    }

    pub fn t_now(&self) -> f64 {
        self.t_now
    }

    /// Sample at `steps_back` grid points before the newest one.
    fn at(&self, steps_back: usize) -> State {
        debug_assert!(steps_back <= self.n_tau);
        let len = self.samples.len();
        let newest = (self.head + len - 1) % len;
        self.samples[(newest + len - steps_back) % len]
    }

    pub fn push(&mut self, s: State) {
        self.samples[self.head] = s;
        self.head = (self.head + 1) % self.samples.len();
        self.t_now += self.h;
    }

    /// S1 at `t_query`, exact on-grid, linearly interpolated otherwise.
    pub fn delayed_lookup(&self, t_query: f64) -> Result<f64, IntegrateError> {
        let lo = self.t_now - self.n_tau as f64 * self.h;
        let hi = self.t_now;
        let eps = 1e-9 * self.h.max(1.0);
        if t_query < lo - eps || t_query > hi + eps {
            return Err(IntegrateError::QueryOutOfWindow {
                t_query,
                lo,
                hi,
            });
        }
        let back = (hi - t_query) / self.h;
        let i = back.floor().min(self.n_tau as f64);
        let frac = back - i;
        let i = i as usize;
        if frac.abs() < 1e-12 {
            return Ok(self.at(i).s1);
        }
        let newer = self.at(i);
        let older = self.at((i + 1).min(self.n_tau));
        Ok(newer.s1 * (1.0 - frac) + older.s1 * frac)
    }
}

/// Integrates the delay system with classical RK4 over the method of steps.
///
/// When tau > 0 the step is lowered to the nearest exact divisor of the
/// delay. Half-step stage lookups fall mid-grid and use linear
/// interpolation between the bracketing history samples. A transport sign
/// change between consecutive samples is logged as an event but does not
/// alter the dynamics; a non-finite state logs an event and truncates the
/// run.
pub fn integrate(
    p: &ModelParams,
    init: &InitialHistory,
    horizon: f64,
    h_requested: f64,
) -> Result<Trajectory, IntegrateError> {
    if h_requested <= 0.0 || !h_requested.is_finite() {
        return Err(IntegrateError::NonPositiveStep(h_requested));
    }
    if horizon < p.tau {
        return Err(IntegrateError::HorizonTooShort {
            horizon,
            tau: p.tau,
        });
    }
    let (n_tau, h) = step_for_delay(p.tau, h_requested);
    let nsteps = (horizon / h - 1e-9).ceil().max(1.0) as usize;

    let window: Vec<State> = match init {
        InitialHistory::Constant(s) => vec![*s; n_tau + 1],
        InitialHistory::Window(w) => {
            if w.len() != n_tau + 1 {
                return Err(IntegrateError::EventEncountered(format!(
                    "history window has {} samples, expected {}",
                    w.len(),
                    n_tau + 1
                )));
            }
            w.clone()
        }
    };

    let mut buf = HistoryBuffer::new(&window, h, 0.0);
    let mut traj = Trajectory {
        h,
        h_requested,
        s1: Vec::with_capacity(nsteps + 1),
        s2: Vec::with_capacity(nsteps + 1),
        m: Vec::with_capacity(nsteps + 1),
        events: Vec::new(),
    };
    let mut y = *window.last().unwrap();
    let mut m_prev = transport_m(&y, p);
    traj.s1.push(y.s1);
    traj.s2.push(y.s2);
    traj.m.push(m_prev);

    let delayed = p.tau > 0.0;
    for step in 0..nsteps {
        // Delayed S1 at the three stage times of this step. The oldest
        // buffer sample is exactly t - tau; its successor is t - tau + h.
        let (d0, d_mid, d1);
        if delayed {
            let old = buf.at(n_tau).s1;
            let next = buf.at(n_tau - 1).s1;
            d0 = old;
            d_mid = 0.5 * (old + next);
            d1 = next;
        } else {
            d0 = 0.0;
            d_mid = 0.0;
            d1 = 0.0;
        }
        let f = |s: &State, sd: f64| -> (f64, f64) {
            let sdel = if delayed { sd } else { s.s1 };
            rhs(s, sdel, p)
        };
        let k1 = f(&y, d0);
        let y2 = State::new(y.s1 + 0.5 * h * k1.0, y.s2 + 0.5 * h * k1.1);
        let k2 = f(&y2, d_mid);
        let y3 = State::new(y.s1 + 0.5 * h * k2.0, y.s2 + 0.5 * h * k2.1);
        let k3 = f(&y3, d_mid);
        let y4 = State::new(y.s1 + h * k3.0, y.s2 + h * k3.1);
        let k4 = f(&y4, d1);
        y = State::new(
            y.s1 + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
            y.s2 + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
        );
        let t = (step + 1) as f64 * h;
        if !y.is_finite() {
            traj.events.push(Event {
                t,
                kind: EventKind::NonFinite,
            });
            break;
        }
        buf.push(y);
        let m = transport_m(&y, p);
        if m_prev != 0.0 && m != 0.0 && m.signum() != m_prev.signum() {
            traj.events.push(Event {
                t,
                kind: EventKind::MSignCrossing,
            });
        }
        m_prev = m;
        traj.s1.push(y.s1);
        traj.s2.push(y.s2);
        traj.m.push(m);
    }
    Ok(traj)
}

/// Number of delay steps and the adjusted step size.
pub fn step_for_delay(tau: f64, h_requested: f64) -> (usize, f64) {
    if tau <= 0.0 {
        return (0, h_requested);
    }
    let ratio = tau / h_requested;
    let n = if (ratio - ratio.round()).abs() < 1e-9 {
        ratio.round() as usize
    } else {
        ratio.ceil() as usize
    };
    let n = n.max(1);
    (n, tau / n as f64)
}

/// Default integration step: 1 yr, reduced so at least 900 samples span
/// the delay window.
pub fn default_step(tau: f64) -> f64 {
    if tau > 0.0 {
        (tau / 900.0).min(1.0)
    } else {
        1.0
    }
}

/// Richardson order estimate from runs at h, h/2 and h/4.
pub fn convergence_order(
    p: &ModelParams,
    init: &InitialHistory,
    horizon: f64,
    h: f64,
) -> Result<f64, IntegrateError> {
    let run = |step: f64| -> Result<State, IntegrateError> {
        let traj = integrate(p, init, horizon, step)?;
        if !traj.events.is_empty() {
            return Err(IntegrateError::EventEncountered(format!(
                "{:?} at t = {}",
                traj.events[0].kind, traj.events[0].t
            )));
        }
        Ok(traj.terminal_state())
    };
    let y1 = run(h)?;
    let y2 = run(h / 2.0)?;
    let y3 = run(h / 4.0)?;
    let d12 = (y1.s1 - y2.s1).hypot(y1.s2 - y2.s2);
    let d23 = (y2.s1 - y3.s1).hypot(y2.s2 - y3.s2);
    if d23 == 0.0 || d12 == 0.0 {
        // Differences at machine precision; the scheme is as good as exact here.
        return Ok(f64::INFINITY);
    }
    Ok((d12 / d23).log2())
}
