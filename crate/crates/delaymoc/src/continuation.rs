//! Pseudo-arclength continuation of Hopf points in a two-parameter plane.
//!
//! The defining system is Re det = Im det = 0 for the characteristic
//! matrix at lambda = i omega, with the equilibrium recomputed from the
//! model at every parameter point (it is independent of sigma and tau, so
//! Hopf curves in that plane live on a fixed equilibrium). Unknowns are
//! the two plane parameters plus omega, all in scaled units to condition
//! the corrector.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::ContinuationError;
use crate::params::{Axis, ModelParams};
use crate::stability::{char_fn, char_residual, linearize, Criticality, HopfPoint};

#[derive(Debug, Clone, Copy, Serialize)]
pub struct HopfCurvePoint {
    /// First plane parameter, external units.
    pub a: f64,
    /// Second plane parameter, external units.
    pub b: f64,
    /// Hopf frequency, yr⁻¹.
    pub omega: f64,
    pub criticality: Criticality,
    /// Normalized characteristic residual after the final correction.
    pub residual: f64,
    /// True where the interpolated criticality changes; candidate
    /// degeneracy (generalized Hopf) locations.
    pub degeneracy_flag: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct HopfCurve {
    pub axis_a: Axis,
    pub axis_b: Axis,
    pub points: Vec<HopfCurvePoint>,
    pub closed_loop: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct StepControl {
    pub ds_init: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    pub max_points: usize,
    /// Inclusive bounds on (a, b) in external units.
    pub a_range: (f64, f64),
    pub b_range: (f64, f64),
}

impl StepControl {
    pub fn new(a_range: (f64, f64), b_range: (f64, f64)) -> Self {
        StepControl {
            ds_init: 0.01,
            ds_min: 1e-4,
            ds_max: 0.1,
            max_points: 4000,
            a_range,
            b_range,
        }
    }
}

/// Scale from external units to the conditioned continuation units.
fn axis_scale(axis: Axis) -> f64 {
    match axis {
        Axis::Tau => 1e-3,    // yr -> kyr
        _ => 1.0,             // Sv and K are already O(1)-O(10)
    }
}

/// omega in yr⁻¹ -> kyr⁻¹.
const OMEGA_SCALE: f64 = 1e3;
/// Characteristic value in yr⁻² -> kyr⁻².
const RESIDUAL_SCALE: f64 = 1e6;

struct HopfSystem<'a> {
    base: &'a ModelParams,
    axis_a: Axis,
    axis_b: Axis,
    sa: f64,
    sb: f64,
}

impl<'a> HopfSystem<'a> {
    fn params_at(&self, u: &[f64; 3]) -> ModelParams {
        self.base
            .with_axis(self.axis_a, u[0] / self.sa)
            .with_axis(self.axis_b, u[1] / self.sb)
    }

    /// Scaled residual (Re, Im) of det(i omega I - J0 - J1 e^(-i omega tau)).
    fn residual(&self, u: &[f64; 3]) -> Option<[f64; 2]> {
        let p = self.params_at(u);
        let (_, lin) = linearize(&p).ok()?;
        let omega = u[2] / OMEGA_SCALE;
        let (v, _) = char_fn(Complex64::new(0.0, omega), &lin);
        Some([v.re * RESIDUAL_SCALE, v.im * RESIDUAL_SCALE])
    }

    fn jacobian(&self, u: &[f64; 3]) -> Option<[[f64; 3]; 3]> {
        let mut j = [[0.0; 3]; 3];
        for col in 0..3 {
            let du = 1e-7 * (1.0 + u[col].abs());
            let mut up = *u;
            let mut um = *u;
            up[col] += du;
            um[col] -= du;
            let rp = self.residual(&up)?;
            let rm = self.residual(&um)?;
            j[0][col] = (rp[0] - rm[0]) / (2.0 * du);
            j[1][col] = (rp[1] - rm[1]) / (2.0 * du);
        }
        Some(j)
    }

    /// Unit tangent of the curve: nullspace of the 2x3 residual Jacobian.
    fn tangent(&self, u: &[f64; 3]) -> Option<[f64; 3]> {
        let j = self.jacobian(u)?;
        let (r0, r1) = (j[0], j[1]);
        let mut t = [
            r0[1] * r1[2] - r0[2] * r1[1],
            r0[2] * r1[0] - r0[0] * r1[2],
            r0[0] * r1[1] - r0[1] * r1[0],
        ];
        let n = (t[0] * t[0] + t[1] * t[1] + t[2] * t[2]).sqrt();
        if n < 1e-14 {
            return None;
        }
        for v in &mut t {
            *v /= n;
        }
        Some(t)
    }

    /// Newton correction onto {residual = 0, arclength constraint}.
    fn correct(&self, pred: &[f64; 3], tangent: &[f64; 3]) -> Option<[f64; 3]> {
        let mut u = *pred;
        for _ in 0..12 {
            let r = self.residual(&u)?;
            let arc: f64 = (0..3).map(|i| (u[i] - pred[i]) * tangent[i]).sum();
            let norm = (r[0] * r[0] + r[1] * r[1] + arc * arc).sqrt();
            if norm < 1e-12 {
                return Some(u);
            }
            let j2 = self.jacobian(&u)?;
            let j = [j2[0], j2[1], *tangent];
            let rhs = [-r[0], -r[1], -arc];
            let du = solve3(&j, &rhs)?;
            for i in 0..3 {
                u[i] += du[i];
            }
            if du.iter().map(|d| d * d).sum::<f64>().sqrt() < 1e-13 {
                let r = self.residual(&u)?;
                let arc: f64 = (0..3).map(|i| (u[i] - pred[i]) * tangent[i]).sum();
                if (r[0] * r[0] + r[1] * r[1] + arc * arc).sqrt() < 1e-9 {
                    return Some(u);
                }
            }
        }
        let r = self.residual(&u)?;
        if (r[0] * r[0] + r[1] * r[1]).sqrt() < 1e-10 {
            Some(u)
        } else {
            None
        }
    }
}

fn solve3(a: &[[f64; 3]; 3], b: &[f64; 3]) -> Option<[f64; 3]> {
    let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    if det.abs() < 1e-300 {
        return None;
    }
    let inv_det = 1.0 / det;
    let x = [
        (b[0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (b[1] * a[2][2] - a[1][2] * b[2])
            + a[0][2] * (b[1] * a[2][1] - a[1][1] * b[2]))
            * inv_det,
        (a[0][0] * (b[1] * a[2][2] - a[1][2] * b[2])
            - b[0] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * b[2] - b[1] * a[2][0]))
            * inv_det,
        (a[0][0] * (a[1][1] * b[2] - b[1] * a[2][1])
            - a[0][1] * (a[1][0] * b[2] - b[1] * a[2][0])
            + b[0] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]))
            * inv_det,
    ];
    Some(x)
}

fn in_bounds(u: &[f64; 3], sys: &HopfSystem, ctl: &StepControl) -> bool {
    let a = u[0] / sys.sa;
    let b = u[1] / sys.sb;
    a >= ctl.a_range.0
        && a <= ctl.a_range.1
        && b >= ctl.b_range.0
        && b <= ctl.b_range.1
        && u[2] > 0.0
}

fn curve_point(sys: &HopfSystem, u: &[f64; 3]) -> HopfCurvePoint {
    let p = sys.params_at(u);
    let omega = u[2] / OMEGA_SCALE;
    let residual = linearize(&p)
        .map(|(_, lin)| char_residual(Complex64::new(0.0, omega), &lin))
        .unwrap_or(f64::NAN);
    HopfCurvePoint {
        a: u[0] / sys.sa,
        b: u[1] / sys.sb,
        omega,
        criticality: Criticality::Untagged,
        residual,
        degeneracy_flag: false,
    }
}

/// March a Hopf curve through the (axis_a, axis_b) plane from a located
/// Hopf point, in both directions, until the domain bounds, a step
/// failure at the minimum step, or loop closure.
pub fn continue_hopf_2d(
    start: &HopfPoint,
    axis_a: Axis,
    axis_b: Axis,
    ctl: &StepControl,
) -> Result<HopfCurve, ContinuationError> {
    let sys = HopfSystem {
        base: &start.params,
        axis_a,
        axis_b,
        sa: axis_scale(axis_a),
        sb: axis_scale(axis_b),
    };
    let u0 = [
        start.params.get_axis(axis_a) * sys.sa,
        start.params.get_axis(axis_b) * sys.sb,
        start.omega * OMEGA_SCALE,
    ];
    match sys.residual(&u0) {
        Some(r) => {
            let n = (r[0] * r[0] + r[1] * r[1]).sqrt();
            if n > 1e-6 {
                return Err(ContinuationError::StartNotOnCurve(n));
            }
        }
        None => return Err(ContinuationError::StartNotOnCurve(f64::NAN)),
    }
    // Polish the start point onto the curve.
    let t0 = sys
        .tangent(&u0)
        .ok_or(ContinuationError::StartNotOnCurve(f64::NAN))?;
    let u0 = sys
        .correct(&u0, &t0)
        .ok_or(ContinuationError::StartNotOnCurve(f64::NAN))?;

    let mut closed = false;
    let march = |dir: f64, closed: &mut bool| -> Vec<[f64; 3]> {
        let mut pts: Vec<[f64; 3]> = Vec::new();
        let mut u = u0;
        let mut tan = t0;
        for v in &mut tan {
            *v *= dir;
        }
        let mut ds = ctl.ds_init;
        while pts.len() < ctl.max_points {
            let t = match sys.tangent(&u) {
                Some(mut t) => {
                    // Keep marching the same way along the curve.
                    let dot: f64 = (0..3).map(|i| t[i] * tan[i]).sum();
                    if dot < 0.0 {
                        for v in &mut t {
                            *v = -*v;
                        }
                    }
                    t
                }
                None => break,
            };
            let pred = [u[0] + ds * t[0], u[1] + ds * t[1], u[2] + ds * t[2]];
            match sys.correct(&pred, &t) {
                Some(next) if in_bounds(&next, &sys, ctl) => {
                    // Loop closure: back at the start after a real excursion.
                    if pts.len() > 20 {
                        let d = ((next[0] - u0[0]).powi(2)
                            + (next[1] - u0[1]).powi(2)
                            + (next[2] - u0[2]).powi(2))
                        .sqrt();
                        if d < ds {
                            *closed = true;
                            break;
                        }
                    }
                    u = next;
                    tan = t;
                    pts.push(u);
                    ds = (ds * 1.3).min(ctl.ds_max);
                }
                _ => {
                    ds *= 0.5;
                    if ds < ctl.ds_min {
                        break;
                    }
                }
            }
        }
        pts
    };

    let forward = march(1.0, &mut closed);
    let backward = if closed {
        Vec::new()
    } else {
        march(-1.0, &mut closed)
    };

    let mut us: Vec<[f64; 3]> = backward.into_iter().rev().collect();
    us.push(u0);
    us.extend(forward);
    let points = us.iter().map(|u| curve_point(&sys, u)).collect();
    Ok(HopfCurve {
        axis_a,
        axis_b,
        points,
        closed_loop: closed,
    })
}

impl HopfCurve {
    /// Hopf point view of curve point `i`, for probing.
    pub fn hopf_point_at(&self, base: &ModelParams, i: usize) -> HopfPoint {
        let pt = &self.points[i];
        HopfPoint {
            params: base
                .with_axis(self.axis_a, pt.a)
                .with_axis(self.axis_b, pt.b),
            omega: pt.omega,
            criticality: pt.criticality,
        }
    }

    /// True when the tagged points contain both criticalities.
    pub fn has_both_criticalities(&self) -> bool {
        let has = |c: Criticality| self.points.iter().any(|p| p.criticality == c);
        has(Criticality::Supercritical) && has(Criticality::Subcritical)
    }
}
