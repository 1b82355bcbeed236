//! Linear stability of equilibria: linearization, characteristic roots via
//! Chebyshev collocation seeding plus Newton refinement, and 1-D Hopf
//! location by bisection.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::StabilityError;
use crate::model::{positive_equilibrium, salt_closure, transport_m, Equilibrium};
use crate::params::{Axis, ModelParams};

/// J0 is the instantaneous Jacobian; J1 multiplies the delayed state and
/// has its single nonzero entry at (1,1).
#[derive(Debug, Clone, Copy)]
pub struct Linearization {
    pub j0: [[f64; 2]; 2],
    pub j1: [[f64; 2]; 2],
    pub tau: f64,
}

impl Linearization {
    /// Magnitude scale of the linearization, used to normalize residuals.
    pub fn scale(&self) -> f64 {
        let mut s: f64 = 0.0;
        for row in &self.j0 {
            for v in row {
                s = s.max(v.abs());
            }
        }
        s.max(self.j1[0][0].abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Verdict {
    Stable,
    Unstable,
    Marginal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Criticality {
    Supercritical,
    Subcritical,
    Inconclusive,
    Untagged,
}

/// A located Hopf bifurcation.
#[derive(Debug, Clone)]
pub struct HopfPoint {
    pub params: ModelParams,
    /// Hopf frequency, yr⁻¹.
    pub omega: f64,
    pub criticality: Criticality,
}

/// Threshold on Re(lambda) separating the stability verdicts, yr⁻¹.
pub const VERDICT_TOL: f64 = 1e-9;
/// Normalized characteristic residual accepted for refined roots.
pub const ROOT_RESIDUAL_TOL: f64 = 1e-10;
/// |Re(lambda)| at which a Hopf point counts as located, yr⁻¹.
pub const HOPF_RE_TOL: f64 = 1e-10;

/// Analytic Jacobians of the right-hand side about an equilibrium.
pub fn jacobians(eq: &Equilibrium, p: &ModelParams) -> Linearization {
    let s = &eq.state;
    let m = transport_m(s, p);
    let ds = s.s2 - s.s1;
    let g = salt_closure(s, p) - s.s2; // 3 S0 - S1 - 2 S2
    let kb = p.k * p.beta;
    let v = p.vol;
    Linearization {
        j0: [
            [(-kb * ds - m - p.sigma) / v, (kb * ds + m) / v],
            [(-kb * g - m) / v, (kb * g - 2.0 * m) / v],
        ],
        j1: [[p.sigma / v, 0.0], [0.0, 0.0]],
        tau: p.tau,
    }
}

/// Characteristic function det(lambda I - J0 - J1 e^(-lambda tau)) and its
/// lambda-derivative, in closed form for the single delayed entry.
pub fn char_fn(lambda: Complex64, lin: &Linearization) -> (Complex64, Complex64) {
    let a = &lin.j0;
    let b = lin.j1[0][0];
    let e = (-lambda * lin.tau).exp();
    let p = lambda - a[0][0] - b * e;
    let q = lambda - a[1][1];
    let value = p * q - a[0][1] * a[1][0];
    let dp = Complex64::new(1.0, 0.0) + b * lin.tau * e;
    let derivative = dp * q + p;
    (value, derivative)
}

/// Characteristic residual normalized by |lambda|² plus the squared
/// linearization scale.
pub fn char_residual(lambda: Complex64, lin: &Linearization) -> f64 {
    let (v, _) = char_fn(lambda, lin);
    let s = lin.scale();
    v.norm() / (lambda.norm_sqr() + s * s)
}

/// Chebyshev differentiation matrix on [-1, 1] with n points (Trefethen).
fn cheb_diff(n: usize) -> (Vec<f64>, DMatrix<f64>) {
    let nm1 = n - 1;
    let x: Vec<f64> = (0..n)
        .map(|j| (std::f64::consts::PI * j as f64 / nm1 as f64).cos())
        .collect();
    let c = |j: usize| -> f64 {
        let base = if j == 0 || j == nm1 { 2.0 } else { 1.0 };
        if j % 2 == 0 {
            base
        } else {
            -base
        }
    };
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                d[(i, j)] = c(i) / c(j) / (x[i] - x[j]);
            }
        }
    }
    for i in 0..n {
        let mut row_sum = 0.0;
        for j in 0..n {
            if i != j {
                row_sum += d[(i, j)];
            }
        }
        d[(i, i)] = -row_sum;
    }
    (x, d)
}

/// Approximate characteristic roots from a Chebyshev collocation of the
/// solution-operator generator on [-tau, 0], sorted by descending real
/// part. These are seeds; refine with [`rightmost_roots`].
pub fn spectrum_estimate(
    lin: &Linearization,
    n_nodes: usize,
) -> Result<Vec<Complex64>, StabilityError> {
    let a = &lin.j0;
    if lin.tau == 0.0 {
        // No delay: the generator is the 2x2 matrix J0 + J1.
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[
                a[0][0] + lin.j1[0][0],
                a[0][1],
                a[1][0],
                a[1][1] + lin.j1[1][1],
            ],
        );
        let eig = m.complex_eigenvalues();
        let mut out: Vec<Complex64> = eig.iter().copied().collect();
        out.sort_by(|p, q| q.re.partial_cmp(&p.re).unwrap());
        return Ok(out);
    }
    let n = n_nodes.max(8);
    // Node j sits at t_j = tau (x_j - 1) / 2, so x = 1 is t = 0 and
    // x = -1 is t = -tau.
    let (_, d) = cheb_diff(n);
    let dt = d * (2.0 / lin.tau);
    let dim = 2 * n;
    let mut m = DMatrix::zeros(dim, dim);
    for i in 1..n {
        for j in 0..n {
            m[(2 * i, 2 * j)] = dt[(i, j)];
            m[(2 * i + 1, 2 * j + 1)] = dt[(i, j)];
        }
    }
    // Row for the t = 0 node: lambda y(0) = J0 y(0) + J1 y(-tau).
    for r in 0..2 {
        for c in 0..2 {
            m[(r, c)] = a[r][c];
            m[(r, 2 * (n - 1) + c)] += lin.j1[r][c];
        }
    }
    let eig = m.complex_eigenvalues();
    if eig.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(StabilityError::EigensolveFailure);
    }
    let mut out: Vec<Complex64> = eig.iter().copied().collect();
    out.sort_by(|p, q| q.re.partial_cmp(&p.re).unwrap());
    Ok(out)
}

fn newton_refine(seed: Complex64, lin: &Linearization) -> Option<Complex64> {
    let mut l = seed;
    for _ in 0..100 {
        let (v, dv) = char_fn(l, lin);
        if dv.norm() == 0.0 {
            return None;
        }
        let dl = v / dv;
        l -= dl;
        if !l.re.is_finite() || !l.im.is_finite() {
            return None;
        }
        if dl.norm() < 1e-16 * (1.0 + l.norm()) {
            break;
        }
    }
    if char_residual(l, lin) < ROOT_RESIDUAL_TOL {
        Some(l)
    } else {
        None
    }
}

#[derive(Debug, Clone)]
pub struct RootSet {
    /// Refined characteristic roots, descending real part.
    pub roots: Vec<Complex64>,
    pub verdict: Verdict,
}

impl RootSet {
    pub fn max_re(&self) -> f64 {
        self.roots.first().map(|r| r.re).unwrap_or(f64::NAN)
    }

    /// Rightmost root with nonzero imaginary part, if any.
    pub fn rightmost_complex(&self) -> Option<Complex64> {
        self.roots.iter().copied().find(|r| r.im.abs() > 1e-12)
    }

    /// Rightmost purely real root, if any.
    pub fn rightmost_real(&self) -> Option<Complex64> {
        self.roots.iter().copied().find(|r| r.im.abs() <= 1e-12)
    }
}

pub const DEFAULT_COLLOCATION_NODES: usize = 32;

/// Newton-refined rightmost characteristic roots. Seeds that fail to
/// converge are dropped; surviving roots are deduplicated and sorted by
/// descending real part.
pub fn rightmost_roots(lin: &Linearization, n_wanted: usize) -> Result<RootSet, StabilityError> {
    let seeds = spectrum_estimate(lin, DEFAULT_COLLOCATION_NODES)?;
    let scale = lin.scale();
    // Only the right part of the spectrum matters for verdicts.
    let floor = -200.0 * scale.max(1e-6);
    let mut roots: Vec<Complex64> = Vec::new();
    for seed in seeds {
        if seed.re < floor {
            continue;
        }
        if let Some(root) = newton_refine(seed, lin) {
            if !roots.iter().any(|r| (r - root).norm() < 1e-9) {
                roots.push(root);
            }
        }
    }
    roots.sort_by(|p, q| q.re.partial_cmp(&p.re).unwrap());
    roots.truncate(n_wanted.max(1));
    let verdict = match roots.first() {
        Some(r) if r.re > VERDICT_TOL => Verdict::Unstable,
        Some(r) if r.re < -VERDICT_TOL => Verdict::Stable,
        Some(_) => Verdict::Marginal,
        None => return Err(StabilityError::EigensolveFailure),
    };
    Ok(RootSet { roots, verdict })
}

/// Linearization about the m > 0 equilibrium of `p`.
pub fn linearize(p: &ModelParams) -> Result<(Equilibrium, Linearization), StabilityError> {
    let eq = positive_equilibrium(p)?
        .ok_or(StabilityError::NoEquilibrium(p.f1_sv()))?;
    let lin = jacobians(&eq, p);
    Ok((eq, lin))
}

/// Real part of the rightmost complex pair at the given parameter value,
/// plus the pair itself.
fn complex_pair_re(p: &ModelParams, axis: Axis, value: f64) -> Result<Complex64, StabilityError> {
    let pp = p.with_axis(axis, value);
    let (_, lin) = linearize(&pp)?;
    let roots = rightmost_roots(&lin, 12)?;
    roots
        .rightmost_complex()
        .ok_or(StabilityError::RealRootCrossing)
}

/// Locates a Hopf point by bisection on Re(lambda) of the rightmost
/// complex pair over `bracket` on the given axis (external units).
pub fn locate_hopf_1d(
    p: &ModelParams,
    axis: Axis,
    bracket: (f64, f64),
) -> Result<HopfPoint, StabilityError> {
    let (mut lo, mut hi) = bracket;
    let pa = p.with_axis(axis, lo);
    let pb = p.with_axis(axis, hi);
    let (_, lin_a) = linearize(&pa)?;
    let (_, lin_b) = linearize(&pb)?;
    let ra = rightmost_roots(&lin_a, 12)?;
    let rb = rightmost_roots(&lin_b, 12)?;
    if ra.verdict == rb.verdict {
        return Err(StabilityError::NoCrossingInBracket(lo, hi));
    }
    // The crossing must be carried by a complex pair, not a real root.
    let ca = ra
        .rightmost_complex()
        .ok_or(StabilityError::RealRootCrossing)?;
    let cb = rb
        .rightmost_complex()
        .ok_or(StabilityError::RealRootCrossing)?;
    if ca.re.signum() == cb.re.signum() {
        // The verdict flip came from a real root.
        return Err(StabilityError::RealRootCrossing);
    }
    let mut f_lo = ca.re;
    let mut pair = ca;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let c = complex_pair_re(p, axis, mid)?;
        if c.re.abs() < HOPF_RE_TOL {
            return Ok(HopfPoint {
                params: p.with_axis(axis, mid),
                omega: c.im.abs(),
                criticality: Criticality::Untagged,
            });
        }
        if c.re.signum() == f_lo.signum() {
            lo = mid;
            f_lo = c.re;
        } else {
            hi = mid;
        }
        pair = c;
        if (hi - lo).abs() < 1e-15 * lo.abs().max(hi.abs()).max(1.0) {
            break;
        }
    }
    let mid = 0.5 * (lo + hi);
    let c = complex_pair_re(p, axis, mid).unwrap_or(pair);
    if c.re.abs() < 1e-8 {
        // Bracket exhausted at f64 resolution; the pair is as close to the
        // axis as the parameter grid permits.
        return Ok(HopfPoint {
            params: p.with_axis(axis, mid),
            omega: c.im.abs(),
            criticality: Criticality::Untagged,
        });
    }
    Err(StabilityError::NoCrossingInBracket(lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::rhs;
    use crate::params::{ModelParams, SV_TO_M3_PER_YR};

    fn params(f1_sv: f64, sigma_sv: f64, tau: f64) -> ModelParams {
        let mut p = ModelParams::reference_defaults();
        p.f1 = f1_sv * SV_TO_M3_PER_YR;
        p.sigma = sigma_sv * SV_TO_M3_PER_YR;
        p.tau = tau;
        p
    }

    fn eig2(j: [[f64; 2]; 2]) -> (Complex64, Complex64) {
        let tr = j[0][0] + j[1][1];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let disc = Complex64::new(tr * tr - 4.0 * det, 0.0).sqrt();
        (
            (Complex64::new(tr, 0.0) + disc) / 2.0,
            (Complex64::new(tr, 0.0) - disc) / 2.0,
        )
    }

    #[test]
    fn j1_zero_without_feedback() {
        let p = params(-0.22, 0.0, 0.0);
        let (_, lin) = linearize(&p).unwrap();
        assert_eq!(lin.j1[0][0], 0.0);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        // Oracle: central differences of the rhs at the equilibrium.
        let p = params(-0.21, 9.0, 700.0);
        let (eq, lin) = linearize(&p).unwrap();
        let h = 1e-6;
        let s = eq.state;
        let fd = |i: usize, j: usize| -> f64 {
            let mut sp = s;
            let mut sm = s;
            // Instantaneous derivative: the delayed argument stays fixed.
            match j {
                0 => {
                    sp.s1 += h;
                    sm.s1 -= h;
                }
                _ => {
                    sp.s2 += h;
                    sm.s2 -= h;
                }
            }
            let fp = rhs(&sp, s.s1, &p);
            let fm = rhs(&sm, s.s1, &p);
            let fp = [fp.0, fp.1][i];
            let fm = [fm.0, fm.1][i];
            (fp - fm) / (2.0 * h)
        };
        for i in 0..2 {
            for j in 0..2 {
                let a = lin.j0[i][j];
                let b = fd(i, j);
                let denom = a.abs().max(1e-12);
                assert!((a - b).abs() / denom < 1e-6, "({i},{j}): {a} vs {b}");
            }
        }
        // Delayed entry: derivative of rhs w.r.t. the delayed argument.
        let fp = rhs(&s, s.s1 + h, &p);
        let fm = rhs(&s, s.s1 - h, &p);
        let d = (fp.0 - fm.0) / (2.0 * h);
        assert!((d - lin.j1[0][0]).abs() / lin.j1[0][0].abs() < 1e-6);
    }

    #[test]
    fn char_fn_roots_without_delay_are_j0_eigenvalues() {
        let p = params(-0.26, 0.0, 0.0);
        let (_, lin) = linearize(&p).unwrap();
        let (l1, l2) = eig2(lin.j0);
        for l in [l1, l2] {
            let (v, _) = char_fn(l, &lin);
            assert!(v.norm() < 1e-18, "{:e}", v.norm());
        }
    }

    #[test]
    fn char_fn_tau_zero_roots_are_sum_eigenvalues() {
        let mut p = params(-0.26, 9.0, 0.0);
        p.tau = 0.0;
        let (_, lin) = linearize(&p).unwrap();
        let mut j = lin.j0;
        j[0][0] += lin.j1[0][0];
        let (l1, l2) = eig2(j);
        for l in [l1, l2] {
            let (v, _) = char_fn(l, &lin);
            assert!(v.norm() < 1e-18, "{:e}", v.norm());
        }
    }

    #[test]
    fn char_fn_derivative_matches_finite_difference() {
        let p = params(-0.21, 11.0, 900.0);
        let (_, lin) = linearize(&p).unwrap();
        let l = Complex64::new(1e-4, 3e-3);
        let (_, dv) = char_fn(l, &lin);
        let h = Complex64::new(1e-9, 0.0);
        let (vp, _) = char_fn(l + h, &lin);
        let (vm, _) = char_fn(l - h, &lin);
        let fd = (vp - vm) / (2.0 * h);
        assert!((dv - fd).norm() / dv.norm() < 1e-6);
    }

    #[test]
    fn spectrum_matches_ode_limit() {
        let p = params(-0.26, 0.0, 0.0);
        let (_, lin) = linearize(&p).unwrap();
        let est = spectrum_estimate(&lin, DEFAULT_COLLOCATION_NODES).unwrap();
        let (l1, _) = eig2(lin.j0);
        assert!((est[0] - l1).norm() < 1e-8 || (est[1] - l1).norm() < 1e-8);
    }

    #[test]
    fn refined_roots_satisfy_residual() {
        let p = params(-0.21, 11.0, 900.0);
        let (_, lin) = linearize(&p).unwrap();
        let rs = rightmost_roots(&lin, 8).unwrap();
        assert!(!rs.roots.is_empty());
        for r in &rs.roots {
            assert!(char_residual(*r, &lin) < ROOT_RESIDUAL_TOL);
        }
    }

    #[test]
    fn node_doubling_moves_roots_little() {
        let p = params(-0.22, 11.0, 900.0);
        let (_, lin) = linearize(&p).unwrap();
        let refine_with = |n: usize| -> Vec<Complex64> {
            let seeds = spectrum_estimate(&lin, n).unwrap();
            let mut roots: Vec<Complex64> = Vec::new();
            for s in seeds {
                if let Some(r) = newton_refine(s, &lin) {
                    if !roots.iter().any(|q| (q - r).norm() < 1e-9) {
                        roots.push(r);
                    }
                }
            }
            roots.sort_by(|a, b| b.re.partial_cmp(&a.re).unwrap());
            roots.truncate(6);
            roots
        };
        let a = refine_with(32);
        let b = refine_with(64);
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).norm() < 1e-10, "{x} vs {y}");
        }
    }

    #[test]
    fn stable_far_from_bifurcation() {
        let p = params(-0.30, 11.0, 900.0);
        let (_, lin) = linearize(&p).unwrap();
        let rs = rightmost_roots(&lin, 6).unwrap();
        assert_eq!(rs.verdict, Verdict::Stable);
    }

    #[test]
    fn unstable_beyond_undelayed_hopf() {
        let p = params(-0.20, 0.0, 0.0);
        let (_, lin) = linearize(&p).unwrap();
        let rs = rightmost_roots(&lin, 6).unwrap();
        assert_eq!(rs.verdict, Verdict::Unstable);
    }

    #[test]
    fn undelayed_hopf_at_quarter_f2() {
        // With T* = 0 the undelayed Hopf satisfies 4 m² = k beta S0 F2,
        // i.e. F1 = -F2/4 in external units.
        let p = params(-0.3, 0.0, 0.0);
        let hp = locate_hopf_1d(&p, Axis::F1, (-0.30, -0.20)).unwrap();
        assert!(
            (hp.params.f1_sv() + 0.25).abs() < 1e-6,
            "F1* = {}",
            hp.params.f1_sv()
        );
        assert!(hp.omega > 0.0);
    }

    #[test]
    fn delayed_hopf_near_fig4_point() {
        let p = params(-0.3, 11.0, 900.0);
        let hp = locate_hopf_1d(&p, Axis::F1, (-0.25, -0.18)).unwrap();
        let f1 = hp.params.f1_sv();
        assert!(f1 < -0.208 && f1 > -0.215, "F1* = {f1}");
        // Period of the emerging orbit, 2 pi / omega, is millennial.
        let period = 2.0 * std::f64::consts::PI / hp.omega;
        assert!(period > 1800.0 && period < 3000.0, "period = {period}");
    }

    #[test]
    fn no_crossing_reported() {
        let p = params(-0.3, 11.0, 900.0);
        assert!(matches!(
            locate_hopf_1d(&p, Axis::F1, (-0.40, -0.30)),
            Err(StabilityError::NoCrossingInBracket(_, _))
        ));
    }

    #[test]
    fn sigma_and_tau_limits_match_ode_roots() {
        // sigma -> 0 and tau -> 0 must both collapse to 2x2 eigenvalues.
        let p0 = params(-0.26, 0.0, 0.0);
        let (_, lin0) = linearize(&p0).unwrap();
        let (l1, _) = eig2(lin0.j0);

        let p_small_sigma = params(-0.26, 1e-6, 900.0);
        let (_, lin_s) = linearize(&p_small_sigma).unwrap();
        let rs = rightmost_roots(&lin_s, 4).unwrap();
        assert!((rs.roots[0] - l1).norm() < 1e-7 || (rs.roots[0] - l1.conj()).norm() < 1e-7);

        let p_small_tau = params(-0.26, 9.0, 1e-3);
        let (_, lin_t) = linearize(&p_small_tau).unwrap();
        let mut j = lin_t.j0;
        j[0][0] += lin_t.j1[0][0];
        let (m1, _) = eig2(j);
        let rt = rightmost_roots(&lin_t, 4).unwrap();
        assert!((rt.roots[0] - m1).norm() < 1e-7 || (rt.roots[0] - m1.conj()).norm() < 1e-7);
    }
}
