//! Double-well potentials, their structural assumptions, the surface
//! tension constant and the one-dimensional transition profile.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    /// `u²(u−1)²`
    Quartic,
    /// `u⁴(u−1)⁴` (degenerate wells)
    Octic,
    /// `W ≡ 0`
    Zero,
}

/// `W = scale · base(u)` with wells at 0 and 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    pub scale: f64,
    /// `σ = 2∫₀¹ √W`, cached at construction.
    pub sigma: f64,
}

const SIGMA_TOL: f64 = 1e-13;

pub fn make_quartic() -> PotentialSpec {
    make_potential(PotentialKind::Quartic, 1.0).expect("quartic is valid")
}

pub fn make_potential(kind: PotentialKind, scale: f64) -> Result<PotentialSpec> {
    if !(scale.is_finite() && scale >= 0.0) {
        return Err(Error::InvalidParameter(format!("potential scale {scale}")));
    }
    let mut pot = PotentialSpec {
        kind,
        scale,
        sigma: 0.0,
    };
    pot.sigma = compute_sigma(&pot, SIGMA_TOL)?;
    Ok(pot)
}

impl PotentialSpec {
    #[inline]
    pub fn w(&self, u: f64) -> f64 {
        let g = u * (u - 1.0);
        self.scale
            * match self.kind {
                PotentialKind::Quartic => g * g,
                PotentialKind::Octic => (g * g) * (g * g),
                PotentialKind::Zero => 0.0,
            }
    }

    #[inline]
    pub fn dw(&self, u: f64) -> f64 {
        let g = u * (u - 1.0);
        let dg = 2.0 * u - 1.0;
        self.scale
            * match self.kind {
                PotentialKind::Quartic => 2.0 * g * dg,
                PotentialKind::Octic => 4.0 * g * g * g * dg,
                PotentialKind::Zero => 0.0,
            }
    }

    #[inline]
    pub fn d2w(&self, u: f64) -> f64 {
        let g = u * (u - 1.0);
        let dg = 2.0 * u - 1.0;
        self.scale
            * match self.kind {
                PotentialKind::Quartic => 2.0 * dg * dg + 4.0 * g,
                PotentialKind::Octic => 12.0 * g * g * dg * dg + 8.0 * g * g * g,
                PotentialKind::Zero => 0.0,
            }
    }

    pub fn wells(&self) -> [f64; 2] {
        [0.0, 1.0]
    }

    pub fn well_curvatures(&self) -> [f64; 2] {
        [self.d2w(0.0), self.d2w(1.0)]
    }

    /// `∫₀¹ √(2W)`: energy per unit length of the optimal one-dimensional
    /// layer for the `ε|∇u|²/2 + W/ε` normalization, i.e. `σ/√2`.
    pub fn layer_tension(&self) -> f64 {
        self.sigma / std::f64::consts::SQRT_2
    }
}

/// `σ = 2∫₀¹ √W(s) ds` by adaptive Simpson quadrature.
pub fn compute_sigma(pot: &PotentialSpec, quad_tol: f64) -> Result<f64> {
    if !(quad_tol.is_finite() && quad_tol > 0.0) {
        return Err(Error::QuadratureFailure(quad_tol));
    }
    let f = |s: f64| 2.0 * pot.w(s).max(0.0).sqrt();
    adaptive_simpson(&f, 0.0, 1.0, quad_tol).ok_or(Error::QuadratureFailure(quad_tol))
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Option<f64> {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: usize,
    ) -> Option<f64> {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let err = (left + right - whole) / 15.0;
        if err.abs() <= tol && depth >= 3 {
            return Some(left + right + err);
        }
        if depth >= 48 {
            return None;
        }
        Some(rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1)? + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1)?)
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    rec(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, 0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    /// Wells at 0 and 1 are non-degenerate global minimizers.
    pub a1: bool,
    /// Coercivity `W′(u)u ≥ α u²` for `|u| ≥ R`.
    pub a2: bool,
    pub coercivity: (f64, f64),
    /// Growth `|W″(u)| ≲ |u|^{p−2}`; in two dimensions every finite `p` is subcritical.
    pub a3: bool,
    pub growth_exponent: Option<u32>,
}

pub const COERCIVITY_RADIUS: f64 = 2.0;
pub const COERCIVITY_ALPHA: f64 = 1.0;

pub fn check_assumptions(pot: &PotentialSpec) -> AssumptionReport {
    let grid = |lo: f64, hi: f64, n: usize| (0..=n).map(move |k| lo + (hi - lo) * k as f64 / n as f64);

    let [k0, k1] = pot.well_curvatures();
    let wells_zero = pot.w(0.0) == 0.0 && pot.w(1.0) == 0.0;
    let nonneg = grid(-3.0, 4.0, 7000).all(|u| pot.w(u) >= 0.0);
    // strictly positive away from the wells
    let isolated = grid(-3.0, 4.0, 7000)
        .filter(|u| u.abs() > 1e-2 && (u - 1.0).abs() > 1e-2)
        .all(|u| pot.w(u) > 0.0);
    let a1 = wells_zero && nonneg && isolated && k0 > 0.0 && k1 > 0.0;

    let (r, alpha) = (COERCIVITY_RADIUS, COERCIVITY_ALPHA);
    let a2 = grid(r, 10.0 * r, 2000)
        .flat_map(|u| [u, -u])
        .all(|u| pot.dw(u) * u >= alpha * u * u);

    let ratio_ok = |p: u32| {
        let ratio = |u: f64| pot.d2w(u).abs() / u.abs().powi(p as i32 - 2);
        let lower = grid(r, 5.5 * r, 500)
            .flat_map(|u| [u, -u])
            .map(ratio)
            .fold(0.0f64, f64::max);
        let upper = grid(5.5 * r, 10.0 * r, 500)
            .flat_map(|u| [u, -u])
            .map(ratio)
            .fold(0.0f64, f64::max);
        upper <= 1.5 * lower || upper == 0.0
    };
    let growth_exponent = (2..=32).find(|&p| ratio_ok(p));

    AssumptionReport {
        a1,
        a2,
        coercivity: (r, alpha),
        a3: growth_exponent.is_some(),
        growth_exponent,
    }
}

/// Tabulated transition profile `q̃_ε` on `[0, η_ε]`, clamped outside.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileTable {
    pub epsilon: f64,
    pub t: Vec<f64>,
    pub q: Vec<f64>,
    pub eta: f64,
}

impl ProfileTable {
    /// Linear interpolation, `0` for `t ≤ 0` and `1` for `t ≥ η_ε`.
    pub fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if t >= self.eta {
            return 1.0;
        }
        let k = self.t.partition_point(|&s| s <= t);
        let (t0, t1) = (self.t[k - 1], self.t[k]);
        let (q0, q1) = (self.q[k - 1], self.q[k]);
        q0 + (q1 - q0) * (t - t0) / (t1 - t0)
    }

    /// Smallest `t` with `q̃_ε(t) = q`, for `q ∈ [0, 1]`.
    pub fn inverse(&self, q: f64) -> f64 {
        if q <= 0.0 {
            return 0.0;
        }
        if q >= 1.0 {
            return self.eta;
        }
        let k = self.q.partition_point(|&s| s < q);
        let (t0, t1) = (self.t[k - 1], self.t[k]);
        let (q0, q1) = (self.q[k - 1], self.q[k]);
        t0 + (t1 - t0) * (q - q0) / (q1 - q0)
    }

    /// `∫₀^η q̃(1 − q̃) dt` (trapezoidal on the table).
    pub fn layer_mass(&self) -> f64 {
        self.t
            .windows(2)
            .zip(self.q.windows(2))
            .map(|(t, q)| 0.5 * (t[1] - t[0]) * (q[0] * (1.0 - q[0]) + q[1] * (1.0 - q[1])))
            .sum()
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,q\n");
        for (t, q) in self.t.iter().zip(&self.q) {
            s.push_str(&format!("{t:.12e},{q:.12e}\n"));
        }
        s
    }
}

/// Dormand-Prince 5(4) coefficients.
const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One Dormand-Prince step of the autonomous ODE `q′ = f(q)`.
fn dp_step(f: &dyn Fn(f64) -> f64, q: f64, h: f64) -> (f64, f64) {
    let mut k = [0.0; 7];
    for i in 0..7 {
        let mut qi = q;
        for j in 0..i {
            qi += h * DP_A[i][j] * k[j];
        }
        let _ = DP_C[i];
        k[i] = f(qi);
    }
    let q5 = q + h * (0..7).map(|i| DP_B5[i] * k[i]).sum::<f64>();
    let q4 = q + h * (0..7).map(|i| DP_B4[i] * k[i]).sum::<f64>();
    (q5, (q5 - q4).abs())
}

/// Integrates `q̃′ = ε⁻¹ √(ε^{3/2} + 2W(q̃))`, `q̃(0) = 0`, until `q̃ = 1`.
///
/// The table spacing is capped at `ε^{3/2} √(6·step_tol)` so that
/// three-point difference quotients of the table reproduce the right-hand
/// side to `O(step_tol)`; the crossing of 1 is located by bisection on the
/// last step to within `step_tol` in `t`.
pub fn solve_profile(pot: &PotentialSpec, epsilon: f64, step_tol: f64) -> Result<ProfileTable> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(step_tol.is_finite() && step_tol > 0.0) {
        return Err(Error::InvalidParameter(format!("step_tol must be positive, got {step_tol}")));
    }
    let floor = epsilon.powf(1.5);
    let f = move |q: f64| (floor + 2.0 * pot.w(q)).sqrt() / epsilon;
    let min_curv = pot.well_curvatures().iter().copied().fold(f64::INFINITY, f64::min);
    let guard = 10.0 * epsilon.powf(0.25) * (1.0 + 2.0 / min_curv.max(1e-300).sqrt());
    let h_max = floor * (6.0 * step_tol).sqrt();
    let err_tol = 1e-3 * step_tol;

    let mut t = vec![0.0];
    let mut q = vec![0.0];
    let (mut tc, mut qc) = (0.0f64, 0.0f64);
    let mut h = h_max;
    loop {
        if tc > guard {
            return Err(Error::NonTermination(guard));
        }
        let (qn, err) = dp_step(&f, qc, h);
        if err > err_tol && h > 1e-14 * h_max {
            h *= (0.9 * (err_tol / err).powf(0.2)).max(0.2);
            continue;
        }
        if qn >= 1.0 {
            let (mut lo, mut hi) = (0.0, h);
            while hi - lo > step_tol.min(h_max) {
                let mid = 0.5 * (lo + hi);
                if dp_step(&f, qc, mid).0 < 1.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            if lo > 0.0 {
                t.push(tc + lo);
                q.push(dp_step(&f, qc, lo).0);
            }
            let eta = tc + hi;
            t.push(eta);
            q.push(1.0);
            return Ok(ProfileTable {
                epsilon,
                t,
                q,
                eta,
            });
        }
        tc += h;
        qc = qn;
        t.push(tc);
        q.push(qc);
        let grow = if err > 0.0 { 0.9 * (err_tol / err).powf(0.2) } else { 5.0 };
        h = (h * grow.clamp(0.2, 5.0)).min(h_max);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartic_values() {
        let w = make_quartic();
        assert!((w.w(0.5) - 0.0625).abs() < 1e-15);
        assert_eq!(w.dw(0.5), 0.0);
        assert_eq!(w.well_curvatures(), [2.0, 2.0]);
        for k in 0..=40 {
            let u = -1.0 + 0.075 * k as f64;
            let g = u * (u - 1.0) * (2.0 * u - 1.0) * 2.0;
            assert!((w.dw(u) - g).abs() < 1e-12);
            assert!((w.d2w(u) - (12.0 * u * u - 12.0 * u + 2.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for kind in [PotentialKind::Quartic, PotentialKind::Octic] {
            let p = make_potential(kind, 1.7).unwrap();
            for k in 0..30 {
                let u = -0.8 + 0.09 * k as f64;
                let t = 1e-5;
                let fd1 = (p.w(u + t) - p.w(u - t)) / (2.0 * t);
                let fd2 = (p.dw(u + t) - p.dw(u - t)) / (2.0 * t);
                assert!((fd1 - p.dw(u)).abs() < 1e-7 * (1.0 + p.dw(u).abs()));
                assert!((fd2 - p.d2w(u)).abs() < 1e-7 * (1.0 + p.d2w(u).abs()));
            }
        }
    }

    #[test]
    fn sigma_values() {
        let q = make_quartic();
        assert!((compute_sigma(&q, 1e-10).unwrap() - 1.0 / 3.0).abs() < 1e-8);
        let q4 = make_potential(PotentialKind::Quartic, 4.0).unwrap();
        assert!((compute_sigma(&q4, 1e-10).unwrap() - 2.0 / 3.0).abs() < 1e-8);
        assert!(matches!(compute_sigma(&q, 0.0), Err(Error::QuadratureFailure(_))));
    }

    #[test]
    fn sigma_scaling() {
        let base = compute_sigma(&make_quartic(), 1e-12).unwrap();
        for c in [2.0f64, 3.0] {
            let p = make_potential(PotentialKind::Quartic, c * c).unwrap();
            assert!((compute_sigma(&p, 1e-12).unwrap() - c * base).abs() < 1e-6);
        }
        let oct = make_potential(PotentialKind::Octic, 1.0).unwrap();
        let oct9 = make_potential(PotentialKind::Octic, 9.0).unwrap();
        assert!((oct9.sigma - 3.0 * oct.sigma).abs() < 1e-6);
    }

    #[test]
    fn assumption_reports() {
        let r = check_assumptions(&make_quartic());
        assert!(r.a1 && r.a2 && r.a3);
        assert_eq!(r.coercivity, (2.0, 1.0));
        assert_eq!(r.growth_exponent, Some(4));

        let oct = check_assumptions(&make_potential(PotentialKind::Octic, 1.0).unwrap());
        assert!(!oct.a1);
        assert_eq!(oct.growth_exponent, Some(8));

        let zero = check_assumptions(&make_potential(PotentialKind::Zero, 1.0).unwrap());
        assert!(!zero.a1 && !zero.a2);
    }

    #[test]
    fn profile_basic_shape() {
        let pot = make_quartic();
        let eps = 0.05;
        let p = solve_profile(&pot, eps, 1e-7).unwrap();
        assert_eq!(p.q[0], 0.0);
        assert_eq!(*p.q.last().unwrap(), 1.0);
        assert!(p.q.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(p.eval(-1.0), 0.0);
        assert_eq!(p.eval(p.eta + 1.0), 1.0);
        let slope = (p.q[1] - p.q[0]) / (p.t[1] - p.t[0]);
        assert!((slope / eps.powf(-0.25) - 1.0).abs() < 0.01);
        assert!(p.eta <= eps.powf(0.25));
        let t_half = p.inverse(0.5);
        assert!((p.eval(t_half) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn profile_satisfies_its_ode() {
        let pot = make_quartic();
        let step_tol = 1e-6;
        for eps in [0.1, 0.03] {
            let p = solve_profile(&pot, eps, step_tol).unwrap();
            let f = |q: f64| (eps.powf(1.5) + 2.0 * pot.w(q)).sqrt() / eps;
            let mut worst: f64 = 0.0;
            for k in 1..p.len() - 2 {
                let (h1, h2) = (p.t[k] - p.t[k - 1], p.t[k + 1] - p.t[k]);
                let d = (h1 * h1 * p.q[k + 1] - h2 * h2 * p.q[k - 1] - (h1 * h1 - h2 * h2) * p.q[k])
                    / (h1 * h2 * (h1 + h2));
                worst = worst.max((d - f(p.q[k])).abs());
            }
            assert!(worst <= 10.0 * step_tol, "eps {eps}: residual {worst}");
        }
    }

    #[test]
    fn eta_and_layer_mass_decrease() {
        let pot = make_quartic();
        let mut last = (f64::INFINITY, f64::INFINITY);
        for eps in [0.1, 0.05, 0.025, 0.0125] {
            let p = solve_profile(&pot, eps, 1e-6).unwrap();
            assert!(p.eta < last.0);
            assert!(p.layer_mass() < last.1);
            last = (p.eta, p.layer_mass());
        }
    }

    #[test]
    fn zero_potential_terminates_linearly() {
        let z = make_potential(PotentialKind::Zero, 1.0).unwrap();
        let eps: f64 = 0.01;
        let p = solve_profile(&z, eps, 1e-8).unwrap();
        assert!((p.eta - eps.powf(0.25)).abs() < 1e-6);
    }
}
