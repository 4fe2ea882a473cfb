//! Radially symmetric auxiliary problems in `N` dimensions.
//!
//! The ball problem `−d_u ΔV = f(V)` in `B_σ`, `V = 0` on the sphere, is
//! solved by shooting from the centre. The annulus problem on `ρ < r < R`
//! with `ζ(ρ) = 0`, `ζ'(R) = 0` is solved by evolving the supersolution 1
//! until the flow stops, which selects the maximal solution.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::banded::BandMatrix;
use crate::error::{Error, Result};
use crate::growth::GrowthFn;
use crate::radau::{Radau5, RadauOptions, StiffSystem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialConfig {
    #[serde(rename = "N")]
    pub dim: usize,
    pub rho: f64,
    #[serde(rename = "R")]
    pub big_r: f64,
    pub sigma: f64,
    pub d_u: f64,
    pub growth: GrowthFn,
    /// Mesh spacing for the annulus relaxation.
    pub spacing: f64,
}

impl RadialConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.dim < 1 {
            errs.push("dimension N must be at least 1".to_string());
        }
        if !(self.rho > 0.0 && self.rho < self.big_r) {
            errs.push(format!("annulus requires 0 < rho < R, got rho = {}, R = {}", self.rho, self.big_r));
        }
        if !(self.sigma > 0.0) {
            errs.push(format!("ball radius sigma must be positive, got {}", self.sigma));
        }
        if !(self.d_u > 0.0) {
            errs.push(format!("d_u must be positive, got {}", self.d_u));
        }
        if !(self.spacing > 0.0 && self.spacing < self.big_r - self.rho) {
            errs.push(format!("spacing must lie in (0, R − rho), got {}", self.spacing));
        }
        errs
    }

    fn check_annulus(&self) -> Result<()> {
        let errs = self.violations();
        let errs: Vec<_> = errs.into_iter().filter(|e| !e.contains("sigma")).collect();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Domain(errs.join("; ")))
        }
    }
}

/// Radial profile samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub r: Vec<f64>,
    pub value: Vec<f64>,
}

impl RadialProfile {
    pub fn write_csv(&self, path: &Path, column: &str) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "r,{column}")?;
        for (r, v) in self.r.iter().zip(&self.value) {
            writeln!(w, "{r:.16e},{v:.16e}")?;
        }
        w.flush()?;
        Ok(())
    }
}

// Dormand–Prince 5(4) coefficients
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B_ERR: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Outcome of one shot in deficit variables `Y = 1 − V`.
struct Shot {
    /// Radius where `V` first reaches 0, if it does before `σ`.
    hit: Option<f64>,
    v_sigma: f64,
    samples: Vec<f64>,
}

/// Shoots `Y'' = f(1 − Y)/d_u − (N−1) Y'/r` from `Y(0) = ε`, sampling `V` at `out`.
fn shoot(cfg: &RadialConfig, eps: f64, out: &[f64]) -> Result<Shot> {
    let g = &cfg.growth;
    let d_u = cfg.d_u;
    let nm1 = (cfg.dim - 1) as f64;
    let sigma = cfg.sigma;
    let rhs = |r: f64, y: [f64; 2]| [y[1], g.f_at_deficit(y[0]) / d_u - nm1 * y[1] / r];
    // series start: Y''(0) = f(m)/(N d_u)
    let r0 = 1e-6 * sigma;
    let ypp0 = g.f_at_deficit(eps) / (cfg.dim as f64 * d_u);
    let mut r = r0;
    let mut y = [eps + 0.5 * ypp0 * r0 * r0, ypp0 * r0];
    let rtol = 1e-11;
    let atol = [1e-13 * eps.max(1e-300), 1e-13 * eps.max(1e-300)];
    let mut h = 1e-3 * sigma;
    let h_max = sigma / 200.0;
    let mut samples = Vec::with_capacity(out.len());
    let mut next_out = 0;
    while next_out < out.len() && out[next_out] <= r0 {
        samples.push(1.0 - eps);
        next_out += 1;
    }
    let mut k1 = rhs(r, y);
    let mut steps = 0usize;
    while r < sigma {
        steps += 1;
        if steps > 2_000_000 {
            return Err(Error::IntegrationFailure("shooting exceeded the step budget".into()));
        }
        h = h.min(h_max).min(sigma - r);
        let mut k = [[0.0; 2]; 7];
        k[0] = k1;
        for s in 1..7 {
            let mut ys = y;
            for (j, kj) in k.iter().enumerate().take(s) {
                ys[0] += h * A[s][j] * kj[0];
                ys[1] += h * A[s][j] * kj[1];
            }
            k[s] = rhs(r + C[s] * h, ys);
        }
        let mut y_new = y;
        for (j, kj) in k.iter().enumerate().take(6) {
            y_new[0] += h * A[6][j] * kj[0];
            y_new[1] += h * A[6][j] * kj[1];
        }
        let mut err = 0.0f64;
        for i in 0..2 {
            let e: f64 = (0..7).map(|j| B_ERR[j] * k[j][i]).sum::<f64>() * h;
            let sc = atol[i] + rtol * y[i].abs().max(y_new[i].abs());
            err = err.max((e / sc).abs());
        }
        if !err.is_finite() {
            return Err(Error::IntegrationFailure(format!("non-finite shooting state at r = {r}")));
        }
        if err <= 1.0 {
            let r_new = r + h;
            let f_new = k[6];
            // cubic Hermite between (r, y, k1) and (r_new, y_new, f_new)
            let herm = |s: f64, comp: usize| {
                let (h00, h10, h01, h11) = (
                    2.0 * s * s * s - 3.0 * s * s + 1.0,
                    s * s * s - 2.0 * s * s + s,
                    -2.0 * s * s * s + 3.0 * s * s,
                    s * s * s - s * s,
                );
                h00 * y[comp] + h10 * h * k1[comp] + h01 * y_new[comp] + h11 * h * f_new[comp]
            };
            if y_new[0] >= 1.0 {
                let (mut lo, mut hi) = (0.0, 1.0);
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    if herm(mid, 0) < 1.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let r_hit = r + 0.5 * (lo + hi) * h;
                return Ok(Shot { hit: Some(r_hit), v_sigma: 0.0, samples });
            }
            while next_out < out.len() && out[next_out] <= r_new {
                let s = (out[next_out] - r) / h;
                samples.push(1.0 - herm(s, 0));
                next_out += 1;
            }
            r = r_new;
            y = y_new;
            k1 = f_new;
        }
        let fac = (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);
        h *= fac;
        if h < 1e-14 * sigma {
            return Err(Error::IntegrationFailure(format!("shooting step underflow at r = {r}")));
        }
    }
    while samples.len() < out.len() {
        samples.push(1.0 - y[0]);
    }
    Ok(Shot { hit: None, v_sigma: 1.0 - y[0], samples })
}

/// Signed mismatch: `V(σ)` if `V` stays positive, else `−(σ − r_hit)`.
fn mismatch(cfg: &RadialConfig, eps: f64) -> Result<f64> {
    let s = shoot(cfg, eps, &[])?;
    Ok(match s.hit {
        Some(rh) => -(cfg.sigma - rh),
        None => s.v_sigma,
    })
}

/// Positive solution of the ball problem on `n` uniform radii of `[0, σ]`,
/// or `None` when no centre value in `(θ', 1)` reaches zero exactly at `σ`.
///
/// Centre values are scanned downward from 1 (in the deficit `1 − V(0)`), so
/// the first sign change gives the largest solution.
pub fn ball_solution(cfg: &RadialConfig, n: usize) -> Result<Option<RadialProfile>> {
    if cfg.dim < 1 || !(cfg.sigma > 0.0) || !(cfg.d_u > 0.0) || n < 2 {
        return Err(Error::Domain("ball problem needs N ≥ 1, σ > 0, d_u > 0 and n ≥ 2".into()));
    }
    let eps_max = 1.0 - cfg.growth.theta_prime();
    let mut eps = 1e-16;
    let mut phi = mismatch(cfg, eps)?;
    // move toward 1 until the shot overshoots
    while phi <= 0.0 {
        eps *= 1e-8;
        if eps < 1e-290 {
            return Err(Error::IntegrationFailure("centre value indistinguishable from 1".into()));
        }
        phi = mismatch(cfg, eps)?;
    }
    let mut lo = eps;
    let mut hi = loop {
        let next = lo * 2.0;
        if next >= eps_max {
            return Ok(None);
        }
        if mismatch(cfg, next)? <= 0.0 {
            break next;
        }
        lo = next;
    };
    for _ in 0..200 {
        let mid = (0.5 * (lo.ln() + hi.ln())).exp();
        if mid <= lo || mid >= hi {
            break;
        }
        if mismatch(cfg, mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi / lo).ln() < 1e-14 {
            break;
        }
    }
    let r: Vec<f64> = (0..n).map(|i| cfg.sigma * i as f64 / (n - 1) as f64).collect();
    let shot = shoot(cfg, lo, &r)?;
    let mut value = shot.samples;
    value.truncate(n);
    if let Some(last) = value.last_mut() {
        *last = 0.0;
    }
    value.iter_mut().for_each(|v| *v = v.max(0.0));
    Ok(Some(RadialProfile { r, value }))
}

/// Method-of-lines system on the annulus, Dirichlet node at `ρ` eliminated.
struct Annulus<'a> {
    cfg: &'a RadialConfig,
    h: f64,
    r: Vec<f64>,
}

impl Annulus<'_> {
    fn new(cfg: &RadialConfig) -> Annulus<'_> {
        let n = ((cfg.big_r - cfg.rho) / cfg.spacing).ceil() as usize + 1;
        let h = (cfg.big_r - cfg.rho) / (n - 1) as f64;
        let r = (0..n).map(|j| cfg.rho + j as f64 * h).collect();
        Annulus { cfg, h, r }
    }

    fn coeffs(&self, j: usize) -> (f64, f64, f64) {
        let n = self.r.len();
        let c = self.cfg.d_u / (self.h * self.h);
        if j == n - 1 {
            (2.0 * c, -2.0 * c, 0.0)
        } else {
            let adv = self.cfg.d_u * (self.cfg.dim as f64 - 1.0) / self.r[j] / (2.0 * self.h);
            (c - adv, -2.0 * c, c + adv)
        }
    }
}

impl StiffSystem for Annulus<'_> {
    fn dim(&self) -> usize {
        self.r.len() - 1
    }

    fn bandwidth(&self) -> (usize, usize) {
        (1, 1)
    }

    fn rhs(&self, _t: f64, w: &[f64], dw: &mut [f64]) {
        let m = w.len();
        for k in 0..m {
            let (lo, d, hi) = self.coeffs(k + 1);
            let left = if k > 0 { w[k - 1] } else { 0.0 };
            let right = if k + 1 < m { w[k + 1] } else { 0.0 };
            dw[k] = lo * left + d * w[k] + hi * right + self.cfg.growth.f(w[k]);
        }
    }

    fn jacobian(&self, _t: f64, w: &[f64], jac: &mut BandMatrix) {
        let m = w.len();
        for k in 0..m {
            let (lo, d, hi) = self.coeffs(k + 1);
            jac.set(k, k, d + self.cfg.growth.f_prime(w[k]));
            if k > 0 {
                jac.set(k, k - 1, lo);
            }
            if k + 1 < m {
                jac.set(k, k + 1, hi);
            }
        }
    }
}

/// Relaxation from the constant `w0`, returning the profile at each of `times`.
pub fn relax_from(cfg: &RadialConfig, w0: f64, times: &[f64]) -> Result<Vec<RadialProfile>> {
    cfg.check_annulus()?;
    let sys = Annulus::new(cfg);
    let opts = RadauOptions { rtol: 1e-9, atol: 1e-12, ..RadauOptions::default() };
    let mut st = Radau5::new(&sys, 0.0, vec![w0; sys.dim()], opts)?;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let w = st.advance_to(t)?;
        let mut value = vec![0.0];
        value.extend(w);
        out.push(RadialProfile { r: sys.r.clone(), value });
    }
    Ok(out)
}

/// Maximal steady state of the annulus problem by relaxation from `w ≡ 1`.
///
/// Stops after three consecutive checks, spaced `1/r` apart, with
/// `‖w_t‖_∞ ≤ 1e-10`; fails if that does not happen before `t_relax`.
pub fn annulus_zeta(cfg: &RadialConfig, t_relax: f64) -> Result<RadialProfile> {
    cfg.check_annulus()?;
    let sys = Annulus::new(cfg);
    let m = sys.dim();
    let opts = RadauOptions { rtol: 1e-10, atol: 1e-13, ..RadauOptions::default() };
    let mut st = Radau5::new(&sys, 0.0, vec![1.0; m], opts)?;
    let dt = 1.0 / cfg.growth.r();
    let mut quiet = 0;
    let mut t = 0.0;
    let mut dw: Vec<f64> = vec![0.0; m];
    let w = loop {
        t += dt;
        if t > t_relax {
            return Err(Error::IntegrationFailure(format!(
                "annulus relaxation not stationary by t = {t_relax} (‖w_t‖ = {:e})",
                dw.iter().fold(0.0f64, |a, x| a.max(x.abs()))
            )));
        }
        let w = st.advance_to(t)?;
        sys.rhs(t, &w, &mut dw);
        if dw.iter().fold(0.0f64, |a, x| a.max(x.abs())) <= 1e-10 {
            quiet += 1;
            if quiet == 3 {
                break w;
            }
        } else {
            quiet = 0;
        }
    };
    let mut value = vec![0.0];
    value.extend(w);
    if value.iter().fold(0.0f64, |a, &x| a.max(x)) < 1e-6 {
        value.iter_mut().for_each(|v| *v = 0.0);
    }
    Ok(RadialProfile { r: sys.r, value })
}

pub const DEFAULT_T_RELAX: f64 = 1e5;

/// `ζ_R(R)`.
pub fn zeta_boundary_value(cfg: &RadialConfig) -> Result<f64> {
    Ok(*annulus_zeta(cfg, DEFAULT_T_RELAX)?.value.last().unwrap())
}

/// Smallest outer radius (to `tol`) with `ζ_R(R) > 1 − η`, searched up to `r_max`.
pub fn threshold_radius(cfg: &RadialConfig, eta: f64, r_max: f64, tol: f64) -> Result<Option<f64>> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::Domain(format!("η must lie in (0, 1), got {eta}")));
    }
    let at = |big_r: f64| zeta_boundary_value(&RadialConfig { big_r, ..*cfg });
    let mut lo = cfg.rho + 2.0 * cfg.spacing;
    let mut hi = (cfg.rho + 1.0).max(lo + cfg.spacing);
    while at(hi)? <= 1.0 - eta {
        lo = hi;
        hi = cfg.rho + 2.0 * (hi - cfg.rho);
        if hi > r_max {
            if at(r_max)? > 1.0 - eta {
                hi = r_max;
                break;
            }
            return Ok(None);
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if at(mid)? > 1.0 - eta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asymptotics;

    fn cfg(dim: usize, big_r: f64) -> RadialConfig {
        RadialConfig {
            dim,
            rho: 1.0,
            big_r,
            sigma: 6.0,
            d_u: 1.0,
            growth: GrowthFn::cubic(1.0, 0.3).unwrap(),
            spacing: 0.05,
        }
    }

    #[test]
    fn ball_profile_is_decreasing_and_above_theta_prime() {
        let c = cfg(2, 6.0);
        let v = ball_solution(&c, 201).unwrap().expect("σ = 6 is above the critical radius");
        assert!(v.value[0] > c.growth.theta_prime());
        assert!(v.value.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(*v.value.last().unwrap(), 0.0);
    }

    #[test]
    fn small_ball_has_no_solution() {
        let c = RadialConfig { sigma: 0.5, ..cfg(3, 6.0) };
        assert!(ball_solution(&c, 11).unwrap().is_none());
    }

    #[test]
    fn one_dimensional_ball_matches_energy_reconstruction() {
        let c = RadialConfig { sigma: 5.0, ..cfg(1, 6.0) };
        let v = ball_solution(&c, 101).unwrap().unwrap();
        // V(r) = ζ_{0,σ}(σ − r)
        let xs: Vec<f64> = v.r.iter().rev().map(|r| c.sigma - r).collect();
        let z = asymptotics::zeta_at(0.0, c.sigma, &c.growth, c.d_u, &xs).unwrap();
        for (i, zi) in z.iter().rev().enumerate() {
            assert!((v.value[i] - zi).abs() < 1e-6, "r = {}: {} vs {zi}", v.r[i], v.value[i]);
        }
    }

    #[test]
    fn annulus_monotone_in_r_and_in_outer_radius() {
        let z1 = annulus_zeta(&cfg(2, 6.0), DEFAULT_T_RELAX).unwrap();
        let z2 = annulus_zeta(&cfg(2, 8.0), DEFAULT_T_RELAX).unwrap();
        assert!(z1.value.windows(2).all(|w| w[1] >= w[0]));
        assert!(*z1.value.last().unwrap() > cfg(2, 6.0).growth.theta_prime());
        for (i, v) in z1.value.iter().enumerate() {
            assert!((z2.r[i] - z1.r[i]).abs() < 1e-12);
            assert!(z2.value[i] >= *v - 1e-9);
        }
    }

    #[test]
    fn narrow_annulus_collapses() {
        assert_eq!(zeta_boundary_value(&cfg(2, 1.5)).unwrap(), 0.0);
    }

    #[test]
    fn relaxation_from_one_dominates_relaxation_from_half() {
        let c = cfg(2, 5.0);
        let times = [0.5, 2.0, 8.0];
        let hi = relax_from(&c, 1.0, &times).unwrap();
        let lo = relax_from(&c, 0.5, &times).unwrap();
        for (a, b) in hi.iter().zip(&lo) {
            assert!(a.value.iter().zip(&b.value).all(|(x, y)| x >= &(y - 1e-9)));
        }
    }

    #[test]
    fn one_dimensional_annulus_converges_to_zeta() {
        let err = |h: f64| {
            let c = RadialConfig { spacing: h, ..cfg(1, 5.0) };
            let z = annulus_zeta(&c, DEFAULT_T_RELAX).unwrap();
            let x: Vec<f64> = z.r.clone();
            let exact = asymptotics::zeta_at(1.0, 5.0, &c.growth, c.d_u, &x).unwrap();
            z.value.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        let (e1, e2) = (err(0.04), err(0.02));
        assert!(e2 < e1 / 3.0 && e2 < 1e-4, "{e1} {e2}");
    }
}
