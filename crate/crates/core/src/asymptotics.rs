//! Monotone solutions of `−d_u u'' = f(u)` on an interval, the length map
//! `L(q)`, and the thin-limit coefficients of the total predator population.
//!
//! A monotone profile rising from `u = p` at the left end to `u = q` with
//! zero slope at the right end has conserved energy `(d_u/2)u'² + F(u) = F(q)`,
//! so its length is
//!
//! ```text
//! L(q) = √(d_u/2) ∫_p^q du / √(F(q) − F(u)).
//! ```
//!
//! On the upper branch `q` is within `1e-20` of 1 for moderate `L`, far below
//! `f64` resolution near 1. Everything here is therefore parametrized by the
//! deficit `ε = 1 − q`, and the substitution `u = q − t²` (so `1 − u = ε + t²`)
//! turns the integrand into `2 / √M(ε, ε + t²)` with `M` the mean of `f` over
//! `[u, q]`, which is bounded and smooth.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::banded::BandMatrix;
use crate::dynamics::ModelParams;
use crate::error::{Error, Result};
use crate::growth::GrowthFn;
use crate::quadrature::{composite, gauss_legendre, graded_breaks};

/// Smallest deficit the branch search will consider.
const MIN_DEFICIT: f64 = 1e-300;

/// A point `(ε, L)` on the monotone branch, `q = 1 − ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub deficit: f64,
    pub length: f64,
}

impl BranchPoint {
    pub fn q(&self) -> f64 {
        1.0 - self.deficit
    }
}

/// Conserved energy level of a monotone profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyLevel {
    #[serde(rename = "E")]
    pub e: f64,
    pub q: f64,
    pub p: f64,
}

/// Monotone solutions with left value `p` for fixed kinetics and diffusivity.
#[derive(Debug, Clone, Copy)]
pub struct Branch {
    g: GrowthFn,
    p: f64,
    d_u: f64,
}

impl Branch {
    pub fn new(g: &GrowthFn, p: f64, d_u: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Domain(format!("left value p = {p} must lie in [0, 1)")));
        }
        if !(d_u > 0.0 && d_u.is_finite()) {
            return Err(Error::Domain(format!("d_u must be positive, got {d_u}")));
        }
        Ok(Branch { g: *g, p, d_u })
    }

    /// Right end of the substituted interval, `√(1 − p − ε)`.
    fn t_max(&self, eps: f64) -> f64 {
        (1.0 - self.p - eps).max(0.0).sqrt()
    }

    fn mean(&self, eps: f64, t: f64) -> f64 {
        self.g.mean_rate_between_deficits(eps, eps + t * t)
    }

    fn integrand(&self, eps: f64, t: f64) -> f64 {
        2.0 / self.mean(eps, t).sqrt()
    }

    /// Largest deficit with `F(q) > F(u)` on `[p, q)`.
    pub fn max_deficit(&self) -> f64 {
        let th = self.g.theta();
        if self.p >= th {
            return 1.0 - self.p;
        }
        // G(y) = F(1) − F(1−y) increases on (0, 1−θ); solve G(ε) = G(1−p)
        let target = self.g.potential_drop(1.0 - self.p);
        let (mut lo, mut hi) = (0.0, 1.0 - th);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.g.potential_drop(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    fn admissible(&self, eps: f64) -> bool {
        eps > 0.0 && eps < self.max_deficit()
    }

    /// `∫_{t0}^{t1}` of the substituted integrand on panels graded toward
    /// the near-singular scale `√ε`.
    fn partial(&self, eps: f64, t0: f64, t1: f64, n: usize) -> f64 {
        let scale_a = 0.5 * eps.sqrt().max(t0);
        let scale_b = 1e-3 * self.t_max(eps);
        let br = graded_breaks(t0, t1, scale_a, scale_b);
        composite(&gauss_legendre(n), &br, |t| self.integrand(eps, t))
    }

    /// `L` at deficit `ε`; panel order doubled from 64 until two passes agree to 1e-10.
    pub fn length_at(&self, eps: f64) -> Result<f64> {
        if !self.admissible(eps) {
            return Err(Error::Domain(format!(
                "q = 1 − {eps:e} violates F(q) > F(u) on [p, q) for p = {}",
                self.p
            )));
        }
        let t1 = self.t_max(eps);
        let c = (self.d_u / 2.0).sqrt();
        let mut n = 64;
        let mut prev = c * self.partial(eps, 0.0, t1, n);
        while n < 1024 {
            n *= 2;
            let next = c * self.partial(eps, 0.0, t1, n);
            if (next - prev).abs() <= 1e-10 * next.abs().max(1.0) {
                return Ok(next);
            }
            prev = next;
        }
        Ok(prev)
    }

    fn cache_key(&self) -> [u64; 4] {
        [self.g.r().to_bits(), self.g.theta().to_bits(), self.p.to_bits(), self.d_u.to_bits()]
    }

    /// Start of the monotone branch: the deficit where `L` is minimal,
    /// together with that minimal length.
    pub fn start(&self) -> Result<BranchPoint> {
        static CACHE: OnceLock<Mutex<HashMap<[u64; 4], BranchPoint>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let key = self.cache_key();
        if let Some(bp) = cache.lock().unwrap_or_else(|e| e.into_inner()).get(&key) {
            return Ok(*bp);
        }
        let bp = self.scan_start()?;
        cache.lock().unwrap_or_else(|e| e.into_inner()).insert(key, bp);
        Ok(bp)
    }

    fn scan_start(&self) -> Result<BranchPoint> {
        let eps_max = self.max_deficit();
        let mut eps = 1e-9f64.min(0.5 * eps_max);
        let mut pts: Vec<(f64, f64)> = vec![(eps, self.length_at(eps)?)];
        loop {
            let next = eps * 1.2;
            if next >= eps_max {
                // monotone all the way to the admissibility edge
                let edge = eps_max * (1.0 - 1e-9);
                let l_edge = self.length_at(edge)?;
                let (e_last, l_last) = *pts.last().unwrap();
                return Ok(if l_edge < l_last {
                    BranchPoint { deficit: edge, length: l_edge }
                } else {
                    BranchPoint { deficit: e_last, length: l_last }
                });
            }
            let l = self.length_at(next)?;
            let (_, l_last) = *pts.last().unwrap();
            pts.push((next, l));
            eps = next;
            if l > l_last {
                break;
            }
        }
        // minimum bracketed by the last three scan points; golden section in ln ε
        let k = pts.len();
        let (mut a, mut b) = (pts[k.saturating_sub(3)].0.ln(), pts[k - 1].0.ln());
        let gr = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - gr * (b - a);
        let mut d = a + gr * (b - a);
        let mut fc = self.length_at(c.exp())?;
        let mut fd = self.length_at(d.exp())?;
        for _ in 0..80 {
            if (b - a).abs() < 1e-10 {
                break;
            }
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - gr * (b - a);
                fc = self.length_at(c.exp())?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + gr * (b - a);
                fd = self.length_at(d.exp())?;
            }
        }
        let (e, l) = if fc < fd { (c.exp(), fc) } else { (d.exp(), fd) };
        Ok(BranchPoint { deficit: e, length: l })
    }

    /// Branch point of length `L`, by bisection in `ln ε` on the monotone branch.
    pub fn invert(&self, length: f64) -> Result<BranchPoint> {
        let start = self.start()?;
        if !(length > start.length) {
            return Err(Error::NoBranch(format!(
                "L = {length} is below the branch minimum {:.12} (p = {})",
                start.length, self.p
            )));
        }
        let l_far = self.length_at(MIN_DEFICIT)?;
        if length > l_far {
            return Err(Error::Domain(format!(
                "L = {length} needs a deficit below {MIN_DEFICIT:e} (max representable length {l_far:.6})"
            )));
        }
        let (mut lo, mut hi) = (MIN_DEFICIT.ln(), start.deficit.ln());
        let mut best = BranchPoint { deficit: start.deficit, length: start.length };
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let e = mid.exp();
            let l = self.length_at(e)?;
            best = BranchPoint { deficit: e, length: l };
            if l == length || (hi - lo) < 1e-15 * mid.abs() {
                break;
            }
            // L decreases as ε grows
            if l > length {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(best)
    }

    /// Reconstructs the profile at `xs` (ascending, inside `[x_left, x_left + L(ε)]`).
    ///
    /// Marching from the right end where `τ = 0`, each node solves
    /// `√(d_u/2) ∫_{τ_prev}^{τ} 2/√M = Δx` by safeguarded Newton.
    pub fn profile(&self, bp: BranchPoint, x_left: f64, xs: &[f64]) -> Result<Profile> {
        let eps = bp.deficit;
        let c = (self.d_u / 2.0).sqrt();
        let t_end = self.t_max(eps);
        let x_right = x_left + bp.length;
        let n = xs.len();
        let mut tau = vec![0.0; n];
        let (mut t_prev, mut x_prev) = (0.0f64, x_right);
        for k in (0..n).rev() {
            let x = xs[k];
            if x >= x_right {
                tau[k] = 0.0;
                continue;
            }
            if x <= x_left {
                tau[k] = t_end;
                t_prev = t_end;
                x_prev = x;
                continue;
            }
            let target = (x_prev - x) / c;
            let j = |t: f64| self.partial(eps, t_prev, t, 32);
            let (mut lo, mut hi) = (t_prev, t_end);
            let mut t = (t_prev + target / self.integrand(eps, t_prev)).min(t_end);
            for _ in 0..100 {
                let r = j(t) - target;
                if r > 0.0 {
                    hi = t;
                } else {
                    lo = t;
                }
                if r.abs() <= 1e-15 * target.max(1e-300) {
                    break;
                }
                let mut next = t - r / self.integrand(eps, t);
                if !(next > lo && next < hi) {
                    next = 0.5 * (lo + hi);
                }
                if (next - t).abs() <= 1e-16 * t.max(eps.sqrt()) {
                    t = next;
                    break;
                }
                t = next;
            }
            tau[k] = t;
            t_prev = t;
            x_prev = x;
        }
        // the left end carries u = p exactly
        let deficit: Vec<f64> = tau.iter().map(|&t| if t == t_end { 1.0 - self.p } else { eps + t * t }).collect();
        let slope: Vec<f64> = tau
            .iter()
            .map(|&t| t * ((2.0 / self.d_u) * self.mean(eps, t)).sqrt())
            .collect();
        Ok(Profile {
            x: xs.to_vec(),
            u: deficit.iter().map(|y| 1.0 - y).collect(),
            deficit,
            slope,
            q_deficit: eps,
            p: self.p,
        })
    }

    /// `u'(x_left) = √((2/d_u)(F(q) − F(p)))`.
    pub fn left_slope(&self, eps: f64) -> f64 {
        let t = self.t_max(eps);
        t * ((2.0 / self.d_u) * self.mean(eps, t)).sqrt()
    }
}

/// A monotone profile sampled on a mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    /// `1 − u`, exact even where `u` rounds to 1.
    pub deficit: Vec<f64>,
    /// `u'` from the energy relation.
    pub slope: Vec<f64>,
    pub q_deficit: f64,
    pub p: f64,
}

impl Profile {
    pub fn energy_level(&self, g: &GrowthFn) -> EnergyLevel {
        let q = 1.0 - self.q_deficit;
        EnergyLevel { e: g.potential(1.0) - g.potential_drop(self.q_deficit), q, p: self.p }
    }

    /// Max over the mesh of `|(d_u/2)u'² + F(u) − F(q)| / |F(q)|` with `u'`
    /// taken from fourth-order finite differences of the samples.
    ///
    /// Requires a uniform mesh with at least five nodes.
    pub fn energy_drift(&self, g: &GrowthFn, d_u: f64) -> f64 {
        let y = &self.deficit;
        let n = y.len();
        assert!(n >= 5, "energy drift needs at least five nodes");
        let h = (self.x[n - 1] - self.x[0]) / (n - 1) as f64;
        let d = |i: usize| -> f64 {
            let dy = if i == 0 {
                -25.0 * y[0] + 48.0 * y[1] - 36.0 * y[2] + 16.0 * y[3] - 3.0 * y[4]
            } else if i == 1 {
                -3.0 * y[0] - 10.0 * y[1] + 18.0 * y[2] - 6.0 * y[3] + y[4]
            } else if i == n - 2 {
                3.0 * y[n - 1] + 10.0 * y[n - 2] - 18.0 * y[n - 3] + 6.0 * y[n - 4] - y[n - 5]
            } else if i == n - 1 {
                25.0 * y[n - 1] - 48.0 * y[n - 2] + 36.0 * y[n - 3] - 16.0 * y[n - 4] + 3.0 * y[n - 5]
            } else {
                -y[i + 2] + 8.0 * y[i + 1] - 8.0 * y[i - 1] + y[i - 2]
            };
            -dy / (12.0 * h)
        };
        let eps = self.q_deficit;
        let fq = (g.potential(1.0) - g.potential_drop(eps)).abs();
        (0..n)
            .map(|i| {
                let s = d(i);
                let drop = (y[i] - eps) * g.mean_rate_between_deficits(eps, y[i]);
                (0.5 * d_u * s * s - drop).abs() / fq
            })
            .fold(0.0, f64::max)
    }
}

fn uniform(x0: f64, x1: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| x0 + (x1 - x0) * i as f64 / (n - 1) as f64).collect()
}

/// `L(q)` for the monotone profile from `p` to `q`.
pub fn l_of_q(q: f64, p: f64, g: &GrowthFn, d_u: f64) -> Result<f64> {
    if !(q > p && q < 1.0) {
        return Err(Error::Domain(format!("need p < q < 1, got p = {p}, q = {q}")));
    }
    Branch::new(g, p, d_u)?.length_at(1.0 - q)
}

/// `L` as a function of the deficit `ε = 1 − q`.
pub fn l_of_deficit(eps: f64, p: f64, g: &GrowthFn, d_u: f64) -> Result<f64> {
    Branch::new(g, p, d_u)?.length_at(eps)
}

/// Inverse of [`l_of_q`] on the monotone branch.
pub fn q_of_l(length: f64, p: f64, g: &GrowthFn, d_u: f64) -> Result<BranchPoint> {
    Branch::new(g, p, d_u)?.invert(length)
}

/// Maximal positive solution of `−d_u ζ'' = f(ζ)`, `ζ(a) = 0`, `ζ'(L) = 0`,
/// on `n` uniform nodes of `[a, L]`.
pub fn zeta(a: f64, length: f64, g: &GrowthFn, d_u: f64, n: usize) -> Result<Profile> {
    if !(length > a) || n < 2 {
        return Err(Error::Domain(format!("need L > a and n ≥ 2, got a = {a}, L = {length}, n = {n}")));
    }
    let br = Branch::new(g, 0.0, d_u)?;
    let bp = br.invert(length - a)?;
    br.profile(bp, a, &uniform(a, length, n))
}

/// [`zeta`] evaluated at arbitrary ascending points of `[a, L]`.
pub fn zeta_at(a: f64, length: f64, g: &GrowthFn, d_u: f64, xs: &[f64]) -> Result<Vec<f64>> {
    let br = Branch::new(g, 0.0, d_u)?;
    let bp = br.invert(length - a)?;
    Ok(br.profile(bp, a, xs)?.u)
}

/// The limiting prey profile `w₁` on `[0, L]`, rising from `γ/α`.
pub fn w1(length: f64, p: &ModelParams, n: usize) -> Result<Profile> {
    let pl = p.gamma / p.alpha;
    let br = Branch::new(&p.growth, pl, p.d_u)?;
    let bp = br.invert(length)?;
    br.profile(bp, 0.0, &uniform(0.0, length, n))
}

/// Solution of the second-order correction problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct W2Profile {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
    pub slope0: f64,
}

/// Solves `d_u w'' + f'(w₁) w = (2/L) f(w₁)`, `w(0) = w₁'(0)/3`, `w'(L) = 0`
/// on the mesh of `w1_profile`.
pub fn w2(length: f64, p: &ModelParams, w1_profile: &Profile) -> Result<W2Profile> {
    let n = w1_profile.x.len();
    if n < 3 {
        return Err(Error::Domain("w2 needs at least three nodes".into()));
    }
    let g = &p.growth;
    let h = length / (n - 1) as f64;
    let c = p.d_u / (h * h);
    let w0 = w1_profile.slope[0] / 3.0;
    let fp: Vec<f64> = w1_profile.u.iter().map(|&u| g.f_prime(u)).collect();
    let src: Vec<f64> = w1_profile.deficit.iter().map(|&y| 2.0 / length * g.f_at_deficit(y)).collect();
    // unknowns w_1..w_{n-1}
    let m = n - 1;
    let mut a = BandMatrix::zeros(m, 1, 1);
    let mut b = vec![0.0; m];
    for k in 0..m {
        let i = k + 1;
        b[k] = src[i];
        if i == n - 1 {
            a.set(k, k, -2.0 * c + fp[i]);
            if k > 0 {
                a.set(k, k - 1, 2.0 * c);
            } else {
                b[k] -= 2.0 * c * w0;
            }
        } else {
            a.set(k, k, -2.0 * c + fp[i]);
            if k > 0 {
                a.set(k, k - 1, c);
            } else {
                b[k] -= c * w0;
            }
            a.set(k, k + 1, c);
        }
    }
    let lu = a.lu().map_err(|e| Error::SingularSystem(format!("linearized operator at L = {length}: {e}")))?;
    lu.solve_in_place(&mut b);
    let mut w = vec![w0];
    w.extend(b);
    let wpp0 = (src[0] - fp[0] * w0) / p.d_u;
    let slope0 = (w[1] - w[0]) / h - 0.5 * h * wpp0;
    Ok(W2Profile { x: w1_profile.x.clone(), w, slope0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThinLimitCoeffs {
    #[serde(rename = "L")]
    pub length: f64,
    pub q: f64,
    pub q_deficit: f64,
    pub w1_slope0: f64,
    pub w2_slope0: f64,
    #[serde(rename = "V0")]
    pub v0: f64,
    #[serde(rename = "V1")]
    pub v1: f64,
    pub large_l_slope: f64,
    /// `V1 − large_l_slope`, evaluated without cancellation.
    #[serde(rename = "V1_excess")]
    pub v1_excess: f64,
}

/// `V(a) ≈ V0 + V1 a` as `a → 0`, computed on `n` nodes of `[0, L]`.
///
/// Matching fluxes across `x = a` with the prey interval `(a, L)` rescaled to
/// unit length gives `V1 = (α/βγ)(d_u w₂'(0) + (d_u/L) w₁'(0) + f(γ/α))`.
/// Multiplying the `w₂` equation by `w₁'` and integrating turns the bracket
/// into `(2/3) f(γ/α) + f(q) w₂(L)/w₁'(0)`, which is what is evaluated: the
/// second term is the whole finite-`L` correction and decays like the deficit.
pub fn thin_limit_coeffs(p: &ModelParams, length: f64, n: usize) -> Result<ThinLimitCoeffs> {
    let prof = w1(length, p, n)?;
    let w2p = w2(length, p, &prof)?;
    let k = p.alpha / (p.beta * p.gamma);
    let s1 = prof.slope[0];
    let excess = k * p.growth.f_at_deficit(prof.q_deficit) * w2p.w[w2p.w.len() - 1] / s1;
    let limit = large_l_slope(p);
    Ok(ThinLimitCoeffs {
        length,
        q: 1.0 - prof.q_deficit,
        q_deficit: prof.q_deficit,
        w1_slope0: s1,
        w2_slope0: w2p.slope0,
        v0: p.d_u * k * s1,
        v1: limit + excess,
        large_l_slope: limit,
        v1_excess: excess,
    })
}

/// `lim_{L→∞} V1 = (2/3)(α/βγ) f(γ/α)`.
pub fn large_l_slope(p: &ModelParams) -> f64 {
    2.0 / 3.0 * p.alpha / (p.beta * p.gamma) * p.growth.f(p.gamma / p.alpha)
}

/// Writes `x,w1,w2,zeta` rows; `zeta` may be absent (empty) or shorter.
pub fn write_profiles_csv(path: &Path, w1p: &Profile, w2p: &W2Profile, zeta: Option<&[f64]>) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "x,w1,w2,zeta")?;
    for i in 0..w1p.x.len() {
        let z = zeta.and_then(|z| z.get(i)).map(|v| format!("{v:.16e}")).unwrap_or_default();
        writeln!(w, "{:.16e},{:.16e},{:.16e},{}", w1p.x[i], w1p.u[i], w2p.w[i], z)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g03() -> GrowthFn {
        GrowthFn::cubic(1.0, 0.3).unwrap()
    }

    fn low_mortality() -> ModelParams {
        ModelParams { alpha: 1.0, beta: 3.0, gamma: 0.05, d_u: 1.0, d_v: 1.0, growth: g03(), a: 0.1, length: 5.0 }
    }

    /// Independent adaptive Simpson oracle on `u ∈ [p, q − δ]` plus the
    /// analytic tail `∫_{q−δ}^q du/√(f(q)(q−u)) = 2√(δ/f(q))`.
    fn simpson_oracle(q: f64, p: f64, g: &GrowthFn, d_u: f64) -> f64 {
        fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
        // integrate in t = √(q − u); the mean of f over [u, q] comes from a
        // 3-point Gauss rule, exact for the cubic and free of cancellation
        let mean = |u: f64| {
            let (m, h) = (0.5 * (u + q), 0.5 * (q - u));
            let r = (0.6f64).sqrt();
            (5.0 * g.f(m - r * h) + 8.0 * g.f(m) + 5.0 * g.f(m + r * h)) / 18.0
        };
        let f = |t: f64| 2.0 / mean(q - t * t).sqrt();
        let tmax = (q - p).sqrt();
        let (fa, fm, fb) = (f(0.0), f(0.5 * tmax), f(tmax));
        let whole = tmax / 6.0 * (fa + 4.0 * fm + fb);
        (d_u / 2.0).sqrt() * simpson(&f, 0.0, tmax, fa, fm, fb, whole, 1e-12, 30)
    }

    #[test]
    fn length_matches_independent_integrator() {
        let g = g03();
        for &q in &[0.9, 0.99, 0.999] {
            let l = l_of_q(q, 0.05, &g, 1.0).unwrap();
            let o = simpson_oracle(q, 0.05, &g, 1.0);
            assert!((l - o).abs() < 1e-9, "q={q}: {l} vs {o}");
        }
    }

    #[test]
    fn length_increases_toward_one_without_bound() {
        let g = g03();
        let ls: Vec<f64> = (2..=6).map(|k| l_of_q(1.0 - 10f64.powi(-k), 0.05, &g, 1.0).unwrap()).collect();
        assert!(ls.windows(2).all(|w| w[1] > w[0]));
        // logarithmic growth: increments per decade settle to √(d_u/(2c)) ln 10 with c = f'(1)/2
        let c = -g.f_prime(1.0) / 2.0;
        let asym = (1.0 / (2.0 * c)).sqrt() * 10f64.ln();
        let last = ls[4] - ls[3];
        assert!((last - asym).abs() < 0.05 * asym, "{last} vs {asym}");
    }

    #[test]
    fn short_interval_gives_short_length() {
        // p above θ: no obstruction, L → 0 as q → p
        let g = g03();
        let l = l_of_q(0.5 + 1e-8, 0.5, &g, 1.0).unwrap();
        assert!(l < 1e-3);
    }

    #[test]
    fn rejects_inadmissible_q() {
        let g = g03();
        assert!(matches!(l_of_q(0.35, 0.0, &g, 1.0), Err(Error::Domain(_))));
        assert!(l_of_q(0.2, 0.3, &g, 1.0).is_err());
    }

    #[test]
    fn round_trip_and_monotone_inverse() {
        let g = g03();
        let mut prev = f64::INFINITY;
        for &l in &[3.0, 5.0, 10.0, 20.0, 40.0] {
            let bp = q_of_l(l, 0.05, &g, 1.0).unwrap();
            let back = l_of_deficit(bp.deficit, 0.05, &g, 1.0).unwrap();
            assert!((back - l).abs() <= 1e-8, "L={l}: {back}");
            assert!(bp.deficit < prev);
            prev = bp.deficit;
        }
        assert!(q_of_l(40.0, 0.05, &g, 1.0).unwrap().q() > 0.999);
    }

    #[test]
    fn below_branch_minimum() {
        let g = g03();
        let start = Branch::new(&g, 0.0, 1.0).unwrap().start().unwrap();
        assert!(start.length > 0.0);
        assert!(matches!(q_of_l(0.5 * start.length, 0.0, &g, 1.0), Err(Error::NoBranch(_))));
    }

    #[test]
    fn zeta_boundary_values_and_energy() {
        let g = g03();
        let z = zeta(1.0, 6.0, &g, 1.0, 2001).unwrap();
        assert_eq!(z.u[0], 0.0);
        assert!(z.slope.last().unwrap().abs() <= 1e-8);
        assert!(z.u.windows(2).all(|w| w[1] > w[0]));
        assert!(z.energy_drift(&g, 1.0) < 1e-8);
        let lvl = z.energy_level(&g);
        assert!(lvl.q > g.theta_prime());
    }

    #[test]
    fn zeta_ordered_in_length_and_in_a() {
        let g = g03();
        let n = 401;
        let z1 = zeta(0.0, 5.0, &g, 1.0, n).unwrap();
        let xs: Vec<f64> = z1.x.clone();
        let z2 = zeta_at(0.0, 8.0, &g, 1.0, &xs).unwrap();
        let worst = z1.u.iter().zip(&z2).enumerate().map(|(i, (a, b))| (a - b, i)).fold((f64::MIN, 0), |m, v| if v.0 > m.0 { v } else { m });
        assert!(worst.0 <= 0.0, "{worst:?}");
        // larger a: smaller on the common interval
        let xs_c: Vec<f64> = xs.iter().copied().filter(|&x| x >= 1.0).collect();
        let za = zeta_at(0.5, 5.0, &g, 1.0, &xs_c).unwrap();
        let zb = zeta_at(1.0, 5.0, &g, 1.0, &xs_c).unwrap();
        assert!(za.iter().zip(&zb).all(|(a, b)| *a >= *b));
        // ζ(L) → 1 for long intervals
        let far = zeta(0.0, 30.0, &g, 1.0, 11).unwrap();
        assert!(*far.u.last().unwrap() > 1.0 - 0.05);
    }

    #[test]
    fn zeta_discrete_residual_is_second_order() {
        let g = g03();
        let res = |n: usize| {
            let z = zeta(0.0, 4.0, &g, 1.0, n).unwrap();
            let h = 4.0 / (n - 1) as f64;
            (1..n - 1)
                .map(|i| {
                    let lap = (z.u[i - 1] - 2.0 * z.u[i] + z.u[i + 1]) / (h * h);
                    (lap + g.f(z.u[i])).abs()
                })
                .fold(0.0, f64::max)
        };
        let (r1, r2) = (res(101), res(201));
        assert!(r1 / r2 > 3.5 && r1 / r2 < 4.5, "{r1} {r2}");
    }

    #[test]
    fn w1_slope_energy_vs_finite_differences() {
        let p = low_mortality();
        let prof = w1(5.0, &p, 4001).unwrap();
        assert!((prof.u[0] - 0.05).abs() < 1e-14);
        assert!(prof.u.windows(2).all(|w| w[1] > w[0]));
        let h = 5.0 / 4000.0;
        let y = &prof.deficit;
        let fd = -(-25.0 * y[0] + 48.0 * y[1] - 36.0 * y[2] + 16.0 * y[3] - 3.0 * y[4]) / (12.0 * h);
        assert!((fd - prof.slope[0]).abs() < 1e-6, "{fd} vs {}", prof.slope[0]);
        assert!(prof.energy_drift(&p.growth, p.d_u) < 1e-8);
    }

    /// RK4 shooting from the right end, test-only cross-check of the reconstruction.
    fn shoot(q_deficit: f64, length: f64, g: &GrowthFn, d_u: f64, steps: usize) -> f64 {
        // integrate in the deficit y = 1 − u: y'' = f(1 − y)/d_u, y(L) = ε, y'(L) = 0, backward
        let h = -length / steps as f64;
        let rhs = |s: [f64; 2]| [s[1], g.f_at_deficit(s[0]) / d_u];
        let mut s = [q_deficit, 0.0];
        for _ in 0..steps {
            let k1 = rhs(s);
            let k2 = rhs([s[0] + 0.5 * h * k1[0], s[1] + 0.5 * h * k1[1]]);
            let k3 = rhs([s[0] + 0.5 * h * k2[0], s[1] + 0.5 * h * k2[1]]);
            let k4 = rhs([s[0] + h * k3[0], s[1] + h * k3[1]]);
            s[0] += h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
            s[1] += h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
        }
        1.0 - s[0]
    }

    #[test]
    fn shooting_oracle_recovers_left_value() {
        let g = g03();
        let bp = q_of_l(3.0, 0.05, &g, 1.0).unwrap();
        let u0 = shoot(bp.deficit, 3.0, &g, 1.0, 20_000);
        assert!((u0 - 0.05).abs() < 1e-6, "{u0}");
    }

    #[test]
    fn w2_boundary_conditions_and_reduced_identity() {
        let p = low_mortality();
        let l = 5.0;
        let n = 2001;
        let prof = w1(l, &p, n).unwrap();
        let w = w2(l, &p, &prof).unwrap();
        assert_eq!(w.w[0], prof.slope[0] / 3.0);
        let h = l / (n - 1) as f64;
        // ghost closure makes w_{n-2} and the ghost symmetric; one-sided slope at L is O(h)
        let sl = (w.w[n - 1] - w.w[n - 2]) / h;
        assert!(sl.abs() < 0.05, "{sl}");
        // z = w₂ + (x/L − 1/3) w₁' solves the homogeneous linearized problem
        let z: Vec<f64> = (0..n).map(|i| w.w[i] + (prof.x[i] / l - 1.0 / 3.0) * prof.slope[i]).collect();
        assert!(z[0].abs() < 1e-15);
        let worst = (1..n - 1)
            .map(|i| {
                let zpp = (z[i - 1] - 2.0 * z[i] + z[i + 1]) / (h * h);
                (p.d_u * zpp + p.growth.f_prime(prof.u[i]) * z[i]).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn large_l_slope_closed_form() {
        let p = low_mortality();
        assert!((large_l_slope(&p) + 0.175_926).abs() < 1e-6);
        let mut q = p;
        q.gamma = 0.3;
        assert!(large_l_slope(&q).abs() < 1e-15);
    }

    #[test]
    fn thin_limit_signs() {
        let p = low_mortality();
        let c = thin_limit_coeffs(&p, 10.0, 2001).unwrap();
        // V0 → (d_u α/βγ) √((2/d_u)(F(1) − F(γ/α))) from below
        let g = &p.growth;
        let limit = p.d_u * p.alpha / (p.beta * p.gamma) * (2.0 / p.d_u * (g.potential(1.0) - g.potential(0.05))).sqrt();
        assert!((limit - 3.1579).abs() < 1e-3);
        assert!(c.v0 > 0.0 && c.v0 < limit);
        assert!((c.v0 - p.d_u * p.alpha / (p.beta * p.gamma) * c.w1_slope0).abs() < 1e-14);
        assert!(c.v1 < 0.0);
    }

    #[test]
    fn v1_integral_identity_matches_direct_slope() {
        let p = low_mortality();
        let k = p.alpha / (p.beta * p.gamma);
        let mut prev = f64::INFINITY;
        for n in [1001, 2001, 4001] {
            let c = thin_limit_coeffs(&p, 5.0, n).unwrap();
            let direct = k * (p.d_u * c.w2_slope0 + p.d_u * c.w1_slope0 / 5.0 + p.growth.f(p.gamma / p.alpha));
            let gap = (direct - c.v1).abs();
            assert!(gap < prev / 3.0 && gap < 1e-5, "n = {n}: {direct} vs {}", c.v1);
            prev = gap;
        }
    }

    #[test]
    fn v1_excess_decays_with_length() {
        let p = low_mortality();
        let ex: Vec<f64> = [5.0, 10.0, 20.0].iter().map(|&l| thin_limit_coeffs(&p, l, 2001).unwrap().v1_excess).collect();
        assert!(ex.iter().all(|e| *e < 0.0));
        assert!(ex[1].abs() < 1e-4 * ex[0].abs() && ex[2].abs() < 1e-4 * ex[1].abs());
    }
}
