//! Stationary states and their certificates.
//!
//! A coexistence steady state satisfies `λ[u] = 0` with `v` proportional to
//! the principal eigenfunction `φ[u]` of `−d_v Δ − (αu − γ)`; both are checked
//! after Newton converges. The mass identity `∫v = (α/βγ)∫f(u)` holds exactly
//! on the mesh because the predation indicator and the quadrature agree.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::banded::BandMatrix;
use crate::dynamics::{self, pack, unpack, ModelParams, MolSystem, SimOptions, State};
use crate::error::{check_len, Error, Result};
use crate::grid::DualGrid;
use crate::radau::StiffSystem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub residual_inf: f64,
    pub lambda_u: f64,
    pub eig_mismatch: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    pub lambda: f64,
    pub phi: Vec<f64>,
    pub eta_lower: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointConfig {
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "S")]
    pub s_cap: f64,
    pub s: f64,
}

impl FixedPointConfig {
    /// `S = 10 max(1, max f / β)` and `K = βS + max(−f') + 1`.
    pub fn default_for(p: &ModelParams) -> Self {
        let s_cap = 10.0 * (p.growth.max_rate() / p.beta).max(1.0);
        let k = p.beta * s_cap + p.growth.max_decay_rate() + 1.0;
        FixedPointConfig { k, s_cap, s: 0.0 }
    }

    /// True when `z ↦ f(z) + Kz − βSz` is nondecreasing on `[0, 1]`.
    pub fn is_monotone(&self, p: &ModelParams) -> bool {
        self.k - p.beta * self.s_cap >= p.growth.max_decay_rate()
    }
}

/// `(û, v̂) = (γ/α, f(û)/(βû))` when `θ < γ/α < 1`.
pub fn homogeneous_equilibrium(p: &ModelParams) -> Option<(f64, f64)> {
    let uh = p.gamma / p.alpha;
    if uh > p.growth.theta() && uh < 1.0 {
        Some((uh, p.growth.f(uh) / (p.beta * uh)))
    } else {
        None
    }
}

/// Packed stationary residual.
fn residual(sys: &MolSystem, y: &[f64]) -> Vec<f64> {
    let mut r = vec![0.0; y.len()];
    sys.rhs(0.0, y, &mut r);
    r
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Max-norm of the stationary residual at `s`.
pub fn residual_inf(grid: &DualGrid, p: &ModelParams, s: &State) -> Result<f64> {
    let (du, dv) = dynamics::rhs(grid, p, s)?;
    Ok(norm_inf(&du).max(norm_inf(&dv)))
}

/// Damped Newton on the stationary system, then eigen-certificates.
pub fn newton_steady(grid: &DualGrid, p: &ModelParams, init: &State, tol: f64) -> Result<SteadyState> {
    p.validate()?;
    check_len(grid.n_u(), init.u.len())?;
    check_len(grid.n_pred(), init.v.len())?;
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let sys = MolSystem { grid, params: p };
    let n = sys.dim();
    let mut y = pack(grid, init);
    let mut r = residual(&sys, &y);
    let mut jac = BandMatrix::zeros(n, 2, 2);
    let max_iter = 40;
    let mut iterations = 0;
    while norm_inf(&r) > tol {
        if iterations == max_iter {
            return Err(Error::NoConvergence { iterations, residual: norm_inf(&r) });
        }
        iterations += 1;
        jac.clear();
        sys.jacobian(0.0, &y, &mut jac);
        let lu = jac.lu().map_err(|e| match e {
            Error::SingularSystem(m) => Error::SingularSystem(format!("Newton Jacobian: {m}")),
            other => other,
        })?;
        let mut step: Vec<f64> = r.iter().map(|x| -x).collect();
        lu.solve_in_place(&mut step);
        let r0 = norm2(&r);
        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = y.iter().zip(&step).map(|(a, b)| a + lambda * b).collect();
            let rt = residual(&sys, &trial);
            if norm2(&rt) <= (1.0 - 1e-4 * lambda) * r0 || lambda < 1e-10 {
                y = trial;
                r = rt;
                break;
            }
            lambda *= 0.5;
        }
        if r.iter().any(|x| !x.is_finite()) {
            return Err(Error::NoConvergence { iterations, residual: f64::INFINITY });
        }
    }
    let st = unpack(grid, 0.0, &y);
    let pair = principal_eigenpair(grid, p, &st.u)?;
    let vmax = st.v.iter().fold(0.0f64, |m, &x| m.max(x));
    let eig_mismatch = if vmax > 0.0 {
        st.v.iter().zip(&pair.phi).fold(0.0f64, |m, (v, f)| m.max((v / vmax - f).abs()))
    } else {
        0.0
    };
    Ok(SteadyState {
        residual_inf: norm_inf(&r),
        u: st.u,
        v: st.v,
        lambda_u: pair.lambda,
        eig_mismatch,
        iterations,
    })
}

/// Number of eigenvalues of the symmetric tridiagonal `(d, e)` below `x`.
fn sturm_count(d: &[f64], e: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = d[0] - x;
    if q < 0.0 {
        count += 1;
    }
    for i in 1..d.len() {
        let denom = if q == 0.0 { f64::EPSILON * (e[i - 1].abs() + f64::MIN_POSITIVE) } else { q };
        q = d[i] - x - e[i - 1] * e[i - 1] / denom;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Principal eigenpair of `−d_v Δ_v − (αu − γ)` with Neumann ends.
///
/// `u` may be given on the prey mesh; only its predator-domain part is used.
pub fn principal_eigenpair(grid: &DualGrid, p: &ModelParams, u: &[f64]) -> Result<EigenPair> {
    let n = grid.n_pred();
    if u.len() != n && u.len() != grid.n_u() {
        return Err(Error::SizeMismatch { expected: n, got: u.len() });
    }
    let u = &u[..n];
    // symmetrize with the trapezoid weights: S = W^{1/2} A W^{-1/2}
    let c = p.d_v / (grid.h_pred() * grid.h_pred());
    let d: Vec<f64> = (0..n).map(|i| 2.0 * c - (p.alpha * u[i] - p.gamma)).collect();
    let e: Vec<f64> = (0..n - 1)
        .map(|i| if i == 0 || i == n - 2 { -std::f64::consts::SQRT_2 * c } else { -c })
        .collect();

    let radius = |i: usize| {
        let l = if i > 0 { e[i - 1].abs() } else { 0.0 };
        let r = if i + 1 < n { e[i].abs() } else { 0.0 };
        l + r
    };
    let mut lo = (0..n).map(|i| d[i] - radius(i)).fold(f64::INFINITY, f64::min);
    let mut hi = (0..n).map(|i| d[i] + radius(i)).fold(f64::NEG_INFINITY, f64::max);
    let scale = lo.abs().max(hi.abs()).max(1.0);
    while hi - lo > 4.0 * f64::EPSILON * scale {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(&d, &e, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let lambda0 = 0.5 * (lo + hi);

    // inverse iteration just below the eigenvalue
    let shift = lambda0 - 1e-10 * scale;
    let mut m = BandMatrix::zeros(n, 1, 1);
    for i in 0..n {
        m.set(i, i, d[i] - shift);
        if i + 1 < n {
            m.set(i, i + 1, e[i]);
            m.set(i + 1, i, e[i]);
        }
    }
    let lu = m.lu().map_err(|err| Error::ConvergenceFailure(err.to_string()))?;
    let mut x = vec![1.0; n];
    let mut converged = false;
    for _ in 0..50 {
        let mut y = lu.solve(&x);
        let nrm = norm2(&y);
        if !(nrm.is_finite() && nrm > 0.0) {
            break;
        }
        y.iter_mut().for_each(|v| *v /= nrm);
        let change = y.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        x = y;
        if change < 1e-14 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::ConvergenceFailure("inverse iteration stalled".into()));
    }
    // Rayleigh quotient refines the eigenvalue to second order
    let sx: Vec<f64> = (0..n)
        .map(|i| {
            let mut s = d[i] * x[i];
            if i > 0 {
                s += e[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += e[i] * x[i + 1];
            }
            s
        })
        .collect();
    let lambda = sx.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();

    let w = grid.weights_v();
    let mut phi: Vec<f64> = x.iter().zip(&w).map(|(xi, wi)| xi / wi.sqrt()).collect();
    let peak = phi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let trough = phi.iter().cloned().fold(f64::INFINITY, f64::min);
    let norm = if peak.abs() >= trough.abs() { peak } else { trough };
    phi.iter_mut().for_each(|v| *v /= norm);
    let eta_lower = phi.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(eta_lower > 0.0) {
        return Err(Error::ConvergenceFailure(format!("eigenvector not positive (min {eta_lower:e})")));
    }
    Ok(EigenPair { lambda, phi, eta_lower })
}

/// Solves `(−d_u Δ_u + K) w = f(u) + K u − β χ s φ[u] u`.
pub fn fixed_point_map(grid: &DualGrid, p: &ModelParams, u: &[f64], s: f64, cfg: &FixedPointConfig) -> Result<Vec<f64>> {
    check_len(grid.n_u(), u.len())?;
    if !cfg.is_monotone(p) {
        return Err(Error::Domain(format!(
            "K = {} too small for S = {}: need K − βS ≥ max(−f') = {}",
            cfg.k,
            cfg.s_cap,
            p.growth.max_decay_rate()
        )));
    }
    if !(0.0..=cfg.s_cap).contains(&s) {
        return Err(Error::Domain(format!("amplitude s = {s} outside [0, {}]", cfg.s_cap)));
    }
    let phi = if s > 0.0 { principal_eigenpair(grid, p, u)?.phi } else { vec![0.0; grid.n_pred()] };
    let op = grid.operator_u(-p.d_u, &vec![cfg.k; grid.n_u()]);
    let mut rhs: Vec<f64> = u.iter().map(|&x| p.growth.f(x) + cfg.k * x).collect();
    for (i, ph) in phi.iter().enumerate() {
        rhs[i] -= p.beta * grid.predation_fraction(i) * s * ph * u[i];
    }
    let lu = op.lu()?;
    lu.solve_in_place(&mut rhs);
    Ok(rhs)
}

/// `|∫v − (α/βγ)∫f(u)|` on the mesh.
pub fn mass_balance_residual(grid: &DualGrid, p: &ModelParams, u: &[f64], v: &[f64]) -> Result<f64> {
    let fu: Vec<f64> = u.iter().map(|&x| p.growth.f(x)).collect();
    let lhs = grid.integrate_v(v)?;
    let rhs = p.alpha / (p.beta * p.gamma) * grid.integrate_u(&fu)?;
    Ok((lhs - rhs).abs())
}

/// How to seed [`newton_steady`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InitialGuess {
    /// March the dynamics from the standard initial data up to `t_end`.
    FromDynamics { t_end: f64 },
    /// `u = γ/α` on the predator domain and `max(ζ, γ/α)` outside it, `v = s φ[u]`.
    FromSubsolution,
    Homogeneous,
}

pub fn initial_guess(grid: &DualGrid, p: &ModelParams, how: InitialGuess) -> Result<State> {
    match how {
        InitialGuess::FromDynamics { t_end } => {
            let init = State::standard_initial(grid);
            let o = SimOptions { n_coarse: 1, n_tail: 0, ..SimOptions::new(t_end) };
            let traj = dynamics::simulate_with(grid, p, &init, &o)?;
            Ok(traj.last().clone())
        }
        InitialGuess::Homogeneous => {
            let (uh, vh) = homogeneous_equilibrium(p)
                .ok_or_else(|| Error::Domain("no homogeneous coexistence equilibrium (need θ < γ/α < 1)".into()))?;
            Ok(State::uniform(grid, uh, vh))
        }
        InitialGuess::FromSubsolution => {
            let uh = p.gamma / p.alpha;
            let k = grid.interface();
            let xs = &grid.nodes_u()[k..];
            let z = crate::asymptotics::zeta_at(p.a, p.length, &p.growth, p.d_u, xs)?;
            let mut u = vec![uh; grid.n_u()];
            for (j, zj) in z.iter().enumerate() {
                u[k + j] = zj.max(uh);
            }
            let phi = principal_eigenpair(grid, p, &u)?.phi;
            let fu: Vec<f64> = u.iter().map(|&x| p.growth.f(x)).collect();
            let mass = (p.alpha / (p.beta * p.gamma) * grid.integrate_u(&fu)?).max(0.0);
            let s = mass / grid.integrate_v(&phi)?;
            Ok(State { t: 0.0, u, v: phi.iter().map(|f| s * f).collect() })
        }
    }
}

/// Newton from a family of constant starts; returns every converged state
/// with a predator population above `v_floor`.
///
/// Failing to find any is evidence, not proof, that no coexistence state exists.
pub fn coexistence_probe(grid: &DualGrid, p: &ModelParams, starts: &[(f64, f64)], tol: f64, v_floor: f64) -> Vec<SteadyState> {
    starts
        .iter()
        .filter_map(|&(u0, v0)| newton_steady(grid, p, &State::uniform(grid, u0, v0), tol).ok())
        .filter(|st| grid.integrate_v(&st.v).map(|v| v > v_floor).unwrap_or(false))
        .collect()
}

impl SteadyState {
    pub fn write_csv(&self, grid: &DualGrid, u_path: &Path, v_path: &Path) -> Result<()> {
        let mut wu = std::io::BufWriter::new(std::fs::File::create(u_path)?);
        writeln!(wu, "x,u")?;
        for (x, u) in grid.nodes_u().iter().zip(&self.u) {
            writeln!(wu, "{x:.16e},{u:.16e}")?;
        }
        wu.flush()?;
        let mut wv = std::io::BufWriter::new(std::fs::File::create(v_path)?);
        writeln!(wv, "x,v")?;
        for (x, v) in grid.nodes_v().iter().zip(&self.v) {
            writeln!(wv, "{x:.16e},{v:.16e}")?;
        }
        wv.flush()?;
        Ok(())
    }

    /// `{residual_inf, lambda_u, eig_mismatch, mass_balance_residual}`.
    pub fn certificate(&self, grid: &DualGrid, p: &ModelParams) -> Result<serde_json::Value> {
        Ok(serde_json::json!({
            "residual_inf": self.residual_inf,
            "lambda_u": self.lambda_u,
            "eig_mismatch": self.eig_mismatch,
            "mass_balance_residual": mass_balance_residual(grid, p, &self.u, &self.v)?,
            "newton_iterations": self.iterations,
        }))
    }
}
