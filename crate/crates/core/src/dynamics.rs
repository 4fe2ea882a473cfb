//! Method-of-lines integration of the predator–prey system.
//!
//! Unknowns are interleaved so the Jacobian is banded with bandwidth 2:
//! on predator nodes `u_i ↦ 2i`, `v_i ↦ 2i + 1`; on exclusion nodes
//! `u_i ↦ n_pred + i`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::banded::BandMatrix;
use crate::error::{check_len, Error, Result};
use crate::grid::DualGrid;
use crate::growth::GrowthFn;
use crate::radau::{Radau5, RadauOptions, SolverStats, StiffSystem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub d_u: f64,
    pub d_v: f64,
    pub growth: GrowthFn,
    pub a: f64,
    #[serde(rename = "L")]
    pub length: f64,
}

impl ModelParams {
    /// Lists every violated constraint.
    pub fn violations(&self) -> Vec<String> {
        let mut errs = Vec::new();
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("d_u", self.d_u),
            ("d_v", self.d_v),
        ] {
            if !(v.is_finite() && v > 0.0) {
                errs.push(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.length.is_finite() && self.length > 0.0) {
            errs.push(format!("L must be positive, got {}", self.length));
        }
        if !(self.a > 0.0 && self.a < self.length) {
            errs.push(format!("geometry requires 0 < a < L, got a = {}, L = {}", self.a, self.length));
        }
        errs
    }

    pub fn validate(&self) -> Result<()> {
        let errs = self.violations();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Domain(errs.join("; ")))
        }
    }

    pub fn with_a(&self, a: f64) -> Self {
        ModelParams { a, ..*self }
    }

    /// Default integration horizon `max(50/γ, 20 L²/d_u)`.
    pub fn default_t_end(&self) -> f64 {
        (50.0 / self.gamma).max(20.0 * self.length * self.length / self.d_u)
    }

    /// Grid obeying the default spacing rule, with at least 11 predator nodes.
    pub fn default_grid(&self) -> Result<DualGrid> {
        let h = DualGrid::default_spacing(self.length, self.d_u, self.growth.r());
        DualGrid::with_max_spacing(self.a, self.length, h, 11)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub t: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl State {
    /// Constant fields `u ≡ u0`, `v ≡ v0`.
    pub fn uniform(grid: &DualGrid, u0: f64, v0: f64) -> Self {
        State { t: 0.0, u: vec![u0; grid.n_u()], v: vec![v0; grid.n_pred()] }
    }

    /// The standard initial data `u ≡ 1`, `v ≡ 0.5`.
    pub fn standard_initial(grid: &DualGrid) -> Self {
        Self::uniform(grid, 1.0, 0.5)
    }

    fn check(&self, grid: &DualGrid) -> Result<()> {
        check_len(grid.n_u(), self.u.len())?;
        check_len(grid.n_pred(), self.v.len())
    }
}

/// Position of `u_i` in the packed state vector.
pub fn index_u(grid: &DualGrid, i: usize) -> usize {
    if i < grid.n_pred() {
        2 * i
    } else {
        grid.n_pred() + i
    }
}

/// Position of `v_i` in the packed state vector.
pub fn index_v(i: usize) -> usize {
    2 * i + 1
}

pub fn pack(grid: &DualGrid, s: &State) -> Vec<f64> {
    let mut y = vec![0.0; grid.n_u() + grid.n_pred()];
    for (i, &x) in s.u.iter().enumerate() {
        y[index_u(grid, i)] = x;
    }
    for (i, &x) in s.v.iter().enumerate() {
        y[index_v(i)] = x;
    }
    y
}

pub fn unpack(grid: &DualGrid, t: f64, y: &[f64]) -> State {
    State {
        t,
        u: (0..grid.n_u()).map(|i| y[index_u(grid, i)]).collect(),
        v: (0..grid.n_pred()).map(|i| y[index_v(i)]).collect(),
    }
}

/// Time derivative `(du/dt, dv/dt)` of the semi-discrete system.
pub fn rhs(grid: &DualGrid, p: &ModelParams, s: &State) -> Result<(Vec<f64>, Vec<f64>)> {
    s.check(grid)?;
    let g = &p.growth;
    let mut du = grid.laplacian_u(&s.u)?;
    for (i, d) in du.iter_mut().enumerate() {
        *d = p.d_u * *d + g.f(s.u[i]);
        if i < grid.n_pred() {
            *d -= p.beta * grid.predation_fraction(i) * s.u[i] * s.v[i];
        }
    }
    let mut dv = grid.laplacian_v(&s.v)?;
    for (i, d) in dv.iter_mut().enumerate() {
        *d = p.d_v * *d + (p.alpha * s.u[i] - p.gamma) * s.v[i];
    }
    Ok((du, dv))
}

/// Analytic Jacobian of [`rhs`] in the packed ordering.
pub fn jacobian(grid: &DualGrid, p: &ModelParams, s: &State) -> Result<BandMatrix> {
    s.check(grid)?;
    let sys = MolSystem { grid, params: p };
    let n = sys.dim();
    let mut jac = BandMatrix::zeros(n, 2, 2);
    sys.fill_jacobian(&s.u, &s.v, &mut jac);
    Ok(jac)
}

/// The semi-discrete system as a [`StiffSystem`].
pub struct MolSystem<'a> {
    pub grid: &'a DualGrid,
    pub params: &'a ModelParams,
}

impl MolSystem<'_> {
    fn fill_jacobian(&self, u: &[f64], v: &[f64], jac: &mut BandMatrix) {
        let grid = self.grid;
        let p = self.params;
        let nu = grid.n_u();
        for i in 0..nu {
            let (lo, d, hi) = grid.stencil_u(i);
            let r = index_u(grid, i);
            let mut diag = p.d_u * d + p.growth.f_prime(u[i]);
            if i < grid.n_pred() {
                let chi = grid.predation_fraction(i);
                diag -= p.beta * chi * v[i];
                jac.set(r, index_v(i), -p.beta * chi * u[i]);
            }
            jac.set(r, r, diag);
            if i > 0 {
                jac.set(r, index_u(grid, i - 1), p.d_u * lo);
            }
            if i + 1 < nu {
                jac.set(r, index_u(grid, i + 1), p.d_u * hi);
            }
        }
        let nv = grid.n_pred();
        for i in 0..nv {
            let (lo, d, hi) = grid.stencil_v(i);
            let r = index_v(i);
            jac.set(r, r, p.d_v * d + p.alpha * u[i] - p.gamma);
            jac.set(r, index_u(grid, i), p.alpha * v[i]);
            if i > 0 {
                jac.set(r, index_v(i - 1), p.d_v * lo);
            }
            if i + 1 < nv {
                jac.set(r, index_v(i + 1), p.d_v * hi);
            }
        }
    }
}

impl StiffSystem for MolSystem<'_> {
    fn dim(&self) -> usize {
        self.grid.n_u() + self.grid.n_pred()
    }

    fn bandwidth(&self) -> (usize, usize) {
        (2, 2)
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let grid = self.grid;
        let p = self.params;
        let g = &p.growth;
        let nu = grid.n_u();
        let nv = grid.n_pred();
        let u = |i: usize| y[index_u(grid, i)];
        for i in 0..nu {
            let (lo, d, hi) = grid.stencil_u(i);
            let mut lap = d * u(i);
            if i > 0 {
                lap += lo * u(i - 1);
            }
            if i + 1 < nu {
                lap += hi * u(i + 1);
            }
            let mut val = p.d_u * lap + g.f(u(i));
            if i < nv {
                val -= p.beta * grid.predation_fraction(i) * u(i) * y[index_v(i)];
            }
            dy[index_u(grid, i)] = val;
        }
        for i in 0..nv {
            let (lo, d, hi) = grid.stencil_v(i);
            let vi = y[index_v(i)];
            let mut lap = d * vi;
            if i > 0 {
                lap += lo * y[index_v(i - 1)];
            }
            if i + 1 < nv {
                lap += hi * y[index_v(i + 1)];
            }
            dy[index_v(i)] = p.d_v * lap + (p.alpha * u(i) - p.gamma) * vi;
        }
    }

    fn jacobian(&self, _t: f64, y: &[f64], jac: &mut BandMatrix) {
        let st = unpack(self.grid, 0.0, y);
        self.fill_jacobian(&st.u, &st.v, jac);
    }
}

/// Output cadence and tolerances for [`simulate_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub t_end: f64,
    pub rtol: f64,
    pub atol: f64,
    /// Uniform outputs over the whole window.
    pub n_coarse: usize,
    /// Uniform outputs over the dense tail window.
    pub n_tail: usize,
    /// Start of the dense tail window; `None` means the final quarter of `[init.t, t_end]`.
    pub dense_from: Option<f64>,
}

impl SimOptions {
    pub fn new(t_end: f64) -> Self {
        SimOptions { t_end, rtol: 1e-7, atol: 1e-9, n_coarse: 200, n_tail: 2000, dense_from: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub snapshots: Vec<State>,
    pub u_series: Vec<f64>,
    pub v_series: Vec<f64>,
    pub params: ModelParams,
    pub grid: DualGrid,
    pub solver_stats: SolverStats,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    pub fn last(&self) -> &State {
        self.snapshots.last().expect("trajectory is never empty")
    }

    /// Appends a continuation that starts at this trajectory's final state.
    pub fn extend(&mut self, more: Trajectory) {
        let t_last = self.last().t;
        for ((s, u), v) in more.snapshots.into_iter().zip(more.u_series).zip(more.v_series) {
            if s.t > t_last {
                self.snapshots.push(s);
                self.u_series.push(u);
                self.v_series.push(v);
            }
        }
        let st = &mut self.solver_stats;
        st.accepted += more.solver_stats.accepted;
        st.rejected += more.solver_stats.rejected;
        st.newton_failures += more.solver_stats.newton_failures;
        st.rhs_evals += more.solver_stats.rhs_evals;
        st.factorizations += more.solver_stats.factorizations;
    }

    /// Writes `t,U,V` rows.
    pub fn write_totals_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "t,U,V")?;
        for ((s, u), v) in self.snapshots.iter().zip(&self.u_series).zip(&self.v_series) {
            writeln!(w, "{:.16e},{:.16e},{:.16e}", s.t, u, v)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Long-format field dumps `t,x,u` and `t,x,v` for the given snapshot indices.
    pub fn write_fields_csv(&self, u_path: &Path, v_path: &Path, which: &[usize]) -> Result<()> {
        let mut wu = std::io::BufWriter::new(std::fs::File::create(u_path)?);
        let mut wv = std::io::BufWriter::new(std::fs::File::create(v_path)?);
        writeln!(wu, "t,x,u")?;
        writeln!(wv, "t,x,v")?;
        for &k in which {
            let s = &self.snapshots[k];
            for (x, u) in self.grid.nodes_u().iter().zip(&s.u) {
                writeln!(wu, "{:.16e},{:.16e},{:.16e}", s.t, x, u)?;
            }
            for (x, v) in self.grid.nodes_v().iter().zip(&s.v) {
                writeln!(wv, "{:.16e},{:.16e},{:.16e}", s.t, x, v)?;
            }
        }
        wu.flush()?;
        wv.flush()?;
        Ok(())
    }
}

/// Total populations `(U, V)` per snapshot.
pub fn totals(traj: &Trajectory) -> (Vec<f64>, Vec<f64>) {
    (traj.u_series.clone(), traj.v_series.clone())
}

fn output_times(t0: f64, o: &SimOptions) -> Vec<f64> {
    let span = o.t_end - t0;
    let mut ts: Vec<f64> = (0..=o.n_coarse.max(1)).map(|k| t0 + span * k as f64 / o.n_coarse.max(1) as f64).collect();
    let start = o.dense_from.unwrap_or(o.t_end - 0.25 * span).clamp(t0, o.t_end);
    if o.n_tail > 0 {
        let w = o.t_end - start;
        ts.extend((0..=o.n_tail).map(|k| start + w * k as f64 / o.n_tail as f64));
    }
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
    if let Some(last) = ts.last_mut() {
        *last = o.t_end;
    }
    ts
}

pub fn simulate(grid: &DualGrid, p: &ModelParams, init: &State, t_end: f64, rtol: f64, atol: f64) -> Result<Trajectory> {
    simulate_with(grid, p, init, &SimOptions { rtol, atol, ..SimOptions::new(t_end) })
}

pub fn simulate_with(grid: &DualGrid, p: &ModelParams, init: &State, o: &SimOptions) -> Result<Trajectory> {
    p.validate()?;
    init.check(grid)?;
    if !(o.t_end > init.t) {
        return Err(Error::Domain(format!("t_end = {} must exceed the initial time {}", o.t_end, init.t)));
    }
    let sys = MolSystem { grid, params: p };
    let opts = RadauOptions { rtol: o.rtol, atol: o.atol, ..RadauOptions::default() };
    let mut stepper = Radau5::new(&sys, init.t, pack(grid, init), opts)?;
    let times = output_times(init.t, o);
    let mut traj = Trajectory {
        snapshots: Vec::with_capacity(times.len()),
        u_series: Vec::with_capacity(times.len()),
        v_series: Vec::with_capacity(times.len()),
        params: *p,
        grid: grid.clone(),
        solver_stats: SolverStats::default(),
    };
    for &t in &times {
        let y = stepper.advance_to(t)?;
        let s = unpack(grid, t, &y);
        traj.u_series.push(grid.integrate_u(&s.u)?);
        traj.v_series.push(grid.integrate_v(&s.v)?);
        traj.snapshots.push(s);
    }
    traj.solver_stats = stepper.stats();
    Ok(traj)
}
