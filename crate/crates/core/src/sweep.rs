//! Sweeps over the exclusion-zone size `a`: tail statistics, regime
//! classification, limiting profiles and bifurcation markers.

use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{simulate_with, ModelParams, SimOptions, State, Trajectory};
use crate::error::{Error, Result};
use crate::grid::DualGrid;

/// Minimum number of samples in the tail window.
pub const MIN_TAIL_SAMPLES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Class {
    CoexistenceEquilibrium,
    Extinction,
    PreyOnly,
    LimitCycle,
    Irregular,
}

impl Class {
    pub fn as_str(self) -> &'static str {
        match self {
            Class::CoexistenceEquilibrium => "coexistence_equilibrium",
            Class::Extinction => "extinction",
            Class::PreyOnly => "prey_only",
            Class::LimitCycle => "limit_cycle",
            Class::Irregular => "irregular",
        }
    }

    /// Classes whose tail is a single state.
    pub fn is_equilibrium(self) -> bool {
        matches!(self, Class::CoexistenceEquilibrium | Class::Extinction | Class::PreyOnly)
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative tail amplitude below which the tail counts as stationary.
    pub tol_eq: f64,
    /// Absolute density below which a population counts as extinct.
    pub tol_ext: f64,
    /// Fraction of the simulated time forming the tail window.
    pub tail_frac: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { tol_eq: 1e-4, tol_ext: 1e-5, tail_frac: 0.25 }
    }
}

/// Max, time-weighted mean and min of the totals over the tail window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailStats {
    pub u_hat: f64,
    pub u_bar: f64,
    pub u_check: f64,
    pub v_hat: f64,
    pub v_bar: f64,
    pub v_check: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub samples: usize,
}

fn tail_start(t: &[f64], frac: f64) -> Result<usize> {
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(Error::Domain(format!("tail fraction must lie in (0, 1], got {frac}")));
    }
    let (t0, t1) = match (t.first(), t.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(Error::InsufficientTail { got: 0, need: MIN_TAIL_SAMPLES }),
    };
    let ts = t1 - frac * (t1 - t0);
    let k = t.partition_point(|&x| x < ts - 1e-12 * t1.abs().max(1.0));
    let got = t.len() - k;
    if got < MIN_TAIL_SAMPLES {
        return Err(Error::InsufficientTail { got, need: MIN_TAIL_SAMPLES });
    }
    Ok(k)
}

fn max_mean_min(t: &[f64], x: &[f64]) -> (f64, f64, f64) {
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let span = t[t.len() - 1] - t[0];
    let mean = if span > 0.0 {
        let s: f64 = t.windows(2).zip(x.windows(2)).map(|(tw, xw)| 0.5 * (tw[1] - tw[0]) * (xw[0] + xw[1])).sum();
        s / span
    } else {
        x.iter().sum::<f64>() / x.len() as f64
    };
    // the trapezoid mean of a sampled series can stray outside [lo, hi] by rounding
    (hi, mean.clamp(lo, hi), lo)
}

/// Tail statistics of raw `(t, U, V)` series.
pub fn tail_stats_series(t: &[f64], u: &[f64], v: &[f64], frac: f64) -> Result<TailStats> {
    crate::error::check_len(t.len(), u.len())?;
    crate::error::check_len(t.len(), v.len())?;
    let k = tail_start(t, frac)?;
    let (u_hat, u_bar, u_check) = max_mean_min(&t[k..], &u[k..]);
    let (v_hat, v_bar, v_check) = max_mean_min(&t[k..], &v[k..]);
    Ok(TailStats {
        u_hat,
        u_bar,
        u_check,
        v_hat,
        v_bar,
        v_check,
        t_start: t[k],
        t_end: t[t.len() - 1],
        samples: t.len() - k,
    })
}

pub fn tail_stats(traj: &Trajectory, frac: f64) -> Result<TailStats> {
    tail_stats_series(&traj.times(), &traj.u_series, &traj.v_series, frac)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub class: Class,
    pub period: Option<f64>,
    /// `(Û − Ǔ, V̂ − V̌)` over the tail window.
    pub amplitudes: (f64, f64),
    pub peaks: usize,
    pub flags: Vec<String>,
}

/// Peak times and heights of local maxima above `level` with at least the given prominence.
pub fn find_peaks(t: &[f64], x: &[f64], level: f64, prominence: f64) -> Vec<(f64, f64)> {
    let n = x.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if x[i] > x[i - 1] && x[i] > level {
            // plateau handling: walk to the end of equal values
            let mut j = i;
            while j + 1 < n && x[j + 1] == x[i] {
                j += 1;
            }
            if j + 1 < n && x[j + 1] < x[i] {
                let h = x[i];
                let mut left_min = h;
                for k in (0..i).rev() {
                    if x[k] > h {
                        break;
                    }
                    left_min = left_min.min(x[k]);
                }
                let mut right_min = h;
                for &xk in &x[j + 1..] {
                    if xk > h {
                        break;
                    }
                    right_min = right_min.min(xk);
                }
                if h - left_min.max(right_min) >= prominence {
                    let (tp, hp) = if i == j {
                        refine_peak(&t[i - 1..=i + 1], &x[i - 1..=i + 1])
                    } else {
                        (0.5 * (t[i] + t[j]), h)
                    };
                    out.push((tp, hp));
                }
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Vertex of the parabola through three samples.
fn refine_peak(t: &[f64], x: &[f64]) -> (f64, f64) {
    let (h0, h1) = (t[1] - t[0], t[2] - t[1]);
    let d0 = (x[1] - x[0]) / h0;
    let d1 = (x[2] - x[1]) / h1;
    let c = (d1 - d0) / (h0 + h1);
    if c >= 0.0 {
        return (t[1], x[1]);
    }
    // x ≈ x1 + b (s − t1) + c (s − t1)², b from the centred slope
    let b = d0 + c * h0;
    let ds = (-b / (2.0 * c)).clamp(-h0, h1);
    (t[1] + ds, x[1] + b * ds + c * ds * ds)
}

/// Mean and relative standard deviation of successive differences.
fn spacing_stats(times: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    let m = d.iter().sum::<f64>() / d.len() as f64;
    let var = d.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / d.len() as f64;
    (m, var.sqrt() / m)
}

/// Classification of raw `(t, U, V)` series on a domain of length `length`.
pub fn classify_series(t: &[f64], u: &[f64], v: &[f64], length: f64, tol: &Tolerances) -> Result<(TailStats, Outcome)> {
    let st = tail_stats_series(t, u, v, tol.tail_frac)?;
    let amplitudes = (st.u_hat - st.u_check, st.v_hat - st.v_check);
    let mut flags = Vec::new();
    let out = |class, period, peaks, flags| Outcome { class, period, amplitudes, peaks, flags };
    if st.v_bar < tol.tol_ext {
        if st.u_bar < tol.tol_ext * length {
            return Ok((st, out(Class::Extinction, None, 0, flags)));
        }
        if st.u_bar >= (1.0 - tol.tol_eq) * length {
            return Ok((st, out(Class::PreyOnly, None, 0, flags)));
        }
        // predators gone but prey not yet settled at 0 or 1
        flags.push("prey_unsettled".to_string());
        let class = if st.u_bar < 0.5 * length { Class::Extinction } else { Class::PreyOnly };
        return Ok((st, out(class, None, 0, flags)));
    }
    let scale = st.u_bar.max(st.v_bar);
    if amplitudes.0 < tol.tol_eq * scale && amplitudes.1 < tol.tol_eq * scale {
        return Ok((st, out(Class::CoexistenceEquilibrium, None, 0, flags)));
    }
    let k = t.len() - st.samples;
    let pk = find_peaks(&t[k..], &v[k..], st.v_bar, 0.25 * amplitudes.1);
    if pk.len() >= 2 {
        let first = pk[0].1 - st.v_bar;
        let last = pk[pk.len() - 1].1 - st.v_bar;
        if last < 0.95 * first && pk.windows(2).all(|w| w[1].1 <= w[0].1) {
            flags.push("damped".to_string());
        }
    }
    if pk.len() >= 4 {
        let times: Vec<f64> = pk.iter().map(|p| p.0).collect();
        let (period, rel) = spacing_stats(&times);
        if rel < 0.05 {
            return Ok((st, out(Class::LimitCycle, Some(period), pk.len(), flags)));
        }
    }
    Ok((st, out(Class::Irregular, None, pk.len(), flags)))
}

pub fn classify(traj: &Trajectory, tol: &Tolerances) -> Result<(TailStats, Outcome)> {
    classify_series(&traj.times(), &traj.u_series, &traj.v_series, traj.params.length, tol)
}

/// Whether the classification sits within a factor 2 of one of its thresholds.
pub fn near_boundary(st: &TailStats, o: &Outcome, t: &[f64], v: &[f64], tol: &Tolerances) -> bool {
    let within2 = |x: f64, thr: f64| x >= 0.5 * thr && x <= 2.0 * thr;
    if within2(st.v_bar, tol.tol_ext) {
        return true;
    }
    if st.v_bar < tol.tol_ext {
        return o.flags.iter().any(|f| f == "prey_unsettled");
    }
    let scale = st.u_bar.max(st.v_bar);
    if within2(o.amplitudes.0.max(o.amplitudes.1), tol.tol_eq * scale) {
        return true;
    }
    if o.flags.iter().any(|f| f == "damped") {
        return true;
    }
    if matches!(o.class, Class::LimitCycle | Class::Irregular) {
        let k = t.len() - st.samples;
        let pk = find_peaks(&t[k..], &v[k..], st.v_bar, 0.25 * o.amplitudes.1);
        if pk.len() >= 4 {
            let times: Vec<f64> = pk.iter().map(|p| p.0).collect();
            return within2(spacing_stats(&times).1, 0.05);
        }
        // too few peaks to judge regularity
        return pk.len() < 4;
    }
    false
}

/// Numerical settings of a sweep row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    pub rtol: f64,
    pub atol: f64,
    /// Base horizon; `None` uses the parameter-dependent default.
    pub t_end: Option<f64>,
    /// Upper bound on the horizon as a multiple of the base horizon.
    pub max_extension: f64,
    pub n_coarse: usize,
    pub n_tail: usize,
    /// Mesh spacing; `None` uses the default spacing rule.
    pub max_spacing: Option<f64>,
    pub min_pred: usize,
    pub tol: Tolerances,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            rtol: 1e-7,
            atol: 1e-9,
            t_end: None,
            max_extension: 4.0,
            n_coarse: 200,
            n_tail: 2000,
            max_spacing: None,
            min_pred: 11,
            tol: Tolerances::default(),
        }
    }
}

impl SweepSettings {
    pub fn grid(&self, p: &ModelParams) -> Result<DualGrid> {
        match self.max_spacing {
            Some(h) => DualGrid::with_max_spacing(p.a, p.length, h, self.min_pred),
            None => {
                let h = DualGrid::default_spacing(p.length, p.d_u, p.growth.r());
                DualGrid::with_max_spacing(p.a, p.length, h, self.min_pred)
            }
        }
    }

    pub fn sim_options(&self, t_end: f64) -> SimOptions {
        SimOptions { rtol: self.rtol, atol: self.atol, n_coarse: self.n_coarse, n_tail: self.n_tail, ..SimOptions::new(t_end) }
    }
}

/// Simulates from `u ≡ 1, v ≡ 0.5`, extending the horizon by half the base
/// horizon at a time while the classification is borderline.
pub fn run_classified(p: &ModelParams, s: &SweepSettings) -> Result<(Trajectory, TailStats, Outcome)> {
    p.validate()?;
    let grid = s.grid(p)?;
    let base = s.t_end.unwrap_or_else(|| p.default_t_end());
    let mut traj = simulate_with(&grid, p, &State::standard_initial(&grid), &s.sim_options(base))?;
    loop {
        let (st, mut o) = classify(&traj, &s.tol)?;
        let t_now = traj.last().t;
        let borderline = near_boundary(&st, &o, &traj.times(), &traj.v_series, &s.tol);
        if !borderline || t_now + 0.5 * base > s.max_extension * base * (1.0 + 1e-12) {
            if borderline {
                o.flags.push("borderline".to_string());
            }
            if t_now > base * (1.0 + 1e-12) {
                o.flags.push(format!("extended_to={t_now}"));
            }
            return Ok((traj, st, o));
        }
        let t_new = t_now + 0.5 * base;
        let opts = SimOptions { dense_from: Some(t_new - s.tol.tail_frac * t_new), ..s.sim_options(t_new) };
        let more = simulate_with(&grid, p, traj.last(), &opts)?;
        traj.extend(more);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub a: f64,
    pub stats: Option<TailStats>,
    pub outcome: Option<Outcome>,
    pub error: Option<String>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Marker {
    pub a: f64,
    /// Half-width of the grid cell bracketing the marker.
    pub uncertainty: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Markers {
    pub a_hopf: Option<Marker>,
    pub a_ext: Option<Marker>,
    pub a_max: Option<Marker>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitingProfile {
    pub a_grid: Vec<f64>,
    pub rows: Vec<SweepRow>,
    pub markers: Markers,
    pub params: ModelParams,
    pub settings: SweepSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Rows on the current rayon pool; sequential without the `parallel` feature.
    Parallel,
}

/// `n` equally spaced interior values `L k/(n+1)`.
pub fn interior_a_grid(length: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|k| length * k as f64 / (n + 1) as f64).collect()
}

fn run_row(p: &ModelParams, a: f64, s: &SweepSettings) -> SweepRow {
    match run_classified(&p.with_a(a), s) {
        Ok((_, st, o)) => SweepRow { a, stats: Some(st), outcome: Some(o), error: None, flags: Vec::new() },
        Err(e) => SweepRow { a, stats: None, outcome: None, error: Some(e.to_string()), flags: vec!["failed".into()] },
    }
}

pub fn limiting_profile(p: &ModelParams, a_grid: &[f64], s: &SweepSettings) -> Result<LimitingProfile> {
    limiting_profile_with(p, a_grid, s, Execution::Parallel)
}

pub fn limiting_profile_with(p: &ModelParams, a_grid: &[f64], s: &SweepSettings, exec: Execution) -> Result<LimitingProfile> {
    if a_grid.is_empty() {
        return Err(Error::Domain("a grid is empty".into()));
    }
    if a_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("a grid must be strictly increasing".into()));
    }
    if let Some(bad) = a_grid.iter().find(|&&a| !(a > 0.0 && a < p.length)) {
        return Err(Error::Domain(format!("a = {bad} outside (0, L = {})", p.length)));
    }
    let mut rows: Vec<SweepRow> = match exec {
        Execution::Sequential => a_grid.iter().map(|&a| run_row(p, a, s)).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            a_grid.par_iter().map(|&a| run_row(p, a, s)).collect()
        }
        #[cfg(not(feature = "parallel"))]
        Execution::Parallel => a_grid.iter().map(|&a| run_row(p, a, s)).collect(),
    };
    flag_u_bar_increases(&mut rows);
    let mut prof = LimitingProfile { a_grid: a_grid.to_vec(), rows, markers: Markers::default(), params: *p, settings: *s };
    prof.markers = detect_markers(&prof);
    Ok(prof)
}

/// Flags rows where `Ū` rises above its predecessor by more than grid noise.
fn flag_u_bar_increases(rows: &mut [SweepRow]) {
    for k in 1..rows.len() {
        if let (Some(prev), Some(cur)) = (rows[k - 1].stats, rows[k].stats) {
            if cur.u_bar > prev.u_bar * (1.0 + 1e-3) + 1e-9 {
                rows[k].flags.push("u_bar_increase".into());
            }
        }
    }
}

fn cell(a: &[f64], k: usize) -> f64 {
    let left = if k > 0 { a[k] - a[k - 1] } else { 0.0 };
    let right = if k + 1 < a.len() { a[k + 1] - a[k] } else { 0.0 };
    0.5 * left.max(right)
}

pub fn detect_markers(prof: &LimitingProfile) -> Markers {
    let class = |k: usize| prof.rows[k].outcome.as_ref().map(|o| o.class);
    let a: Vec<f64> = prof.rows.iter().map(|r| r.a).collect();
    let mut m = Markers::default();
    for k in 1..prof.rows.len() {
        let (c0, c1) = (class(k - 1), class(k));
        let mid = Marker { a: 0.5 * (a[k - 1] + a[k]), uncertainty: 0.5 * (a[k] - a[k - 1]) };
        if m.a_hopf.is_none() && c0 == Some(Class::CoexistenceEquilibrium) && c1 == Some(Class::LimitCycle) {
            m.a_hopf = Some(mid);
        }
        let nontrivial = matches!(c0, Some(Class::CoexistenceEquilibrium | Class::LimitCycle | Class::Irregular));
        if m.a_ext.is_none() && nontrivial && c1 == Some(Class::Extinction) {
            m.a_ext = Some(mid);
        }
    }
    let best = prof
        .rows
        .iter()
        .enumerate()
        .filter_map(|(k, r)| r.stats.map(|s| (k, s.v_bar)))
        .fold(None, |acc: Option<(usize, f64)>, (k, v)| match acc {
            Some((_, bv)) if bv >= v => acc,
            _ => Some((k, v)),
        });
    m.a_max = best.map(|(k, _)| Marker { a: a[k], uncertainty: cell(&a, k) });
    m
}

fn csv_field(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.16e}")).unwrap_or_default()
}

impl LimitingProfile {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "a,U_hat,U_bar,U_check,V_hat,V_bar,V_check,class,period,flags")?;
        for r in &self.rows {
            let s = r.stats;
            let class = r.outcome.as_ref().map(|o| o.class.as_str()).unwrap_or("failed");
            let period = r.outcome.as_ref().and_then(|o| o.period);
            let mut flags: Vec<String> = r.outcome.as_ref().map(|o| o.flags.clone()).unwrap_or_default();
            flags.extend(r.flags.iter().cloned());
            writeln!(
                w,
                "{:.16e},{},{},{},{},{},{},{},{},{}",
                r.a,
                csv_field(s.map(|s| s.u_hat)),
                csv_field(s.map(|s| s.u_bar)),
                csv_field(s.map(|s| s.u_check)),
                csv_field(s.map(|s| s.v_hat)),
                csv_field(s.map(|s| s.v_bar)),
                csv_field(s.map(|s| s.v_check)),
                class,
                csv_field(period),
                flags.join(";").replace(',', " "),
            )?;
        }
        w.flush()?;
        Ok(())
    }

    /// Markers, parameters, settings and per-row errors.
    pub fn summary_json(&self) -> serde_json::Value {
        let errors: Vec<_> = self
            .rows
            .iter()
            .filter_map(|r| r.error.as_ref().map(|e| serde_json::json!({ "a": r.a, "error": e })))
            .collect();
        serde_json::json!({
            "markers": self.markers,
            "params": self.params,
            "settings": self.settings,
            "a_grid": self.a_grid,
            "errors": errors,
        })
    }
}
