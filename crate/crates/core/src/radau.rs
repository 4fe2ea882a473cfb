//! Three-stage Radau IIA integrator (order 5, L-stable) for banded stiff systems.
//!
//! The stage equations are solved by simplified Newton iterations on the full
//! stage-coupled system `I − h (A ⊗ J)`, ordered component-major so the
//! matrix stays banded. Error estimation and step-size control follow the
//! classical RADAU5 scheme; dense output uses the collocation polynomial.

use crate::banded::{BandLu, BandMatrix};
use crate::error::{Error, Result};

/// A stiff ODE system `y' = F(t, y)` with a banded Jacobian.
pub trait StiffSystem {
    fn dim(&self) -> usize;

    /// `(lower, upper)` bandwidth of the Jacobian.
    fn bandwidth(&self) -> (usize, usize);

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);

    /// Writes `∂F/∂y` into a zeroed band matrix of the declared bandwidth.
    fn jacobian(&self, t: f64, y: &[f64], jac: &mut BandMatrix);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadauOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for RadauOptions {
    fn default() -> Self {
        RadauOptions { rtol: 1e-7, atol: 1e-9, h_init: 1e-6, h_max: f64::INFINITY, max_steps: 2_000_000 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SolverStats {
    pub accepted: usize,
    pub rejected: usize,
    pub newton_failures: usize,
    pub rhs_evals: usize,
    pub factorizations: usize,
}

struct Tableau {
    c: [f64; 3],
    a: [[f64; 3]; 3],
    dd: [f64; 3],
    u1: f64,
}

impl Tableau {
    fn new() -> Self {
        let s6 = 6f64.sqrt();
        let c = [(4.0 - s6) / 10.0, (4.0 + s6) / 10.0, 1.0];
        let a = [
            [(88.0 - 7.0 * s6) / 360.0, (296.0 - 169.0 * s6) / 1800.0, (-2.0 + 3.0 * s6) / 225.0],
            [(296.0 + 169.0 * s6) / 1800.0, (88.0 + 7.0 * s6) / 360.0, (-2.0 - 3.0 * s6) / 225.0],
            [(16.0 - s6) / 36.0, (16.0 + s6) / 36.0, 1.0 / 9.0],
        ];
        let dd = [-(13.0 + 7.0 * s6) / 3.0, (-13.0 + 7.0 * s6) / 3.0, -1.0 / 3.0];
        let gamma0 = (6.0 + 81f64.cbrt() - 9f64.cbrt()) / 30.0;
        Tableau { c, a, dd, u1: 1.0 / gamma0 }
    }
}

/// Collocation polynomial of the last accepted step.
#[derive(Debug, Clone)]
struct Collocation {
    t0: f64,
    h: f64,
    y0: Vec<f64>,
    stages: [Vec<f64>; 3],
}

impl Collocation {
    /// Evaluates the cubic through `(0, y0)` and `(c_i, y0 + z_i)` at `t`.
    fn eval(&self, c: &[f64; 3], t: f64, out: &mut [f64]) {
        let s = (t - self.t0) / self.h;
        let nodes = [0.0, c[0], c[1], c[2]];
        let mut basis = [0.0; 4];
        for (k, b) in basis.iter_mut().enumerate() {
            let mut p = 1.0;
            for (m, &xm) in nodes.iter().enumerate() {
                if m != k {
                    p *= (s - xm) / (nodes[k] - xm);
                }
            }
            *b = p;
        }
        for i in 0..out.len() {
            // l0 + l1 + l2 + l3 = 1, so the y0 terms collapse
            out[i] = self.y0[i]
                + basis[1] * self.stages[0][i]
                + basis[2] * self.stages[1][i]
                + basis[3] * self.stages[2][i];
        }
    }
}

/// Stateful Radau IIA stepper; call [`Radau5::advance_to`] repeatedly.
pub struct Radau5<'s, S: StiffSystem> {
    sys: &'s S,
    tab: Tableau,
    opts: RadauOptions,
    rtol: f64,
    atol: f64,
    fnewt: f64,
    t: f64,
    y: Vec<f64>,
    h: f64,
    last: Option<Collocation>,
    first: bool,
    last_rejected: bool,
    stats: SolverStats,
}

fn rms(v: &[f64], scal: &[f64]) -> f64 {
    let s: f64 = v.iter().zip(scal).map(|(x, w)| (x / w).powi(2)).sum();
    (s / v.len() as f64).sqrt()
}

impl<'s, S: StiffSystem> Radau5<'s, S> {
    pub fn new(sys: &'s S, t0: f64, y0: Vec<f64>, opts: RadauOptions) -> Result<Self> {
        if y0.len() != sys.dim() {
            return Err(Error::SizeMismatch { expected: sys.dim(), got: y0.len() });
        }
        if !(opts.rtol > 0.0 && opts.atol > 0.0) {
            return Err(Error::Domain("tolerances must be positive".into()));
        }
        // tolerance transformation used by RADAU5 for the order-5 estimator
        let quot = opts.atol / opts.rtol;
        let rtol = 0.1 * opts.rtol.powf(2.0 / 3.0);
        let atol = rtol * quot;
        let fnewt = (10.0 * f64::EPSILON / rtol).max(0.03f64.min(rtol.sqrt()));
        Ok(Radau5 {
            sys,
            tab: Tableau::new(),
            opts,
            rtol,
            atol,
            fnewt,
            t: t0,
            y: y0,
            h: opts.h_init,
            last: None,
            first: true,
            last_rejected: false,
            stats: SolverStats::default(),
        })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn state(&self) -> &[f64] {
        &self.y
    }

    pub fn stats(&self) -> SolverStats {
        self.stats
    }

    /// Integrates up to `t_out` and returns the state there.
    ///
    /// Steps may overshoot `t_out`; the returned value then comes from the
    /// collocation polynomial of the covering step.
    pub fn advance_to(&mut self, t_out: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.y.len()];
        if let Some(col) = &self.last {
            if t_out <= self.t && t_out >= col.t0 {
                col.eval(&self.tab.c, t_out, &mut out);
                return Ok(out);
            }
        }
        if t_out <= self.t {
            return Ok(self.y.clone());
        }
        while self.t < t_out {
            self.step()?;
        }
        match &self.last {
            Some(col) if self.t != t_out => col.eval(&self.tab.c, t_out, &mut out),
            _ => out.copy_from_slice(&self.y),
        }
        Ok(out)
    }

    fn scale(&self) -> Vec<f64> {
        self.y.iter().map(|y| self.atol + self.rtol * y.abs()).collect()
    }

    fn step(&mut self) -> Result<()> {
        let n = self.y.len();
        let sys = self.sys;
        let (kl, ku) = sys.bandwidth();
        let mut jac = BandMatrix::zeros(n, kl, ku);
        sys.jacobian(self.t, &self.y, &mut jac);
        let mut f0 = vec![0.0; n];
        sys.rhs(self.t, &self.y, &mut f0);
        self.stats.rhs_evals += 1;
        let scal = self.scale();
        let posneg = 1.0;

        loop {
            if self.stats.accepted + self.stats.rejected > self.opts.max_steps {
                return Err(Error::IntegrationFailure(format!(
                    "step budget of {} exhausted at t = {}",
                    self.opts.max_steps, self.t
                )));
            }
            let h = self.h.min(self.opts.h_max);
            if h < 1e-14 * self.t.abs().max(1.0) {
                return Err(Error::StiffnessFailure { t: self.t, h });
            }
            let (stage_lu, e1_lu) = match self.factor(&jac, h) {
                Ok(f) => f,
                Err(_) => {
                    self.h = h * 0.5;
                    self.stats.newton_failures += 1;
                    continue;
                }
            };

            // starting values from the previous collocation polynomial
            let mut z = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
            if let Some(col) = &self.last {
                let mut tmp = vec![0.0; n];
                for (s, zs) in z.iter_mut().enumerate() {
                    col.eval(&self.tab.c, self.t + self.tab.c[s] * h, &mut tmp);
                    for i in 0..n {
                        zs[i] = tmp[i] - self.y[i];
                    }
                }
            }

            let newton = self.newton(&stage_lu, &mut z, h, &scal);
            let newt = match newton {
                Some(it) => it,
                None => {
                    self.stats.newton_failures += 1;
                    self.h = h * 0.5;
                    self.last_rejected = true;
                    continue;
                }
            };

            // error estimate
            let mut f1 = vec![0.0; n];
            for i in 0..n {
                f1[i] = (self.tab.dd[0] * z[0][i] + self.tab.dd[1] * z[1][i] + self.tab.dd[2] * z[2][i]) / h;
            }
            let mut cont: Vec<f64> = (0..n).map(|i| f1[i] + f0[i]).collect();
            e1_lu.solve_in_place(&mut cont);
            let mut err = rms(&cont, &scal).max(1e-10);
            if err >= 1.0 && (self.first || self.last_rejected) {
                let trial: Vec<f64> = (0..n).map(|i| self.y[i] + cont[i]).collect();
                let mut ft = vec![0.0; n];
                sys.rhs(self.t, &trial, &mut ft);
                self.stats.rhs_evals += 1;
                cont = (0..n).map(|i| ft[i] + f1[i]).collect();
                e1_lu.solve_in_place(&mut cont);
                err = rms(&cont, &scal).max(1e-10);
            }

            let safe: f64 = 0.9;
            let nit = 7.0;
            let fac = safe.min(safe * (2.0 * nit + 1.0) / (newt as f64 + 2.0 * nit));
            let quot = (1.0 / 8.0f64).max((1.0 / 0.2f64).min(err.powf(0.25) / fac));
            let mut hnew = h / quot;

            if err < 1.0 {
                let y_new: Vec<f64> = (0..n).map(|i| self.y[i] + z[2][i]).collect();
                if y_new.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFiniteState(self.t + h));
                }
                self.last = Some(Collocation { t0: self.t, h, y0: self.y.clone(), stages: z });
                self.t += posneg * h;
                self.y = y_new;
                self.stats.accepted += 1;
                if self.last_rejected {
                    hnew = hnew.min(h);
                }
                self.first = false;
                self.last_rejected = false;
                self.h = hnew.min(self.opts.h_max);
                return Ok(());
            }
            self.stats.rejected += 1;
            self.last_rejected = true;
            self.h = if self.first { h * 0.1 } else { hnew };
        }
    }

    fn factor(&mut self, jac: &BandMatrix, h: f64) -> Result<(BandLu, BandLu)> {
        let n = jac.dim();
        let (kl, ku) = (jac.lower(), jac.upper());
        let mut big = BandMatrix::zeros(3 * n, 3 * kl + 2, 3 * ku + 2);
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                let jij = jac.get(i, j);
                for s in 0..3 {
                    for sp in 0..3 {
                        let mut v = -h * self.tab.a[s][sp] * jij;
                        if i == j && s == sp {
                            v += 1.0;
                        }
                        if v != 0.0 {
                            big.set(3 * i + s, 3 * j + sp, v);
                        }
                    }
                }
            }
        }
        let mut e1 = BandMatrix::zeros(n, kl, ku);
        let fac1 = self.tab.u1 / h;
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                let v = if i == j { fac1 - jac.get(i, j) } else { -jac.get(i, j) };
                e1.set(i, j, v);
            }
        }
        self.stats.factorizations += 2;
        Ok((big.lu()?, e1.lu()?))
    }

    /// Simplified Newton on the stage equations; returns the iteration count.
    fn newton(&mut self, lu: &BandLu, z: &mut [Vec<f64>; 3], h: f64, scal: &[f64]) -> Option<usize> {
        let n = self.y.len();
        let mut fz = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        let mut ys = vec![0.0; n];
        let mut rhs = vec![0.0; 3 * n];
        let mut faccon = 1.0f64;
        let mut dyno_old = 0.0;
        let scal3: Vec<f64> = (0..3 * n).map(|k| scal[k / 3]).collect();
        for it in 1..=7 {
            for s in 0..3 {
                for i in 0..n {
                    ys[i] = self.y[i] + z[s][i];
                }
                self.sys.rhs(self.t + self.tab.c[s] * h, &ys, &mut fz[s]);
                self.stats.rhs_evals += 1;
            }
            for i in 0..n {
                for s in 0..3 {
                    let mut acc = z[s][i];
                    for sp in 0..3 {
                        acc -= h * self.tab.a[s][sp] * fz[sp][i];
                    }
                    rhs[3 * i + s] = -acc;
                }
            }
            if rhs.iter().any(|x| !x.is_finite()) {
                return None;
            }
            lu.solve_in_place(&mut rhs);
            let dyno = rms(&rhs, &scal3);
            if it > 1 {
                let theta = dyno / dyno_old;
                if theta >= 0.99 {
                    return None;
                }
                faccon = theta / (1.0 - theta);
            }
            for i in 0..n {
                for s in 0..3 {
                    z[s][i] += rhs[3 * i + s];
                }
            }
            if faccon * dyno <= self.fnewt || dyno < 1e-12 {
                return Some(it);
            }
            dyno_old = dyno.max(f64::EPSILON);
        }
        None
    }
}
