//! Dual conforming meshes on `[0, a]` and `[a, L]`.
//!
//! The prey lives on the merged mesh `0 = x₀ < … < x_M = L`; the predator
//! lives on the first `n_pred` of those nodes. The interface node `x = a` is
//! shared. Neumann conditions use a reflected ghost node, the interface uses
//! the three-point nonuniform stencil.

use serde::{Deserialize, Serialize};

use crate::banded::BandMatrix;
use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualGrid {
    a: f64,
    length: f64,
    n_pred: usize,
    n_ex: usize,
    h_pred: f64,
    h_ex: f64,
    nodes_u: Vec<f64>,
}

/// Tridiagonal row `(lower, diagonal, upper)` of a discrete operator.
pub type Stencil = (f64, f64, f64);

impl DualGrid {
    pub fn new(a: f64, length: f64, n_pred: usize, n_ex: usize) -> Result<Self> {
        if !(a > 0.0 && a < length && length.is_finite()) {
            return Err(Error::Domain(format!("need 0 < a < L, got a = {a}, L = {length}")));
        }
        if n_pred < 3 || n_ex < 3 {
            return Err(Error::Domain(format!(
                "each sub-mesh needs at least 3 nodes, got n_pred = {n_pred}, n_ex = {n_ex}"
            )));
        }
        let h_pred = a / (n_pred - 1) as f64;
        let h_ex = (length - a) / (n_ex - 1) as f64;
        let mut nodes_u = Vec::with_capacity(n_pred + n_ex - 1);
        nodes_u.extend((0..n_pred - 1).map(|i| i as f64 * h_pred));
        nodes_u.push(a);
        nodes_u.extend((1..n_ex - 1).map(|j| a + j as f64 * h_ex));
        nodes_u.push(length);
        Ok(DualGrid { a, length, n_pred, n_ex, h_pred, h_ex, nodes_u })
    }

    /// Picks node counts so neither spacing exceeds `max_spacing`, with at
    /// least `min_pred` nodes on the predator mesh.
    pub fn with_max_spacing(a: f64, length: f64, max_spacing: f64, min_pred: usize) -> Result<Self> {
        if !(max_spacing > 0.0) {
            return Err(Error::Domain(format!("max spacing must be positive, got {max_spacing}")));
        }
        let n_pred = ((a / max_spacing).ceil() as usize + 1).max(min_pred).max(3);
        let n_ex = (((length - a) / max_spacing).ceil() as usize + 1).max(3);
        DualGrid::new(a, length, n_pred, n_ex)
    }

    /// Default spacing rule `min(0.005 L, 0.1 √(d_u / r))`.
    pub fn default_spacing(length: f64, d_u: f64, r: f64) -> f64 {
        (0.005 * length).min(0.1 * (d_u / r).sqrt())
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn n_pred(&self) -> usize {
        self.n_pred
    }

    pub fn n_ex(&self) -> usize {
        self.n_ex
    }

    pub fn h_pred(&self) -> f64 {
        self.h_pred
    }

    pub fn h_ex(&self) -> f64 {
        self.h_ex
    }

    /// Number of prey nodes, `M + 1`.
    pub fn n_u(&self) -> usize {
        self.nodes_u.len()
    }

    pub fn interface(&self) -> usize {
        self.n_pred - 1
    }

    pub fn nodes_u(&self) -> &[f64] {
        &self.nodes_u
    }

    pub fn nodes_v(&self) -> &[f64] {
        &self.nodes_u[..self.n_pred]
    }

    /// Row `i` of the prey Laplacian.
    pub fn stencil_u(&self, i: usize) -> Stencil {
        let m = self.n_u() - 1;
        let (hp, he) = (self.h_pred, self.h_ex);
        let k = self.interface();
        if i == 0 {
            (0.0, -2.0 / (hp * hp), 2.0 / (hp * hp))
        } else if i == m {
            (2.0 / (he * he), -2.0 / (he * he), 0.0)
        } else if i < k {
            let c = 1.0 / (hp * hp);
            (c, -2.0 * c, c)
        } else if i == k {
            let d = hp * he * (hp + he);
            let (lo, hi) = (2.0 * he / d, 2.0 * hp / d);
            // diagonal as −(lo + hi) keeps the row sum exactly zero
            (lo, -(lo + hi), hi)
        } else {
            let c = 1.0 / (he * he);
            (c, -2.0 * c, c)
        }
    }

    /// Row `i` of the predator Laplacian.
    pub fn stencil_v(&self, i: usize) -> Stencil {
        let n = self.n_pred;
        let c = 1.0 / (self.h_pred * self.h_pred);
        if i == 0 {
            (0.0, -2.0 * c, 2.0 * c)
        } else if i == n - 1 {
            (2.0 * c, -2.0 * c, 0.0)
        } else {
            (c, -2.0 * c, c)
        }
    }

    /// Applies the stencil in difference form, so constants map to exactly zero.
    /// Every row has diagonal `−(lo + hi)`.
    fn apply(n: usize, field: &[f64], stencil: impl Fn(usize) -> Stencil) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let (lo, _, hi) = stencil(i);
                let mut s = 0.0;
                if i > 0 {
                    s += lo * (field[i - 1] - field[i]);
                }
                if i + 1 < n {
                    s += hi * (field[i + 1] - field[i]);
                }
                s
            })
            .collect()
    }

    pub fn laplacian_u(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n_u(), u.len())?;
        Ok(Self::apply(self.n_u(), u, |i| self.stencil_u(i)))
    }

    pub fn laplacian_v(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n_pred, v.len())?;
        Ok(Self::apply(self.n_pred, v, |i| self.stencil_v(i)))
    }

    /// Tridiagonal band matrix of `scale · L_u + diag(shift)`.
    pub fn operator_u(&self, scale: f64, shift: &[f64]) -> BandMatrix {
        let n = self.n_u();
        let mut m = BandMatrix::zeros(n, 1, 1);
        for i in 0..n {
            let (lo, d, hi) = self.stencil_u(i);
            m.set(i, i, scale * d + shift[i]);
            if i > 0 {
                m.set(i, i - 1, scale * lo);
            }
            if i + 1 < n {
                m.set(i, i + 1, scale * hi);
            }
        }
        m
    }

    /// Trapezoid weights on the prey mesh.
    pub fn weights_u(&self) -> Vec<f64> {
        let n = self.n_u();
        let k = self.interface();
        (0..n)
            .map(|i| {
                if i == 0 {
                    self.h_pred / 2.0
                } else if i < k {
                    self.h_pred
                } else if i == k {
                    (self.h_pred + self.h_ex) / 2.0
                } else if i < n - 1 {
                    self.h_ex
                } else {
                    self.h_ex / 2.0
                }
            })
            .collect()
    }

    /// Trapezoid weights on the predator mesh.
    pub fn weights_v(&self) -> Vec<f64> {
        let n = self.n_pred;
        (0..n)
            .map(|i| if i == 0 || i == n - 1 { self.h_pred / 2.0 } else { self.h_pred })
            .collect()
    }

    /// Fraction of each prey control volume that lies in the predator domain.
    ///
    /// This is the discrete indicator of `A`: one on predator nodes, zero in the
    /// exclusion zone, and `h_pred / (h_pred + h_ex)` at the shared interface
    /// node. With that choice `Σ w_u χ g = Σ w_v g` for any predator-mesh field,
    /// so the total-population identities hold exactly on the mesh.
    pub fn predation_fraction(&self, i: usize) -> f64 {
        let k = self.interface();
        if i < k {
            1.0
        } else if i == k {
            self.h_pred / (self.h_pred + self.h_ex)
        } else {
            0.0
        }
    }

    pub fn integrate_u(&self, u: &[f64]) -> Result<f64> {
        check_len(self.n_u(), u.len())?;
        Ok(self.weights_u().iter().zip(u).map(|(w, x)| w * x).sum())
    }

    pub fn integrate_v(&self, v: &[f64]) -> Result<f64> {
        check_len(self.n_pred, v.len())?;
        Ok(self.weights_v().iter().zip(v).map(|(w, x)| w * x).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn build_examples() {
        let g = DualGrid::new(0.4, 1.0, 5, 7).unwrap();
        assert!((g.h_pred() - 0.1).abs() < 1e-15 && (g.h_ex() - 0.1).abs() < 1e-15);
        assert_eq!(g.n_u(), 11);
        assert_eq!(g.interface(), 4);
        assert_eq!(g.nodes_u()[4], 0.4);
        assert_eq!(g.nodes_v(), &g.nodes_u()[..5]);

        let g = DualGrid::new(0.5, 1.0, 3, 3).unwrap();
        assert_eq!(g.nodes_u(), &[0.0, 0.25, 0.5, 0.75, 1.0]);

        assert!(matches!(DualGrid::new(1.0, 1.0, 5, 5), Err(Error::Domain(_))));
        assert!(matches!(DualGrid::new(0.3, 1.0, 2, 5), Err(Error::Domain(_))));
    }

    #[test]
    fn exactly_one_interface_node() {
        let g = DualGrid::new(0.37, 1.3, 9, 14).unwrap();
        assert_eq!(g.nodes_u().iter().filter(|&&x| x == 0.37).count(), 1);
        assert!(g.nodes_u().windows(2).all(|w| w[1] > w[0]));
        assert_eq!(*g.nodes_u().last().unwrap(), 1.3);
    }

    #[test]
    fn constants_are_harmonic() {
        let g = DualGrid::new(0.3, 1.0, 7, 12).unwrap();
        let lu = g.laplacian_u(&vec![2.5; g.n_u()]).unwrap();
        let lv = g.laplacian_v(&vec![2.5; g.n_pred()]).unwrap();
        assert!(lu.iter().chain(&lv).all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn quadratic_is_exact() {
        let g = DualGrid::new(0.4, 1.0, 5, 7).unwrap();
        let u: Vec<f64> = g.nodes_u().iter().map(|x| x * x).collect();
        let lu = g.laplacian_u(&u).unwrap();
        assert!((lu[2] - 2.0).abs() < 1e-12);
        assert!((lu[0] - 2.0).abs() < 1e-12);
        // nonuniform interface stencil is exact for quadratics too
        let g = DualGrid::new(0.3, 1.0, 4, 9).unwrap();
        let u: Vec<f64> = g.nodes_u().iter().map(|x| x * x).collect();
        let lu = g.laplacian_u(&u).unwrap();
        assert!((lu[g.interface()] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn predator_laplacian_right_closure() {
        let g = DualGrid::new(0.4, 1.0, 5, 7).unwrap();
        let v: Vec<f64> = g.nodes_v().iter().map(|x| x * x).collect();
        let lv = g.laplacian_v(&v).unwrap();
        let n = v.len();
        let h = g.h_pred();
        let hand = 2.0 * (v[n - 2] - v[n - 1]) / (h * h);
        assert!((lv[n - 1] - hand).abs() < 1e-12);
        assert!((lv[n - 1] - 2.0).abs() > 1.0);
    }

    #[test]
    fn cosine_eigenfunction() {
        let a = 0.8;
        let mut prev = f64::INFINITY;
        for &n in &[21usize, 41, 81] {
            let g = DualGrid::new(a, 1.0, n, 5).unwrap();
            let k = std::f64::consts::PI / a;
            let v: Vec<f64> = g.nodes_v().iter().map(|x| (k * x).cos()).collect();
            let lv = g.laplacian_v(&v).unwrap();
            let err = lv.iter().zip(&v).map(|(l, x)| (l + k * k * x).abs()).fold(0.0, f64::max);
            assert!(err < prev / 3.5, "not second order: {err} vs {prev}");
            prev = err;
        }
    }

    #[test]
    fn quadrature() {
        let g = DualGrid::new(0.3, 1.0, 4, 11).unwrap();
        assert!((g.integrate_u(&vec![1.0; g.n_u()]).unwrap() - 1.0).abs() < 1e-15);
        let lin: Vec<f64> = g.nodes_u().to_vec();
        assert!((g.integrate_u(&lin).unwrap() - 0.5).abs() < 1e-15);
        let g = DualGrid::new(0.8, 1.0, 9, 3).unwrap();
        assert!((g.integrate_v(&vec![0.5; 9]).unwrap() - 0.4).abs() < 1e-15);
        assert!(matches!(g.integrate_v(&[1.0; 3]), Err(Error::SizeMismatch { .. })));
    }

    #[test]
    fn weighted_symmetry_and_zero_row_sums() {
        let g = DualGrid::new(0.35, 1.0, 8, 13).unwrap();
        let w = g.weights_u();
        let n = g.n_u();
        for i in 0..n {
            let (lo, d, hi) = g.stencil_u(i);
            assert!((lo + d + hi).abs() < 1e-9 * d.abs());
            if i + 1 < n {
                let (lo_next, _, _) = g.stencil_u(i + 1);
                assert!((w[i] * hi - w[i + 1] * lo_next).abs() < 1e-12 * (w[i] * hi).abs());
            }
        }
        let wv = g.weights_v();
        for i in 0..g.n_pred() - 1 {
            let (_, _, hi) = g.stencil_v(i);
            let (lo_next, _, _) = g.stencil_v(i + 1);
            assert!((wv[i] * hi - wv[i + 1] * lo_next).abs() < 1e-12 * (wv[i] * hi).abs());
        }
    }

    #[test]
    fn indicator_matches_predator_quadrature() {
        let g = DualGrid::new(0.35, 1.0, 8, 13).unwrap();
        let wu = g.weights_u();
        let wv = g.weights_v();
        for i in 0..g.n_pred() {
            assert!((wu[i] * g.predation_fraction(i) - wv[i]).abs() < 1e-15);
        }
        assert_eq!(g.predation_fraction(g.n_pred()), 0.0);
    }
}
