//! Bistable (strong Allee) prey kinetics.
//!
//! The cubic `f(s) = r s (s/θ - 1)(1 - s)` has zeros at `0`, `θ` and `1`, is
//! negative on `(0, θ)` and positive on `(θ, 1)`. Its antiderivative `F`
//! vanishes again at `θ'`, the unique root in `(θ, 1)`.
//!
//! Besides the plain `f`, `f'` and `F`, the type exposes the potential in
//! *deficit* coordinates `y = 1 - s`. Profiles on the upper branch sit so
//! close to `1` that `1 - s` is not representable as a difference of two
//! `f64` densities; every quantity the thin-limit quadrature needs is
//! therefore also available as a polynomial in the deficit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Raw `(r, θ)` pair, the serialized form of [`GrowthFn`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthSpec {
    pub r: f64,
    pub theta: f64,
}

/// Cubic bistable growth function with cached `θ'`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GrowthSpec", into = "GrowthSpec")]
pub struct GrowthFn {
    r: f64,
    theta: f64,
    theta_prime: f64,
}

impl TryFrom<GrowthSpec> for GrowthFn {
    type Error = Error;

    fn try_from(spec: GrowthSpec) -> Result<Self> {
        GrowthFn::cubic(spec.r, spec.theta)
    }
}

impl From<GrowthFn> for GrowthSpec {
    fn from(g: GrowthFn) -> Self {
        GrowthSpec { r: g.r, theta: g.theta }
    }
}

impl GrowthFn {
    /// Builds the cubic, rejecting parameters for which `∫₀¹ f ≤ 0`.
    pub fn cubic(r: f64, theta: f64) -> Result<Self> {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::Domain(format!("growth rate r must be positive, got {r}")));
        }
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::Domain(format!("Allee threshold must lie in (0,1), got {theta}")));
        }
        if theta >= 0.5 {
            return Err(Error::Hypothesis(format!(
                "θ = {theta} ≥ 1/2 makes ∫₀¹ f ≤ 0"
            )));
        }
        let mut g = GrowthFn { r, theta, theta_prime: f64::NAN };
        g.theta_prime = g.solve_theta_prime();
        Ok(g)
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Root of `F` in `(θ, 1)`.
    pub fn theta_prime(&self) -> f64 {
        self.theta_prime
    }

    fn scale(&self) -> f64 {
        self.r / self.theta
    }

    /// `f(s)`; evaluated as the same cubic outside `[0, 1]`.
    pub fn f(&self, s: f64) -> f64 {
        self.scale() * s * (s - self.theta) * (1.0 - s)
    }

    pub fn f_prime(&self, s: f64) -> f64 {
        self.scale() * (-3.0 * s * s + 2.0 * (1.0 + self.theta) * s - self.theta)
    }

    /// Antiderivative `F(s) = ∫₀ˢ f`.
    pub fn potential(&self, s: f64) -> f64 {
        let th = self.theta;
        self.scale() * s * s * (-s * s / 4.0 + (1.0 + th) * s / 3.0 - th / 2.0)
    }

    /// `max_{[0,1]} (-f')`; `f'` is concave so the extremes are at the ends.
    pub fn max_decay_rate(&self) -> f64 {
        (-self.f_prime(0.0)).max(-self.f_prime(1.0))
    }

    /// `max_{[0,1]} f`, attained at the larger critical point of the cubic.
    pub fn max_rate(&self) -> f64 {
        let th = self.theta;
        let disc = (1.0 + th) * (1.0 + th) - 3.0 * th;
        let s = ((1.0 + th) + disc.sqrt()) / 3.0;
        self.f(s).max(0.0)
    }

    /// `f(1 - y)` written in the deficit `y`.
    pub fn f_at_deficit(&self, y: f64) -> f64 {
        self.scale() * y * (1.0 - y) * (1.0 - self.theta - y)
    }

    /// `F(1) - F(1 - y)`, a polynomial in `y` without cancellation near `y = 0`.
    pub fn potential_drop(&self, y: f64) -> f64 {
        let th = self.theta;
        self.scale() * y * y * ((1.0 - th) / 2.0 - (2.0 - th) * y / 3.0 + y * y / 4.0)
    }

    /// Mean of `f` over `[1 - b, 1 - a]`, i.e. `(F(1-a) - F(1-b)) / (b - a)`.
    ///
    /// The divided difference is expanded symbolically so it stays accurate
    /// when `a` and `b` are both tiny, and reduces to `f(1 - a)` at `a = b`.
    pub fn mean_rate_between_deficits(&self, a: f64, b: f64) -> f64 {
        let th = self.theta;
        let s1 = a + b;
        let s2 = a * a + a * b + b * b;
        let s3 = s1 * (a * a + b * b);
        self.scale() * ((1.0 - th) * s1 / 2.0 - (2.0 - th) * s2 / 3.0 + s3 / 4.0)
    }

    fn solve_theta_prime(&self) -> f64 {
        // smaller root of 3s² − 4(1+θ)s + 6θ = 0, in the cancellation-free form
        let th = self.theta;
        let b = 4.0 * (1.0 + th);
        let disc = b * b - 72.0 * th;
        let mut s = 12.0 * th / (b + disc.sqrt());
        let fp = self.f(s);
        if fp != 0.0 {
            s -= self.potential(s) / fp;
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bisect_potential_root(g: &GrowthFn) -> f64 {
        let (mut lo, mut hi) = (g.theta() + 1e-12, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g.potential(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn theta_prime_matches_bisection() {
        for &(r, th, expect) in &[(1.0, 0.05, 0.07550), (30.0, 0.3, 0.47793)] {
            let g = GrowthFn::cubic(r, th).unwrap();
            let oracle = bisect_potential_root(&g);
            assert!((g.theta_prime() - oracle).abs() < 1e-13);
            assert!((g.theta_prime() - expect).abs() < 1e-5, "{}", g.theta_prime());
        }
    }

    #[test]
    fn theta_prime_independent_of_rate() {
        let a = GrowthFn::cubic(7.0, 0.3).unwrap();
        let b = GrowthFn::cubic(1.0, 0.3).unwrap();
        assert!((a.theta_prime() - b.theta_prime()).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(GrowthFn::cubic(1.0, 0.6), Err(Error::Hypothesis(_))));
        assert!(matches!(GrowthFn::cubic(1.0, 0.5), Err(Error::Hypothesis(_))));
        assert!(matches!(GrowthFn::cubic(0.0, 0.1), Err(Error::Domain(_))));
        assert!(matches!(GrowthFn::cubic(1.0, 1.2), Err(Error::Domain(_))));
        assert!(matches!(GrowthFn::cubic(1.0, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn point_values() {
        let g = GrowthFn::cubic(1.0, 0.05).unwrap();
        assert_eq!(g.f(0.0), 0.0);
        assert_eq!(g.f(0.05), 0.0);
        assert_eq!(g.f(1.0), 0.0);
        assert!((g.f(0.5) - 2.25).abs() < 1e-13);
        assert!((g.f_prime(1.0) + 19.0).abs() < 1e-12);
        assert!((g.f_prime(0.05) - 0.95).abs() < 1e-13);
        assert!((g.potential(1.0) - 1.5).abs() < 1e-13);
        assert_eq!(g.potential(0.0), 0.0);

        let g = GrowthFn::cubic(1.0, 0.3).unwrap();
        assert!((g.f(0.05) + 0.039_583_333_333_333_3).abs() < 1e-15);
        assert!((g.potential(1.0) - 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn derivative_matches_central_differences() {
        let g = GrowthFn::cubic(1.3, 0.2).unwrap();
        for &s in &[0.1, 0.35, 0.8] {
            for &h in &[1e-3, 1e-4] {
                let fd = (g.f(s + h) - g.f(s - h)) / (2.0 * h);
                assert!((fd - g.f_prime(s)).abs() < 10.0 * h * h);
                let fd_pot = (g.potential(s + h) - g.potential(s - h)) / (2.0 * h);
                assert!((fd_pot - g.f(s)).abs() < 10.0 * h * h);
            }
        }
    }

    #[test]
    fn deficit_forms_agree_with_direct_forms() {
        let g = GrowthFn::cubic(1.0, 0.3).unwrap();
        for &y in &[0.7, 0.4, 0.1] {
            let s = 1.0 - y;
            assert!((g.f_at_deficit(y) - g.f(s)).abs() < 1e-14);
            assert!((g.potential_drop(y) - (g.potential(1.0) - g.potential(s))).abs() < 1e-14);
        }
        let (a, b) = (0.05, 0.6);
        let direct = (g.potential(1.0 - a) - g.potential(1.0 - b)) / (b - a);
        assert!((g.mean_rate_between_deficits(a, b) - direct).abs() < 1e-14);
        assert!((g.mean_rate_between_deficits(0.2, 0.2) - g.f(0.8)).abs() < 1e-14);
    }

    #[test]
    fn extremes_on_unit_interval() {
        let g = GrowthFn::cubic(1.0, 0.05).unwrap();
        assert!((g.max_decay_rate() - 19.0).abs() < 1e-12);
        let grid_max = (0..=100_000)
            .map(|i| g.f(i as f64 / 100_000.0))
            .fold(f64::MIN, f64::max);
        assert!((g.max_rate() - grid_max).abs() < 1e-8);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn sign_pattern_and_potential_shape(r in 0.1f64..40.0, th in 0.01f64..0.49, x in 0.001f64..0.999) {
                let g = GrowthFn::cubic(r, th).unwrap();
                let s_low = x * th;
                let s_high = th + x * (1.0 - th);
                prop_assert!(g.f(s_low) < 0.0);
                prop_assert!(g.f(s_high) > 0.0);
                prop_assert!(g.potential(x) >= g.potential(th) - 1e-15);
                prop_assert!(g.potential(x) <= g.potential(1.0) + 1e-15);
                prop_assert!(g.f_prime(1.0) < 0.0);
                let tp = g.theta_prime();
                prop_assert!(tp > th && tp < 1.0);
                if x < tp { prop_assert!(g.potential(x) < 0.0); }
            }

            #[test]
            fn potential_level_has_unique_upper_preimage(th in 0.01f64..0.49, frac in 0.01f64..1.0) {
                let g = GrowthFn::cubic(1.0, th).unwrap();
                let level = frac * g.potential(1.0);
                // F is increasing on (θ', 1) so a sign change there is unique
                let n = 2000;
                let tp = g.theta_prime();
                let mut crossings = 0;
                let mut prev = g.potential(tp) - level;
                for i in 1..=n {
                    let s = tp + (1.0 - tp) * i as f64 / n as f64;
                    let cur = g.potential(s) - level;
                    if prev < 0.0 && cur >= 0.0 { crossings += 1; }
                    prev = cur;
                }
                prop_assert_eq!(crossings, 1);
            }
        }
    }
}
