//! Gauss–Legendre rules and composite quadrature on graded panels.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Nodes and weights on `[-1, 1]`.
#[derive(Debug)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    fn compute(n: usize) -> Self {
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess, then Newton on P_n
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussRule { nodes, weights }
    }

    /// `∫_a^b f`.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut s = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            s += w * f(mid + half * x);
        }
        s * half
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Cached `n`-point rule.
pub fn gauss_legendre(n: usize) -> Arc<GaussRule> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().unwrap_or_else(|e| e.into_inner());
    map.entry(n).or_insert_with(|| Arc::new(GaussRule::compute(n))).clone()
}

/// Panel breakpoints on `[a, b]` refined geometrically toward both ends.
///
/// Panels shrink by halves toward `a` down to width `scale_a` and toward `b`
/// down to `scale_b`, so integrands varying on those scales near the ends
/// stay smooth on every panel.
pub fn graded_breaks(a: f64, b: f64, scale_a: f64, scale_b: f64) -> Vec<f64> {
    let len = b - a;
    if len <= 0.0 {
        return vec![a, b];
    }
    let mut left = Vec::new();
    let mut w = 0.5 * len;
    while w > scale_a && left.len() < 200 {
        w *= 0.5;
        left.push(a + w);
    }
    let mut right = Vec::new();
    let mut w = 0.5 * len;
    while w > scale_b && right.len() < 200 {
        w *= 0.5;
        right.push(b - w);
    }
    let mut br = vec![a];
    br.extend(left.iter().rev());
    br.push(a + 0.5 * len);
    br.extend(right.iter());
    br.push(b);
    br.dedup();
    br
}

/// Composite rule over the given breakpoints.
pub fn composite(rule: &GaussRule, breaks: &[f64], mut f: impl FnMut(f64) -> f64) -> f64 {
    breaks.windows(2).map(|w| rule.integrate(w[0], w[1], &mut f)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two_and_nodes_are_symmetric() {
        for n in [1, 2, 5, 64, 128] {
            let r = gauss_legendre(n);
            let s: f64 = r.weights.iter().sum();
            assert!((s - 2.0).abs() < 1e-13, "n={n}: {s}");
            for i in 0..n {
                assert!((r.nodes[i] + r.nodes[n - 1 - i]).abs() < 1e-15);
            }
            assert!(r.nodes.windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn exact_for_polynomials_of_degree_2n_minus_1() {
        let r = gauss_legendre(5);
        for k in 0..10 {
            let got = r.integrate(0.0, 1.0, |x| x.powi(k));
            assert!((got - 1.0 / (k as f64 + 1.0)).abs() < 1e-14, "k={k}");
        }
    }

    #[test]
    fn graded_panels_resolve_endpoint_layer() {
        // ∫₀¹ 1/√(ε + t²) dt = asinh(1/√ε)
        let eps: f64 = 1e-16;
        let br = graded_breaks(0.0, 1.0, eps.sqrt(), 1e-3);
        let got = composite(&gauss_legendre(32), &br, |t| 1.0 / (eps + t * t).sqrt());
        let exact = (1.0 / eps.sqrt()).asinh();
        assert!((got - exact).abs() < 1e-12 * exact, "{got} vs {exact}");
        assert!(br.windows(2).all(|w| w[1] > w[0]));
    }
}
