//! Gauss–Legendre quadrature on (0, 1).

use std::sync::OnceLock;

/// Nodes per panel.
pub const GL_ORDER: usize = 64;

// Panels graded toward 0, where tail-probability curves such as 1 − λ^{1/δ}
// have unbounded derivatives.
const PANEL_BREAKS: [f64; 5] = [0.0, 1e-10, 1e-5, 1e-2, 1.0];

/// Nodes and weights of the `n`-point Gauss–Legendre rule on [−1, 1],
/// from Newton iteration on the three-term Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature order must be positive");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
                p1 = z;
            }
            // P_n'(z)
            dp = nf * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// A fixed rule on (0, 1): nodes in increasing order with matching weights.
#[derive(Debug, Clone)]
pub struct UnitRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl UnitRule {
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Composite 64-point Gauss–Legendre rule on graded panels of (0, 1).
pub fn unit_rule() -> &'static UnitRule {
    static RULE: OnceLock<UnitRule> = OnceLock::new();
    RULE.get_or_init(|| {
        let (x, w) = gauss_legendre(GL_ORDER);
        let mut nodes = Vec::with_capacity(GL_ORDER * (PANEL_BREAKS.len() - 1));
        let mut weights = Vec::with_capacity(nodes.capacity());
        for pair in PANEL_BREAKS.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let half = 0.5 * (b - a);
            for (xi, wi) in x.iter().zip(&w) {
                nodes.push(a + half * (xi + 1.0));
                weights.push(half * wi);
            }
        }
        UnitRule { nodes, weights }
    })
}
