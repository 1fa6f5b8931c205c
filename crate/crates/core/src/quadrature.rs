//! Gauss–Legendre rules and geometrically graded composite grids.

use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for j in 2..=n {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// A set of quadrature nodes with weights, sorted by increasing abscissa.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `Σ wᵢ f(xᵢ)` summed in index order.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Panels of the graded grid wider than `upper / WIDEST` are split evenly.
pub const WIDEST: usize = 8;

/// Composite rule on `(0, upper]` with panel edges `upper·2^{-j}`, `j = 0..=panels`,
/// plus the innermost panel `(0, upper·2^{-panels}]`. The outer panels
/// `[upper/2, upper]` and `[upper/4, upper/2]` are split into four and two.
pub fn graded_grid(upper: f64, panels: usize, nodes_per_panel: usize) -> Grid {
    let (x, w) = gauss_legendre(nodes_per_panel);
    let mut edges = vec![0.0];
    for j in (0..=panels).rev() {
        let hi = upper * 0.5f64.powi(j as i32);
        let lo = *edges.last().unwrap();
        let parts = ((hi - lo) * WIDEST as f64 / upper).round().max(1.0) as usize;
        edges.extend((1..=parts).map(|i| lo + (hi - lo) * i as f64 / parts as f64));
    }
    panel_grid(&edges, &x, &w)
}

/// Number of panels `graded_grid` produces for `panels` halvings.
pub fn graded_panel_count(panels: usize) -> usize {
    let mut lo = 0.0;
    let mut n = 0;
    for j in (0..=panels).rev() {
        let hi = 0.5f64.powi(j as i32);
        n += ((hi - lo) * WIDEST as f64).round().max(1.0) as usize;
        lo = hi;
    }
    n
}

/// Composite rule over consecutive panels `[edges[i], edges[i+1]]`.
pub fn panel_grid(edges: &[f64], x: &[f64], w: &[f64]) -> Grid {
    let mut nodes = Vec::with_capacity((edges.len().saturating_sub(1)) * x.len());
    let mut weights = Vec::with_capacity(nodes.capacity());
    for pair in edges.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        for (&xi, &wi) in x.iter().zip(w) {
            nodes.push(mid + half * xi);
            weights.push(half * wi);
        }
    }
    Grid { nodes, weights }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rules_integrate_polynomials_exactly() {
        for n in 1..=20 {
            let (x, w) = gauss_legendre(n);
            assert_relative_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-14);
            for deg in 0..2 * n {
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                let q: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg as i32)).sum();
                assert!((q - exact).abs() < 1e-13, "n={n} deg={deg}: {q} vs {exact}");
            }
        }
    }

    #[test]
    fn nodes_are_sorted_and_symmetric() {
        let (x, w) = gauss_legendre(9);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
        assert_eq!(x[4], 0.0);
        for i in 0..9 {
            assert_relative_eq!(x[i], -x[8 - i], epsilon = 1e-15);
            assert_relative_eq!(w[i], w[8 - i], epsilon = 1e-15);
        }
    }

    #[test]
    fn graded_grid_handles_endpoint_singularity() {
        let g = graded_grid(1.0, 40, 8);
        assert_eq!(g.len(), 45 * 8);
        assert_eq!(graded_panel_count(40), 45);
        assert!(g.nodes.windows(2).all(|p| p[0] < p[1]));
        assert!(g.nodes[0] > 0.0);
        assert_relative_eq!(g.integrate(|x| 1.0 / x.sqrt()), 2.0, max_relative = 1e-6);
        assert_relative_eq!(g.integrate(|x| x.ln()), -1.0, max_relative = 1e-8);
        assert_relative_eq!(g.integrate(|x| (3.0 * x).cos()), 3f64.sin() / 3.0, max_relative = 1e-13);
    }
}
