//! Reference calculations for the integration tests. Nothing here calls into
//! the library's numerics: the chain, the bath and the mode equations are
//! written out again from their definitions.

#![allow(dead_code)]

use std::f64::consts::PI;

/// Kitaev chain with hopping `j` and pairing `dp`, parametrized by `δμ = μ − μ_c`.
#[derive(Debug, Clone, Copy)]
pub struct Chain {
    pub j: f64,
    pub dp: f64,
}

impl Chain {
    pub const UNIT: Chain = Chain { j: 1.0, dp: 1.0 };

    pub fn ab(&self, dmu: f64, k: f64) -> (f64, f64) {
        let s = (0.5 * k).sin();
        (2.0 * (dmu - 2.0 * self.j * s * s), self.dp * k.sin())
    }

    pub fn lambda(&self, dmu: f64, k: f64) -> f64 {
        let (a, b) = self.ab(dmu, k);
        a.hypot(b)
    }

    /// Derivative of `½ atan2(−b, a)` with respect to `δμ`.
    pub fn angle_slope(&self, dmu: f64, k: f64) -> f64 {
        let (a, b) = self.ab(dmu, k);
        b / (a * a + b * b)
    }
}

pub fn fermi(lambda: f64, temp: f64) -> f64 {
    if temp == 0.0 {
        return 0.0;
    }
    1.0 / ((lambda / temp).exp() + 1.0)
}

/// `2πγδ λ^s coth(λ/2T)`.
pub fn rate(gamma: f64, delta: f64, s: f64, lambda: f64, temp: f64) -> f64 {
    let coth = if temp == 0.0 {
        1.0
    } else {
        1.0 / (lambda / (2.0 * temp)).tanh()
    };
    2.0 * PI * gamma * delta * lambda.powf(s) * coth
}

/// `(1/π) ∫₀^π P^th(λ_k/T) dk` by the composite midpoint rule.
pub fn thermal_density(chain: Chain, dmu: f64, temp: f64, n: usize) -> f64 {
    let h = PI / n as f64;
    (0..n)
        .map(|i| fermi(chain.lambda(dmu, (i as f64 + 0.5) * h), temp))
        .sum::<f64>()
        * h
        / PI
}

/// One mode under a power-law ramp, for the fixed-step integrator below.
#[derive(Debug, Clone, Copy)]
pub struct ModeRamp {
    pub chain: Chain,
    pub alpha: f64,
    pub beta: f64,
    pub dmu_i: f64,
    pub temp_i: f64,
    pub t_f: f64,
    pub gamma: f64,
    pub delta: f64,
    pub s: f64,
    pub kappa: f64,
    pub k: f64,
}

impl ModeRamp {
    /// Exponent of the substitution `τ = u^m`: the smallest integer making
    /// both `mα` and `mβ` integers, so every coefficient is polynomial in `u`
    /// near the end of the ramp.
    fn m(&self) -> f64 {
        let integral = |x: f64| (x - x.round()).abs() < 1e-9;
        (1..=64)
            .map(f64::from)
            .find(|&m| integral(m * self.alpha) && integral(m * self.beta))
            .unwrap_or(8.0 * 1f64.max(1.0 / self.beta).max(1.0 / self.alpha))
    }

    /// `d/du` of `(P, Re C, Im C)` written in the form
    /// `−dP/dτ = −t_f R (P − P^th) + 2 β_τ Im C`,
    /// `−dC/dτ = −t_f R C + 2i t_f κ λ C − 2i β_τ (P − ½)`.
    fn rhs(&self, u: f64, y: [f64; 3]) -> [f64; 3] {
        let m = self.m();
        let tau = u.powf(m);
        let dmu = self.dmu_i * tau.powf(self.beta);
        let temp = self.temp_i * tau.powf(self.alpha);
        let lambda = self.chain.lambda(dmu, self.k);
        let jac = m * u.powf(m - 1.0);
        let r = self.t_f * rate(self.gamma, self.delta, self.s, lambda, temp) * jac;
        let w = 2.0 * self.t_f * self.kappa * lambda * jac;
        // β_τ · dτ/du = (dβ/dδμ) · β δμ_i τ^{β−1} · m u^{m−1}
        let twist = 2.0
            * self.chain.angle_slope(dmu, self.k)
            * self.beta
            * self.dmu_i
            * m
            * u.powf(m * self.beta - 1.0);
        let pth = fermi(lambda, temp);
        [
            r * (y[0] - pth) - twist * y[2],
            r * y[1] + w * y[2],
            r * y[2] - w * y[1] + twist * (y[0] - 0.5),
        ]
    }

    /// Rough bound on the Jacobian norm along the path, used to pick step counts.
    pub fn stiffness(&self) -> f64 {
        (0..=400)
            .map(|i| {
                let u = i as f64 / 400.0;
                let y = self.rhs(u, [1.0, 0.0, 0.0]);
                let z = self.rhs(u, [0.0, 1.0, 0.0]);
                let x = self.rhs(u, [0.0, 0.0, 1.0]);
                y.iter().chain(&z).chain(&x).map(|v| v.abs()).sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// Classical RK4 in `u` from `u = 1` to `u = 0` with `steps` equal steps.
    pub fn rk4(&self, y0: [f64; 3], steps: usize) -> [f64; 3] {
        let h = -1.0 / steps as f64;
        let mut y = y0;
        for i in 0..steps {
            let u = 1.0 + i as f64 * h;
            let add = |a: [f64; 3], b: [f64; 3], c: f64| [a[0] + c * b[0], a[1] + c * b[1], a[2] + c * b[2]];
            let k1 = self.rhs(u, y);
            let k2 = self.rhs(u + 0.5 * h, add(y, k1, 0.5 * h));
            let k3 = self.rhs(u + 0.5 * h, add(y, k2, 0.5 * h));
            let k4 = self.rhs((u + h).max(0.0), add(y, k3, h));
            for c in 0..3 {
                y[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
            }
        }
        y
    }
}

/// Excitation probability of one mode under a closed linear-in-`τ^β` ramp to
/// the critical point, from the two-level Schrödinger equation
/// `i dψ/dt = (a σ_z + b σ_x) ψ` started in the ground state.
pub fn schrodinger_excitation(chain: Chain, beta: f64, dmu_i: f64, t_f: f64, k: f64, steps: usize) -> f64 {
    type C2 = [(f64, f64); 2];
    let ham = |t: f64| {
        let tau = (1.0 - t / t_f).max(0.0);
        chain.ab(dmu_i * tau.powf(beta), k)
    };
    // −i H ψ
    let deriv = |t: f64, psi: C2| -> C2 {
        let (a, b) = ham(t);
        let h0 = (a * psi[0].0 + b * psi[1].0, a * psi[0].1 + b * psi[1].1);
        let h1 = (b * psi[0].0 - a * psi[1].0, b * psi[0].1 - a * psi[1].1);
        [(h0.1, -h0.0), (h1.1, -h1.0)]
    };
    let axpy = |p: C2, d: C2, c: f64| -> C2 {
        [
            (p[0].0 + c * d[0].0, p[0].1 + c * d[0].1),
            (p[1].0 + c * d[1].0, p[1].1 + c * d[1].1),
        ]
    };
    let eigen = |t: f64| {
        let (a, b) = ham(t);
        let th = b.atan2(a);
        let ground = [-(0.5 * th).sin(), (0.5 * th).cos()];
        let excited = [(0.5 * th).cos(), (0.5 * th).sin()];
        (ground, excited)
    };
    let (g, _) = eigen(0.0);
    let mut psi: C2 = [(g[0], 0.0), (g[1], 0.0)];
    let h = t_f / steps as f64;
    for i in 0..steps {
        let t = i as f64 * h;
        let k1 = deriv(t, psi);
        let k2 = deriv(t + 0.5 * h, axpy(psi, k1, 0.5 * h));
        let k3 = deriv(t + 0.5 * h, axpy(psi, k2, 0.5 * h));
        let k4 = deriv(t + h, axpy(psi, k3, h));
        for c in 0..2 {
            psi[c].0 += h / 6.0 * (k1[c].0 + 2.0 * k2[c].0 + 2.0 * k3[c].0 + k4[c].0);
            psi[c].1 += h / 6.0 * (k1[c].1 + 2.0 * k2[c].1 + 2.0 * k3[c].1 + k4[c].1);
        }
    }
    let (_, e) = eigen(t_f);
    let re = e[0] * psi[0].0 + e[1] * psi[1].0;
    let im = e[0] * psi[0].1 + e[1] * psi[1].1;
    re * re + im * im
}

/// `(1/π) ∫₀^π P_k dk` of the Schrödinger oracle: midpoint rule with `modes`
/// and `2·modes` points, Richardson-extrapolated.
pub fn schrodinger_density(chain: Chain, beta: f64, dmu_i: f64, t_f: f64, modes: usize, steps: usize) -> f64 {
    let midpoint = |n: usize| {
        let h = PI / n as f64;
        (0..n)
            .map(|i| schrodinger_excitation(chain, beta, dmu_i, t_f, (i as f64 + 0.5) * h, steps))
            .sum::<f64>()
            * h
            / PI
    };
    (4.0 * midpoint(2 * modes) - midpoint(modes)) / 3.0
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (n - 1) as f64))
        .collect()
}
