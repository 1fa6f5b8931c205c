//! Fourth-order Magnus step for `y' = −ρ y + a × y + f`.
//!
//! The generator is treated on the augmented 4×4 system `(y, 1)`, so the
//! inhomogeneity enters the same commutator as the homogeneous part. Functions
//! of `M = −σ I + [v]×` are evaluated spectrally: `M` has eigenvalue `−σ` along
//! `n = v/|v|` and `−σ ± i|v|` on the plane orthogonal to it.

use num_complex::Complex64;

use super::vec3::{add, cross, dot, norm, scale, sub, Vec3};

const SQRT3: f64 = 1.732_050_807_568_877_2;
pub(super) const GAUSS_NODES: [f64; 2] = [0.5 - SQRT3 / 6.0, 0.5 + SQRT3 / 6.0];

/// Generator sampled at one Gauss node.
#[derive(Debug, Clone, Copy)]
pub(super) struct Sample {
    pub rho: f64,
    pub axis: Vec3,
    pub forcing: Vec3,
}

impl Sample {
    fn apply(&self, w: Vec3) -> Vec3 {
        sub(cross(self.axis, w), scale(w, self.rho))
    }
}

/// One step of size `h` from `y` using the generator at the two Gauss nodes
/// and at the midpoint. Returns the fourth-order result and its difference to
/// the exponential midpoint rule, which differs in both the commutator and the
/// quadrature of the generator.
pub(super) fn step(y: Vec3, h: f64, s1: &Sample, s2: &Sample, mid: &Sample) -> (Vec3, Vec3) {
    let half = 0.5 * h;
    let sigma = half * (s1.rho + s2.rho);
    let k = SQRT3 / 12.0 * h * h;
    let v_high = add(scale(add(s1.axis, s2.axis), half), scale(cross(s2.axis, s1.axis), k));
    let c_high = add(
        scale(add(s1.forcing, s2.forcing), half),
        scale(sub(s2.apply(s1.forcing), s1.apply(s2.forcing)), k),
    );

    let high = propagate(sigma, v_high, y, c_high);
    let low = propagate(h * mid.rho, scale(mid.axis, h), y, scale(mid.forcing, h));
    (high, sub(high, low))
}

/// `exp(M) y + φ₁(M) c` for `M = −σ I + [v]×`.
pub(super) fn propagate(sigma: f64, v: Vec3, y: Vec3, c: Vec3) -> Vec3 {
    let theta = norm(v);
    let decay = (-sigma).exp();
    let phi_real = phi1_real(sigma);
    if theta == 0.0 {
        return add(scale(y, decay), scale(c, phi_real));
    }
    let n = scale(v, 1.0 / theta);
    let (sin, cos) = theta.sin_cos();
    let exp_c = Complex64::new(decay * cos, decay * sin);
    let phi_c = phi1_complex(sigma, theta, sin, cos);

    let spectral = |w: Vec3, axial: f64, plane: Complex64| -> Vec3 {
        let along = dot(n, w);
        let par = scale(n, along);
        let perp = sub(w, par);
        add(
            add(scale(par, axial), scale(perp, plane.re)),
            scale(cross(n, w), plane.im),
        )
    };
    add(spectral(y, decay, exp_c), spectral(c, phi_real, phi_c))
}

/// `φ₁(−σ) = (1 − e^{−σ})/σ`.
fn phi1_real(sigma: f64) -> f64 {
    if sigma.abs() < 1e-5 {
        1.0 - sigma / 2.0 + sigma * sigma / 6.0
    } else {
        -(-sigma).exp_m1() / sigma
    }
}

/// `φ₁(z) = (e^z − 1)/z` at `z = −σ + iθ`.
fn phi1_complex(sigma: f64, theta: f64, sin: f64, cos: f64) -> Complex64 {
    let z = Complex64::new(-sigma, theta);
    if z.norm() < 1e-4 {
        return 1.0 + z * (0.5 + z * (1.0 / 6.0 + z / 24.0));
    }
    let half_sin = (0.5 * theta).sin();
    let numerator = Complex64::new(
        (-sigma).exp_m1() * cos - 2.0 * half_sin * half_sin,
        (-sigma).exp() * sin,
    );
    numerator / z
}
