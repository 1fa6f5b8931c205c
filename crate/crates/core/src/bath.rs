//! Thermal bath: occupation functions, jump rates and the mode relaxation rate.

use std::f64::consts::PI;

use crate::error::{check_non_negative, check_positive, Error, Result};

/// Bath spectral data and system–bath coupling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BathParams {
    /// Dimensionless coupling γ; zero switches every dissipative term off.
    pub gamma: f64,
    /// Spectral-density amplitude δ.
    pub delta: f64,
    /// Spectral exponent s (s < 1 sub-ohmic, s = 1 ohmic, s > 1 super-ohmic).
    pub s: f64,
}

impl BathParams {
    pub fn new(gamma: f64, delta: f64, s: f64) -> Result<Self> {
        let bath = Self { gamma, delta, s };
        bath.validate()?;
        Ok(bath)
    }

    pub fn validate(&self) -> Result<()> {
        check_non_negative("gamma", self.gamma)?;
        check_positive("delta", self.delta)?;
        check_positive("s", self.s)
    }

    pub fn with_gamma(self, gamma: f64) -> Self {
        Self { gamma, ..self }
    }
}

const SMALL_ARG: f64 = 1e-6;
const COTH_SATURATION: f64 = 30.0;

/// Bose–Einstein occupation `1/(eˣ − 1)`, `x > 0`.
pub fn bose_einstein(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::InvalidArgument {
            name: "x",
            value: x,
            reason: "Bose-Einstein argument must be positive",
        });
    }
    if x < SMALL_ARG {
        Ok(1.0 / x - 0.5 + x / 12.0)
    } else {
        Ok(1.0 / x.exp_m1())
    }
}

/// Fermi–Dirac occupation `1/(eˣ + 1)`; overflow-safe on the whole real line.
pub fn fermi_dirac(x: f64) -> f64 {
    if x >= 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// Equilibrium occupation of a mode of energy `lambda` at temperature `temp`.
///
/// `temp = 0` is exact: the ground state, except for a zero-energy mode which is
/// half filled.
pub fn thermal_occupation(lambda: f64, temp: f64) -> f64 {
    if lambda == 0.0 {
        0.5
    } else if temp == 0.0 {
        0.0
    } else {
        fermi_dirac(lambda / temp)
    }
}

fn coth_term(lambda: f64, temp: f64, s: f64) -> f64 {
    // λ^s coth(λ/2T)
    if temp == 0.0 {
        return lambda.powf(s);
    }
    let y = lambda / (2.0 * temp);
    if y > COTH_SATURATION {
        lambda.powf(s)
    } else if y < SMALL_ARG {
        // λ^s (2T/λ + λ/(6T)); the first term is λ^{s−1}·2T.
        2.0 * temp * lambda.powf(s - 1.0) + lambda.powf(s + 1.0) / (6.0 * temp)
    } else {
        lambda.powf(s) / y.tanh()
    }
}

/// Mode relaxation rate `R(λ, T) = 2πγδ λ^s coth(λ/2T)`.
///
/// Finite as `λ → 0` for `s = 1` (limit `4πγδT`), divergent like `λ^{s−1}` for
/// `s < 1`.
pub fn relaxation_rate(bath: &BathParams, lambda: f64, temp: f64) -> Result<f64> {
    check_non_negative("lambda", lambda)?;
    check_non_negative("T", temp)?;
    Ok(relaxation_rate_unchecked(bath, lambda, temp))
}

pub(crate) fn relaxation_rate_unchecked(bath: &BathParams, lambda: f64, temp: f64) -> f64 {
    if bath.gamma == 0.0 {
        return 0.0;
    }
    2.0 * PI * bath.gamma * bath.delta * coth_term(lambda, temp, bath.s)
}

/// Jump rates `(Γ₊, Γ₋)` for absorption and emission of a quasiparticle of energy
/// `lambda`; they exclude the coupling γ, so `γ(Γ₊ + Γ₋) = R(λ, T)`.
pub fn jump_rates(bath: &BathParams, lambda: f64, temp: f64) -> Result<(f64, f64)> {
    check_positive("lambda", lambda)?;
    check_non_negative("T", temp)?;
    let prefactor = 2.0 * PI * bath.delta * lambda.powf(bath.s);
    if temp == 0.0 {
        return Ok((0.0, prefactor));
    }
    let n = bose_einstein(lambda / temp)?;
    Ok((prefactor * n, prefactor * (n + 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn ohmic(gamma: f64) -> BathParams {
        BathParams::new(gamma, 1.0, 1.0).unwrap()
    }

    #[test]
    fn bose_einstein_examples() {
        assert_relative_eq!(bose_einstein(1.0).unwrap(), 0.581_976_706_869_326_4, epsilon = 1e-15);
        assert!(bose_einstein(800.0).unwrap() < 1e-300);
        let x = 1e-8;
        let series = 1.0 / x - 0.5 + x / 12.0;
        assert_relative_eq!(bose_einstein(x).unwrap(), series, max_relative = 1e-10);
        assert!(bose_einstein(0.0).is_err());
        assert!(bose_einstein(-1.0).is_err());
    }

    #[test]
    fn bose_einstein_seam() {
        let below = 1.0 / SMALL_ARG - 0.5 + SMALL_ARG / 12.0;
        let above = 1.0 / SMALL_ARG.exp_m1();
        assert_relative_eq!(below, above, max_relative = 1e-10);
    }

    #[test]
    fn fermi_dirac_examples() {
        assert_eq!(fermi_dirac(0.0), 0.5);
        assert_eq!(fermi_dirac(f64::INFINITY), 0.0);
        assert_eq!(fermi_dirac(-1e4), 1.0);
        assert_relative_eq!(fermi_dirac(2.0), 0.119_202_922_022_117_58, epsilon = 1e-15);
    }

    #[test]
    fn relaxation_rate_examples() {
        assert_eq!(relaxation_rate(&ohmic(0.0), 1.0, 3.0).unwrap(), 0.0);
        assert_relative_eq!(
            relaxation_rate(&ohmic(0.05), 1.0, 0.0).unwrap(),
            2.0 * PI * 0.05,
            epsilon = 1e-15
        );
        let (g, t) = (0.05, 0.3);
        assert_relative_eq!(
            relaxation_rate(&ohmic(g), 0.0, t).unwrap(),
            4.0 * PI * g * t,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            relaxation_rate(&ohmic(g), 1e-9, t).unwrap(),
            4.0 * PI * g * t,
            max_relative = 1e-12
        );
        let sub = BathParams::new(0.1, 1.0, 0.25).unwrap();
        assert!(relaxation_rate(&sub, 0.0, 1.0).unwrap().is_infinite());
        assert!(relaxation_rate(&ohmic(0.1), -1.0, 1.0).is_err());
        assert!(relaxation_rate(&ohmic(0.1), 1.0, -1.0).is_err());
    }

    #[test]
    fn relaxation_rate_seams() {
        let bath = BathParams::new(0.3, 1.3, 0.7).unwrap();
        for &y in &[SMALL_ARG, COTH_SATURATION] {
            let temp = 0.4;
            let lambda = 2.0 * temp * y;
            let direct = lambda.powf(bath.s) / y.tanh() * 2.0 * PI * bath.gamma * bath.delta;
            let lo = relaxation_rate(&bath, lambda * (1.0 - 1e-12), temp).unwrap();
            let hi = relaxation_rate(&bath, lambda * (1.0 + 1e-12), temp).unwrap();
            assert_relative_eq!(lo, direct, max_relative = 1e-10);
            assert_relative_eq!(hi, direct, max_relative = 1e-10);
        }
    }

    #[test]
    fn jump_rate_examples() {
        let bath = ohmic(0.05);
        assert_eq!(jump_rates(&bath, 0.7, 0.0).unwrap().0, 0.0);
        let (plus, _) = jump_rates(&bath, 1.0, 1.0).unwrap();
        assert_relative_eq!(plus, 2.0 * PI * 0.581_976_706_869_326_4, epsilon = 1e-14);
        assert!(jump_rates(&bath, 0.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn detailed_balance(lambda in 1e-3f64..10.0, temp in 1e-2f64..10.0) {
            prop_assume!(lambda / temp < 700.0);
            let bath = BathParams::new(0.2, 0.8, 0.6).unwrap();
            let (plus, minus) = jump_rates(&bath, lambda, temp).unwrap();
            let ratio = minus / plus;
            prop_assert!((ratio / (lambda / temp).exp() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn stationary_point_is_fermi_dirac(lambda in 1e-3f64..10.0, temp in 1e-2f64..10.0) {
            let bath = ohmic(0.3);
            let (plus, minus) = jump_rates(&bath, lambda, temp).unwrap();
            let p = plus / (plus + minus);
            prop_assert!((p - fermi_dirac(lambda / temp)).abs() < 1e-12);
            let r = relaxation_rate(&bath, lambda, temp).unwrap();
            prop_assert!((bath.gamma * (plus + minus) / r - 1.0).abs() < 1e-12);
        }

        #[test]
        fn relaxation_lower_bound(lambda in 1e-4f64..10.0, temp in 0.0f64..10.0, s in 0.05f64..1.0) {
            let bath = BathParams::new(0.07, 1.0, s).unwrap();
            let r = relaxation_rate(&bath, lambda, temp).unwrap();
            let bound = 2.0 * PI * bath.gamma * bath.delta * lambda.powf(s).max((2.0 * temp).powf(s));
            prop_assert!(r >= bound * (1.0 - 1e-12));
        }
    }
}
