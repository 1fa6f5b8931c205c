//! Quadratic BdG chains: dispersion, Bogoliubov geometry and the critical-region
//! local approximations.
//!
//! A chain is described by the two matrix elements of its 2×2 Bogoliubov–de Gennes
//! block, `a(δμ, k)` (even in `k`) and `b(δμ, k)` (odd in `k`), where `δμ = μ − μ_c`
//! is the *signed* displacement from the critical point. Mode energies are
//! `λ = sqrt(a² + b²)` and the Bogoliubov angle is `β = ½·atan2(−b, a)`.
//!
//! Local approximations `Λ`, `𝓑` are the scaling limits
//! `Λ(δμ, k) = lim_{q→0} λ(q^{1/(νz)} δμ, q^{1/z} k) / q` and
//! `𝓑(δμ, k) = lim_{q→0} β(q^{1/(νz)} δμ, q^{1/z} k)`. Models may provide them in
//! closed form; otherwise they are obtained by Richardson extrapolation.

use std::f64::consts::PI;

use crate::error::{check_positive, Error, Result};

/// Critical data of a chain: `λ(0, k) ≈ c₁|k|^z`, `λ(δμ, 0) ≈ c₂|δμ|^{νz}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalData {
    pub mu_c: f64,
    pub nu: f64,
    pub z: f64,
    pub c1: f64,
    pub c2: f64,
}

impl CriticalData {
    pub fn nu_z(&self) -> f64 {
        self.nu * self.z
    }
}

/// A translationally invariant quadratic chain in BdG form.
///
/// Implementors supply the matrix elements; analytic partials and closed-form
/// local limits are optional and fall back to finite differences and Richardson
/// extrapolation respectively.
pub trait BdgModel: Send + Sync {
    fn critical(&self) -> CriticalData;

    /// Diagonal element `a(δμ, k)`, even in `k`.
    fn a(&self, dmu: f64, k: f64) -> f64;

    /// Off-diagonal element `b(δμ, k)`, odd in `k`.
    fn b(&self, dmu: f64, k: f64) -> f64;

    /// `(∂a/∂δμ, ∂b/∂δμ)` when known in closed form.
    fn ab_partials(&self, _dmu: f64, _k: f64) -> Option<(f64, f64)> {
        None
    }

    /// Closed-form local limits of `(a, b)` as functions of `(δμ, k ∈ ℝ)`.
    fn local_ab(&self, _dmu: f64, _k: f64) -> Option<(f64, f64)> {
        None
    }

    /// `(∂a/∂δμ, ∂b/∂δμ)` of the local forms, when known.
    fn local_ab_partials(&self, _dmu: f64, _k: f64) -> Option<(f64, f64)> {
        None
    }
}

/// Side from which the ramp approaches `μ_c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ApproachSide {
    /// `μ(t) = μ_c − |δμ(t)|`.
    #[default]
    Below,
    /// `μ(t) = μ_c + |δμ(t)|`.
    Above,
}

impl ApproachSide {
    /// Signed displacement for a displacement magnitude on this side.
    pub fn signed(self, magnitude: f64) -> f64 {
        match self {
            ApproachSide::Below => -magnitude.abs(),
            ApproachSide::Above => magnitude.abs(),
        }
    }
}

impl std::str::FromStr for ApproachSide {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "below" => Ok(ApproachSide::Below),
            "above" => Ok(ApproachSide::Above),
            other => Err(format!("unknown approach side `{other}` (expected below|above)")),
        }
    }
}

/// Nearest-neighbour Kitaev chain, `a = 2(μ + J cos k)`, `b = Δ_p sin k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kitaev {
    pub hopping: f64,
    pub pairing: f64,
}

impl Kitaev {
    pub fn new(hopping: f64, pairing: f64) -> Result<Self> {
        check_positive("J", hopping)?;
        check_positive("Delta_p", pairing)?;
        Ok(Self { hopping, pairing })
    }
}

impl BdgModel for Kitaev {
    fn critical(&self) -> CriticalData {
        CriticalData {
            mu_c: -self.hopping,
            nu: 1.0,
            z: 1.0,
            c1: self.pairing,
            c2: 2.0,
        }
    }

    fn a(&self, dmu: f64, k: f64) -> f64 {
        // μ + J cos k with μ = μ_c + δμ = δμ − J; written with 1 − cos k = 2 sin²(k/2)
        // to keep the small-k limit accurate.
        let s = (0.5 * k).sin();
        2.0 * (dmu - 2.0 * self.hopping * s * s)
    }

    fn b(&self, _dmu: f64, k: f64) -> f64 {
        self.pairing * k.sin()
    }

    fn ab_partials(&self, _dmu: f64, _k: f64) -> Option<(f64, f64)> {
        Some((2.0, 0.0))
    }

    fn local_ab(&self, dmu: f64, k: f64) -> Option<(f64, f64)> {
        Some((2.0 * dmu, self.pairing * k))
    }

    fn local_ab_partials(&self, _dmu: f64, _k: f64) -> Option<(f64, f64)> {
        Some((2.0, 0.0))
    }
}

fn half_angle(a: f64, b: f64, dmu: f64, k: f64) -> Result<f64> {
    if a == 0.0 && b == 0.0 {
        return Err(Error::Degenerate { dmu, k });
    }
    // `+ 0.0` turns −0 into +0, so that b = 0 with a < 0 lands on the +π/2 branch.
    Ok(0.5 * (-b + 0.0).atan2(a))
}

fn angle_slope(a: f64, b: f64, da: f64, db: f64, dmu: f64, k: f64) -> Result<f64> {
    let norm = a * a + b * b;
    if norm == 0.0 {
        return Err(Error::Degenerate { dmu, k });
    }
    Ok(0.5 * (b * da - a * db) / norm)
}

fn fd_step(dmu: f64) -> f64 {
    1e-7_f64.max(1e-7 * dmu.abs())
}

/// Mode energy `λ(δμ, k) = sqrt(a² + b²)`.
pub fn dispersion(model: &dyn BdgModel, dmu: f64, k: f64) -> f64 {
    model.a(dmu, k).hypot(model.b(dmu, k))
}

/// Bogoliubov angle `β = ½·atan2(−b, a)`.
///
/// The branch is continuous in `k` wherever `b ≠ 0` or `a > 0`; at `k = 0` with
/// `a < 0` the value `+π/2` is returned.
pub fn bogoliubov_angle(model: &dyn BdgModel, dmu: f64, k: f64) -> Result<f64> {
    half_angle(model.a(dmu, k), model.b(dmu, k), dmu, k)
}

/// `∂β/∂δμ` at fixed `k`.
pub fn bogoliubov_angle_slope(model: &dyn BdgModel, dmu: f64, k: f64) -> Result<f64> {
    let a = model.a(dmu, k);
    let b = model.b(dmu, k);
    match model.ab_partials(dmu, k) {
        Some((da, db)) => angle_slope(a, b, da, db, dmu, k),
        None => {
            if a == 0.0 && b == 0.0 {
                return Err(Error::Degenerate { dmu, k });
            }
            let h = fd_step(dmu);
            let up = bogoliubov_angle(model, dmu + h, k)?;
            let down = bogoliubov_angle(model, dmu - h, k)?;
            Ok((up - down) / (2.0 * h))
        }
    }
}

/// `dβ/dt = (∂β/∂δμ)·(dδμ/dt)`.
pub fn bogoliubov_angle_rate(model: &dyn BdgModel, dmu: f64, k: f64, dmu_dt: f64) -> Result<f64> {
    let slope = bogoliubov_angle_slope(model, dmu, k)?;
    Ok(if dmu_dt == 0.0 { 0.0 } else { slope * dmu_dt })
}

/// `∂λ/∂δμ` at fixed `k`.
pub fn dispersion_slope(model: &dyn BdgModel, dmu: f64, k: f64) -> f64 {
    let a = model.a(dmu, k);
    let b = model.b(dmu, k);
    let lambda = a.hypot(b);
    match model.ab_partials(dmu, k) {
        Some((da, db)) if lambda > 0.0 => (a * da + b * db) / lambda,
        _ => {
            let h = fd_step(dmu);
            (dispersion(model, dmu + h, k) - dispersion(model, dmu - h, k)) / (2.0 * h)
        }
    }
}

/// Momentum of the mode labelled by its critical energy `ε = c₁|k|^z`, `k ≥ 0`.
pub fn momentum_of_energy(crit: &CriticalData, eps: f64) -> f64 {
    (eps / crit.c1).powf(1.0 / crit.z)
}

/// Polynomial extrapolation to q = 0 (Neville) of samples `(q_i, g_i)`.
fn extrapolate_to_zero(q: &[f64], g: &[f64]) -> f64 {
    let mut p = g.to_vec();
    let n = p.len();
    for m in 1..n {
        for i in 0..n - m {
            p[i] = (q[i + m] * p[i] - q[i] * p[i + 1]) / (q[i + m] - q[i]);
        }
    }
    p[0]
}

const RICHARDSON_Q: [f64; 3] = [1e-3, 1e-4, 1e-5];

fn scaled_args(crit: &CriticalData, dmu: f64, k: f64, q: f64) -> (f64, f64) {
    (dmu * q.powf(1.0 / crit.nu_z()), k * q.powf(1.0 / crit.z))
}

fn local_ab_at(model: &dyn BdgModel, dmu: f64, eps: f64) -> Option<(f64, f64)> {
    let k = momentum_of_energy(&model.critical(), eps);
    model.local_ab(dmu, k)
}

/// Local dispersion `Λ(δμ, ε)`, with the mode labelled by `ε = c₁|k|^z ≥ 0`.
///
/// Satisfies `Λ(a^{1/(νz)} δμ, a ε) = a Λ(δμ, ε)`.
pub fn local_dispersion(model: &dyn BdgModel, dmu: f64, eps: f64) -> f64 {
    if let Some((a, b)) = local_ab_at(model, dmu, eps) {
        return a.hypot(b);
    }
    let crit = model.critical();
    let k = momentum_of_energy(&crit, eps);
    let g: Vec<f64> = RICHARDSON_Q
        .iter()
        .map(|&q| {
            let (d, kk) = scaled_args(&crit, dmu, k, q);
            dispersion(model, d, kk) / q
        })
        .collect();
    extrapolate_to_zero(&RICHARDSON_Q, &g).max(0.0)
}

/// `∂Λ/∂δμ` at fixed `ε`.
pub fn local_dispersion_slope(model: &dyn BdgModel, dmu: f64, eps: f64) -> f64 {
    let k = momentum_of_energy(&model.critical(), eps);
    if let (Some((a, b)), Some((da, db))) =
        (model.local_ab(dmu, k), model.local_ab_partials(dmu, k))
    {
        let lambda = a.hypot(b);
        if lambda > 0.0 {
            return (a * da + b * db) / lambda;
        }
    }
    let h = fd_step(dmu);
    (local_dispersion(model, dmu + h, eps) - local_dispersion(model, dmu - h, eps)) / (2.0 * h)
}

/// Local Bogoliubov angle `𝓑(δμ, ε)`, invariant under `(δμ, ε) → (a^{1/(νz)} δμ, a ε)`.
pub fn local_angle(model: &dyn BdgModel, dmu: f64, eps: f64) -> Result<f64> {
    if let Some((a, b)) = local_ab_at(model, dmu, eps) {
        return half_angle(a, b, dmu, eps);
    }
    if dmu == 0.0 && eps == 0.0 {
        return Err(Error::Degenerate { dmu, k: 0.0 });
    }
    let crit = model.critical();
    let k = momentum_of_energy(&crit, eps);
    let mut g = [0.0; 3];
    for (gi, &q) in g.iter_mut().zip(RICHARDSON_Q.iter()) {
        let (d, kk) = scaled_args(&crit, dmu, k, q);
        *gi = bogoliubov_angle(model, d, kk)?;
    }
    Ok(extrapolate_to_zero(&RICHARDSON_Q, &g))
}

/// `∂𝓑/∂δμ` at fixed `ε`.
pub fn local_angle_slope(model: &dyn BdgModel, dmu: f64, eps: f64) -> Result<f64> {
    let k = momentum_of_energy(&model.critical(), eps);
    if let (Some((a, b)), Some((da, db))) =
        (model.local_ab(dmu, k), model.local_ab_partials(dmu, k))
    {
        return angle_slope(a, b, da, db, dmu, eps);
    }
    let h = fd_step(dmu);
    let up = local_angle(model, dmu + h, eps)?;
    let down = local_angle(model, dmu - h, eps)?;
    Ok((up - down) / (2.0 * h))
}

/// Local gap `Λ(δμ, 0)`.
pub fn local_gap(model: &dyn BdgModel, dmu: f64) -> f64 {
    local_dispersion(model, dmu, 0.0)
}

/// Excitation gap `Δ(δμ) = min_k λ(δμ, k)` over `k ∈ [−π, π]`.
///
/// Coarse scan followed by golden-section refinement of the best bracket.
pub fn gap(model: &dyn BdgModel, dmu: f64) -> f64 {
    const SCAN: usize = 2000;
    let step = 2.0 * PI / SCAN as f64;
    let f = |k: f64| dispersion(model, dmu, k);
    let (best, _) = (0..=SCAN)
        .map(|i| (i, f(-PI + i as f64 * step)))
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    let mut lo = (-PI + (best as f64 - 1.0) * step).max(-PI);
    let mut hi = (-PI + (best as f64 + 1.0) * step).min(PI);
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > 1e-12 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    f1.min(f2).min(f(0.5 * (lo + hi)))
}

/// Local density of states `ρ̃(ε) = ε^{1/z−1} / (π z c₁^{1/z})`, both signs of `k`
/// included.
pub fn local_dos(crit: &CriticalData, eps: f64) -> Result<f64> {
    if eps < 0.0 || !eps.is_finite() {
        return Err(Error::InvalidArgument {
            name: "eps",
            value: eps,
            reason: "must be non-negative and finite",
        });
    }
    if eps == 0.0 && crit.z > 1.0 {
        return Err(Error::DivergentDensity { z: crit.z });
    }
    let z = crit.z;
    Ok(eps.powf(1.0 / z - 1.0) / (PI * z * crit.c1.powf(1.0 / z)))
}
