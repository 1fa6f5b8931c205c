//! Exponent extraction, power-law fits, data collapse, and the two exact
//! identities that serve as end-to-end checks of the dynamics.

use crate::bath::BathParams;
use crate::dynamics::{
    excitation_density, fixed_velocity_density, mode_occupations, DynamicsOptions,
    FixedVelocityResult, Frozen, LadderOptions, Schedule,
};
use crate::error::{check_positive, Error, Result};
use crate::model::{local_gap, BdgModel};
use crate::protocol::{scheme_params, Exponents, RampClass, RampSpec, SchemeParams};

/// Provenance attached to a curve. The fingerprint is an opaque digest of
/// the configuration that produced the samples; curves are only compared
/// when their callers decide the fingerprints are compatible.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveMetadata {
    pub label: String,
    pub fingerprint: String,
    /// Reference time in `E = (t0/t_f)^ζ D`.
    pub t0: f64,
}

impl CurveMetadata {
    pub fn new(label: impl Into<String>, t0: f64) -> Self {
        Self {
            label: label.into(),
            fingerprint: String::new(),
            t0,
        }
    }
}

/// Sampled `(t_f, 𝓔(t_f))` pairs with strictly increasing `t_f` and `𝓔 > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingCurve {
    samples: Vec<(f64, f64)>,
    pub metadata: CurveMetadata,
}

impl ScalingCurve {
    pub fn new(samples: Vec<(f64, f64)>, metadata: CurveMetadata) -> Result<Self> {
        check_positive("t0", metadata.t0)?;
        for (i, &(t, e)) in samples.iter().enumerate() {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::InvalidCurve(format!("sample {i}: t_f = {t} is not positive")));
            }
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::InvalidCurve(format!("sample {i}: E = {e} is not positive")));
            }
        }
        if let Some(i) = samples.windows(2).position(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidCurve(format!(
                "t_f not strictly increasing at sample {}",
                i + 1
            )));
        }
        Ok(Self { samples, metadata })
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn t0(&self) -> f64 {
        self.metadata.t0
    }

    /// The decade `[t_max/10, t_max]` of slowest ramps.
    pub fn slowest_decade(&self) -> Option<(f64, f64)> {
        self.samples.last().map(|&(t, _)| (t / 10.0, t))
    }

    fn in_window(&self, window: (f64, f64)) -> impl Iterator<Item = &(f64, f64)> {
        let (lo, hi) = widen(window);
        self.samples.iter().filter(move |(t, _)| *t >= lo && *t <= hi)
    }
}

/// Window edges widened by a relative `1e-12`.
fn widen((lo, hi): (f64, f64)) -> (f64, f64) {
    (lo * (1.0 - 1e-12), hi * (1.0 + 1e-12))
}

/// Least-squares power law over a window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub zeta_hat: f64,
    pub prefactor: f64,
    pub residual_rms: f64,
    pub window: (f64, f64),
    pub samples: usize,
}

/// Straight line `y = slope·x + intercept` by least squares; returns
/// `(slope, intercept, rms residual)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    let n = xs.len();
    if n != ys.len() {
        return Err(Error::InvalidCurve(format!("{n} abscissae but {} ordinates", ys.len())));
    }
    if n < 2 {
        return Err(Error::InsufficientSamples(format!("line fit needs 2 points, got {n}")));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientSamples("all abscissae coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum();
    Ok((slope, intercept, (ss / nf).sqrt()))
}

/// Fits `log 𝓔 = ζ log(t0/t_f) + log D` over samples with `t_f` in `window`.
pub fn fit_power_law(curve: &ScalingCurve, window: (f64, f64)) -> Result<FitResult> {
    let t0 = curve.t0();
    let (xs, ys): (Vec<f64>, Vec<f64>) = curve
        .in_window(window)
        .map(|&(t, e)| ((t0 / t).ln(), e.ln()))
        .unzip();
    if xs.is_empty() {
        return Err(Error::InsufficientSamples(format!(
            "window [{:e}, {:e}] contains no samples",
            window.0, window.1
        )));
    }
    if xs.len() < 4 {
        return Err(Error::InsufficientSamples(format!(
            "window [{:e}, {:e}] contains {} samples, need at least 4",
            window.0,
            window.1,
            xs.len()
        )));
    }
    let (slope, intercept, residual_rms) = linear_fit(&xs, &ys)?;
    Ok(FitResult {
        zeta_hat: slope,
        prefactor: intercept.exp(),
        residual_rms,
        window,
        samples: xs.len(),
    })
}

/// Log-log fit of `𝓔` against a ramp velocity at fixed path shape. The slope
/// is reported as a positive exponent, `𝓔 ∝ v^{zeta_hat}`.
pub fn fit_velocity_law(points: &[(f64, f64)]) -> Result<FitResult> {
    if points.len() < 4 {
        return Err(Error::InsufficientSamples(format!(
            "velocity fit needs at least 4 points, got {}",
            points.len()
        )));
    }
    if let Some(&(v, e)) = points.iter().find(|(v, e)| !(*v > 0.0 && *e > 0.0)) {
        return Err(Error::InvalidCurve(format!("non-positive point ({v}, {e})")));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().map(|(v, e)| (v.ln(), e.ln())).unzip();
    let (slope, intercept, residual_rms) = linear_fit(&xs, &ys)?;
    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.0).fold(0.0, f64::max);
    Ok(FitResult {
        zeta_hat: slope,
        prefactor: intercept.exp(),
        residual_rms,
        window: (lo, hi),
        samples: points.len(),
    })
}

/// Finite-`t_f` exponent `ζ^est = −d log 𝓔 / d log t_f` at `t_f_eval`.
///
/// Differentiates the quadratic through three consecutive samples in
/// `log t_f`. At a sample with neighbours on both sides this is the central
/// difference on the non-uniform grid; at the first and last samples it
/// becomes the one-sided three-point difference.
pub fn estimate_exponent(curve: &ScalingCurve, t_f_eval: f64) -> Result<f64> {
    let s = curve.samples();
    if s.len() < 3 {
        return Err(Error::InsufficientSamples(format!(
            "exponent estimate needs 3 samples, curve has {}",
            s.len()
        )));
    }
    let (lo, hi) = widen((s[0].0, s[s.len() - 1].0));
    if !(t_f_eval >= lo && t_f_eval <= hi) {
        return Err(Error::InsufficientSamples(format!(
            "t_f = {t_f_eval:e} is not bracketed by samples in [{:e}, {:e}]",
            s[0].0,
            s[s.len() - 1].0
        )));
    }
    let x = t_f_eval.ln();
    let nearest = s
        .iter()
        .enumerate()
        .min_by(|a, b| {
            let da = (a.1 .0.ln() - x).abs();
            let db = (b.1 .0.ln() - x).abs();
            da.total_cmp(&db)
        })
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mid = nearest.clamp(1, s.len() - 2);
    let pts: Vec<(f64, f64)> = s[mid - 1..=mid + 1]
        .iter()
        .map(|&(t, e)| (t.ln(), e.ln()))
        .collect();
    let [(x0, y0), (x1, y1), (x2, y2)] = [pts[0], pts[1], pts[2]];
    let slope = y0 * ((x - x1) + (x - x2)) / ((x0 - x1) * (x0 - x2))
        + y1 * ((x - x0) + (x - x2)) / ((x1 - x0) * (x1 - x2))
        + y2 * ((x - x0) + (x - x1)) / ((x2 - x0) * (x2 - x1));
    Ok(-slope)
}

/// `(t_f, ζ^est(t_f))` at every sample.
pub fn exponent_series(curve: &ScalingCurve) -> Result<Vec<(f64, f64)>> {
    curve
        .samples()
        .iter()
        .map(|&(t, _)| Ok((t, estimate_exponent(curve, t)?)))
        .collect()
}

/// Where a collapse prefactor came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrefactorSource {
    FixedVelocity,
    FitIntercept,
}

impl std::fmt::Display for PrefactorSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::FixedVelocity => "fixed-velocity",
            Self::FitIntercept => "fit-intercept",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prefactor {
    pub value: f64,
    pub source: PrefactorSource,
}

impl Prefactor {
    pub fn fixed_velocity(value: f64) -> Self {
        Self {
            value,
            source: PrefactorSource::FixedVelocity,
        }
    }
}

/// Fallback prefactor: the intercept of a fixed-slope fit, `log D̂ = ⟨log 𝓔 − ζ log(t0/t_f)⟩`.
pub fn intercept_prefactor(curve: &ScalingCurve, zeta: f64, window: (f64, f64)) -> Result<Prefactor> {
    let t0 = curve.t0();
    let logs: Vec<f64> = curve
        .in_window(window)
        .map(|&(t, e)| e.ln() - zeta * (t0 / t).ln())
        .collect();
    if logs.is_empty() {
        return Err(Error::InsufficientSamples("intercept window contains no samples".into()));
    }
    Ok(Prefactor {
        value: (logs.iter().sum::<f64>() / logs.len() as f64).exp(),
        source: PrefactorSource::FitIntercept,
    })
}

/// Exponents of `f = t_f/t0` carried by the auxiliary-ramp parameters under a
/// rescaling scheme. Each must be `≤ 0` for the slow-ramp limit to exist;
/// negative ones send the parameter to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxiliaryExponents {
    pub v_mu: f64,
    pub v_temp: f64,
    pub gamma: f64,
    pub kappa: f64,
}

impl AuxiliaryExponents {
    pub fn of(scheme: &SchemeParams, ex: &Exponents) -> Self {
        let (r, p, s) = (scheme.r, scheme.p, ex.s);
        Self {
            v_mu: p / (s * ex.nu * ex.z) - ex.beta * (1.0 - r),
            v_temp: p / s - ex.alpha * (1.0 - r),
            gamma: r - p,
            kappa: r - p / s,
        }
    }
}

/// Scheme whose auxiliary ramp has a finite slow-ramp limit for this class.
pub fn scheme_for(class: RampClass, ex: &Exponents, coherent: bool) -> Result<SchemeParams> {
    if coherent {
        return scheme_params(4, ex);
    }
    if ex.s > 1.0 {
        return Err(Error::UnsupportedRegime(format!(
            "no dissipative rescaling scheme for a super-ohmic bath (s = {})",
            ex.s
        )));
    }
    match class {
        RampClass::A | RampClass::B => scheme_params(1, ex),
        RampClass::C => scheme_params(2, ex),
    }
}

/// `f`-power `e` applied to a value in the `f → ∞` limit.
fn limit_of(name: &str, value: f64, e: f64) -> Result<f64> {
    const TOL: f64 = 1e-12;
    if value == 0.0 || e < -TOL {
        Ok(0.0)
    } else if e <= TOL {
        Ok(value)
    } else {
        Err(Error::UnsupportedRegime(format!(
            "{name} grows as f^{e} under the chosen scheme; the slow-ramp limit does not exist"
        )))
    }
}

/// Collapse prefactor from the fixed-velocity limit.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefactorRun {
    pub prefactor: Prefactor,
    pub zeta: f64,
    pub scheme: SchemeParams,
    /// Limiting `(v̄_μ, v̄_T, γ̄, κ̄)` of the auxiliary ramp.
    pub limit: (f64, f64, f64, f64),
    pub ladder: FixedVelocityResult,
}

/// `D` in `𝓔(t_f) ≈ (t0/t_f)^ζ D`: the density of the auxiliary ramp in the
/// `t_f → ∞` limit, evaluated on a fixed-velocity ladder.
pub fn fixed_velocity_prefactor(
    ramp: &RampSpec,
    model: &dyn BdgModel,
    bath: &BathParams,
    opts: &DynamicsOptions,
    t0: f64,
    ladder: &LadderOptions,
) -> Result<PrefactorRun> {
    check_positive("t0", t0)?;
    let crit = model.critical();
    let ex = Exponents {
        alpha: ramp.alpha,
        beta: ramp.beta,
        nu: crit.nu,
        z: crit.z,
        s: bath.s,
    };
    let coherent = bath.gamma == 0.0;
    let scheme = scheme_for(ramp.classify(crit.nu_z()), &ex, coherent)?;
    let e = AuxiliaryExponents::of(&scheme, &ex);
    let v_mu = limit_of("v_mu", ramp.dmu_i * t0.powf(-ramp.beta), e.v_mu)?;
    let v_temp = limit_of("v_T", ramp.temp_i * t0.powf(-ramp.alpha), e.v_temp)?;
    let gamma = limit_of("gamma", bath.gamma, e.gamma)?;
    let kappa = limit_of("kappa", opts.kappa, e.kappa)?;
    let aux_opts = DynamicsOptions {
        kappa,
        eps_max: None,
        ..opts.clone()
    };
    let run = fixed_velocity_density(
        v_mu,
        v_temp,
        ramp.alpha,
        ramp.beta,
        model,
        &bath.with_gamma(gamma),
        &aux_opts,
        ladder,
    )?;
    Ok(PrefactorRun {
        prefactor: Prefactor::fixed_velocity(run.density),
        zeta: scheme.zeta,
        scheme,
        limit: (v_mu, v_temp, gamma, kappa),
        ladder: run,
    })
}

/// One collapsed sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollapsedPoint {
    pub t_f: f64,
    /// `log(t0/t_f)`.
    pub x: f64,
    /// `log(𝓔/D)/ζ`.
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollapsedCurve {
    pub label: String,
    pub zeta: f64,
    pub prefactor: Prefactor,
    pub points: Vec<CollapsedPoint>,
}

impl CollapsedCurve {
    /// Collapsed ordinate at `t_f`, linear in `log t_f` between samples.
    fn y_at(&self, t_f: f64) -> Option<f64> {
        let p = &self.points;
        let first = p.first()?;
        let last = p.last()?;
        let (lo, hi) = widen((first.t_f, last.t_f));
        if t_f < lo || t_f > hi {
            return None;
        }
        if p.len() == 1 {
            return Some(first.y);
        }
        let x = t_f.ln();
        let j = p.partition_point(|q| q.t_f.ln() < x).clamp(1, p.len() - 1);
        let (a, b) = (p[j - 1], p[j]);
        let (xa, xb) = (a.t_f.ln(), b.t_f.ln());
        let u = ((x - xa) / (xb - xa)).clamp(0.0, 1.0);
        Some(a.y + u * (b.y - a.y))
    }
}

/// Curves rescaled onto the universal line.
#[derive(Debug, Clone, PartialEq)]
pub struct Collapse {
    pub curves: Vec<CollapsedCurve>,
}

/// Rescales each curve to `(log(t0/t_f), log(𝓔/D)/ζ)`.
pub fn collapse(curves: &[ScalingCurve], zetas: &[f64], prefactors: &[Prefactor]) -> Result<Collapse> {
    if zetas.len() != curves.len() {
        return Err(Error::InvalidCurve(format!(
            "{} curves but {} exponents",
            curves.len(),
            zetas.len()
        )));
    }
    if prefactors.len() != curves.len() {
        return Err(Error::InvalidCurve(format!(
            "{} curves but {} prefactors",
            curves.len(),
            prefactors.len()
        )));
    }
    let mut out = Vec::with_capacity(curves.len());
    for ((curve, &zeta), &prefactor) in curves.iter().zip(zetas).zip(prefactors) {
        if !(zeta > 0.0 && zeta.is_finite()) {
            return Err(Error::InvalidCurve(format!(
                "curve `{}`: exponent {zeta} is not positive",
                curve.metadata.label
            )));
        }
        if !(prefactor.value > 0.0 && prefactor.value.is_finite()) {
            return Err(Error::InvalidCurve(format!(
                "curve `{}`: prefactor {} is not positive",
                curve.metadata.label, prefactor.value
            )));
        }
        let t0 = curve.t0();
        let points = curve
            .samples()
            .iter()
            .map(|&(t_f, e)| CollapsedPoint {
                t_f,
                x: (t0 / t_f).ln(),
                y: (e / prefactor.value).ln() / zeta,
            })
            .collect();
        out.push(CollapsedCurve {
            label: curve.metadata.label.clone(),
            zeta,
            prefactor,
            points,
        });
    }
    Ok(Collapse { curves: out })
}

impl Collapse {
    /// Largest cross-curve spread of the collapsed ordinate, taken over the
    /// sample times inside `window`. Each curve is interpolated in `log t_f`
    /// onto every sample time it covers.
    pub fn spread(&self, window: (f64, f64)) -> Result<f64> {
        let (lo, hi) = widen(window);
        let mut bins: Vec<f64> = self
            .curves
            .iter()
            .flat_map(|c| c.points.iter().map(|p| p.t_f))
            .filter(|t| *t >= lo && *t <= hi)
            .collect();
        bins.sort_by(f64::total_cmp);
        bins.dedup();
        let mut worst: Option<f64> = None;
        for t in bins {
            let ys: Vec<f64> = self.curves.iter().filter_map(|c| c.y_at(t)).collect();
            if ys.len() < 2 {
                continue;
            }
            let max = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = ys.iter().copied().fold(f64::INFINITY, f64::min);
            worst = Some(worst.unwrap_or(0.0).max(max - min));
        }
        worst.ok_or_else(|| {
            Error::InsufficientSamples("no t_f in the window is covered by two curves".into())
        })
    }

    /// Slope of one line through every collapsed point with `t_f` in `window`.
    pub fn slope(&self, window: (f64, f64)) -> Result<f64> {
        let (lo, hi) = widen(window);
        let (xs, ys): (Vec<f64>, Vec<f64>) = self
            .curves
            .iter()
            .flat_map(|c| c.points.iter())
            .filter(|p| p.t_f >= lo && p.t_f <= hi)
            .map(|p| (p.x, p.y))
            .unzip();
        Ok(linear_fit(&xs, &ys)?.0)
    }

    /// Common slowest decade: `[t/10, t]` with `t` the largest sample time.
    pub fn slowest_decade(&self) -> Option<(f64, f64)> {
        let t = self
            .curves
            .iter()
            .filter_map(|c| c.points.last().map(|p| p.t_f))
            .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |a| a.max(t))))?;
        Some((t / 10.0, t))
    }
}

/// The image of `(ramp, bath, options)` under the map
/// `(ε, t_f, γ, κ, δμ_i, T_i) → (aε, b t_f, γ/(aˢb), κ/(ab), a^{1/νz} δμ_i, a T_i)`.
pub fn rescaled_problem(
    ramp: &RampSpec,
    model: &dyn BdgModel,
    bath: &BathParams,
    opts: &DynamicsOptions,
    a: f64,
    b: f64,
) -> Result<(RampSpec, BathParams, DynamicsOptions)> {
    check_positive("a", a)?;
    check_positive("b", b)?;
    let nu_z = model.critical().nu_z();
    let eps_max = opts
        .eps_max
        .unwrap_or_else(|| 20.0 * ramp.temp_i.max(local_gap(model, ramp.dmu_i)));
    let scaled_ramp = RampSpec::new(
        ramp.alpha,
        ramp.beta,
        a.powf(1.0 / nu_z) * ramp.dmu_i,
        a * ramp.temp_i,
        b * ramp.t_f,
    )?;
    let scaled_bath = bath.with_gamma(bath.gamma / (a.powf(bath.s) * b));
    let scaled_opts = DynamicsOptions {
        kappa: opts.kappa / (a * b),
        eps_max: Some(a * eps_max),
        ..opts.clone()
    };
    Ok((scaled_ramp, scaled_bath, scaled_opts))
}

/// Both sides of the rescaling identity and their relative residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityCheck {
    pub a: f64,
    pub b: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// `|LHS − a^{−1/z} RHS| / LHS`.
    pub residual: f64,
}

/// Runs the base problem and its `(a, b)` image through the local dynamics
/// and compares `𝓔` against `a^{−1/z} 𝓔'`.
pub fn verify_scaling_identity(
    ramp: &RampSpec,
    model: &dyn BdgModel,
    bath: &BathParams,
    opts: &DynamicsOptions,
    a: f64,
    b: f64,
) -> Result<IdentityCheck> {
    if !opts.use_local {
        return Err(Error::UnsupportedRegime(
            "the rescaling identity holds for the local (linearized) dynamics only".into(),
        ));
    }
    let (ramp2, bath2, opts2) = rescaled_problem(ramp, model, bath, opts, a, b)?;
    let base_opts = DynamicsOptions {
        eps_max: opts2.eps_max.map(|e| e / a),
        ..opts.clone()
    };
    let lhs = excitation_density(ramp, model, bath, &base_opts)?;
    let rhs = excitation_density(&ramp2, model, &bath2, &opts2)?;
    let z = model.critical().z;
    Ok(IdentityCheck {
        a,
        b,
        lhs,
        rhs,
        residual: (lhs - a.powf(-1.0 / z) * rhs).abs() / lhs,
    })
}

/// Non-adiabatic correction `𝓔(t_f) − 𝓔(0)` of a coherent ramp, computed by
/// direct integration from `T_i` and by rewriting a single `T_i = 0` run as
/// `P(t_f, T_i) = P(t_f, 0)(1 − 2P(0, T_i)) + P(0, T_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherentCorrection {
    pub initial_density: f64,
    pub final_density: f64,
    pub direct: f64,
    pub rewritten: f64,
    /// `|direct − rewritten| / |direct|`, or the absolute difference when the
    /// correction vanishes.
    pub discrepancy: f64,
    /// Largest per-mode relative mismatch of the rewrite.
    pub max_mode_discrepancy: f64,
}

pub fn coherent_correction(
    ramp: &RampSpec,
    model: &dyn BdgModel,
    bath: &BathParams,
    opts: &DynamicsOptions,
) -> Result<CoherentCorrection> {
    if bath.gamma != 0.0 {
        return Err(Error::UnsupportedRegime(format!(
            "coherent correction needs gamma = 0, got {}",
            bath.gamma
        )));
    }
    let opts = DynamicsOptions {
        eps_max: Some(
            opts.eps_max
                .unwrap_or_else(|| 20.0 * ramp.temp_i.max(local_gap(model, ramp.dmu_i))),
        ),
        ..opts.clone()
    };
    let warm = mode_occupations(ramp, model, bath, &opts)?;
    let cold_schedule: Box<dyn Schedule> = if ramp.dmu_i == 0.0 {
        Box::new(Frozen {
            dmu: 0.0,
            temp: 0.0,
            duration: ramp.t_f,
        })
    } else {
        Box::new(RampSpec { temp_i: 0.0, ..*ramp })
    };
    let cold = mode_occupations(cold_schedule.as_ref(), model, bath, &opts)?;

    let mut rewritten_final = 0.0;
    let mut max_mode_discrepancy: f64 = 0.0;
    for i in 0..warm.weights.len() {
        let p0 = warm.initial[i];
        let predicted = cold.final_p[i] * (1.0 - 2.0 * p0) + p0;
        rewritten_final += warm.weights[i] * predicted;
        let actual = warm.final_p[i];
        let scale = actual.abs().max(1e-300);
        if actual != predicted {
            max_mode_discrepancy = max_mode_discrepancy.max((actual - predicted).abs() / scale);
        }
    }
    let initial_density = warm.initial_density();
    let final_density = warm.final_density();
    let direct = final_density - initial_density;
    let rewritten = rewritten_final - initial_density;
    let diff = (direct - rewritten).abs();
    let discrepancy = if direct != 0.0 { diff / direct.abs() } else { diff };
    Ok(CoherentCorrection {
        initial_density,
        final_density,
        direct,
        rewritten,
        discrepancy,
        max_mode_discrepancy,
    })
}
