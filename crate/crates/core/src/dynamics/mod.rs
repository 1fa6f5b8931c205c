//! Per-mode open-system dynamics, excitation densities and fixed-velocity limits.
//!
//! Each mode carries the occupation `P` and anomalous correlator `C`. With
//! `s = 1 − τ` and `y = (P − ½, Re C, Im C)` the equations of motion read
//!
//! ```text
//! dy/ds = −ρ y + a × y + ρ (P^th − ½) e_x,
//! ρ = t_f R(λ, T),   a = (2 t_f κ λ, 2 dβ/ds, 0),
//! ```
//!
//! a damped rotation of a Bloch-like vector. The integrator works on the
//! deviation `δ = y − q(s) e_x` from a reference `q` that follows the
//! instantaneous thermal value (or the initial value when γ = 0), which keeps the
//! forcing free of the large factors `t_f R` and `t_f λ`.

mod magnus;
mod rk;
pub(crate) mod vec3;

use rayon::prelude::*;

use crate::bath::{relaxation_rate_unchecked, thermal_occupation, BathParams};
use crate::error::{check_positive, Error, Result};
use crate::model::{
    bogoliubov_angle, bogoliubov_angle_slope, dispersion, dispersion_slope, local_angle,
    local_angle_slope, local_dispersion, local_dispersion_slope, local_dos, local_gap,
    momentum_of_energy, BdgModel,
};
use crate::protocol::RampSpec;
use crate::quadrature::{gauss_legendre, graded_grid, panel_grid, Grid};
use vec3::{add, norm, scale, Vec3};

/// Occupation and anomalous correlator of one mode.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ModeState {
    pub p: f64,
    pub c_re: f64,
    pub c_im: f64,
}

impl ModeState {
    /// Thermal state `P = P^th(λ/T)`, `C = 0`.
    pub fn thermal(lambda: f64, temp: f64) -> Self {
        Self {
            p: thermal_occupation(lambda, temp),
            c_re: 0.0,
            c_im: 0.0,
        }
    }

    /// Whether `P ∈ [0, 1]` and `|C| ≤ ½` up to `slack`.
    pub fn is_physical(&self, slack: f64) -> bool {
        let x = self.p - 0.5;
        self.p >= -slack
            && self.p <= 1.0 + slack
            && self.c_re.hypot(self.c_im) <= 0.5 + slack
            && (x * x + self.c_re * self.c_re + self.c_im * self.c_im).sqrt() <= 0.5 + slack
    }

    /// Copy with `P` clamped into `[0, 1]`.
    pub fn clamped(self) -> Self {
        Self {
            p: self.p.clamp(0.0, 1.0),
            ..self
        }
    }

    fn to_vec(self) -> Vec3 {
        [self.p - 0.5, self.c_re, self.c_im]
    }
}

/// A mode. `Momentum(k)` evolves with the exact `(λ, β)`; `Energy(ε)` labels a
/// mode of the local approximation by its critical energy `ε = c₁|k|^z` and
/// evolves with `(Λ, 𝓑)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModeLabel {
    Momentum(f64),
    Energy(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    /// Adaptive fourth-order Magnus exponential integrator.
    #[default]
    Magnus,
    /// Adaptive Dormand–Prince 5(4); a mode that rejects more than 20% of its
    /// steps or exhausts the step budget is redone with [`Integrator::Magnus`].
    DormandPrince,
}

impl std::str::FromStr for Integrator {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "magnus" => Ok(Integrator::Magnus),
            "dopri5" | "dormand-prince" => Ok(Integrator::DormandPrince),
            other => Err(format!("unknown integrator `{other}` (expected magnus|dopri5)")),
        }
    }
}

/// Composite Gauss–Legendre grid graded geometrically toward zero energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    /// Number of halvings `J`.
    pub panels: usize,
    pub nodes_per_panel: usize,
}

impl GridSpec {
    pub fn modes(&self) -> usize {
        crate::quadrature::graded_panel_count(self.panels) * self.nodes_per_panel
    }

    pub fn refined(self) -> Self {
        Self {
            nodes_per_panel: 2 * self.nodes_per_panel,
            ..self
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsOptions {
    /// Unitary bookkeeping factor κ (1 physical, 0 incoherent only).
    pub kappa: f64,
    /// Evolve the local approximation on an ε-grid instead of the exact chain on a k-grid.
    pub use_local: bool,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub integrator: Integrator,
    /// k-grid on `(0, π]` for exact runs.
    pub exact_grid: GridSpec,
    /// ε-grid on `(0, eps_max]` for local runs.
    pub local_grid: GridSpec,
    /// Upper ε cutoff; `None` means `20·max(T_i, Λ(δμ_i, 0))`.
    pub eps_max: Option<f64>,
    /// End point of the integration when `dβ/dτ` diverges at `τ = 0`.
    pub tau_min: f64,
    pub max_steps: usize,
    /// When set, every density is recomputed with twice the nodes per panel and
    /// rejected if the two differ by more than ten times this relative target.
    pub convergence_target: Option<f64>,
}

impl Default for DynamicsOptions {
    fn default() -> Self {
        Self {
            kappa: 1.0,
            use_local: false,
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            integrator: Integrator::Magnus,
            exact_grid: GridSpec {
                panels: 20,
                nodes_per_panel: 8,
            },
            local_grid: GridSpec {
                panels: 32,
                nodes_per_panel: 8,
            },
            eps_max: None,
            tau_min: 1e-12,
            max_steps: 5_000_000,
            convergence_target: None,
        }
    }
}

impl DynamicsOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidArgument {
                name: "kappa",
                value: self.kappa,
                reason: "must be non-negative and finite",
            });
        }
        check_positive("rel_tol", self.rel_tol)?;
        check_positive("abs_tol", self.abs_tol)?;
        check_positive("tau_min", self.tau_min)?;
        if let Some(e) = self.eps_max {
            check_positive("eps_max", e)?;
        }
        for grid in [self.exact_grid, self.local_grid] {
            if grid.modes() < 16 || grid.nodes_per_panel == 0 {
                return Err(Error::InvalidArgument {
                    name: "grid",
                    value: grid.modes() as f64,
                    reason: "needs at least 16 modes",
                });
            }
        }
        Ok(())
    }

    fn grid(&self) -> GridSpec {
        if self.use_local {
            self.local_grid
        } else {
            self.exact_grid
        }
    }
}

/// Time dependence of `(δμ, T)` over `τ ∈ [0, 1]` together with the duration `t_f`.
pub trait Schedule: Send + Sync {
    fn duration(&self) -> f64;
    fn dmu(&self, tau: f64) -> f64;
    fn temp(&self, tau: f64) -> f64;
    /// `dδμ/dτ`.
    fn dmu_rate(&self, tau: f64) -> f64;
    /// `dT/dτ`.
    fn temp_rate(&self, tau: f64) -> f64;
    /// Whether `dδμ/dτ` diverges at `τ = 0`.
    fn singular_at_end(&self) -> bool {
        false
    }
}

impl Schedule for RampSpec {
    fn duration(&self) -> f64 {
        self.t_f
    }

    fn dmu(&self, tau: f64) -> f64 {
        self.dmu_at(tau)
    }

    fn temp(&self, tau: f64) -> f64 {
        self.temp_at(tau)
    }

    fn dmu_rate(&self, tau: f64) -> f64 {
        self.dmu_rate_at(tau)
    }

    fn temp_rate(&self, tau: f64) -> f64 {
        if self.temp_i == 0.0 {
            0.0
        } else {
            self.alpha * self.temp_i * tau.powf(self.alpha - 1.0)
        }
    }

    fn singular_at_end(&self) -> bool {
        self.beta < 1.0 && self.dmu_i != 0.0
    }
}

/// Constant `(δμ, T)` held for a duration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frozen {
    pub dmu: f64,
    pub temp: f64,
    pub duration: f64,
}

impl Schedule for Frozen {
    fn duration(&self) -> f64 {
        self.duration
    }

    fn dmu(&self, _tau: f64) -> f64 {
        self.dmu
    }

    fn temp(&self, _tau: f64) -> f64 {
        self.temp
    }

    fn dmu_rate(&self, _tau: f64) -> f64 {
        0.0
    }

    fn temp_rate(&self, _tau: f64) -> f64 {
        0.0
    }
}

/// Coefficients of the equations of motion at one instant, as `s`-derivatives.
#[derive(Debug, Clone, Copy)]
struct Coefficients {
    rho: f64,
    /// `2 t_f κ λ`.
    omega: f64,
    /// `2 dβ/ds`.
    twist: f64,
    /// `P^th − ½`.
    q_th: f64,
    /// `d(P^th)/ds`.
    dq_th: f64,
}

#[derive(Debug, Clone, Copy)]
enum Reference {
    Thermal,
    /// Fixed occupation.
    Fixed(f64),
}

struct ModeProblem<'a> {
    label: ModeLabel,
    /// Momentum used by closed-form local limits.
    k_local: f64,
    schedule: &'a dyn Schedule,
    model: &'a dyn BdgModel,
    bath: &'a BathParams,
    kappa: f64,
    reference: Reference,
}

impl<'a> ModeProblem<'a> {
    fn new(
        label: ModeLabel,
        schedule: &'a dyn Schedule,
        model: &'a dyn BdgModel,
        bath: &'a BathParams,
        kappa: f64,
    ) -> Result<Self> {
        let k_local = match label {
            ModeLabel::Momentum(k) => {
                if !(k.is_finite() && k.abs() <= std::f64::consts::PI) {
                    return Err(Error::InvalidArgument {
                        name: "k",
                        value: k,
                        reason: "must lie in [-pi, pi]",
                    });
                }
                k
            }
            ModeLabel::Energy(eps) => {
                if !(eps >= 0.0 && eps.is_finite()) {
                    return Err(Error::InvalidArgument {
                        name: "eps",
                        value: eps,
                        reason: "must be non-negative and finite",
                    });
                }
                momentum_of_energy(&model.critical(), eps)
            }
        };
        Ok(Self {
            label,
            k_local,
            schedule,
            model,
            bath,
            kappa,
            reference: Reference::Thermal,
        })
    }

    fn energy(&self, dmu: f64) -> f64 {
        match self.label {
            ModeLabel::Momentum(k) => dispersion(self.model, dmu, k),
            ModeLabel::Energy(eps) => match self.model.local_ab(dmu, self.k_local) {
                Some((a, b)) => a.hypot(b),
                None => local_dispersion(self.model, dmu, eps),
            },
        }
    }

    fn energy_slope(&self, dmu: f64) -> f64 {
        match self.label {
            ModeLabel::Momentum(k) => dispersion_slope(self.model, dmu, k),
            ModeLabel::Energy(eps) => local_dispersion_slope(self.model, dmu, eps),
        }
    }

    fn angle(&self, dmu: f64) -> Result<f64> {
        match self.label {
            ModeLabel::Momentum(k) => bogoliubov_angle(self.model, dmu, k),
            ModeLabel::Energy(eps) => local_angle(self.model, dmu, eps),
        }
    }

    fn angle_slope(&self, dmu: f64) -> Result<f64> {
        match self.label {
            ModeLabel::Momentum(k) => bogoliubov_angle_slope(self.model, dmu, k),
            ModeLabel::Energy(eps) => local_angle_slope(self.model, dmu, eps),
        }
    }

    fn degenerate(&self, dmu: f64) -> Error {
        let k = match self.label {
            ModeLabel::Momentum(k) => k,
            ModeLabel::Energy(eps) => eps,
        };
        Error::Degenerate { dmu, k }
    }

    fn initial_state(&self) -> Result<ModeState> {
        let dmu = self.schedule.dmu(1.0);
        let lambda = self.energy(dmu);
        if lambda == 0.0 {
            return Err(self.degenerate(dmu));
        }
        Ok(ModeState::thermal(lambda, self.schedule.temp(1.0)))
    }

    fn coefficients(&self, tau: f64) -> Result<Coefficients> {
        let t_f = self.schedule.duration();
        let dmu = self.schedule.dmu(tau);
        let temp = self.schedule.temp(tau);
        let lambda = self.energy(dmu);
        if lambda == 0.0 || !lambda.is_finite() {
            return Err(self.degenerate(dmu));
        }
        let dmu_tau = self.schedule.dmu_rate(tau);
        let twist = if dmu_tau == 0.0 {
            0.0
        } else {
            -2.0 * self.angle_slope(dmu)? * dmu_tau
        };
        let p_th = thermal_occupation(lambda, temp);
        let dq_th = if temp > 0.0 && p_th > 0.0 {
            let lambda_tau = if dmu_tau == 0.0 {
                0.0
            } else {
                self.energy_slope(dmu) * dmu_tau
            };
            let ratio_tau = (lambda_tau * temp - lambda * self.schedule.temp_rate(tau)) / (temp * temp);
            p_th * (1.0 - p_th) * ratio_tau
        } else {
            0.0
        };
        Ok(Coefficients {
            rho: t_f * relaxation_rate_unchecked(self.bath, lambda, temp),
            omega: 2.0 * t_f * self.kappa * lambda,
            twist,
            q_th: p_th - 0.5,
            dq_th,
        })
    }

    fn reference_at(&self, c: &Coefficients) -> (f64, f64) {
        match self.reference {
            Reference::Thermal => (c.q_th, c.dq_th),
            Reference::Fixed(p) => (p - 0.5, 0.0),
        }
    }

    /// Reference occupation `q(τ) + ½` without evaluating rates (safe at
    /// `τ = 0`).
    fn reference_occupation(&self, tau: f64) -> Result<f64> {
        match self.reference {
            Reference::Fixed(p) => Ok(p),
            Reference::Thermal => {
                let dmu = self.schedule.dmu(tau);
                let lambda = self.energy(dmu);
                if lambda == 0.0 {
                    return Err(self.degenerate(dmu));
                }
                Ok(thermal_occupation(lambda, self.schedule.temp(tau)))
            }
        }
    }

    /// Generator of the deviation `δ = y − q e_x`.
    fn sample(&self, tau: f64) -> Result<(magnus::Sample, f64)> {
        let c = self.coefficients(tau)?;
        let (q, dq) = self.reference_at(&c);
        let forcing = [c.rho * (c.q_th - q) - dq, 0.0, -c.twist * q];
        Ok((
            magnus::Sample {
                rho: c.rho,
                axis: [c.omega, c.twist, 0.0],
                forcing,
            },
            q,
        ))
    }

    /// `dδ/ds`.
    fn deviation_rhs(&self, tau: f64, delta: Vec3) -> Result<Vec3> {
        let (s, _) = self.sample(tau)?;
        let rot = vec3::cross(s.axis, delta);
        Ok(add(add(rot, scale(delta, -s.rho)), s.forcing))
    }
}

/// `d/dτ` of `(P, Re C, Im C)` for one mode.
pub fn mode_rhs(
    state: &ModeState,
    tau: f64,
    label: ModeLabel,
    schedule: &dyn Schedule,
    model: &dyn BdgModel,
    bath: &BathParams,
    opts: &DynamicsOptions,
) -> Result<ModeState> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::InvalidArgument {
            name: "tau",
            value: tau,
            reason: "must lie in (0, 1]",
        });
    }
    let problem = ModeProblem::new(label, schedule, model, bath, opts.kappa)?;
    let c = problem.coefficients(tau)?;
    let y = state.to_vec();
    let axis = [c.omega, c.twist, 0.0];
    let ds = add(
        add(vec3::cross(axis, y), scale(y, -c.rho)),
        [c.rho * c.q_th, 0.0, 0.0],
    );
    Ok(ModeState {
        p: -ds[0],
        c_re: -ds[1],
        c_im: -ds[2],
    })
}

/// Outcome of one mode integration.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeEvolution {
    /// State at the end of the ramp (`τ = 0`), `P` not clamped.
    pub final_state: ModeState,
    /// States at the requested sample points, in request order.
    pub samples: Vec<ModeState>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// Whether the Dormand–Prince attempt was abandoned for the Magnus integrator.
    pub fell_back: bool,
    /// Bound on the change of `P` over `[0, τ_min]` not covered by the integration;
    /// zero when the schedule is integrated up to `τ = 0`.
    pub terminal_bound: f64,
}

/// Final state of a mode started in its thermal state.
pub fn evolve_mode(
    label: ModeLabel,
    schedule: &dyn Schedule,
    model: &dyn BdgModel,
    bath: &BathParams,
    opts: &DynamicsOptions,
) -> Result<ModeState> {
    Ok(evolve_mode_detailed(label, schedule, model, bath, opts, None, &[])?.final_state)
}

/// Integrates one mode from `τ = 1` to `τ = 0`, optionally from an explicit
/// initial state, recording the state at each sample `τ` (any order, within `[0, 1]`).
pub fn evolve_mode_detailed(
    label: ModeLabel,
    schedule: &dyn Schedule,
    model: &dyn BdgModel,
    bath: &BathParams,
    opts: &DynamicsOptions,
    initial: Option<ModeState>,
    sample_taus: &[f64],
) -> Result<ModeEvolution> {
    opts.validate()?;
    bath.validate()?;
    check_positive("t_f", schedule.duration())?;
    if let Some(bad) = sample_taus.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::InvalidArgument {
            name: "sample tau",
            value: *bad,
            reason: "must lie in [0, 1]",
        });
    }
    let mut problem = ModeProblem::new(label, schedule, model, bath, opts.kappa)?;
    let start = match initial {
        Some(s) => s,
        None => problem.initial_state()?,
    };
    if bath.gamma == 0.0 {
        problem.reference = Reference::Fixed(start.p);
    }

    let run = |method: Integrator| integrate(&problem, start, sample_taus, opts, method);
    match opts.integrator {
        Integrator::Magnus => run(Integrator::Magnus),
        Integrator::DormandPrince => match run(Integrator::DormandPrince) {
            Ok(ev) if (ev.rejected_steps as f64) <= 0.2 * (ev.accepted_steps + ev.rejected_steps) as f64 => {
                Ok(ev)
            }
            Ok(_) | Err(Error::StepBudget { .. }) | Err(Error::StepUnderflow { .. }) => {
                let mut ev = run(Integrator::Magnus)?;
                ev.fell_back = true;
                Ok(ev)
            }
            Err(e) => Err(e),
        },
    }
}

const GRADING: f64 = 0.25;

fn integrate(
    problem: &ModeProblem<'_>,
    start: ModeState,
    sample_taus: &[f64],
    opts: &DynamicsOptions,
    method: Integrator,
) -> Result<ModeEvolution> {
    let singular = problem.schedule.singular_at_end();
    let tau_end = if singular { opts.tau_min.min(1.0) } else { 0.0 };

    // Sample targets in decreasing τ; samples below τ_end are taken at τ_end.
    let mut order: Vec<usize> = (0..sample_taus.len()).collect();
    order.sort_by(|&a, &b| sample_taus[b].total_cmp(&sample_taus[a]));
    let mut samples = vec![ModeState::default(); sample_taus.len()];
    let mut next_sample = 0;

    let mut p_ref = problem.reference_occupation(1.0)?;
    let mut delta = [start.p - p_ref, start.c_re, start.c_im];
    let mut tau = 1.0;
    let compose = |d: Vec3, p_ref: f64| ModeState {
        p: p_ref + d[0],
        c_re: d[1],
        c_im: d[2],
    };

    let error_order = match method {
        Integrator::Magnus => 3.0,
        Integrator::DormandPrince => 5.0,
    };
    let mut h: f64 = 1e-3;
    let mut err_prev: f64 = 1.0;
    let (mut accepted, mut rejected) = (0usize, 0usize);

    loop {
        while next_sample < order.len() && sample_taus[order[next_sample]] >= tau - 1e-15 {
            samples[order[next_sample]] = compose(delta, p_ref);
            next_sample += 1;
        }
        if tau <= tau_end {
            break;
        }
        let target = if next_sample < order.len() {
            sample_taus[order[next_sample]].max(tau_end)
        } else {
            tau_end
        };
        let remaining = tau - target;
        // Ramp features sit at τ ∝ ε^{1/β} for every mode energy ε, so steps are
        // graded geometrically all the way down to τ_min.
        let cap = if tau > opts.tau_min { GRADING * tau } else { f64::INFINITY };
        let mut hh = h.min(remaining).min(cap);
        let lands = hh >= remaining * (1.0 - 1e-12);
        if lands {
            hh = remaining;
        }
        if accepted + rejected >= opts.max_steps {
            return Err(Error::StepBudget {
                tau,
                max_steps: opts.max_steps,
            });
        }

        let (candidate, err_vec, q_lo, q_hi) = match method {
            Integrator::Magnus => {
                let (s1, q1) = problem.sample(tau - magnus::GAUSS_NODES[0] * hh)?;
                let (s2, q2) = problem.sample(tau - magnus::GAUSS_NODES[1] * hh)?;
                let (mid, _) = problem.sample(tau - 0.5 * hh)?;
                let (y, e) = magnus::step(delta, hh, &s1, &s2, &mid);
                (y, e, q1, q2)
            }
            Integrator::DormandPrince => {
                let rhs = |t: f64, d: Vec3| problem.deviation_rhs(t, d);
                let (y, e) = rk::step(&rhs, tau, delta, hh)?;
                (y, e, p_ref - 0.5, p_ref - 0.5)
            }
        };
        let size = norm(add(delta, [q_lo, 0.0, 0.0])).max(norm(add(candidate, [q_hi, 0.0, 0.0])));
        let err = norm(err_vec) / (opts.abs_tol + opts.rel_tol * size);

        if err.is_finite() && err <= 1.0 {
            accepted += 1;
            tau = if lands { target } else { tau - hh };
            delta = candidate;
            p_ref = problem.reference_occupation(tau)?;
            let err_c = err.max(1e-10);
            let factor = 0.9 * err_c.powf(-0.7 / error_order) * err_prev.powf(0.4 / error_order);
            h = hh * factor.clamp(0.2, 5.0);
            if lands {
                h = h.max(hh);
            }
            err_prev = err_c;
        } else {
            rejected += 1;
            let factor = if err.is_finite() {
                (0.9 * err.powf(-1.0 / error_order)).clamp(0.1, 0.9)
            } else {
                0.1
            };
            h = hh * factor;
            if h <= 16.0 * f64::EPSILON * tau.max(f64::MIN_POSITIVE) {
                return Err(Error::StepUnderflow { tau });
            }
        }
    }

    let mut terminal_bound = 0.0;
    if tau_end > 0.0 {
        let d_end = problem.schedule.dmu(tau_end);
        let d_zero = problem.schedule.dmu(0.0);
        let jump = problem.angle(d_zero)? - problem.angle(d_end)?;
        // dβ/ds integrated over the remaining interval, applied to first order.
        let (x, w) = (p_ref - 0.5 + delta[0], delta[2]);
        delta[0] += 2.0 * jump * w;
        delta[2] = w - 2.0 * jump * x;
        terminal_bound = jump.abs();
        let final_state = compose(delta, p_ref);
        for (slot, &t) in samples.iter_mut().zip(sample_taus) {
            if t < tau_end {
                *slot = final_state;
            }
        }
    }
    Ok(ModeEvolution {
        final_state: compose(delta, p_ref),
        samples,
        accepted_steps: accepted,
        rejected_steps: rejected,
        fell_back: false,
        terminal_bound,
    })
}

/// Excitation density with integration diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityReport {
    pub density: f64,
    /// Contribution of the panel `[eps_max, 2 eps_max]` (local runs only).
    pub tail_estimate: Option<f64>,
    /// Upper cutoff used for local runs.
    pub eps_max: Option<f64>,
    /// Quadrature-weighted sum of the per-mode terminal bounds.
    pub terminal_bound: f64,
    pub modes: usize,
    pub fallbacks: usize,
    pub total_steps: usize,
    /// `(N, 2N)` densities when a refinement check was requested.
    pub refinement: Option<(f64, f64)>,
}

/// Quadrature nodes with the weights that turn `Σ w P` into a density.
struct ModeGrid {
    labels: Vec<ModeLabel>,
    weights: Vec<f64>,
    tail: Option<(Vec<ModeLabel>, Vec<f64>)>,
    eps_max: Option<f64>,
}

fn default_eps_max(schedule: &dyn Schedule, model: &dyn BdgModel) -> f64 {
    20.0 * schedule
        .temp(1.0)
        .max(local_gap(model, schedule.dmu(1.0)))
}

fn mode_grid(
    schedule: &dyn Schedule,
    model: &dyn BdgModel,
    opts: &DynamicsOptions,
    spec: GridSpec,
) -> Result<ModeGrid> {
    if opts.use_local {
        let crit = model.critical();
        let eps_max = opts.eps_max.unwrap_or_else(|| default_eps_max(schedule, model));
        check_positive("eps_max", eps_max)?;
        let weigh = |g: Grid| -> Result<(Vec<ModeLabel>, Vec<f64>)> {
            let mut w = Vec::with_capacity(g.len());
            for (&e, &wi) in g.nodes.iter().zip(&g.weights) {
                w.push(wi * local_dos(&crit, e)?);
            }
            Ok((g.nodes.into_iter().map(ModeLabel::Energy).collect(), w))
        };
        let (labels, weights) = weigh(graded_grid(eps_max, spec.panels, spec.nodes_per_panel))?;
        let (x, w) = gauss_legendre(spec.nodes_per_panel);
        let tail = weigh(panel_grid(&[eps_max, 2.0 * eps_max], &x, &w))?;
        Ok(ModeGrid {
            labels,
            weights,
            tail: Some(tail),
            eps_max: Some(eps_max),
        })
    } else {
        let g = graded_grid(std::f64::consts::PI, spec.panels, spec.nodes_per_panel);
        let weights = g.weights.iter().map(|w| w / std::f64::consts::PI).collect();
        Ok(ModeGrid {
            labels: g.nodes.into_iter().map(ModeLabel::Momentum).collect(),
            weights,
            tail: None,
            eps_max: None,
        })
    }
}

fn evolve_all(
    labels: &[ModeLabel],
    schedule: &dyn Schedule,
    model: &dyn BdgModel,
    bath: &BathParams,
    opts: &DynamicsOptions,
    sample_taus: &[f64],
) -> Result<Vec<ModeEvolution>> {
    labels
        .par_iter()
        .map(|&l| evolve_mode_detailed(l, schedule, model, bath, opts, None, sample_taus))
        .collect()
}

fn density_on(
    spec: GridSpec,
    schedule: &dyn Schedule,
    model: &dyn BdgModel,
    bath: &BathParams,
    opts: &DynamicsOptions,
) -> Result<DensityReport> {
    let grid = mode_grid(schedule, model, opts, spec)?;
    let runs = evolve_all(&grid.labels, schedule, model, bath, opts, &[])?;
    let mut density = 0.0;
    let mut terminal_bound = 0.0;
    for (run, w) in runs.iter().zip(&grid.weights) {
        density += w * run.final_state.p;
        terminal_bound += w * run.terminal_bound;
    }
    let mut fallbacks = runs.iter().filter(|r| r.fell_back).count();
    let mut total_steps: usize = runs.iter().map(|r| r.accepted_steps + r.rejected_steps).sum();
    let tail_estimate = match &grid.tail {
        Some((labels, weights)) => {
            let tail_runs = evolve_all(labels, schedule, model, bath, opts, &[])?;
            fallbacks += tail_runs.iter().filter(|r| r.fell_back).count();
            total_steps += tail_runs
                .iter()
                .map(|r| r.accepted_steps + r.rejected_steps)
                .sum::<usize>();
            Some(
                tail_runs
                    .iter()
                    .zip(weights)
                    .map(|(r, w)| w * r.final_state.p)
                    .sum(),
            )
        }
        None => None,
    };
    Ok(DensityReport {
        density,
        tail_estimate,
        eps_max: grid.eps_max,
        terminal_bound,
        modes: grid.labels.len(),
        fallbacks,
        total_steps,
        refinement: None,
    })
}

/// Excitation density `𝓔(t_f)` at the end of the schedule, with diagnostics.
pub fn excitation_density_report(
    schedule: &dyn Schedule,
    model: &dyn BdgModel,
    bath: &BathParams,
    opts: &DynamicsOptions,
) -> Result<DensityReport> {
    opts.validate()?;
    bath.validate()?;
    let spec = opts.grid();
    let mut report = density_on(spec, schedule, model, bath, opts)?;
    if let Some(target) = opts.convergence_target {
        let fine = density_on(spec.refined(), schedule, model, bath, opts)?;
        let (coarse, fine_d) = (report.density, fine.density);
        if (fine_d - coarse).abs() > 10.0 * target * fine_d.abs() {
            return Err(Error::QuadratureNotConverged {
                coarse,
                fine: fine_d,
                target,
            });
        }
        report.refinement = Some((coarse, fine_d));
    }
    Ok(report)
}

/// Excitation density `𝓔(t_f)` at the end of the schedule.
pub fn excitation_density(
    schedule: &dyn Schedule,
    model: &dyn BdgModel,
    bath: &BathParams,
    opts: &DynamicsOptions,
) -> Result<f64> {
    Ok(excitation_density_report(schedule, model, bath, opts)?.density)
}

/// Per-mode initial and final occupations on the quadrature grid, with the
/// weights that turn `Σ w P` into a density.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeOccupations {
    pub labels: Vec<ModeLabel>,
    pub weights: Vec<f64>,
    pub initial: Vec<f64>,
    pub final_p: Vec<f64>,
}

impl ModeOccupations {
    pub fn initial_density(&self) -> f64 {
        self.weights.iter().zip(&self.initial).map(|(w, p)| w * p).sum()
    }

    pub fn final_density(&self) -> f64 {
        self.weights.iter().zip(&self.final_p).map(|(w, p)| w * p).sum()
    }
}

/// Evolves every grid mode and returns its occupation at the start and end of
/// the schedule.
pub fn mode_occupations(
    schedule: &dyn Schedule,
    model: &dyn BdgModel,
    bath: &BathParams,
    opts: &DynamicsOptions,
) -> Result<ModeOccupations> {
    opts.validate()?;
    bath.validate()?;
    let grid = mode_grid(schedule, model, opts, opts.grid())?;
    let runs = evolve_all(&grid.labels, schedule, model, bath, opts, &[1.0])?;
    Ok(ModeOccupations {
        initial: runs.iter().map(|r| r.samples[0].p).collect(),
        final_p: runs.iter().map(|r| r.final_state.p).collect(),
        labels: grid.labels,
        weights: grid.weights,
    })
}

/// Instantaneous thermal excitation density at `τ` on the grid used for dynamics.
pub fn thermal_density(
    schedule: &dyn Schedule,
    tau: f64,
    model: &dyn BdgModel,
    opts: &DynamicsOptions,
) -> Result<f64> {
    let grid = mode_grid(schedule, model, opts, opts.grid())?;
    let dmu = schedule.dmu(tau);
    let temp = schedule.temp(tau);
    let mut total = 0.0;
    for (label, w) in grid.labels.iter().zip(&grid.weights) {
        let lambda = match *label {
            ModeLabel::Momentum(k) => dispersion(model, dmu, k),
            ModeLabel::Energy(eps) => local_dispersion(model, dmu, eps),
        };
        total += w * thermal_occupation(lambda, temp);
    }
    Ok(total)
}

/// One sample of an excitation-density trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub tau: f64,
    pub dmu: f64,
    pub temp: f64,
    pub density: f64,
    /// Instantaneous thermal density at the same `(δμ, T)`.
    pub thermal: f64,
}

/// `𝓔(t)` at `n_samples` equally spaced times from `t = 0` to `t = t_f`.
pub fn excitation_trajectory(
    schedule: &dyn Schedule,
    model: &dyn BdgModel,
    bath: &BathParams,
    opts: &DynamicsOptions,
    n_samples: usize,
) -> Result<Vec<TrajectoryPoint>> {
    if n_samples < 2 {
        return Err(Error::InvalidArgument {
            name: "n_samples",
            value: n_samples as f64,
            reason: "need at least two samples",
        });
    }
    opts.validate()?;
    bath.validate()?;
    let taus: Vec<f64> = (0..n_samples)
        .map(|j| 1.0 - j as f64 / (n_samples - 1) as f64)
        .map(|t| t.max(0.0))
        .collect();
    let grid = mode_grid(schedule, model, opts, opts.grid())?;
    let runs = evolve_all(&grid.labels, schedule, model, bath, opts, &taus)?;
    let t_f = schedule.duration();
    taus.iter()
        .enumerate()
        .map(|(j, &tau)| {
            let density = runs
                .iter()
                .zip(&grid.weights)
                .map(|(r, w)| w * r.samples[j].p)
                .sum();
            Ok(TrajectoryPoint {
                t: (1.0 - tau) * t_f,
                tau,
                dmu: schedule.dmu(tau),
                temp: schedule.temp(tau),
                density,
                thermal: thermal_density(schedule, tau, model, opts)?,
            })
        })
        .collect()
}

/// Settings of the fixed-velocity `t_f` ladder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LadderOptions {
    pub t_start: f64,
    pub rel_tol: f64,
    pub max_doublings: usize,
}

impl Default for LadderOptions {
    fn default() -> Self {
        Self {
            t_start: 1.0,
            rel_tol: 1e-3,
            max_doublings: 12,
        }
    }
}

/// Fixed-velocity limit with the ladder of `(t_f, 𝓔(t_f))` that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedVelocityResult {
    pub density: f64,
    pub ladder: Vec<(f64, f64)>,
    pub last_change: f64,
}

/// `𝓓 = lim 𝓔(t_f)` for ramps started at `(v_μ t_f^β, v_T t_f^α)`, evaluated on
/// a doubling ladder of `t_f` until successive values agree to `ladder.rel_tol`.
#[allow(clippy::too_many_arguments)]
pub fn fixed_velocity_density(
    v_mu: f64,
    v_temp: f64,
    alpha: f64,
    beta: f64,
    model: &dyn BdgModel,
    bath: &BathParams,
    opts: &DynamicsOptions,
    ladder: &LadderOptions,
) -> Result<FixedVelocityResult> {
    if v_mu == 0.0 && v_temp == 0.0 {
        return Err(Error::InvalidRamp("both velocities are zero".into()));
    }
    check_positive("t_start", ladder.t_start)?;
    check_positive("ladder rel_tol", ladder.rel_tol)?;
    let mut rungs: Vec<(f64, f64)> = Vec::new();
    let mut last_change = f64::INFINITY;
    for n in 0..=ladder.max_doublings {
        let t_f = ladder.t_start * 2f64.powi(n as i32);
        let ramp = RampSpec::new(
            alpha,
            beta,
            v_mu * t_f.powf(beta),
            v_temp * t_f.powf(alpha),
            t_f,
        )?;
        let e = excitation_density(&ramp, model, bath, opts)?;
        if let Some(&(_, prev)) = rungs.last() {
            last_change = ((e - prev) / e).abs();
        }
        rungs.push((t_f, e));
        if rungs.len() >= 3 && last_change < ladder.rel_tol {
            return Ok(FixedVelocityResult {
                density: e,
                ladder: rungs,
                last_change,
            });
        }
    }
    Err(Error::LadderNotConverged {
        ladder: rungs,
        last_change,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Kitaev;
    use approx::assert_relative_eq;

    fn kitaev() -> Kitaev {
        Kitaev::new(1.0, 1.0).unwrap()
    }

    /// The 3×3 generator written out by hand, acting on (P, Re C, Im C).
    fn oracle_rhs(
        p: f64,
        c: (f64, f64),
        t_f: f64,
        r: f64,
        p_th: f64,
        kappa: f64,
        lambda: f64,
        beta_tau: f64,
    ) -> [f64; 3] {
        // −dP/dτ = −t_f R (P − P^th) + 2 β_τ Im C
        // −dC/dτ = −t_f R C + 2i t_f κ λ C − 2i β_τ (P − ½)
        let dp = t_f * r * (p - p_th) - 2.0 * beta_tau * c.1;
        let dre = t_f * r * c.0 + 2.0 * t_f * kappa * lambda * c.1;
        let dim = t_f * r * c.1 - 2.0 * t_f * kappa * lambda * c.0 + 2.0 * beta_tau * (p - 0.5);
        [dp, dre, dim]
    }

    #[test]
    fn rhs_matches_linear_system_oracle() {
        let model = kitaev();
        let bath = BathParams::new(0.05, 1.0, 1.0).unwrap();
        let ramp = RampSpec::new(0.5, 1.0, -0.28, 0.28, 40.0).unwrap();
        let opts = DynamicsOptions::default();
        let tau = 0.37;
        let k = 0.3;
        let state = ModeState {
            p: 0.2,
            c_re: 0.1,
            c_im: -0.05,
        };
        let got = mode_rhs(&state, tau, ModeLabel::Momentum(k), &ramp, &model, &bath, &opts).unwrap();

        let dmu = -0.28 * tau;
        let temp = 0.28 * tau.sqrt();
        let lambda = dispersion(&model, dmu, k);
        let r = crate::bath::relaxation_rate(&bath, lambda, temp).unwrap();
        let p_th = crate::bath::fermi_dirac(lambda / temp);
        let h = 1e-6;
        let beta_tau = (bogoliubov_angle(&model, -0.28 * (tau + h), k).unwrap()
            - bogoliubov_angle(&model, -0.28 * (tau - h), k).unwrap())
            / (2.0 * h);
        // The oracle's equations map onto the solver's under C → −C.
        let want = oracle_rhs(state.p, (-state.c_re, -state.c_im), 40.0, r, p_th, 1.0, lambda, beta_tau);
        assert_relative_eq!(got.p, want[0], max_relative = 1e-7);
        assert_relative_eq!(got.c_re, -want[1], max_relative = 1e-7);
        assert_relative_eq!(got.c_im, -want[2], max_relative = 1e-7);
    }

    #[test]
    fn frozen_isolated_mode_rotates() {
        let model = kitaev();
        let bath = BathParams::new(0.0, 1.0, 1.0).unwrap();
        let frozen = Frozen {
            dmu: -0.3,
            temp: 0.0,
            duration: 5.0,
        };
        let opts = DynamicsOptions::default();
        let state = ModeState {
            p: 0.3,
            c_re: 0.2,
            c_im: 0.0,
        };
        let d = mode_rhs(&state, 0.5, ModeLabel::Momentum(0.4), &frozen, &model, &bath, &opts).unwrap();
        assert_eq!(d.p, 0.0);
        let lambda = dispersion(&model, -0.3, 0.4);
        // dC/ds = 2i t_f κ λ C, dC/dτ = −2i t_f κ λ C
        assert_relative_eq!(d.c_im, -2.0 * 5.0 * lambda * 0.2, max_relative = 1e-14);
    }

    #[test]
    fn incoherent_frozen_mode_is_a_rate_equation() {
        let model = kitaev();
        let bath = BathParams::new(0.1, 1.0, 1.0).unwrap();
        let frozen = Frozen {
            dmu: -0.3,
            temp: 0.4,
            duration: 3.0,
        };
        let opts = DynamicsOptions {
            kappa: 0.0,
            ..DynamicsOptions::default()
        };
        let state = ModeState {
            p: 0.9,
            ..Default::default()
        };
        let label = ModeLabel::Momentum(0.5);
        let d = mode_rhs(&state, 0.5, label, &frozen, &model, &bath, &opts).unwrap();
        let lambda = dispersion(&model, -0.3, 0.5);
        let r = crate::bath::relaxation_rate(&bath, lambda, 0.4).unwrap();
        let p_th = crate::bath::fermi_dirac(lambda / 0.4);
        assert_relative_eq!(d.p, 3.0 * r * (0.9 - p_th), max_relative = 1e-13);

        let ev = evolve_mode_detailed(label, &frozen, &model, &bath, &opts, Some(state), &[0.5]).unwrap();
        let at = |t: f64| p_th + (0.9 - p_th) * (-r * t).exp();
        assert_relative_eq!(ev.samples[0].p, at(1.5), max_relative = 1e-8);
        assert_relative_eq!(ev.final_state.p, at(3.0), max_relative = 1e-8);
    }

    #[test]
    fn ground_state_is_stationary_without_bath() {
        let model = kitaev();
        let bath = BathParams::new(0.0, 1.0, 1.0).unwrap();
        let frozen = Frozen {
            dmu: -0.2,
            temp: 0.0,
            duration: 100.0,
        };
        let s = evolve_mode(ModeLabel::Energy(0.3), &frozen, &model, &bath, &DynamicsOptions::default()).unwrap();
        assert_eq!(s.p, 0.0);
    }

    #[test]
    fn degenerate_mode_is_rejected() {
        let model = kitaev();
        let bath = BathParams::new(0.0, 1.0, 1.0).unwrap();
        let frozen = Frozen {
            dmu: 0.0,
            temp: 0.1,
            duration: 1.0,
        };
        let r = evolve_mode(ModeLabel::Energy(0.0), &frozen, &model, &bath, &DynamicsOptions::default());
        assert!(matches!(r, Err(Error::Degenerate { .. })));
    }

    #[test]
    fn trajectory_starts_at_thermal_density() {
        let model = kitaev();
        let bath = BathParams::new(0.05, 1.0, 1.0).unwrap();
        let ramp = RampSpec::new(1.0, 1.0, -0.28, 0.28, 20.0).unwrap();
        let opts = DynamicsOptions {
            exact_grid: GridSpec {
                panels: 6,
                nodes_per_panel: 4,
            },
            ..DynamicsOptions::default()
        };
        let traj = excitation_trajectory(&ramp, &model, &bath, &opts, 5).unwrap();
        assert_eq!(traj.len(), 5);
        assert_eq!(traj[0].tau, 1.0);
        assert_relative_eq!(traj[0].density, traj[0].thermal, max_relative = 1e-14);
        assert_eq!(traj[4].tau, 0.0);
        let end = excitation_density(&ramp, &model, &bath, &opts).unwrap();
        assert_relative_eq!(traj[4].density, end, max_relative = 1e-9);
    }

    #[test]
    fn dormand_prince_agrees_with_magnus() {
        let model = kitaev();
        let bath = BathParams::new(0.05, 1.0, 1.0).unwrap();
        let ramp = RampSpec::new(1.0, 1.0, -0.28, 0.28, 30.0).unwrap();
        let label = ModeLabel::Momentum(0.2);
        let m = evolve_mode(label, &ramp, &model, &bath, &DynamicsOptions::default()).unwrap();
        let opts = DynamicsOptions {
            integrator: Integrator::DormandPrince,
            ..DynamicsOptions::default()
        };
        let d = evolve_mode(label, &ramp, &model, &bath, &opts).unwrap();
        assert_relative_eq!(m.p, d.p, max_relative = 1e-6);
    }

    #[test]
    fn terminal_correction_is_reported_for_sublinear_ramps() {
        let model = kitaev();
        let bath = BathParams::new(0.05, 1.0, 1.0).unwrap();
        let ramp = RampSpec::new(1.0, 0.5, -0.28, 0.28, 30.0).unwrap();
        let ev = evolve_mode_detailed(
            ModeLabel::Energy(0.05),
            &ramp,
            &model,
            &bath,
            &DynamicsOptions::default(),
            None,
            &[],
        )
        .unwrap();
        assert!(ev.terminal_bound > 0.0 && ev.terminal_bound < 1e-4);
        assert!(ev.final_state.is_physical(1e-9));
    }
}
