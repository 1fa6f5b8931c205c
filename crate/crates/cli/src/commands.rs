//! The subcommands. Each returns whether every requested computation
//! converged; hard failures (bad input, missing files) are errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use kzopen_core::analysis::{
    coherent_correction, collapse, exponent_series, fit_power_law, fixed_velocity_prefactor, intercept_prefactor,
    scheme_for, verify_scaling_identity, CurveMetadata, Prefactor, ScalingCurve,
};
use kzopen_core::dynamics::{excitation_density_report, excitation_trajectory, DynamicsOptions, LadderOptions};
use kzopen_core::model::BdgModel;
use kzopen_core::protocol::{predicted_exponent, Exponents, RampClass, Regime};
use rayon::prelude::*;

use crate::config::{num, Config, PrefactorChoice, OUTPUT_MAGIC};
use crate::output::{cell, float, gnuplot, read_sweep, write_file, SweepRow, Table};

/// Settings shared by all subcommands.
pub struct Session {
    /// Output root from `--out` or `KZOPEN_OUT`.
    pub out: Option<PathBuf>,
    pub seedless: bool,
}

impl Session {
    fn root(&self, cfg: &Config) -> PathBuf {
        self.out
            .clone()
            .or_else(|| cfg.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("kzopen-out"))
    }

    fn header(&self, cfg: &Config, kind: &str) -> String {
        let mut h = cfg.header(kind);
        if self.seedless {
            h.push_str("# seedless = true\n");
        }
        h
    }
}

pub fn sweep_path(root: &Path, cfg: &Config) -> PathBuf {
    root.join(format!("{}.sweep.csv", cfg.name))
}

fn exponents(cfg: &Config) -> Exponents {
    let crit = cfg.model.critical();
    Exponents {
        alpha: cfg.ramp.alpha,
        beta: cfg.ramp.beta,
        nu: crit.nu,
        z: crit.z,
        s: cfg.bath.s,
    }
}

fn class_of(cfg: &Config) -> RampClass {
    cfg.ramp.classify(cfg.model.critical().nu_z())
}

/// Predicted ζ for the config's regime, or the reason there is none.
fn prediction(cfg: &Config) -> std::result::Result<(f64, &'static str), String> {
    let (regime, label) = if cfg.bath.gamma == 0.0 {
        (Regime::Coherent, "coherent")
    } else if cfg.bath.s > 1.0 {
        (Regime::SuperOhmicConjecture, "super-ohmic conjecture")
    } else {
        (Regime::Dissipative, "dissipative")
    };
    predicted_exponent(class_of(cfg), &exponents(cfg), regime)
        .map(|z| (z, label))
        .map_err(|e| e.to_string())
}

fn need_t_f(cfg: &Config, what: &str) -> Result<f64> {
    cfg.ramp_t_f
        .ok_or_else(|| anyhow!("{}: `{what}` needs a single duration `ramp.t_f`", cfg.name))
}

pub fn ramp(ctx: &Session, cfg: &Config) -> Result<bool> {
    let t_f = need_t_f(cfg, "ramp")?;
    let schedule = cfg.ramp_with(t_f)?;
    let run = |kappa: f64, gamma: f64| {
        let opts = DynamicsOptions {
            kappa,
            ..cfg.dynamics.clone()
        };
        excitation_trajectory(&schedule, &cfg.model, &cfg.bath.with_gamma(gamma), &opts, cfg.samples)
            .map_err(|e| anyhow!("{}: {e}", cfg.name))
    };
    let (kappa, gamma) = (cfg.dynamics.kappa, cfg.bath.gamma);
    let main = run(kappa, gamma)?;
    let variants = if cfg.toggles {
        vec![run(0.0, gamma)?, run(kappa, 0.0)?, run(0.0, 0.0)?]
    } else {
        Vec::new()
    };

    let mut columns = vec!["t", "tau", "dmu", "T", "E"];
    if cfg.toggles {
        columns.extend(["E_kappa0", "E_gamma0", "E_kappa0_gamma0"]);
    }
    columns.push("E_th");
    let mut table = Table::new(ctx.header(cfg, "ramp"), &columns);
    for (i, p) in main.iter().enumerate() {
        let mut row = vec![float(p.t), float(p.tau), float(p.dmu), float(p.temp), float(p.density)];
        row.extend(variants.iter().map(|v| float(v[i].density)));
        row.push(float(p.thermal));
        table.push(row);
    }
    let root = ctx.root(cfg);
    let file = format!("{}.ramp.csv", cfg.name);
    write_file(&root.join(&file), &table.render())?;
    if cfg.gnuplot {
        let series: Vec<(String, usize, usize, String)> = (5..=columns.len())
            .map(|c| (file.clone(), 1, c, columns[c - 1].to_string()))
            .collect();
        let script = gnuplot(&format!("{}: excitation density", cfg.name), "t", "E", "", &series);
        write_file(&root.join(format!("{}.ramp.gp", cfg.name)), &script)?;
    }
    let last = main.last().expect("at least two samples");
    println!(
        "{}: E(t_f = {}) = {:.6e} (thermal {:.6e}), {} samples -> {}",
        cfg.name,
        num(t_f),
        last.density,
        last.thermal,
        main.len(),
        root.join(&file).display()
    );
    Ok(true)
}

pub fn sweep(ctx: &Session, cfg: &Config) -> Result<bool> {
    if cfg.sweep.is_empty() {
        bail!("{}: zero-length sweep (set `sweep.t_f` or `sweep.log_min`/`sweep.log_max`)", cfg.name);
    }
    let root = ctx.root(cfg);
    let path = sweep_path(&root, cfg);
    let mut done: BTreeMap<u64, SweepRow> = BTreeMap::new();
    if path.exists() {
        let old = read_sweep(&path)?;
        if old.fingerprint != cfg.fingerprint() {
            bail!(
                "refusing to resume {}: it was written for fingerprint {}, the config has {}",
                path.display(),
                old.fingerprint,
                cfg.fingerprint()
            );
        }
        for r in old.rows.into_iter().filter(SweepRow::is_ok) {
            done.insert(r.t_f.to_bits(), r);
        }
    }
    let mut wanted: Vec<f64> = cfg.sweep.clone();
    wanted.sort_by(f64::total_cmp);
    wanted.dedup();
    let missing: Vec<f64> = wanted.iter().copied().filter(|t| !done.contains_key(&t.to_bits())).collect();
    let reused = wanted.len() - missing.len();

    let computed: Vec<SweepRow> = missing
        .par_iter()
        .map(|&t_f| {
            let ramp = match cfg.ramp_with(t_f) {
                Ok(r) => r,
                Err(e) => return SweepRow::failed(t_f, &e.to_string()),
            };
            match excitation_density_report(&ramp, &cfg.model, &cfg.bath, &cfg.dynamics) {
                Ok(rep) if rep.density > 0.0 && rep.density.is_finite() => SweepRow {
                    t_f,
                    density: rep.density,
                    modes: rep.modes,
                    steps: rep.total_steps,
                    fallbacks: rep.fallbacks,
                    terminal_bound: rep.terminal_bound,
                    status: "ok".into(),
                },
                Ok(rep) => SweepRow::failed(t_f, &format!("non-positive density {}", rep.density)),
                Err(e) => SweepRow::failed(t_f, &e.to_string()),
            }
        })
        .collect();
    for r in computed {
        done.insert(r.t_f.to_bits(), r);
    }

    let mut table = Table::new(ctx.header(cfg, "sweep"), &SweepRow::COLUMNS);
    let mut failures = 0;
    for t in &wanted {
        let r = &done[&t.to_bits()];
        if !r.is_ok() {
            failures += 1;
            eprintln!("{}: t_f = {}: {}", cfg.name, num(*t), r.status);
        }
        table.push(r.cells());
    }
    write_file(&path, &table.render())?;
    if cfg.gnuplot {
        let file = format!("{}.sweep.csv", cfg.name);
        let script = gnuplot(&format!("{}: E(t_f)", cfg.name), "t_f", "E", "xy", &[(file, 1, 2, cfg.name.clone())]);
        write_file(&root.join(format!("{}.sweep.gp", cfg.name)), &script)?;
    }
    println!(
        "{}: {} points ({} computed, {} reused, {} failed) -> {}",
        cfg.name,
        wanted.len(),
        missing.len(),
        reused,
        failures,
        path.display()
    );
    Ok(failures == 0)
}

/// The converged rows of the config's sweep file, refusing files written for
/// another configuration.
fn load_curve(ctx: &Session, cfg: &Config) -> Result<(ScalingCurve, usize)> {
    let path = sweep_path(&ctx.root(cfg), cfg);
    let file = read_sweep(&path).with_context(|| format!("{}: run `kzopen sweep` first", cfg.name))?;
    if file.fingerprint != cfg.fingerprint() {
        bail!(
            "fingerprint mismatch: {} was produced by {}, but the config hashes to {}",
            path.display(),
            file.fingerprint,
            cfg.fingerprint()
        );
    }
    let failed = file.rows.iter().filter(|r| !r.is_ok()).count();
    let samples = file.rows.iter().filter(|r| r.is_ok()).map(|r| (r.t_f, r.density)).collect();
    let mut meta = CurveMetadata::new(cfg.name.clone(), cfg.t0);
    meta.fingerprint = file.fingerprint;
    let curve = ScalingCurve::new(samples, meta).map_err(|e| anyhow!("{}: {e}", path.display()))?;
    Ok((curve, failed))
}

fn window_for(cfg: &Config, curve: &ScalingCurve) -> Result<(f64, f64)> {
    cfg.window
        .or_else(|| curve.slowest_decade())
        .ok_or_else(|| anyhow!("{}: empty curve", cfg.name))
}

pub fn fit(ctx: &Session, cfg: &Config) -> Result<bool> {
    let (curve, failed) = load_curve(ctx, cfg)?;
    let window = window_for(cfg, &curve)?;
    let fit = fit_power_law(&curve, window).map_err(|e| anyhow!("{}: {e}", cfg.name))?;
    let predicted = prediction(cfg);
    let class = class_of(cfg);

    let root = ctx.root(cfg);
    let mut table = Table::new(
        ctx.header(cfg, "fit"),
        &["zeta_hat", "prefactor", "residual_rms", "window_lo", "window_hi", "samples", "class", "zeta_predicted"],
    );
    table.push(vec![
        float(fit.zeta_hat),
        float(fit.prefactor),
        float(fit.residual_rms),
        float(fit.window.0),
        float(fit.window.1),
        fit.samples.to_string(),
        class.to_string(),
        float(predicted.as_ref().map_or(f64::NAN, |p| p.0)),
    ]);
    write_file(&root.join(format!("{}.fit.csv", cfg.name)), &table.render())?;

    if curve.len() >= 3 {
        let series = exponent_series(&curve).map_err(|e| anyhow!("{}: {e}", cfg.name))?;
        let mut est = Table::new(ctx.header(cfg, "exponents"), &["t_f", "zeta_est"]);
        for (t, z) in series {
            est.push(vec![float(t), float(z)]);
        }
        let file = format!("{}.exponents.csv", cfg.name);
        write_file(&root.join(&file), &est.render())?;
        if cfg.gnuplot {
            let script = gnuplot(
                &format!("{}: local exponent", cfg.name),
                "t_f",
                "zeta_est",
                "x",
                &[(file, 1, 2, cfg.name.clone())],
            );
            write_file(&root.join(format!("{}.exponents.gp", cfg.name)), &script)?;
        }
    }
    if cfg.gnuplot {
        let mut script = gnuplot(
            &format!("{}: power-law fit", cfg.name),
            "t_f",
            "E",
            "xy",
            &[(format!("{}.sweep.csv", cfg.name), 1, 2, cfg.name.clone())],
        );
        script = script.trim_end().to_string();
        script.push_str(&format!(
            ", \\\n     {} * ({} / x)**{} with lines title 'fit'\n",
            float(fit.prefactor),
            float(cfg.t0),
            float(fit.zeta_hat)
        ));
        write_file(&root.join(format!("{}.fit.gp", cfg.name)), &script)?;
    }

    println!(
        "{}: zeta_hat = {:.4} over [{}, {}] ({} samples, rms {:.2e}), class {class}",
        cfg.name,
        fit.zeta_hat,
        num(fit.window.0),
        num(fit.window.1),
        fit.samples,
        fit.residual_rms
    );
    match predicted {
        Ok((z, regime)) => println!(
            "{}: predicted zeta = {z:.4} ({regime}), deviation {:+.4}",
            cfg.name,
            fit.zeta_hat - z
        ),
        Err(reason) => println!("{}: no prediction: {reason}", cfg.name),
    }
    Ok(failed == 0)
}

pub fn collapse_curves(ctx: &Session, configs: &[Config], name: &str) -> Result<bool> {
    if configs.is_empty() {
        bail!("collapse needs at least one config");
    }
    let mut curves = Vec::new();
    let mut zetas = Vec::new();
    let mut prefactors: Vec<Prefactor> = Vec::new();
    let mut all_ok = true;
    for cfg in configs {
        let (curve, failed) = load_curve(ctx, cfg)?;
        all_ok &= failed == 0;
        let ramp = cfg.ramp_with(1.0)?;
        let (zeta, prefactor) = match cfg.prefactor {
            PrefactorChoice::FixedVelocity => {
                let run = fixed_velocity_prefactor(
                    &ramp,
                    &cfg.model,
                    &cfg.bath,
                    &cfg.dynamics,
                    cfg.t0,
                    &LadderOptions::default(),
                )
                .map_err(|e| anyhow!("{}: fixed-velocity prefactor: {e}", cfg.name))?;
                (run.zeta, run.prefactor)
            }
            PrefactorChoice::FitIntercept => {
                let coherent = cfg.bath.gamma == 0.0;
                let scheme = scheme_for(class_of(cfg), &exponents(cfg), coherent)
                    .map_err(|e| anyhow!("{}: {e}", cfg.name))?;
                let window = window_for(cfg, &curve)?;
                let p = intercept_prefactor(&curve, scheme.zeta, window).map_err(|e| anyhow!("{}: {e}", cfg.name))?;
                (scheme.zeta, p)
            }
        };
        curves.push(curve);
        zetas.push(zeta);
        prefactors.push(prefactor);
    }
    let col = collapse(&curves, &zetas, &prefactors).map_err(|e| anyhow!("{e}"))?;
    let window = configs[0]
        .window
        .or_else(|| col.slowest_decade())
        .ok_or_else(|| anyhow!("no samples to collapse"))?;
    let spread = if col.curves.len() >= 2 {
        Some(col.spread(window).map_err(|e| anyhow!("spread: {e}"))?)
    } else {
        None
    };
    let slope = col.slope(window).map_err(|e| anyhow!("slope: {e}"))?;

    let mut header = format!("{OUTPUT_MAGIC} collapse\n");
    for (cfg, (z, p)) in configs.iter().zip(zetas.iter().zip(&prefactors)) {
        header.push_str(&format!(
            "# curve {} fingerprint = {} zeta = {} D = {} ({})\n",
            cfg.name,
            cfg.fingerprint(),
            num(*z),
            num(p.value),
            p.source
        ));
        for (k, v) in cfg.canonical_lines() {
            header.push_str(&format!("# {}: config.{k} = {v}\n", cfg.name));
        }
    }
    header.push_str(&format!("# window = {}, {}\n", num(window.0), num(window.1)));
    if let Some(s) = spread {
        header.push_str(&format!("# spread = {}\n", num(s)));
    }
    header.push_str(&format!("# slope = {}\n", num(slope)));
    if ctx.seedless {
        header.push_str("# seedless = true\n");
    }
    let mut table = Table::new(header, &["label", "zeta", "t_f", "x", "y"]);
    for (c, z) in col.curves.iter().zip(&zetas) {
        for p in &c.points {
            table.push(vec![cell(&c.label), float(*z), float(p.t_f), float(p.x), float(p.y)]);
        }
    }
    let root = ctx.root(&configs[0]);
    let file = format!("{name}.csv");
    write_file(&root.join(&file), &table.render())?;
    if configs[0].gnuplot {
        let series: Vec<(String, usize, usize, String)> = col
            .curves
            .iter()
            .map(|c| {
                (
                    format!("< grep '^{},' {file}", c.label.replace('\'', "")),
                    4,
                    5,
                    c.label.clone(),
                )
            })
            .collect();
        let mut script = gnuplot("collapse", "log(t0/t_f)", "log(E/D)/zeta", "", &series);
        script = script.trim_end().to_string();
        script.push_str(", \\\n     x with lines title 'slope 1'\n");
        write_file(&root.join(format!("{name}.gp")), &script)?;
    }
    for (cfg, (z, p)) in configs.iter().zip(zetas.iter().zip(&prefactors)) {
        println!("{}: zeta = {z:.4}, D = {:.6e} ({})", cfg.name, p.value, p.source);
    }
    match spread {
        Some(s) => println!(
            "collapse over [{}, {}]: spread {s:.4} log-units, slope {slope:.4} -> {}",
            num(window.0),
            num(window.1),
            root.join(&file).display()
        ),
        None => println!(
            "collapse over [{}, {}]: slope {slope:.4} (single curve, no spread) -> {}",
            num(window.0),
            num(window.1),
            root.join(&file).display()
        ),
    }
    Ok(all_ok)
}

pub fn verify(ctx: &Session, cfg: &Config) -> Result<bool> {
    let t_f = need_t_f(cfg, "verify")?;
    let ramp = cfg.ramp_with(t_f)?;
    let opts = DynamicsOptions {
        use_local: true,
        ..cfg.dynamics.clone()
    };
    if !cfg.dynamics.use_local {
        println!("{}: the rescaling identity is checked on the local dynamics", cfg.name);
    }
    let mut table = Table::new(
        ctx.header(cfg, "verify"),
        &["check", "a", "b", "lhs", "rhs", "residual", "pass"],
    );
    let mut ok = true;
    for &(a, b) in &cfg.pairs {
        let r = verify_scaling_identity(&ramp, &cfg.model, &cfg.bath, &opts, a, b)
            .map_err(|e| anyhow!("{}: ({a}, {b}): {e}", cfg.name))?;
        let pass = r.residual < cfg.tolerance;
        ok &= pass;
        table.push(vec![
            "scaling".into(),
            float(a),
            float(b),
            float(r.lhs),
            float(r.rhs),
            float(r.residual),
            pass.to_string(),
        ]);
        println!(
            "{}: (a, b) = ({}, {}): residual {:.2e} {}",
            cfg.name,
            num(a),
            num(b),
            r.residual,
            if pass { "ok" } else { "FAILED" }
        );
    }
    if cfg.coherent {
        let c = coherent_correction(&ramp, &cfg.model, &cfg.bath, &cfg.dynamics)
            .map_err(|e| anyhow!("{}: coherent correction: {e}", cfg.name))?;
        let pass = c.max_mode_discrepancy < cfg.tolerance;
        ok &= pass;
        table.push(vec![
            "coherent".into(),
            float(f64::NAN),
            float(f64::NAN),
            float(c.direct),
            float(c.rewritten),
            float(c.max_mode_discrepancy),
            pass.to_string(),
        ]);
        println!(
            "{}: coherent rewrite: direct {:.6e}, rewritten {:.6e}, worst mode {:.2e} {}",
            cfg.name,
            c.direct,
            c.rewritten,
            c.max_mode_discrepancy,
            if pass { "ok" } else { "FAILED" }
        );
    }
    write_file(&ctx.root(cfg).join(format!("{}.verify.csv", cfg.name)), &table.render())?;
    Ok(ok)
}

pub fn predict(cfg: &Config) -> Result<bool> {
    let class = class_of(cfg);
    let ex = exponents(cfg);
    println!("{}: class {class} (alpha = {}, beta = {})", cfg.name, num(ex.alpha), num(ex.beta));
    if let Some(p) = cfg.ramp.class_b_proximity(cfg.model.critical().nu_z()) {
        println!("{}: distance from the class B line |alpha/beta - nu z|/(nu z) = {p:.3e}", cfg.name);
    }
    match prediction(cfg) {
        Ok((z, regime)) => println!("{}: zeta = {} ({regime})", cfg.name, num(z)),
        Err(reason) => println!("{}: zeta: {reason}", cfg.name),
    }
    let coh = predicted_exponent(class, &ex, Regime::Coherent)?;
    println!("{}: zeta_coh = {}", cfg.name, num(coh));
    match scheme_for(class, &ex, cfg.bath.gamma == 0.0) {
        Ok(s) => println!("{}: collapse scheme {} (r = {}, p = {})", cfg.name, s.scheme_id, num(s.r), num(s.p)),
        Err(e) => println!("{}: collapse scheme: {e}", cfg.name),
    }
    println!("{}: fingerprint {}", cfg.name, cfg.fingerprint());
    Ok(true)
}
