use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::{json, Value};

use so5_vortex::continuation::{decay_radius, trace_branch, transition_order, POHOZAEV_GATE};
use so5_vortex::diagnostics::{check_admissible, g_to_zero_scan, limit_check, DiagnosticsReport};
use so5_vortex::io::{self, BranchMeta, ProfileMeta};
use so5_vortex::solver::{model_with_reference, residual_norm, solve_report};
use so5_vortex::spectral::threshold_g;
use so5_vortex::{Grading, GridSpec, Kappa, ModelParams, Seed, SolveOptions};

use crate::config::Layers;
use crate::{BranchArgs, CliError, GridArgs, LimitArgs, ScanArgs, SolveArgs, ThresholdArgs, ValidateArgs};

/// Energy recomputed from a written profile must match its sidecar this closely.
pub const ENERGY_ROUNDTRIP_TOL: f64 = 1e-12;
/// Largest residual `validate` accepts, besides the round-off floor.
pub const VALIDATE_RESIDUAL_TOL: f64 = 1e-8;
/// Slack on `∫(S'/r)² r dr ≤ d²/2`.
pub const MAGNETIC_SLACK: f64 = 1e-3;

fn kappa(layers: &mut Layers, flag: Option<String>) -> Result<Kappa, CliError> {
    let s: String = layers.required("kappa", flag)?;
    let k = Kappa::parse(&s)?;
    layers.record("kappa", k);
    Ok(k)
}

fn degree(layers: &mut Layers, flag: Option<i64>) -> Result<i64, CliError> {
    let d: i64 = layers.required("d", flag)?;
    if d == 0 {
        return Err(CliError::Usage("d must be a nonzero integer".into()));
    }
    layers.record("d", d.unsigned_abs());
    Ok(d)
}

/// Grid settings plus whether the domain radius was given explicitly.
fn grid_layers(layers: &mut Layers, args: &GridArgs) -> Result<(GridSpec, bool), CliError> {
    let default = GridSpec::default();
    let n = layers.or("n", args.n, default.n)?;
    let r_max: Option<f64> = layers.value("rmax", args.rmax)?;
    let grading: String = layers.or("grading", args.grading.clone(), "auto".to_string())?;
    let grading = match grading.as_str() {
        "auto" => None,
        s => Some(Grading::parse(s)?),
    };
    Ok((
        GridSpec {
            n,
            r_max: r_max.unwrap_or(default.r_max),
            grading,
        },
        r_max.is_some(),
    ))
}

fn record_grid(layers: &mut Layers, spec: &GridSpec) {
    layers.record("n", spec.n);
    layers.record("rmax", spec.r_max);
    layers.record("grading", spec.grading.map_or("auto".to_string(), |g| g.label()));
}

fn grid_spec(layers: &mut Layers, args: &GridArgs) -> Result<GridSpec, CliError> {
    let (spec, _) = grid_layers(layers, args)?;
    record_grid(layers, &spec);
    Ok(spec)
}

fn parse_seed(s: &str) -> Result<Seed, CliError> {
    let bad = || CliError::Usage(format!("seed must be normal, perturbed[:a] or trial:<rho>, got '{s}'"));
    let num = |v: &str| v.parse::<f64>().map_err(|_| bad());
    match s.split_once(':') {
        None if s == "normal" => Ok(Seed::NormalCore),
        None if s == "perturbed" => Ok(Seed::Perturbed(0.5)),
        Some(("perturbed", a)) => Ok(Seed::Perturbed(num(a)?)),
        Some(("trial", rho)) => Ok(Seed::Trial(num(rho)?)),
        _ => Err(bad()),
    }
}

fn list(s: &str, what: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("{what} must be a comma-separated list of numbers")))
}

fn print_json(value: &impl serde::Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Usage(e.to_string()))?;
    say(&text);
    Ok(())
}

/// Writes a line to stdout; a closed pipe is not an error.
fn say(line: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{line}");
}

pub fn solve(a: SolveArgs) -> Result<(), CliError> {
    let mut layers = Layers::load(a.grid.config.as_deref())?;
    let kappa = kappa(&mut layers, a.kappa)?;
    let d = degree(&mut layers, a.d)?;
    let g: f64 = layers.required("g", a.g)?;
    layers.record("g", g);
    let spec = grid_spec(&mut layers, &a.grid)?;
    let seed_s: String = layers.or("seed", a.seed, "perturbed:0.5".to_string())?;
    let seed = parse_seed(&seed_s)?;
    let defaults = SolveOptions::default();
    let tol = layers.or("tol", a.tol, defaults.tol_residual)?;
    let max_newton = layers.or("max-newton", a.max_newton, defaults.max_newton)?;
    let out: PathBuf = layers.or("out", a.out, PathBuf::from("profile.csv"))?;
    layers.record("seed", &seed_s);
    layers.record("tol", tol);
    layers.record("max_newton", max_newton);
    layers.record("out", &out);
    let config = layers.finish()?;

    let params = ModelParams::new(kappa, d, g)?;
    let grid = Arc::new(spec.build(kappa.core_width())?);
    let opts = SolveOptions {
        tol_residual: tol,
        max_newton,
        seed,
        ..defaults
    };
    let rep = solve_report(&params, &grid, &opts)?;
    let (model, _) = model_with_reference(&params, &grid)?;
    let energy = model.energy(&rep.profile)?;
    let poho = model.pohozaev(&rep.profile);
    let meta = ProfileMeta {
        kappa,
        d: params.d,
        g,
        r_max: grid.r_max(),
        n: grid.n(),
        grading: grid.grading(),
        energy_total: energy.total,
        pohozaev_rel_err: poho.rel_err,
        config: Some(config),
    };
    io::write_profile(&out, &rep.profile, &meta)?;
    say(&format!(
        "energy={:.12e} m0={:.12e} pohozaev_rel={:.3e} newton_iters={} residual={:.3e}",
        energy.total,
        rep.profile.m0(),
        poho.rel_err,
        rep.newton_iters,
        rep.residual
    ));
    Ok(())
}

pub fn threshold(a: ThresholdArgs) -> Result<(), CliError> {
    let mut layers = Layers::load(a.grid.config.as_deref())?;
    let kappa = kappa(&mut layers, a.kappa)?;
    let d = degree(&mut layers, a.d)?;
    let spec = grid_spec(&mut layers, &a.grid)?;
    let out: Option<PathBuf> = layers.value("out", a.out)?;
    layers.record("out", &out);
    let config = layers.finish()?;

    let grid = Arc::new(spec.build(kappa.core_width())?);
    let th = threshold_g(kappa, d.unsigned_abs() as u32, &grid)?;
    let result = json!({
        "kappa": kappa,
        "d": th.d,
        "g_star": th.g_star,
        "lambda0": th.lambda0,
        "r_max": grid.r_max(),
        "n": grid.n(),
        "grading": grid.grading(),
        "config": config,
    });
    if let Some(out) = out {
        io::write_json(&out, &result)?;
    }
    print_json(&result)
}

pub fn branch(a: BranchArgs) -> Result<(), CliError> {
    let mut layers = Layers::load(a.grid.config.as_deref())?;
    let kappa = kappa(&mut layers, a.kappa)?;
    let d = degree(&mut layers, a.d)?;
    let g_min = layers.or("g-min", a.g_min, 0.02)?;
    let steps = layers.or("steps", a.steps, 40)?;
    let rng_seed = layers.or("rng-seed", a.rng_seed, 0)?;
    let (mut spec, explicit_rmax) = grid_layers(&mut layers, &a.grid)?;
    if !explicit_rmax {
        spec = spec.with_min_radius(decay_radius(kappa, g_min));
    }
    record_grid(&mut layers, &spec);
    let out: PathBuf = layers.or("out", a.out, PathBuf::from("branch.csv"))?;
    layers.record("g_min", g_min);
    layers.record("steps", steps);
    layers.record("rng_seed", rng_seed);
    layers.record("out", &out);
    let config = layers.finish()?;

    let grid = Arc::new(spec.build(kappa.core_width())?);
    let b = trace_branch(kappa, d.unsigned_abs() as u32, &grid, g_min, steps)?;
    io::write_branch(&out, &b)?;
    let meta = BranchMeta {
        kappa,
        d: b.d,
        g_star: b.g_star,
        g_min,
        steps,
        r_max: grid.r_max(),
        n: grid.n(),
        grading: grid.grading(),
        transition: transition_order(&b).ok(),
        aborted: b.aborted.clone(),
        orthogonality: "quadrature inner product against (0, 0, w_kappa)".into(),
        config: Some(config),
    };
    io::write_json(&io::sidecar_path(&out), &meta)?;
    say(&format!(
        "g_star={:.12e} points={} transition_exponent={}",
        b.g_star,
        b.points.len(),
        meta.transition
            .map_or("n/a".to_string(), |t| format!("{:.4}", t.exponent))
    ));
    match b.aborted {
        Some(reason) => Err(CliError::Solve(so5_vortex::Error::Format(format!(
            "branch stopped early: {reason}"
        )))),
        None => Ok(()),
    }
}

fn default_report_path(profile: &Path) -> PathBuf {
    profile.with_extension("report.json")
}

/// Checks a written profile; the returned report is what `validate` writes.
pub fn validation_report(path: &Path) -> Result<DiagnosticsReport, CliError> {
    let (p, meta) = io::read_profile(path).map_err(|e| match e {
        so5_vortex::Error::Io(_) => CliError::Usage(format!("cannot read {}: {e}", path.display())),
        other => CliError::Check(format!("{}: {other}", path.display())),
    })?;
    let params = meta.params()?;
    let (model, _) = model_with_reference(&params, &p.grid)?;
    let energy = model.energy(&p)?.total;
    let poho = model.pohozaev(&p);
    let (res, floor) = residual_norm(&params, &p);

    let mut report = DiagnosticsReport::new();
    report.at_most(
        "energy_matches_sidecar",
        (energy - meta.energy_total).abs(),
        ENERGY_ROUNDTRIP_TOL * energy.abs().max(1.0),
    );
    report.at_most("residual", res, VALIDATE_RESIDUAL_TOL.max(floor));
    report.at_most("pohozaev_rel_err", poho.rel_err, POHOZAEV_GATE);
    if !params.kappa.is_infinite() {
        let d2 = (params.d as f64).powi(2);
        report.at_most("magnetic_bound", poho.rhs, 0.5 * d2 + MAGNETIC_SLACK);
    }
    for c in check_admissible(&params, &p).checks {
        report.push(&c.name, c.passed, c.measured, c.threshold);
    }
    Ok(report)
}

pub fn validate(a: ValidateArgs) -> Result<(), CliError> {
    let mut layers = Layers::load(a.config.as_deref())?;
    let out = layers.or("out", a.out, default_report_path(&a.profile))?;
    layers.record("profile", &a.profile);
    layers.record("out", &out);
    let config = layers.finish()?;

    let report = validation_report(&a.profile)?;
    let doc = json!({ "profile": a.profile, "report": report, "config": config });
    io::write_json(&out, &doc)?;
    let failed: Vec<&str> = report.failed().map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        say(&format!(
            "PASS {} ({} checks)",
            a.profile.display(),
            report.checks.len()
        ));
        Ok(())
    } else {
        say(&format!("FAIL {}: {}", a.profile.display(), failed.join(", ")));
        Err(CliError::Check(failed.join(", ")))
    }
}

pub fn limit(a: LimitArgs) -> Result<(), CliError> {
    let mut layers = Layers::load(a.grid.config.as_deref())?;
    let kappas_s: String = layers.or("kappas", a.kappas, "5,10,20".to_string())?;
    let kappas = list(&kappas_s, "kappas")?;
    let d = degree(&mut layers, a.d)?;
    let g: f64 = layers.required("g", a.g)?;
    let spec = grid_spec(&mut layers, &a.grid)?;
    let out: Option<PathBuf> = layers.value("out", a.out)?;
    layers.record("kappas", &kappas);
    layers.record("g", g);
    layers.record("out", &out);
    let config = layers.finish()?;

    let inf_grid = Arc::new(spec.build(Kappa::Infinite.core_width())?);
    let table = limit_check(&kappas, d.unsigned_abs() as u32, g, &inf_grid, &spec)?;
    let doc = json!({ "table": table, "all_decreasing": table.all_decreasing(), "config": config });
    if let Some(out) = out {
        io::write_json(&out, &doc)?;
    }
    print_json(&doc)?;
    if table.all_decreasing() {
        Ok(())
    } else {
        Err(CliError::Check("limit columns are not all strictly decreasing".into()))
    }
}

pub fn scan_g(a: ScanArgs) -> Result<(), CliError> {
    let mut layers = Layers::load(a.grid.config.as_deref())?;
    let kappa = kappa(&mut layers, a.kappa)?;
    let d = degree(&mut layers, a.d)?;
    let g_s: String = layers.or("g-list", a.g_list, "0.1,0.01,0.001".to_string())?;
    let gs = list(&g_s, "g-list")?;
    let spec = grid_spec(&mut layers, &a.grid)?;
    let out: Option<PathBuf> = layers.value("out", a.out)?;
    layers.record("g_list", &gs);
    layers.record("out", &out);
    let config = layers.finish()?;

    let scan = g_to_zero_scan(kappa, d.unsigned_abs() as u32, &spec, &gs)?;
    let doc: Value = json!({ "scan": scan, "config": config });
    if let Some(out) = out {
        io::write_json(&out, &doc)?;
    }
    print_json(&doc)?;
    if scan.energy_decreasing {
        Ok(())
    } else {
        Err(CliError::Check(
            "minimizer energy is not strictly decreasing in g".into(),
        ))
    }
}
