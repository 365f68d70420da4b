//! One function per subcommand. Each writes `config.txt` and `report.txt`
//! into the output directory plus its own artifacts, and prints the report.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sop_core::feedback::check_condition2;
use sop_core::io::{emit_svg_polyline, fmt_g17, CsvTable, Series};
use sop_core::kaplan_yorke::{
    find_ky_amplitude, ky_period4_trace, phase_plane, scan_ky_brackets, tau_curve_with_step,
};
use sop_core::scenarios::{phase_table, run_named, scenario_multiscale, trace_table};
use sop_core::*;

use crate::config::{CliError, CliResult, CommandKind, FeedbackSpec, RunConfig, SeedSpec};

pub fn run(cfg: &RunConfig) -> CliResult<()> {
    fs::create_dir_all(&cfg.out).map_err(|e| {
        CliError::Usage(format!("cannot create output directory `{}`: {e}", cfg.out.display()))
    })?;
    write(&cfg.out.join("config.txt"), &cfg.echo())?;
    let outcome = match cfg.command {
        CommandKind::Simulate => simulate(cfg),
        CommandKind::Sop => sop(cfg),
        CommandKind::Ky => ky(cfg),
        CommandKind::TauCurve => tau_curve_cmd(cfg),
        CommandKind::Multiscale => multiscale(cfg),
        CommandKind::Scenario => scenario(cfg),
        CommandKind::Validate => validate(cfg),
    };
    // The report is written whether or not the run passed.
    let (report, result) = match outcome {
        Ok((report, None)) => (report, Ok(())),
        Ok((report, Some(err))) => (report, Err(err)),
        Err(err) => (format!("{err}\n"), Err(err)),
    };
    write(&cfg.out.join("report.txt"), &report)?;
    print!("{report}");
    result
}

/// Report text and, when the run did not pass, the error deciding the exit code.
type Outcome = CliResult<(String, Option<CliError>)>;

fn write(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text)
        .map_err(|e| CliError::Usage(format!("cannot write `{}`: {e}", path.display())))
}

fn csv(cfg: &RunConfig, file: &str, table: &CsvTable) -> CliResult<()> {
    Ok(table.write(&cfg.out.join(file))?)
}

fn svg(cfg: &RunConfig, file: &str, series: &[Series], xl: &str, yl: &str) -> CliResult<()> {
    Ok(emit_svg_polyline(&cfg.out.join(file), series, xl, yl)?)
}

fn feedback(cfg: &RunConfig) -> CliResult<FeedbackFn> {
    let f = match cfg.feedback.as_ref().expect("command takes a feedback") {
        FeedbackSpec::Hpp { params, slope0 } => build_hpp_feedback(params, *slope0)?,
        FeedbackSpec::Multiscale { gammas, slope0 } => build_multiscale(gammas, *slope0)?,
        FeedbackSpec::File(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read `{}`: {e}", p.display())))?;
            FeedbackFn::from_table(&text)?
        }
    };
    write(&cfg.out.join("feedback.txt"), &f.to_table())?;
    Ok(f)
}

/// The requested seed, or the ramp `3.5·a` of the outermost scale.
fn seed(cfg: &RunConfig, f: &FeedbackFn) -> CliResult<Segment> {
    let n = cfg.knobs.n;
    let phi = match &cfg.seed {
        Some(SeedSpec::Ramp(a)) => Segment::ramp(n, *a)?,
        Some(SeedSpec::Constant(c)) => Segment::constant(n, *c)?,
        Some(SeedSpec::File(p)) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read `{}`: {e}", p.display())))?;
            let phi = Segment::from_text(&text)?;
            if phi.n() != n {
                return Err(CliError::Usage(format!(
                    "segment file `{}` has n = {}, run uses n = {n}",
                    p.display(),
                    phi.n()
                )));
            }
            phi
        }
        None => match f.scales().first() {
            Some(p) => Segment::ramp(n, 3.5 * p.a)?,
            None => {
                return Err(CliError::Usage(
                    "no seed given: use --seed-ramp, --seed-constant or --seed-file".to_string(),
                ))
            }
        },
    };
    write(&cfg.out.join("segment.txt"), &phi.to_text())?;
    Ok(phi)
}

fn zeros_table(zs: &[Zero]) -> CsvTable {
    let mut t = CsvTable::new(&["j", "z", "direction"]);
    for (j, z) in zs.iter().enumerate() {
        t.push_row(vec![(j + 1).to_string(), fmt_g17(z.t), z.direction.as_str().to_string()])
            .expect("three columns");
    }
    t
}

fn line(out: &mut String, key: &str, value: impl std::fmt::Display) {
    let _ = writeln!(out, "{key}: {value}");
}

fn simulate(cfg: &RunConfig) -> Outcome {
    let f = feedback(cfg)?;
    let phi = seed(cfg, &f)?;
    let trace = integrate(&f, &phi, cfg.knobs.t_max);
    csv(cfg, "trace.csv", &trace_table(&trace))?;
    csv(cfg, "zeros.csv", &zeros_table(trace.zeros()))?;
    svg(cfg, "trace.svg", &[Series::new("x", trace.points().collect())], "t", "x(t)")?;
    let mut r = String::new();
    line(&mut r, "command", "simulate");
    line(&mut r, "t_max", fmt_g17(trace.end_time()));
    line(&mut r, "zeros", trace.zero_count());
    line(&mut r, "slow_oscillation_violations", trace.diagnostics().len());
    line(&mut r, "max_abs", fmt_g17(trace.samples().iter().fold(0.0f64, |m, x| m.max(x.abs()))));
    Ok((r, None))
}

fn sop(cfg: &RunConfig) -> Outcome {
    let f = feedback(cfg)?;
    let phi = seed(cfg, &f)?;
    let map = MapConfig {
        horizon: cfg.knobs.horizon,
        tol: cfg.knobs.tol,
        max_iter: cfg.knobs.max_iter,
        ..Default::default()
    };
    let outcome = iterate_to_fixed_point(&f, &phi, &map)?;
    let mut r = String::new();
    line(&mut r, "command", "sop");
    line(&mut r, "outcome", outcome.label());
    match outcome {
        FixedPointOutcome::Periodic(s) => {
            r.push_str(&s.to_record());
            csv(cfg, "sop_trace.csv", &trace_table(&s.trace))?;
            csv(cfg, "sop_zeros.csv", &zeros_table(s.zeros()))?;
            csv(cfg, "sop_phase.csv", &phase_table(&s.trace, 0.0, s.period))?;
            write(&cfg.out.join("sop_segment.txt"), &s.fixed_segment.to_text())?;
            svg(cfg, "sop_trace.svg", &[Series::new("x", s.trace.points().collect())], "t", "x(t)")?;
            svg(
                cfg,
                "sop_phase.svg",
                &[Series::new("x", phase_plane(&s.trace, 0.0, s.period))],
                "x(t)",
                "x(t-1)",
            )?;
            Ok((r, None))
        }
        FixedPointOutcome::ConvergedToZero { iterations, .. } => {
            line(&mut r, "iterations", iterations);
            Ok((r, None))
        }
        FixedPointOutcome::NonConvergence { residuals } => {
            let last = residuals.last().copied().unwrap_or(f64::NAN);
            line(&mut r, "iterations", residuals.len());
            line(&mut r, "last_residual", fmt_g17(last));
            let err = CliError::Numeric(format!(
                "return map did not converge in {} iterations (last residual {})",
                residuals.len(),
                fmt_g17(last)
            ));
            Ok((r, Some(err)))
        }
    }
}

fn ky(cfg: &RunConfig) -> Outcome {
    let f = feedback(cfg)?;
    let (lo, hi) = match (cfg.knobs.lo, cfg.knobs.hi) {
        (Some(lo), Some(hi)) => (lo, hi),
        (None, None) => *scan_ky_brackets(&f, 200)?
            .last()
            .ok_or_else(|| CliError::Numeric("tau - 1 has no sign change on the scanned range".to_string()))?,
        _ => return Err(CliError::Usage("give both --lo and --hi, or neither".to_string())),
    };
    let tol = cfg.knobs.tol;
    let root = find_ky_amplitude(&f, lo, hi, tol)?;
    let q = ky_period4_trace(&f, root.u0, cfg.knobs.n, tol)?;
    csv(cfg, "ky_trace.csv", &trace_table(&q.trace))?;
    csv(cfg, "ky_phase.csv", &phase_table(&q.trace, 0.0, 4.0))?;
    svg(cfg, "ky_trace.svg", &[Series::new("x", q.trace.points().collect())], "t", "x(t)")?;
    svg(
        cfg,
        "ky_phase.svg",
        &[Series::new("x", phase_plane(&q.trace, 0.0, 4.0))],
        "x(t)",
        "x(t-1)",
    )?;
    let mut r = String::new();
    line(&mut r, "command", "ky");
    line(&mut r, "bracket", format!("{} {}", fmt_g17(lo), fmt_g17(hi)));
    line(&mut r, "u0", fmt_g17(root.u0));
    line(&mut r, "tau", fmt_g17(root.tau));
    line(&mut r, "symmetry_residual", fmt_g17(q.symmetry_residual));
    line(&mut r, "dde_residual", fmt_g17(q.dde_residual));
    line(&mut r, "replay_deviation", fmt_g17(q.replay_deviation));
    let mut failed = Vec::new();
    if !(q.symmetry_residual < 1e-6) {
        failed.push(format!("symmetry residual {} >= 1e-6", fmt_g17(q.symmetry_residual)));
    }
    if !(q.dde_residual < 1e-4) {
        failed.push(format!("delay-equation residual {} >= 1e-4", fmt_g17(q.dde_residual)));
    }
    let err = (!failed.is_empty()).then(|| CliError::Assertion(failed.join("; ")));
    Ok((r, err))
}

fn tau_curve_cmd(cfg: &RunConfig) -> Outcome {
    let f = feedback(cfg)?;
    let lo = cfg.knobs.lo.unwrap_or(1e-3 * f.first_piece_width());
    let hi = cfg.knobs.hi.unwrap_or(10.0 * f.x_max());
    let curve = tau_curve_with_step(&f, lo, hi, cfg.knobs.count, cfg.knobs.step)?;
    let mut t = CsvTable::new(&["u0", "tau"]);
    for p in &curve {
        t.push_values(&[p.u0, p.tau]).expect("two columns");
    }
    csv(cfg, "tau_curve.csv", &t)?;
    svg(
        cfg,
        "tau_curve.svg",
        &[Series::new("tau", curve.iter().map(|p| (p.u0, p.tau)).collect())],
        "u0",
        "tau(u0)",
    )?;
    let crossings = curve
        .windows(2)
        .filter(|w| (w[0].tau - 1.0).signum() != (w[1].tau - 1.0).signum())
        .count();
    let mut r = String::new();
    line(&mut r, "command", "tau-curve");
    line(&mut r, "samples", curve.len());
    line(&mut r, "range", format!("{} {}", fmt_g17(lo), fmt_g17(hi)));
    line(&mut r, "tau_equals_one_brackets", crossings);
    Ok((r, None))
}

fn multiscale(cfg: &RunConfig) -> Outcome {
    let (gammas, slope0) = match cfg.feedback.as_ref() {
        Some(FeedbackSpec::Multiscale { gammas, slope0 }) => (gammas.clone(), *slope0),
        _ => return Err(CliError::Usage("multiscale needs --gammas".to_string())),
    };
    write(&cfg.out.join("feedback.txt"), &build_multiscale(&gammas, slope0)?.to_table())?;
    let report = scenario_multiscale(&gammas, slope0, cfg.knobs.n, Some(&cfg.out))?;
    Ok(scenario_outcome(report))
}

fn scenario(cfg: &RunConfig) -> Outcome {
    let name = cfg.name.as_deref().expect("resolved config has a name");
    let report = run_named(name, Some(&cfg.out))?;
    Ok(scenario_outcome(report))
}

fn scenario_outcome(report: ScenarioReport) -> (String, Option<CliError>) {
    let err = (!report.pass()).then(|| {
        CliError::Assertion(
            report
                .failures()
                .map(|a| a.description.clone())
                .collect::<Vec<_>>()
                .join("; "),
        )
    });
    (report.render(), err)
}

fn validate(cfg: &RunConfig) -> Outcome {
    let (p, slope0) = match cfg.feedback.as_ref() {
        Some(FeedbackSpec::Hpp { params, slope0 }) => (*params, *slope0),
        _ => return Err(CliError::Usage("validate needs --a --c --delta --gamma".to_string())),
    };
    let report = validate_params(&p)?;
    let mut r = String::new();
    line(&mut r, "command", "validate");
    let mut failed: Vec<String> = Vec::new();
    for c in &report.conditions {
        let _ = writeln!(
            r,
            "[{}] {} (margin {})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            fmt_g17(c.margin)
        );
        if !c.pass {
            failed.push(c.name.to_string());
        }
    }
    if !slope0.is_nan() {
        line(&mut r, "zero solution", stability_class(slope0)?);
        if report.valid() {
            let f = build_hpp_feedback(&p, slope0)?;
            let c2 = check_condition2(&f, &p);
            let _ = writeln!(
                r,
                "[{}] (1/γ)∫_0^a |f| < a - c: {} vs {}",
                if c2.holds { "PASS" } else { "INFO" },
                fmt_g17(c2.lhs),
                fmt_g17(c2.rhs)
            );
        }
    }
    let err = (!failed.is_empty()).then(|| CliError::Assertion(format!("failed {}", failed.join(", "))));
    Ok((r, err))
}
