//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Runs as a plain binary (`harness = false`) so the criteria execute in
//! order and their timings are not distorted by parallel test threads.

use std::f64::consts::FRAC_PI_4;
use std::process::ExitCode;
use std::time::Instant;

use sop_core::dde::Direction;
use sop_core::feedback::{check_condition2, plateau_feedback, two_sop_instance};
use sop_core::kaplan_yorke::{
    find_ky_amplitude, integrate_planar, ky_period4_trace, DEFAULT_STEP,
};
use sop_core::return_map::{verify_contraction_u, verify_v_invariance};
use sop_core::scenarios::{self, long_period_params, StableZeroConfig};
use sop_core::*;

type Outcome = std::result::Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    budget_s: Option<f64>,
    run: fn() -> Outcome,
}

fn example() -> FeedbackFn {
    build_hpp_feedback(&HppParams::worked_example(), -2.0).unwrap()
}

fn require(ok: bool, what: String) -> std::result::Result<String, String> {
    if ok {
        Ok(what)
    } else {
        Err(what)
    }
}

fn first_crossing(trace: &SolutionTrace, level: f64, after: f64, dir: Direction) -> Option<f64> {
    trace
        .level_crossings(level, after)
        .into_iter()
        .find(|z| z.direction == dir)
        .map(|z| z.t)
}

fn worked_example_sop() -> Outcome {
    let p = HppParams::worked_example();
    let f = example();
    let n = 1000;
    let cfg = MapConfig::default();
    let sop = iterate_to_fixed_point(&f, &Segment::ramp(n, 3.5).unwrap(), &cfg)
        .map_err(|e| e.to_string())?
        .sop()
        .ok_or("return map did not reach a periodic orbit")?;

    let trace = integrate(&f, &Segment::constant(n, -2.0 * p.a).unwrap(), 12.0);
    let tau1 = first_crossing(&trace, -p.a, 1.0, Direction::Rising).ok_or("no crossing of -a")?;
    let tau2 = first_crossing(&trace, p.a, tau1, Direction::Rising).ok_or("no crossing of a")?;
    let tau3 = first_crossing(&trace, 2.0 * p.a, tau2 + 1.0, Direction::Falling)
        .ok_or("no falling crossing of 2a")?;
    let gap = tau2 - tau1;
    let bound = p.half_period_bound();

    let msg = format!(
        "residual {:.2e}, {} iterations, period {:.4}, amplitude {:.4}, tau2-tau1 {:.6}, tau3 {:.4} (bound {:.4})",
        sop.residual, sop.iterations, sop.period, sop.amplitude, gap, tau3, bound
    );
    require(
        sop.residual < 1e-6
            && sop.iterations <= 50
            && sop.period > 4.0
            && sop.amplitude > 3.0
            && (gap - 0.5).abs() < 2e-3
            && (bound - 2.825).abs() < 1e-12
            && tau3 > bound,
        msg,
    )
}

fn long_period() -> Outcome {
    let p = long_period_params();
    let f = build_hpp_feedback(&p, -2.0).unwrap();
    // The kink region has width c = 0.004; coarser grids stall above the
    // fixed-point tolerance.
    let n = 16000;
    let sop = iterate_to_fixed_point(&f, &Segment::ramp(n, 3.5 * p.a).unwrap(), &MapConfig::default())
        .map_err(|e| e.to_string())?
        .sop()
        .ok_or("return map did not reach a periodic orbit")?;
    let bound = 2.0 * (2.0 + (p.gamma - 4.0 * p.a) / p.delta);
    require(
        sop.period > bound && (bound - 24.0).abs() < 1e-9,
        format!("n {n}, period {:.4} > {bound}, residual {:.2e}", sop.period, sop.residual),
    )
}

fn ky_branch() -> Outcome {
    let f = example();
    let root = find_ky_amplitude(&f, 1.95, 3.0, 1e-9).map_err(|e| e.to_string())?;
    let q = ky_period4_trace(&f, root.u0, 1000, 1e-9).map_err(|e| e.to_string())?;
    let (_, u1, v1) = integrate_planar(&f, 3.0, 1.0, DEFAULT_STEP)
        .map_err(|e| e.to_string())?
        .last();
    let msg = format!(
        "u0 {:.12}, |tau-1| {:.1e}, symmetry {:.1e}, residual {:.1e}, u(1) err {:.1e}, v(1) err {:.1e}",
        root.u0,
        (root.tau - 1.0).abs(),
        q.symmetry_residual,
        q.dde_residual,
        (u1 - 7.0 / 3.0).abs(),
        (v1 - 2.0 / 3.0).abs()
    );
    require(
        (root.tau - 1.0).abs() < 1e-9
            && root.u0 > 1.95
            && root.u0 < 3.0
            && q.symmetry_residual < 1e-6
            && q.dde_residual < 1e-4
            && (u1 - 7.0 / 3.0).abs() < 1e-8
            && (v1 - 2.0 / 3.0).abs() < 1e-8,
        msg,
    )
}

fn tau_limits() -> Outcome {
    let f = example();
    let u = 1e-5 * f.first_piece_width();
    let small = tau(&f, u).map_err(|e| e.to_string())?.tau;
    let x = f.x_max();
    let t1 = tau(&f, x).map_err(|e| e.to_string())?.tau;
    let t10 = tau(&f, 10.0 * x).map_err(|e| e.to_string())?.tau;
    let dev = (small - FRAC_PI_4).abs() / FRAC_PI_4;
    require(
        dev < 0.01 && t10 > t1,
        format!("tau(small) {small:.8} (rel dev {dev:.1e}), tau(X) {t1:.4}, tau(10X) {t10:.4}"),
    )
}

fn hamiltonian_drift() -> Outcome {
    let f = example();
    let mut worst: f64 = 0.0;
    let mut lines = Vec::new();
    for u0 in [0.01, 0.5, 1.0, 1.5, 2.2, 3.0, 4.5, 10.0] {
        let t = tau(&f, u0).map_err(|e| e.to_string())?.tau;
        let trace = integrate_planar(&f, u0, 4.0 * t, DEFAULT_STEP).map_err(|e| e.to_string())?;
        let rel = trace.max_h_drift / trace.h0.max(1.0);
        worst = worst.max(rel);
        lines.push(format!("{u0}:{rel:.0e}"));
    }
    require(worst < 1e-8, format!("max relative drift {worst:.1e} [{}]", lines.join(" ")))
}

fn condition2_gate() -> Outcome {
    let c = check_condition2(&example(), &HppParams::worked_example());
    require(
        c.holds && (c.lhs - 0.2625).abs() <= 1e-12 && (c.rhs - 0.95).abs() <= 1e-12,
        format!("holds {}, lhs {:.15}, rhs {:.15}", c.holds, c.lhs, c.rhs),
    )
}

fn multiscale() -> Outcome {
    let f = build_multiscale(&[5.0, 1.0], None).map_err(|e| e.to_string())?;
    let seeds = scenarios::multiscale_seeds(&f, 1000).map_err(|e| e.to_string())?;
    let sops = find_multiple_sops(&f, &seeds, &MapConfig::default()).map_err(|e| e.to_string())?;
    let desc: Vec<String> = sops
        .iter()
        .map(|s| format!("(A {:.4}, T {:.4})", s.amplitude, s.period))
        .collect();
    let ok = sops.len() == 2
        && sops[0].amplitude > 3.75
        && sops[0].amplitude < 5.0
        && sops[1].amplitude > 0.75
        && sops[1].amplitude < 1.0
        && sops.iter().all(|s| s.period > 4.0);
    require(ok, format!("{} SOPs {}", sops.len(), desc.join(" ")))
}

fn v_invariance() -> Outcome {
    let vp = VSetParams {
        sigma: 1.0,
        gamma_v: 0.2,
        beta: 0.1,
        mu: 1.0,
    };
    let r = verify_v_invariance(&two_sop_instance(), &vp, 100, 1000, 7, &MapConfig::default())
        .map_err(|e| e.to_string())?;
    require(
        r.samples == 100 && r.pass() && r.images_coincide(),
        format!(
            "{} samples, {} left V, image spread {:.1e} (tolerance {:.1e})",
            r.samples,
            r.failures.len(),
            r.image_spread,
            r.constancy_tol
        ),
    )
}

fn contraction() -> Outcome {
    let f = plateau_feedback(-0.5, 0.1, 1.0).map_err(|e| e.to_string())?;
    let r = verify_contraction_u(&f, 0.05, 100, 1000, 11, &MapConfig::default())
        .map_err(|e| e.to_string())?;
    require(
        r.checked + r.skipped == 100 && r.pass(),
        format!("{} checked, {} mapped to 0, {} violations", r.checked, r.skipped, r.failures.len()),
    )
}

fn two_solution_witness() -> Outcome {
    let r = scenarios::scenario_two_sops_stable_zero(&StableZeroConfig::default(), None)
        .map_err(|e| e.to_string())?;
    let detail: Vec<String> = r
        .assertions
        .iter()
        .filter(|a| !a.pass || a.description.contains("edge-tracked") || a.description.contains("bracket") || a.description.starts_with("s*"))
        .map(|a| format!("{} = {}", a.description, a.observed))
        .collect();
    require(r.pass(), detail.join("; "))
}

fn max_diff(f: &FeedbackFn, n: usize) -> f64 {
    let coarse = integrate(f, &Segment::constant(n, -2.0).unwrap(), 20.0);
    let fine = integrate(f, &Segment::constant(2 * n, -2.0).unwrap(), 20.0);
    coarse
        .samples()
        .iter()
        .enumerate()
        .map(|(k, x)| (x - fine.samples()[2 * k]).abs())
        .fold(0.0, f64::max)
}

fn convergence_order() -> Outcome {
    let f = example();
    // At h = 1/1000 the error is dominated by where the kinks of f fall
    // between grid nodes; the ratio settles to 4 from h = 1/4000 on.
    let n = 4000;
    let e1 = max_diff(&f, n);
    let e2 = max_diff(&f, 2 * n);
    let ratio = e1 / e2;
    require(
        (3.5..=4.5).contains(&ratio),
        format!("h = 1/{n}: diff {e1:.3e}, h/2: diff {e2:.3e}, ratio {ratio:.5}"),
    )
}

fn phase_plane_intersection() -> Outcome {
    let r = scenarios::scenario_ky_coexistence(&HppParams::worked_example(), -2.0, 1000, None)
        .map_err(|e| e.to_string())?;
    let pick = |key: &str| {
        r.assertions
            .iter()
            .find(|a| a.description.starts_with(key))
            .map(|a| (a.observed.clone(), a.pass))
    };
    let crossings = pick("phase-plane").ok_or("crossing count missing")?;
    let a1 = pick("α₁").ok_or("α₁ missing")?;
    let a2 = pick("α₂").ok_or("α₂ missing")?;
    let alpha = pick("q amplitude").ok_or("α missing")?;
    require(
        r.pass() && crossings.1 && a1.1 && a2.1,
        format!(
            "crossings {}, α₁ {} < α {} < α₂ {}",
            crossings.0, a1.0, alpha.0, a2.0
        ),
    )
}

const CRITERIA: [Criterion; 12] = [
    Criterion { id: 1, name: "worked-example SOP and timeline", budget_s: Some(10.0), run: worked_example_sop },
    Criterion { id: 2, name: "long-period scaling", budget_s: Some(30.0), run: long_period },
    Criterion { id: 3, name: "Kaplan-Yorke branch", budget_s: Some(10.0), run: ky_branch },
    Criterion { id: 4, name: "tau limits", budget_s: Some(5.0), run: tau_limits },
    Criterion { id: 5, name: "Hamiltonian conservation", budget_s: None, run: hamiltonian_drift },
    Criterion { id: 6, name: "condition-2 gate", budget_s: None, run: condition2_gate },
    Criterion { id: 7, name: "multi-scale SOPs", budget_s: Some(60.0), run: multiscale },
    Criterion { id: 8, name: "V-invariance", budget_s: None, run: v_invariance },
    Criterion { id: 9, name: "contraction near 0", budget_s: None, run: contraction },
    Criterion { id: 10, name: "two-solution witness", budget_s: None, run: two_solution_witness },
    Criterion { id: 11, name: "convergence order", budget_s: None, run: convergence_order },
    Criterion { id: 12, name: "phase-plane intersection", budget_s: None, run: phase_plane_intersection },
];

fn main() -> ExitCode {
    let only: Option<u32> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut failed = 0;
    for c in CRITERIA.iter().filter(|c| only.is_none_or(|id| id == c.id)) {
        let start = Instant::now();
        let outcome = (c.run)();
        let secs = start.elapsed().as_secs_f64();
        let in_budget = c.budget_s.is_none_or(|b| secs < b);
        let (ok, detail) = match outcome {
            Ok(d) => (in_budget, d),
            Err(d) => (false, d),
        };
        let budget = c.budget_s.map_or(String::new(), |b| format!(" < {b}s"));
        println!(
            "criterion {:>2} {} {}: {} [{secs:.2}s{budget}]",
            c.id,
            if ok { "PASS" } else { "FAIL" },
            c.name,
            detail
        );
        if !ok {
            failed += 1;
        }
    }
    if failed == 0 {
        println!("acceptance: all criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}
