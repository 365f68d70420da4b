//! Planar reduction for odd `f`: the Hamiltonian system
//!
//! ```text
//! u' = f(v),  v' = -f(u)
//! ```
//!
//! with first integral `H(u, v) = A(|u|) + A(|v|)`, `A(x) = ∫_0^x |f|`.
//! The orbit from `(u0, 0)` reaches the positive `v`-axis at time `τ(u0)`
//! and closes after `4τ(u0)`. When `τ(u0) = 1`, `x(t) = u(t)` solves the delay
//! equation with period 4 and `x(t) = -x(t - 2)`.

use std::f64::consts::FRAC_PI_2;

use rayon::prelude::*;

use crate::dde::{integrate, Segment, SolutionTrace};
use crate::error::{Error, Result};
use crate::feedback::FeedbackFn;

/// Default RK4 step.
pub const DEFAULT_STEP: f64 = 1e-4;
/// Width to which the axis hit is refined.
pub const HIT_WIDTH: f64 = 1e-12;
/// Relative Hamiltonian drift allowed along a planar trace.
pub const DRIFT_TOL: f64 = 1e-8;
const KINK_WIDTH: f64 = 1e-15;

pub fn hamiltonian(f: &FeedbackFn, u: f64, v: f64) -> f64 {
    f.abs_antiderivative(u) + f.abs_antiderivative(v)
}

fn rk4(f: &FeedbackFn, (u, v): (f64, f64), h: f64) -> (f64, f64) {
    let rhs = |u: f64, v: f64| (f.eval(v), -f.eval(u));
    let (k1u, k1v) = rhs(u, v);
    let (k2u, k2v) = rhs(u + 0.5 * h * k1u, v + 0.5 * h * k1v);
    let (k3u, k3v) = rhs(u + 0.5 * h * k2u, v + 0.5 * h * k2v);
    let (k4u, k4v) = rhs(u + h * k3u, v + h * k3v);
    (
        u + h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u),
        v + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v),
    )
}

/// Signed index of the linear piece of `f` containing `x`.
fn piece(f: &FeedbackFn, x: f64) -> isize {
    let k = f.breakpoints().partition_point(|&(bx, _)| bx <= x.abs()) as isize;
    if x < 0.0 {
        -k
    } else {
        k
    }
}

/// One RK4 step of length `h` that never straddles a breakpoint of `f` in
/// either component: a step that would cross one is split at the crossing,
/// located by bisection on the step length. Away from breakpoints this is
/// plain RK4.
fn advance(f: &FeedbackFn, mut state: (f64, f64), mut h: f64) -> (f64, f64) {
    loop {
        let next = rk4(f, state, h);
        let here = (piece(f, state.0), piece(f, state.1));
        if (piece(f, next.0), piece(f, next.1)) == here || h <= KINK_WIDTH {
            return next;
        }
        let (mut lo, mut hi) = (0.0, h);
        while hi - lo > KINK_WIDTH {
            let mid = 0.5 * (lo + hi);
            let s = rk4(f, state, mid);
            if (piece(f, s.0), piece(f, s.1)) == here {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        state = rk4(f, state, hi);
        h -= hi;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanarTrace {
    pub step: f64,
    /// `(t, u, v)`.
    pub points: Vec<(f64, f64, f64)>,
    pub h0: f64,
    pub max_h_drift: f64,
}

impl PlanarTrace {
    pub fn last(&self) -> (f64, f64, f64) {
        *self.points.last().expect("trace holds the initial point")
    }

    /// State at the recorded point nearest to `t`.
    pub fn nearest(&self, t: f64) -> (f64, f64, f64) {
        let k = ((t - self.points[0].0) / self.step).round().max(0.0) as usize;
        self.points[k.min(self.points.len() - 1)]
    }
}

fn check_u0(u0: f64) -> Result<()> {
    if u0 > 0.0 && u0.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("u0 must be positive, got {u0}")))
    }
}

/// RK4 from `(u0, 0)` over `[0, t_max]` with a fixed step (the last step is
/// shortened to land on `t_max`); fails if `H` drifts by more than
/// `DRIFT_TOL·max(1, H0)`.
pub fn integrate_planar(f: &FeedbackFn, u0: f64, t_max: f64, step: f64) -> Result<PlanarTrace> {
    check_u0(u0)?;
    if !(step > 0.0 && t_max >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "need step > 0 and t_max >= 0, got step = {step}, t_max = {t_max}"
        )));
    }
    let h0 = hamiltonian(f, u0, 0.0);
    let tol = DRIFT_TOL * h0.max(1.0);
    let steps = (t_max / step - 1e-9).ceil().max(0.0) as usize;
    let mut points = Vec::with_capacity(steps + 1);
    points.push((0.0, u0, 0.0));
    let mut state = (u0, 0.0);
    let mut drift: f64 = 0.0;
    for k in 1..=steps {
        let t_prev = (k - 1) as f64 * step;
        let t = (k as f64 * step).min(t_max);
        state = advance(f, state, t - t_prev);
        drift = drift.max((hamiltonian(f, state.0, state.1) - h0).abs());
        if drift > tol {
            return Err(Error::HamiltonianDrift { drift, tol, step });
        }
        points.push((t, state.0, state.1));
    }
    Ok(PlanarTrace {
        step,
        points,
        h0,
        max_h_drift: drift,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TauResult {
    pub u0: f64,
    pub tau: f64,
    pub hit_refinement_width: f64,
}

/// `τ(u0)`, the first time `u` reaches 0, with the default step.
pub fn tau(f: &FeedbackFn, u0: f64) -> Result<TauResult> {
    tau_with_step(f, u0, DEFAULT_STEP)
}

pub fn tau_with_step(f: &FeedbackFn, u0: f64, step: f64) -> Result<TauResult> {
    check_u0(u0)?;
    // The orbit crosses the strip |v| <= X_max at speed >= |tail| and the
    // region beyond it at speed |tail|; this overestimates τ comfortably.
    let t_max = 100.0 + 10.0 * (u0 + f.x_max()) / f.tail_value().abs();
    let mut state = (u0, 0.0);
    let mut k = 0usize;
    while (k as f64) * step < t_max {
        let t = k as f64 * step;
        let next = advance(f, state, step);
        if next.0 <= 0.0 {
            let (mut lo, mut hi) = (0.0, step);
            while hi - lo > HIT_WIDTH {
                let mid = 0.5 * (lo + hi);
                if advance(f, state, mid).0 > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Ok(TauResult {
                u0,
                tau: t + hi,
                hit_refinement_width: hi - lo,
            });
        }
        state = next;
        k += 1;
    }
    Err(Error::NoAxisHit { u0, t_max })
}

/// `τ` on a geometric grid of `count` amplitudes from `lo` to `hi`.
pub fn tau_curve(f: &FeedbackFn, lo: f64, hi: f64, count: usize) -> Result<Vec<TauResult>> {
    tau_curve_with_step(f, lo, hi, count, DEFAULT_STEP)
}

pub fn tau_curve_with_step(
    f: &FeedbackFn,
    lo: f64,
    hi: f64,
    count: usize,
    step: f64,
) -> Result<Vec<TauResult>> {
    if !(lo > 0.0 && hi > lo && count >= 2) {
        return Err(Error::InvalidInput(format!(
            "need 0 < lo < hi and count >= 2, got lo = {lo}, hi = {hi}, count = {count}"
        )));
    }
    let ratio = (hi / lo).ln() / (count - 1) as f64;
    (0..count)
        .into_par_iter()
        .map(|i| {
            let u = if i + 1 == count { hi } else { lo * (ratio * i as f64).exp() };
            tau_with_step(f, u, step)
        })
        .collect()
}

/// Brackets of sign changes of `τ - 1` on a geometric grid from
/// `1e-3·(first-piece width)` to `10·X_max`.
pub fn scan_ky_brackets(f: &FeedbackFn, count: usize) -> Result<Vec<(f64, f64)>> {
    let curve = tau_curve(f, 1e-3 * f.first_piece_width(), 10.0 * f.x_max(), count)?;
    Ok(curve
        .windows(2)
        .filter(|w| (w[0].tau - 1.0).signum() != (w[1].tau - 1.0).signum())
        .map(|w| (w[0].u0, w[1].u0))
        .collect())
}

/// Bisection on `τ(u) - 1` inside `[lo, hi]` until `|τ(u0) - 1| < tol`.
pub fn find_ky_amplitude(f: &FeedbackFn, lo: f64, hi: f64, tol: f64) -> Result<TauResult> {
    if !(lo > 0.0 && hi > lo && tol > 0.0) {
        return Err(Error::InvalidInput(format!(
            "need 0 < lo < hi and tol > 0, got [{lo}, {hi}], tol = {tol}"
        )));
    }
    let (t_lo, t_hi) = (tau(f, lo)?, tau(f, hi)?);
    let s_lo = t_lo.tau - 1.0;
    if s_lo.signum() == (t_hi.tau - 1.0).signum() {
        return Err(Error::NoBracket {
            lo,
            hi,
            tau_lo: t_lo.tau,
            tau_hi: t_hi.tau,
        });
    }
    for r in [t_lo, t_hi] {
        if (r.tau - 1.0).abs() < tol {
            return Ok(r);
        }
    }
    let (mut a, mut b) = (lo, hi);
    let mut best = if s_lo.abs() < (t_hi.tau - 1.0).abs() { t_lo } else { t_hi };
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        let r = tau(f, mid)?;
        if (r.tau - 1.0).abs() < (best.tau - 1.0).abs() {
            best = r;
        }
        if (r.tau - 1.0).abs() < tol {
            return Ok(r);
        }
        if (r.tau - 1.0).signum() == s_lo.signum() {
            a = mid;
        } else {
            b = mid;
        }
        if b - a <= f64::EPSILON * b {
            break;
        }
    }
    Err(Error::Precondition(format!(
        "bisection stalled at u0 = {} with |tau - 1| = {:e} > {tol:e}",
        best.u0,
        (best.tau - 1.0).abs()
    )))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TauLimitReport {
    /// `-(π/2)/f'(0)`.
    pub limit: f64,
    /// `(u, τ(u), |τ(u) - limit| / limit)` at `{1e-3, 1e-4, 1e-5}·(first-piece width)`.
    pub small: Vec<(f64, f64, f64)>,
    pub within_one_percent: bool,
    pub deviations_decrease: bool,
    pub tau_x_max: f64,
    pub tau_10_x_max: f64,
    /// `τ(2a)` of the outermost scale, when `2a < X_max` so the comparison is not vacuous.
    pub tau_2a: Option<f64>,
    pub grows_at_infinity: bool,
}

impl TauLimitReport {
    pub fn pass(&self) -> bool {
        self.within_one_percent && self.deviations_decrease && self.grows_at_infinity
    }
}

pub fn verify_tau_limits(f: &FeedbackFn) -> Result<TauLimitReport> {
    let limit = -FRAC_PI_2 / f.slope0();
    let w = f.first_piece_width();
    let small = [1e-3, 1e-4, 1e-5]
        .iter()
        .map(|k| {
            let u = k * w;
            tau(f, u).map(|r| (u, r.tau, (r.tau - limit).abs() / limit))
        })
        .collect::<Result<Vec<_>>>()?;
    let within_one_percent = small.iter().all(|s| s.2 < 0.01);
    // Deviations are at round-off level once u sits in the linear piece.
    let deviations_decrease = small.windows(2).all(|p| p[1].2 <= p[0].2 + 1e-9);
    let x_max = f.x_max();
    let tau_x_max = tau(f, x_max)?.tau;
    let tau_10_x_max = tau(f, 10.0 * x_max)?.tau;
    let tau_2a = match f.scales().first() {
        Some(p) if 2.0 * p.a < x_max => Some(tau(f, 2.0 * p.a)?.tau),
        _ => None,
    };
    let grows_at_infinity = tau_10_x_max > tau_x_max && tau_2a.is_none_or(|t| tau_x_max > t);
    Ok(TauLimitReport {
        limit,
        small,
        within_one_percent,
        deviations_decrease,
        tau_x_max,
        tau_10_x_max,
        tau_2a,
        grows_at_infinity,
    })
}

/// `x(t) = u(t; u0)` on the delay-equation grid over `[-1, 4]`, with checks.
#[derive(Clone, Debug, PartialEq)]
pub struct KyTrace {
    pub u0: f64,
    pub trace: SolutionTrace,
    /// `v` on the grid of `[0, 4]`.
    pub v: Vec<f64>,
    /// `max |x(t) + x(t - 2)|` over `[1, 4]`.
    pub symmetry_residual: f64,
    /// `max |x'(t) - f(x(t - 1))|` over `[0, 4]`, with `x' = f(v)`.
    pub dde_residual: f64,
    /// Sup distance on `[0, 4]` between `x` and the delay-equation
    /// integration started from `x` restricted to `[-1, 0]`.
    pub replay_deviation: f64,
}

/// Planar solution sampled every `1/n`, stepping forward (`dir = 1`) or
/// backward (`dir = -1`) for `units` delay units.
fn sample_planar(f: &FeedbackFn, u0: f64, n: usize, units: usize, dir: f64) -> Vec<(f64, f64)> {
    let h = 1.0 / n as f64;
    let sub = (h / DEFAULT_STEP).ceil() as usize;
    let dt = dir * h / sub as f64;
    let mut state = (u0, 0.0);
    let mut out = Vec::with_capacity(units * n + 1);
    out.push(state);
    for _ in 0..units * n {
        for _ in 0..sub {
            state = advance(f, state, dt);
        }
        out.push(state);
    }
    out
}

pub fn ky_period4_trace(f: &FeedbackFn, u0: f64, n: usize, tol: f64) -> Result<KyTrace> {
    let t = tau(f, u0)?;
    if !((t.tau - 1.0).abs() < tol) {
        return Err(Error::Precondition(format!(
            "tau({u0}) = {} is not within {tol:e} of 1",
            t.tau
        )));
    }
    if n < 2 {
        return Err(Error::InvalidInput(format!("n must be >= 2, got {n}")));
    }
    let back = sample_planar(f, u0, n, 1, -1.0);
    let fwd = sample_planar(f, u0, n, 4, 1.0);
    let mut x: Vec<f64> = back.iter().rev().map(|s| s.0).collect();
    x.extend(fwd[1..].iter().map(|s| s.0));
    let v: Vec<f64> = fwd.iter().map(|s| s.1).collect();

    let symmetry_residual = (3 * n..=5 * n)
        .map(|k| (x[k] + x[k - 2 * n]).abs())
        .fold(0.0, f64::max);
    let dde_residual = (0..=4 * n)
        .map(|j| (f.eval(v[j]) - f.eval(x[j])).abs())
        .fold(0.0, f64::max);
    let history = Segment::new(n, x[..=n].to_vec())?;
    let replay = integrate(f, &history, 4.0);
    let replay_deviation = replay
        .samples()
        .iter()
        .zip(&x)
        .skip(n)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(KyTrace {
        u0,
        trace: SolutionTrace::from_samples(n, x)?,
        v,
        symmetry_residual,
        dde_residual,
        replay_deviation,
    })
}

/// Points `(x(t), x(t - 1))` for grid times in `[t0, t1]`, `t0 >= 0`.
pub fn phase_plane(trace: &SolutionTrace, t0: f64, t1: f64) -> Vec<(f64, f64)> {
    let n = trace.n();
    let xs = trace.samples();
    let k0 = ((t0 + 1.0) * n as f64).ceil().max(n as f64) as usize;
    let k1 = (((t1 + 1.0) * n as f64).floor() as usize).min(xs.len() - 1);
    (k0..=k1).map(|k| (xs[k], xs[k - n])).collect()
}

fn orient(p: (f64, f64), q: (f64, f64), r: (f64, f64)) -> f64 {
    (q.0 - p.0) * (r.1 - p.1) - (q.1 - p.1) * (r.0 - p.0)
}

/// Number of proper crossings between the edges of two polylines.
pub fn polyline_crossings(a: &[(f64, f64)], b: &[(f64, f64)]) -> usize {
    let mut count = 0;
    for ea in a.windows(2) {
        let (p, q) = (ea[0], ea[1]);
        let (ax0, ax1) = (p.0.min(q.0), p.0.max(q.0));
        let (ay0, ay1) = (p.1.min(q.1), p.1.max(q.1));
        for eb in b.windows(2) {
            let (r, s) = (eb[0], eb[1]);
            if r.0.max(s.0) < ax0 || r.0.min(s.0) > ax1 || r.1.max(s.1) < ay0 || r.1.min(s.1) > ay1 {
                continue;
            }
            let d1 = orient(p, q, r);
            let d2 = orient(p, q, s);
            let d3 = orient(r, s, p);
            let d4 = orient(r, s, q);
            if d1 * d2 < 0.0 && d3 * d4 < 0.0 {
                count += 1;
            }
        }
    }
    count
}

/// Where the phase-plane curve of a periodic trace meets the positive axes:
/// `α₁ = x(z - 1)` at a falling zero `z`, and `α₂ = x(z + 1)` at a rising
/// zero `z`. Uses the first such zeros with enough trace around them.
pub fn axis_points(trace: &SolutionTrace) -> Option<(f64, f64)> {
    use crate::dde::Direction;
    let end = trace.end_time();
    let zs = trace.zeros();
    let alpha1 = zs
        .iter()
        .find(|z| z.direction == Direction::Falling && z.t >= 1.0)
        .map(|z| trace.value_at(z.t - 1.0))?;
    let alpha2 = zs
        .iter()
        .find(|z| z.direction == Direction::Rising && z.t + 1.0 <= end)
        .map(|z| trace.value_at(z.t + 1.0))?;
    Some((alpha1, alpha2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feedback::{build_hpp_feedback, plateau_feedback, HppParams};
    use proptest::prelude::*;

    fn example() -> FeedbackFn {
        build_hpp_feedback(&HppParams::worked_example(), -2.0).unwrap()
    }

    #[test]
    fn hamiltonian_basics() {
        let f = example();
        assert_eq!(hamiltonian(&f, 0.0, 0.0), 0.0);
        for u in [1e-3, 0.1, 0.5] {
            assert!((hamiltonian(&f, u, 0.0) - u * u).abs() < 1e-15);
        }
        assert!(hamiltonian(&f, 0.0, -1e-9) > 0.0);
    }

    proptest! {
        #[test]
        fn hamiltonian_symmetries(u in -5.0f64..5.0, v in -5.0f64..5.0) {
            let f = example();
            let h = hamiltonian(&f, u, v);
            prop_assert_eq!(h, hamiltonian(&f, v, u));
            prop_assert_eq!(h, hamiltonian(&f, -u, -v));
            prop_assert_eq!(h, hamiltonian(&f, v, -u));
        }
    }

    #[test]
    fn linear_orbit_is_a_circle() {
        let f = example();
        let u0 = 0.1;
        let tr = integrate_planar(&f, u0, 1.0, DEFAULT_STEP).unwrap();
        for &(t, u, v) in tr.points.iter().step_by(100) {
            assert!((u - u0 * (2.0 * t).cos()).abs() < 1e-12, "t = {t}");
            assert!((v - u0 * (2.0 * t).sin()).abs() < 1e-12, "t = {t}");
        }
    }

    #[test]
    fn first_hit_lands_on_v_axis() {
        let f = example();
        for u0 in [0.3, 1.5, 2.5, 7.0] {
            let t = tau(&f, u0).unwrap();
            assert!(t.hit_refinement_width <= HIT_WIDTH);
            let tr = integrate_planar(&f, u0, t.tau, DEFAULT_STEP).unwrap();
            let (_, u, v) = tr.last();
            assert!(u.abs() < 1e-9, "u0 = {u0}: u = {u}");
            assert!((v - u0).abs() < 1e-8, "u0 = {u0}: v = {v}");
        }
    }

    #[test]
    fn full_turn_and_quarter_turns_close() {
        let f = example();
        for u0 in [0.5, 2.5] {
            let t = tau(&f, u0).unwrap().tau;
            let tr = integrate_planar(&f, u0, 4.0 * t, DEFAULT_STEP).unwrap();
            let (_, u, v) = tr.last();
            assert!((u - u0).abs() < 1e-8 * u0 && v.abs() < 1e-8 * u0);
            let half = integrate_planar(&f, u0, 2.0 * t, DEFAULT_STEP).unwrap().last();
            assert!((half.1 + u0).abs() < 1e-7 && half.2.abs() < 1e-7);
            let three = integrate_planar(&f, u0, 3.0 * t, DEFAULT_STEP).unwrap().last();
            assert!(three.1.abs() < 1e-7 && (three.2 + u0).abs() < 1e-7);
        }
    }

    #[test]
    fn harmonic_limit() {
        let t = tau(&example(), 1e-4).unwrap();
        assert!((t.tau - std::f64::consts::FRAC_PI_4).abs() < 1e-9);
        assert!(tau(&example(), 0.0).is_err());
        assert!(tau(&example(), -1.0).is_err());
    }

    #[test]
    fn tau_grows_with_amplitude() {
        let f = example();
        let g = 4.0;
        assert!(tau(&f, 10.0 * g).unwrap().tau > tau(&f, g).unwrap().tau);
        assert!(tau(&f, 1.95).unwrap().tau < 1.0);
    }

    #[test]
    fn bracket_without_sign_change_is_rejected() {
        let f = example();
        match find_ky_amplitude(&f, 3.0, 5.0, 1e-9) {
            Err(Error::NoBracket { tau_lo, tau_hi, .. }) => {
                assert!(tau_lo > 1.0 && tau_hi > 1.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn limits_report_for_steep_and_borderline_slopes() {
        let r = verify_tau_limits(&example()).unwrap();
        assert!(r.pass(), "{r:?}");
        assert!((r.limit - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
        let f = plateau_feedback(-FRAC_PI_2, 0.2, 1.0).unwrap();
        let r = verify_tau_limits(&f).unwrap();
        assert!((r.limit - 1.0).abs() < 1e-15);
        assert!(r.within_one_percent);
    }

    #[test]
    fn crossings_of_two_squares() {
        let a = [(0.0, 0.0), (2.0, 0.0), (2.0, 2.0), (0.0, 2.0), (0.0, 0.0)];
        let b = [(1.0, 1.0), (3.0, 1.0), (3.0, 3.0), (1.0, 3.0), (1.0, 1.0)];
        assert_eq!(polyline_crossings(&a, &b), 2);
        let c = [(5.0, 5.0), (6.0, 6.0)];
        assert_eq!(polyline_crossings(&a, &c), 0);
    }

    #[test]
    fn precondition_of_ky_trace() {
        assert!(matches!(
            ky_period4_trace(&example(), 3.0, 100, 1e-9),
            Err(Error::Precondition(_))
        ));
    }
}
