//! The return map `P` on the cone `K` of nondecreasing segments that vanish
//! at `-1`, and the machinery built on it: fixed-point iteration to SOP
//! solutions, probes of the invariant sets `V` (around a stable SOP) and `U`
//! (around zero), and a bisection on the basin boundary between them.
//!
//! `P(phi)` is the segment of the continuation of `phi` one delay after its
//! second positive zero, and `P(phi) = 0` when no second zero exists.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dde::{integrate, Segment, SolutionTrace, Zero};
use crate::error::{Error, Result};
use crate::feedback::{check_hprime, FeedbackFn, HprimeParams};
use crate::io::fmt_g17;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MapConfig {
    /// Integration horizon for a single application of `P`.
    pub horizon: f64,
    /// Sup-norm tolerance for successive iterates.
    pub tol: f64,
    pub max_iter: usize,
    /// Amplitude below which a zero-free tail counts as decayed.
    pub decay_amplitude: f64,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            horizon: 200.0,
            tol: 1e-6,
            max_iter: 50,
            decay_amplitude: 1e-9,
        }
    }
}

/// Snap/projection budget at cone re-entry: `10·h·max|f|`.
pub fn snap_tolerance(f: &FeedbackFn, n: usize) -> f64 {
    10.0 * f.bound() / n as f64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ReturnStatus {
    /// A second positive zero `z` exists; the image is `x_{z+1}`.
    Returned { second_zero: f64 },
    /// Input was the zero segment.
    Origin,
    /// Fewer than two zeros and the tail amplitude is negligible.
    Decayed,
    /// Fewer than two zeros within the horizon, but the solution is not small.
    HorizonTooShort,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReturnStep {
    pub image: Segment,
    pub status: ReturnStatus,
}

/// One application of the return map.
pub fn apply_return_map(f: &FeedbackFn, phi: &Segment, cfg: &MapConfig) -> Result<ReturnStep> {
    if !(cfg.horizon > 2.0) {
        return Err(Error::InvalidInput(format!(
            "horizon must exceed 2, got {}",
            cfg.horizon
        )));
    }
    let bound = f.bound();
    if let Some(why) = phi.cone_violation(bound) {
        return Err(Error::NotInCone(why));
    }
    let n = phi.n();
    if phi.is_zero() {
        return Ok(ReturnStep {
            image: Segment::zero(n)?,
            status: ReturnStatus::Origin,
        });
    }
    let trace = integrate(f, phi, cfg.horizon);
    let end = trace.end_time();
    if let Some(z2) = trace.zeros().get(1).map(|z| z.t) {
        if z2 + 1.0 <= end {
            let image = trace
                .segment_at(z2 + 1.0)?
                .normalize_to_cone(snap_tolerance(f, n), bound)?;
            return Ok(ReturnStep {
                image,
                status: ReturnStatus::Returned { second_zero: z2 },
            });
        }
    }
    let status = if trace.max_abs_between(end - 1.0, end) < cfg.decay_amplitude {
        ReturnStatus::Decayed
    } else {
        ReturnStatus::HorizonTooShort
    };
    Ok(ReturnStep {
        image: Segment::zero(n)?,
        status,
    })
}

/// A nonzero fixed point of `P` and the periodic solution through it.
#[derive(Clone, Debug, PartialEq)]
pub struct SopResult {
    pub fixed_segment: Segment,
    /// `z₂ + 1` for the continuation of the fixed segment.
    pub period: f64,
    /// `max |x|` over one period.
    pub amplitude: f64,
    pub iterations: usize,
    /// Sup distance between the last two iterates.
    pub residual: f64,
    /// Sup distance between the fixed segment and the segment one period later.
    pub replay_error: f64,
    /// Solution on `[-1, period]` (rounded up to the grid).
    pub trace: SolutionTrace,
}

impl SopResult {
    /// `key: value` record.
    pub fn to_record(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "period: {}", fmt_g17(self.period));
        let _ = writeln!(out, "amplitude: {}", fmt_g17(self.amplitude));
        let _ = writeln!(out, "residual: {}", fmt_g17(self.residual));
        let _ = writeln!(out, "iterations: {}", self.iterations);
        let _ = writeln!(out, "replay_error: {}", fmt_g17(self.replay_error));
        out
    }

    /// Positive zeros within one period.
    pub fn zeros(&self) -> &[Zero] {
        self.trace.zeros()
    }

    /// Whether two results describe the same periodic orbit (relative
    /// agreement of period and amplitude within `1e-3`).
    pub fn same_orbit(&self, other: &SopResult) -> bool {
        (self.period - other.period).abs() < 1e-3 * self.period
            && (self.amplitude - other.amplitude).abs() < 1e-3 * self.amplitude
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FixedPointOutcome {
    Periodic(SopResult),
    /// Iterates collapsed onto the zero segment.
    ConvergedToZero {
        iterations: usize,
        last_status: ReturnStatus,
    },
    NonConvergence { residuals: Vec<f64> },
}

impl FixedPointOutcome {
    pub fn sop(self) -> Option<SopResult> {
        match self {
            FixedPointOutcome::Periodic(s) => Some(s),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            FixedPointOutcome::Periodic(_) => "PERIODIC",
            FixedPointOutcome::ConvergedToZero { .. } => "CONVERGED_TO_ZERO",
            FixedPointOutcome::NonConvergence { .. } => "NON_CONVERGENCE",
        }
    }
}

/// Iterates `phi <- P(phi)` until successive iterates agree within `cfg.tol`.
pub fn iterate_to_fixed_point(
    f: &FeedbackFn,
    phi0: &Segment,
    cfg: &MapConfig,
) -> Result<FixedPointOutcome> {
    if phi0.is_zero() {
        return Err(Error::InvalidInput(
            "fixed-point iteration needs a nonzero seed".to_string(),
        ));
    }
    let mut phi = phi0.clone();
    let mut residuals = Vec::new();
    for it in 1..=cfg.max_iter {
        let step = apply_return_map(f, &phi, cfg)?;
        if step.image.sup_norm() < cfg.tol {
            return Ok(FixedPointOutcome::ConvergedToZero {
                iterations: it,
                last_status: step.status,
            });
        }
        let r = step.image.sup_distance(&phi);
        residuals.push(r);
        phi = step.image;
        if r < cfg.tol {
            return package(f, phi, it, r, cfg).map(FixedPointOutcome::Periodic);
        }
    }
    Ok(FixedPointOutcome::NonConvergence { residuals })
}

fn package(
    f: &FeedbackFn,
    fixed: Segment,
    iterations: usize,
    residual: f64,
    cfg: &MapConfig,
) -> Result<SopResult> {
    let long = integrate(f, &fixed, cfg.horizon);
    let z2 = long
        .zeros()
        .get(1)
        .map(|z| z.t)
        .ok_or_else(|| Error::Precondition("fixed segment lost its second zero".to_string()))?;
    let period = z2 + 1.0;
    let replay = long
        .segment_at(period)?
        .normalize_to_cone(snap_tolerance(f, fixed.n()), f.bound())?;
    let replay_error = replay.sup_distance(&fixed);
    let amplitude = long.max_abs_between(0.0, period);
    let trace = integrate(f, &fixed, period);
    Ok(SopResult {
        fixed_segment: fixed,
        period,
        amplitude,
        iterations,
        residual,
        replay_error,
        trace,
    })
}

/// Runs the fixed-point iteration from every seed and merges results that
/// describe the same orbit. The output is sorted by decreasing amplitude and
/// does not depend on the order of `seeds`.
pub fn find_multiple_sops(
    f: &FeedbackFn,
    seeds: &[Segment],
    cfg: &MapConfig,
) -> Result<Vec<SopResult>> {
    let outcomes: Vec<FixedPointOutcome> = seeds
        .par_iter()
        .map(|s| iterate_to_fixed_point(f, s, cfg))
        .collect::<Result<_>>()?;
    let mut found: Vec<SopResult> = outcomes.into_iter().filter_map(|o| o.sop()).collect();
    found.sort_by(|a, b| {
        a.amplitude
            .total_cmp(&b.amplitude)
            .then(a.period.total_cmp(&b.period))
    });
    let mut distinct: Vec<SopResult> = Vec::new();
    for r in found {
        if !distinct.iter().any(|d| d.same_orbit(&r)) {
            distinct.push(r);
        }
    }
    distinct.reverse();
    Ok(distinct)
}

/// Parameters of the set `V = {phi in K : phi(t) > σt + σ(1 - γ_v) on [-1 + γ_v, -β/σ]}`.
///
/// `gamma_v` is the small width parameter of `V`, not the plateau height of
/// the long-period construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VSetParams {
    pub sigma: f64,
    pub gamma_v: f64,
    pub beta: f64,
    /// Bound on `|f|`, also the cone bound.
    pub mu: f64,
}

impl VSetParams {
    pub fn validate(&self) -> Result<()> {
        let Self { sigma, gamma_v, beta, mu } = *self;
        if !(sigma > 0.0 && gamma_v > 0.0 && beta > 0.0 && mu > 0.0) {
            return Err(Error::InvalidInput(format!(
                "V parameters must be positive: {self:?}"
            )));
        }
        if !(gamma_v + beta / sigma < 1.0) {
            return Err(Error::Precondition(format!(
                "gamma_v + beta/sigma = {} must be < 1",
                gamma_v + beta / sigma
            )));
        }
        let cap = (sigma - (sigma + mu) * gamma_v) / (2.0 + mu / sigma);
        if !(beta <= cap) {
            return Err(Error::Precondition(format!(
                "beta = {beta} exceeds (sigma - (sigma + mu) gamma_v) / (2 + mu/sigma) = {cap}"
            )));
        }
        Ok(())
    }

    fn lower_graph(&self, t: f64) -> f64 {
        self.sigma * t + self.sigma * (1.0 - self.gamma_v)
    }

    fn window(&self) -> (f64, f64) {
        (-1.0 + self.gamma_v, -self.beta / self.sigma)
    }

    fn in_window(&self, t: f64) -> bool {
        let (lo, hi) = self.window();
        t >= lo - 1e-12 && t <= hi + 1e-12
    }

    /// The lower boundary of `V̄`: 0, then the ramp `σt + σ(1 - γ_v)`, then
    /// flat at `σ(1 - γ_v) - β`.
    pub fn boundary_graph(&self, n: usize) -> Result<Segment> {
        let (lo, _) = self.window();
        let top = self.sigma * (1.0 - self.gamma_v) - self.beta;
        Segment::from_fn(n, |t| {
            if t < lo && !self.in_window(t) {
                0.0
            } else if self.in_window(t) {
                self.lower_graph(t).max(0.0)
            } else {
                top
            }
        })
    }
}

/// Membership in `V` (`closed = false`) or its closure `V̄` (`closed = true`),
/// checked at every grid node of the window.
pub fn membership_v(phi: &Segment, vp: &VSetParams, closed: bool) -> bool {
    if !phi.in_cone(vp.mu) {
        return false;
    }
    phi.times().zip(phi.values()).all(|(t, &v)| {
        if !vp.in_window(t) {
            return true;
        }
        let g = vp.lower_graph(t);
        if closed {
            v >= g
        } else {
            v > g
        }
    })
}

#[derive(Clone, Debug)]
pub struct VInvarianceReport {
    pub samples: usize,
    /// Samples whose image left `V`, with the offending image.
    pub failures: Vec<(usize, Segment)>,
    /// Largest sup distance between any image and the first one.
    pub image_spread: f64,
    pub constancy_tol: f64,
}

impl VInvarianceReport {
    pub fn pass(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn images_coincide(&self) -> bool {
        self.image_spread <= self.constancy_tol
    }
}

/// Random nondecreasing bump starting at 0 with final height `height`.
fn random_bump(rng: &mut ChaCha8Rng, n: usize, height: f64) -> Vec<f64> {
    let mut acc = 0.0;
    let mut v = Vec::with_capacity(n + 1);
    v.push(0.0);
    for _ in 0..n {
        let r: f64 = rng.gen();
        acc += r * r * r;
        v.push(acc);
    }
    let scale = if acc > 0.0 { height / acc } else { 0.0 };
    v.iter().map(|x| x * scale).collect()
}

/// Samples `n_samples` segments of `V̄` (boundary graph plus a random
/// nondecreasing bump, clipped to `μ`) and checks that `P` maps each of them
/// into `V`.
pub fn verify_v_invariance(
    f: &FeedbackFn,
    vp: &VSetParams,
    n_samples: usize,
    n: usize,
    seed: u64,
    cfg: &MapConfig,
) -> Result<VInvarianceReport> {
    vp.validate()?;
    let hp = HprimeParams {
        mu: vp.mu,
        beta: vp.beta,
        sigma: vp.sigma,
    };
    if !check_hprime(f, &hp) {
        return Err(Error::Precondition(format!(
            "f does not satisfy |f| <= {} and |f(x)| >= {} for |x| >= {}",
            hp.mu, hp.sigma, hp.beta
        )));
    }
    if !hp.admits_two_sops() {
        return Err(Error::Precondition(format!(
            "beta = {} is not below sigma / (2 + mu/sigma)",
            hp.beta
        )));
    }
    let base = vp.boundary_graph(n)?;
    let headroom = vp.mu - base.head();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phis: Vec<Segment> = (0..n_samples)
        .map(|_| {
            let height = rng.gen::<f64>() * 1.2 * headroom;
            let bump = random_bump(&mut rng, n, height);
            let values = base
                .values()
                .iter()
                .zip(bump)
                .map(|(g, b)| (g + b).min(vp.mu))
                .collect();
            Segment::new(n, values)
        })
        .collect::<Result<_>>()?;
    let images: Vec<Segment> = phis
        .par_iter()
        .map(|phi| apply_return_map(f, phi, cfg).map(|s| s.image))
        .collect::<Result<_>>()?;
    let failures = images
        .iter()
        .enumerate()
        .filter(|(_, img)| !membership_v(img, vp, false))
        .map(|(i, img)| (i, img.clone()))
        .collect();
    let image_spread = images
        .iter()
        .map(|img| img.sup_distance(&images[0]))
        .fold(0.0, f64::max);
    Ok(VInvarianceReport {
        samples: n_samples,
        failures,
        image_spread,
        constancy_tol: snap_tolerance(f, n),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContractionReport {
    pub checked: usize,
    /// Samples skipped because `phi = 0` or `P(phi) = 0`.
    pub skipped: usize,
    /// `(sample, ||phi||, ||P(phi)||)` for every violation.
    pub failures: Vec<(usize, f64, f64)>,
}

impl ContractionReport {
    pub fn pass(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Checks `||P(phi)|| < ||phi||` on random cone segments with `||phi|| <= epsilon`.
pub fn verify_contraction_u(
    f: &FeedbackFn,
    epsilon: f64,
    n_samples: usize,
    n: usize,
    seed: u64,
    cfg: &MapConfig,
) -> Result<ContractionReport> {
    if !(f.slope0().abs() < 1.0) {
        return Err(Error::Precondition(format!(
            "|f'(0)| = {} must be < 1",
            f.slope0().abs()
        )));
    }
    if !(epsilon > 0.0 && epsilon <= f.first_piece_width()) {
        return Err(Error::Precondition(format!(
            "epsilon = {epsilon} must lie in (0, {}] (first linear piece)",
            f.first_piece_width()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut phis = vec![Segment::zero(n)?];
    for _ in 1..n_samples {
        let amp = epsilon * (1.0 - rng.gen::<f64>());
        phis.push(Segment::new(n, random_bump(&mut rng, n, amp))?);
    }
    let norms: Vec<(f64, f64)> = phis
        .par_iter()
        .map(|phi| {
            apply_return_map(f, phi, cfg).map(|s| (phi.sup_norm(), s.image.sup_norm()))
        })
        .collect::<Result<_>>()?;
    let mut report = ContractionReport {
        checked: 0,
        skipped: 0,
        failures: Vec::new(),
    };
    for (i, (before, after)) in norms.into_iter().enumerate() {
        if before == 0.0 || after == 0.0 {
            report.skipped += 1;
            continue;
        }
        report.checked += 1;
        if !(after < before) {
            report.failures.push((i, before, after));
        }
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OrbitClass {
    Decay,
    Sop,
}

impl std::fmt::Display for OrbitClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OrbitClass::Decay => "DECAY",
            OrbitClass::Sop => "SOP",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BasinConfig {
    /// Initial integration length used to classify an orbit.
    pub t_classify: f64,
    pub n_bisect: usize,
    /// `β` of the feedback; DECAY means `sup |x| < β/10` over the last 5 time units.
    pub beta: f64,
    /// How many times the classification horizon may be doubled.
    pub max_extensions: usize,
    /// Length of the edge-tracked pseudo-orbit.
    pub track_time: f64,
    /// Time between re-bisections while edge tracking.
    pub track_leg: f64,
}

impl Default for BasinConfig {
    fn default() -> Self {
        Self {
            t_classify: 200.0,
            n_bisect: 24,
            beta: 0.1,
            max_extensions: 4,
            track_time: 100.0,
            track_leg: 8.0,
        }
    }
}

/// Classifies the orbit from `phi` as decaying to 0 or converging to the
/// reference SOP (period and amplitude of the last full oscillation within 1%).
pub fn classify_orbit(
    f: &FeedbackFn,
    phi: &Segment,
    reference: &SopResult,
    cfg: &BasinConfig,
) -> Result<(OrbitClass, SolutionTrace)> {
    let mut t_end = cfg.t_classify;
    for _ in 0..=cfg.max_extensions {
        let trace = integrate(f, phi, t_end);
        let end = trace.end_time();
        if trace.max_abs_between(end - 5.0, end) < cfg.beta / 10.0 {
            return Ok((OrbitClass::Decay, trace));
        }
        let zs = trace.zeros();
        if zs.len() >= 3 {
            let (a, b) = (zs[zs.len() - 3].t, zs[zs.len() - 1].t);
            let period = b - a;
            let amp = trace.max_abs_between(a, b);
            if (period - reference.period).abs() <= 0.01 * reference.period
                && (amp - reference.amplitude).abs() <= 0.01 * reference.amplitude
            {
                return Ok((OrbitClass::Sop, trace));
            }
        }
        t_end *= 2.0;
    }
    Err(Error::Unclassified(format!(
        "neither decayed nor settled on the reference SOP by t = {}",
        t_end / 2.0
    )))
}

/// Half-cycle peaks between consecutive zeros: `(z_j, z_{j+1}, max |x|)`.
fn half_cycles(trace: &SolutionTrace) -> Vec<(f64, f64, f64)> {
    trace
        .zeros()
        .windows(2)
        .map(|w| (w[0].t, w[1].t, trace.max_abs_between(w[0].t, w[1].t)))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct NearBoundaryOrbit {
    /// Longest stretch of consecutive half-cycles whose peaks lie strictly
    /// between `lower` and `upper`.
    pub residence: f64,
    pub residence_start: f64,
    /// Period estimate from the last three zeros of that stretch.
    pub quasi_period: Option<f64>,
    /// Peak of the last half-cycle in that stretch.
    pub amplitude: Option<f64>,
}

fn analyse_near_boundary(trace: &SolutionTrace, lower: f64, upper: f64) -> NearBoundaryOrbit {
    let cycles = half_cycles(trace);
    let (mut best, mut best_run) = (0.0, (0usize, 0usize));
    let mut start: Option<usize> = None;
    for (i, &(_, _, peak)) in cycles.iter().enumerate() {
        let inside = peak > lower && peak < upper;
        match (inside, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                let len = cycles[i - 1].1 - cycles[s].0;
                if len > best {
                    best = len;
                    best_run = (s, i);
                }
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        let len = cycles[cycles.len() - 1].1 - cycles[s].0;
        if len > best {
            best = len;
            best_run = (s, cycles.len());
        }
    }
    let (s, e) = best_run;
    let run = &cycles[s..e];
    let quasi_period = (run.len() >= 2).then(|| run[run.len() - 1].1 - run[run.len() - 2].0);
    NearBoundaryOrbit {
        residence: best,
        residence_start: run.first().map_or(0.0, |c| c.0),
        quasi_period,
        amplitude: run.last().map(|c| c.2),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryWitness {
    /// Midpoint of the final bracket.
    pub s_star: f64,
    pub bracket: (f64, f64),
    /// Decay-side end of the bracket.
    pub segment: Segment,
    /// Plain orbits from the two ends of the bracket.
    pub lower_orbit: NearBoundaryOrbit,
    pub upper_orbit: NearBoundaryOrbit,
    /// Edge-tracked pseudo-orbit: the decay-side orbit, re-bisected against
    /// its SOP-side partner every `track_leg` time units.
    pub tracked_orbit: NearBoundaryOrbit,
    pub tracked_trace: SolutionTrace,
    /// Largest jump introduced by a re-bisection.
    pub max_jump: f64,
    /// `(s, class)` for every classification of the main bisection.
    pub transcript: Vec<(f64, OrbitClass)>,
    /// Amplitude band `(β/10, 0.99·A)` used for residence times.
    pub band: (f64, f64),
}

impl BoundaryWitness {
    pub fn bracket_width(&self) -> f64 {
        self.bracket.1 - self.bracket.0
    }
}

/// Bisects `(1 - s)·a + s·b` given that `a` decays and `b` reaches the SOP.
fn bisect_family(
    f: &FeedbackFn,
    a: &Segment,
    b: &Segment,
    reference: &SopResult,
    cfg: &BasinConfig,
    iterations: usize,
    transcript: &mut Vec<(f64, OrbitClass)>,
) -> Result<(f64, f64)> {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..iterations {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let (c, _) = classify_orbit(f, &a.blend(b, mid), reference, cfg)?;
        transcript.push((mid, c));
        match c {
            OrbitClass::Decay => lo = mid,
            OrbitClass::Sop => hi = mid,
        }
    }
    Ok((lo, hi))
}

/// Edge tracking: follow the decay-side orbit for `track_leg` time units,
/// then bisect again between the two partner segments and continue from the
/// new decay-side segment.
fn track_edge(
    f: &FeedbackFn,
    lower: Segment,
    upper: Segment,
    reference: &SopResult,
    cfg: &BasinConfig,
) -> Result<(SolutionTrace, f64)> {
    let n = lower.n();
    let legs = (cfg.track_time / cfg.track_leg).ceil() as usize;
    let leg = (cfg.track_leg * n as f64).round() / n as f64;
    let mut samples = lower.values().to_vec();
    let (mut lo_seg, mut hi_seg) = (lower, upper);
    let mut max_jump: f64 = 0.0;
    for _ in 0..legs {
        let lo_tr = integrate(f, &lo_seg, leg);
        let hi_tr = integrate(f, &hi_seg, leg);
        samples.extend_from_slice(&lo_tr.samples()[n + 1..]);
        let a = lo_tr.segment_at(leg)?;
        let b = hi_tr.segment_at(leg)?;
        let (lo, hi) = bisect_family(f, &a, &b, reference, cfg, 64, &mut Vec::new())?;
        let next = a.blend(&b, lo);
        max_jump = max_jump.max(next.sup_distance(&a));
        hi_seg = a.blend(&b, hi);
        lo_seg = next;
        // Splice the new segment in so the pseudo-orbit continues from it.
        let m = samples.len();
        samples[m - n - 1..].copy_from_slice(lo_seg.values());
    }
    Ok((SolutionTrace::from_samples(n, samples)?, max_jump))
}

/// Bisects the family `(1 - s)·phi_small + s·phi_big` on the boundary between
/// the basin of zero and the basin of the reference SOP.
pub fn locate_unstable_sop(
    f: &FeedbackFn,
    phi_small: &Segment,
    phi_big: &Segment,
    reference: &SopResult,
    cfg: &BasinConfig,
) -> Result<BoundaryWitness> {
    let bound = f.bound();
    for (name, phi) in [("phi_small", phi_small), ("phi_big", phi_big)] {
        if let Some(why) = phi.cone_violation(bound) {
            return Err(Error::NotInCone(format!("{name}: {why}")));
        }
    }
    let mut transcript = Vec::new();
    let (c0, _) = classify_orbit(f, phi_small, reference, cfg)?;
    transcript.push((0.0, c0));
    let (c1, _) = classify_orbit(f, phi_big, reference, cfg)?;
    transcript.push((1.0, c1));
    let render = |t: &[(f64, OrbitClass)]| {
        t.iter()
            .map(|(s, c)| format!("s={s}: {c}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    if c0 == c1 {
        return Err(Error::SameClassification {
            class: c0.to_string(),
            transcript: render(&transcript),
        });
    }
    if c0 != OrbitClass::Decay {
        return Err(Error::Precondition(format!(
            "phi_small must decay and phi_big must reach the SOP; got {}",
            render(&transcript)
        )));
    }
    let (lo, hi) = bisect_family(f, phi_small, phi_big, reference, cfg, cfg.n_bisect, &mut transcript)?;
    let lower_seg = phi_small.blend(phi_big, lo);
    let upper_seg = phi_small.blend(phi_big, hi);
    let band = (cfg.beta / 10.0, 0.99 * reference.amplitude);
    let (_, lower_trace) = classify_orbit(f, &lower_seg, reference, cfg)?;
    let (_, upper_trace) = classify_orbit(f, &upper_seg, reference, cfg)?;
    let (tracked_trace, max_jump) = track_edge(f, lower_seg.clone(), upper_seg, reference, cfg)?;
    Ok(BoundaryWitness {
        s_star: 0.5 * (lo + hi),
        bracket: (lo, hi),
        segment: lower_seg,
        lower_orbit: analyse_near_boundary(&lower_trace, band.0, band.1),
        upper_orbit: analyse_near_boundary(&upper_trace, band.0, band.1),
        tracked_orbit: analyse_near_boundary(&tracked_trace, band.0, band.1),
        tracked_trace,
        max_jump,
        transcript,
        band,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feedback::{build_hpp_feedback, plateau_feedback, two_sop_instance, HppParams};

    fn example() -> FeedbackFn {
        build_hpp_feedback(&HppParams::worked_example(), -2.0).unwrap()
    }

    #[test]
    fn origin_maps_to_origin() {
        let step = apply_return_map(&example(), &Segment::zero(100).unwrap(), &MapConfig::default()).unwrap();
        assert!(step.image.is_zero());
        assert_eq!(step.status, ReturnStatus::Origin);
    }

    #[test]
    fn segments_outside_cone_are_rejected() {
        let err = apply_return_map(&example(), &Segment::constant(100, 1.0).unwrap(), &MapConfig::default())
            .unwrap_err();
        assert!(matches!(err, Error::NotInCone(ref m) if m.contains("phi(-1)")), "{err}");
        let cfg = MapConfig { horizon: 1.5, ..Default::default() };
        assert!(apply_return_map(&example(), &Segment::ramp(100, 1.0).unwrap(), &cfg).is_err());
    }

    #[test]
    fn short_horizon_is_distinguished_from_decay() {
        let cfg = MapConfig { horizon: 2.5, ..Default::default() };
        let step = apply_return_map(&example(), &Segment::ramp(200, 3.0).unwrap(), &cfg).unwrap();
        assert!(step.image.is_zero());
        assert_eq!(step.status, ReturnStatus::HorizonTooShort);
    }

    #[test]
    fn image_lies_in_cone() {
        let f = example();
        for amp in [0.5, 1.0, 2.0, 3.0, 3.9] {
            let step = apply_return_map(&f, &Segment::ramp(500, amp).unwrap(), &MapConfig::default()).unwrap();
            assert!(matches!(step.status, ReturnStatus::Returned { .. }));
            assert!(step.image.in_cone(f.bound()), "amp {amp}");
        }
    }

    #[test]
    fn v_membership() {
        let vp = VSetParams { sigma: 1.0, gamma_v: 0.2, beta: 0.1, mu: 1.0 };
        vp.validate().unwrap();
        let ramp = Segment::from_fn(1000, |t| vp.sigma * (t + 1.0)).unwrap();
        assert!(membership_v(&ramp, &vp, false));
        let zero = Segment::zero(1000).unwrap();
        assert!(!membership_v(&zero, &vp, false));
        assert!(!membership_v(&zero, &vp, true));
        let g = vp.boundary_graph(1000).unwrap();
        assert!(g.in_cone(vp.mu));
        assert!(!membership_v(&g, &vp, false));
        assert!(membership_v(&g, &vp, true));
    }

    #[test]
    fn v_params_must_satisfy_aux_inequality() {
        let bad = VSetParams { sigma: 1.0, gamma_v: 0.4, beta: 0.1, mu: 1.0 };
        assert!(bad.validate().is_err());
        let res = verify_v_invariance(&two_sop_instance(), &bad, 3, 200, 1, &MapConfig::default());
        assert!(matches!(res, Err(Error::Precondition(_))));
    }

    #[test]
    fn contraction_precondition() {
        let res = verify_contraction_u(&example(), 0.1, 5, 200, 0, &MapConfig::default());
        assert!(matches!(res, Err(Error::Precondition(_))));
        let f = plateau_feedback(-0.5, 0.2, 1.0).unwrap();
        let res = verify_contraction_u(&f, 0.5, 5, 200, 0, &MapConfig::default());
        assert!(matches!(res, Err(Error::Precondition(_))));
    }

    #[test]
    fn stable_zero_swallows_tiny_seed() {
        let f = build_hpp_feedback(&HppParams::worked_example(), -1.0).unwrap();
        let out = iterate_to_fixed_point(&f, &Segment::ramp(500, 0.01).unwrap(), &MapConfig::default()).unwrap();
        assert_eq!(out.label(), "CONVERGED_TO_ZERO");
    }

    #[test]
    fn zero_seed_is_rejected() {
        let res = iterate_to_fixed_point(&example(), &Segment::zero(100).unwrap(), &MapConfig::default());
        assert!(res.is_err());
    }

    #[test]
    fn record_has_expected_keys() {
        let out = iterate_to_fixed_point(&example(), &Segment::ramp(500, 3.0).unwrap(), &MapConfig::default())
            .unwrap()
            .sop()
            .unwrap();
        let rec = out.to_record();
        for key in ["period: ", "amplitude: ", "residual: ", "iterations: "] {
            assert!(rec.contains(key), "{rec}");
        }
    }
}
