//! Odd, piecewise-linear feedback functions.
//!
//! A [`FeedbackFn`] is stored by its breakpoints on `[0, x_max]` and a constant
//! tail beyond `x_max`; negative arguments are handled by odd extension. All
//! integrals are computed in closed form from the breakpoints.

use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::io::fmt_g17;

/// Relative slack used for the non-strict parameter conditions, so that
/// families that meet a bound with equality (the multiscale family does) are
/// not rejected by a rounding error.
const NONSTRICT_SLACK: f64 = 1e-12;

/// Odd, continuous, piecewise-linear feedback function with a constant tail.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackFn {
    breakpoints: Vec<(f64, f64)>,
    tail_value: f64,
    slope0: f64,
    /// Cumulative `∫_0^{x_i} |f|` at each breakpoint.
    cumulative: Vec<f64>,
    scales: Vec<HppParams>,
}

impl FeedbackFn {
    /// Builds a feedback function from breakpoints on `[0, x_max]`.
    ///
    /// The first breakpoint must be `(0, 0)`, abscissae strictly increasing,
    /// every other ordinate negative, and `tail_value` equal to the last
    /// ordinate (continuity).
    pub fn new(breakpoints: Vec<(f64, f64)>, tail_value: f64) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::Construction(
                "need at least two breakpoints".to_string(),
            ));
        }
        if breakpoints[0] != (0.0, 0.0) {
            return Err(Error::Construction(format!(
                "first breakpoint must be (0, 0), got {:?}",
                breakpoints[0]
            )));
        }
        for (i, w) in breakpoints.windows(2).enumerate() {
            if !(w[1].0 > w[0].0) || !w[1].0.is_finite() {
                return Err(Error::Construction(format!(
                    "breakpoint abscissae not strictly increasing at index {}",
                    i + 1
                )));
            }
            if !(w[1].1 < 0.0) || !w[1].1.is_finite() {
                return Err(Error::Construction(format!(
                    "negative feedback requires f(x) < 0 for x > 0; breakpoint {} has y = {}",
                    i + 1,
                    w[1].1
                )));
            }
        }
        let last = breakpoints[breakpoints.len() - 1].1;
        if !(tail_value < 0.0) || tail_value != last {
            return Err(Error::Construction(format!(
                "tail value {tail_value} must be negative and equal the last breakpoint value {last}"
            )));
        }
        let slope0 = breakpoints[1].1 / breakpoints[1].0;
        let mut cumulative = Vec::with_capacity(breakpoints.len());
        cumulative.push(0.0);
        for w in breakpoints.windows(2) {
            let area = 0.5 * (w[1].0 - w[0].0) * (w[0].1.abs() + w[1].1.abs());
            cumulative.push(cumulative.last().unwrap() + area);
        }
        Ok(Self {
            breakpoints,
            tail_value,
            slope0,
            cumulative,
            scales: Vec::new(),
        })
    }

    fn with_scales(mut self, scales: Vec<HppParams>) -> Self {
        self.scales = scales;
        self
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.breakpoints
    }

    pub fn tail_value(&self) -> f64 {
        self.tail_value
    }

    /// Slope of the first linear piece, i.e. `f'(0)`.
    pub fn slope0(&self) -> f64 {
        self.slope0
    }

    /// Width of the first linear piece.
    pub fn first_piece_width(&self) -> f64 {
        self.breakpoints[1].0
    }

    /// Start of the constant tail.
    pub fn x_max(&self) -> f64 {
        self.breakpoints[self.breakpoints.len() - 1].0
    }

    /// Global bound `M = sup |f|`.
    pub fn bound(&self) -> f64 {
        self.breakpoints
            .iter()
            .map(|&(_, y)| y.abs())
            .fold(self.tail_value.abs(), f64::max)
    }

    /// The (H'') parameter sets this function was built from, outermost first.
    pub fn scales(&self) -> &[HppParams] {
        &self.scales
    }

    /// Evaluates `f(x)` exactly on the piecewise-linear representation.
    pub fn eval(&self, x: f64) -> f64 {
        if x < 0.0 {
            return -self.eval_nonneg(-x);
        }
        self.eval_nonneg(x)
    }

    fn eval_nonneg(&self, x: f64) -> f64 {
        let bp = &self.breakpoints;
        if x >= self.x_max() {
            return self.tail_value;
        }
        // index of the first breakpoint with abscissa > x; 1 <= i < len
        let i = bp.partition_point(|&(bx, _)| bx <= x);
        let (x0, y0) = bp[i - 1];
        let (x1, y1) = bp[i];
        let t = (x - x0) / (x1 - x0);
        y0 * (1.0 - t) + y1 * t
    }

    /// `∫_0^x |f(s)| ds` for `x >= 0`.
    pub fn abs_antiderivative(&self, x: f64) -> f64 {
        let x = x.abs();
        let bp = &self.breakpoints;
        if x >= self.x_max() {
            return self.cumulative[bp.len() - 1] + (x - self.x_max()) * self.tail_value.abs();
        }
        let i = bp.partition_point(|&(bx, _)| bx <= x);
        let (x0, y0) = bp[i - 1];
        let yx = self.eval_nonneg(x);
        self.cumulative[i - 1] + 0.5 * (x - x0) * (y0.abs() + yx.abs())
    }

    /// Exact `∫_{x0}^{x1} |f(s)| ds` for `0 <= x0 <= x1`.
    pub fn integral_abs(&self, x0: f64, x1: f64) -> f64 {
        debug_assert!(0.0 <= x0 && x0 <= x1);
        if x0 == x1 {
            return 0.0;
        }
        self.abs_antiderivative(x1) - self.abs_antiderivative(x0)
    }

    /// Plain-text breakpoint table: `# feedback v1`, `x y` lines, `tail v`.
    pub fn to_table(&self) -> String {
        let mut out = String::from("# feedback v1\n");
        for &(x, y) in &self.breakpoints {
            let _ = writeln!(out, "{} {}", fmt_g17(x), fmt_g17(y));
        }
        let _ = writeln!(out, "tail {}", fmt_g17(self.tail_value));
        out
    }

    /// Parses the format written by [`FeedbackFn::to_table`].
    pub fn from_table(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim() == "# feedback v1" => {}
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    msg: "expected header `# feedback v1`".to_string(),
                })
            }
        }
        let mut breakpoints = Vec::new();
        let mut tail = None;
        for (idx, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|_| Error::Parse {
                    line: idx + 1,
                    msg: format!("malformed number `{s}`"),
                })
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.as_slice() {
                ["tail", v] => tail = Some(parse(v)?),
                [x, y] if tail.is_none() => breakpoints.push((parse(x)?, parse(y)?)),
                _ => {
                    return Err(Error::Parse {
                        line: idx + 1,
                        msg: format!("unexpected line `{line}`"),
                    })
                }
            }
        }
        let tail = tail.ok_or(Error::Parse {
            line: text.lines().count(),
            msg: "missing `tail` line".to_string(),
        })?;
        Self::new(breakpoints, tail)
    }
}

/// Parameters `(a, c, δ, γ)` of the long-period construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HppParams {
    pub a: f64,
    pub c: f64,
    pub delta: f64,
    pub gamma: f64,
}

impl HppParams {
    pub fn new(a: f64, c: f64, delta: f64, gamma: f64) -> Self {
        Self { a, c, delta, gamma }
    }

    /// The parameters used for the worked example: `a = 1, c = 1/20, δ = 2/3, γ = 4`.
    pub fn worked_example() -> Self {
        Self::new(1.0, 1.0 / 20.0, 2.0 / 3.0, 4.0)
    }

    /// Lower bound `2 + c/δ + 3a/γ + (γ - 4a)/δ` on the half period `τ₃`.
    pub fn half_period_bound(&self) -> f64 {
        2.0 + self.c / self.delta + 3.0 * self.a / self.gamma + (self.gamma - 4.0 * self.a) / self.delta
    }
}

/// Parameters `(μ, β, σ)`: `|f| <= μ` and `|f(x)| >= σ` for `|x| >= β`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HprimeParams {
    pub mu: f64,
    pub beta: f64,
    pub sigma: f64,
}

impl HprimeParams {
    /// `β < σ / (2 + μ/σ)`, the requirement for two coexisting SOP solutions.
    pub fn admits_two_sops(&self) -> bool {
        self.beta < self.sigma / (2.0 + self.mu / self.sigma)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionCheck {
    pub name: &'static str,
    pub pass: bool,
    /// Positive when the condition holds with room to spare.
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub conditions: Vec<ConditionCheck>,
}

impl ValidationReport {
    pub fn valid(&self) -> bool {
        self.conditions.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ConditionCheck> {
        self.conditions.iter().filter(|c| !c.pass)
    }
}

fn nonstrict(margin: f64, scale: f64) -> bool {
    margin >= -NONSTRICT_SLACK * scale
}

/// Checks conditions (i) `c < min(a, δ)`, (ii) `γ >= 4a, γ > δ` and
/// (iii) `δ + (c/δ)γ <= a`.
pub fn validate_params(p: &HppParams) -> Result<ValidationReport> {
    for (name, v) in [("a", p.a), ("c", p.c), ("delta", p.delta), ("gamma", p.gamma)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidInput(format!(
                "{name} must be positive and finite, got {v}"
            )));
        }
    }
    let m1 = p.a.min(p.delta) - p.c;
    let m2a = p.gamma - 4.0 * p.a;
    let m2b = p.gamma - p.delta;
    let m3 = p.a - (p.delta + p.c / p.delta * p.gamma);
    Ok(ValidationReport {
        conditions: vec![
            ConditionCheck {
                name: "(i) c < min(a, delta)",
                pass: m1 > 0.0,
                margin: m1,
            },
            ConditionCheck {
                name: "(ii) gamma >= 4a and gamma > delta",
                pass: nonstrict(m2a, p.gamma) && m2b > 0.0,
                margin: m2a.min(m2b),
            },
            ConditionCheck {
                name: "(iii) delta + (c/delta) gamma <= a",
                pass: nonstrict(m3, p.a),
                margin: m3,
            },
        ],
    })
}

fn require_valid(p: &HppParams) -> Result<()> {
    let report = validate_params(p)?;
    if let Some(bad) = report.failures().next() {
        return Err(Error::InvalidInput(format!(
            "condition {} fails (margin {})",
            bad.name, bad.margin
        )));
    }
    Ok(())
}

/// Breakpoints `a, 2a - c, 2a` shared by every scale of the construction.
fn scale_breakpoints(p: &HppParams) -> [(f64, f64); 3] {
    [
        (p.a, -p.gamma),
        (2.0 * p.a - p.c, -p.gamma),
        (2.0 * p.a, -p.delta),
    ]
}

fn check_slope(p: &HppParams, slope0: f64) -> Result<()> {
    if !(slope0 < 0.0) || !slope0.is_finite() {
        return Err(Error::Construction(format!(
            "slope0 must be negative and finite, got {slope0}"
        )));
    }
    let peak = slope0.abs() * (p.a - p.c);
    if peak > p.gamma * (1.0 + NONSTRICT_SLACK) {
        return Err(Error::Construction(format!(
            "|slope0|·(a - c) = {peak} exceeds gamma = {}: |f| <= gamma on [0, 2a] violated",
            p.gamma
        )));
    }
    Ok(())
}

/// Feedback function for the long-period construction:
///
/// * `slope0 · x` on `[0, a-c]`, linear up to `(a, -γ)`,
/// * `-γ` on `[a, 2a-c]`, linear up to `(2a, -δ)`,
/// * `-δ` for `x >= 2a`.
pub fn build_hpp_feedback(p: &HppParams, slope0: f64) -> Result<FeedbackFn> {
    require_valid(p)?;
    check_slope(p, slope0)?;
    let knee = p.a - p.c;
    let mut bps = vec![(0.0, 0.0), (knee, slope0 * knee)];
    bps.extend_from_slice(&scale_breakpoints(p));
    Ok(FeedbackFn::new(bps, -p.delta)?.with_scales(vec![*p]))
}

/// Per-scale parameters `a = γ/4, δ = γ/8, c = γ/64`.
pub fn multiscale_params(gamma: f64) -> HppParams {
    HppParams::new(gamma / 4.0, gamma / 64.0, gamma / 8.0, gamma)
}

/// Multi-scale feedback function: the single-scale construction repeated
/// at each `γ_n` (outermost first). Between scales `f` is linear from
/// `(γ_{n+1}, -δ_{n+1})` to `(a_n, -γ_n)`. When `slope0` is `None` the
/// innermost linear piece reaches exactly `-γ_M` at `a_M - c_M`.
pub fn build_multiscale(gammas: &[f64], slope0: Option<f64>) -> Result<FeedbackFn> {
    if gammas.is_empty() {
        return Err(Error::InvalidInput("gammas must not be empty".to_string()));
    }
    for &g in gammas {
        if !(g > 0.0) || !g.is_finite() {
            return Err(Error::InvalidInput(format!(
                "gammas must be positive and finite, got {g}"
            )));
        }
    }
    for w in gammas.windows(2) {
        if !(w[1] < w[0] / 4.0) {
            return Err(Error::InvalidInput(format!(
                "scale ratio violated: gamma_(n+1) = {} must be < gamma_n / 4 = {}",
                w[1],
                w[0] / 4.0
            )));
        }
    }
    let scales: Vec<HppParams> = gammas.iter().map(|&g| multiscale_params(g)).collect();
    for p in &scales {
        require_valid(p)?;
    }
    let inner = scales[scales.len() - 1];
    let knee = inner.a - inner.c;
    let slope0 = slope0.unwrap_or(-inner.gamma / knee);
    check_slope(&inner, slope0)?;

    let mut bps = vec![(0.0, 0.0), (knee, slope0 * knee)];
    bps.extend_from_slice(&scale_breakpoints(&inner));
    for pair in scales.windows(2).rev() {
        let (outer, inner) = (pair[0], pair[1]);
        bps.push((inner.gamma, -inner.delta));
        bps.extend_from_slice(&scale_breakpoints(&outer));
    }
    let tail = -scales[0].delta;
    Ok(FeedbackFn::new(bps, tail)?.with_scales(scales))
}

/// `∫_0^a |f| / γ` against `a - c`; returns `(holds, lhs, rhs)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Condition2 {
    pub holds: bool,
    pub lhs: f64,
    pub rhs: f64,
}

impl Condition2 {
    pub fn margin(&self) -> f64 {
        self.rhs - self.lhs
    }
}

/// Sufficient condition for `τ(2a - c) < 1`: `(1/γ) ∫_0^a |f| < a - c`.
pub fn check_condition2(f: &FeedbackFn, p: &HppParams) -> Condition2 {
    let lhs = f.integral_abs(0.0, p.a) / p.gamma;
    let rhs = p.a - p.c;
    Condition2 {
        holds: lhs < rhs,
        lhs,
        rhs,
    }
}

/// Checks `|f| <= μ` everywhere and `|f(x)| >= σ` for `|x| >= β`.
pub fn check_hprime(f: &FeedbackFn, hp: &HprimeParams) -> bool {
    if f.bound() > hp.mu {
        return false;
    }
    // |f| is piecewise linear, so its minimum over [β, ∞) sits at β, at a
    // breakpoint beyond β, or on the tail.
    let mut min_abs = f.eval(hp.beta).abs().min(f.tail_value().abs());
    for &(x, y) in f.breakpoints() {
        if x >= hp.beta {
            min_abs = min_abs.min(y.abs());
        }
    }
    min_abs >= hp.sigma
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StabilityClass {
    Stable,
    Unstable,
    Boundary,
}

impl std::fmt::Display for StabilityClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StabilityClass::Stable => "STABLE",
            StabilityClass::Unstable => "UNSTABLE",
            StabilityClass::Boundary => "BOUNDARY",
        })
    }
}

/// Linearised stability of the zero solution from `f'(0)`: the threshold is
/// `-π/2`.
pub fn stability_class(slope0: f64) -> Result<StabilityClass> {
    if !(slope0 < 0.0) {
        return Err(Error::InvalidInput(format!(
            "f'(0) must be negative, got {slope0}"
        )));
    }
    let gap = slope0 + FRAC_PI_2;
    Ok(if gap.abs() <= 1e-12 {
        StabilityClass::Boundary
    } else if gap > 0.0 {
        StabilityClass::Stable
    } else {
        StabilityClass::Unstable
    })
}

/// The two-SOP instance with a stable zero solution: `f(x) = -x` on
/// `[0, β/2]`, linear to `-σ` at `β`, constant beyond, with `μ = σ = 1`.
pub fn two_sop_instance() -> FeedbackFn {
    plateau_feedback(-1.0, 0.1, 1.0).expect("fixed instance is well formed")
}

/// `f(x) = slope0·x` on `[0, β/2]`, linear to `-σ` at `β`, `-σ` beyond.
pub fn plateau_feedback(slope0: f64, beta: f64, sigma: f64) -> Result<FeedbackFn> {
    let half = beta / 2.0;
    FeedbackFn::new(
        vec![(0.0, 0.0), (half, slope0 * half), (beta, -sigma)],
        -sigma,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn example() -> FeedbackFn {
        build_hpp_feedback(&HppParams::worked_example(), -2.0).unwrap()
    }

    /// Adaptive Simpson quadrature of |f|; independent of the closed form.
    fn simpson_abs(f: &FeedbackFn, a: f64, b: f64) -> f64 {
        fn simpson(g: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
            let m = 0.5 * (a + b);
            (b - a) / 6.0 * (g(a) + 4.0 * g(m) + g(b))
        }
        fn rec(g: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let left = simpson(g, a, m);
            let right = simpson(g, m, b);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            rec(g, a, m, left, tol / 2.0, depth - 1) + rec(g, m, b, right, tol / 2.0, depth - 1)
        }
        let g = |x: f64| f.eval(x).abs();
        rec(&g, a, b, simpson(&g, a, b), 1e-14, 50)
    }

    #[test]
    fn worked_example_is_valid_with_margin_one_thirtieth() {
        let r = validate_params(&HppParams::worked_example()).unwrap();
        assert!(r.valid());
        assert_relative_eq!(r.conditions[2].margin, 1.0 / 30.0, epsilon = 1e-15);
    }

    #[test]
    fn condition_i_violation_is_named() {
        let r = validate_params(&HppParams::new(1.0, 2.0, 1.0, 5.0)).unwrap();
        assert!(!r.valid());
        let failed: Vec<_> = r.failures().map(|c| c.name).collect();
        assert_eq!(failed[0], "(i) c < min(a, delta)");
    }

    #[test]
    fn small_delta_and_c_are_admissible() {
        let r = validate_params(&HppParams::new(1.0, 1e-7, 1e-3, 4.0)).unwrap();
        assert!(r.valid());
    }

    #[test]
    fn nonpositive_parameters_rejected() {
        assert!(validate_params(&HppParams::new(0.0, 0.1, 0.5, 4.0)).is_err());
        assert!(validate_params(&HppParams::new(1.0, -0.1, 0.5, 4.0)).is_err());
    }

    #[test]
    fn worked_example_values() {
        let f = example();
        assert_eq!(f.eval(1.0), -4.0);
        assert_eq!(f.eval(0.0), 0.0);
        assert_eq!(f.eval(-1.0), 4.0);
        assert_relative_eq!(f.eval(3.0), -2.0 / 3.0);
        assert_relative_eq!(f.eval(0.5), -1.0, epsilon = 1e-15);
        assert_eq!(f.eval(1e6), f.tail_value());
        assert_eq!(f.slope0(), -2.0);
        assert_eq!(f.x_max(), 2.0);
        assert_eq!(f.bound(), 4.0);
    }

    #[test]
    fn slope_bound_violation_rejected() {
        let err = build_hpp_feedback(&HppParams::worked_example(), -5.0).unwrap_err();
        assert!(err.to_string().contains("exceeds gamma"), "{err}");
        assert!(build_hpp_feedback(&HppParams::worked_example(), 0.5).is_err());
    }

    #[test]
    fn integral_abs_hand_values() {
        let f = example();
        // ∫_0^0.95 2x dx = 0.9025, trapezoid 0.05·(1.9 + 4)/2 = 0.1475
        assert_relative_eq!(f.integral_abs(0.0, 1.0), 1.05, epsilon = 1e-14);
        assert_eq!(f.integral_abs(0.0, 0.0), 0.0);
        assert_relative_eq!(f.integral_abs(2.0, 3.0), 2.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn condition2_worked_example() {
        let p = HppParams::worked_example();
        let c2 = check_condition2(&example(), &p);
        assert!(c2.holds);
        assert!((c2.lhs - 0.2625).abs() < 1e-12);
        assert_relative_eq!(c2.rhs, 0.95);
    }

    #[test]
    fn condition2_holds_for_steep_slope_fails_for_wide_c() {
        // Steepest admissible slope.
        let p = HppParams::new(1.0, 0.05, 0.4, 4.0);
        assert!(validate_params(&p).unwrap().valid());
        let steep = -p.gamma / (p.a - p.c);
        let f = build_hpp_feedback(&p, steep).unwrap();
        // ∫_0^0.95 (4/0.95)x dx = 1.9, plus 0.05·4 = 0.2 -> 2.1 / 4 = 0.525 < 0.95
        let c2 = check_condition2(&f, &p);
        assert_relative_eq!(c2.lhs, 0.525, epsilon = 1e-14);
        assert!(c2.holds);

        // Degenerate: c close to a shrinks the right side a - c below the
        // integral of the plateau.
        let p = HppParams::new(1.0, 0.45, 0.5, 4.0);
        // (iii) would fail for these numbers, so build the breakpoints directly.
        let knee = p.a - p.c;
        let f = FeedbackFn::new(
            vec![(0.0, 0.0), (knee, -p.gamma), (p.a, -p.gamma), (2.0 * p.a - p.c, -p.gamma), (2.0 * p.a, -p.delta)],
            -p.delta,
        )
        .unwrap();
        let c2 = check_condition2(&f, &p);
        // ∫ = 0.5·0.55·4 + 0.45·4 = 2.9; /4 = 0.725 >= 0.55
        assert_relative_eq!(c2.lhs, 0.725, epsilon = 1e-14);
        assert!(!c2.holds);
    }

    #[test]
    fn hprime_checks() {
        let f = plateau_feedback(-1.0, 0.1, 1.0).unwrap();
        assert!(check_hprime(&f, &HprimeParams { mu: 1.0, beta: 0.1, sigma: 1.0 }));
        assert!(check_hprime(
            &example(),
            &HprimeParams { mu: 4.0, beta: 1.0, sigma: 2.0 / 3.0 }
        ));
        // tail below sigma
        let weak = plateau_feedback(-1.0, 0.1, 0.5).unwrap();
        assert!(!check_hprime(&weak, &HprimeParams { mu: 1.0, beta: 0.05, sigma: 1.0 }));
        // bound exceeded
        assert!(!check_hprime(&example(), &HprimeParams { mu: 3.0, beta: 1.0, sigma: 0.5 }));
    }

    #[test]
    fn stability_classes() {
        assert_eq!(stability_class(-1.0).unwrap(), StabilityClass::Stable);
        assert_eq!(stability_class(-2.0).unwrap(), StabilityClass::Unstable);
        assert_eq!(stability_class(-FRAC_PI_2).unwrap(), StabilityClass::Boundary);
        assert!(stability_class(0.0).is_err());
    }

    #[test]
    fn multiscale_scales() {
        let f = build_multiscale(&[5.0, 1.0], None).unwrap();
        let s = f.scales();
        assert_eq!((s[0].a, s[0].delta, s[0].c), (1.25, 0.625, 5.0 / 64.0));
        assert_eq!((s[1].a, s[1].delta, s[1].c), (0.25, 0.125, 1.0 / 64.0));
        for p in s {
            for k in 0..=100 {
                let x = p.a + (p.a - p.c) * k as f64 / 100.0;
                assert_relative_eq!(f.eval(x), -p.gamma, epsilon = 1e-14);
            }
            for k in 0..=100 {
                let x = 2.0 * p.a + (p.gamma - 2.0 * p.a) * k as f64 / 100.0;
                assert_relative_eq!(f.eval(x), -p.delta, epsilon = 1e-14);
            }
        }
        assert_eq!(f.x_max(), 2.5);
        // default slope reaches -γ_M at a_M - c_M
        assert_relative_eq!(f.eval(0.25 - 1.0 / 64.0), -1.0, epsilon = 1e-15);
    }

    #[test]
    fn multiscale_ratio_rejected() {
        assert!(build_multiscale(&[5.0, 1.26], None).is_err());
        assert!(build_multiscale(&[], None).is_err());
        assert!(build_multiscale(&[1.0, 5.0], None).is_err());
    }

    #[test]
    fn single_scale_multiscale_matches_hpp_constructor() {
        for (g, s) in [(64.0, None), (4.0, Some(-2.0)), (5.0, Some(-0.5))] {
            let ms = build_multiscale(&[g], s).unwrap();
            let p = multiscale_params(g);
            let s0 = s.unwrap_or(-p.gamma / (p.a - p.c));
            let single = build_hpp_feedback(&p, s0).unwrap();
            assert_eq!(ms.breakpoints(), single.breakpoints());
            assert_eq!(ms.tail_value(), single.tail_value());
        }
    }

    #[test]
    fn table_round_trip_is_bit_exact() {
        for f in [example(), build_multiscale(&[64.0, 8.0, 1.0], Some(-1.1)).unwrap()] {
            let text = f.to_table();
            assert!(text.starts_with("# feedback v1\n"));
            let back = FeedbackFn::from_table(&text).unwrap();
            assert_eq!(back.breakpoints(), f.breakpoints());
            assert_eq!(back.tail_value().to_bits(), f.tail_value().to_bits());
        }
    }

    #[test]
    fn table_parse_errors() {
        assert!(FeedbackFn::from_table("0 0\n").is_err());
        assert!(FeedbackFn::from_table("# feedback v1\n0 0\n1 -1\n").is_err());
        assert!(FeedbackFn::from_table("# feedback v1\n0 0\n1 x\ntail -1\n").is_err());
    }

    fn any_feedback() -> impl Strategy<Value = FeedbackFn> {
        prop_oneof![
            Just(example()),
            Just(build_multiscale(&[5.0, 1.0], None).unwrap()),
            Just(build_multiscale(&[64.0, 8.0, 1.0], Some(-0.7)).unwrap()),
            Just(two_sop_instance()),
        ]
    }

    proptest! {
        #[test]
        fn oddness_is_exact(f in any_feedback(), u in 0.0f64..1.0) {
            let x = u * 1.2 * f.x_max();
            prop_assert_eq!(f.eval(-x), -f.eval(x));
        }

        #[test]
        fn negative_feedback(f in any_feedback(), u in -1.0f64..1.0) {
            let x = u * 1.2 * f.x_max();
            prop_assume!(x != 0.0);
            prop_assert!(x * f.eval(x) < 0.0);
        }

        #[test]
        fn hpp_conformance(slope in -4.2f64..-0.1, k in 0usize..=1000) {
            let p = HppParams::worked_example();
            let f = build_hpp_feedback(&p, slope).unwrap();
            let t = k as f64 / 1000.0;
            prop_assert_eq!(f.eval(p.a + t * (p.a - p.c)), -p.gamma);
            let y = f.eval(2.0 * p.a + t * 10.0);
            prop_assert!((y + p.delta).abs() < 1e-15);
            prop_assert!(f.eval(2.0 * p.a * t).abs() <= p.gamma);
        }

        #[test]
        fn integral_matches_quadrature(f in any_feedback(), u in 0.0f64..1.0, w in 0.0f64..1.0) {
            let x0 = u * 1.5 * f.x_max();
            let x1 = x0 + w * f.x_max();
            let exact = f.integral_abs(x0, x1);
            let quad = simpson_abs(&f, x0, x1);
            prop_assert!((exact - quad).abs() <= 1e-10 * quad.max(1e-300), "{} vs {}", exact, quad);
        }
    }
}
