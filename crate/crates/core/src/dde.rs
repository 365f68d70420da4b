//! Method-of-steps integration of `x'(t) = f(x(t - 1))` on a grid aligned
//! with the delay, plus zero detection along the computed solution.
//!
//! With step `h = 1/n` the delayed argument of every trapezoid step is an
//! existing grid value, so the stepper never interpolates history:
//!
//! ```text
//! x[k+1] = x[k] + h/2 · (f(x[k-n]) + f(x[k+1-n]))
//! ```

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::feedback::FeedbackFn;
use crate::io::fmt_g17;

/// Default grid resolution (`h = 1e-3`).
pub const DEFAULT_N: usize = 1000;

/// History function on `[-1, 0]` sampled at `-1 + k/n`, `k = 0..=n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    n: usize,
    values: Vec<f64>,
}

impl Segment {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidInput(format!("grid resolution n = {n} must be >= 2")));
        }
        if values.len() != n + 1 {
            return Err(Error::InvalidInput(format!(
                "segment with n = {n} needs {} values, got {}",
                n + 1,
                values.len()
            )));
        }
        Ok(Self { n, values })
    }

    /// Samples `phi(s)` at the grid nodes `s = -1 + k/n`.
    pub fn from_fn(n: usize, phi: impl Fn(f64) -> f64) -> Result<Self> {
        let values = (0..=n).map(|k| phi(grid_time(k, n))).collect();
        Self::new(n, values)
    }

    pub fn zero(n: usize) -> Result<Self> {
        Self::new(n, vec![0.0; n + 1])
    }

    pub fn constant(n: usize, level: f64) -> Result<Self> {
        Self::new(n, vec![level; n + 1])
    }

    /// `phi(s) = amplitude · (s + 1)`.
    pub fn ramp(n: usize, amplitude: f64) -> Result<Self> {
        Self::from_fn(n, |s| amplitude * (s + 1.0))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n).map(move |k| grid_time(k, self.n))
    }

    /// Value at `s = 0`.
    pub fn head(&self) -> f64 {
        self.values[self.n]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn sup_distance(&self, other: &Segment) -> f64 {
        assert_eq!(self.n, other.n, "segments on different grids");
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// `(1 - s)·self + s·other`.
    pub fn blend(&self, other: &Segment, s: f64) -> Segment {
        assert_eq!(self.n, other.n, "segments on different grids");
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (1.0 - s) * a + s * b)
            .collect();
        Segment { n: self.n, values }
    }

    pub fn map(&self, g: impl Fn(f64) -> f64) -> Segment {
        Segment {
            n: self.n,
            values: self.values.iter().map(|&v| g(v)).collect(),
        }
    }

    /// The first violated condition of cone membership, if any:
    /// `phi(-1) = 0`, nondecreasing, `sup |phi| <= bound`.
    pub fn cone_violation(&self, bound: f64) -> Option<String> {
        if self.values[0] != 0.0 {
            return Some(format!("phi(-1) = {} is not 0", self.values[0]));
        }
        if let Some(k) = self.values.windows(2).position(|w| w[1] < w[0]) {
            return Some(format!(
                "not nondecreasing at s = {} ({} > {})",
                grid_time(k + 1, self.n),
                self.values[k],
                self.values[k + 1]
            ));
        }
        let top = self.head();
        if top > bound {
            return Some(format!("sup norm {top} exceeds bound {bound}"));
        }
        None
    }

    pub fn in_cone(&self, bound: f64) -> bool {
        self.cone_violation(bound).is_none()
    }

    /// Projects a re-entry segment onto the cone: the left endpoint is
    /// snapped to 0 and dips are removed by a running maximum. Anything
    /// larger than `budget` is reported instead of repaired.
    pub fn normalize_to_cone(mut self, budget: f64, bound: f64) -> Result<Segment> {
        let left = self.values[0];
        if left.abs() > budget {
            return Err(Error::ConeReentry(format!(
                "left endpoint {left} exceeds snap tolerance {budget}"
            )));
        }
        self.values[0] = 0.0;
        let mut running = 0.0f64;
        for (k, v) in self.values.iter_mut().enumerate() {
            if *v < running {
                if running - *v > budget {
                    return Err(Error::ConeReentry(format!(
                        "monotonicity violated by {} at s = {}",
                        running - *v,
                        grid_time(k, self.n)
                    )));
                }
                *v = running;
            }
            running = *v;
        }
        if running > bound {
            if running - bound > budget {
                return Err(Error::ConeReentry(format!(
                    "sup norm {running} exceeds bound {bound}"
                )));
            }
            for v in self.values.iter_mut() {
                *v = v.min(bound);
            }
        }
        Ok(self)
    }

    /// `# segment v1`, `n <n>`, then one value per line.
    pub fn to_text(&self) -> String {
        let mut out = format!("# segment v1\nn {}\n", self.n);
        for &v in &self.values {
            let _ = writeln!(out, "{}", fmt_g17(v));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, l)) if l.trim() == "# segment v1" => {}
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    msg: "expected header `# segment v1`".to_string(),
                })
            }
        }
        let n = match lines.next() {
            Some((i, l)) => l
                .trim()
                .strip_prefix("n ")
                .and_then(|s| s.trim().parse::<usize>().ok())
                .ok_or(Error::Parse {
                    line: i + 1,
                    msg: format!("expected `n <int>`, got `{l}`"),
                })?,
            None => {
                return Err(Error::Parse {
                    line: 2,
                    msg: "missing `n` line".to_string(),
                })
            }
        };
        let values = lines
            .map(|(i, l)| {
                l.trim().parse::<f64>().map_err(|_| Error::Parse {
                    line: i + 1,
                    msg: format!("malformed number `{}`", l.trim()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(n, values)
    }
}

#[inline]
pub(crate) fn grid_time(k: usize, n: usize) -> f64 {
    k as f64 / n as f64 - 1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Positive to negative.
    Falling,
    /// Negative to positive.
    Rising,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Falling => "falling",
            Direction::Rising => "rising",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Zero {
    pub t: f64,
    pub direction: Direction,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Diagnostic {
    /// Consecutive zeros closer than `1 - h`.
    SlowOscViolation { index: usize, gap: f64 },
}

/// A computed solution on `[-1, T]` with its positive zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct SolutionTrace {
    n: usize,
    samples: Vec<f64>,
    zeros: Vec<Zero>,
    diagnostics: Vec<Diagnostic>,
}

impl SolutionTrace {
    /// Wraps samples `x(-1 + k/n)` and locates their zeros.
    pub fn from_samples(n: usize, samples: Vec<f64>) -> Result<Self> {
        if n < 2 || samples.len() < n + 1 {
            return Err(Error::InvalidInput(format!(
                "trace needs n >= 2 and at least n + 1 samples (n = {n}, {} samples)",
                samples.len()
            )));
        }
        let mut trace = Self {
            n,
            samples,
            zeros: Vec::new(),
            diagnostics: Vec::new(),
        };
        let (zeros, diagnostics) = trace.find_zeros();
        trace.zeros = zeros;
        trace.diagnostics = diagnostics;
        Ok(trace)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn time(&self, k: usize) -> f64 {
        grid_time(k, self.n)
    }

    pub fn end_time(&self) -> f64 {
        self.time(self.samples.len() - 1)
    }

    pub fn zeros(&self) -> &[Zero] {
        &self.zeros
    }

    /// Number of positive zeros, `J`.
    pub fn zero_count(&self) -> usize {
        self.zeros.len()
    }

    pub fn diagnostics(&self) -> &[Diagnostic] {
        &self.diagnostics
    }

    pub fn initial_segment(&self) -> Segment {
        Segment {
            n: self.n,
            values: self.samples[..=self.n].to_vec(),
        }
    }

    /// Linear interpolation of the samples at time `t`.
    pub fn value_at(&self, t: f64) -> f64 {
        self.interpolate((t + 1.0) * self.n as f64)
    }

    fn interpolate(&self, pos: f64) -> f64 {
        let last = self.samples.len() - 1;
        let k = (pos.floor().max(0.0) as usize).min(last - 1);
        let theta = pos - k as f64;
        if theta == 0.0 {
            return self.samples[k];
        }
        self.samples[k] * (1.0 - theta) + self.samples[k + 1] * theta
    }

    /// `(t, x(t))` for every grid node.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.samples.iter().enumerate().map(|(k, &x)| (self.time(k), x))
    }

    /// Positive zeros refined by linear interpolation between grid nodes.
    ///
    /// Grid nodes that are exactly zero count as a zero only when the
    /// neighbouring nonzero samples have opposite signs.
    pub fn find_zeros(&self) -> (Vec<Zero>, Vec<Diagnostic>) {
        self.level_crossings(0.0, 0.0)
            .into_iter()
            .fold((Vec::new(), Vec::new()), |(mut zs, mut diags), z| {
                if let Some(prev) = zs.last().map(|p: &Zero| p.t) {
                    let gap = z.t - prev;
                    if gap <= 1.0 - self.h() {
                        diags.push(Diagnostic::SlowOscViolation {
                            index: zs.len(),
                            gap,
                        });
                    }
                }
                zs.push(z);
                (zs, diags)
            })
    }

    /// Crossings of `x = level` at times strictly after `after` (which must be >= -1).
    pub fn level_crossings(&self, level: f64, after: f64) -> Vec<Zero> {
        let n = self.n as f64;
        let start = (((after + 1.0) * n).floor().max(0.0)) as usize;
        let mut out = Vec::new();
        let mut last: Option<(usize, f64)> = None;
        for k in start..self.samples.len() {
            let d = self.samples[k] - level;
            if d == 0.0 {
                continue;
            }
            if let Some((i, di)) = last {
                if (di > 0.0) != (d > 0.0) {
                    let t = if k == i + 1 {
                        self.time(i) + (di / (di - d)) / n
                    } else {
                        self.time(i + 1)
                    };
                    if t > after {
                        out.push(Zero {
                            t,
                            direction: if di > 0.0 {
                                Direction::Falling
                            } else {
                                Direction::Rising
                            },
                        });
                    }
                }
            }
            last = Some((k, d));
        }
        out
    }

    /// The segment `x_t` on `[t - 1, t]`, interpolated onto the trace grid.
    pub fn segment_at(&self, t: f64) -> Result<Segment> {
        if !(t >= 0.0) || t > self.end_time() + 1e-12 {
            return Err(Error::InvalidInput(format!(
                "segment time {t} outside [0, {}]",
                self.end_time()
            )));
        }
        let base = t * self.n as f64;
        let values = (0..=self.n)
            .map(|j| self.interpolate(base + j as f64))
            .collect();
        Ok(Segment { n: self.n, values })
    }

    /// `max |x|` over `[t0, t1]` (grid nodes plus the interpolated ends).
    pub fn max_abs_between(&self, t0: f64, t1: f64) -> f64 {
        let n = self.n as f64;
        let k0 = ((t0 + 1.0) * n).ceil().max(0.0) as usize;
        let k1 = (((t1 + 1.0) * n).floor() as usize).min(self.samples.len() - 1);
        let ends = self.value_at(t0).abs().max(self.value_at(t1).abs());
        if k0 > k1 {
            return ends;
        }
        self.samples[k0..=k1].iter().fold(ends, |m, v| m.max(v.abs()))
    }
}

/// Integrates from the history `phi` up to time `t_end` (rounded up to the grid).
pub fn integrate(f: &FeedbackFn, phi: &Segment, t_end: f64) -> SolutionTrace {
    let n = phi.n;
    let h = 1.0 / n as f64;
    let steps = (t_end.max(0.0) * n as f64 - 1e-9).ceil().max(0.0) as usize;
    let total = n + steps + 1;
    let mut x = Vec::with_capacity(total);
    x.extend_from_slice(&phi.values);
    let mut fx: Vec<f64> = Vec::with_capacity(total);
    fx.extend(phi.values.iter().map(|&v| f.eval(v)));
    for k in n..n + steps {
        let next = x[k] + 0.5 * h * (fx[k - n] + fx[k + 1 - n]);
        x.push(next);
        fx.push(f.eval(next));
    }
    SolutionTrace::from_samples(n, x).expect("grid invariants hold by construction")
}
