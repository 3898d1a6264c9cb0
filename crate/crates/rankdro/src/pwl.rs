//! Piecewise-linear curves and distortion approximation.
//!
//! Two representations. [`PlCurve`] is a general piecewise-linear function on
//! [0, x_end] given by knots; it may be non-monotone (the full-range bounding
//! variants need a short negative-slope connector). [`PlDistortion`] is the
//! concave object used by the linear reformulations: slopes strictly
//! decreasing, intercepts nondecreasing, h(p) = min_j (l_j p + b_j) on its
//! domain, with piece j active exactly on [x_{j-1}, x_j].

use crate::measures::{Distortion, Shape};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

const SLOPE_MERGE_TOL: f64 = 1e-12;

// ---------------------------------------------------------------------------
// general piecewise-linear curve

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlCurve {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct CurvePiece {
    pub lo: f64,
    pub hi: f64,
    pub slope: f64,
    pub intercept: f64,
}

impl PlCurve {
    /// Knot interpolant; xs strictly increasing, starting at 0.
    pub fn from_knots(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(Error::Invalid("curve needs >= 2 matching knots".into()));
        }
        if xs[0] != 0.0 {
            return Err(Error::Invalid(format!("curve must start at x=0, got {}", xs[0])));
        }
        for w in xs.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Invalid("curve knots must strictly increase in x".into()));
            }
        }
        if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("curve knots must be finite".into()));
        }
        Ok(PlCurve { xs, ys })
    }

    /// Sample a distortion at n+1 uniform grid knots.
    pub fn sample_distortion(h: &Distortion, n: usize) -> Self {
        assert!(n >= 1);
        let xs: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| h.eval(x)).collect();
        PlCurve { xs, ys }
    }

    pub fn x_end(&self) -> f64 {
        *self.xs.last().unwrap()
    }

    pub fn y_end(&self) -> f64 {
        *self.ys.last().unwrap()
    }

    pub fn n_pieces(&self) -> usize {
        self.xs.len() - 1
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.ys.iter().copied())
    }

    pub fn knot_xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn knot_ys(&self) -> &[f64] {
        &self.ys
    }

    /// Linear interpolation; clamped to the knot range.
    pub fn eval(&self, p: f64) -> f64 {
        let k = self.xs.len();
        if p <= self.xs[0] {
            return self.ys[0];
        }
        if p >= self.xs[k - 1] {
            return self.ys[k - 1];
        }
        let j = self.xs.partition_point(|&v| v <= p).clamp(1, k - 1);
        let (x0, x1) = (self.xs[j - 1], self.xs[j]);
        let (y0, y1) = (self.ys[j - 1], self.ys[j]);
        y0 + (y1 - y0) * (p - x0) / (x1 - x0)
    }

    /// Slope of the piece containing p (right-biased at knots).
    pub fn slope_at(&self, p: f64) -> f64 {
        let k = self.xs.len();
        let j = self.xs.partition_point(|&v| v <= p).clamp(1, k - 1);
        (self.ys[j] - self.ys[j - 1]) / (self.xs[j] - self.xs[j - 1])
    }

    pub fn slopes(&self) -> Vec<f64> {
        (1..self.xs.len())
            .map(|j| (self.ys[j] - self.ys[j - 1]) / (self.xs[j] - self.xs[j - 1]))
            .collect()
    }

    pub fn pieces(&self) -> Vec<CurvePiece> {
        (1..self.xs.len())
            .map(|j| {
                let slope = (self.ys[j] - self.ys[j - 1]) / (self.xs[j] - self.xs[j - 1]);
                CurvePiece {
                    lo: self.xs[j - 1],
                    hi: self.xs[j],
                    slope,
                    intercept: self.ys[j - 1] - slope * self.xs[j - 1],
                }
            })
            .collect()
    }

    /// Valid full-range distortion: domain [0,1], endpoints 0 and 1, monotone.
    pub fn validate_distortion(&self) -> Result<()> {
        if (self.x_end() - 1.0).abs() > 1e-12 {
            return Err(Error::Invalid("distortion curve must end at x=1".into()));
        }
        if self.ys[0].abs() > 1e-12 || (self.y_end() - 1.0).abs() > 1e-12 {
            return Err(Error::Invalid("distortion curve must run from 0 to 1".into()));
        }
        for w in self.ys.windows(2) {
            if w[1] < w[0] - 1e-12 {
                return Err(Error::Invalid("distortion curve must be nondecreasing".into()));
            }
        }
        Ok(())
    }

    /// The reflected curve p -> 1 - f(1 - p); exact involution.
    pub fn flip_dual(&self) -> PlCurve {
        let end = self.x_end();
        let xs: Vec<f64> = self.xs.iter().rev().map(|&x| end - x).collect();
        let yend = self.y_end();
        let ys: Vec<f64> = self.ys.iter().rev().map(|&y| yend - y).collect();
        PlCurve { xs, ys }
    }

    /// Shape from slope monotonicity. Curves that are neither concave nor
    /// convex report InverseS with the switch at the end of the minimal-slope
    /// piece; [`split_inverse_s`] re-verifies the prefix/suffix pattern.
    pub fn classify(&self) -> Shape {
        let s = self.slopes();
        let concave = s.windows(2).all(|w| w[1] <= w[0] + SLOPE_MERGE_TOL);
        if concave {
            return Shape::Concave;
        }
        let convex = s.windows(2).all(|w| w[1] >= w[0] - SLOPE_MERGE_TOL);
        if convex {
            return Shape::Convex;
        }
        let mut vmin = 0;
        for (j, &sj) in s.iter().enumerate() {
            if sj < s[vmin] {
                vmin = j;
            }
        }
        Shape::InverseS { p0: self.xs[vmin + 1] }
    }

    /// Restrict to [0, cut] (cut must be reachable; a knot is inserted if
    /// needed) producing a curve on [0, cut].
    pub fn head(&self, cut: f64) -> Result<PlCurve> {
        if !(cut > 0.0 && cut <= self.x_end() + 1e-15) {
            return Err(Error::Invalid(format!("cut {cut} outside curve domain")));
        }
        let mut xs = vec![];
        let mut ys = vec![];
        for (x, y) in self.knots() {
            if x < cut - 1e-15 {
                xs.push(x);
                ys.push(y);
            }
        }
        xs.push(cut.min(self.x_end()));
        ys.push(self.eval(cut));
        PlCurve::from_knots(xs, ys)
    }

    /// Restrict to [cut, end], re-anchored to start at 0: the returned curve
    /// is g(s) = f(cut + s) on [0, end - cut].
    pub fn tail_from(&self, cut: f64) -> Result<PlCurve> {
        if !(cut >= 0.0 && cut < self.x_end()) {
            return Err(Error::Invalid(format!("cut {cut} outside curve domain")));
        }
        let mut xs = vec![0.0];
        let mut ys = vec![self.eval(cut)];
        for (x, y) in self.knots() {
            if x > cut + 1e-15 {
                xs.push(x - cut);
                ys.push(y);
            }
        }
        PlCurve::from_knots(xs, ys)
    }
}

// ---------------------------------------------------------------------------
// concave piecewise-linear distortion (min-form)

/// Concave piecewise-linear function on [0, x_K]: strictly decreasing slopes,
/// nondecreasing intercepts, h(p) = min_j (l_j p + b_j), piece j active on
/// [x_{j-1}, x_j]. `jump_at_zero` is 0 for plain objects; the shifted upper
/// approximation stores its vertical shift there and evaluates to 0 at p = 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlDistortion {
    slopes: Vec<f64>,
    intercepts: Vec<f64>,
    breakpoints: Vec<f64>, // K+1 points, breakpoints[0] = 0
    jump_at_zero: f64,
}

impl PlDistortion {
    /// Build from knots of a concave nondecreasing function with f(0) = 0.
    /// Near-duplicate slopes (within 1e-12) are merged.
    pub fn from_knots(xs: &[f64], ys: &[f64]) -> Result<Self> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(Error::Invalid("need >= 2 matching knots".into()));
        }
        if xs[0] != 0.0 || ys[0].abs() > 1e-12 {
            return Err(Error::Invalid("first knot must be (0, 0)".into()));
        }
        for w in xs.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Invalid("knots must strictly increase in x".into()));
            }
        }
        // merge segments whose slopes agree within tolerance
        let mut kx = vec![0.0f64];
        let mut ky = vec![0.0f64];
        let mut prev_slope = f64::INFINITY;
        for j in 1..xs.len() {
            let slope = (ys[j] - ky.last().unwrap()) / (xs[j] - kx.last().unwrap());
            if slope > prev_slope + SLOPE_MERGE_TOL {
                return Err(Error::Invalid(format!(
                    "knots are not concave: slope rises from {prev_slope} to {slope} at x={}",
                    xs[j]
                )));
            }
            if ys[j] < ky.last().unwrap() - 1e-12 {
                return Err(Error::Invalid("knot values must be nondecreasing".into()));
            }
            if (slope - prev_slope).abs() <= SLOPE_MERGE_TOL && kx.len() >= 2 {
                // extend the previous piece instead of starting a new one
                let n = kx.len();
                kx[n - 1] = xs[j];
                ky[n - 1] = ys[j];
                let m = kx.len();
                prev_slope = (ky[m - 1] - ky[m - 2]) / (kx[m - 1] - kx[m - 2]);
            } else {
                kx.push(xs[j]);
                ky.push(ys[j]);
                prev_slope = slope;
            }
        }
        let mut slopes = vec![];
        let mut intercepts = vec![];
        for j in 1..kx.len() {
            let l = (ky[j] - ky[j - 1]) / (kx[j] - kx[j - 1]);
            slopes.push(l);
            intercepts.push(ky[j - 1] - l * kx[j - 1]);
        }
        Ok(PlDistortion { slopes, intercepts, breakpoints: kx, jump_at_zero: 0.0 })
    }

    pub fn k(&self) -> usize {
        self.slopes.len()
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn intercepts(&self) -> &[f64] {
        &self.intercepts
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn x_end(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    pub fn value_end(&self) -> f64 {
        self.eval(self.x_end())
    }

    pub fn jump_at_zero(&self) -> f64 {
        self.jump_at_zero
    }

    /// min over pieces; 0 at p <= 0; clamped to the domain on the right.
    pub fn eval(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return 0.0;
        }
        let p = p.min(self.x_end());
        self.slopes
            .iter()
            .zip(&self.intercepts)
            .map(|(l, b)| l * p + b)
            .fold(f64::INFINITY, f64::min)
    }

    /// Piece lookup by breakpoint interval (must agree with the min-form).
    pub fn eval_by_segment(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return 0.0;
        }
        let p = p.min(self.x_end());
        let j = self
            .breakpoints
            .partition_point(|&x| x < p)
            .clamp(1, self.breakpoints.len() - 1)
            - 1;
        self.slopes[j] * p + self.intercepts[j]
    }

    /// Slope of the active piece, right-biased at breakpoints; a valid
    /// supergradient everywhere since the min-form is concave.
    pub fn slope_at(&self, p: f64) -> f64 {
        if p < self.breakpoints[1] {
            return self.slopes[0];
        }
        if p >= self.x_end() {
            return *self.slopes.last().unwrap();
        }
        let j = self
            .breakpoints
            .partition_point(|&x| x <= p)
            .clamp(1, self.breakpoints.len() - 1)
            - 1;
        self.slopes[j.min(self.slopes.len() - 1)]
    }

    pub fn knots(&self) -> Vec<(f64, f64)> {
        let mut out = vec![(0.0, self.jump_at_zero)];
        for j in 0..self.slopes.len() {
            let x = self.breakpoints[j + 1];
            out.push((x, self.slopes[j] * x + self.intercepts[j]));
        }
        out
    }

    pub fn to_curve(&self) -> PlCurve {
        let kn = self.knots();
        let mut xs: Vec<f64> = kn.iter().map(|k| k.0).collect();
        let mut ys: Vec<f64> = kn.iter().map(|k| k.1).collect();
        // a shifted object jumps at 0; represent the jump with a steep riser
        if self.jump_at_zero > 0.0 {
            let riser = (self.breakpoints[1] * 1e-9).max(1e-15);
            xs.insert(0, 0.0);
            ys.insert(0, 0.0);
            xs[1] = riser;
        }
        PlCurve::from_knots(xs, ys).expect("distortion knots form a curve")
    }

    /// The shifted upper approximation min(h + eps, 1) with value 0 at p = 0.
    /// Stays concave; a flat cap piece is appended where h + eps crosses 1.
    pub fn upper_shift(&self, eps: f64) -> Result<PlDistortion> {
        if eps < 0.0 {
            return Err(Error::Invalid("shift must be >= 0".into()));
        }
        if eps == 0.0 {
            return Ok(self.clone());
        }
        let cap = 1.0f64;
        let mut slopes = vec![];
        let mut intercepts = vec![];
        let mut breaks = vec![0.0f64];
        for j in 0..self.slopes.len() {
            let (l, b) = (self.slopes[j], self.intercepts[j] + eps);
            let x_lo = self.breakpoints[j];
            let x_hi = self.breakpoints[j + 1];
            let v_lo = l * x_lo + b;
            if v_lo >= cap - 1e-15 {
                break; // everything from here is capped
            }
            let v_hi = l * x_hi + b;
            if v_hi <= cap {
                slopes.push(l);
                intercepts.push(b);
                breaks.push(x_hi);
            } else {
                let x_cross = (cap - b) / l;
                slopes.push(l);
                intercepts.push(b);
                breaks.push(x_cross);
                break;
            }
        }
        if *breaks.last().unwrap() < self.x_end() - 1e-15 {
            slopes.push(0.0);
            intercepts.push(cap);
            breaks.push(self.x_end());
        }
        Ok(PlDistortion { slopes, intercepts, breakpoints: breaks, jump_at_zero: eps })
    }
}

// ---------------------------------------------------------------------------
// greedy lower approximation

/// Max of f - chord on [a, b] by golden section (f concave makes the
/// difference concave, hence unimodal).
fn chord_error(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let chord = |t: f64| fa + (fb - fa) * (t - a) / (b - a);
    let g = |t: f64| f(t) - chord(t);
    let golden = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (a, b);
    for _ in 0..90 {
        let u = hi - golden * (hi - lo);
        let v = lo + golden * (hi - lo);
        if g(u) < g(v) {
            lo = u;
        } else {
            hi = v;
        }
    }
    g(0.5 * (lo + hi)).max(0.0)
}

/// Greedy chord placement on a concave increasing f over [0, end]: each piece
/// extends until its chord error reaches eps (bisected to |e - eps| <= 1e-8),
/// except the last piece which may end early at `end`.
fn greedy_knots(f: &dyn Fn(f64) -> f64, end: f64, eps: f64) -> Result<Vec<f64>> {
    if !(eps > 0.0) {
        return Err(Error::Invalid("approximation error must be > 0".into()));
    }
    let mut xs = vec![0.0f64];
    let mut x = 0.0f64;
    let cap = 100_000;
    while x < end {
        if chord_error(f, x, end) <= eps {
            xs.push(end);
            break;
        }
        let (mut lo, mut hi) = (x, end);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if chord_error(f, x, mid) > eps {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let next = 0.5 * (lo + hi);
        if next <= x + 1e-13 {
            return Err(Error::NotConverged(
                "piece construction stalled; eps too small for this curve".into(),
            ));
        }
        xs.push(next);
        x = next;
        if xs.len() > cap {
            return Err(Error::CapExceeded("too many pieces".into()));
        }
    }
    Ok(xs)
}

/// Exact piecewise-linear pieces for catalog families that are already
/// piecewise-linear (identity, cvar, absolute-deviation, pl curves).
fn exact_pl_knots(h: &Distortion) -> Option<(Vec<f64>, Vec<f64>)> {
    match h {
        Distortion::Identity => Some((vec![0.0, 1.0], vec![0.0, 1.0])),
        Distortion::Cvar { alpha } => {
            if *alpha == 0.0 {
                Some((vec![0.0, 1.0], vec![0.0, 1.0]))
            } else {
                Some((vec![0.0, 1.0 - alpha, 1.0], vec![0.0, 1.0, 1.0]))
            }
        }
        Distortion::AbsoluteDeviation { r } => {
            Some((vec![0.0, 0.5, 1.0], vec![0.0, (1.0 + r) / 2.0, 1.0]))
        }
        Distortion::Pl { curve } => Some((curve.knot_xs().to_vec(), curve.knot_ys().to_vec())),
        _ => None,
    }
}

/// Greedy-minimal lower piecewise-linear approximation of a concave
/// distortion (or concave segment of one when `end < 1`): interpolates h at
/// the knots, so h_eps <= h with sup error <= eps. Already-piecewise-linear
/// input is reproduced exactly.
pub fn lower_pl_approx(h: &Distortion, eps: f64) -> Result<PlDistortion> {
    if !h.is_concave() {
        return Err(Error::Invalid(
            "lower approximation requires a concave distortion".into(),
        ));
    }
    if let Some((xs, ys)) = exact_pl_knots(h) {
        return PlDistortion::from_knots(&xs, &ys);
    }
    let f = |p: f64| h.eval(p);
    let xs = greedy_knots(&f, 1.0, eps)?;
    let ys: Vec<f64> = xs.iter().map(|&p| h.eval(p)).collect();
    PlDistortion::from_knots(&xs, &ys)
}

/// Same construction for an arbitrary concave increasing segment f on
/// [0, end] with f(0) = 0.
pub fn lower_pl_approx_fn(
    f: &dyn Fn(f64) -> f64,
    end: f64,
    eps: f64,
) -> Result<PlDistortion> {
    let xs = greedy_knots(f, end, eps)?;
    let ys: Vec<f64> = xs.iter().map(|&p| f(p)).collect();
    PlDistortion::from_knots(&xs, &ys)
}

/// Shifted upper approximation of the distortion underlying `h_eps`.
pub fn upper_pl_shift(h_eps: &PlDistortion, eps: f64) -> Result<PlDistortion> {
    h_eps.upper_shift(eps)
}

/// Sup-norm difference of two curves over a dense grid plus both knot sets.
pub fn max_error(
    f: &dyn Fn(f64) -> f64,
    g: &dyn Fn(f64) -> f64,
    end: f64,
    extra_points: &[f64],
) -> f64 {
    let n = 10_000;
    let mut worst = 0.0f64;
    for k in 0..=n {
        let p = end * k as f64 / n as f64;
        worst = worst.max((f(p) - g(p)).abs());
    }
    for &p in extra_points {
        if (0.0..=end).contains(&p) {
            worst = worst.max((f(p) - g(p)).abs());
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// inverse-S splitting

/// Split of an inverse-S distortion at its switch point: a concave lower
/// approximation of h on [0, p0] and a concave lower approximation of the
/// reflected tail hbar(s) = 1 - h(1 - s) on [0, 1 - p0].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InverseSSplit {
    pub p0: f64,
    pub concave_part: PlDistortion,
    pub dual_convex_part: PlDistortion,
    pub eps: f64,
}

pub fn split_inverse_s(h: &Distortion, eps: f64) -> Result<InverseSSplit> {
    let p0 = match h.shape() {
        Shape::InverseS { p0 } => p0,
        Shape::Concave => {
            // degenerate split: everything is the concave part
            let concave_part = lower_pl_approx(h, eps)?;
            let dual_convex_part =
                PlDistortion::from_knots(&[0.0, 1e-12], &[0.0, 0.0]).expect("trivial part");
            return Ok(InverseSSplit { p0: 1.0, concave_part, dual_convex_part, eps });
        }
        Shape::Convex => {
            let hbar = h.dual();
            let dual_convex_part = lower_pl_approx(&hbar, eps)?;
            let concave_part =
                PlDistortion::from_knots(&[0.0, 1e-12], &[0.0, 0.0]).expect("trivial part");
            return Ok(InverseSSplit { p0: 0.0, concave_part, dual_convex_part, eps });
        }
    };
    // exact split for piecewise-linear input
    if let Distortion::Pl { curve } = h {
        let head = curve.head(p0)?;
        let tail_dual = curve.flip_dual().head(1.0 - p0)?;
        let concave_part = PlDistortion::from_knots(head.knot_xs(), head.knot_ys())?;
        let dual_convex_part =
            PlDistortion::from_knots(tail_dual.knot_xs(), tail_dual.knot_ys())?;
        return Ok(InverseSSplit { p0, concave_part, dual_convex_part, eps: 0.0 });
    }
    let f_head = |p: f64| h.eval(p);
    let concave_part = lower_pl_approx_fn(&f_head, p0, eps)?;
    let f_tail = |s: f64| 1.0 - h.eval(1.0 - s);
    let dual_convex_part = lower_pl_approx_fn(&f_tail, 1.0 - p0, eps)?;
    Ok(InverseSSplit { p0, concave_part, dual_convex_part, eps })
}

impl InverseSSplit {
    pub fn total_pieces(&self) -> usize {
        // trivial placeholder parts (degenerate splits) carry no real piece
        let kc = if self.concave_part.x_end() > 1e-9 { self.concave_part.k() } else { 0 };
        let kd = if self.dual_convex_part.x_end() > 1e-9 { self.dual_convex_part.k() } else { 0 };
        kc + kd
    }

    fn mapped_tail_knots(&self) -> Vec<(f64, f64)> {
        // knots of p -> 1 - hbar_l(1 - p) on [p0, 1], ascending in p
        self.dual_convex_part
            .knots()
            .into_iter()
            .rev()
            .map(|(s, v)| (1.0 - s, 1.0 - v))
            .collect()
    }

    /// The spliced curve: concave part on [0, p0], reflected dual part on
    /// [p0, 1]. Below h on the concave side, above h on the convex side;
    /// within eps of h everywhere. Continuous (both parts interpolate h(p0)).
    pub fn reconstruct(&self) -> Result<PlCurve> {
        if self.p0 <= 0.0 {
            let mut xs = vec![0.0];
            let mut ys = vec![0.0];
            for (x, y) in self.mapped_tail_knots() {
                if x > 1e-15 {
                    xs.push(x);
                    ys.push(y);
                }
            }
            return PlCurve::from_knots(xs, ys);
        }
        let mut xs = vec![];
        let mut ys = vec![];
        for (x, y) in self.concave_part.knots() {
            xs.push(x);
            ys.push(y);
        }
        if self.p0 < 1.0 {
            for (x, y) in self.mapped_tail_knots() {
                if x > self.p0 + 1e-15 {
                    xs.push(x);
                    ys.push(y);
                }
            }
        }
        PlCurve::from_knots(xs, ys)
    }

    /// Full-range upper bound: concave part translated up by eps (capped at
    /// 1), spliced to the reflected dual part, which already dominates h. The
    /// eps step down at p0 is carried by a steep connector piece of width
    /// ~1e-9; domination survives because h is nondecreasing.
    pub fn full_range_upper(&self) -> Result<PlCurve> {
        if self.eps == 0.0 {
            return self.reconstruct();
        }
        if self.p0 >= 1.0 {
            let shifted = self.concave_part.upper_shift(self.eps)?;
            return Ok(shifted.to_curve());
        }
        if self.p0 <= 0.0 {
            return self.reconstruct(); // convex side already dominates
        }
        let shifted_head = self.concave_part.upper_shift(self.eps)?;
        let mut xs = vec![];
        let mut ys = vec![];
        for (x, y) in shifted_head.knots() {
            xs.push(x);
            ys.push(y);
        }
        let tail = self.mapped_tail_knots();
        let delta = ((tail
            .iter()
            .map(|k| k.0)
            .find(|&x| x > self.p0 + 1e-15)
            .unwrap_or(1.0)
            - self.p0)
            / 2.0)
            .min(1e-9);
        let rec = self.reconstruct()?;
        xs.push(self.p0 + delta);
        ys.push(rec.eval(self.p0 + delta));
        for (x, y) in tail {
            if x > self.p0 + delta + 1e-15 {
                xs.push(x);
                ys.push(y);
            }
        }
        PlCurve::from_knots(xs, ys)
    }

    /// Full-range lower bound: concave part as-is, reflected dual part
    /// translated down by eps (clamped at 0), with the same steep connector.
    pub fn full_range_lower(&self) -> Result<PlCurve> {
        if self.eps == 0.0 {
            return self.reconstruct();
        }
        if self.p0 >= 1.0 {
            return self.reconstruct(); // concave side is already a lower bound
        }
        let tail: Vec<(f64, f64)> = self
            .mapped_tail_knots()
            .into_iter()
            .map(|(x, y)| (x, (y - self.eps).max(0.0)))
            .collect();
        if self.p0 <= 0.0 {
            let mut xs = vec![0.0];
            let mut ys = vec![0.0];
            for (x, y) in tail {
                if x > 1e-15 {
                    xs.push(x);
                    ys.push(y);
                }
            }
            return PlCurve::from_knots(xs, ys);
        }
        let mut xs = vec![];
        let mut ys = vec![];
        for (x, y) in self.concave_part.knots() {
            xs.push(x);
            ys.push(y);
        }
        let delta = ((tail
            .iter()
            .map(|k| k.0)
            .find(|&x| x > self.p0 + 1e-15)
            .unwrap_or(1.0)
            - self.p0)
            / 2.0)
            .min(1e-9);
        let rec = self.reconstruct()?;
        xs.push(self.p0 + delta);
        ys.push((rec.eval(self.p0 + delta) - self.eps).max(0.0));
        for (x, y) in tail {
            if x > self.p0 + delta + 1e-15 {
                xs.push(x);
                ys.push(y);
            }
        }
        PlCurve::from_knots(xs, ys)
    }
}

// ---------------------------------------------------------------------------
// concave envelope

/// Least concave majorant of a piecewise-linear curve: the upper convex hull
/// of its knots, returned as a concave distortion object.
pub fn concave_envelope(curve: &PlCurve) -> Result<PlDistortion> {
    let kn: Vec<(f64, f64)> = curve.knots().collect();
    // Andrew monotone chain, upper hull
    let mut hull: Vec<(f64, f64)> = vec![];
    for &(x, y) in &kn {
        while hull.len() >= 2 {
            let (x1, y1) = hull[hull.len() - 2];
            let (x2, y2) = hull[hull.len() - 1];
            // keep the chain concave: middle point must lie above the chord
            let cross = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1);
            if cross >= -1e-15 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push((x, y));
    }
    let xs: Vec<f64> = hull.iter().map(|k| k.0).collect();
    let ys: Vec<f64> = hull.iter().map(|k| k.1).collect();
    PlDistortion::from_knots(&xs, &ys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::Distortion as D;

    #[test]
    fn curve_eval_and_slopes() {
        let c = PlCurve::from_knots(vec![0.0, 0.5, 1.0], vec![0.0, 0.75, 1.0]).unwrap();
        assert!((c.eval(0.25) - 0.375).abs() < 1e-15);
        assert!((c.eval(0.75) - 0.875).abs() < 1e-15);
        assert_eq!(c.slopes(), vec![1.5, 0.5]);
        assert_eq!(c.classify(), Shape::Concave);
        c.validate_distortion().unwrap();
        let d = c.flip_dual();
        assert_eq!(d.classify(), Shape::Convex);
        assert_eq!(d.flip_dual(), c);
    }

    #[test]
    fn curve_classify_inverse_s() {
        let c = PlCurve::from_knots(
            vec![0.0, 0.3, 0.6, 1.0],
            vec![0.0, 0.5, 0.6, 1.0],
        )
        .unwrap();
        match c.classify() {
            Shape::InverseS { p0 } => assert!((p0 - 0.6).abs() < 1e-15),
            s => panic!("{s:?}"),
        }
    }

    #[test]
    fn min_form_matches_segment_lookup() {
        let h = lower_pl_approx(&D::DualMoments { n: 2.0 }, 0.01).unwrap();
        for k in 0..=1000 {
            let p = k as f64 / 1000.0;
            assert!(
                (h.eval(p) - h.eval_by_segment(p)).abs() < 1e-12,
                "min form vs segment at {p}"
            );
        }
        // continuity at knots
        for &(x, y) in h.knots().iter() {
            if x > 0.0 {
                assert!((h.eval(x) - y).abs() < 1e-10);
            }
        }
        // canonical ordering
        for w in h.slopes().windows(2) {
            assert!(w[1] < w[0] - SLOPE_MERGE_TOL);
        }
        for w in h.intercepts().windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
        assert!(h.intercepts()[0].abs() < 1e-12, "b1 = 0");
        // full-range distortion: l_K + b_K = 1
        let kk = h.k() - 1;
        assert!((h.slopes()[kk] + h.intercepts()[kk] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn greedy_is_lower_with_error_eps() {
        for (h, eps) in [
            (D::DualMoments { n: 2.0 }, 0.003),
            (D::ProportionalHazard { r: 0.5 }, 0.01),
            (D::Gini { r: 0.7 }, 0.005),
        ] {
            let lo = lower_pl_approx(&h, eps).unwrap();
            let mut worst = 0.0f64;
            for k in 0..=10_000 {
                let p = k as f64 / 10_000.0;
                let gap = h.eval(p) - lo.eval(p);
                assert!(gap >= -1e-10, "{h:?}: approximation above h at {p}");
                worst = worst.max(gap);
            }
            assert!(worst <= eps + 1e-8, "{h:?}: error {worst} > {eps}");
            // interior pieces sit exactly at error eps
            let bps = lo.breakpoints().to_vec();
            for j in 0..lo.k().saturating_sub(1) {
                let f = |p: f64| h.eval(p);
                let e = chord_error(&f, bps[j], bps[j + 1]);
                assert!(
                    (e - eps).abs() <= 1e-8,
                    "{h:?} piece {j}: chord error {e} vs eps {eps}"
                );
            }
        }
    }

    #[test]
    fn exact_recovery_of_pl_families() {
        let id = lower_pl_approx(&D::Identity, 0.01).unwrap();
        assert_eq!(id.k(), 1);
        let cv = lower_pl_approx(&D::Cvar { alpha: 0.4 }, 0.01).unwrap();
        assert_eq!(cv.k(), 2);
        for k in 0..=100 {
            let p = k as f64 / 100.0;
            assert!((cv.eval(p) - D::Cvar { alpha: 0.4 }.eval(p)).abs() < 1e-14);
        }
    }

    #[test]
    fn halving_eps_does_not_lose_knots() {
        let h = D::DualMoments { n: 2.0 };
        let mut eps = 0.02;
        let mut prev = 0;
        for _ in 0..5 {
            let k = lower_pl_approx(&h, eps).unwrap().k();
            assert!(k >= prev, "knot count dropped from {prev} to {k} at eps={eps}");
            prev = k;
            eps /= 2.0;
        }
    }

    #[test]
    fn upper_shift_dominates_and_stays_distortion() {
        let h = D::DualMoments { n: 2.0 };
        let eps = 0.003;
        let lo = lower_pl_approx(&h, eps).unwrap();
        let up = upper_pl_shift(&lo, eps).unwrap();
        assert_eq!(up.eval(0.0), 0.0);
        assert!((up.value_end() - 1.0).abs() < 1e-12);
        for k in 1..=10_000 {
            let p = k as f64 / 10_000.0;
            assert!(up.eval(p) >= h.eval(p) - 1e-10, "upper below h at {p}");
            assert!(up.eval(p) <= 1.0 + 1e-12);
        }
        // monotone and concave on (0, 1]
        for w in up.slopes().windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        assert!(up.slopes().iter().all(|&l| l >= 0.0));
        // eps = 0 leaves the object unchanged
        let same = upper_pl_shift(&lo, 0.0).unwrap();
        assert_eq!(same, lo);
    }

    #[test]
    fn split_prelec_piece_counts() {
        // stated counts for eps=0.003 are 19/13/6; the greedy equalizing
        // construction lands within one piece of each
        for (alpha, stated) in [(0.6, 19usize), (0.75, 13), (0.95, 6)] {
            let h = D::Prelec { alpha, p0_override: None };
            let split = split_inverse_s(&h, 0.003).unwrap();
            let got = split.total_pieces();
            assert!(
                (got as i64 - stated as i64).abs() <= 1,
                "alpha={alpha}: got {got} pieces, stated {stated}"
            );
            // reconstruction: below h left of p0, above h right of p0, within eps
            let rec = split.reconstruct().unwrap();
            let mut worst = 0.0f64;
            for k in 0..=10_000 {
                let p = k as f64 / 10_000.0;
                let (hv, rv) = (h.eval(p), rec.eval(p));
                worst = worst.max((hv - rv).abs());
                if p < split.p0 - 1e-9 {
                    assert!(rv <= hv + 1e-10, "alpha={alpha} p={p}: not below on concave side");
                } else if p > split.p0 + 1e-9 {
                    assert!(rv >= hv - 1e-10, "alpha={alpha} p={p}: not above on convex side");
                }
            }
            assert!(worst <= 0.003 + 1e-8, "alpha={alpha} sup error {worst}");
        }
    }

    #[test]
    fn split_full_range_variants_bound_h() {
        let h = D::Prelec { alpha: 0.6, p0_override: None };
        let split = split_inverse_s(&h, 0.003).unwrap();
        let up = split.full_range_upper().unwrap();
        let lo = split.full_range_lower().unwrap();
        for k in 0..=10_000 {
            let p = k as f64 / 10_000.0;
            if p > 0.0 {
                assert!(up.eval(p) >= h.eval(p) - 1e-10, "upper fails at {p}");
            }
            assert!(lo.eval(p) <= h.eval(p) + 1e-10, "lower fails at {p}");
        }
    }

    #[test]
    fn split_of_pl_curve_is_exact() {
        let c = PlCurve::from_knots(
            vec![0.0, 0.25, 0.5, 0.75, 1.0],
            vec![0.0, 0.4, 0.55, 0.65, 1.0],
        )
        .unwrap();
        assert!(matches!(c.classify(), Shape::InverseS { .. }));
        let h = D::Pl { curve: c.clone() };
        let split = split_inverse_s(&h, 0.003).unwrap();
        assert_eq!(split.eps, 0.0);
        let rec = split.reconstruct().unwrap();
        for k in 0..=1000 {
            let p = k as f64 / 1000.0;
            assert!((rec.eval(p) - c.eval(p)).abs() < 1e-12, "exact split differs at {p}");
        }
    }

    #[test]
    fn split_of_convex_distortion() {
        let h = D::Power { k: 2.0 };
        let split = split_inverse_s(&h, 0.001).unwrap();
        assert_eq!(split.p0, 0.0);
        let rec = split.reconstruct().unwrap();
        for k in 0..=1000 {
            let p = k as f64 / 1000.0;
            assert!(rec.eval(p) >= h.eval(p) - 1e-10);
            assert!((rec.eval(p) - h.eval(p)).abs() <= 0.001 + 1e-8);
        }
    }

    #[test]
    fn max_error_examples() {
        let h = D::Identity;
        assert_eq!(max_error(&|p| h.eval(p), &|p| h.eval(p), 1.0, &[]), 0.0);
        let two_piece =
            PlCurve::from_knots(vec![0.0, 0.5, 1.0], vec![0.0, 0.4, 1.0]).unwrap();
        let e = max_error(&|p| p, &|p| two_piece.eval(p), 1.0, &[0.5]);
        assert!((e - 0.1).abs() < 1e-12, "got {e}");
    }

    #[test]
    fn envelope_of_inverse_s_is_chord_where_convex_dominated() {
        // two-piece inverse-S whose convex part lies below the single chord
        let c = PlCurve::from_knots(vec![0.0, 0.5, 1.0], vec![0.0, 0.25, 1.0]).unwrap();
        let env = concave_envelope(&c).unwrap();
        assert_eq!(env.k(), 1, "envelope should be the single chord");
        for k in 0..=100 {
            let p = k as f64 / 100.0;
            assert!(env.eval(p) >= c.eval(p) - 1e-14);
        }
        // envelope of a concave curve is itself
        let cc = PlCurve::from_knots(vec![0.0, 0.5, 1.0], vec![0.0, 0.75, 1.0]).unwrap();
        let env2 = concave_envelope(&cc).unwrap();
        for k in 0..=100 {
            let p = k as f64 / 100.0;
            assert!((env2.eval(p) - cc.eval(p)).abs() < 1e-14);
        }
    }

    #[test]
    fn quadratic_lower_approx_example() {
        // h(p) = 1-(1-p)^2 at eps = 0.003: audited lower bound
        let h = D::DualMoments { n: 2.0 };
        let lo = lower_pl_approx(&h, 0.003).unwrap();
        let worst = max_error(
            &|p| h.eval(p),
            &|p| lo.eval(p),
            1.0,
            &lo.breakpoints().to_vec(),
        );
        assert!(worst <= 0.003 + 1e-9);
        for k in 0..=10_000 {
            let p = k as f64 / 10_000.0;
            assert!(lo.eval(p) <= h.eval(p) + 1e-12);
        }
    }
}
