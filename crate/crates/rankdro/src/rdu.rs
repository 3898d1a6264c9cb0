//! Ranked evaluation of discrete positions and its worst case over
//! divergence balls.
//!
//! A position is a vector of m outcome values carrying a probability vector
//! q. Rank the utilities descending and weight the i-th ranked value by the
//! distorted tail-mass difference h(T_i) - h(T_{i+1}), where T_i is the
//! probability of landing at rank i or deeper; the evaluation is minus the
//! weighted sum. The identity distortion recovers minus expected utility,
//! and h(p) = min(p/(1-a), 1) recovers CVaR at level 1-a.
//!
//! The worst-case evaluator maximizes this quantity over a divergence ball
//! around the nominal vector. Rewriting the ranked sum by parts turns it
//! into a weighted sum of h evaluated at tail masses with nonnegative
//! utility-difference weights, so concavity of h carries over to concavity
//! in q and the ball kernel applies directly; non-concave piecewise-linear
//! h goes to the global tail-sum maximizer instead.

use crate::kernel::{concave_max_over_ball, tail_sum_global_max, Lp, LpStatus};
use crate::measures::{Distortion, Divergence, ProbVector, Shape, Utility};
use crate::pwl::PlCurve;
use crate::{Error, Result, EXP_ENUM_CAP};
use serde::{Deserialize, Serialize};

// ---------------------------------------------------------------------------
// ranking

/// Descending stable ordering of outcome values with its tie structure.
#[derive(Clone, Debug, PartialEq)]
pub struct Ranking {
    /// scenario indices sorted by value, largest first; ties keep index order
    pub order: Vec<usize>,
    /// runs of equal values, in rank order; singletons for distinct values
    pub tie_classes: Vec<Vec<usize>>,
}

pub fn rank_outcomes(values: &[f64]) -> Ranking {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut tie_classes: Vec<Vec<usize>> = Vec::new();
    for &i in &order {
        match tie_classes.last_mut() {
            Some(class) if values[class[0]] == values[i] => class.push(i),
            _ => tie_classes.push(vec![i]),
        }
    }
    Ranking { order, tie_classes }
}

// ---------------------------------------------------------------------------
// ranked telescoping sum

/// Core evaluator: minus the telescoped distorted tail sum, for an arbitrary
/// nondecreasing curve on [0,1] and an explicit ranking. `uvals` are the
/// already utility-transformed outcome values. The value is invariant under
/// permutations within tie classes of `uvals` because tied terms carry zero
/// net weight. `pin_top` treats the full mass as exactly 1: curves with a
/// vertical tangent at 1 turn an ulp of accumulation shortfall into a
/// visible error otherwise.
fn telescope_core(
    hf: &dyn Fn(f64) -> f64,
    uvals: &[f64],
    q: &[f64],
    order: &[usize],
    pin_top: bool,
) -> f64 {
    let mut total = 0.0;
    let mut tail = 0.0;
    let mut h_next = hf(0.0);
    for (pos, &i) in order.iter().enumerate().rev() {
        tail += q[i].max(0.0);
        let t = if pin_top && pos == 0 { 1.0 } else { tail.min(1.0) };
        let h_here = hf(t);
        total -= (h_here - h_next) * uvals[i];
        h_next = h_here;
    }
    total
}

/// Raw-point evaluator (no full-mass pinning); for solver iterates and
/// sub-stochastic curve sums.
pub(crate) fn telescope(
    hf: &dyn Fn(f64) -> f64,
    uvals: &[f64],
    q: &[f64],
    order: &[usize],
) -> f64 {
    telescope_core(hf, uvals, q, order, false)
}

/// Rank-dependent evaluation of the position (values, q) under utility u and
/// distortion h.
pub fn rdu(u: &Utility, h: &Distortion, q: &ProbVector, values: &[f64]) -> Result<f64> {
    if q.len() != values.len() {
        return Err(Error::Invalid(format!(
            "{} outcome values against {} probabilities",
            values.len(),
            q.len()
        )));
    }
    let uv: Vec<f64> = values.iter().map(|&x| u.eval(x)).collect();
    let ranking = rank_outcomes(&uv);
    Ok(telescope_core(&|t| h.eval(t), &uv, q.as_slice(), &ranking.order, true))
}

/// Same evaluation against a raw piecewise-linear curve. The curve need not
/// reach 1 at the right end (under/over-approximations of a distortion do
/// not), and q may carry solver rounding noise.
pub fn rdu_pl(curve: &PlCurve, u: &Utility, q: &[f64], values: &[f64]) -> Result<f64> {
    if q.len() != values.len() {
        return Err(Error::Invalid(format!(
            "{} outcome values against {} probabilities",
            values.len(),
            q.len()
        )));
    }
    let uv: Vec<f64> = values.iter().map(|&x| u.eval(x)).collect();
    let ranking = rank_outcomes(&uv);
    Ok(telescope(&|t| curve.eval(t), &uv, q, &ranking.order))
}

/// CVaR at level 1-alpha of the position: the ranked evaluation with linear
/// utility and the capped-linear distortion.
pub fn cvar(values: &[f64], q: &ProbVector, alpha: f64) -> Result<f64> {
    let h = Distortion::Cvar { alpha };
    h.validate()?;
    rdu(&Utility::Linear, &h, q, values)
}

// ---------------------------------------------------------------------------
// capacities and the Choquet integral

/// A monotone set function on subsets of [m] with c(empty) = 0 and
/// c(full) = 1, stored as a dense 2^m table indexed by bitmask.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Capacity {
    m: usize,
    table: Vec<f64>,
}

impl Capacity {
    pub fn new(m: usize, table: Vec<f64>) -> Result<Self> {
        if m == 0 {
            return Err(Error::Invalid("capacity needs at least one scenario".into()));
        }
        if m > EXP_ENUM_CAP {
            return Err(Error::CapExceeded(format!(
                "capacity table for m = {m} has 2^{m} entries; cap is m <= {EXP_ENUM_CAP}"
            )));
        }
        let full = (1usize << m) - 1;
        if table.len() != full + 1 {
            return Err(Error::Invalid(format!(
                "capacity table has {} entries, expected {}",
                table.len(),
                full + 1
            )));
        }
        if table[0].abs() > 1e-12 {
            return Err(Error::Invalid("capacity of the empty set must be 0".into()));
        }
        if (table[full] - 1.0).abs() > 1e-9 {
            return Err(Error::Invalid("capacity of the full set must be 1".into()));
        }
        for mask in 0..=full {
            for i in 0..m {
                if mask & (1 << i) == 0 && table[mask | (1 << i)] < table[mask] - 1e-9 {
                    return Err(Error::Invalid(format!(
                        "capacity not monotone: adding scenario {i} to mask {mask:#b} decreases it"
                    )));
                }
            }
        }
        Ok(Capacity { m, table })
    }

    /// The distorted probability c(A) = h(q(A)).
    pub fn from_distorted_prob(h: &Distortion, q: &ProbVector) -> Result<Self> {
        h.validate()?;
        let m = q.len();
        if m > EXP_ENUM_CAP {
            return Err(Error::CapExceeded(format!(
                "capacity table for m = {m} has 2^{m} entries; cap is m <= {EXP_ENUM_CAP}"
            )));
        }
        let table: Vec<f64> = (0..1usize << m).map(|mask| h.eval(q.mass_mask(mask))).collect();
        Capacity::new(m, table)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn value_mask(&self, mask: usize) -> f64 {
        self.table[mask]
    }

    pub fn value(&self, subset: &[usize]) -> f64 {
        let mut mask = 0usize;
        for &i in subset {
            mask |= 1 << i;
        }
        self.table[mask]
    }

    /// Pairwise local test: c(A + i) + c(A + j) >= c(A + i + j) + c(A) for
    /// all A and i != j outside A. Equivalent to full submodularity.
    pub fn is_submodular(&self) -> bool {
        let full = (1usize << self.m) - 1;
        for mask in 0..=full {
            for i in 0..self.m {
                if mask & (1 << i) != 0 {
                    continue;
                }
                for j in (i + 1)..self.m {
                    if mask & (1 << j) != 0 {
                        continue;
                    }
                    let ai = self.table[mask | (1 << i)];
                    let aj = self.table[mask | (1 << j)];
                    let aij = self.table[mask | (1 << i) | (1 << j)];
                    if ai + aj < aij + self.table[mask] - 1e-9 {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// max sum_i w_i (-x_i) over weight vectors w with w(A) <= c(A) for every
    /// proper subset A and total weight 1. For submodular c this equals the
    /// Choquet integral of the loss; for other capacities the region can be
    /// empty, reported as infeasible.
    pub fn worst_case_expectation(&self, values: &[f64]) -> Result<(f64, Vec<f64>)> {
        if values.len() != self.m {
            return Err(Error::Invalid(format!(
                "{} values against m = {}",
                values.len(),
                self.m
            )));
        }
        let full = (1usize << self.m) - 1;
        let mut lp = Lp::minimize(values.to_vec());
        for j in 0..self.m {
            lp.set_bounds(j, 0.0, 1.0);
        }
        for mask in 1..full {
            let coeffs: Vec<f64> = (0..self.m)
                .map(|i| if mask & (1 << i) != 0 { 1.0 } else { 0.0 })
                .collect();
            lp.add_le(coeffs, self.table[mask]);
        }
        lp.add_eq(vec![1.0; self.m], 1.0);
        let sol = lp.solve()?;
        match sol.status {
            LpStatus::Optimal => Ok((-sol.value, sol.x)),
            LpStatus::Infeasible => Err(Error::Infeasible(
                "no probability vector fits under this capacity".into(),
            )),
            other => Err(Error::NotConverged(format!(
                "capacity polytope solve ended with {other:?}"
            ))),
        }
    }
}

/// Choquet integral evaluation: minus the telescoped sum with set capacities
/// of descending-rank tails in place of distorted tail masses. Values are
/// used as-is; apply a utility beforehand if one is wanted.
pub fn choquet(c: &Capacity, values: &[f64]) -> Result<f64> {
    if values.len() != c.m() {
        return Err(Error::Invalid(format!(
            "{} values against m = {}",
            values.len(),
            c.m()
        )));
    }
    let ranking = rank_outcomes(values);
    let mut total = 0.0;
    let mut mask = 0usize;
    let mut c_next = 0.0;
    for &i in ranking.order.iter().rev() {
        mask |= 1 << i;
        let c_here = c.value_mask(mask);
        total -= (c_here - c_next) * values[i];
        c_next = c_here;
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// composite probability lift

/// The rank-weight vector of q under h: the scenario at rank i receives
/// h(T_i) - h(T_{i+1}). These are exactly the weights of the ranked sum, so
/// the evaluation at q equals minus the plain expectation under the lifted
/// vector. Sums to h(1) = 1 by telescoping.
pub fn lift_qbar(q: &ProbVector, h: &Distortion, ranking: &Ranking) -> Result<ProbVector> {
    let m = q.len();
    if ranking.order.len() != m {
        return Err(Error::Invalid(format!(
            "ranking over {} outcomes against {} probabilities",
            ranking.order.len(),
            m
        )));
    }
    h.validate()?;
    let mut qbar = vec![0.0; m];
    let mut tail = 0.0;
    let mut h_next = 0.0;
    for (pos, &i) in ranking.order.iter().enumerate().rev() {
        tail += q[i];
        // the full mass is exactly 1; curves with a vertical tangent at 1
        // magnify an ulp of accumulated shortfall into a real deficit
        let t = if pos == 0 { 1.0 } else { tail.min(1.0) };
        let h_here = h.eval(t);
        qbar[i] = (h_here - h_next).max(0.0);
        h_next = h_here;
    }
    ProbVector::new(qbar)
}

// ---------------------------------------------------------------------------
// worst case over a divergence ball

#[derive(Clone, Debug)]
pub struct WorstCase {
    /// best feasible evaluation found (a valid lower bound on the supremum)
    pub value: f64,
    /// probability vector attaining `value`, within ball tolerance
    pub point: Vec<f64>,
    /// certified upper bound on the supremum
    pub upper: f64,
    /// whether upper and value agree to working precision
    pub exact: bool,
}

/// sup of the ranked evaluation over the divergence ball of radius r around
/// p. Concave h solves as one concave maximization; non-concave h must be
/// piecewise linear and goes to the global tail-sum maximizer. Smooth
/// non-concave h is rejected: bracket it between piecewise-linear curves
/// first (see the bounding algorithms).
pub fn worst_case_rdu(
    u: &Utility,
    h: &Distortion,
    phi: Divergence,
    p: &ProbVector,
    r: f64,
    values: &[f64],
    tol: f64,
) -> Result<WorstCase> {
    let m = p.len();
    if values.len() != m {
        return Err(Error::Invalid(format!(
            "{} outcome values against {} probabilities",
            values.len(),
            m
        )));
    }
    if r < 0.0 {
        return Err(Error::Invalid(format!("negative ball radius {r}")));
    }
    u.validate()?;
    h.validate()?;
    phi.validate()?;

    let uv: Vec<f64> = values.iter().map(|&x| u.eval(x)).collect();
    let ranking = rank_outcomes(&uv);
    let order = ranking.order;
    let nominal = telescope_core(&|t| h.eval(t), &uv, p.as_slice(), &order, true);
    if r <= 1e-12 {
        return Ok(WorstCase {
            value: nominal,
            point: p.as_slice().to_vec(),
            upper: nominal,
            exact: true,
        });
    }

    // summation by parts: with ranked utilities u_(1) >= ... >= u_(m) and
    // tail masses T_k = q_(k) + ... + q_(m),
    //   value = -h(1) u_(1) + sum_{k>=2} (u_(k-1) - u_(k)) h(T_k),
    // a nonnegative combination of h at points linear in q.
    let uvr: Vec<f64> = order.iter().map(|&i| uv[i]).collect();
    let du: Vec<f64> = (1..m).map(|k| (uvr[k - 1] - uvr[k]).max(0.0)).collect();

    if h.is_concave() {
        let h1 = h.eval(1.0);
        let hc = h.clone();
        let ord = order.clone();
        let uvr0 = uvr[0];
        let duc = du.clone();
        let f = move |q: &[f64]| -> (f64, Vec<f64>) {
            let mm = q.len();
            let mut val = -h1 * uvr0;
            let mut grad = vec![0.0; mm];
            let mut hval = vec![0.0; mm];
            let mut hder = vec![0.0; mm];
            let mut tail = 0.0;
            for j in (1..mm).rev() {
                tail += q[ord[j]].max(0.0);
                let t = tail.min(1.0);
                hval[j] = hc.eval(t);
                hder[j] = hc.derivative(t);
            }
            // q_(t) enters T_j exactly for j <= t, so the supergradient in
            // the t-th ranked coordinate is the prefix sum of du * h'(T)
            let mut pref = 0.0;
            for j in 1..mm {
                val += duc[j - 1] * hval[j];
                pref += duc[j - 1] * hder[j];
                grad[ord[j]] = pref;
            }
            (val, grad)
        };
        let rep = concave_max_over_ball(&f, p, phi, r, tol)?;
        let upper = rep.certificate.max(rep.value);
        return Ok(WorstCase {
            exact: upper - rep.value <= 1e-6 * (1.0 + rep.value.abs()),
            value: rep.value,
            point: rep.point,
            upper,
        });
    }

    let Distortion::Pl { curve } = h else {
        return Err(Error::Domain(
            "worst-case evaluation of a smooth non-concave distortion is not \
             supported directly; bracket it with piecewise-linear curves first"
                .into(),
        ));
    };
    let konst = -curve.eval(1.0) * uvr[0];
    let mut weights = vec![0.0; m];
    for k in 1..m {
        weights[k] = du[k - 1];
    }
    let p_perm = ProbVector::new(order.iter().map(|&i| p[i]).collect())?;
    let tm = tail_sum_global_max(&weights, curve, &p_perm, phi, r, tol)?;
    let mut point = vec![0.0; m];
    for (j, &i) in order.iter().enumerate() {
        point[i] = tm.point[j];
    }
    let value = konst + tm.value;
    let upper = (konst + tm.upper).max(value);
    Ok(WorstCase {
        value,
        point,
        upper,
        exact: tm.exact || upper - value <= 1e-6 * (1.0 + value.abs()),
    })
}

// ---------------------------------------------------------------------------
// scenario models

/// One stocked product: order quantity y against demand d yields
/// (salvage - price) (y - d)_+ - shortfall (d - y)_+ + (price - cost) y,
/// concave piecewise-linear in y.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NewsvendorItem {
    pub cost: f64,
    pub price: f64,
    pub salvage: f64,
    pub shortfall: f64,
}

impl NewsvendorItem {
    pub fn validate(&self) -> Result<()> {
        let ok = self.price > self.cost
            && self.salvage < self.cost
            && self.shortfall >= 0.0
            && [self.cost, self.price, self.salvage, self.shortfall]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!(
                "newsvendor item needs price > cost > salvage and shortfall >= 0, \
                 got cost {} price {} salvage {} shortfall {}",
                self.cost, self.price, self.salvage, self.shortfall
            )))
        }
    }

    pub fn profit(&self, demand: f64, y: f64) -> f64 {
        (self.salvage - self.price) * (y - demand).max(0.0)
            - self.shortfall * (demand - y).max(0.0)
            + (self.price - self.cost) * y
    }

    /// A supergradient of the concave profit in y (right slope at the kink).
    pub fn profit_slope(&self, demand: f64, y: f64) -> f64 {
        if y >= demand {
            self.salvage - self.cost
        } else {
            self.price - self.cost + self.shortfall
        }
    }
}

/// Per-scenario payoff map. Payoffs must be concave in the decision so that
/// the per-scenario loss -u(payoff) is convex.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Objective {
    /// payoff a . x: portfolio weights against a return scenario
    Affine,
    /// sum over items of order-quantity profit against item demand x_j
    Newsvendor { items: Vec<NewsvendorItem> },
}

/// Finite scenario set with nominal probabilities, a payoff map, and a
/// nondecreasing concave utility. The loss -u(payoff(a, x_i)) is convex in
/// the decision a for every scenario, which is what every reformulation
/// and cutting-plane routine here relies on.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioModel {
    /// m scenario vectors, each of the decision dimension
    pub outcomes: Vec<Vec<f64>>,
    pub nominal: ProbVector,
    pub objective: Objective,
    pub utility: Utility,
}

impl ScenarioModel {
    pub fn validate(&self) -> Result<()> {
        let m = self.outcomes.len();
        if m == 0 {
            return Err(Error::Invalid("scenario model needs at least one outcome".into()));
        }
        if self.nominal.len() != m {
            return Err(Error::Invalid(format!(
                "{} outcomes against {} nominal probabilities",
                m,
                self.nominal.len()
            )));
        }
        let l = self.outcomes[0].len();
        if l == 0 {
            return Err(Error::Invalid("outcome vectors must be nonempty".into()));
        }
        if self.outcomes.iter().any(|x| x.len() != l) {
            return Err(Error::Invalid("outcome vectors must share one dimension".into()));
        }
        if self
            .outcomes
            .iter()
            .any(|x| x.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Invalid("outcome entries must be finite".into()));
        }
        self.utility.validate()?;
        if !self.utility.is_concave() {
            return Err(Error::Invalid(
                "utility must be concave for the per-scenario loss to be convex".into(),
            ));
        }
        match &self.objective {
            Objective::Affine => Ok(()),
            Objective::Newsvendor { items } => {
                if items.len() != l {
                    return Err(Error::Invalid(format!(
                        "{} newsvendor items against outcome dimension {}",
                        items.len(),
                        l
                    )));
                }
                items.iter().try_for_each(|it| it.validate())
            }
        }
    }

    pub fn m(&self) -> usize {
        self.outcomes.len()
    }

    pub fn decision_dim(&self) -> usize {
        self.outcomes[0].len()
    }

    pub fn payoff(&self, a: &[f64], i: usize) -> f64 {
        let x = &self.outcomes[i];
        match &self.objective {
            Objective::Affine => a.iter().zip(x).map(|(aj, xj)| aj * xj).sum(),
            Objective::Newsvendor { items } => items
                .iter()
                .zip(x)
                .zip(a)
                .map(|((it, &d), &y)| it.profit(d, y))
                .sum(),
        }
    }

    pub fn payoffs(&self, a: &[f64]) -> Vec<f64> {
        (0..self.m()).map(|i| self.payoff(a, i)).collect()
    }

    /// Supergradient of the concave payoff in a at scenario i.
    fn payoff_slope(&self, a: &[f64], i: usize) -> Vec<f64> {
        let x = &self.outcomes[i];
        match &self.objective {
            Objective::Affine => x.clone(),
            Objective::Newsvendor { items } => items
                .iter()
                .zip(x)
                .zip(a)
                .map(|((it, &d), &y)| it.profit_slope(d, y))
                .collect(),
        }
    }

    /// Value and a subgradient of the convex per-scenario loss
    /// -u(payoff(a, x_i)).
    pub fn loss_cut(&self, a: &[f64], i: usize) -> (f64, Vec<f64>) {
        let f = self.payoff(a, i);
        let uprime = self.utility.derivative(f);
        let slope = self.payoff_slope(a, i);
        (
            -self.utility.eval(f),
            slope.iter().map(|s| -uprime * s).collect(),
        )
    }
}

// ---------------------------------------------------------------------------
