//! Monetary aggregates, the per-interval price rule, the reward split, and
//! the trailing-window regression controller that sets GPL and I.
//!
//! Price and reward arithmetic is exact: coefficients arrive as rationals
//! (config decimals or the dyadic expansion of a controller output) and every
//! division of money floors at the final step. The controller itself works in
//! `f64` with a fixed summation order, so every node recomputing it from the
//! same history gets byte-identical answers.

use std::collections::VecDeque;

use num_bigint::BigUint;
use num_rational::{BigRational, Ratio};
use num_traits::Zero;

use crate::ledger::LedgerState;
use crate::money::Amount;

type Rat = Ratio<BigUint>;

/// Per-interval monetary aggregates. `q`, `p`, `r` and `ratio` are filled by
/// the simulator once the interval's flows are known.
#[derive(Clone, Debug, PartialEq)]
pub struct MonetarySnapshot {
    pub height: u64,
    /// Sum of transaction-account balances.
    pub m0: Amount,
    /// `m0` plus smart-contract balances.
    pub m1: Amount,
    /// `m1` plus serving margin principals.
    pub m2: Amount,
    /// Lines executed this interval.
    pub q: u64,
    /// Price per line charged this interval.
    pub p: Amount,
    /// Pool inflow this interval.
    pub r: Amount,
    /// `m2 / m1` as a real number.
    pub ratio: f64,
}

/// Sums balances by account class. The funding pool is outside every
/// aggregate.
pub fn compute_aggregates(ledger: &LedgerState, height: u64) -> MonetarySnapshot {
    let m0 = ledger.transaction_total();
    let m1 = &m0 + &ledger.contract_total();
    let m2 = &m1 + &ledger.serving_margin_total();
    MonetarySnapshot {
        height,
        m0,
        m1,
        m2,
        q: 0,
        p: Amount::zero(),
        r: Amount::zero(),
        ratio: f64::NAN,
    }
}

/// `m2 / m1`, or `neutral` (the target B) for the empty-economy corner, so a
/// zero M1 cannot poison the controller's history.
pub fn ratio_or_neutral(m2: &Amount, m1: &Amount, neutral: f64) -> f64 {
    if m1.is_zero() {
        neutral
    } else {
        m2.to_f64() / m1.to_f64()
    }
}

/// Trailing window of executed-lines counts behind AVGQ. During the warmup
/// intervals the configured initial AVQ stands in for the average.
#[derive(Clone, Debug)]
pub struct QWindow {
    window: usize,
    seed_avq: u64,
    warmup: u64,
    values: VecDeque<u64>,
}

impl QWindow {
    pub fn new(window: u32, seed_avq: u64, warmup: u64) -> Self {
        QWindow {
            window: window.max(1) as usize,
            seed_avq,
            warmup,
            values: VecDeque::new(),
        }
    }

    pub fn push(&mut self, q: u64) {
        if self.values.len() == self.window {
            self.values.pop_front();
        }
        self.values.push_back(q);
    }

    /// AVGQ in force at `height`, as an exact rational mean.
    pub fn average(&self, height: u64) -> Rat {
        if height < self.warmup || self.values.is_empty() {
            return Rat::from_integer(self.seed_avq.into());
        }
        let sum: BigUint = self.values.iter().map(|&q| BigUint::from(q)).sum();
        Rat::new(sum, BigUint::from(self.values.len() as u64))
    }
}

/// The price rule: `P = ⌊U · M2_prev / (AVGQ + 1)⌋`. The `+1` guards the
/// division when no lines have executed.
pub fn update_price(u: &Rat, m2_prev: &Amount, avgq: &Rat) -> Amount {
    let numer = u.numer() * m2_prev.as_biguint() * avgq.denom();
    let denom = u.denom() * (avgq.numer() + avgq.denom());
    Amount::from_biguint(numer / denom)
}

/// Outcome of splitting one interval's pool inflow `R`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RewardSplit {
    /// `⌊I·R⌋` reserved for the registration cohort (zero if the cohort is
    /// empty; the reservation then stays in the pool as remainder).
    pub earmark: Amount,
    /// Fixed compensation share of each cohort member, pro-rata by margin.
    pub shares: Vec<Amount>,
    /// Equal maintainer payout, floored per head.
    pub per_maintainer: Amount,
    /// `per_maintainer` times the maintainer count.
    pub paid_maintainers: Amount,
    /// What stays in the pool: division dust plus any unassigned reserve.
    pub remainder: Amount,
}

/// Splits `r` into the cohort earmark, equal maintainer payouts, and pool
/// remainder. Exact conservation: `earmark + paid_maintainers + remainder = r`.
pub fn split_rewards(
    r: &Amount,
    i: f64,
    cohort_margins: &[Amount],
    maintainers: u64,
) -> RewardSplit {
    let i_ratio = BigRational::from_float(i.clamp(0.0, 1.0)).unwrap_or_else(BigRational::zero);
    let reserve = Amount::from_biguint(
        (i_ratio.numer().magnitude() * r.as_biguint()) / i_ratio.denom().magnitude(),
    );

    let earmark = if cohort_margins.is_empty() {
        Amount::zero()
    } else {
        reserve.clone()
    };

    let shares = if cohort_margins.is_empty() {
        Vec::new()
    } else {
        let total: Amount = cohort_margins.iter().sum();
        cohort_margins
            .iter()
            .map(|m| {
                Amount::from_biguint((m.as_biguint() * earmark.as_biguint()) / total.as_biguint())
            })
            .collect()
    };

    let pot = r.checked_sub(&reserve).expect("reserve is at most r");
    let per_maintainer = if maintainers == 0 {
        Amount::zero()
    } else {
        pot.div_floor_u64(maintainers)
    };
    let paid_maintainers = &per_maintainer * maintainers;
    let remainder = r
        .checked_sub(&earmark)
        .and_then(|x| x.checked_sub(&paid_maintainers))
        .expect("payouts never exceed r");

    RewardSplit {
        earmark,
        shares,
        per_maintainer,
        paid_maintainers,
        remainder,
    }
}

/// Box bounds for the two controlled quantities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolicyBounds {
    pub gpl_min: u64,
    pub gpl_max: u64,
    pub i_min: f64,
    pub i_max: f64,
}

/// One completed controller observation: the policy in force at an interval,
/// the ratio it produced, and the ratio of the following interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolicyObservation {
    pub gpl: f64,
    pub gn: f64,
    pub i: f64,
    pub ratio: f64,
    pub next_ratio: f64,
}

/// History capacity of the controller.
pub const POLICY_WINDOW: usize = 100;
/// Completed observations actually used per fit (the window keeps one extra).
pub const POLICY_FIT_SPAN: usize = POLICY_WINDOW - 1;
/// Ridge strength applied only when the plain normal equations are singular.
pub const SINGULAR_FALLBACK_LAMBDA: f64 = 1e-8;

/// Current GPL and I plus the trailing history that drives their updates.
#[derive(Clone, Debug)]
pub struct PolicyState {
    b: f64,
    bounds: PolicyBounds,
    gpl: u64,
    i: f64,
    lambda: f64,
    history: VecDeque<PolicyObservation>,
    pending: Option<(f64, f64, f64, f64)>,
}

impl PolicyState {
    pub fn new(b: f64, bounds: PolicyBounds, gpl_initial: u64, i_initial: f64) -> Self {
        PolicyState {
            b,
            bounds,
            gpl: gpl_initial.clamp(bounds.gpl_min, bounds.gpl_max),
            i: i_initial.clamp(bounds.i_min, bounds.i_max),
            lambda: 0.0,
            history: VecDeque::new(),
            pending: None,
        }
    }

    pub fn gpl(&self) -> u64 {
        self.gpl
    }

    pub fn i(&self) -> f64 {
        self.i
    }

    pub fn bounds(&self) -> &PolicyBounds {
        &self.bounds
    }

    pub fn history_len(&self) -> usize {
        self.history.len()
    }

    /// Feeds the finished interval `(gpl, gn, i, ratio)`. The previous
    /// interval's observation completes here, since its next-ratio is only
    /// now known.
    pub fn record_interval(&mut self, gpl: u64, gn: u64, i: f64, ratio: f64) {
        if let Some((p_gpl, p_gn, p_i, p_ratio)) = self.pending.take() {
            if self.history.len() == POLICY_WINDOW {
                self.history.pop_front();
            }
            self.history.push_back(PolicyObservation {
                gpl: p_gpl,
                gn: p_gn,
                i: p_i,
                ratio: p_ratio,
                next_ratio: ratio,
            });
        }
        self.pending = Some((gpl as f64, gn as f64, i, ratio));
    }

    /// Refits the controller and moves GPL and I for the next interval.
    pub fn refit(&mut self, gn_now: u64, ratio_now: f64) -> (u64, f64) {
        let span = self.history.len().min(POLICY_FIT_SPAN);
        let start = self.history.len() - span;
        let recent: Vec<PolicyObservation> = self.history.iter().skip(start).copied().collect();
        let (gpl, i) = fit_policy(
            &recent,
            self.b,
            gn_now as f64,
            ratio_now,
            self.gpl,
            self.i,
            &self.bounds,
            self.lambda,
        );
        self.gpl = gpl;
        self.i = i;
        (gpl, i)
    }
}

/// Fits `y = |B − next_ratio|` as a linear function of `(GPL, GN, I, ratio)`
/// with an intercept, then minimizes the fitted objective over the GPL and I
/// box with GN and ratio held fixed. The objective is linear in the controls,
/// so each minimizer is the bound endpoint selected by its coefficient's
/// sign; a coefficient indistinguishable from zero keeps the current value.
#[allow(clippy::too_many_arguments)]
pub fn fit_policy(
    history: &[PolicyObservation],
    b: f64,
    _gn_now: f64,
    _ratio_now: f64,
    current_gpl: u64,
    current_i: f64,
    bounds: &PolicyBounds,
    lambda: f64,
) -> (u64, f64) {
    let clamped_gpl = current_gpl.clamp(bounds.gpl_min, bounds.gpl_max);
    let clamped_i = current_i.clamp(bounds.i_min, bounds.i_max);
    if history.is_empty() {
        return (clamped_gpl, clamped_i);
    }

    let rows: Vec<[f64; 5]> = history
        .iter()
        .map(|o| [1.0, o.gpl, o.gn, o.i, o.ratio])
        .collect();
    let y: Vec<f64> = history.iter().map(|o| (b - o.next_ratio).abs()).collect();

    let beta = match solve_normal_equations(&rows, &y, lambda) {
        Ok(beta) => beta,
        Err(Degenerate) => match solve_normal_equations(&rows, &y, SINGULAR_FALLBACK_LAMBDA) {
            Ok(beta) => beta,
            Err(Degenerate) => return (clamped_gpl, clamped_i),
        },
    };

    // Coefficients drowned in solver noise count as zero.
    let scale = beta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let eps = 1e-9 * scale;

    let gpl = pick_endpoint_u64(beta[1], eps, bounds.gpl_min, bounds.gpl_max, clamped_gpl);
    let i = pick_endpoint_f64(beta[3], eps, bounds.i_min, bounds.i_max, clamped_i);
    (gpl, i)
}

fn pick_endpoint_u64(coef: f64, eps: f64, lo: u64, hi: u64, current: u64) -> u64 {
    if coef > eps {
        lo
    } else if coef < -eps {
        hi
    } else {
        current
    }
}

fn pick_endpoint_f64(coef: f64, eps: f64, lo: f64, hi: f64, current: f64) -> f64 {
    if coef > eps {
        lo
    } else if coef < -eps {
        hi
    } else {
        current
    }
}

#[derive(Debug, PartialEq, Eq)]
pub struct Degenerate;

/// Solves `(XᵀX + λ·diag(0,1,1,1,1)) β = Xᵀy` by Gaussian elimination with
/// partial pivoting, in a fixed accumulation order. The intercept is never
/// penalized.
pub fn solve_normal_equations(
    rows: &[[f64; 5]],
    y: &[f64],
    lambda: f64,
) -> Result<[f64; 5], Degenerate> {
    assert_eq!(rows.len(), y.len());
    let mut m = [[0.0f64; 6]; 5];
    for (row, &target) in rows.iter().zip(y) {
        for j in 0..5 {
            for k in 0..5 {
                m[j][k] += row[j] * row[k];
            }
            m[j][5] += row[j] * target;
        }
    }
    for j in 1..5 {
        m[j][j] += lambda;
    }

    let scale = m
        .iter()
        .flat_map(|r| r[..5].iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return Err(Degenerate);
    }
    let tiny = scale * 1e-12;

    for col in 0..5 {
        let pivot_row = (col..5)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .expect("nonempty range");
        if m[pivot_row][col].abs() <= tiny {
            return Err(Degenerate);
        }
        m.swap(col, pivot_row);
        for row in col + 1..5 {
            let factor = m[row][col] / m[col][col];
            for k in col..6 {
                m[row][k] -= factor * m[col][k];
            }
        }
    }

    let mut beta = [0.0f64; 5];
    for col in (0..5).rev() {
        let mut acc = m[col][5];
        for k in col + 1..5 {
            acc -= m[col][k] * beta[k];
        }
        beta[col] = acc / m[col][col];
    }
    Ok(beta)
}
