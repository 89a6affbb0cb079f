//! Exact and approximate security probabilities for committee-based sharding.
//!
//! All probabilities are carried as exact arbitrary-precision rationals with a
//! cached base-10 logarithm, because the interesting values live at magnitudes
//! like 10⁻²⁰ where `f64` alone is useless for exact comparison against a
//! failure budget.

use num_bigint::BigUint;
use num_rational::{BigRational, Ratio};
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SecurityError {
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),
}

type Rat = Ratio<BigUint>;

/// A probability held both exactly and in log10 form.
///
/// Invariant: `exact` is in `[0, 1]` and `log10` agrees with it to well under
/// 1e-9 relative error in log space (`-inf` for zero).
#[derive(Clone, Debug)]
pub struct Probability {
    exact: Rat,
    log10: f64,
}

impl Probability {
    pub fn zero() -> Self {
        Probability {
            exact: Rat::zero(),
            log10: f64::NEG_INFINITY,
        }
    }

    pub fn one() -> Self {
        Probability {
            exact: Rat::one(),
            log10: 0.0,
        }
    }

    /// Builds from an exact rational, which must lie in `[0, 1]`.
    pub fn from_ratio(numer: BigUint, denom: BigUint) -> Result<Self, SecurityError> {
        if denom.is_zero() {
            return Err(SecurityError::InvalidConfiguration(
                "probability with zero denominator".into(),
            ));
        }
        if numer > denom {
            return Err(SecurityError::InvalidConfiguration(
                "probability above one".into(),
            ));
        }
        let exact = Rat::new(numer, denom);
        let log10 = log10_ratio(&exact);
        Ok(Probability { exact, log10 })
    }

    /// Parses a decimal or scientific literal ("0.001", "1e-6") exactly.
    pub fn parse_decimal(text: &str) -> Result<Self, SecurityError> {
        let (num, den) = crate::config::decimal_to_ratio(text).map_err(|e| {
            SecurityError::InvalidConfiguration(format!("bad probability literal: {e}"))
        })?;
        Self::from_ratio(num, den)
    }

    pub fn exact(&self) -> &Rat {
        &self.exact
    }

    pub fn log10(&self) -> f64 {
        self.log10
    }

    pub fn to_f64(&self) -> f64 {
        self.exact
            .numer()
            .to_f64()
            .zip(self.exact.denom().to_f64())
            .map(|(n, d)| n / d)
            .filter(|v| v.is_finite())
            .unwrap_or_else(|| 10f64.powf(self.log10))
    }

    pub fn is_zero(&self) -> bool {
        self.exact.is_zero()
    }
}

impl PartialEq for Probability {
    fn eq(&self, other: &Self) -> bool {
        self.exact == other.exact
    }
}

impl Eq for Probability {}

impl PartialOrd for Probability {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.exact.cmp(&other.exact))
    }
}

fn log10_biguint(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits == 0 {
        return f64::NEG_INFINITY;
    }
    if bits <= 53 {
        return x.to_f64().expect("fits f64").log10();
    }
    let shift = bits - 53;
    let top = (x >> shift).to_f64().expect("53 bits fit f64");
    top.log10() + shift as f64 * std::f64::consts::LOG10_2
}

fn log10_ratio(r: &Rat) -> f64 {
    if r.numer().is_zero() {
        return f64::NEG_INFINITY;
    }
    log10_biguint(r.numer()) - log10_biguint(r.denom())
}

/// Committee layout for the jury model: `n` nodes, `s` shards of `m = ⌊n/s⌋`
/// members, a per-shard verdict threshold `T` with `m/2 < T ≤ m`, and `AD`
/// adversary nodes. Leftover nodes (`n − s·m`) stay unassigned.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShardConfig {
    n: u64,
    s: u64,
    m: u64,
    threshold: u64,
    adversaries: u64,
}

impl ShardConfig {
    pub fn new(n: u64, s: u64, threshold: u64, adversaries: u64) -> Result<Self, SecurityError> {
        if s == 0 {
            return Err(SecurityError::InvalidConfiguration("s must be >= 1".into()));
        }
        let m = n / s;
        if m == 0 {
            return Err(SecurityError::InvalidConfiguration(format!(
                "m = floor({n}/{s}) is zero"
            )));
        }
        if 2 * threshold <= m {
            return Err(SecurityError::InvalidConfiguration(format!(
                "threshold {threshold} is not a strict majority of m = {m}"
            )));
        }
        if threshold > m {
            return Err(SecurityError::InvalidConfiguration(format!(
                "threshold {threshold} exceeds shard size m = {m}"
            )));
        }
        if adversaries > n {
            return Err(SecurityError::InvalidConfiguration(format!(
                "adversary count {adversaries} exceeds population {n}"
            )));
        }
        Ok(ShardConfig {
            n,
            s,
            m,
            threshold,
            adversaries,
        })
    }

    pub fn population(&self) -> u64 {
        self.n
    }

    pub fn shards(&self) -> u64 {
        self.s
    }

    pub fn shard_size(&self) -> u64 {
        self.m
    }

    pub fn threshold(&self) -> u64 {
        self.threshold
    }

    pub fn adversaries(&self) -> u64 {
        self.adversaries
    }
}

/// Exact binomial coefficient.
fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc *= BigUint::from(n - i);
        acc /= BigUint::from(i + 1); // exact: acc is C(n, i+1) here
    }
    acc
}

/// Tail probability `Pr[X ≥ k]` for a hypergeometric draw without
/// replacement: `t` adversaries in a population of `n`, sample size `m`.
///
/// Exact rational arithmetic throughout. The classic one-committee failure
/// probability is recovered with `k` set to the majority threshold.
pub fn hypergeom_tail(n: u64, t: u64, m: u64, k: u64) -> Result<Probability, SecurityError> {
    if t > n {
        return Err(SecurityError::InvalidConfiguration(format!(
            "adversary count {t} exceeds population {n}"
        )));
    }
    if m == 0 || m > n {
        return Err(SecurityError::InvalidConfiguration(format!(
            "sample size {m} outside 1..={n}"
        )));
    }
    if k > m {
        return Err(SecurityError::InvalidConfiguration(format!(
            "threshold {k} exceeds sample size {m}"
        )));
    }

    // Support of X is [max(0, m-(n-t)), min(m, t)].
    let x_hi = m.min(t);
    let x_lo_support = m.saturating_sub(n - t);
    let x_lo = k.max(x_lo_support);
    if x_lo > x_hi {
        return Ok(Probability::zero());
    }

    // Walk terms with the two-sided binomial recurrence.
    let mut term = binomial(t, x_lo) * binomial(n - t, m - x_lo);
    let mut sum = term.clone();
    for x in x_lo..x_hi {
        // C(t, x+1) = C(t, x) * (t-x) / (x+1)
        // C(n-t, m-x-1) = C(n-t, m-x) * (m-x) / (n-t-(m-x)+1)
        term *= BigUint::from(t - x);
        term /= BigUint::from(x + 1);
        term *= BigUint::from(m - x);
        term /= BigUint::from((n - t) - (m - x) + 1);
        sum += &term;
    }
    Probability::from_ratio(sum, binomial(n, m))
}

/// Majority threshold `⌊m/2⌋ + 1`: the smallest strict-majority seat count.
pub fn majority_threshold(m: u64) -> u64 {
    m / 2 + 1
}

/// Maximum probability that the adversary controls `T` seats of one shard in
/// the jury model, over all feasible placements of its `AD` nodes.
///
/// With one seat per occupation per shard, a placement assigns `A_i ≤ s`
/// adversaries to occupation `i` and the takeover probability of a target
/// shard is `∏_{i≤T} A_i / s`. For a fixed number of nodes devoted to the
/// first `T` occupations the product is maximized by the balanced split
/// (integer parts differing by at most one), and devoting more nodes never
/// hurts, so the optimum places `min(AD, T·s)` nodes as evenly as possible.
pub fn jury_failure(cfg: &ShardConfig) -> Probability {
    let t = cfg.threshold;
    let s = cfg.s;
    let seats = t as u128 * s as u128;
    let placed = (cfg.adversaries as u128).min(seats);
    if placed < t as u128 {
        // Some occupation among the first T gets zero adversaries.
        return Probability::zero();
    }
    let q = (placed / t as u128) as u64;
    let r = (placed % t as u128) as u64;
    debug_assert!(q < s || (q == s && r == 0));

    let numer = pow_u64(q + 1, r) * pow_u64(q, t - r);
    let denom = pow_u64(s, t);
    Probability::from_ratio(numer, denom).expect("product of per-shard fractions is in [0,1]")
}

/// Closed-form approximation `(AD / (T·s))^T`, clamped to `[0, 1]`.
pub fn jury_failure_approx(cfg: &ShardConfig) -> Probability {
    let ad = cfg.adversaries;
    if ad == 0 {
        return Probability::zero();
    }
    let seats = cfg.threshold as u128 * cfg.s as u128;
    if ad as u128 >= seats {
        return Probability::one();
    }
    let numer = pow_u64(ad, cfg.threshold);
    let denom = BigUint::from(seats).pow(u32::try_from(cfg.threshold).expect("threshold fits u32"));
    Probability::from_ratio(numer, denom).expect("clamped below one")
}

fn pow_u64(base: u64, exp: u64) -> BigUint {
    BigUint::from(base).pow(u32::try_from(exp).expect("exponent fits u32"))
}

/// `⌈frac · m⌉` computed exactly through the dyadic expansion of `frac`.
pub fn ceil_frac_mul(frac: f64, m: u64) -> Result<u64, SecurityError> {
    let r = BigRational::from_float(frac).ok_or_else(|| {
        SecurityError::InvalidConfiguration(format!("non-finite fraction {frac}"))
    })?;
    if r.is_negative() {
        return Err(SecurityError::InvalidConfiguration(format!(
            "negative fraction {frac}"
        )));
    }
    let scaled = (r * BigRational::from_integer(m.into())).ceil();
    scaled
        .to_integer()
        .to_u64()
        .ok_or_else(|| SecurityError::InvalidConfiguration("fraction product overflow".into()))
}

/// `⌊frac · m⌋` computed exactly through the dyadic expansion of `frac`.
pub fn floor_frac_mul(frac: f64, m: u64) -> Result<u64, SecurityError> {
    let r = BigRational::from_float(frac).ok_or_else(|| {
        SecurityError::InvalidConfiguration(format!("non-finite fraction {frac}"))
    })?;
    if r.is_negative() {
        return Err(SecurityError::InvalidConfiguration(format!(
            "negative fraction {frac}"
        )));
    }
    let scaled = (r * BigRational::from_integer(m.into())).floor();
    scaled
        .to_integer()
        .to_u64()
        .ok_or_else(|| SecurityError::InvalidConfiguration("fraction product overflow".into()))
}

/// Largest shard count `s ≥ 1` whose jury failure probability, with
/// `m = ⌊n/s⌋` and `T = ⌈T_frac·m⌉`, stays within `budget`. Returns 0 when
/// even a single shard exceeds the budget.
pub fn max_shards(
    n: u64,
    adversaries: u64,
    t_frac: f64,
    budget: &Probability,
) -> Result<u64, SecurityError> {
    if n == 0 {
        return Err(SecurityError::InvalidConfiguration(
            "population must be positive".into(),
        ));
    }
    if adversaries > n {
        return Err(SecurityError::InvalidConfiguration(format!(
            "adversary count {adversaries} exceeds population {n}"
        )));
    }
    if !(t_frac > 0.5 && t_frac <= 1.0) {
        return Err(SecurityError::InvalidConfiguration(format!(
            "threshold fraction {t_frac} outside (0.5, 1]"
        )));
    }
    if budget.is_zero() || budget.exact() >= &Rat::one() {
        return Err(SecurityError::InvalidConfiguration(
            "budget must lie strictly between 0 and 1".into(),
        ));
    }

    let mut best = 0;
    for s in 1..=n {
        let m = n / s;
        if m == 0 {
            break;
        }
        let threshold = ceil_frac_mul(t_frac, m)?;
        let cfg = ShardConfig::new(n, s, threshold, adversaries)?;
        if jury_failure(&cfg).exact() <= budget.exact() {
            best = s;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force tail oracle: enumerate every m-subset of {0..n} with a
    /// Gosper bitmask walk and count those containing at least k of the
    /// first t elements.
    fn enumerate_tail(n: u64, t: u64, m: u64, k: u64) -> (u64, u64) {
        assert!(n <= 30);
        let adv_mask: u32 = if t == 0 { 0 } else { (1u32 << t) - 1 };
        let mut subset: u32 = (1u32 << m) - 1;
        let limit: u32 = 1u32 << n;
        let mut hits = 0u64;
        let mut total = 0u64;
        while subset < limit {
            total += 1;
            if u64::from((subset & adv_mask).count_ones()) >= k {
                hits += 1;
            }
            // Gosper's hack: next subset of the same popcount.
            let c = subset & subset.wrapping_neg();
            let r = subset + c;
            subset = (((r ^ subset) >> 2) / c) | r;
        }
        (hits, total)
    }

    fn prob(num: u64, den: u64) -> Rat {
        Rat::new(num.into(), den.into())
    }

    #[test]
    fn tail_with_no_adversaries_is_zero() {
        let p = hypergeom_tail(2000, 0, 200, 101).unwrap();
        assert!(p.is_zero());
        assert_eq!(p.log10(), f64::NEG_INFINITY);
    }

    #[test]
    fn tail_with_all_adversaries_is_one() {
        let p = hypergeom_tail(10, 10, 4, 2).unwrap();
        assert_eq!(p.exact(), &Rat::one());
    }

    #[test]
    fn tail_small_case_matches_enumeration() {
        // n=10, t=5, m=4, k=3: C(5,3)C(5,1) + C(5,4)C(5,0) = 55 over C(10,4) = 210.
        let p = hypergeom_tail(10, 5, 4, 3).unwrap();
        assert_eq!(p.exact(), &prob(55, 210));
        let (hits, total) = enumerate_tail(10, 5, 4, 3);
        assert_eq!(p.exact(), &prob(hits, total));
    }

    #[test]
    fn tail_matches_enumeration_on_grid() {
        for n in [6, 9, 12] {
            for t in [0, 2, n / 2, n] {
                for m in 1..=n.min(5) {
                    for k in 0..=m {
                        let p = hypergeom_tail(n, t, m, k).unwrap();
                        let (hits, total) = enumerate_tail(n, t, m, k);
                        assert_eq!(p.exact(), &prob(hits, total), "n={n} t={t} m={m} k={k}");
                    }
                }
            }
        }
    }

    #[test]
    fn tail_monotone_in_threshold_and_adversaries() {
        let n = 24;
        let m = 8;
        for t in 0..=n {
            for k in 0..m {
                let hi = hypergeom_tail(n, t, m, k).unwrap();
                let lo = hypergeom_tail(n, t, m, k + 1).unwrap();
                assert!(lo.exact() <= hi.exact());
            }
        }
        for k in 0..=m {
            for t in 0..n {
                let lo = hypergeom_tail(n, t, m, k).unwrap();
                let hi = hypergeom_tail(n, t + 1, m, k).unwrap();
                assert!(lo.exact() <= hi.exact());
            }
        }
    }

    #[test]
    fn tail_rejects_bad_parameters() {
        assert!(hypergeom_tail(10, 11, 4, 2).is_err());
        assert!(hypergeom_tail(10, 5, 0, 0).is_err());
        assert!(hypergeom_tail(10, 5, 11, 2).is_err());
        assert!(hypergeom_tail(10, 5, 4, 5).is_err());
    }

    /// Exhaustive oracle over all compositions of `ad` into `t` parts, each
    /// within 0..=s, maximizing the product of parts.
    fn jury_oracle(ad: u64, t: u64, s: u64) -> Rat {
        fn best(remaining: u64, parts_left: u64, s: u64) -> Option<BigUint> {
            if parts_left == 0 {
                return (remaining == 0).then(BigUint::one);
            }
            let mut top: Option<BigUint> = None;
            for a in 0..=s.min(remaining) {
                if let Some(rest) = best(remaining - a, parts_left - 1, s) {
                    let cand = rest * BigUint::from(a);
                    if top.as_ref().is_none_or(|t| cand > *t) {
                        top = Some(cand);
                    }
                }
            }
            top
        }
        // Adversaries beyond the first T occupations are irrelevant, so allow
        // placing only a prefix of them.
        let mut top = BigUint::zero();
        for placed in 0..=ad.min(t * s) {
            if let Some(v) = best(placed, t, s) {
                top = top.max(v);
            }
        }
        Rat::new(top, BigUint::from(s).pow(u32::try_from(t).unwrap()))
    }

    #[test]
    fn jury_zero_adversaries() {
        let cfg = ShardConfig::new(20, 4, 3, 0).unwrap();
        assert!(jury_failure(&cfg).is_zero());
        assert!(jury_failure_approx(&cfg).is_zero());
    }

    #[test]
    fn jury_small_split_example() {
        // Best split of 3 adversaries over T=2 occupations with s=2 shards
        // is (2,1): probability (2/2)*(1/2) = 1/2.
        let cfg = ShardConfig::new(4, 2, 2, 3).unwrap();
        assert_eq!(jury_failure(&cfg).exact(), &prob(1, 2));
        assert_eq!(jury_failure_approx(&cfg).exact(), &prob(9, 16));
    }

    #[test]
    fn jury_matches_exhaustive_oracle() {
        for s in 1..=4u64 {
            for t in 1..=4u64 {
                // Largest shard size that keeps t a strict majority.
                let m = 2 * t - 1;
                let n = s * m;
                for ad in 0..=(12u64).min(n) {
                    let cfg = ShardConfig::new(n, s, t, ad).unwrap();
                    assert_eq!(cfg.shard_size(), m);
                    assert_eq!(
                        jury_failure(&cfg).exact(),
                        &jury_oracle(ad, t, s),
                        "ad={ad} t={t} s={s}"
                    );
                }
            }
        }
    }

    #[test]
    fn jury_is_one_exactly_when_adversary_fills_all_threshold_seats() {
        for s in 1..=3u64 {
            for t in 1..=3u64 {
                let n = 4 * t * s;
                for ad in 0..=n {
                    let Ok(cfg) = ShardConfig::new(n, s, (n / s) / 2 + 1, ad) else {
                        continue;
                    };
                    let p = jury_failure(&cfg);
                    assert!(p.exact() <= &Rat::one());
                    assert_eq!(p.exact() == &Rat::one(), ad >= cfg.threshold() * s);
                }
            }
        }
    }

    #[test]
    fn jury_failure_tiny_with_half_adversarial_ten_shards() {
        let threshold = ceil_frac_mul(0.7, 200).unwrap();
        assert_eq!(threshold, 140);
        let cfg = ShardConfig::new(2000, 10, threshold, 1000).unwrap();
        let exact = jury_failure(&cfg);
        assert!(exact.log10() <= -20.0, "log10 = {}", exact.log10());

        // Approximation: log-space oracle for (1000/1400)^140.
        let approx = jury_failure_approx(&cfg);
        let oracle = 140.0 * (1000f64.log10() - 1400f64.log10());
        assert!((approx.log10() - oracle).abs() < 1e-9);
        assert!((exact.log10() - approx.log10()).abs() <= 1.5);
    }

    #[test]
    fn approx_and_exact_agree_across_shard_counts() {
        // The closed form is the continuous relaxation of the balanced
        // placement, so it upper-bounds the exact value everywhere. At s = 2
        // and s = 3 the relaxation is loose (per-occupation counts round down
        // from ~1.4 to 1), so the 1.5-orders agreement holds from s = 4 up.
        for s in 2..=34u64 {
            let m = 2000 / s;
            let t = ceil_frac_mul(0.7, m).unwrap();
            let cfg = ShardConfig::new(2000, s, t, 1000).unwrap();
            let exact = jury_failure(&cfg);
            let approx = jury_failure_approx(&cfg);
            assert!(
                approx.exact() >= exact.exact(),
                "s={s}: approximation must upper-bound the exact maximum"
            );
            if s >= 4 {
                assert!(
                    (exact.log10() - approx.log10()).abs() <= 1.5,
                    "s={s}: exact {} vs approx {}",
                    exact.log10(),
                    approx.log10()
                );
            }
        }
    }

    #[test]
    fn max_shards_zero_when_everyone_is_adversarial() {
        let budget = Probability::parse_decimal("1e-6").unwrap();
        assert_eq!(max_shards(2000, 2000, 0.7, &budget).unwrap(), 0);
    }

    #[test]
    fn max_shards_matches_exact_scan_on_small_population() {
        let budget = Probability::from_ratio(1u64.into(), 100u64.into()).unwrap();
        let n = 20;
        let ad = 10;
        let mut expected = 0;
        for s in 1..=n {
            let m = n / s;
            let t = ceil_frac_mul(0.7, m).unwrap();
            if jury_oracle(ad.min(t * s), t, s) <= *budget.exact() {
                expected = s;
            }
        }
        assert_eq!(max_shards(n, ad, 0.7, &budget).unwrap(), expected);
    }

    #[test]
    fn max_shards_monotone_in_adversaries() {
        let budget = Probability::parse_decimal("1e-6").unwrap();
        let mut prev = u64::MAX;
        for ad in [50, 100, 150, 200, 300, 400] {
            let s = max_shards(400, ad, 0.7, &budget).unwrap();
            assert!(s <= prev, "ad={ad}: s={s} > prev={prev}");
            prev = s;
        }
    }

    #[test]
    fn probability_log10_tracks_exact() {
        let p = Probability::from_ratio(BigUint::from(3u64), BigUint::from(4000u64)).unwrap();
        let expected = (3f64 / 4000.0).log10();
        assert!((p.log10() - expected).abs() < 1e-12);
        assert!((p.to_f64() - 0.00075).abs() < 1e-18);
    }

    #[test]
    fn frac_mul_rounding_is_exact_at_decimal_boundaries() {
        assert_eq!(ceil_frac_mul(0.7, 200).unwrap(), 140);
        assert_eq!(ceil_frac_mul(0.7, 10).unwrap(), 7);
        assert_eq!(ceil_frac_mul(0.7, 3).unwrap(), 3);
        assert_eq!(floor_frac_mul(0.5, 1999).unwrap(), 999);
        assert_eq!(floor_frac_mul(0.5, 2000).unwrap(), 1000);
    }
}
