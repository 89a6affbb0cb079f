//! The simulated population: purchase-demand random walks, fear-line
//! participation decisions, margin sizing, and per-interval duty behavior.
//!
//! All behaviour here is pure computation over an agent plus a keyed random
//! stream; the simulator applies the resulting ledger mutations serially in
//! agent-id order.

use crate::config::AgentDistributions;
use crate::ledger::{AccountId, ContractId, DepositId};
use crate::money::Amount;
use crate::rng::{Domain, Stream};

#[derive(Clone, Debug)]
pub struct AgentState {
    pub id: u32,
    pub account: AccountId,
    pub contract: ContractId,
    /// Currency the agent wants to spend on execution per interval.
    pub demand: u64,
    /// Bankruptcy-horizon trigger, in intervals.
    pub fear_line: u64,
    /// Probability of performing duty in an interval (1.0 = never offline).
    pub duty_reliability: f64,
    /// Active deposit and its maturity height, when serving.
    pub reliability: Option<(DepositId, u64)>,
}

impl AgentState {
    /// Draws the agent's initial attributes from the configured
    /// distributions (balance is drawn by the simulator at genesis).
    pub fn init(
        id: u32,
        account: AccountId,
        contract: ContractId,
        dists: &AgentDistributions,
        seed: u64,
    ) -> Self {
        let demand = dists
            .demand
            .sample(&mut Stream::new(seed, Domain::InitDemand, id as u64, 0));
        let fear_line =
            dists
                .fear_line
                .sample(&mut Stream::new(seed, Domain::InitFearLine, id as u64, 0));
        let duty_reliability =
            dists
                .duty_reliability
                .sample(&mut Stream::new(seed, Domain::InitDuty, id as u64, 0));
        AgentState {
            id,
            account,
            contract,
            demand,
            fear_line,
            duty_reliability,
            reliability: None,
        }
    }

    pub fn is_serving(&self) -> bool {
        self.reliability.is_some()
    }
}

/// Applies one multiplicative walk step, flooring to an integer.
pub(crate) fn apply_walk_factor(demand: u64, factor: f64) -> u64 {
    (demand as f64 * factor) as u64
}

/// Scales a demand rate by a configured shock factor (floored), without
/// consuming any randomness.
pub fn apply_shock(demand: u64, factor: f64) -> u64 {
    apply_walk_factor(demand, factor)
}

/// Every tenth interval the demand rate moves by a uniform factor in
/// `[0.95, 1.05]`; other intervals leave it unchanged.
pub fn step_demand(agent: &mut AgentState, height: u64, seed: u64) {
    if height % 10 != 0 {
        return;
    }
    let mut stream = Stream::new(seed, Domain::DemandWalk, agent.id as u64, height);
    let factor = stream.uniform_f64(0.95, 1.05);
    agent.demand = apply_walk_factor(agent.demand, factor);
}

/// Intervals until the agent goes broke at its current spend rate; `None`
/// means never (zero demand).
pub fn time_to_bankruptcy(balance: &Amount, demand: u64) -> Option<u64> {
    if demand == 0 {
        None
    } else {
        Some(balance.quot_u64_saturating(demand))
    }
}

/// Fear-line participation rule. When the time to bankruptcy has fallen to
/// the fear line and the agent is not already serving, it offers a margin
/// drawn uniformly from `[1, balance − projected spend]`, where the projected
/// spend covers buying through the whole frozen term plus the registration
/// fee. A non-viable registration is simply declined.
pub fn decide_participation(
    agent: &AgentState,
    balance: &Amount,
    gpl: u64,
    fee: &Amount,
    seed: u64,
    height: u64,
) -> Option<Amount> {
    if agent.is_serving() {
        return None;
    }
    let horizon = time_to_bankruptcy(balance, agent.demand)?;
    if horizon > agent.fear_line {
        return None;
    }
    let projected = &Amount::from(agent.demand as u128 * gpl as u128) + fee;
    let viable = balance.checked_sub(&projected)?;
    if viable.is_zero() {
        return None;
    }
    let mut stream = Stream::new(seed, Domain::Margin, agent.id as u64, height);
    let margin = stream.range_u64(1, viable.to_u64_saturating());
    Some(Amount::from(margin))
}

/// Whether a serving agent performs its duty this interval.
pub fn perform_duty(agent: &AgentState, seed: u64, height: u64) -> bool {
    if agent.duty_reliability >= 1.0 {
        return true;
    }
    if agent.duty_reliability <= 0.0 {
        return false;
    }
    Stream::new(seed, Domain::Duty, agent.id as u64, height).bernoulli(agent.duty_reliability)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{FloatDist, IntDist};

    fn dists() -> AgentDistributions {
        AgentDistributions {
            demand: IntDist::Uniform { lo: 1, hi: 100 },
            fear_line: IntDist::Uniform { lo: 50, hi: 1000 },
            balance: IntDist::Uniform {
                lo: 1000,
                hi: 100_000,
            },
            duty_reliability: FloatDist::Constant(1.0),
        }
    }

    fn agent(id: u32, demand: u64, fear_line: u64) -> AgentState {
        let mut l = crate::ledger::LedgerState::new();
        let account = l.create_account();
        let contract = l.create_contract(account).unwrap();
        let mut a = AgentState::init(id, account, contract, &dists(), 1);
        a.demand = demand;
        a.fear_line = fear_line;
        a
    }

    /// A syntactically valid deposit id for marking an agent as serving.
    fn dummy_deposit() -> DepositId {
        let mut l = crate::ledger::LedgerState::new();
        let acc = l.create_account();
        l.mint(&Amount::from(10u64));
        l.pay_from_pool(acc, &Amount::from(10u64)).unwrap();
        l.register_reliable(acc, &Amount::from(5u64), 3, 0, &Amount::zero())
            .unwrap()
    }

    #[test]
    fn walk_factor_floors() {
        assert_eq!(apply_walk_factor(1000, 1.05), 1050);
        assert_eq!(apply_walk_factor(1000, 0.95), 950);
        assert_eq!(apply_walk_factor(0, 1.05), 0);
    }

    #[test]
    fn demand_only_moves_on_tenth_intervals() {
        let mut a = agent(3, 1000, 500);
        step_demand(&mut a, 7, 42);
        assert_eq!(a.demand, 1000);
        step_demand(&mut a, 20, 42);
        assert!((950..=1050).contains(&a.demand));
    }

    #[test]
    fn zero_demand_is_a_fixed_point() {
        let mut a = agent(1, 0, 500);
        for h in 0..200 {
            step_demand(&mut a, h, 9);
        }
        assert_eq!(a.demand, 0);
    }

    #[test]
    fn walk_stays_within_five_percent_per_step() {
        let mut a = agent(2, 10_000, 500);
        for h in (0..500).step_by(10) {
            let before = a.demand;
            step_demand(&mut a, h, 123);
            let lo = apply_walk_factor(before, 0.95);
            let hi = apply_walk_factor(before, 1.05);
            assert!((lo..=hi + 1).contains(&a.demand));
        }
    }

    #[test]
    fn registers_exactly_at_the_fear_line() {
        let a = agent(0, 10, 500);
        // horizon = 5000/10 = 500 <= fear line 500.
        let margin =
            decide_participation(&a, &Amount::from(5000u64), 10, &Amount::from(1u64), 7, 0);
        let margin = margin.expect("must register at the fear line");
        // viable spend = 5000 - (10*10 + 1) = 4899.
        assert!(Amount::from(1u64) <= margin && margin <= Amount::from(4899u64));
    }

    #[test]
    fn zero_demand_never_registers() {
        let a = agent(0, 0, 500);
        assert!(
            decide_participation(&a, &Amount::from(10u64), 10, &Amount::zero(), 7, 0).is_none()
        );
    }

    #[test]
    fn unaffordable_frozen_period_declines() {
        let a = agent(0, 10, 500);
        // projected spend = 10 * 20 = 200 > balance 100.
        assert!(
            decide_participation(&a, &Amount::from(100u64), 20, &Amount::zero(), 7, 0).is_none()
        );
    }

    #[test]
    fn serving_agents_do_not_stack_registrations() {
        let mut a = agent(0, 10, 500);
        a.reliability = Some((dummy_deposit(), 3));
        assert!(
            decide_participation(&a, &Amount::from(5000u64), 10, &Amount::zero(), 7, 0).is_none()
        );
    }

    #[test]
    fn fear_line_zero_never_registers_with_positive_balance() {
        for demand in [1u64, 3, 10, 1000] {
            for balance in [1u64, 2, 5, 99, 10_000] {
                let a = agent(0, demand, 0);
                let got =
                    decide_participation(&a, &Amount::from(balance), 10, &Amount::from(1u64), 7, 0);
                // Either the horizon is still positive, or the viability
                // bound fails (balance < demand <= projected spend).
                assert!(got.is_none(), "demand={demand} balance={balance}");
            }
        }
    }

    #[test]
    fn margin_respects_the_viability_bound() {
        let mut s = crate::rng::Stream::new(5, crate::rng::Domain::Margin, 99, 99);
        for trial in 0..500 {
            let demand = s.range_u64(1, 50);
            let fear = s.range_u64(0, 2000);
            let balance = Amount::from(s.range_u64(0, 100_000));
            let gpl = s.range_u64(1, 200);
            let fee = Amount::from(s.range_u64(0, 5));
            let a = agent(trial, demand, fear);
            if let Some(margin) = decide_participation(&a, &balance, gpl, &fee, trial as u64, 3) {
                let projected = &Amount::from(demand as u128 * gpl as u128) + &fee;
                let viable = balance
                    .checked_sub(&projected)
                    .expect("registered => viable");
                assert!(margin <= viable);
                assert!(margin >= Amount::from(1u64));
            }
        }
    }

    #[test]
    fn draws_are_independent_of_iteration_order() {
        let mk = |id| agent(id, 10, 1000);
        let balance = Amount::from(1000u64);
        let fee = Amount::zero();
        let forward: Vec<_> = (0..8)
            .map(|id| decide_participation(&mk(id), &balance, 10, &fee, 42, 5))
            .collect();
        let mut backward: Vec<_> = (0..8)
            .rev()
            .map(|id| decide_participation(&mk(id), &balance, 10, &fee, 42, 5))
            .collect();
        backward.reverse();
        assert_eq!(forward, backward);
    }

    #[test]
    fn duty_extremes_are_exact() {
        let mut a = agent(0, 10, 500);
        a.duty_reliability = 1.0;
        assert!((0..50).all(|h| perform_duty(&a, 1, h)));
        a.duty_reliability = 0.0;
        assert!((0..50).all(|h| !perform_duty(&a, 1, h)));
    }

    #[test]
    fn duty_rate_matches_reliability() {
        let mut a = agent(0, 10, 500);
        a.duty_reliability = 0.5;
        let hits = (0..10_000).filter(|&h| perform_duty(&a, 77, h)).count();
        let fraction = hits as f64 / 10_000.0;
        assert!((0.48..=0.52).contains(&fraction), "fraction = {fraction}");
    }
}
