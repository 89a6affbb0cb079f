//! The per-interval orchestration loop: minting, agent behavior, shard
//! sizing, capacity-limited execution, duty checks, reward flows, maturities,
//! aggregates, pricing, and the policy refit — in that fixed order.
//!
//! Runs are deterministic for a fixed config and seed, and independent of the
//! worker-thread count: the parallel stages only evaluate pure per-agent
//! functions on keyed random streams, and all ledger mutations happen
//! serially in agent-id order.

use std::collections::{BTreeMap, HashMap};

use num_traits::ToPrimitive;
use rayon::prelude::*;
use thiserror::Error;

use crate::agents::{self, AgentState};
use crate::config::{DecaySchedule, SimConfig};
use crate::ledger::{AccountId, DepositId, LedgerError, LedgerOp, LedgerState};
use crate::money::Amount;
use crate::policy::{self, PolicyState, QWindow};
use crate::rng::{Domain, Stream};
use crate::security::{self, SecurityError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("simulation configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Security(#[from] SecurityError),
}

/// One row of the emitted metrics history.
#[derive(Clone, Debug, PartialEq)]
pub struct IntervalRecord {
    pub height: u64,
    pub m0: Amount,
    pub m1: Amount,
    pub m2: Amount,
    pub ratio: f64,
    pub q: u64,
    pub p: Amount,
    pub r: Amount,
    pub gpl: u64,
    pub gn: u64,
    pub i: f64,
    pub s: u64,
    pub capacity: u64,
    pub pending: u64,
    pub registrations: u64,
    pub maturations: u64,
    pub confiscations: u64,
    pub maintainers: u64,
}

pub struct RunOutput {
    pub records: Vec<IntervalRecord>,
    pub oplog: Option<Vec<(u64, LedgerOp, Amount)>>,
}

struct Cohort {
    members: Vec<(DepositId, u32, Amount)>, // deposit, agent index, fixed share
    has_earmark: bool,
}

pub struct Simulator {
    config: SimConfig,
    ledger: LedgerState,
    agents: Vec<AgentState>,
    /// Requested-but-unexecuted lines per agent.
    pending: Vec<u64>,
    policy: PolicyState,
    qwindow: QWindow,
    /// Price per line in force for the current interval.
    price: Amount,
    height: u64,
    cohorts: BTreeMap<u64, Cohort>,
    due: BTreeMap<u64, Vec<u64>>,
    shard_cache: HashMap<u64, u64>,
    oplog: Option<Vec<(u64, LedgerOp, Amount)>>,
    pool: Option<rayon::ThreadPool>,
}

impl Simulator {
    pub fn new(config: SimConfig, threads: usize) -> Result<Self, SimError> {
        let pool = if threads > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .map_err(|e| SimError::Config(format!("thread pool: {e}")))?,
            )
        } else {
            None
        };

        let mut sim = Simulator {
            ledger: LedgerState::new(),
            agents: Vec::with_capacity(config.population as usize),
            pending: vec![0; config.population as usize],
            policy: PolicyState::new(
                config.b,
                config.bounds,
                config.gpl_initial,
                config.i_initial,
            ),
            qwindow: QWindow::new(config.avgq_window, config.avq_initial, config.warmup),
            price: Amount::zero(),
            height: 0,
            cohorts: BTreeMap::new(),
            due: BTreeMap::new(),
            shard_cache: HashMap::new(),
            oplog: config.oplog.then(Vec::new),
            pool,
            config,
        };
        sim.genesis()?;
        Ok(sim)
    }

    /// Runs the whole configured horizon.
    pub fn run(config: SimConfig, threads: usize) -> Result<RunOutput, SimError> {
        let intervals = config.intervals;
        let mut sim = Simulator::new(config, threads)?;
        let mut records = Vec::with_capacity(intervals as usize);
        for _ in 0..intervals {
            records.push(sim.step());
        }
        sim.ledger
            .check_conservation()
            .expect("conservation must hold at the end of a run");
        Ok(RunOutput {
            records,
            oplog: sim.oplog.take(),
        })
    }

    pub fn ledger(&self) -> &LedgerState {
        &self.ledger
    }

    pub fn height(&self) -> u64 {
        self.height
    }

    pub fn policy(&self) -> &PolicyState {
        &self.policy
    }

    /// Appends an applied operation to the export log, capturing the pool
    /// balance it left behind.
    fn log(&mut self, op: LedgerOp) {
        if let Some(log) = &mut self.oplog {
            log.push((self.height, op, self.ledger.pool().balance.clone()));
        }
    }

    /// Creates the population and hands out initial balances through the
    /// pool, so that conservation holds from the first interval.
    fn genesis(&mut self) -> Result<(), SimError> {
        let seed = self.config.seed;
        for id in 0..self.config.population {
            let account = self.ledger.create_account();
            self.log(LedgerOp::CreateAccount);
            let contract = self.ledger.create_contract(account)?;
            self.log(LedgerOp::CreateContract { owner: account });
            let agent = AgentState::init(id, account, contract, &self.config.agents, seed);
            self.agents.push(agent);
        }

        let grants: Vec<(AccountId, Amount)> = self
            .agents
            .iter()
            .map(|a| {
                let mut stream = Stream::new(seed, Domain::InitBalance, a.id as u64, 0);
                let balance = Amount::from(self.config.agents.balance.sample(&mut stream));
                (a.account, balance)
            })
            .collect();
        let total: Amount = grants.iter().map(|(_, b)| b).sum();
        if !total.is_zero() {
            self.ledger.mint(&total);
            self.log(LedgerOp::Mint { amount: total });
            for (account, balance) in grants {
                self.ledger.pay_from_pool(account, &balance)?;
                self.log(LedgerOp::PayFromPool {
                    to: account,
                    amount: balance,
                });
            }
        }
        // The genesis grant is seed capital, not interval inflow.
        self.ledger.take_inflow();

        let m2 = policy::compute_aggregates(&self.ledger, 0).m2;
        self.price = policy::update_price(&self.config.u, &m2, &self.qwindow.average(0));
        self.ledger.check_conservation().map_err(SimError::Config)?;
        Ok(())
    }

    fn mint_amount(&self, height: u64) -> Amount {
        let periods = height / self.config.mint_period;
        let initial = self.config.mint_initial.as_biguint();
        match self.config.mint_decay {
            DecaySchedule::Halving => {
                if periods >= u64::from(u32::MAX) {
                    return Amount::zero();
                }
                Amount::from_biguint(initial >> periods)
            }
            DecaySchedule::Subtract => Amount::from_biguint(initial.clone())
                .checked_sub(&Amount::from(2u128 * periods as u128))
                .unwrap_or_default(),
        }
    }

    /// Shard count for `n` serving nodes: the security module's sizing under
    /// the configured adversary fraction and failure budget, floored at one
    /// shard once the population reaches the minimum shard size.
    fn shard_count(&mut self, n: u64) -> u64 {
        if n == 0 || n < self.config.m_min {
            return 0;
        }
        if let Some(&s) = self.shard_cache.get(&n) {
            return s;
        }
        let adversaries = security::floor_frac_mul(self.config.adversary_fraction, n)
            .expect("validated adversary fraction");
        let s = security::max_shards(n, adversaries, self.config.t_frac, &self.config.budget)
            .expect("validated sizing parameters")
            .max(1);
        self.shard_cache.insert(n, s);
        s
    }

    /// Whole lines `demand` currency buys at `price`; zero when execution is
    /// free, since nothing needs to be bought.
    fn lines_for(demand: u64, price: &Amount) -> u64 {
        if price.is_zero() {
            return 0;
        }
        (Amount::from(demand).as_biguint() / price.as_biguint())
            .to_u64()
            .expect("quotient bounded by demand")
    }

    /// Executes one block interval and returns its record.
    pub fn step(&mut self) -> IntervalRecord {
        let h = self.height;
        let seed = self.config.seed;
        let fee = self.config.fee.clone();

        // (1) initial funding distribution
        let mint = self.mint_amount(h);
        if !mint.is_zero() {
            self.ledger.mint(&mint);
            self.log(LedgerOp::Mint { amount: mint });
        }

        // (2) demand walks (and the configured shock, if this is its height)
        if let Some(shock) = self.config.shock {
            if shock.height == h {
                for agent in &mut self.agents {
                    agent.demand = agents::apply_shock(agent.demand, shock.factor);
                }
            }
        }
        match &self.pool {
            Some(pool) => {
                let population = &mut self.agents;
                pool.install(|| {
                    population
                        .par_iter_mut()
                        .for_each(|a| agents::step_demand(a, h, seed));
                });
            }
            None => {
                for a in &mut self.agents {
                    agents::step_demand(a, h, seed);
                }
            }
        }

        // (3) participation decisions, then registrations in id order
        let gpl_now = self.policy.gpl();
        let i_now = self.policy.i();
        let decisions: Vec<Option<Amount>> = {
            let ledger = &self.ledger;
            let fee_ref = &fee;
            self.map_agents(move |a| {
                let balance = ledger.balance(a.account).expect("agent account exists");
                agents::decide_participation(a, balance, gpl_now, fee_ref, seed, h)
            })
        };
        let mut cohort_members: Vec<(DepositId, u32, Amount)> = Vec::new();
        for (idx, margin) in decisions.into_iter().enumerate() {
            let Some(margin) = margin else { continue };
            let account = self.agents[idx].account;
            let deposit = self
                .ledger
                .register_reliable(account, &margin, gpl_now, h, &fee)
                .expect("participation decision is pre-validated");
            self.log(LedgerOp::RegisterReliable {
                owner: account,
                margin: margin.clone(),
                term: gpl_now,
                now: h,
                fee: fee.clone(),
            });
            self.agents[idx].reliability = Some((deposit, h + gpl_now));
            cohort_members.push((deposit, idx as u32, margin));
        }
        let gn = cohort_members.len() as u64;

        // (4) shard sizing from the serving population
        let serving = self.ledger.serving_deposit_count();
        let s = self.shard_count(serving);
        let capacity = s.saturating_mul(self.config.qmax);

        // (5) contract top-ups, line requests, capacity-limited execution
        let price = self.price.clone();
        let requests: Vec<u64> = {
            let price_ref = &price;
            self.map_agents(move |a| Self::lines_for(a.demand, price_ref))
        };
        let mut q: u64 = 0;
        let mut cap_left = capacity;
        for idx in 0..self.agents.len() {
            self.pending[idx] += requests[idx];
            let (account, contract, demand) = {
                let a = &self.agents[idx];
                (a.account, a.contract, a.demand)
            };

            // Top the contract up to cover this interval's demand.
            let held = self
                .ledger
                .contract_balance(contract)
                .expect("agent contract exists")
                .clone();
            if let Some(topup) = Amount::from(demand).checked_sub(&held) {
                if !topup.is_zero() {
                    let needed = &topup + &fee;
                    let affordable = self
                        .ledger
                        .balance(account)
                        .map(|b| *b >= needed)
                        .unwrap_or(false);
                    if affordable {
                        self.ledger
                            .fund_contract(account, contract, &topup, &fee)
                            .expect("pre-checked top-up");
                        self.log(LedgerOp::FundContract {
                            owner: account,
                            contract,
                            amount: topup,
                            fee: fee.clone(),
                        });
                    }
                }
            }

            if cap_left == 0 || self.pending[idx] == 0 {
                continue;
            }
            if !price.is_zero()
                && *self
                    .ledger
                    .contract_balance(contract)
                    .expect("agent contract exists")
                    < price
            {
                continue; // cannot afford a single line
            }
            let want = self.pending[idx].min(cap_left);
            let (_paid, executed) = self
                .ledger
                .execute_contract(contract, want, &price)
                .expect("agent contract exists");
            self.log(LedgerOp::ExecuteContract {
                contract,
                lines: want,
                price: price.clone(),
            });
            self.pending[idx] -= executed;
            cap_left -= executed;
            q += executed;
        }

        // (6) duty checks; failures are confiscated immediately
        let mut maintainer_deposits: Vec<(DepositId, u32)> = Vec::new();
        let mut confiscations = 0u64;
        for idx in 0..self.agents.len() {
            let Some((deposit, _)) = self.agents[idx].reliability else {
                continue;
            };
            let dutiful = agents::perform_duty(&self.agents[idx], seed, h);
            if dutiful {
                maintainer_deposits.push((deposit, idx as u32));
            } else {
                self.ledger
                    .confiscate_deposit(deposit)
                    .expect("serving deposit");
                self.log(LedgerOp::ConfiscateDeposit { deposit });
                self.agents[idx].reliability = None;
                confiscations += 1;
            }
        }
        let maintainers = maintainer_deposits.len() as u64;

        // (7) split this interval's pool inflow
        let r = self.ledger.take_inflow();
        let margins: Vec<Amount> = cohort_members.iter().map(|(_, _, m)| m.clone()).collect();
        let split = policy::split_rewards(&r, i_now, &margins, maintainers);
        if !split.earmark.is_zero() {
            self.ledger
                .add_earmark(h, &split.earmark)
                .expect("earmark is part of this interval's inflow");
            self.log(LedgerOp::AddEarmark {
                interval: h,
                amount: split.earmark.clone(),
            });
        }
        if gn > 0 {
            let members: Vec<(DepositId, u32, Amount)> = cohort_members
                .iter()
                .zip(&split.shares)
                .map(|(&(dep, idx, _), share)| (dep, idx, share.clone()))
                .collect();
            self.cohorts.insert(
                h,
                Cohort {
                    members,
                    has_earmark: !split.earmark.is_zero(),
                },
            );
            self.due.entry(h + gpl_now).or_default().push(h);
        }
        if !split.per_maintainer.is_zero() {
            for &(_, idx) in &maintainer_deposits {
                let account = self.agents[idx as usize].account;
                self.ledger
                    .pay_from_pool(account, &split.per_maintainer)
                    .expect("maintainer pot is part of this interval's inflow");
                self.log(LedgerOp::PayFromPool {
                    to: account,
                    amount: split.per_maintainer.clone(),
                });
            }
        }

        // (8) maturities falling due this interval
        let mut maturations = 0u64;
        if let Some(starts) = self.due.remove(&h) {
            for start in starts {
                let cohort = self.cohorts.remove(&start).expect("cohort recorded");
                for (deposit, idx, share) in cohort.members {
                    let serving = self
                        .ledger
                        .deposit(deposit)
                        .expect("known deposit")
                        .is_serving();
                    if !serving {
                        continue; // confiscated mid-term
                    }
                    self.ledger
                        .mature_deposit(deposit, &share, h)
                        .expect("share fits the cohort earmark");
                    self.log(LedgerOp::MatureDeposit {
                        deposit,
                        compensation: share,
                        now: h,
                    });
                    self.agents[idx as usize].reliability = None;
                    maturations += 1;
                }
                if cohort.has_earmark {
                    self.ledger.release_earmark(start);
                    self.log(LedgerOp::ReleaseEarmark { interval: start });
                }
            }
        }

        // (9) aggregates
        let snap = policy::compute_aggregates(&self.ledger, h);
        let ratio = policy::ratio_or_neutral(&snap.m2, &snap.m1, self.config.b);

        // (10) AVGQ and the next interval's price (from this interval's M2)
        self.qwindow.push(q);
        let next_price =
            policy::update_price(&self.config.u, &snap.m2, &self.qwindow.average(h + 1));

        // (11) policy refit after warmup
        self.policy.record_interval(gpl_now, gn, i_now, ratio);
        if h >= self.config.warmup {
            self.policy.refit(gn, ratio);
        }

        // (12) record
        let record = IntervalRecord {
            height: h,
            m0: snap.m0,
            m1: snap.m1,
            m2: snap.m2,
            ratio,
            q,
            p: price,
            r,
            gpl: gpl_now,
            gn,
            i: i_now,
            s,
            capacity,
            pending: self.pending.iter().sum(),
            registrations: gn,
            maturations,
            confiscations,
            maintainers,
        };

        if cfg!(debug_assertions) || h % 100 == 0 {
            self.ledger
                .check_conservation()
                .unwrap_or_else(|e| panic!("interval {h}: {e}"));
        }

        self.price = next_price;
        self.height += 1;
        record
    }

    /// Maps a pure function over agents, preserving id order in the result.
    fn map_agents<T: Send>(&self, f: impl Fn(&AgentState) -> T + Send + Sync) -> Vec<T> {
        match &self.pool {
            Some(pool) => pool.install(|| self.agents.par_iter().map(&f).collect()),
            None => self.agents.iter().map(f).collect(),
        }
    }
}
