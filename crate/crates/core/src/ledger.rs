//! Money bookkeeping: the three account kinds, the funding pool, and every
//! legal transfer edge between them.
//!
//! The single source of truth for conservation is [`LedgerState`]: after every
//! operation, transaction balances + contract balances + serving margin
//! principals + the pool balance equal the cumulative mint, as exact integers.
//! Every operation either fully applies or leaves the state untouched.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::money::Amount;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AccountId(u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ContractId(u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DepositId(u32);

impl fmt::Display for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.0)
    }
}

impl fmt::Display for ContractId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

impl fmt::Display for DepositId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "d{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LedgerError {
    #[error("insufficient funds in {0}: have {1}, need {2}")]
    InsufficientFunds(String, Amount, Amount),
    #[error("unknown account {0}")]
    UnknownAccount(AccountId),
    #[error("unknown contract {0}")]
    UnknownContract(ContractId),
    #[error("unknown deposit {0}")]
    UnknownDeposit(DepositId),
    #[error("contract {0} funds may only move to its owner")]
    OwnershipViolation(ContractId),
    #[error("deposit {0} is {1:?}, expected Serving")]
    WrongState(DepositId, DepositStatus),
    #[error("deposit {0} matures at height {1}, not {2}")]
    WrongMaturity(DepositId, u64, u64),
    #[error("earmark for interval {0} holds {1}, cannot pay {2}")]
    EarmarkExhausted(u64, Amount, Amount),
    #[error("pool holds {0} unreserved, cannot cover {1}")]
    InsufficientPool(Amount, Amount),
    #[error("invalid operation: {0}")]
    InvalidOperation(String),
}

/// An ordinary currency account: receives compensation, sends and receives
/// transfers, pays the fixed per-transaction fee.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransactionAccount {
    pub id: AccountId,
    pub balance: Amount,
}

/// Pending execution funding. Withdrawals may go only to the owner account.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SmartContractAccount {
    pub id: ContractId,
    pub owner: AccountId,
    pub balance: Amount,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DepositStatus {
    Serving,
    Matured,
    Confiscated,
}

/// Frozen margin backing a reliable node. `Matured` and `Confiscated` are
/// terminal states.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MarginDeposit {
    pub id: DepositId,
    pub owner: AccountId,
    pub principal: Amount,
    pub start: u64,
    pub term: u64,
    pub status: DepositStatus,
}

impl MarginDeposit {
    pub fn maturity(&self) -> u64 {
        self.start + self.term
    }

    pub fn is_serving(&self) -> bool {
        self.status == DepositStatus::Serving
    }
}

/// The system treasury. Earmarks reserve part of the balance for the
/// compensation of a registration cohort, keyed by registration interval.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FundingPool {
    pub balance: Amount,
    earmarks: BTreeMap<u64, Amount>,
    earmark_total: Amount,
}

impl FundingPool {
    pub fn earmark(&self, interval: u64) -> Amount {
        self.earmarks.get(&interval).cloned().unwrap_or_default()
    }

    pub fn earmark_total(&self) -> &Amount {
        &self.earmark_total
    }

    /// Pool balance not reserved by any earmark.
    pub fn unreserved(&self) -> Amount {
        self.balance
            .checked_sub(&self.earmark_total)
            .expect("earmarks never exceed the pool balance")
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LedgerState {
    accounts: Vec<TransactionAccount>,
    contracts: Vec<SmartContractAccount>,
    deposits: Vec<MarginDeposit>,
    pool: FundingPool,
    minted: Amount,
    /// Pool credits since the last [`LedgerState::take_inflow`] call.
    inflow: Amount,
    // Running totals over serving deposits; deposits are append-only, so
    // recomputing them per interval would scale with run length.
    serving_margin: Amount,
    serving_count: u64,
}

impl LedgerState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn accounts(&self) -> &[TransactionAccount] {
        &self.accounts
    }

    pub fn contracts(&self) -> &[SmartContractAccount] {
        &self.contracts
    }

    pub fn deposits(&self) -> &[MarginDeposit] {
        &self.deposits
    }

    pub fn pool(&self) -> &FundingPool {
        &self.pool
    }

    pub fn minted(&self) -> &Amount {
        &self.minted
    }

    pub fn balance(&self, id: AccountId) -> Result<&Amount, LedgerError> {
        self.account(id).map(|a| &a.balance)
    }

    pub fn contract_balance(&self, id: ContractId) -> Result<&Amount, LedgerError> {
        self.contract(id).map(|c| &c.balance)
    }

    pub fn deposit(&self, id: DepositId) -> Result<&MarginDeposit, LedgerError> {
        self.deposits
            .get(id.0 as usize)
            .ok_or(LedgerError::UnknownDeposit(id))
    }

    pub fn serving_deposit_count(&self) -> u64 {
        self.serving_count
    }

    fn account(&self, id: AccountId) -> Result<&TransactionAccount, LedgerError> {
        self.accounts
            .get(id.0 as usize)
            .ok_or(LedgerError::UnknownAccount(id))
    }

    fn contract(&self, id: ContractId) -> Result<&SmartContractAccount, LedgerError> {
        self.contracts
            .get(id.0 as usize)
            .ok_or(LedgerError::UnknownContract(id))
    }

    fn credit_pool(&mut self, amount: &Amount) {
        self.pool.balance += amount;
        self.inflow += amount;
    }

    /// Total pool credits since the previous call; resets the counter.
    pub fn take_inflow(&mut self) -> Amount {
        std::mem::take(&mut self.inflow)
    }

    pub fn create_account(&mut self) -> AccountId {
        let id = AccountId(self.accounts.len() as u32);
        self.accounts.push(TransactionAccount {
            id,
            balance: Amount::zero(),
        });
        id
    }

    pub fn create_contract(&mut self, owner: AccountId) -> Result<ContractId, LedgerError> {
        self.account(owner)?;
        let id = ContractId(self.contracts.len() as u32);
        self.contracts.push(SmartContractAccount {
            id,
            owner,
            balance: Amount::zero(),
        });
        Ok(id)
    }

    /// Moves `amount` between transaction accounts; the fee goes to the pool.
    pub fn transfer(
        &mut self,
        from: AccountId,
        to: AccountId,
        amount: &Amount,
        fee: &Amount,
    ) -> Result<(), LedgerError> {
        self.account(to)?;
        let needed = amount + fee;
        let have = &self.account(from)?.balance;
        if *have < needed {
            return Err(LedgerError::InsufficientFunds(
                from.to_string(),
                have.clone(),
                needed,
            ));
        }
        self.accounts[from.0 as usize].balance -= &needed;
        self.accounts[to.0 as usize].balance += amount;
        self.credit_pool(fee);
        Ok(())
    }

    /// Owner tops up its contract's pending execution funding.
    pub fn fund_contract(
        &mut self,
        owner: AccountId,
        contract: ContractId,
        amount: &Amount,
        fee: &Amount,
    ) -> Result<(), LedgerError> {
        if self.contract(contract)?.owner != owner {
            return Err(LedgerError::OwnershipViolation(contract));
        }
        let needed = amount + fee;
        let have = &self.account(owner)?.balance;
        if *have < needed {
            return Err(LedgerError::InsufficientFunds(
                owner.to_string(),
                have.clone(),
                needed,
            ));
        }
        self.accounts[owner.0 as usize].balance -= &needed;
        self.contracts[contract.0 as usize].balance += amount;
        self.credit_pool(fee);
        Ok(())
    }

    /// Returns pending contract funding; only the owner may receive it.
    pub fn withdraw_contract(
        &mut self,
        contract: ContractId,
        to: AccountId,
        amount: &Amount,
    ) -> Result<(), LedgerError> {
        let c = self.contract(contract)?;
        if c.owner != to {
            return Err(LedgerError::OwnershipViolation(contract));
        }
        if c.balance < *amount {
            return Err(LedgerError::InsufficientFunds(
                contract.to_string(),
                c.balance.clone(),
                amount.clone(),
            ));
        }
        self.contracts[contract.0 as usize].balance -= amount;
        self.accounts[to.0 as usize].balance += amount;
        Ok(())
    }

    /// Executes up to `lines` whole lines at `price` per line, limited by the
    /// contract's pending funding. Payment goes to the pool; any fractional
    /// remainder stays pending in the contract account.
    pub fn execute_contract(
        &mut self,
        contract: ContractId,
        lines: u64,
        price: &Amount,
    ) -> Result<(Amount, u64), LedgerError> {
        let c = self.contract(contract)?;
        if price.is_zero() {
            return Ok((Amount::zero(), lines));
        }
        let want = price * lines;
        let affordable = if c.balance < want {
            c.balance.clone()
        } else {
            want
        };
        let executed =
            Amount::from_biguint(affordable.as_biguint() / price.as_biguint()).to_u64_saturating();
        let paid = price * executed;
        self.contracts[contract.0 as usize].balance -= &paid;
        self.credit_pool(&paid);
        Ok((paid, executed))
    }

    /// Freezes `margin` from the owner as a new serving deposit; the fee goes
    /// to the pool like any other transaction.
    pub fn register_reliable(
        &mut self,
        owner: AccountId,
        margin: &Amount,
        term: u64,
        now: u64,
        fee: &Amount,
    ) -> Result<DepositId, LedgerError> {
        if margin.is_zero() {
            return Err(LedgerError::InvalidOperation(
                "margin must be positive".into(),
            ));
        }
        let needed = margin + fee;
        let have = &self.account(owner)?.balance;
        if *have < needed {
            return Err(LedgerError::InsufficientFunds(
                owner.to_string(),
                have.clone(),
                needed,
            ));
        }
        self.accounts[owner.0 as usize].balance -= &needed;
        self.credit_pool(fee);
        let id = DepositId(self.deposits.len() as u32);
        self.deposits.push(MarginDeposit {
            id,
            owner,
            principal: margin.clone(),
            start: now,
            term,
            status: DepositStatus::Serving,
        });
        self.serving_margin += margin;
        self.serving_count += 1;
        Ok(id)
    }

    /// Returns the principal plus `compensation` (drawn from the cohort's
    /// earmark) to the owner; the deposit becomes terminally matured.
    pub fn mature_deposit(
        &mut self,
        deposit: DepositId,
        compensation: &Amount,
        now: u64,
    ) -> Result<(), LedgerError> {
        let d = self.deposit(deposit)?;
        if !d.is_serving() {
            return Err(LedgerError::WrongState(deposit, d.status));
        }
        if d.maturity() != now {
            return Err(LedgerError::WrongMaturity(deposit, d.maturity(), now));
        }
        let cohort = d.start;
        let owner = d.owner;
        let principal = d.principal.clone();
        let reserved = self.pool.earmark(cohort);
        if reserved < *compensation {
            return Err(LedgerError::EarmarkExhausted(
                cohort,
                reserved,
                compensation.clone(),
            ));
        }
        if !compensation.is_zero() {
            self.pool.balance -= compensation;
            self.pool.earmark_total -= compensation;
            let bucket = self
                .pool
                .earmarks
                .get_mut(&cohort)
                .expect("nonzero earmark bucket exists");
            *bucket -= compensation;
        }
        self.accounts[owner.0 as usize].balance += &(&principal + compensation);
        self.deposits[deposit.0 as usize].status = DepositStatus::Matured;
        self.serving_margin -= &principal;
        self.serving_count -= 1;
        Ok(())
    }

    /// Seizes the principal into the pool (unreserved); the deposit becomes
    /// terminally confiscated. Its unpaid compensation share simply remains
    /// in the cohort earmark until that earmark is released.
    pub fn confiscate_deposit(&mut self, deposit: DepositId) -> Result<(), LedgerError> {
        let d = self.deposit(deposit)?;
        if !d.is_serving() {
            return Err(LedgerError::WrongState(deposit, d.status));
        }
        let principal = d.principal.clone();
        self.credit_pool(&principal);
        self.deposits[deposit.0 as usize].status = DepositStatus::Confiscated;
        self.serving_margin -= &principal;
        self.serving_count -= 1;
        Ok(())
    }

    /// Releases newly created currency into the pool.
    pub fn mint(&mut self, amount: &Amount) {
        self.credit_pool(amount);
        self.minted += amount;
    }

    /// Pays unreserved pool funds to a transaction account (maintainer
    /// rewards, initial distribution grants).
    pub fn pay_from_pool(&mut self, to: AccountId, amount: &Amount) -> Result<(), LedgerError> {
        self.account(to)?;
        let unreserved = self.pool.unreserved();
        if unreserved < *amount {
            return Err(LedgerError::InsufficientPool(unreserved, amount.clone()));
        }
        self.pool.balance -= amount;
        self.accounts[to.0 as usize].balance += amount;
        Ok(())
    }

    /// Reserves unreserved pool funds as the compensation earmark of the
    /// cohort registered at `interval`.
    pub fn add_earmark(&mut self, interval: u64, amount: &Amount) -> Result<(), LedgerError> {
        let unreserved = self.pool.unreserved();
        if unreserved < *amount {
            return Err(LedgerError::InsufficientPool(unreserved, amount.clone()));
        }
        if !amount.is_zero() {
            *self.pool.earmarks.entry(interval).or_default() += amount;
            self.pool.earmark_total += amount;
        }
        Ok(())
    }

    /// Drops the earmark of a finished cohort; the unpaid remainder becomes
    /// unreserved pool balance again. Returns the released amount.
    pub fn release_earmark(&mut self, interval: u64) -> Amount {
        if let Some(left) = self.pool.earmarks.remove(&interval) {
            self.pool.earmark_total -= &left;
            left
        } else {
            Amount::zero()
        }
    }

    pub fn transaction_total(&self) -> Amount {
        self.accounts.iter().map(|a| &a.balance).sum()
    }

    pub fn contract_total(&self) -> Amount {
        self.contracts.iter().map(|c| &c.balance).sum()
    }

    pub fn serving_margin_total(&self) -> Amount {
        self.serving_margin.clone()
    }

    /// The conservation identity, checked with exact integer equality. Also
    /// audits the running serving-deposit totals against a full recount.
    pub fn check_conservation(&self) -> Result<(), String> {
        let recounted_margin: Amount = self
            .deposits
            .iter()
            .filter(|d| d.is_serving())
            .map(|d| &d.principal)
            .sum();
        if recounted_margin != self.serving_margin {
            return Err(format!(
                "serving margin cache {} disagrees with recount {recounted_margin}",
                self.serving_margin
            ));
        }
        let recounted = self.deposits.iter().filter(|d| d.is_serving()).count() as u64;
        if recounted != self.serving_count {
            return Err(format!(
                "serving count cache {} disagrees with recount {recounted}",
                self.serving_count
            ));
        }
        let held = &(&(&self.transaction_total() + &self.contract_total()) + &recounted_margin)
            + &self.pool.balance;
        if held != self.minted {
            return Err(format!(
                "conservation broken: accounts+contracts+margins+pool = {held}, minted = {}",
                self.minted
            ));
        }
        if self.pool.balance < *self.pool.earmark_total() {
            return Err(format!(
                "pool balance {} below outstanding earmarks {}",
                self.pool.balance,
                self.pool.earmark_total()
            ));
        }
        Ok(())
    }

    /// Applies a logged operation; used to replay an exported operation log.
    pub fn apply(&mut self, op: &LedgerOp) -> Result<(), LedgerError> {
        match op {
            LedgerOp::CreateAccount => {
                self.create_account();
                Ok(())
            }
            LedgerOp::CreateContract { owner } => self.create_contract(*owner).map(|_| ()),
            LedgerOp::Transfer {
                from,
                to,
                amount,
                fee,
            } => self.transfer(*from, *to, amount, fee),
            LedgerOp::FundContract {
                owner,
                contract,
                amount,
                fee,
            } => self.fund_contract(*owner, *contract, amount, fee),
            LedgerOp::WithdrawContract {
                contract,
                to,
                amount,
            } => self.withdraw_contract(*contract, *to, amount),
            LedgerOp::ExecuteContract {
                contract,
                lines,
                price,
            } => self.execute_contract(*contract, *lines, price).map(|_| ()),
            LedgerOp::RegisterReliable {
                owner,
                margin,
                term,
                now,
                fee,
            } => self
                .register_reliable(*owner, margin, *term, *now, fee)
                .map(|_| ()),
            LedgerOp::MatureDeposit {
                deposit,
                compensation,
                now,
            } => self.mature_deposit(*deposit, compensation, *now),
            LedgerOp::ConfiscateDeposit { deposit } => self.confiscate_deposit(*deposit),
            LedgerOp::Mint { amount } => {
                self.mint(amount);
                Ok(())
            }
            LedgerOp::PayFromPool { to, amount } => self.pay_from_pool(*to, amount),
            LedgerOp::AddEarmark { interval, amount } => self.add_earmark(*interval, amount),
            LedgerOp::ReleaseEarmark { interval } => {
                self.release_earmark(*interval);
                Ok(())
            }
        }
    }
}

/// A loggable ledger operation. One line per applied operation makes a run's
/// money history replayable bit-for-bit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LedgerOp {
    CreateAccount,
    CreateContract {
        owner: AccountId,
    },
    Transfer {
        from: AccountId,
        to: AccountId,
        amount: Amount,
        fee: Amount,
    },
    FundContract {
        owner: AccountId,
        contract: ContractId,
        amount: Amount,
        fee: Amount,
    },
    WithdrawContract {
        contract: ContractId,
        to: AccountId,
        amount: Amount,
    },
    ExecuteContract {
        contract: ContractId,
        lines: u64,
        price: Amount,
    },
    RegisterReliable {
        owner: AccountId,
        margin: Amount,
        term: u64,
        now: u64,
        fee: Amount,
    },
    MatureDeposit {
        deposit: DepositId,
        compensation: Amount,
        now: u64,
    },
    ConfiscateDeposit {
        deposit: DepositId,
    },
    Mint {
        amount: Amount,
    },
    PayFromPool {
        to: AccountId,
        amount: Amount,
    },
    AddEarmark {
        interval: u64,
        amount: Amount,
    },
    ReleaseEarmark {
        interval: u64,
    },
}

impl LedgerOp {
    pub fn name(&self) -> &'static str {
        match self {
            LedgerOp::CreateAccount => "create-account",
            LedgerOp::CreateContract { .. } => "create-contract",
            LedgerOp::Transfer { .. } => "transfer",
            LedgerOp::FundContract { .. } => "fund-contract",
            LedgerOp::WithdrawContract { .. } => "withdraw-contract",
            LedgerOp::ExecuteContract { .. } => "execute-contract",
            LedgerOp::RegisterReliable { .. } => "register-reliable",
            LedgerOp::MatureDeposit { .. } => "mature-deposit",
            LedgerOp::ConfiscateDeposit { .. } => "confiscate-deposit",
            LedgerOp::Mint { .. } => "mint",
            LedgerOp::PayFromPool { .. } => "pay-from-pool",
            LedgerOp::AddEarmark { .. } => "add-earmark",
            LedgerOp::ReleaseEarmark { .. } => "release-earmark",
        }
    }

    pub fn params(&self) -> Vec<String> {
        match self {
            LedgerOp::CreateAccount => vec![],
            LedgerOp::CreateContract { owner } => vec![owner.to_string()],
            LedgerOp::Transfer {
                from,
                to,
                amount,
                fee,
            } => vec![
                from.to_string(),
                to.to_string(),
                amount.to_string(),
                fee.to_string(),
            ],
            LedgerOp::FundContract {
                owner,
                contract,
                amount,
                fee,
            } => vec![
                owner.to_string(),
                contract.to_string(),
                amount.to_string(),
                fee.to_string(),
            ],
            LedgerOp::WithdrawContract {
                contract,
                to,
                amount,
            } => vec![contract.to_string(), to.to_string(), amount.to_string()],
            LedgerOp::ExecuteContract {
                contract,
                lines,
                price,
            } => vec![contract.to_string(), lines.to_string(), price.to_string()],
            LedgerOp::RegisterReliable {
                owner,
                margin,
                term,
                now,
                fee,
            } => vec![
                owner.to_string(),
                margin.to_string(),
                term.to_string(),
                now.to_string(),
                fee.to_string(),
            ],
            LedgerOp::MatureDeposit {
                deposit,
                compensation,
                now,
            } => vec![
                deposit.to_string(),
                compensation.to_string(),
                now.to_string(),
            ],
            LedgerOp::ConfiscateDeposit { deposit } => vec![deposit.to_string()],
            LedgerOp::Mint { amount } => vec![amount.to_string()],
            LedgerOp::PayFromPool { to, amount } => vec![to.to_string(), amount.to_string()],
            LedgerOp::AddEarmark { interval, amount } => {
                vec![interval.to_string(), amount.to_string()]
            }
            LedgerOp::ReleaseEarmark { interval } => vec![interval.to_string()],
        }
    }

    /// Renders the exported log line: `height, op-name, params..., pool-balance`.
    pub fn log_line(&self, height: u64, pool_balance: &Amount) -> String {
        let mut fields = vec![height.to_string(), self.name().to_string()];
        fields.extend(self.params());
        fields.push(pool_balance.to_string());
        fields.join("\t")
    }
}
