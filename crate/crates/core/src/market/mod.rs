//! Market lifecycle: open a session, collect submissions, close and deliver
//! the combined forecast, then settle on the reported realization and utility.
//!
//! Settlement computes the pay-offs with the pre-update models and only then
//! applies the online update, so the allocation at `t` never sees the `t`-th
//! update. Each settlement is appended to the ledger as one record.

mod ledger;
mod registry;
mod session;
mod task;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocation::{
    in_sample_rewards, oos_rewards, oos_scores, settle_rewards, shapley_exact, shapley_sampled,
    AllocationConfig, AllocationError, LevelShares, ShapleyMethod, ShapleyState,
};
use crate::combination::{
    AvailabilityMask, CombinationError, QuantileModel, DEFAULT_LEARNING_RATE,
};
use crate::rng::derive_rng;

pub use ledger::{
    read_ledger, replay_ledger, write_ledger, LedgerEntry, LedgerError, LevelRecord, MarketHeader,
    SettlementRecord,
};
pub use registry::{SellerEntry, SellerRegistry};
pub use session::{Aggregate, Session, SessionState, SubmissionAck};
pub use task::MarketTask;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarketError {
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("a session for t={0} already exists")]
    DuplicateSession(u64),
    #[error("no session for t={0}")]
    UnknownSession(u64),
    #[error("unknown seller `{0}`")]
    UnknownSeller(String),
    #[error("seller `{0}` is already registered")]
    DuplicateSeller(String),
    #[error("session t={t} is closed; submission from `{seller}` recorded as missing")]
    LateSubmission { seller: String, t: u64 },
    #[error("expected {expected} values per submission, got {got}")]
    WrongValueCount { expected: usize, got: usize },
    #[error("submission from `{seller}` has crossing quantiles at horizon {horizon}")]
    QuantileCrossing { seller: String, horizon: usize },
    #[error("submission from `{0}` contains a non-finite value")]
    NonFinite(String),
    #[error("session t={t} is {found:?}, expected {expected:?}")]
    SessionState {
        t: u64,
        expected: SessionState,
        found: SessionState,
    },
    #[error("session t={0} is already settled")]
    AlreadySettled(u64),
    #[error("market has no registered sellers")]
    NoSellers,
    #[error("sellers cannot join while a closed session awaits settlement")]
    SettlementPending,
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error(transparent)]
    Combination(#[from] CombinationError),
    #[error(transparent)]
    Allocation(#[from] AllocationError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combiner {
    /// Plain convex combination; every seller must submit.
    Qr,
    /// Corrected weights `w + D alpha` for missing sellers.
    Rqr,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub combiner: Combiner,
    pub eta: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            combiner: Combiner::Rqr,
            eta: DEFAULT_LEARNING_RATE,
        }
    }
}

/// Running money totals per seller.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CumulativeRewards {
    pub utility: f64,
    pub in_sample: Vec<f64>,
    pub out_of_sample: Vec<f64>,
    pub total: Vec<f64>,
}

impl CumulativeRewards {
    fn with_sellers(n: usize) -> Self {
        Self {
            utility: 0.0,
            in_sample: vec![0.0; n],
            out_of_sample: vec![0.0; n],
            total: vec![0.0; n],
        }
    }

    fn add_seller(&mut self) {
        self.in_sample.push(0.0);
        self.out_of_sample.push(0.0);
        self.total.push(0.0);
    }
}

/// Learned state compared by replay.
#[derive(Clone, Debug, PartialEq)]
pub struct MarketState {
    pub models: Vec<QuantileModel>,
    pub phi_c: Vec<Vec<f64>>,
    pub cumulative: CumulativeRewards,
}

/// A single-client market for one task.
#[derive(Clone, Debug)]
pub struct Market {
    task: MarketTask,
    engine: EngineConfig,
    allocation: AllocationConfig,
    seed: u64,
    initial_sellers: Vec<String>,
    registry: SellerRegistry,
    models: Vec<QuantileModel>,
    shapley: Vec<ShapleyState>,
    sessions: BTreeMap<u64, Session>,
    cumulative: CumulativeRewards,
    next_seq: u64,
    ledger: Option<Vec<LedgerEntry>>,
}

impl Market {
    /// Builds a market that keeps its ledger in memory.
    pub fn new(
        task: MarketTask,
        sellers: &[&str],
        engine: EngineConfig,
        allocation: AllocationConfig,
        seed: u64,
    ) -> Result<Self, MarketError> {
        Self::from_header(MarketHeader {
            task,
            sellers: sellers.iter().map(|s| s.to_string()).collect(),
            engine,
            allocation,
            seed,
        })
    }

    pub fn from_header(header: MarketHeader) -> Result<Self, MarketError> {
        header.task.validate()?;
        header.allocation.validate()?;
        if header.engine.eta <= 0.0 || !header.engine.eta.is_finite() {
            return Err(CombinationError::InvalidLearningRate(header.engine.eta).into());
        }
        let mut registry = SellerRegistry::default();
        for id in &header.sellers {
            registry
                .register(id)
                .ok_or_else(|| MarketError::DuplicateSeller(id.clone()))?;
        }
        let n = registry.len();
        let (models, shapley) = if n == 0 {
            (Vec::new(), Vec::new())
        } else {
            let models = header
                .task
                .instances()
                .map(|(tau, _)| QuantileModel::new(tau, n, header.engine.eta))
                .collect::<Result<Vec<_>, _>>()?;
            let shapley = (0..models.len())
                .map(|_| ShapleyState::new(n, header.allocation.lambda))
                .collect::<Result<Vec<_>, _>>()?;
            (models, shapley)
        };
        Ok(Self {
            ledger: Some(vec![LedgerEntry::Header(header.clone())]),
            task: header.task,
            engine: header.engine,
            allocation: header.allocation,
            seed: header.seed,
            initial_sellers: header.sellers,
            registry,
            models,
            shapley,
            sessions: BTreeMap::new(),
            cumulative: CumulativeRewards::with_sellers(n),
            next_seq: 0,
        })
    }

    /// Stops keeping ledger entries in memory.
    pub fn without_ledger(mut self) -> Self {
        self.ledger = None;
        self
    }

    pub fn header(&self) -> MarketHeader {
        MarketHeader {
            task: self.task.clone(),
            sellers: self.initial_sellers.clone(),
            engine: self.engine,
            allocation: self.allocation,
            seed: self.seed,
        }
    }

    pub fn task(&self) -> &MarketTask {
        &self.task
    }

    pub fn engine(&self) -> EngineConfig {
        self.engine
    }

    pub fn allocation(&self) -> AllocationConfig {
        self.allocation
    }

    pub fn registry(&self) -> &SellerRegistry {
        &self.registry
    }

    /// One model per `(level, horizon)` instance in task layout order.
    pub fn models(&self) -> &[QuantileModel] {
        &self.models
    }

    pub fn shapley_states(&self) -> &[ShapleyState] {
        &self.shapley
    }

    pub fn cumulative(&self) -> &CumulativeRewards {
        &self.cumulative
    }

    pub fn ledger(&self) -> Option<&[LedgerEntry]> {
        self.ledger.as_deref()
    }

    pub fn session(&self, t: u64) -> Option<&Session> {
        self.sessions.get(&t)
    }

    pub(crate) fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn state(&self) -> MarketState {
        MarketState {
            models: self.models.clone(),
            phi_c: self.shapley.iter().map(|s| s.phi_c.clone()).collect(),
            cumulative: self.cumulative.clone(),
        }
    }

    /// Adds a seller with zero weight and zero correction in every model.
    pub fn register_seller(&mut self, id: &str) -> Result<usize, MarketError> {
        if self
            .sessions
            .values()
            .any(|s| s.state == SessionState::Closed)
        {
            return Err(MarketError::SettlementPending);
        }
        let index = self
            .registry
            .register(id)
            .ok_or_else(|| MarketError::DuplicateSeller(id.to_owned()))?;
        if index == 0 {
            let models = self
                .task
                .instances()
                .map(|(tau, _)| QuantileModel::new(tau, 1, self.engine.eta))
                .collect::<Result<Vec<_>, _>>()?;
            self.shapley = (0..models.len())
                .map(|_| ShapleyState::new(1, self.allocation.lambda))
                .collect::<Result<Vec<_>, _>>()?;
            self.models = models;
        } else {
            for model in &mut self.models {
                model.add_seller()?;
            }
            for state in &mut self.shapley {
                state.add_seller();
            }
        }
        self.cumulative.add_seller();
        let seq = self.take_seq();
        if let Some(ledger) = &mut self.ledger {
            ledger.push(LedgerEntry::Join {
                seq,
                seller: id.to_owned(),
            });
        }
        Ok(index)
    }

    fn take_seq(&mut self) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        seq
    }

    pub fn open_session(&mut self, t: u64) -> Result<&Session, MarketError> {
        if self.sessions.contains_key(&t) {
            return Err(MarketError::DuplicateSession(t));
        }
        Ok(self
            .sessions
            .entry(t)
            .or_insert_with(|| Session::open(&self.task.task_id, t)))
    }

    /// Stores `values` (laid out `values[h * m + q]`), replacing any earlier
    /// submission from the same seller in this session.
    pub fn submit_forecast(
        &mut self,
        t: u64,
        seller: &str,
        values: &[f64],
    ) -> Result<SubmissionAck, MarketError> {
        let index = self
            .registry
            .index_of(seller)
            .ok_or_else(|| MarketError::UnknownSeller(seller.to_owned()))?;
        let session = self
            .sessions
            .get_mut(&t)
            .ok_or(MarketError::UnknownSession(t))?;
        if session.state != SessionState::Open {
            if !session.late.contains(&index) {
                session.late.push(index);
            }
            return Err(MarketError::LateSubmission {
                seller: seller.to_owned(),
                t,
            });
        }
        let expected = self.task.values_per_seller();
        if values.len() != expected {
            return Err(MarketError::WrongValueCount {
                expected,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(MarketError::NonFinite(seller.to_owned()));
        }
        let m = self.task.quantile_levels.len();
        for (horizon, chunk) in values.chunks(m).enumerate() {
            if chunk.windows(2).any(|w| w[0] > w[1]) {
                return Err(MarketError::QuantileCrossing {
                    seller: seller.to_owned(),
                    horizon,
                });
            }
        }
        let replaced = session.submissions.insert(index, values.to_vec()).is_some();
        Ok(SubmissionAck {
            session_id: session.session_id.clone(),
            seller: seller.to_owned(),
            replaced,
        })
    }

    /// Closes the session, derives the availability mask and computes the
    /// combined forecast of every model instance.
    pub fn close_and_aggregate(&mut self, t: u64) -> Result<Aggregate, MarketError> {
        if self.registry.is_empty() {
            return Err(MarketError::NoSellers);
        }
        let n = self.registry.len();
        let session = self
            .sessions
            .get(&t)
            .ok_or(MarketError::UnknownSession(t))?;
        if session.state != SessionState::Open {
            return Err(MarketError::SessionState {
                t,
                expected: SessionState::Open,
                found: session.state,
            });
        }
        let alpha = AvailabilityMask::from_missing(
            (0..n)
                .map(|i| !session.submissions.contains_key(&i))
                .collect(),
        );
        let combined = self
            .models
            .iter()
            .enumerate()
            .map(|(k, model)| {
                let x = instance_inputs(session, k, n);
                match self.engine.combiner {
                    Combiner::Rqr => model.rqr_predict(&x, &alpha),
                    Combiner::Qr => model.qr_predict(&x, &alpha),
                }
            })
            .collect::<Result<Vec<_>, _>>()?;

        self.registry.record_session(alpha.as_slice());
        let session = self.sessions.get_mut(&t).expect("checked above");
        session.state = SessionState::Closed;
        session.alpha = Some(alpha.clone());
        session.combined = Some(combined.clone());
        Ok(Aggregate {
            session_id: session.session_id.clone(),
            degenerate: alpha.all_missing_flag(),
            alpha,
            combined,
        })
    }

    /// Settles a closed session on realization `y` and client utility.
    ///
    /// Nothing is committed unless every step succeeds.
    pub fn settle_session(
        &mut self,
        t: u64,
        y: f64,
        utility: f64,
    ) -> Result<SettlementRecord, MarketError> {
        let session = self
            .sessions
            .get(&t)
            .ok_or(MarketError::UnknownSession(t))?;
        match session.state {
            SessionState::Closed => {}
            SessionState::Settled => return Err(MarketError::AlreadySettled(t)),
            SessionState::Open => {
                return Err(MarketError::SessionState {
                    t,
                    expected: SessionState::Closed,
                    found: SessionState::Open,
                })
            }
        }
        if !(utility.is_finite() && utility >= 0.0) {
            return Err(AllocationError::NegativeUtility(utility).into());
        }
        if !y.is_finite() {
            return Err(MarketError::Malformed("realization must be finite".into()));
        }
        let n = self.registry.len();
        let alpha = session.alpha.clone().expect("closed sessions carry a mask");
        let combined = session
            .combined
            .clone()
            .expect("closed sessions carry forecasts");

        let mut models = self.models.clone();
        let mut states = self.shapley.clone();
        let mut shares = Vec::with_capacity(models.len());
        let mut partial = Vec::with_capacity(models.len());
        for (k, (model, state)) in models.iter_mut().zip(states.iter_mut()).enumerate() {
            let raw = instance_inputs(session, k, n);
            let x_hat = alpha.apply(&raw);
            let phi_s = match self.allocation.shapley {
                ShapleyMethod::Exact => shapley_exact(model, &x_hat, &alpha, y)?,
                ShapleyMethod::PermutationSampling { permutations } => {
                    let mut rng = derive_rng(self.seed, k as u64, t);
                    shapley_sampled(model, &x_hat, &alpha, y, permutations, &mut rng)?.values
                }
            };
            state.recursive_update(&phi_s)?;
            let r_is = in_sample_rewards(&state.phi_c, &alpha)?.shares;
            let scores = oos_scores(model.tau(), y, &x_hat, &alpha)?;
            let r_oos = oos_rewards(&scores, &alpha)?.shares;
            match self.engine.combiner {
                Combiner::Rqr => model.rqr_update(&x_hat, &alpha, y)?,
                Combiner::Qr => model.qr_update(&x_hat, &alpha, y)?,
            };
            shares.push(LevelShares {
                in_sample: r_is,
                out_of_sample: r_oos,
            });
            partial.push((x_hat, phi_s, scores));
        }
        let breakdown = settle_rewards(utility, self.allocation.delta, &shares)?;

        let levels = self
            .task
            .instances()
            .zip(partial)
            .zip(breakdown.levels)
            .zip(models.iter().zip(&states))
            .enumerate()
            .map(
                |(k, ((((tau, horizon), (x_hat, phi_s, scores)), money), (model, state)))| {
                    LevelRecord {
                        tau,
                        horizon,
                        x_hat,
                        combined: combined[k],
                        phi_s,
                        phi_c: state.phi_c.clone(),
                        scores,
                        r_is: money.r_is,
                        r_oos: money.r_oos,
                        utility: money.utility,
                        reward_is: money.reward_is,
                        reward_oos: money.reward_oos,
                        reward: money.reward,
                        w: model.weights().to_vec(),
                        d: model.correction().to_vec(),
                    }
                },
            )
            .collect::<Vec<_>>();

        let late = session
            .late
            .iter()
            .map(|&i| self.registry.entries()[i].id.clone())
            .collect();
        let record = SettlementRecord {
            seq: self.next_seq,
            t,
            session: session.session_id.clone(),
            degenerate: alpha.all_missing_flag(),
            alpha,
            late,
            y,
            utility,
            levels,
            totals: breakdown.totals,
        };

        // commit
        self.next_seq += 1;
        self.models = models;
        self.shapley = states;
        self.cumulative.utility += utility;
        for level in &record.levels {
            for i in 0..n {
                self.cumulative.in_sample[i] += level.reward_is[i];
                self.cumulative.out_of_sample[i] += level.reward_oos[i];
            }
        }
        for (acc, r) in self.cumulative.total.iter_mut().zip(&record.totals) {
            *acc += r;
        }
        let session = self.sessions.get_mut(&t).expect("checked above");
        session.state = SessionState::Settled;
        session.submissions.clear();
        if let Some(ledger) = &mut self.ledger {
            ledger.push(LedgerEntry::Settlement(record.clone()));
        }
        Ok(record)
    }
}

/// Submitted values of model instance `k`, 0 for absent sellers.
fn instance_inputs(session: &Session, k: usize, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| session.submissions.get(&i).map_or(0.0, |values| values[k]))
        .collect()
}
