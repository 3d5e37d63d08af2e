use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Instant;

use advice_core::advisor::action_displacement;
use advice_core::desk::{self, TaxiWorld};
use advice_core::explain::{generate_adesse, generate_baseline, ExplainConfig};
use advice_core::grid::{clip_move, CellIndex, GridSpec};
use advice_core::nn::{QNet, TrainConfig};
use advice_core::predictor::{Domain, Predictor, StateRef};
use advice_core::taxi::{TaxiState, MAX_STEP};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::store::{Event, EventLog};
use crate::types::*;

#[derive(Debug, Error)]
pub enum GameError {
    #[error("unknown session {0}")]
    NotFound(String),
    #[error("{0}")]
    Gone(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Internal(String),
}

#[derive(Debug, Clone)]
pub struct GameConfig {
    pub grid_side: usize,
    /// Seeds the demand world and every trial's episode.
    pub seed: u64,
    pub lime_samples: usize,
    pub explain: ExplainConfig,
    pub data_dir: PathBuf,
}

impl GameConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            grid_side: 10,
            seed: 0,
            lime_samples: 1000,
            explain: ExplainConfig::default(),
            data_dir: data_dir.into(),
        }
    }
}

/// Frozen networks shared by every session.
#[derive(Debug, Clone)]
pub struct Models {
    pub predictor: Predictor<f64>,
    pub qnet: QNet<f64>,
    pub trained: bool,
}

impl Models {
    pub fn random_init(seed: u64) -> anyhow::Result<Self> {
        Ok(Self {
            predictor: Predictor::untrained(Domain::Taxi, &TrainConfig::taxi())?,
            qnet: QNet::new(desk::taxi_qnet_config(), seed)?,
            trained: false,
        })
    }

    pub fn load(predictor: &Path, qnet: &Path) -> anyhow::Result<Self> {
        use anyhow::Context;
        Ok(Self {
            predictor: Predictor::load(predictor).with_context(|| format!("loading {}", predictor.display()))?,
            qnet: QNet::load(qnet).with_context(|| format!("loading {}", qnet.display()))?,
            trained: true,
        })
    }
}

/// Episode seed of one trial.
pub fn trial_seed(seed: u64, ordinal: u64, trial: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(2 * ordinal + trial as u64 + 1)
}

/// Counterbalanced order of the `n`th unhinted session.
pub fn alternating_order(n: u64) -> [Condition; 2] {
    if n % 2 == 0 {
        [Condition::Adesse, Condition::Baseline]
    } else {
        [Condition::Baseline, Condition::Adesse]
    }
}

struct Served {
    trial: usize,
    step: usize,
    at: Instant,
    payload: StepPayload,
}

struct Session {
    id: String,
    order: [Condition; 2],
    seeds: [u64; 2],
    trial: usize,
    state: TaxiState,
    last_cell: CellIndex,
    rng: ChaCha8Rng,
    reward: [f64; 2],
    log: Vec<StepRecord>,
    done: [bool; 2],
    answers: [Option<SatisfactionResponse>; 2],
    served: Option<Served>,
}

impl Session {
    fn new(world: &TaxiWorld, id: String, order: [Condition; 2], seeds: [u64; 2]) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seeds[0]);
        let state = world.env.new_episode(&mut rng);
        Self {
            id,
            order,
            seeds,
            trial: 0,
            last_cell: state.taxi,
            state,
            rng,
            reward: [0.0; 2],
            log: Vec::new(),
            done: [false; 2],
            answers: [None, None],
            served: None,
        }
    }

    fn step(&self) -> usize {
        self.log.iter().filter(|r| r.trial_index == self.trial).count()
    }

    fn view(&self) -> SessionView {
        SessionView {
            id: self.id.clone(),
            condition_order: self.order,
            trial_index: self.trial,
            step: self.step(),
            accumulated_reward: self.reward[self.trial],
            trial_seeds: self.seeds,
            trials_complete: self.done,
            questionnaires: [self.answers[0].is_some(), self.answers[1].is_some()],
            complete: self.done.iter().all(|d| *d),
        }
    }

    fn ensure_active(&self) -> Result<(), GameError> {
        if self.done[self.trial] {
            let msg = if self.done.iter().all(|d| *d) {
                format!("session {} is complete", self.id)
            } else {
                format!("trial {} of session {} is finished; submit its questionnaire", self.trial, self.id)
            };
            return Err(GameError::Gone(msg));
        }
        Ok(())
    }

    /// Advances the simulator by a logged decision; returns the simulated
    /// reward.
    fn apply_action(&mut self, world: &TaxiWorld, record: StepRecord) -> Result<f64, GameError> {
        let t = world
            .env
            .step(&self.state, record.chosen, &mut self.rng)
            .map_err(|e| GameError::Internal(e.to_string()))?;
        self.last_cell = self.state.taxi;
        self.state = t.state;
        self.reward[self.trial] += t.reward;
        self.log.push(record);
        self.served = None;
        if self.step() == STEPS_PER_TRIAL {
            self.done[self.trial] = true;
        }
        Ok(t.reward)
    }

    fn apply_answer(&mut self, world: &TaxiWorld, trial: usize, response: SatisfactionResponse) {
        self.answers[trial] = Some(response);
        if trial == self.trial && self.trial + 1 < TRIALS {
            self.trial += 1;
            self.rng = ChaCha8Rng::seed_from_u64(self.seeds[self.trial]);
            self.state = world.env.new_episode(&mut self.rng);
            self.last_cell = self.state.taxi;
            self.served = None;
        }
    }
}

pub struct Game {
    config: GameConfig,
    models: Models,
    world: TaxiWorld,
    log: EventLog,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    /// Session ids in creation order, with ordinal and unhinted counters.
    registry: Mutex<(Vec<String>, u64, u64)>,
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl Game {
    /// Opens the event log in the data directory and replays it.
    pub fn open(config: GameConfig, models: Models) -> anyhow::Result<Self> {
        let grid = GridSpec::square(config.grid_side)?;
        let world = desk::taxi_world(grid, config.seed);
        let (log, events) = EventLog::open(&config.data_dir)?;
        let game = Self {
            config,
            models,
            world,
            log,
            sessions: RwLock::new(HashMap::new()),
            registry: Mutex::new((Vec::new(), 0, 0)),
        };
        let n = events.len();
        for e in events {
            game.replay(e)?;
        }
        if n > 0 {
            tracing::info!("replayed {n} events from {}", game.log.path().display());
        }
        Ok(game)
    }

    pub fn config(&self) -> &GameConfig {
        &self.config
    }

    pub fn models(&self) -> &Models {
        &self.models
    }

    pub fn world(&self) -> &TaxiWorld {
        &self.world
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    fn replay(&self, event: Event) -> anyhow::Result<()> {
        match event {
            Event::Created {
                id,
                ordinal,
                hinted,
                condition_order,
                trial_seeds,
            } => {
                let mut reg = lock(&self.registry);
                reg.0.push(id.clone());
                reg.1 = reg.1.max(ordinal + 1);
                if !hinted {
                    reg.2 += 1;
                }
                let s = Session::new(&self.world, id.clone(), condition_order, trial_seeds);
                self.sessions
                    .write()
                    .unwrap_or_else(|e| e.into_inner())
                    .insert(id, Arc::new(Mutex::new(s)));
            }
            Event::Action { id, record } => {
                let s = self.session(&id)?;
                let mut s = lock(&s);
                let logged = record.reward;
                let step = record.step;
                let reward = s.apply_action(&self.world, record)?;
                if reward != logged {
                    tracing::warn!("session {id} step {step}: replayed reward {reward} differs from logged {logged}");
                }
            }
            Event::Questionnaire {
                id,
                trial_index,
                response,
                ..
            } => {
                let s = self.session(&id)?;
                lock(&s).apply_answer(&self.world, trial_index, response);
            }
        }
        Ok(())
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, GameError> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| GameError::NotFound(id.to_string()))
    }

    fn append(&self, event: &Event) -> Result<(), GameError> {
        self.log
            .append(event)
            .map_err(|e| GameError::Internal(format!("event log: {e}")))
    }

    pub fn create_session(&self, first: Option<Condition>) -> Result<SessionView, GameError> {
        let mut reg = lock(&self.registry);
        let ordinal = reg.1;
        let order = match first {
            Some(c) => [c, c.other()],
            None => alternating_order(reg.2),
        };
        let id = uuid::Uuid::new_v4().simple().to_string();
        let seeds = [0, 1].map(|t| trial_seed(self.config.seed, ordinal, t));
        self.append(&Event::Created {
            id: id.clone(),
            ordinal,
            hinted: first.is_some(),
            condition_order: order,
            trial_seeds: seeds,
        })?;
        reg.0.push(id.clone());
        reg.1 += 1;
        if first.is_none() {
            reg.2 += 1;
        }
        let s = Session::new(&self.world, id.clone(), order, seeds);
        let view = s.view();
        self.sessions
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(id, Arc::new(Mutex::new(s)));
        Ok(view)
    }

    pub fn session_view(&self, id: &str) -> Result<SessionView, GameError> {
        let s = self.session(id)?;
        let view = lock(&s).view();
        Ok(view)
    }

    /// Current decision with its explanation. Repeated calls before an
    /// action return the same payload and keep the first serve time.
    pub fn get_step(&self, id: &str) -> Result<StepPayload, GameError> {
        let s = self.session(id)?;
        let mut s = lock(&s);
        s.ensure_active()?;
        let (trial, step) = (s.trial, s.step());
        if let Some(served) = &s.served {
            if served.trial == trial && served.step == step {
                return Ok(served.payload.clone());
            }
        }
        let payload = self.build_payload(&s, trial, step)?;
        s.served = Some(Served {
            trial,
            step,
            at: Instant::now(),
            payload: payload.clone(),
        });
        Ok(payload)
    }

    fn build_payload(&self, s: &Session, trial: usize, step: usize) -> Result<StepPayload, GameError> {
        let condition = s.order[trial];
        let state = StateRef::Taxi(&s.state, &self.world.ctx);
        let seed = s.seeds[trial].wrapping_add(step as u64);
        let internal = |e: advice_core::explain::ExplainError| GameError::Internal(e.to_string());
        let (advised, explanation) = match condition {
            Condition::Adesse => {
                let cfg = ExplainConfig {
                    seed,
                    ..self.config.explain.clone()
                };
                let e = generate_adesse(&self.models.predictor, &self.models.qnet, state, &cfg).map_err(internal)?;
                (e.advised_action, ExplanationPayload::Adesse(e))
            }
            Condition::Baseline => {
                let e = generate_baseline(&self.models.predictor, &self.models.qnet, state, self.config.lime_samples, seed)
                    .map_err(internal)?;
                (e.advised_action, ExplanationPayload::Baseline(e))
            }
        };
        let advised_move = action_displacement(Domain::Taxi, advised)
            .ok_or_else(|| GameError::Internal(format!("adviser returned action {advised}")))?;
        Ok(StepPayload {
            session_id: s.id.clone(),
            condition,
            trial_index: trial,
            step,
            steps_per_trial: STEPS_PER_TRIAL,
            current_cell: s.state.taxi,
            last_cell: s.last_cell,
            occupied: s.state.occupied,
            advised_action: advised,
            advised_move,
            advised_cell: clip_move(s.state.taxi, advised_move, self.world.env.grid()),
            accumulated_reward: s.reward[trial],
            explanation,
        })
    }

    pub fn post_action(&self, id: &str, req: &ActionRequest) -> Result<StepOutcome, GameError> {
        if req.action.reach() > MAX_STEP {
            return Err(GameError::Invalid(format!(
                "action ({}, {}) moves more than {MAX_STEP} cells",
                req.action.dx, req.action.dy
            )));
        }
        let s = self.session(id)?;
        let mut s = lock(&s);
        s.ensure_active()?;
        let (trial, step) = (s.trial, s.step());
        if req.step != step {
            return Err(GameError::Conflict(format!("action for step {} but the trial is at step {step}", req.step)));
        }
        let Some(served) = s.served.as_ref().filter(|v| v.trial == trial && v.step == step) else {
            return Err(GameError::Conflict(format!("step {step} has not been served yet")));
        };
        let decision_time_ms = served.at.elapsed().as_millis() as u64;
        let advised = served.payload.advised_move;

        // Simulate on a copy so a failed log write leaves the session as is.
        let mut rng = s.rng.clone();
        let t = self
            .world
            .env
            .step(&s.state, req.action, &mut rng)
            .map_err(|e| GameError::Internal(e.to_string()))?;
        let state_json = serde_json::to_vec(&s.state).map_err(|e| GameError::Internal(e.to_string()))?;
        let record = StepRecord {
            trial_index: trial,
            step,
            state_digest: fnv1a(&state_json),
            advised,
            chosen: req.action,
            followed: req.action == advised,
            reward: t.reward,
            decision_time_ms,
        };
        self.append(&Event::Action {
            id: id.to_string(),
            record: record.clone(),
        })?;
        s.apply_action(&self.world, record)?;
        Ok(StepOutcome {
            trial_index: trial,
            step,
            advised,
            chosen: req.action,
            followed: req.action == advised,
            reward: t.reward,
            accumulated_reward: s.reward[trial],
            decision_time_ms,
            trial_complete: s.done[trial],
            session_complete: s.done.iter().all(|d| *d),
        })
    }

    pub fn post_questionnaire(&self, id: &str, req: QuestionnaireRequest) -> Result<QuestionnaireAck, GameError> {
        req.response.validate().map_err(GameError::Invalid)?;
        let s = self.session(id)?;
        let mut s = lock(&s);
        let trial = match req.trial_index {
            Some(t) if t >= TRIALS => return Err(GameError::Invalid(format!("trial_index {t} out of range"))),
            Some(t) => t,
            None => (0..TRIALS)
                .find(|&t| s.done[t] && s.answers[t].is_none())
                .ok_or_else(|| GameError::Conflict("no finished trial is awaiting a questionnaire".into()))?,
        };
        if !s.done[trial] {
            return Err(GameError::Conflict(format!("trial {trial} is not finished")));
        }
        if s.answers[trial].is_some() {
            return Err(GameError::Conflict(format!("trial {trial} already has a questionnaire")));
        }
        let condition = s.order[trial];
        self.append(&Event::Questionnaire {
            id: id.to_string(),
            trial_index: trial,
            condition,
            response: req.response.clone(),
        })?;
        s.apply_answer(&self.world, trial, req.response);
        Ok(QuestionnaireAck {
            session_id: id.to_string(),
            trial_index: trial,
            condition,
        })
    }

    fn ordered_sessions(&self) -> Vec<Arc<Mutex<Session>>> {
        let ids = lock(&self.registry).0.clone();
        ids.iter().filter_map(|id| self.session(id).ok()).collect()
    }

    pub fn game_log(&self) -> Vec<GameLogRow> {
        let mut rows = Vec::new();
        for s in self.ordered_sessions() {
            let s = lock(&s);
            rows.extend(s.log.iter().map(|r| GameLogRow {
                session_id: s.id.clone(),
                condition: s.order[r.trial_index],
                trial_index: r.trial_index,
                step: r.step,
                advised_dx: r.advised.dx,
                advised_dy: r.advised.dy,
                chosen_dx: r.chosen.dx,
                chosen_dy: r.chosen.dy,
                followed: r.followed,
                reward: r.reward,
                decision_time_ms: r.decision_time_ms,
            }));
        }
        rows
    }

    pub fn questionnaire_rows(&self) -> Vec<QuestionnaireRow> {
        let mut rows = Vec::new();
        for s in self.ordered_sessions() {
            let s = lock(&s);
            for (t, a) in s.answers.iter().enumerate() {
                let Some(a) = a else { continue };
                let [a1, a2, a3] = a.attention_checks.clone();
                rows.push(QuestionnaireRow {
                    session_id: s.id.clone(),
                    condition: s.order[t],
                    trial_index: t,
                    understand: a.understand,
                    satisfying: a.satisfying,
                    detailed: a.detailed,
                    complete: a.complete,
                    actionable: a.actionable,
                    reliable: a.reliable,
                    trustworthy: a.trustworthy,
                    followed_advice: a.followed_advice,
                    confidence: a.confidence,
                    strategy: a.strategy.clone(),
                    attention_1: a1,
                    attention_2: a2,
                    attention_3: a3,
                });
            }
        }
        rows
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orders_alternate_and_seeds_differ() {
        assert_eq!(alternating_order(0), [Condition::Adesse, Condition::Baseline]);
        assert_eq!(alternating_order(1), [Condition::Baseline, Condition::Adesse]);
        assert_ne!(trial_seed(3, 0, 0), trial_seed(3, 0, 1));
        assert_ne!(trial_seed(3, 0, 1), trial_seed(3, 1, 0));
    }
}
