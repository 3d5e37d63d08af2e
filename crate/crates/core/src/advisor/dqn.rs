//! Dueling double deep Q-learning with uniform experience replay.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adapters::AdvisedEnv;
use super::replay::{ReplayBuffer, Transition};
use super::{argmax, AdviseError, QFunction};
use crate::grid::GridSpec;
use crate::nn::{clip_grad_norm, QNet, QNetAdam, QNetConfig};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DqnConfig {
    pub learning_rate: f64,
    pub gamma: f64,
    /// Time constant, in episodes, of the exploration decay.
    pub epsilon_decay: f64,
    pub epsilon_end: f64,
    /// Episodes between hard copies of the online net into the target net.
    pub target_update_interval: usize,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub episodes: usize,
    /// Decisions between gradient updates.
    pub train_every: usize,
    /// Transitions collected before the first update.
    pub warmup: usize,
    pub grad_clip: f64,
    pub seed: u64,
}

impl DqnConfig {
    pub fn taxi() -> Self {
        Self {
            learning_rate: 0.001,
            gamma: 0.99,
            epsilon_decay: 675.0,
            epsilon_end: 0.05,
            target_update_interval: 11,
            replay_capacity: 15_000,
            batch_size: 64,
            episodes: 2000,
            train_every: 1,
            warmup: 500,
            grad_clip: 10.0,
            seed: 0,
        }
    }

    pub fn wildfire() -> Self {
        Self {
            gamma: 0.95,
            target_update_interval: 256,
            ..Self::taxi()
        }
    }

    pub fn validate(&self) -> Result<(), AdviseError> {
        let bad = |m: &str| Err(AdviseError::Config(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if self.replay_capacity < self.batch_size || self.batch_size == 0 {
            return bad("replay capacity must be at least the batch size, which must be positive");
        }
        if self.epsilon_decay <= 0.0 || !(0.0..=1.0).contains(&self.epsilon_end) {
            return bad("epsilon decay must be positive and its floor in [0, 1]");
        }
        if self.learning_rate < 0.0 || self.target_update_interval == 0 {
            return bad("learning rate must be non-negative and the target interval positive");
        }
        Ok(())
    }
}

/// `end + (1 - end) * exp(-episode / decay)`.
pub fn epsilon(episode: usize, decay: f64, end: f64) -> f64 {
    end + (1.0 - end) * (-(episode as f64) / decay).exp()
}

/// Bootstrapped target: the online net picks the next action, the target
/// net values it.
pub fn double_dqn_target<T: Scalar>(
    reward: T,
    discount: T,
    terminal: bool,
    q_online_next: &[T],
    q_target_next: &[T],
) -> T {
    if terminal {
        reward
    } else {
        reward + discount * q_target_next[argmax(q_online_next)]
    }
}

#[derive(Debug, Clone)]
pub struct DqnOutcome<T> {
    pub model: QNet<T>,
    pub episode_rewards: Vec<f64>,
    /// Mean Huber loss of the updates in each episode (0 before warmup).
    pub episode_losses: Vec<f64>,
}

fn huber<T: Scalar>(e: T) -> (T, T) {
    let one = T::one();
    if e.abs() <= one {
        (T::of(0.5) * e * e, e)
    } else {
        (e.abs() - T::of(0.5), e.signum())
    }
}

fn update<T: Scalar>(
    online: &mut QNet<T>,
    target: &QNet<T>,
    opt: &mut QNetAdam<T>,
    batch: &[&Transition<T>],
    grid: GridSpec,
    grad_clip: T,
) -> Result<T, AdviseError> {
    let mut grad = vec![T::zero(); online.param_count()];
    let mut loss = T::zero();
    let scale = T::one() / T::of_usize(batch.len());
    let mut dq = vec![T::zero(); online.actions()];
    for t in batch {
        let y = if t.terminal {
            t.reward
        } else {
            let qo = online.q_values(&t.next_maps, grid, t.next_agent)?;
            let qt = target.q_values(&t.next_maps, grid, t.next_agent)?;
            double_dqn_target(t.reward, t.discount, false, &qo, &qt)
        };
        let (q, cache) = online.forward_cached(&t.maps, grid, t.agent)?;
        let (l, d) = huber(q[t.action] - y);
        loss += l * scale;
        dq.iter_mut().for_each(|v| *v = T::zero());
        dq[t.action] = d * scale;
        online.backward(&cache, &dq, &mut grad);
    }
    clip_grad_norm(&mut grad, grad_clip);
    opt.step(online, &grad);
    Ok(loss)
}

fn to_t<T: Scalar>(v: &[f64]) -> Vec<T> {
    v.iter().map(|x| T::of(*x)).collect()
}

pub fn train_dqn<T: Scalar, E: AdvisedEnv>(
    env: &mut E,
    net_config: QNetConfig,
    config: &DqnConfig,
) -> Result<DqnOutcome<T>, AdviseError> {
    config.validate()?;
    if net_config.actions != env.action_count() {
        return Err(AdviseError::Config(format!(
            "network has {} actions, environment {}",
            net_config.actions,
            env.action_count()
        )));
    }
    let mut online = QNet::<T>::new(net_config, config.seed)?;
    let mut target = online.clone();
    let mut opt = QNetAdam::new(&online, config.learning_rate);
    let mut replay = ReplayBuffer::new(config.replay_capacity);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let gamma = config.gamma;
    let clip = T::of(config.grad_clip);
    let mut decisions = 0usize;
    let mut out = DqnOutcome {
        model: online.clone(),
        episode_rewards: Vec::with_capacity(config.episodes),
        episode_losses: Vec::with_capacity(config.episodes),
    };

    for episode in 0..config.episodes {
        let eps = epsilon(episode, config.epsilon_decay, config.epsilon_end);
        env.reset(&mut rng);
        let mut sigma = env.sigma()?;
        let grid = sigma.grid;
        let mut maps: Vec<T> = to_t(&sigma.maps);
        let (mut loss_sum, mut updates) = (0.0, 0usize);
        while !env.is_done() {
            let action = if rng.random_bool(eps) {
                rng.random_range(0..env.action_count())
            } else {
                argmax(&online.q_values(&maps, grid, sigma.agent)?)
            };
            let step = env.step(action, &mut rng)?;
            let mut reward = 0.0;
            let mut discount = 1.0;
            for r in &step.rewards {
                reward += discount * r;
                discount *= gamma;
            }
            let next = env.sigma()?;
            let next_maps: Vec<T> = to_t(&next.maps);
            replay.push(Transition {
                maps: std::mem::take(&mut maps),
                agent: sigma.agent,
                action,
                reward: T::of(reward),
                discount: T::of(discount),
                next_maps: next_maps.clone(),
                next_agent: next.agent,
                // The horizon is a time limit, so the final state still
                // bootstraps.
                terminal: false,
            });
            sigma = next;
            maps = next_maps;
            decisions += 1;

            if replay.len() >= config.warmup.max(config.batch_size) && decisions % config.train_every.max(1) == 0 {
                let batch = replay.sample(config.batch_size, &mut rng);
                let l = update(&mut online, &target, &mut opt, &batch, grid, clip)?;
                if !l.is_finite() || !online.is_finite() {
                    return Err(AdviseError::Diverged { episode });
                }
                loss_sum += l.as_f64();
                updates += 1;
            }
        }
        if (episode + 1) % config.target_update_interval == 0 {
            target = online.clone();
        }
        out.episode_rewards.push(env.episode_reward());
        out.episode_losses.push(if updates > 0 { loss_sum / updates as f64 } else { 0.0 });
        if episode % 25 == 0 {
            log::debug!(
                "episode {episode} eps {eps:.3} reward {:.1} loss {:.4}",
                env.episode_reward(),
                out.episode_losses.last().unwrap()
            );
        }
    }
    out.model = online;
    Ok(out)
}

pub enum EvalPolicy<'a, T> {
    Greedy(&'a dyn QFunction<T>),
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub rewards: Vec<f64>,
    pub scores: Vec<f64>,
    pub mean_reward: f64,
    pub mean_score: f64,
}

/// Runs `episodes` episodes; episode `i` starts from the state produced by
/// seed `seed + i`, whatever the policy.
pub fn evaluate<T: Scalar, E: AdvisedEnv>(
    env: &mut E,
    policy: &EvalPolicy<'_, T>,
    episodes: usize,
    seed: u64,
) -> Result<EvalSummary, AdviseError> {
    let mut policy_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut rewards = Vec::with_capacity(episodes);
    let mut scores = Vec::with_capacity(episodes);
    for i in 0..episodes {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
        env.reset(&mut rng);
        while !env.is_done() {
            let action = match policy {
                EvalPolicy::Random => policy_rng.random_range(0..env.action_count()),
                EvalPolicy::Greedy(q) => argmax(&q.q_values(&env.sigma()?.cast())?),
            };
            env.step(action, &mut rng)?;
        }
        rewards.push(env.episode_reward());
        scores.push(env.score());
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    Ok(EvalSummary {
        mean_reward: mean(&rewards),
        mean_score: mean(&scores),
        rewards,
        scores,
    })
}
