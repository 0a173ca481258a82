//! The learner: twin critics over full state, an actor over observations,
//! mixed 1-step and N-step targets, Q-filtered behavioural cloning, auxiliary
//! prediction, exploration, pre-training and reset-to-demonstration.

mod actor;

pub use actor::{ActorNet, ActorTape};

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::approximator::{prefixed, strip_prefix, Activation, Adam, AdamConfig, AdamState, ConvEncoder, ConvSpec, DenseNetwork, Gradients, Module, NamedArray, TargetMode, TargetPair};
use crate::envs::{EnvSnapshot, ObsLayout, ResetDirective};
use crate::experience::{assemble_episode, BufferConfig, NStepSegment, PrioritizedBuffer, SampleBatch, Transition, ACTION_DIM};
use crate::math::{clamp, powi};
use crate::rng::{gaussian, seeded, stream, RngState};
use crate::{Error, Result};

/// Independent switches for each extension over plain DDPG.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Toggles {
    pub twin_critic: bool,
    pub prioritized: bool,
    pub nstep: bool,
    pub bc_loss: bool,
    pub q_filter: bool,
    pub aux_outputs: bool,
    /// Critic sees the full simulator state; otherwise the actor observation.
    pub asymmetric: bool,
    pub pretrain: bool,
    pub reset_demo: bool,
}

impl Toggles {
    pub const ALL_ON: Self = Self {
        twin_critic: true,
        prioritized: true,
        nstep: true,
        bc_loss: true,
        q_filter: true,
        aux_outputs: true,
        asymmetric: true,
        pretrain: true,
        reset_demo: true,
    };

    pub const ALL_OFF: Self = Self {
        twin_critic: false,
        prioritized: false,
        nstep: false,
        bc_loss: false,
        q_filter: false,
        aux_outputs: false,
        asymmetric: false,
        pretrain: false,
        reset_demo: false,
    };
}

impl Default for Toggles {
    fn default() -> Self {
        Self::ALL_ON
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub gamma: f64,
    pub nstep: usize,
    pub lambda_nstep: f64,
    pub lambda_1step: f64,
    pub lambda_l2: f64,
    /// Behaviour-cloning weight. Q-gradients scale with the 100-valued
    /// reward, so a weight near 1 leaves cloning negligible.
    pub lambda_bc: f64,
    /// Per-component aux loss weights; empty means all ones.
    pub aux_weights: Vec<f64>,
    pub sigma: f64,
    pub batch_size: usize,
    pub pretrain_steps: usize,
    pub reset_demo_prob: f64,
    /// Actor and target updates happen every `target_delay` critic updates.
    pub target_delay: u64,
    /// `None` copies targets outright at every delayed update.
    pub polyak_tau: Option<f64>,
    pub critic_hidden: Vec<usize>,
    pub actor_hidden: Vec<usize>,
    pub conv: Vec<ConvSpec>,
    pub actor_final_scale: f64,
    pub critic_lr: f64,
    pub actor_lr: f64,
    pub buffer: BufferConfig,
    pub toggles: Toggles,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.98,
            nstep: 5,
            lambda_nstep: 1.0,
            lambda_1step: 1.0,
            lambda_l2: 1e-5,
            lambda_bc: 30.0,
            aux_weights: Vec::new(),
            sigma: 0.1,
            batch_size: 64,
            pretrain_steps: 2000,
            reset_demo_prob: 0.2,
            target_delay: 2,
            polyak_tau: None,
            critic_hidden: vec![256, 256],
            actor_hidden: vec![256, 256],
            conv: ConvEncoder::default_specs(),
            actor_final_scale: 0.01,
            critic_lr: 1e-3,
            actor_lr: 1e-4,
            buffer: BufferConfig::default(),
            toggles: Toggles::ALL_ON,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Parameter(m.into()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if self.nstep == 0 || self.batch_size == 0 || self.target_delay == 0 {
            return bad("nstep, batch_size and target_delay must be at least 1");
        }
        let weights = [self.lambda_nstep, self.lambda_1step, self.lambda_l2, self.lambda_bc, self.sigma];
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return bad("loss weights and sigma must be finite and non-negative");
        }
        if self.aux_weights.iter().any(|w| !w.is_finite()) {
            return bad("aux weights must be finite");
        }
        if !(0.0..=1.0).contains(&self.reset_demo_prob) {
            return bad("reset_demo_prob must lie in [0, 1]");
        }
        if let Some(t) = self.polyak_tau {
            if !(t > 0.0 && t <= 1.0) {
                return bad("polyak_tau must lie in (0, 1]");
            }
        }
        if !(self.critic_lr > 0.0 && self.actor_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.critic_hidden.is_empty() || self.actor_hidden.is_empty() {
            return bad("networks need hidden layers");
        }
        Ok(())
    }

    fn target_mode(&self) -> TargetMode {
        match self.polyak_tau {
            Some(tau) => TargetMode::Polyak { tau },
            None => TargetMode::Hard { period: self.target_delay },
        }
    }

    fn effective_buffer(&self) -> BufferConfig {
        if self.toggles.prioritized {
            self.buffer.clone()
        } else {
            // uniform sampling and unit weights
            BufferConfig {
                alpha: 0.0,
                beta: 0.0,
                ..self.buffer.clone()
            }
        }
    }
}

/// Problem dimensions the agent is built for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentSpec {
    pub obs: ObsLayout,
    pub full_state_dim: usize,
    /// Indices into the full state used as aux targets.
    pub aux_indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticTargets {
    pub one_step: Vec<f64>,
    pub n_step: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticReport {
    /// Total loss of critic 1, including the L2 term.
    pub loss: f64,
    /// Per-sample squared 1-step errors of critic 1, before weighting.
    pub loss_1step: Vec<f64>,
    /// Per-sample squared N-step errors of critic 1 (zero when N-step is off).
    pub loss_nstep: Vec<f64>,
    pub mean_q: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActorReport {
    pub loss: f64,
    pub policy: f64,
    pub bc: f64,
    pub aux: f64,
    /// Demo samples that passed the Q-filter.
    pub bc_active: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub critic: CriticReport,
    pub actor: Option<ActorReport>,
    /// Share of the sampled batch that came from demonstrations.
    pub demo_fraction: f64,
}

/// Row-major matrices pulled from a sampled batch.
struct BatchTensors {
    n: usize,
    obs: Vec<f64>,
    next_obs: Vec<f64>,
    tail_obs: Vec<f64>,
    state: Vec<f64>,
    next_state: Vec<f64>,
    tail_state: Vec<f64>,
    full_state: Vec<f64>,
    actions: Vec<f64>,
}

pub struct Agent {
    config: AgentConfig,
    spec: AgentSpec,
    actor: TargetPair<ActorNet>,
    critics: Vec<TargetPair<DenseNetwork>>,
    actor_opt: Adam,
    critic_opts: Vec<Adam>,
    buffer: PrioritizedBuffer,
    demo_snapshots: Vec<EnvSnapshot>,
    replay_rng: ChaCha8Rng,
    explore_rng: ChaCha8Rng,
    reset_rng: ChaCha8Rng,
    updates: u64,
    actor_updates: u64,
}

fn concat_rows(a: &[f64], a_w: usize, b: &[f64], b_w: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    for (ra, rb) in a.chunks_exact(a_w).zip(b.chunks_exact(b_w)) {
        out.extend_from_slice(ra);
        out.extend_from_slice(rb);
    }
    out
}

impl Agent {
    pub fn new(config: AgentConfig, spec: AgentSpec, seed: u64) -> Result<Self> {
        config.validate()?;
        let aux_dim = if config.toggles.aux_outputs { spec.aux_indices.len() } else { 0 };
        if !config.aux_weights.is_empty() && config.aux_weights.len() != spec.aux_indices.len() {
            return Err(Error::Shape {
                expected: spec.aux_indices.len(),
                actual: config.aux_weights.len(),
            });
        }
        if let Some(&i) = spec.aux_indices.iter().find(|&&i| i >= spec.full_state_dim) {
            return Err(Error::Index {
                index: i,
                len: spec.full_state_dim,
            });
        }
        let mut init = seeded(seed, stream::NETWORK_INIT);
        let actor = ActorNet::init(spec.obs, &config.actor_hidden, aux_dim, &config.conv, config.actor_final_scale, &mut init)?;
        let critic_in = if config.toggles.asymmetric { spec.full_state_dim } else { spec.obs.total() } + ACTION_DIM;
        let n_critics = if config.toggles.twin_critic { 2 } else { 1 };
        let mode = config.target_mode();
        let mut critics = Vec::with_capacity(n_critics);
        for _ in 0..n_critics {
            let net = DenseNetwork::mlp(critic_in, &config.critic_hidden, 1, Activation::Relu, Activation::Identity, 1.0, &mut init)?;
            critics.push(TargetPair::new(net, mode));
        }
        let critic_opts = critics.iter().map(|c| Adam::new(AdamConfig::with_lr(config.critic_lr), &c.live)).collect();
        let actor_opt = Adam::new(AdamConfig::with_lr(config.actor_lr), &actor);
        let buffer = PrioritizedBuffer::new(config.effective_buffer())?;
        Ok(Self {
            actor: TargetPair::new(actor, mode),
            critics,
            actor_opt,
            critic_opts,
            buffer,
            demo_snapshots: Vec::new(),
            replay_rng: seeded(seed, stream::REPLAY),
            explore_rng: seeded(seed, stream::EXPLORATION),
            reset_rng: seeded(seed, stream::RESET),
            updates: 0,
            actor_updates: 0,
            config,
            spec,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn spec(&self) -> &AgentSpec {
        &self.spec
    }

    pub fn actor(&self) -> &ActorNet {
        &self.actor.live
    }

    pub fn actor_target(&self) -> &ActorNet {
        &self.actor.target
    }

    pub fn actor_mut(&mut self) -> &mut ActorNet {
        &mut self.actor.live
    }

    pub fn critic_count(&self) -> usize {
        self.critics.len()
    }

    pub fn critic(&self, i: usize) -> &DenseNetwork {
        &self.critics[i].live
    }

    pub fn critic_target(&self, i: usize) -> &DenseNetwork {
        &self.critics[i].target
    }

    pub fn critic_mut(&mut self, i: usize) -> &mut DenseNetwork {
        &mut self.critics[i].live
    }

    pub fn critic_target_mut(&mut self, i: usize) -> &mut DenseNetwork {
        &mut self.critics[i].target
    }

    pub fn actor_target_mut(&mut self) -> &mut ActorNet {
        &mut self.actor.target
    }

    pub fn buffer(&self) -> &PrioritizedBuffer {
        &self.buffer
    }

    pub fn buffer_mut(&mut self) -> &mut PrioritizedBuffer {
        &mut self.buffer
    }

    pub fn set_buffer(&mut self, buffer: PrioritizedBuffer) {
        self.buffer = buffer;
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn actor_updates(&self) -> u64 {
        self.actor_updates
    }

    pub fn demo_snapshots(&self) -> &[EnvSnapshot] {
        &self.demo_snapshots
    }

    pub fn set_demo_snapshots(&mut self, snapshots: Vec<EnvSnapshot>) {
        self.demo_snapshots = snapshots;
    }

    /// Assemble N-step segments for a finished episode and store them.
    pub fn store_episode(&mut self, episode: &[Transition]) -> Result<()> {
        for seg in assemble_episode(episode, self.config.nstep, self.config.gamma)? {
            self.buffer.insert(seg)?;
        }
        Ok(())
    }

    pub fn store_segment(&mut self, segment: NStepSegment) -> Result<usize> {
        self.buffer.insert(segment)
    }

    /// Greedy action, or greedy plus clipped Gaussian noise when exploring.
    pub fn select_action(&mut self, obs: &[f64], explore: bool) -> Result<[f64; ACTION_DIM]> {
        let mut a = self.actor.live.act(obs)?;
        if explore {
            let sigma = self.config.sigma;
            for x in &mut a {
                let noise = gaussian(&mut self.explore_rng) * sigma;
                *x = clamp(*x + noise, -1.0, 1.0);
            }
        }
        Ok(a)
    }

    /// Reset directive for the next episode: a recorded demo state with
    /// probability `reset_demo_prob`, otherwise a randomized reset.
    pub fn begin_episode(&mut self) -> ResetDirective {
        let p = if self.config.toggles.reset_demo { self.config.reset_demo_prob } else { 0.0 };
        let u: f64 = self.reset_rng.random();
        if u >= p {
            return ResetDirective::Standard;
        }
        if self.demo_snapshots.is_empty() {
            log::warn!("reset to demonstration requested but no snapshots are loaded; using a standard reset");
            return ResetDirective::Standard;
        }
        let k = self.reset_rng.random_range(0..self.demo_snapshots.len());
        ResetDirective::Snapshot(Box::new(self.demo_snapshots[k].clone()))
    }

    fn tensors(&self, batch: &SampleBatch) -> Result<BatchTensors> {
        let n = batch.len();
        let od = self.spec.obs.total();
        let sd = self.spec.full_state_dim;
        let asym = self.config.toggles.asymmetric;
        let mut t = BatchTensors {
            n,
            obs: Vec::with_capacity(n * od),
            next_obs: Vec::with_capacity(n * od),
            tail_obs: Vec::with_capacity(n * od),
            state: Vec::new(),
            next_state: Vec::new(),
            tail_state: Vec::new(),
            full_state: Vec::with_capacity(n * sd),
            actions: Vec::with_capacity(n * ACTION_DIM),
        };
        let check = |v: &[f64], d: usize| -> Result<()> {
            if v.len() != d {
                return Err(Error::Shape {
                    expected: d,
                    actual: v.len(),
                });
            }
            Ok(())
        };
        for s in &batch.segments {
            let h = &s.head;
            check(&h.actor_obs, od)?;
            check(&h.next_actor_obs, od)?;
            check(&s.tail_actor_obs, od)?;
            check(&h.full_state, sd)?;
            check(&h.next_full_state, sd)?;
            check(&s.tail_full_state, sd)?;
            t.obs.extend_from_slice(&h.actor_obs);
            t.next_obs.extend_from_slice(&h.next_actor_obs);
            t.tail_obs.extend_from_slice(&s.tail_actor_obs);
            t.full_state.extend_from_slice(&h.full_state);
            t.actions.extend_from_slice(&h.action);
            if asym {
                t.state.extend_from_slice(&h.full_state);
                t.next_state.extend_from_slice(&h.next_full_state);
                t.tail_state.extend_from_slice(&s.tail_full_state);
            }
        }
        if !asym {
            t.state = t.obs.clone();
            t.next_state = t.next_obs.clone();
            t.tail_state = t.tail_obs.clone();
        }
        Ok(t)
    }

    fn state_dim(&self) -> usize {
        if self.config.toggles.asymmetric {
            self.spec.full_state_dim
        } else {
            self.spec.obs.total()
        }
    }

    /// `min_i Q_i*(s, pi*(o))` over the target critics.
    fn target_value(&self, obs: &[f64], state: &[f64], n: usize) -> Result<Vec<f64>> {
        let actions = self.actor.target.forward_batch(obs, n)?;
        let input = concat_rows(state, self.state_dim(), actions.actions(), ACTION_DIM);
        let mut best: Option<Vec<f64>> = None;
        for c in &self.critics {
            let q = c.target.forward_batch(&input, n)?.output().to_vec();
            best = Some(match best {
                None => q,
                Some(b) => b.iter().zip(&q).map(|(x, y)| x.min(*y)).collect(),
            });
        }
        Ok(best.unwrap_or_default())
    }

    /// One-step and N-step regression targets from the target networks.
    pub fn critic_targets(&self, batch: &SampleBatch) -> Result<CriticTargets> {
        let t = self.tensors(batch)?;
        self.targets_from(batch, &t)
    }

    fn targets_from(&self, batch: &SampleBatch, t: &BatchTensors) -> Result<CriticTargets> {
        let g = self.config.gamma;
        let q_next = self.target_value(&t.next_obs, &t.next_state, t.n)?;
        let one_step = batch
            .segments
            .iter()
            .zip(&q_next)
            .map(|(s, q)| s.head.reward + if s.head.done { 0.0 } else { g * q })
            .collect();
        let n_step = if self.config.toggles.nstep {
            let q_tail = self.target_value(&t.tail_obs, &t.tail_state, t.n)?;
            batch
                .segments
                .iter()
                .zip(&q_tail)
                .map(|(s, q)| s.discounted_return + if s.tail_done { 0.0 } else { powi(g, s.horizon as i32) * q })
                .collect()
        } else {
            vec![0.0; t.n]
        };
        Ok(CriticTargets { one_step, n_step })
    }

    /// Regress both critics to the shared targets. Returns critic-1 losses;
    /// nothing is applied if any loss or gradient is non-finite.
    pub fn critic_update(&mut self, batch: &SampleBatch) -> Result<CriticReport> {
        let t = self.tensors(batch)?;
        let targets = self.targets_from(batch, &t)?;
        let (report, grads) = self.critic_loss_with(batch, &t, &targets)?;
        self.apply_critic_grads(&grads)?;
        Ok(report)
    }

    /// Critic losses and one gradient set per critic, without applying them.
    pub fn critic_loss(&self, batch: &SampleBatch) -> Result<(CriticReport, Vec<Gradients>)> {
        let t = self.tensors(batch)?;
        let targets = self.targets_from(batch, &t)?;
        self.critic_loss_with(batch, &t, &targets)
    }

    fn apply_critic_grads(&mut self, grads: &[Gradients]) -> Result<()> {
        for ((c, opt), g) in self.critics.iter_mut().zip(&mut self.critic_opts).zip(grads) {
            opt.step(&mut c.live, g)?;
        }
        Ok(())
    }

    fn critic_loss_with(&self, batch: &SampleBatch, t: &BatchTensors, targets: &CriticTargets) -> Result<(CriticReport, Vec<Gradients>)> {
        let n = t.n;
        let inv = 1.0 / n as f64;
        let l1w = self.config.lambda_1step;
        let lnw = if self.config.toggles.nstep { self.config.lambda_nstep } else { 0.0 };
        let input = concat_rows(&t.state, self.state_dim(), &t.actions, ACTION_DIM);
        let mut all_grads: Vec<Gradients> = Vec::with_capacity(self.critics.len());
        let mut report = None;
        for (ci, c) in self.critics.iter().enumerate() {
            let tape = c.live.forward_batch(&input, n)?;
            let q = tape.output();
            let mut d_q = vec![0.0; n];
            let mut loss_1 = vec![0.0; n];
            let mut loss_n = vec![0.0; n];
            let mut total = 0.0;
            for i in 0..n {
                let w = batch.is_weights[i];
                let e1 = q[i] - targets.one_step[i];
                let en = if self.config.toggles.nstep { q[i] - targets.n_step[i] } else { 0.0 };
                loss_1[i] = e1 * e1;
                loss_n[i] = en * en;
                total += w * (l1w * loss_1[i] + lnw * loss_n[i]);
                d_q[i] = 2.0 * w * (l1w * e1 + lnw * en) * inv;
            }
            let diagnose = |loss: f64| {
                Error::NonFiniteLoss(format!(
                    "critic {} loss {loss} at update {}; max |target| {:.3e}",
                    ci + 1,
                    self.updates,
                    targets.one_step.iter().chain(&targets.n_step).fold(0.0f64, |m, v| m.max(v.abs()))
                ))
            };
            if !total.is_finite() {
                return Err(diagnose(total * inv));
            }
            let (g, _) = c.live.backward(&tape, &d_q).map_err(|_| diagnose(total * inv))?;
            let mut grads = vec![g];
            let penalty = c.live.add_l2(self.config.lambda_l2, &mut grads);
            let loss = total * inv + penalty;
            if !loss.is_finite() || grads.iter().flatten().any(|x| !x.is_finite()) {
                return Err(diagnose(loss));
            }
            if ci == 0 {
                report = Some(CriticReport {
                    loss,
                    loss_1step: loss_1,
                    loss_nstep: loss_n,
                    mean_q: q.iter().sum::<f64>() * inv,
                });
            }
            all_grads.push(grads);
        }
        Ok((report.expect("at least one critic"), all_grads))
    }

    /// Actor loss and its parameter gradients, without applying them.
    pub fn actor_loss(&self, batch: &SampleBatch) -> Result<(ActorReport, Gradients)> {
        let t = self.tensors(batch)?;
        self.actor_loss_with(batch, &t)
    }

    fn actor_loss_with(&self, batch: &SampleBatch, t: &BatchTensors) -> Result<(ActorReport, Gradients)> {
        let n = t.n;
        let inv = 1.0 / n as f64;
        let sd = self.state_dim();
        let actor = &self.actor.live;
        let tape = actor.forward_batch(&t.obs, n)?;
        let pi = tape.actions();
        let critic = &self.critics[0].live;

        // deterministic policy gradient through critic 1, critic frozen
        let pi_input = concat_rows(&t.state, sd, pi, ACTION_DIM);
        let q_tape = critic.forward_batch(&pi_input, n)?;
        let q_pi = q_tape.output().to_vec();
        let d_q: Vec<f64> = batch.is_weights.iter().map(|w| -w * inv).collect();
        let (_, d_input) = critic.backward(&q_tape, &d_q)?;
        let mut d_action: Vec<f64> = d_input.chunks_exact(sd + ACTION_DIM).flat_map(|r| r[sd..].iter().copied()).collect();
        let policy = -batch.is_weights.iter().zip(&q_pi).map(|(w, q)| w * q).sum::<f64>() * inv;

        let mut bc = 0.0;
        let mut bc_active = 0;
        let tg = self.config.toggles;
        if tg.bc_loss && self.config.lambda_bc > 0.0 && batch.segments.iter().any(|s| s.is_demo()) {
            let q_demo = if tg.q_filter {
                let demo_input = concat_rows(&t.state, sd, &t.actions, ACTION_DIM);
                critic.forward_batch(&demo_input, n)?.output().to_vec()
            } else {
                Vec::new()
            };
            let lam = self.config.lambda_bc;
            for (i, s) in batch.segments.iter().enumerate() {
                if !s.is_demo() || (tg.q_filter && q_demo[i] <= q_pi[i]) {
                    continue;
                }
                bc_active += 1;
                for k in 0..ACTION_DIM {
                    let e = pi[i * ACTION_DIM + k] - t.actions[i * ACTION_DIM + k];
                    bc += lam * e * e * inv;
                    d_action[i * ACTION_DIM + k] += 2.0 * lam * e * inv;
                }
            }
        }

        let mut aux = 0.0;
        let d_aux = match tape.aux() {
            Some(pred) => {
                let idx = &self.spec.aux_indices;
                let k = idx.len();
                let fd = self.spec.full_state_dim;
                let mut d = vec![0.0; n * k];
                for i in 0..n {
                    let fs = &t.full_state[i * fd..(i + 1) * fd];
                    for (j, &src) in idx.iter().enumerate() {
                        let w = self.config.aux_weights.get(j).copied().unwrap_or(1.0);
                        let e = pred[i * k + j] - fs[src];
                        aux += w * e * e * inv / k as f64;
                        d[i * k + j] = 2.0 * w * e * inv / k as f64;
                    }
                }
                Some(d)
            }
            None => None,
        };

        let grads = actor.backward(&tape, &d_action, d_aux.as_deref())?;
        let loss = policy + bc + aux;
        if !loss.is_finite() || grads.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteLoss(format!("actor loss {loss} at update {}", self.updates)));
        }
        Ok((
            ActorReport {
                loss,
                policy,
                bc,
                aux,
                bc_active,
            },
            grads,
        ))
    }

    /// One actor step on `batch`; critics are left untouched.
    pub fn actor_update(&mut self, batch: &SampleBatch) -> Result<ActorReport> {
        let (report, grads) = self.actor_loss(batch)?;
        self.actor_opt.step(&mut self.actor.live, &grads)?;
        self.actor_updates += 1;
        Ok(report)
    }

    fn sync_targets(&mut self) {
        for c in &mut self.critics {
            c.sync(self.updates);
        }
        self.actor.sync(self.updates);
    }

    /// Sample, update the critics and priorities, and on every
    /// `target_delay`-th update also the actor and all targets.
    pub fn train_step(&mut self) -> Result<TrainReport> {
        let batch = self.buffer.sample(self.config.batch_size, &mut self.replay_rng)?;
        let t = self.tensors(&batch)?;
        let targets = self.targets_from(&batch, &t)?;
        let (critic, grads) = self.critic_loss_with(&batch, &t, &targets)?;
        self.apply_critic_grads(&grads)?;
        if self.config.toggles.prioritized {
            self.buffer.update_priorities(&batch.indices, &critic.loss_1step, &critic.loss_nstep)?;
        }
        self.updates += 1;
        let mut actor = None;
        if self.updates.is_multiple_of(self.config.target_delay) {
            let (report, grads) = self.actor_loss_with(&batch, &t)?;
            self.actor_opt.step(&mut self.actor.live, &grads)?;
            self.actor_updates += 1;
            actor = Some(report);
            self.sync_targets();
        }
        Ok(TrainReport {
            critic,
            actor,
            demo_fraction: batch.demo_fraction(),
        })
    }

    /// Learner updates on the stored demonstrations, before any interaction.
    pub fn pretrain(&mut self, steps: usize) -> Result<Vec<TrainReport>> {
        if self.buffer.is_empty() {
            return Err(Error::Precondition("pretraining needs demonstrations in the buffer".into()));
        }
        (0..steps).map(|_| self.train_step()).collect()
    }

    /// Pre-training steps this configuration asks for.
    pub fn pretrain_budget(&self) -> usize {
        if self.config.toggles.pretrain {
            self.config.pretrain_steps
        } else {
            0
        }
    }

    pub fn rng_states(&self) -> [RngState; 3] {
        [
            RngState::capture(&self.replay_rng),
            RngState::capture(&self.explore_rng),
            RngState::capture(&self.reset_rng),
        ]
    }

    pub fn set_rng_states(&mut self, states: &[RngState; 3]) {
        self.replay_rng = states[0].restore();
        self.explore_rng = states[1].restore();
        self.reset_rng = states[2].restore();
    }

    /// Networks, targets, optimizer moments and counters as named arrays.
    pub fn named_arrays(&self) -> Vec<NamedArray> {
        let mut out = Vec::new();
        out.extend(prefixed("actor", self.actor.live.named_arrays()));
        out.extend(prefixed("actor_target", self.actor.target.named_arrays()));
        out.extend(adam_arrays("adam.actor", &self.actor_opt.state));
        for (i, (c, opt)) in self.critics.iter().zip(&self.critic_opts).enumerate() {
            out.extend(prefixed(&format!("critic{}", i + 1), c.live.named_arrays()));
            out.extend(prefixed(&format!("critic{}_target", i + 1), c.target.named_arrays()));
            out.extend(adam_arrays(&format!("adam.critic{}", i + 1), &opt.state));
        }
        out.push(NamedArray {
            name: "agent.counters".into(),
            shape: vec![2],
            data: vec![self.updates as f64, self.actor_updates as f64],
        });
        out
    }

    pub fn load_named_arrays(&mut self, arrays: &[NamedArray]) -> Result<()> {
        self.actor.live.load_named_arrays(&strip_prefix("actor", arrays))?;
        self.actor.target.load_named_arrays(&strip_prefix("actor_target", arrays))?;
        load_adam(&mut self.actor_opt.state, "adam.actor", arrays)?;
        for i in 0..self.critics.len() {
            let c = &mut self.critics[i];
            c.live.load_named_arrays(&strip_prefix(&format!("critic{}", i + 1), arrays))?;
            c.target.load_named_arrays(&strip_prefix(&format!("critic{}_target", i + 1), arrays))?;
            load_adam(&mut self.critic_opts[i].state, &format!("adam.critic{}", i + 1), arrays)?;
        }
        let counters = crate::approximator::take_array(arrays, "agent.counters", &[2])?;
        self.updates = counters[0] as u64;
        self.actor_updates = counters[1] as u64;
        Ok(())
    }
}

fn adam_arrays(prefix: &str, s: &AdamState) -> Vec<NamedArray> {
    let mut out = vec![NamedArray {
        name: format!("{prefix}.step"),
        shape: vec![1],
        data: vec![s.step as f64],
    }];
    for (i, (m, v)) in s.first.iter().zip(&s.second).enumerate() {
        out.push(NamedArray {
            name: format!("{prefix}.m{i}"),
            shape: vec![m.len()],
            data: m.clone(),
        });
        out.push(NamedArray {
            name: format!("{prefix}.v{i}"),
            shape: vec![v.len()],
            data: v.clone(),
        });
    }
    out
}

fn load_adam(s: &mut AdamState, prefix: &str, arrays: &[NamedArray]) -> Result<()> {
    let step = crate::approximator::take_array(arrays, &format!("{prefix}.step"), &[1])?;
    s.step = step[0] as u64;
    for i in 0..s.first.len() {
        let n = s.first[i].len();
        s.first[i].copy_from_slice(crate::approximator::take_array(arrays, &format!("{prefix}.m{i}"), &[n])?);
        s.second[i].copy_from_slice(crate::approximator::take_array(arrays, &format!("{prefix}.v{i}"), &[n])?);
    }
    Ok(())
}
