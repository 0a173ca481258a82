use clothrl_core::agent::{Agent, AgentConfig, AgentSpec, Toggles};
use clothrl_core::approximator::{DenseNetwork, Module};
use clothrl_core::envs::{ClothEnv, EnvConfig, ObsLayout, ResetDirective, Task};
use clothrl_core::experience::{assemble_nstep, BufferConfig, NStepSegment, SampleBatch, SampleIndex, Transition};
use clothrl_core::rng::{gaussian, seeded};
use clothrl_core::Error;
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const OBS: usize = 3;
const STATE: usize = 6;

fn spec() -> AgentSpec {
    AgentSpec {
        obs: ObsLayout { lowdim: OBS, image_size: None },
        full_state_dim: STATE,
        aux_indices: vec![0, 1],
    }
}

fn config(toggles: Toggles) -> AgentConfig {
    AgentConfig {
        critic_hidden: vec![16, 16],
        actor_hidden: vec![16, 16],
        conv: Vec::new(),
        batch_size: 8,
        buffer: BufferConfig {
            capacity: 4096,
            ..BufferConfig::default()
        },
        toggles,
        ..AgentConfig::default()
    }
}

fn agent(toggles: Toggles, seed: u64) -> Agent {
    Agent::new(config(toggles), spec(), seed).unwrap()
}

fn randv(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
}

fn transition(rng: &mut ChaCha8Rng, demo: bool, done: bool, reward: f64) -> Transition {
    let a = randv(rng, 4);
    Transition {
        actor_obs: randv(rng, OBS),
        full_state: randv(rng, STATE),
        action: [a[0], a[1], a[2], a[3]],
        reward,
        next_actor_obs: randv(rng, OBS),
        next_full_state: randv(rng, STATE),
        done,
        is_demo: demo,
    }
}

fn batch(segments: Vec<NStepSegment>, weights: Vec<f64>) -> SampleBatch {
    let n = segments.len();
    SampleBatch {
        indices: (0..n).map(|slot| SampleIndex { slot, generation: 0 }).collect(),
        probabilities: vec![1.0 / n as f64; n],
        is_weights: weights,
        segments,
    }
}

fn single_batch(rng: &mut ChaCha8Rng, n: usize, demo: bool) -> SampleBatch {
    batch((0..n).map(|_| NStepSegment::single(transition(rng, demo, false, 0.0))).collect(), vec![1.0; n])
}

/// Zero weights in the last layer and a constant bias: `Q == c` everywhere.
fn set_constant(net: &mut DenseNetwork, c: f64) {
    let last = net.layers().len() - 1;
    let (w, b) = net.layer_params_mut(last);
    w.fill(0.0);
    b.fill(c);
}

/// Hand-set three-layer critic computing `Q = 2 - a_0` on `[-1, 1]` actions.
fn set_decreasing_in_first_action(net: &mut DenseNetwork, action_offset: usize) {
    net.params_mut().fill(0.0);
    let width = net.layers()[0].output;
    let (w, b) = net.layer_params_mut(0);
    w[action_offset * width] = -1.0;
    b[0] = 2.0;
    let width = net.layers()[1].output;
    net.layer_params_mut(1).0[0] = 1.0;
    let _ = width;
    net.layer_params_mut(2).0[0] = 1.0;
}

fn q_of(net: &DenseNetwork, state: &[f64], action: &[f64]) -> f64 {
    let mut x = state.to_vec();
    x.extend_from_slice(action);
    net.forward(&x).unwrap()[0]
}

#[test]
fn one_step_target_uses_twin_minimum() {
    let mut rng = seeded(1, 0);
    let mut cfg = config(Toggles::ALL_ON);
    cfg.gamma = 0.9;
    let mut a = Agent::new(cfg, spec(), 1).unwrap();
    set_constant(a.critic_target_mut(0), 10.0);
    set_constant(a.critic_target_mut(1), 8.0);
    let b = single_batch(&mut rng, 4, false);
    let y = a.critic_targets(&b).unwrap();
    for v in y.one_step {
        assert!((v - 7.2).abs() < 1e-12, "{v}");
    }
}

#[test]
fn terminal_reward_ignores_critics() {
    let mut rng = seeded(2, 0);
    let t = transition(&mut rng, false, true, 100.0);
    let seg = assemble_nstep(&[t], 0, 5, 0.98).unwrap();
    for seed in 0..4 {
        let a = agent(Toggles::ALL_ON, seed);
        let y = a.critic_targets(&batch(vec![seg.clone()], vec![1.0])).unwrap();
        assert_eq!(y.one_step, vec![100.0]);
        assert_eq!(y.n_step, vec![100.0]);
    }
}

#[test]
fn terminal_masking_of_nstep_returns() {
    let mut rng = seeded(3, 0);
    let mut ep: Vec<Transition> = (0..3).map(|_| transition(&mut rng, false, false, 0.5)).collect();
    ep.last_mut().unwrap().done = true;
    ep.last_mut().unwrap().reward = 100.0;
    let seg = assemble_nstep(&ep, 0, 5, 0.98).unwrap();
    assert!(seg.tail_done);
    let expected = 0.5 + 0.98 * 0.5 + 0.98 * 0.98 * 100.0;
    for seed in 10..13 {
        let y = agent(Toggles::ALL_ON, seed).critic_targets(&batch(vec![seg.clone()], vec![1.0])).unwrap();
        assert!((y.n_step[0] - expected).abs() < 1e-12);
    }
}

#[test]
fn identical_twins_give_single_critic_value() {
    let mut rng = seeded(4, 0);
    let mut a = agent(Toggles::ALL_ON, 4);
    let c0 = a.critic_target(0).clone();
    a.critic_target_mut(1).copy_from(&c0);
    let b = single_batch(&mut rng, 6, false);
    let y = a.critic_targets(&b).unwrap();
    for (seg, v) in b.segments.iter().zip(&y.one_step) {
        let act = a.actor_target().act(&seg.head.next_actor_obs).unwrap();
        let q = q_of(a.critic_target(0), &seg.head.next_full_state, &act);
        assert!((v - 0.98 * q).abs() < 1e-12);
    }
}

#[test]
fn nstep_one_matches_one_step_target_bitwise() {
    let mut rng = seeded(5, 0);
    let a = agent(Toggles::ALL_ON, 5);
    let ep: Vec<Transition> = (0..6).map(|i| transition(&mut rng, false, i == 5, i as f64 * 0.3)).collect();
    let segs: Vec<NStepSegment> = (0..ep.len()).map(|t| assemble_nstep(&ep, t, 1, 0.98).unwrap()).collect();
    let y = a.critic_targets(&batch(segs, vec![1.0; 6])).unwrap();
    assert_eq!(y.one_step, y.n_step);
}

#[test]
fn critic_loss_reduces_without_nstep_term() {
    let mut rng = seeded(6, 0);
    let mut cfg = config(Toggles::ALL_ON);
    cfg.lambda_nstep = 0.0;
    let a = Agent::new(cfg, spec(), 6).unwrap();
    let ep: Vec<Transition> = (0..8).map(|_| transition(&mut rng, false, false, 1.0)).collect();
    let segs: Vec<NStepSegment> = (0..8).map(|t| assemble_nstep(&ep, t, 5, 0.98).unwrap()).collect();
    let weights: Vec<f64> = (0..8).map(|i| 0.2 + 0.1 * i as f64).collect();
    let b = batch(segs, weights.clone());
    let y = a.critic_targets(&b).unwrap();
    let (report, _) = a.critic_loss(&b).unwrap();
    let mut expected = 0.0;
    for ((seg, w), y1) in b.segments.iter().zip(&weights).zip(&y.one_step) {
        let q = q_of(a.critic(0), &seg.head.full_state, &seg.head.action);
        expected += w * (q - y1) * (q - y1) / 8.0;
    }
    expected += 1e-5 * a.critic(0).l2_norm_sq();
    assert!((report.loss - expected).abs() < 1e-12 * expected.abs().max(1.0));
}

#[test]
fn perfect_critic_leaves_only_regularizer() {
    let mut rng = seeded(7, 0);
    let mut a = agent(Toggles::ALL_ON, 7);
    for i in 0..2 {
        set_constant(a.critic_mut(i), 3.0);
    }
    let segs = (0..4).map(|_| assemble_nstep(&[transition(&mut rng, false, true, 3.0)], 0, 5, 0.98).unwrap()).collect();
    let (report, _) = a.critic_loss(&batch(segs, vec![1.0; 4])).unwrap();
    assert!(report.loss_1step.iter().chain(&report.loss_nstep).all(|l| *l == 0.0));
    assert!((report.loss - 1e-5 * a.critic(0).l2_norm_sq()).abs() < 1e-15);
}

#[test]
fn importance_weight_scales_sample_contribution() {
    let mut rng = seeded(8, 0);
    let mut cfg = config(Toggles::ALL_ON);
    cfg.lambda_l2 = 0.0;
    let a = Agent::new(cfg, spec(), 8).unwrap();
    let seg = assemble_nstep(&[transition(&mut rng, false, false, 2.0)], 0, 5, 0.98).unwrap();
    let (full, gf) = a.critic_loss(&batch(vec![seg.clone()], vec![1.0])).unwrap();
    let (half, gh) = a.critic_loss(&batch(vec![seg], vec![0.5])).unwrap();
    assert_eq!(full.loss_1step, half.loss_1step);
    assert!((half.loss - 0.5 * full.loss).abs() < 1e-14 * full.loss);
    for (x, y) in gf[0][0].iter().zip(&gh[0][0]) {
        assert!((0.5 * x - y).abs() <= 1e-14 * x.abs().max(1e-300));
    }
}

#[test]
fn non_finite_loss_aborts_without_changes() {
    let mut rng = seeded(9, 0);
    let mut a = agent(Toggles::ALL_ON, 9);
    let before: Vec<DenseNetwork> = (0..2).map(|i| a.critic(i).clone()).collect();
    let mut t = transition(&mut rng, false, true, f64::NAN);
    t.reward = f64::NAN;
    let seg = assemble_nstep(&[t], 0, 5, 0.98).unwrap();
    let err = a.critic_update(&batch(vec![seg], vec![1.0])).unwrap_err();
    assert!(matches!(err, Error::NonFiniteLoss(_)), "{err:?}");
    for (i, net) in before.iter().enumerate() {
        assert_eq!(a.critic(i), net);
    }
}

#[test]
fn twin_critics_do_not_share_storage() {
    let mut a = agent(Toggles::ALL_ON, 10);
    let c1 = a.critic(1).clone();
    a.critic_mut(0).params_mut().fill(0.25);
    assert_eq!(a.critic(1), &c1);
    assert_ne!(a.critic(0), a.critic(1));
}

#[test]
fn non_demo_samples_have_no_bc_term() {
    let mut rng = seeded(11, 0);
    let a = agent(Toggles::ALL_ON, 11);
    let (r, _) = a.actor_loss(&single_batch(&mut rng, 8, false)).unwrap();
    assert_eq!(r.bc, 0.0);
    assert_eq!(r.bc_active, 0);
}

#[test]
fn q_filter_gates_behaviour_cloning() {
    let mut rng = seeded(12, 0);
    let mut a = agent(Toggles::ALL_ON, 12);
    set_decreasing_in_first_action(a.critic_mut(0), STATE);
    // demo action a0 = 1 is worse than the near-zero policy: filter closes
    let mut b = single_batch(&mut rng, 8, true);
    for s in &mut b.segments {
        s.head.action[0] = 1.0;
    }
    for s in &b.segments {
        let pi = a.actor().act(&s.head.actor_obs).unwrap();
        assert!(q_of(a.critic(0), &s.head.full_state, &s.head.action) < q_of(a.critic(0), &s.head.full_state, &pi));
    }
    let (r, _) = a.actor_loss(&b).unwrap();
    assert_eq!(r.bc, 0.0);
    assert_eq!(r.bc_active, 0);
    // a0 = -1 beats the policy: filter opens on every sample
    for s in &mut b.segments {
        s.head.action[0] = -1.0;
    }
    let (r, _) = a.actor_loss(&b).unwrap();
    assert_eq!(r.bc_active, 8);
    assert!(r.bc > 0.0);
    // without the filter the closed case clones as well
    let mut cfg = config(Toggles { q_filter: false, ..Toggles::ALL_ON });
    cfg.lambda_bc = 1.0;
    let mut unfiltered = Agent::new(cfg, spec(), 12).unwrap();
    set_decreasing_in_first_action(unfiltered.critic_mut(0), STATE);
    for s in &mut b.segments {
        s.head.action[0] = 1.0;
    }
    assert_eq!(unfiltered.actor_loss(&b).unwrap().0.bc_active, 8);
}

#[test]
fn exact_aux_prediction_has_zero_loss() {
    let mut rng = seeded(13, 0);
    let mut a = agent(Toggles::ALL_ON, 13);
    let targets = [0.3, -0.7];
    {
        let blocks = a.actor_mut().blocks_mut();
        let aux = blocks.into_iter().last().unwrap();
        aux.fill(0.0);
        let n = aux.len();
        aux[n - 2..].copy_from_slice(&targets);
    }
    let mut b = single_batch(&mut rng, 5, false);
    for s in &mut b.segments {
        s.head.full_state[0] = targets[0];
        s.head.full_state[1] = targets[1];
    }
    let (r, _) = a.actor_loss(&b).unwrap();
    assert_eq!(r.aux, 0.0);
    b.segments[0].head.full_state[0] += 0.5;
    assert!(a.actor_loss(&b).unwrap().0.aux > 0.0);
}

#[test]
fn zero_sigma_exploration_is_greedy() {
    let mut cfg = config(Toggles::ALL_ON);
    cfg.sigma = 0.0;
    let mut a = Agent::new(cfg, spec(), 14).unwrap();
    let obs = [0.1, -0.2, 0.3];
    let greedy = a.select_action(&obs, false).unwrap();
    for _ in 0..10 {
        assert_eq!(a.select_action(&obs, true).unwrap(), greedy);
    }
}

#[test]
fn noisy_actions_are_clipped() {
    let mut a = agent(Toggles::ALL_ON, 15);
    {
        let blocks = a.actor_mut().blocks_mut();
        let action = blocks.into_iter().nth(1).unwrap();
        action.fill(0.0);
        let n = action.len();
        action[n - 4..].fill(50.0);
    }
    let obs = [0.0; OBS];
    assert_eq!(a.select_action(&obs, false).unwrap(), [1.0; 4]);
    for _ in 0..1000 {
        assert!(a.select_action(&obs, true).unwrap().iter().all(|x| *x <= 1.0 && *x >= -1.0));
    }
}

#[test]
fn exploration_noise_has_configured_std() {
    let mut a = agent(Toggles::ALL_ON, 16);
    let obs = [0.2, 0.1, -0.4];
    let greedy = a.select_action(&obs, false).unwrap();
    let (mut sum, mut sq, mut n) = (0.0, 0.0, 0.0);
    for _ in 0..25_000 {
        let noisy = a.select_action(&obs, true).unwrap();
        for k in 0..4 {
            let d = noisy[k] - greedy[k];
            sum += d;
            sq += d * d;
            n += 1.0;
        }
    }
    let std = (sq / n - (sum / n) * (sum / n)).sqrt();
    assert!((std - 0.1).abs() < 0.002, "std {std}");
}

fn fill_demos(a: &mut Agent, rng: &mut ChaCha8Rng, episodes: usize, len: usize) {
    for _ in 0..episodes {
        let mut ep: Vec<Transition> = (0..len).map(|_| transition(rng, true, false, 0.0)).collect();
        let last = ep.last_mut().unwrap();
        last.done = true;
        last.reward = 100.0;
        a.store_episode(&ep).unwrap();
    }
}

#[test]
fn pretrain_zero_steps_and_empty_buffer() {
    let mut a = agent(Toggles::ALL_ON, 17);
    assert!(matches!(a.pretrain(1), Err(Error::Precondition(_))));
    let mut rng = seeded(17, 0);
    fill_demos(&mut a, &mut rng, 2, 5);
    let before = a.named_arrays();
    a.pretrain(0).unwrap();
    assert_eq!(a.named_arrays(), before);
}

#[test]
fn toggles_control_pretrain_budget_and_buffer() {
    let a = agent(Toggles::ALL_ON, 18);
    assert_eq!(a.pretrain_budget(), 2000);
    let b = agent(Toggles { pretrain: false, prioritized: false, ..Toggles::ALL_ON }, 18);
    assert_eq!(b.pretrain_budget(), 0);
    assert_eq!(b.buffer().config().alpha, 0.0);
    assert_eq!(b.buffer().config().beta, 0.0);
    assert_eq!(agent(Toggles { twin_critic: false, ..Toggles::ALL_ON }, 18).critic_count(), 1);
}

/// Mean squared distance between the actor and the recorded actions.
fn imitation_error(a: &Agent, held_out: &[Transition]) -> f64 {
    held_out
        .iter()
        .map(|t| {
            let pi = a.actor().act(&t.actor_obs).unwrap();
            pi.iter().zip(&t.action).map(|(p, x)| (p - x) * (p - x)).sum::<f64>()
        })
        .sum::<f64>()
        / held_out.len() as f64
}

/// Pre-training lowers the BC-filtered actor loss on demonstrations the
/// learner never saw. Imitation error alone is not monotone here: with a
/// 100-valued sparse reward the policy term dominates cloning, which is what
/// the filtered loss accounts for.
#[test]
fn pretraining_lowers_filtered_actor_loss_on_held_out_demos() {
    let mut a = agent_with_scripted_demos(19);
    let env_cfg = EnvConfig::new(Task::DiagonalFolding);
    let mut env = ClothEnv::new(env_cfg).unwrap();
    let held_out: Vec<Transition> = (500..)
        .map(|s| clothrl_core::envs::run_scripted_episode(&mut env, s, false).unwrap())
        .filter(|ep| ep.success)
        .take(5)
        .flat_map(|ep| ep.transitions)
        .collect();
    let held_batch = batch(held_out.iter().cloned().map(NStepSegment::single).collect(), vec![1.0; held_out.len()]);
    let before = a.actor_loss(&held_batch).unwrap().0;
    let err_before = imitation_error(&a, &held_out);
    let steps = a.pretrain_budget();
    a.pretrain(steps).unwrap();
    let after = a.actor_loss(&held_batch).unwrap().0;
    eprintln!(
        "held-out actor loss {:.4} -> {:.4} (bc {:.4} -> {:.4}, filter open {} -> {} of {}); imitation error {err_before:.4} -> {:.4}",
        before.loss,
        after.loss,
        before.bc,
        after.bc,
        before.bc_active,
        after.bc_active,
        held_out.len(),
        imitation_error(&a, &held_out)
    );
    assert!(after.loss < before.loss, "{} -> {}", before.loss, after.loss);
}

/// Scripted diagonal-folding demos loaded into an agent with default sizes.
fn agent_with_scripted_demos(seed: u64) -> Agent {
    let env_cfg = EnvConfig::new(Task::DiagonalFolding);
    let mut env = ClothEnv::new(env_cfg.clone()).unwrap();
    let spec = AgentSpec {
        obs: ObsLayout::of(&env_cfg),
        full_state_dim: clothrl_core::envs::full_state::DIM,
        aux_indices: clothrl_core::envs::aux_indices(Task::DiagonalFolding),
    };
    let mut a = Agent::new(AgentConfig::default(), spec, seed).unwrap();
    let mut stored = 0;
    for s in 0.. {
        let ep = clothrl_core::envs::run_scripted_episode(&mut env, s, false).unwrap();
        if ep.success {
            a.store_episode(&ep.transitions).unwrap();
            stored += 1;
        }
        if stored == 20 {
            break;
        }
    }
    a
}

#[test]
fn pretraining_budget_covers_every_demo_priority() {
    let mut a = agent_with_scripted_demos(20);
    let slots: Vec<usize> = a.buffer().occupied().collect();
    assert!(slots.iter().all(|&s| a.buffer().priority(s) == Some(1.0)));
    let budget = a.pretrain_budget();
    let mut steps = 0;
    while slots.iter().any(|&s| a.buffer().priority(s) == Some(1.0)) {
        a.pretrain(1).unwrap();
        steps += 1;
        assert!(steps <= budget, "demo priorities not all updated within {budget} pretraining steps");
    }
    let rounds = slots.len() as f64 / a.config().batch_size as f64;
    eprintln!("{} demo priorities all updated after {steps} steps ({:.1} sampling rounds)", slots.len(), steps as f64 / rounds);
}

fn snapshot(seed: u64) -> clothrl_core::envs::EnvSnapshot {
    let mut env = ClothEnv::new(EnvConfig::new(Task::DiagonalFolding)).unwrap();
    env.reset(seed, &ResetDirective::Standard).unwrap();
    env.snapshot()
}

#[test]
fn reset_to_demo_schedule() {
    let mut cfg = config(Toggles::ALL_ON);
    cfg.reset_demo_prob = 0.0;
    let mut a = Agent::new(cfg.clone(), spec(), 21).unwrap();
    a.set_demo_snapshots(vec![snapshot(1)]);
    assert!((0..200).all(|_| matches!(a.begin_episode(), ResetDirective::Standard)));

    cfg.reset_demo_prob = 1.0;
    let mut a = Agent::new(cfg.clone(), spec(), 21).unwrap();
    let snap = snapshot(2);
    // no snapshots: warn and fall back
    assert!(matches!(a.begin_episode(), ResetDirective::Standard));
    a.set_demo_snapshots(vec![snap.clone()]);
    for _ in 0..50 {
        match a.begin_episode() {
            ResetDirective::Snapshot(s) => assert_eq!(*s, snap),
            ResetDirective::Standard => panic!("expected the snapshot"),
        }
    }

    cfg.reset_demo_prob = 0.3;
    let mut a = Agent::new(cfg.clone(), spec(), 22).unwrap();
    a.set_demo_snapshots(vec![snapshot(3), snapshot(4)]);
    let demo = (0..10_000).filter(|_| matches!(a.begin_episode(), ResetDirective::Snapshot(_))).count();
    let frac = demo as f64 / 1e4;
    assert!((frac - 0.3).abs() < 0.02, "{frac}");

    let mut off = Agent::new(AgentConfig { toggles: Toggles { reset_demo: false, ..Toggles::ALL_ON }, ..cfg }, spec(), 22).unwrap();
    off.set_demo_snapshots(vec![snapshot(3)]);
    assert!((0..200).all(|_| matches!(off.begin_episode(), ResetDirective::Standard)));
}

#[test]
fn actor_and_targets_follow_delay_schedule() {
    let mut rng = seeded(23, 0);
    let mut a = agent(Toggles::ALL_ON, 23);
    fill_demos(&mut a, &mut rng, 4, 10);
    let mut prev_target = a.critic_target(0).clone();
    let mut prev_actor = a.actor().clone();
    for step in 1..=8u64 {
        let r = a.train_step().unwrap();
        let on_delay = step % 2 == 0;
        assert_eq!(r.actor.is_some(), on_delay);
        assert_eq!(a.critic_target(0) != &prev_target, on_delay, "step {step}");
        assert_eq!(a.actor() != &prev_actor, on_delay, "step {step}");
        if on_delay {
            assert_eq!(a.critic_target(0), a.critic(0));
            assert_eq!(a.actor_target(), a.actor());
        }
        prev_target = a.critic_target(0).clone();
        prev_actor = a.actor().clone();
    }
    assert_eq!(a.updates(), 8);
    assert_eq!(a.actor_updates(), 4);
}

#[test]
fn asymmetric_actor_gradient_ignores_unused_state() {
    let mut rng = seeded(24, 0);
    let mut a = agent(Toggles::ALL_ON, 24);
    // critic 1 ignores full-state fields 3..6; aux reads fields 0 and 1
    let width = a.critic(0).layers()[0].output;
    {
        let (w, _) = a.critic_mut(0).layer_params_mut(0);
        for input in 3..STATE {
            w[input * width..(input + 1) * width].fill(0.0);
        }
    }
    let mut b = single_batch(&mut rng, 8, true);
    let (_, g0) = a.actor_loss(&b).unwrap();
    for s in &mut b.segments {
        for k in 3..STATE {
            s.head.full_state[k] += gaussian(&mut rng);
            s.head.next_full_state[k] += gaussian(&mut rng);
        }
        s.tail_full_state = s.head.next_full_state.clone();
    }
    let (_, g1) = a.actor_loss(&b).unwrap();
    assert_eq!(g0, g1);
    b.segments[0].head.full_state[2] += 0.5;
    assert_ne!(a.actor_loss(&b).unwrap().1, g0);
}

#[test]
fn checkpoint_arrays_resume_bit_exactly() {
    let mut rng = seeded(25, 0);
    let mut a = agent(Toggles::ALL_ON, 25);
    fill_demos(&mut a, &mut rng, 4, 10);
    for _ in 0..5 {
        a.train_step().unwrap();
    }
    let mut b = agent(Toggles::ALL_ON, 99);
    b.load_named_arrays(&a.named_arrays()).unwrap();
    b.set_rng_states(&a.rng_states());
    b.set_buffer(clothrl_core::experience::PrioritizedBuffer::from_state(a.buffer().export_state()).unwrap());
    assert_eq!(b.named_arrays(), a.named_arrays());
    for _ in 0..5 {
        let ra = a.train_step().unwrap();
        let rb = b.train_step().unwrap();
        assert_eq!(ra, rb);
    }
    assert_eq!(b.named_arrays(), a.named_arrays());
    assert_eq!(b.updates(), 10);
}

#[test]
fn rejects_bad_configs() {
    let bad = [
        AgentConfig { gamma: 1.0, ..config(Toggles::ALL_ON) },
        AgentConfig { nstep: 0, ..config(Toggles::ALL_ON) },
        AgentConfig { lambda_bc: -1.0, ..config(Toggles::ALL_ON) },
        AgentConfig { reset_demo_prob: 1.5, ..config(Toggles::ALL_ON) },
        AgentConfig { target_delay: 0, ..config(Toggles::ALL_ON) },
        AgentConfig { aux_weights: vec![1.0], ..config(Toggles::ALL_ON) },
    ];
    for cfg in bad {
        assert!(Agent::new(cfg, spec(), 0).is_err());
    }
}

/// Plain DDPG with L2 on the critic, written row by row without the agent.
mod reference {
    use super::*;
    use clothrl_core::agent::ActorNet;

    pub fn critic_loss(critic: &DenseNetwork, critic_target: &DenseNetwork, actor_target: &ActorNet, b: &SampleBatch, gamma: f64, l2: f64) -> f64 {
        let mut sum = 0.0;
        for s in &b.segments {
            let h = &s.head;
            let next_a = actor_target.act(&h.next_actor_obs).unwrap();
            let bootstrap = if h.done { 0.0 } else { gamma * q_of(critic_target, &h.next_actor_obs, &next_a) };
            let e = q_of(critic, &h.actor_obs, &h.action) - (h.reward + bootstrap);
            sum += e * e;
        }
        sum / b.len() as f64 + l2 * critic.l2_norm_sq()
    }

    pub fn actor_loss(actor: &ActorNet, critic: &DenseNetwork, b: &SampleBatch) -> f64 {
        -b.segments.iter().map(|s| q_of(critic, &s.head.actor_obs, &actor.act(&s.head.actor_obs).unwrap())).sum::<f64>() / b.len() as f64
    }
}

fn assert_grad_matches<M: Module + Clone>(m: &M, grads: &[Vec<f64>], loss: impl Fn(&M) -> f64) {
    let h = 1e-5;
    let mut probe = m.clone();
    for (bi, g) in grads.iter().enumerate() {
        for (j, &gj) in g.iter().enumerate() {
            let orig = m.blocks()[bi][j];
            probe.blocks_mut()[bi][j] = orig + h;
            let up = loss(&probe);
            probe.blocks_mut()[bi][j] = orig - h;
            let down = loss(&probe);
            probe.blocks_mut()[bi][j] = orig;
            let num = (up - down) / (2.0 * h);
            assert!((gj - num).abs() <= 1e-4 * gj.abs().max(num.abs()) + 1e-9, "block {bi} param {j}: {gj} vs {num}");
        }
    }
}

#[test]
fn all_off_reduces_to_vanilla_ddpg() {
    let mut rng = seeded(26, 0);
    let mut cfg = config(Toggles::ALL_OFF);
    cfg.target_delay = 1;
    cfg.reset_demo_prob = 0.0;
    cfg.pretrain_steps = 0;
    let mut a = Agent::new(cfg, spec(), 26).unwrap();
    assert_eq!(a.critic_count(), 1);
    assert_eq!(a.actor().aux_dim(), 0);
    assert_eq!(a.pretrain_budget(), 0);
    // targets differ from live nets so the bootstrap path is exercised
    for p in a.critic_target_mut(0).params_mut() {
        *p *= 0.9;
    }
    let mut ep: Vec<Transition> = (0..12).map(|i| transition(&mut rng, i % 2 == 0, false, 0.1 * i as f64)).collect();
    ep.last_mut().unwrap().done = true;
    a.store_episode(&ep).unwrap();
    let sampled = a.buffer().sample(8, &mut rng).unwrap();
    assert!(sampled.is_weights.iter().all(|w| *w == 1.0));

    let (critic_report, critic_grads) = a.critic_loss(&sampled).unwrap();
    let ref_critic = |c: &DenseNetwork| reference::critic_loss(c, a.critic_target(0), a.actor_target(), &sampled, 0.98, 1e-5);
    let expected = ref_critic(a.critic(0));
    assert!((critic_report.loss - expected).abs() <= 1e-12 * expected.abs(), "{} vs {expected}", critic_report.loss);
    assert!(critic_report.loss_nstep.iter().all(|l| *l == 0.0));
    assert_grad_matches(a.critic(0), &critic_grads[0], ref_critic);

    let (actor_report, actor_grads) = a.actor_loss(&sampled).unwrap();
    let ref_actor = |m: &clothrl_core::agent::ActorNet| reference::actor_loss(m, a.critic(0), &sampled);
    let expected = ref_actor(a.actor());
    assert!((actor_report.loss - expected).abs() <= 1e-12 * expected.abs().max(1e-12));
    assert_eq!(actor_report.bc, 0.0);
    assert_eq!(actor_report.aux, 0.0);
    assert_grad_matches(a.actor(), &actor_grads, ref_actor);

    // with d = 1 every update moves the actor and copies the targets
    let r = a.train_step().unwrap();
    assert!(r.actor.is_some());
    assert_eq!(a.critic_target(0), a.critic(0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn twin_min_bootstrap_is_dominated(seed in 0u64..1_000, n in 1usize..10) {
        let mut rng = seeded(seed, 1);
        let a = agent(Toggles::ALL_ON, seed);
        let b = single_batch(&mut rng, n, false);
        let y = a.critic_targets(&b).unwrap();
        for (s, v) in b.segments.iter().zip(&y.one_step) {
            let act = a.actor_target().act(&s.head.next_actor_obs).unwrap();
            let boot = (v - s.head.reward) / 0.98;
            for i in 0..2 {
                let q = q_of(a.critic_target(i), &s.head.next_full_state, &act);
                prop_assert!(boot <= q + 1e-12);
            }
        }
    }

    #[test]
    fn filter_closed_everywhere_means_no_cloning(seed in 0u64..1_000, n in 1usize..12) {
        let mut rng = seeded(seed, 2);
        let mut a = agent(Toggles::ALL_ON, seed);
        set_decreasing_in_first_action(a.critic_mut(0), STATE);
        let mut b = single_batch(&mut rng, n, true);
        for s in &mut b.segments {
            s.head.action[0] = 0.5 + 0.5 * rng.random::<f64>();
        }
        let (r, _) = a.actor_loss(&b).unwrap();
        prop_assert_eq!(r.bc, 0.0);
    }

    #[test]
    fn done_targets_are_parameter_free(seed in 0u64..1_000, reward in -10.0f64..10.0) {
        let mut rng = seeded(seed, 3);
        let t = transition(&mut rng, false, true, reward);
        let seg = assemble_nstep(&[t], 0, 3, 0.98).unwrap();
        let y1 = agent(Toggles::ALL_ON, seed).critic_targets(&batch(vec![seg.clone()], vec![1.0])).unwrap();
        let y2 = agent(Toggles::ALL_ON, seed + 1).critic_targets(&batch(vec![seg], vec![1.0])).unwrap();
        prop_assert_eq!(&y1, &y2);
        prop_assert_eq!(y1.one_step[0], reward);
    }
}
