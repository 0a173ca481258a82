//! Central finite-difference checks of every hand-written backward pass.

use clothrl_core::agent::ActorNet;
use clothrl_core::approximator::{Activation, ConvEncoder, ConvSpec, DenseNetwork, LayerSpec, Module};
use clothrl_core::envs::ObsLayout;
use clothrl_core::rng::{gaussian, seeded};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const REL: f64 = 1e-4;

fn randn(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| gaussian(rng)).collect()
}

fn linear_loss(out: &[f64], proj: &[f64]) -> f64 {
    out.iter().zip(proj).map(|(o, p)| o * p).sum()
}

fn assert_close(analytic: f64, numeric: f64, what: &str) {
    let scale = analytic.abs().max(numeric.abs());
    assert!(
        (analytic - numeric).abs() <= REL * scale + 1e-9,
        "{what}: analytic {analytic:e} vs numeric {numeric:e}"
    );
}

/// Checks `grads` against central differences of `loss` over every parameter
/// of `module`.
fn check_module<M: Module + Clone>(module: &M, grads: &[Vec<f64>], loss: impl Fn(&M) -> f64, label: &str) {
    assert_eq!(grads.len(), module.blocks().len());
    let mut probe = module.clone();
    for (b, block_grads) in grads.iter().enumerate() {
        assert_eq!(block_grads.len(), module.blocks()[b].len());
        for (j, &g) in block_grads.iter().enumerate() {
            let orig = module.blocks()[b][j];
            probe.blocks_mut()[b][j] = orig + H;
            let up = loss(&probe);
            probe.blocks_mut()[b][j] = orig - H;
            let down = loss(&probe);
            probe.blocks_mut()[b][j] = orig;
            assert_close(g, (up - down) / (2.0 * H), &format!("{label} block {b} param {j}"));
        }
    }
}

#[test]
fn random_three_layer_dense_network() {
    let mut rng = seeded(11, 0);
    for (acts, batch) in [
        ([Activation::Relu, Activation::Tanh, Activation::Identity], 5),
        ([Activation::Tanh, Activation::Relu, Activation::Tanh], 3),
    ] {
        let specs = [
            LayerSpec { input: 6, output: 9, activation: acts[0] },
            LayerSpec { input: 9, output: 7, activation: acts[1] },
            LayerSpec { input: 7, output: 3, activation: acts[2] },
        ];
        let net = DenseNetwork::init(&specs, 1.0, &mut rng).unwrap();
        let x = randn(&mut rng, batch * 6);
        let proj = randn(&mut rng, batch * 3);
        let (_, grads) = net.gradients(&x, batch, |out| (linear_loss(out, &proj), proj.clone())).unwrap();
        let loss = |n: &DenseNetwork| linear_loss(n.forward_batch(&x, batch).unwrap().output(), &proj) / batch as f64;
        check_module(&net, &[grads], loss, "dense");
    }
}

#[test]
fn critic_shaped_network_with_input_gradient() {
    let mut rng = seeded(12, 0);
    let critic = DenseNetwork::mlp(18 + 4, &[32, 32], 1, Activation::Relu, Activation::Identity, 1.0, &mut rng).unwrap();
    let batch = 4;
    let x = randn(&mut rng, batch * 22);
    let proj = randn(&mut rng, batch);
    let tape = critic.forward_batch(&x, batch).unwrap();
    let (grads, d_input) = critic.backward(&tape, &proj).unwrap();
    let loss = |n: &DenseNetwork, x: &[f64]| linear_loss(n.forward_batch(x, batch).unwrap().output(), &proj);
    check_module(&critic, &[grads], |n| loss(n, &x), "critic");
    for i in 0..x.len() {
        let mut xp = x.clone();
        xp[i] += H;
        let up = loss(&critic, &xp);
        xp[i] -= 2.0 * H;
        let down = loss(&critic, &xp);
        assert_close(d_input[i], (up - down) / (2.0 * H), &format!("critic input {i}"));
    }
}

#[test]
fn conv_encoder() {
    let mut rng = seeded(13, 0);
    let specs = [
        ConvSpec { kernel: 3, stride: 2, channels: 4 },
        ConvSpec { kernel: 2, stride: 1, channels: 3 },
    ];
    let enc = ConvEncoder::init((9, 9, 3), &specs, &mut rng).unwrap();
    let batch = 2;
    let x: Vec<f64> = (0..batch * enc.input_dim()).map(|_| rand::Rng::random::<f64>(&mut rng)).collect();
    let proj = randn(&mut rng, batch * enc.output_dim());
    let tape = enc.forward_batch(&x, batch).unwrap();
    let (grads, d_input) = enc.backward(&tape, &proj).unwrap();
    let loss = |e: &ConvEncoder, x: &[f64]| linear_loss(e.forward_batch(x, batch).unwrap().output(), &proj);
    check_module(&enc, &[grads], |e| loss(e, &x), "conv");
    for i in (0..x.len()).step_by(7) {
        let mut xp = x.clone();
        xp[i] += H;
        let up = loss(&enc, &xp);
        xp[i] -= 2.0 * H;
        let down = loss(&enc, &xp);
        assert_close(d_input[i], (up - down) / (2.0 * H), &format!("conv input {i}"));
    }
}

#[test]
fn actor_composite_with_image_and_aux() {
    let mut rng = seeded(14, 0);
    let layout = ObsLayout { lowdim: 5, image_size: Some(10) };
    let conv = [ConvSpec { kernel: 4, stride: 2, channels: 3 }, ConvSpec { kernel: 2, stride: 2, channels: 2 }];
    // full-scale head so the tanh is not in its linear regime
    let actor = ActorNet::init(layout, &[12, 8], 3, &conv, 1.0, &mut rng).unwrap();
    let batch = 3;
    let mut obs = Vec::new();
    for _ in 0..batch {
        obs.extend(randn(&mut rng, 5));
        obs.extend((0..300).map(|_| rand::Rng::random::<f64>(&mut rng)));
    }
    let pa = randn(&mut rng, batch * 4);
    let px = randn(&mut rng, batch * 3);
    let tape = actor.forward_batch(&obs, batch).unwrap();
    let grads = actor.backward(&tape, &pa, Some(&px)).unwrap();
    let loss = |a: &ActorNet| {
        let t = a.forward_batch(&obs, batch).unwrap();
        linear_loss(t.actions(), &pa) + linear_loss(t.aux().unwrap(), &px)
    };
    check_module(&actor, &grads, loss, "actor");
    assert!(tape.actions().iter().all(|a| (-1.0..=1.0).contains(a)));
}

#[test]
fn actor_lowdim_without_aux() {
    let mut rng = seeded(15, 0);
    let layout = ObsLayout { lowdim: 7, image_size: None };
    let actor = ActorNet::init(layout, &[16, 16], 0, &[], 1.0, &mut rng).unwrap();
    let batch = 4;
    let obs = randn(&mut rng, batch * 7);
    let pa = randn(&mut rng, batch * 4);
    let tape = actor.forward_batch(&obs, batch).unwrap();
    assert!(tape.aux().is_none());
    let grads = actor.backward(&tape, &pa, None).unwrap();
    check_module(&actor, &grads, |a| linear_loss(a.forward_batch(&obs, batch).unwrap().actions(), &pa), "actor lowdim");
}
