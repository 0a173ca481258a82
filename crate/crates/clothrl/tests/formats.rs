mod common;

use std::fs;
use std::process::Command;

use clothrl::container::Container;
use clothrl::replay::{read_buffer, write_buffer};
use clothrl::rollout::record_demos;
use clothrl::{demos, HarnessError};
use clothrl_core::envs::EnvConfig;
use clothrl_core::experience::{assemble_episode, BufferConfig, PrioritizedBuffer, Transition};
use clothrl_core::rng::seeded;
use common::{demo_file, small_run, TASK};
use proptest::prelude::*;

fn episode(len: usize, od: usize, sd: usize, demo: bool, tag: f64) -> Vec<Transition> {
    (0..len)
        .map(|t| {
            let x = tag + t as f64;
            Transition {
                actor_obs: vec![x; od],
                full_state: vec![-x; sd],
                action: [x.sin(), x.cos(), 0.5, -0.25],
                reward: if t + 1 == len { 100.0 } else { x * 1e-3 },
                next_actor_obs: vec![x + 1.0; od],
                next_full_state: vec![-x - 1.0; sd],
                done: t + 1 == len,
                is_demo: demo,
            }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn replay_state_survives_the_container(
        capacity in 1usize..40,
        episodes in prop::collection::vec((1usize..9, any::<bool>()), 0..8),
        od in 1usize..4,
        sd in 0usize..3,
        n in 1usize..6,
        seed in any::<u64>(),
        bonus in prop::option::of(0.0f64..2.0),
    ) {
        let mut buf = PrioritizedBuffer::new(BufferConfig { capacity, constant_demo_bonus: bonus, ..BufferConfig::default() }).unwrap();
        let mut rng = seeded(seed, 0);
        for (i, &(len, demo)) in episodes.iter().enumerate() {
            for seg in assemble_episode(&episode(len, od, sd, demo, i as f64 * 0.37), n, 0.98).unwrap() {
                // pinned demonstrations may fill the buffer
                let _ = buf.insert(seg);
            }
            if buf.len() >= 2 {
                let b = buf.sample(2, &mut rng).unwrap();
                buf.update_priorities(&b.indices, &[0.3 * i as f64, 1.5], &[0.1, seed as f64 * 1e-20]).unwrap();
            }
        }
        let state = buf.export_state();
        let mut c = Container::new();
        write_buffer(&mut c, "buffer", &state);
        let c = Container::from_bytes(&c.to_bytes().unwrap()).unwrap();
        let back = read_buffer(&c, "buffer").unwrap();
        prop_assert_eq!(&back, &state);
        let rebuilt = PrioritizedBuffer::from_state(back).unwrap();
        prop_assert_eq!(rebuilt.export_state(), state);
        prop_assert_eq!(rebuilt.tree_total().to_bits(), buf.tree_total().to_bits());
    }

    #[test]
    fn demo_text_roundtrips_arbitrary_floats(
        vals in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 12),
    ) {
        let mut set = demos::DemoSet::new(TASK, 2, 1);
        set.episodes.push(vec![Transition {
            actor_obs: vals[0..2].to_vec(),
            full_state: vals[2..3].to_vec(),
            action: [vals[3], vals[4], vals[5], vals[6]],
            reward: vals[7],
            next_actor_obs: vals[8..10].to_vec(),
            next_full_state: vals[10..11].to_vec(),
            done: vals[11] > 0.0,
            is_demo: true,
        }]);
        set.episodes.push(Vec::new());
        let back = demos::from_text(&demos::to_text(&set).unwrap()).unwrap();
        let bits = |s: &demos::DemoSet| s.episodes.iter().flatten().flat_map(|t| {
            t.actor_obs.iter().chain(&t.full_state).chain(&t.action).chain([&t.reward]).chain(&t.next_actor_obs).chain(&t.next_full_state).map(|v| v.to_bits()).collect::<Vec<_>>()
        }).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&set));
        prop_assert_eq!(back.episodes.len(), 2);
    }
}

#[test]
fn recorded_demos_roundtrip_with_snapshots() {
    let tmp = tempfile::tempdir().unwrap();
    let set = record_demos(&EnvConfig::new(TASK), 2, 4).unwrap();
    assert!(set.episodes.iter().all(|ep| ep.iter().all(|t| t.is_demo) && ep.last().unwrap().done));
    assert_eq!(set.snapshots.iter().map(Vec::len).collect::<Vec<_>>(), set.episodes.iter().map(Vec::len).collect::<Vec<_>>());
    let path = tmp.path().join("d.txt");
    demos::save(&set, &path).unwrap();
    assert!(demos::snapshot_path(&path).exists());
    assert_eq!(demos::load(&path).unwrap(), set);
}

#[test]
fn zero_demos_is_a_header_only_file() {
    let tmp = tempfile::tempdir().unwrap();
    let set = record_demos(&EnvConfig::new(TASK), 0, 0).unwrap();
    let path = tmp.path().join("none.txt");
    demos::save(&set, &path).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("clothrl-demos 1 task=diagonal_folding"), "{text}");
    assert!(!demos::snapshot_path(&path).exists());
    assert_eq!(demos::load(&path).unwrap(), set);
}

#[test]
fn malformed_demo_text_is_rejected() {
    let good = demos::to_text(&record_demos(&EnvConfig::new(TASK), 1, 0).unwrap()).unwrap();
    let header = good.lines().next().unwrap();
    let first = good.lines().nth(1).unwrap();
    let cases = [
        String::new(),
        "not-demos 1".to_owned(),
        header.replacen("clothrl-demos 1", "clothrl-demos 9", 1),
        header.replace("task=diagonal_folding", "task=origami"),
        format!("{header}\n{}", first.rsplit_once(' ').unwrap().0),
        format!("{header}\n{}", first.replacen("0 ", "5 ", 1)),
        format!("{header}\n{} 2", first.rsplit_once(' ').unwrap().0),
    ];
    for c in cases {
        assert!(matches!(demos::from_text(&c), Err(HarnessError::Format(_))), "accepted {c:.60}");
    }
}

fn clothrl() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_clothrl"));
    c.env("RUST_LOG", "error");
    c
}

#[test]
fn cli_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let code = |c: &mut Command| c.output().unwrap().status.code();

    assert_eq!(code(clothrl().arg("train").arg("--task").arg("nonsense")), Some(2));
    assert_eq!(code(clothrl().arg("eval").arg("--checkpoint").arg(tmp.path().join("missing.ckpt"))), Some(1));

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "schema_version = 99\n").unwrap();
    assert_eq!(code(clothrl().arg("train").arg("--config").arg(&bad)), Some(2));

    // a NaN in the demonstrations surfaces as a numeric failure
    let mut set = record_demos(&EnvConfig::new(TASK), 1, 0).unwrap();
    set.episodes[0][0].reward = f64::NAN;
    let nan = tmp.path().join("nan.txt");
    demos::save(&set, &nan).unwrap();
    let cfg = small_run(&tmp.path().join("nan-run"), &nan, 1);
    let cfg_path = tmp.path().join("nan.toml");
    cfg.save(&cfg_path).unwrap();
    assert_eq!(code(clothrl().arg("train").arg("--config").arg(&cfg_path)), Some(3));
}

#[test]
fn cli_round_trip_record_train_eval_render() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("demos.txt");
    let out = clothrl().args(["record-demos", "--task", "diagonal_folding", "--count", "2", "--out"]).arg(&d).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(demos::load(&d).unwrap().episodes.len(), 2);

    let demos = demo_file(tmp.path(), 2);
    let cfg = small_run(&tmp.path().join("run"), &demos, 0);
    let cfg_path = tmp.path().join("run.toml");
    cfg.save(&cfg_path).unwrap();
    let out = clothrl().arg("train").arg("--config").arg(&cfg_path).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let ck = clothrl::harness::checkpoint_path(&cfg.output_dir, 0);
    let out = clothrl().arg("eval").arg("--checkpoint").arg(&ck).args(["--episodes", "2"]).output().unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 3, "{stdout}");
    let ep: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
    assert!(ep.get("return").is_some() && ep.get("success").is_some());
    assert!(lines[2].starts_with("success_rate "));

    let none = clothrl().arg("eval").arg("--checkpoint").arg(&ck).args(["--episodes", "0"]).output().unwrap();
    assert!(String::from_utf8(none.stdout).unwrap().contains("no data"));

    let frames = tmp.path().join("frames");
    let out = clothrl().args(["render-episode", "--task", "diagonal_folding", "--size", "32", "--out"]).arg(&frames).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let first = image::open(frames.join("frame_000.png")).unwrap();
    assert_eq!((first.width(), first.height()), (32, 32));
    assert!(fs::read_dir(&frames).unwrap().count() > 1);
}
