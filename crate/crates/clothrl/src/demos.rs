//! Demonstration files.
//!
//! Text part, one record per line:
//!
//! ```text
//! clothrl-demos 1 task=<name> actor_obs=<n> full_state=<m> episodes=<k>
//! <episode> <actor_obs..n> <full_state..m> <action..4> <reward> <next_actor_obs..n> <next_full_state..m> <done> <is_demo>
//! ```
//!
//! Floats use Rust's shortest round-trip decimal form, flags are 0 or 1.
//! Simulator snapshots for reset-to-demonstration live next to it in a
//! container file (`<path>.snapshots`), keyed `ep<e>.t<t>.snapshot.*`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clothrl_core::approximator::NamedArray;
use clothrl_core::envs::{EnvSnapshot, Task};
use clothrl_core::experience::Transition;

use crate::container::Container;
use crate::error::{HarnessError, Result};

pub const SCHEMA_VERSION: u32 = 1;
const MAGIC: &str = "clothrl-demos";

#[derive(Debug, Clone, PartialEq)]
pub struct DemoSet {
    pub task: Task,
    pub actor_obs_dim: usize,
    pub full_state_dim: usize,
    pub episodes: Vec<Vec<Transition>>,
    /// Per episode, the simulator state before every step.
    pub snapshots: Vec<Vec<EnvSnapshot>>,
}

impl DemoSet {
    pub fn new(task: Task, actor_obs_dim: usize, full_state_dim: usize) -> Self {
        Self {
            task,
            actor_obs_dim,
            full_state_dim,
            episodes: Vec::new(),
            snapshots: Vec::new(),
        }
    }

    pub fn transition_count(&self) -> usize {
        self.episodes.iter().map(Vec::len).sum()
    }

    pub fn all_snapshots(&self) -> Vec<EnvSnapshot> {
        self.snapshots.iter().flatten().cloned().collect()
    }
}

pub fn snapshot_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".snapshots");
    PathBuf::from(s)
}

fn push_floats(line: &mut String, xs: &[f64]) {
    for x in xs {
        write!(line, " {x}").expect("writing to a String");
    }
}

pub fn to_text(set: &DemoSet) -> Result<String> {
    let mut out = format!(
        "{MAGIC} {SCHEMA_VERSION} task={} actor_obs={} full_state={} episodes={}\n",
        set.task.name(),
        set.actor_obs_dim,
        set.full_state_dim,
        set.episodes.len()
    );
    for (e, ep) in set.episodes.iter().enumerate() {
        for t in ep {
            if t.actor_obs.len() != set.actor_obs_dim || t.next_actor_obs.len() != set.actor_obs_dim || t.full_state.len() != set.full_state_dim || t.next_full_state.len() != set.full_state_dim {
                return Err(HarnessError::Format(format!("episode {e}: transition dimensions differ from the header")));
            }
            let mut line = e.to_string();
            push_floats(&mut line, &t.actor_obs);
            push_floats(&mut line, &t.full_state);
            push_floats(&mut line, &t.action);
            push_floats(&mut line, &[t.reward]);
            push_floats(&mut line, &t.next_actor_obs);
            push_floats(&mut line, &t.next_full_state);
            write!(line, " {} {}", t.done as u8, t.is_demo as u8).expect("writing to a String");
            out.push_str(&line);
            out.push('\n');
        }
    }
    Ok(out)
}

fn header_field<'a>(fields: &mut impl Iterator<Item = &'a str>, key: &str) -> Result<&'a str> {
    let f = fields.next().ok_or_else(|| HarnessError::Format(format!("demo header lacks {key}")))?;
    f.strip_prefix(key)
        .and_then(|r| r.strip_prefix('='))
        .ok_or_else(|| HarnessError::Format(format!("demo header: expected {key}=..., found {f}")))
}

fn parse_count(s: &str, what: &str) -> Result<usize> {
    s.parse().map_err(|_| HarnessError::Format(format!("demo header: bad {what} {s:?}")))
}

pub fn from_text(text: &str) -> Result<DemoSet> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| HarnessError::Format("empty demo file".into()))?;
    let mut fields = header.split_whitespace();
    if fields.next() != Some(MAGIC) {
        return Err(HarnessError::Format("not a demo file".into()));
    }
    let version = fields.next().unwrap_or("");
    if version != SCHEMA_VERSION.to_string() {
        return Err(HarnessError::Format(format!("unsupported demo schema version {version:?}")));
    }
    let task_name = header_field(&mut fields, "task")?;
    let task = Task::ALL
        .into_iter()
        .find(|t| t.name() == task_name)
        .ok_or_else(|| HarnessError::Format(format!("unknown task {task_name:?}")))?;
    let od = parse_count(header_field(&mut fields, "actor_obs")?, "actor_obs")?;
    let sd = parse_count(header_field(&mut fields, "full_state")?, "full_state")?;
    let n_eps = parse_count(header_field(&mut fields, "episodes")?, "episodes")?;
    let mut set = DemoSet::new(task, od, sd);
    set.episodes = vec![Vec::new(); n_eps];
    let width = 1 + 2 * od + 2 * sd + 4 + 1 + 2;
    for (no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let err = |m: &str| HarnessError::Format(format!("demo line {}: {m}", no + 1));
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != width {
            return Err(err(&format!("expected {width} fields, found {}", tok.len())));
        }
        let ep: usize = tok[0].parse().map_err(|_| err("bad episode index"))?;
        let vals = tok[1..tok.len() - 2].iter().map(|s| s.parse::<f64>().map_err(|_| err(&format!("bad number {s:?}")))).collect::<Result<Vec<_>>>()?;
        let flag = |s: &str| match s {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(err(&format!("bad flag {s:?}"))),
        };
        let mut at = 0;
        let mut take = |n: usize| {
            let s = vals[at..at + n].to_vec();
            at += n;
            s
        };
        let actor_obs = take(od);
        let full_state = take(sd);
        let a = take(4);
        let reward = take(1)[0];
        let next_actor_obs = take(od);
        let next_full_state = take(sd);
        let t = Transition {
            actor_obs,
            full_state,
            action: [a[0], a[1], a[2], a[3]],
            reward,
            next_actor_obs,
            next_full_state,
            done: flag(tok[tok.len() - 2])?,
            is_demo: flag(tok[tok.len() - 1])?,
        };
        set.episodes.get_mut(ep).ok_or_else(|| err("episode index beyond header count"))?.push(t);
    }
    Ok(set)
}

/// Writes the text file and, if any snapshots exist, the snapshot container.
pub fn save(set: &DemoSet, path: &Path) -> Result<()> {
    fs::write(path, to_text(set)?).map_err(|e| HarnessError::io(path, e))?;
    let mut c = Container::new();
    for (e, snaps) in set.snapshots.iter().enumerate() {
        for (t, s) in snaps.iter().enumerate() {
            c.push_arrays(s.to_arrays().into_iter().map(|mut a| {
                a.name = format!("ep{e}.t{t}.{}", a.name);
                a
            }));
        }
    }
    let sp = snapshot_path(path);
    if c.is_empty() {
        if sp.exists() {
            fs::remove_file(&sp).map_err(|e| HarnessError::io(&sp, e))?;
        }
        Ok(())
    } else {
        c.save(&sp)
    }
}

/// Reads the text file and, when present, its snapshots.
pub fn load(path: &Path) -> Result<DemoSet> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let mut set = from_text(&text)?;
    let sp = snapshot_path(path);
    if !sp.exists() {
        set.snapshots = vec![Vec::new(); set.episodes.len()];
        return Ok(set);
    }
    let c = Container::load(&sp)?;
    let mut groups: BTreeMap<(usize, usize), Vec<NamedArray>> = BTreeMap::new();
    for mut a in c.arrays() {
        let bad = || HarnessError::Format(format!("unexpected snapshot entry {}", a.name));
        let (ep, rest) = a.name.strip_prefix("ep").and_then(|r| r.split_once(".t")).ok_or_else(bad)?;
        let (step, name) = rest.split_once('.').ok_or_else(bad)?;
        let key = (ep.parse().map_err(|_| bad())?, step.parse().map_err(|_| bad())?);
        a.name = name.to_owned();
        groups.entry(key).or_default().push(a);
    }
    set.snapshots = vec![Vec::new(); set.episodes.len()];
    for ((e, t), group) in groups {
        let eps = set.snapshots.len();
        let snaps = set.snapshots.get_mut(e).ok_or_else(|| HarnessError::Format(format!("snapshot for episode {e} of {eps}")))?;
        if t != snaps.len() {
            return Err(HarnessError::Format(format!("episode {e}: snapshot steps are not contiguous")));
        }
        snaps.push(EnvSnapshot::from_arrays(&group)?);
    }
    Ok(set)
}
