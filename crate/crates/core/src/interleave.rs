//! Deterministic replay of read/write timelines on a shared vector.
//!
//! A [`ScheduleScript`] lists component writes and component reads by named
//! actors at distinct integer times. Replaying it shows which full-vector
//! reads are *consistent* (equal to the memory state at some time point up to
//! when the read completed) and which are hybrids of versions that were never
//! in memory together.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Action {
    Write {
        component: usize,
        value: f64,
    },
    /// Copies the component into the same slot of the actor's local vector.
    Read {
        component: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptEvent {
    pub time: u64,
    pub actor: usize,
    pub action: Action,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScheduleScript {
    pub events: Vec<ScriptEvent>,
}

impl ScheduleScript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn write(mut self, time: u64, actor: usize, component: usize, value: f64) -> Self {
        self.events.push(ScriptEvent {
            time,
            actor,
            action: Action::Write { component, value },
        });
        self
    }

    pub fn read(mut self, time: u64, actor: usize, component: usize) -> Self {
        self.events.push(ScriptEvent {
            time,
            actor,
            action: Action::Read { component },
        });
        self
    }

    fn validate(&self, n: usize) -> Result<()> {
        let mut last = 0u64;
        for (k, ev) in self.events.iter().enumerate() {
            if ev.time <= last {
                return Err(Error::MalformedScript(format!(
                    "event {k}: time {} is not after {last} (time 0 is the initial state)",
                    ev.time
                )));
            }
            last = ev.time;
            let component = match ev.action {
                Action::Write { component, value } => {
                    if !value.is_finite() {
                        return Err(Error::MalformedScript(format!("event {k}: non-finite write")));
                    }
                    component
                }
                Action::Read { component } => component,
            };
            if component >= n {
                return Err(Error::MalformedScript(format!(
                    "event {k}: component {component} out of range for n = {n}"
                )));
            }
        }
        Ok(())
    }
}

/// One completed full-vector read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotOutcome {
    pub actor: usize,
    pub values: Vec<f64>,
    /// When each component was read.
    pub read_times: Vec<u64>,
    pub completed_at: u64,
    /// Times (start of each state's lifetime) at which memory equalled the
    /// snapshot, restricted to states that existed by `completed_at`.
    pub matching_state_times: Vec<u64>,
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterleavingTrace {
    /// `(time, state)` after every write, starting with the initial state at 0.
    pub history: Vec<(u64, Vec<f64>)>,
    pub snapshots: Vec<SnapshotOutcome>,
    /// Actors whose last read never covered every component.
    pub incomplete_actors: Vec<usize>,
}

/// Replays `script` against a memory initialised to `initial`.
///
/// An actor's snapshot completes once it has read every component; a second
/// read of the same component before that is rejected as malformed. The
/// verdict is decided per component: the snapshot value of component `k`
/// is present in memory over a union of state-index intervals, and the read
/// is consistent iff those interval sets intersect across all components.
pub fn simulate_interleaving(initial: &[f64], script: &ScheduleScript) -> Result<InterleavingTrace> {
    let n = initial.len();
    script.validate(n)?;

    let mut memory = initial.to_vec();
    let mut history = vec![(0u64, memory.clone())];
    // per component: (state index where it took this value, value)
    let mut versions: Vec<Vec<(usize, f64)>> = initial.iter().map(|&v| vec![(0, v)]).collect();
    let mut pending: Vec<(usize, PartialRead)> = Vec::new();
    let mut snapshots = Vec::new();

    for ev in &script.events {
        match ev.action {
            Action::Write { component, value } => {
                memory[component] = value;
                history.push((ev.time, memory.clone()));
                versions[component].push((history.len() - 1, value));
            }
            Action::Read { component } => {
                let slot = match pending.iter().position(|(a, _)| *a == ev.actor) {
                    Some(p) => p,
                    None => {
                        pending.push((ev.actor, vec![None; n]));
                        pending.len() - 1
                    }
                };
                let reads = &mut pending[slot].1;
                if reads[component].is_some() {
                    return Err(Error::MalformedScript(format!(
                        "actor {} read component {component} twice in one snapshot",
                        ev.actor
                    )));
                }
                reads[component] = Some((memory[component], ev.time));
                if reads.iter().all(Option::is_some) {
                    let (actor, reads) = pending.swap_remove(slot);
                    let (values, read_times): (Vec<f64>, Vec<u64>) = reads.into_iter().map(Option::unwrap).unzip();
                    let states = history.len();
                    let matching = matching_states(&versions, &values, states);
                    snapshots.push(SnapshotOutcome {
                        actor,
                        consistent: !matching.is_empty(),
                        matching_state_times: matching.iter().map(|&s| history[s].0).collect(),
                        values,
                        read_times,
                        completed_at: ev.time,
                    });
                }
            }
        }
    }

    let mut incomplete_actors: Vec<usize> = pending.into_iter().map(|(a, _)| a).collect();
    incomplete_actors.sort_unstable();
    Ok(InterleavingTrace {
        history,
        snapshots,
        incomplete_actors,
    })
}

/// Per component: the value read and when, once it has been read.
type PartialRead = Vec<Option<(f64, u64)>>;

/// State indices `< states` at which every component holds the snapshot value.
fn matching_states(versions: &[Vec<(usize, f64)>], values: &[f64], states: usize) -> Vec<usize> {
    // start with the whole range and intersect one component at a time
    let mut live: Vec<(usize, usize)> = vec![(0, states)];
    for (comp_versions, &v) in versions.iter().zip(values) {
        let mut ranges = Vec::new();
        for (k, &(start, value)) in comp_versions.iter().enumerate() {
            if start >= states {
                break;
            }
            if value.to_bits() == v.to_bits() {
                let end = comp_versions.get(k + 1).map_or(states, |next| next.0.min(states));
                ranges.push((start, end));
            }
        }
        live = intersect(&live, &ranges);
        if live.is_empty() {
            break;
        }
    }
    live.into_iter().flat_map(|(a, b)| a..b).collect()
}

fn intersect(a: &[(usize, usize)], b: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        let lo = a[i].0.max(b[j].0);
        let hi = a[i].1.min(b[j].1);
        if lo < hi {
            out.push((lo, hi));
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Two-component memory (a, b) with writes at 3, 5 and 7; actor 0 reads at
    // 1 and 4, actor 1 at 2 and 6.
    fn timeline() -> ScheduleScript {
        ScheduleScript::new()
            .read(1, 0, 0)
            .read(2, 1, 0)
            .write(3, 9, 0, 10.5)
            .read(4, 0, 1)
            .write(5, 9, 1, 20.5)
            .read(6, 1, 1)
            .write(7, 9, 0, 11.5)
    }

    #[test]
    fn reproduces_consistent_and_inconsistent_reads() {
        let trace = simulate_interleaving(&[1.0, 2.0], &timeline()).unwrap();
        assert_eq!(trace.history.len(), 4);
        let early = &trace.snapshots[0];
        assert_eq!(early.actor, 0);
        assert_eq!(early.values, vec![1.0, 2.0]);
        assert!(early.consistent);
        assert_eq!(early.matching_state_times, vec![0]);
        let late = &trace.snapshots[1];
        assert_eq!(late.actor, 1);
        assert_eq!(late.values, vec![1.0, 20.5]);
        assert!(!late.consistent);
        assert!(trace.incomplete_actors.is_empty());
    }

    #[test]
    fn reads_before_writes_equal_initial() {
        let s = ScheduleScript::new().read(1, 0, 0).read(2, 0, 1).write(3, 1, 1, 5.0);
        let trace = simulate_interleaving(&[4.0, 6.0], &s).unwrap();
        assert_eq!(trace.snapshots[0].values, vec![4.0, 6.0]);
        assert!(trace.snapshots[0].consistent);
    }

    #[test]
    fn empty_script() {
        let trace = simulate_interleaving(&[1.0, 2.0], &ScheduleScript::new()).unwrap();
        assert!(trace.snapshots.is_empty());
        assert_eq!(trace.history, vec![(0, vec![1.0, 2.0])]);
    }

    #[test]
    fn malformed_scripts() {
        let s = ScheduleScript::new().read(2, 0, 0).read(2, 1, 0);
        assert!(matches!(
            simulate_interleaving(&[0.0], &s),
            Err(Error::MalformedScript(_))
        ));
        let s = ScheduleScript::new().read(1, 0, 3);
        assert!(simulate_interleaving(&[0.0], &s).is_err());
        let s = ScheduleScript::new().read(0, 0, 0);
        assert!(simulate_interleaving(&[0.0], &s).is_err());
        let s = ScheduleScript::new().read(1, 0, 0).read(2, 0, 0);
        assert!(simulate_interleaving(&[0.0, 1.0], &s).is_err());
    }

    #[test]
    fn partial_reads_are_reported() {
        let s = ScheduleScript::new().read(1, 4, 0);
        let trace = simulate_interleaving(&[0.0, 1.0], &s).unwrap();
        assert_eq!(trace.incomplete_actors, vec![4]);
    }

    fn brute_force(trace: &InterleavingTrace, snap: &SnapshotOutcome) -> bool {
        trace
            .history
            .iter()
            .filter(|(t, _)| *t <= snap.completed_at)
            .any(|(_, state)| state == &snap.values)
    }

    fn arb_script() -> impl Strategy<Value = (usize, ScheduleScript)> {
        (1usize..4)
            .prop_flat_map(|n| {
                let ev = (0usize..3, 0usize..n, any::<bool>(), 0u8..3);
                (Just(n), prop::collection::vec(ev, 0..40))
            })
            .prop_map(|(n, raw)| {
                let mut script = ScheduleScript::new();
                let mut filled: Vec<Vec<bool>> = vec![vec![false; n]; 3];
                for (k, (actor, comp, is_write, val)) in raw.into_iter().enumerate() {
                    let t = k as u64 + 1;
                    if is_write {
                        // small value alphabet so that value repeats happen
                        script = script.write(t, 99, comp, val as f64);
                    } else {
                        if filled[actor][comp] {
                            continue;
                        }
                        filled[actor][comp] = true;
                        if filled[actor].iter().all(|f| *f) {
                            filled[actor] = vec![false; n];
                        }
                        script = script.read(t, actor, comp);
                    }
                }
                (n, script)
            })
    }

    proptest! {
        #[test]
        fn verdict_matches_brute_force((n, script) in arb_script()) {
            let trace = simulate_interleaving(&vec![0.0; n], &script).unwrap();
            for snap in &trace.snapshots {
                prop_assert_eq!(snap.consistent, brute_force(&trace, snap));
            }
        }
    }
}
