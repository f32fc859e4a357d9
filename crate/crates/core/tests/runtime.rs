use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use vigil_core::runtime::{
    run, Bolt, BoltError, Collector, Component, FaultPlan, Grouping, Payload, RunError, RunOptions, Spout,
    SpoutEmission, SpoutError, SpoutPoll, StopCondition, StreamDecl, Topology, TopologySpec, TupleEnvelope,
};

/// Emits `count` numbered messages and keeps them until acked.
struct NumberSpout {
    next: u64,
    count: u64,
    pending: BTreeMap<u64, SpoutEmission>,
    max_pending: usize,
    acked: Arc<Mutex<Vec<u64>>>,
    failed: Arc<Mutex<Vec<u64>>>,
}

impl NumberSpout {
    fn emission(n: u64) -> SpoutEmission {
        SpoutEmission {
            msg_id: n,
            stream: "numbers".into(),
            payload: Payload::new(n.to_le_bytes().to_vec()).with_field("key", format!("k{}", n % 5)),
        }
    }
}

impl Spout for NumberSpout {
    fn next_tuple(&mut self, _now: u64, _wall: i64) -> Result<SpoutPoll, SpoutError> {
        if self.next >= self.count {
            return Ok(SpoutPoll::Exhausted);
        }
        if self.pending.len() >= self.max_pending {
            return Ok(SpoutPoll::Idle);
        }
        let e = Self::emission(self.next);
        self.pending.insert(self.next, e.clone());
        self.next += 1;
        Ok(SpoutPoll::Emit(e))
    }

    fn ack(&mut self, msg_id: u64) {
        self.pending.remove(&msg_id);
        self.acked.lock().unwrap().push(msg_id);
    }

    fn replay(&mut self, msg_id: u64) -> Option<SpoutEmission> {
        self.pending.get(&msg_id).cloned()
    }

    fn fail(&mut self, msg_id: u64) {
        self.pending.remove(&msg_id);
        self.failed.lock().unwrap().push(msg_id);
    }
}

fn number(t: &TupleEnvelope) -> u64 {
    u64::from_le_bytes(t.payload.body()[..8].try_into().unwrap())
}

/// Emits two children per input.
struct SplitBolt;

impl Bolt for SplitBolt {
    fn execute(&mut self, input: TupleEnvelope, out: &mut Collector<'_>) -> Result<(), BoltError> {
        let n = number(&input);
        for half in 0..2u64 {
            let p = Payload::new((n * 2 + half).to_le_bytes().to_vec()).with_field("key", format!("k{n}"));
            out.emit("halves", p, &[&input])?;
        }
        out.ack(&input);
        Ok(())
    }
}

struct SinkBolt {
    seen: Arc<Mutex<Vec<u64>>>,
}

impl Bolt for SinkBolt {
    fn execute(&mut self, input: TupleEnvelope, out: &mut Collector<'_>) -> Result<(), BoltError> {
        self.seen.lock().unwrap().push(number(&input));
        out.ack(&input);
        Ok(())
    }
}

struct Harness {
    topology: Topology,
    components: HashMap<String, Component>,
    acked: Arc<Mutex<Vec<u64>>>,
    failed: Arc<Mutex<Vec<u64>>>,
    seen: Arc<Mutex<Vec<u64>>>,
}

fn harness(count: u64, split: usize, sink: usize) -> Harness {
    let spec = TopologySpec::new()
        .spout("numbers", 1, vec![StreamDecl::new("numbers", &["key"])])
        .bolt("split", split, vec![StreamDecl::new("halves", &["key"])])
        .bolt("sink", sink, vec![])
        .edge("numbers", "numbers", "split", Grouping::Shuffle)
        .edge("split", "halves", "sink", Grouping::Fields("key".into()));
    let acked = Arc::new(Mutex::new(Vec::new()));
    let failed = Arc::new(Mutex::new(Vec::new()));
    let seen = Arc::new(Mutex::new(Vec::new()));
    let mut components = HashMap::new();
    let (a, f) = (acked.clone(), failed.clone());
    components.insert(
        "numbers".to_string(),
        Component::spout(move |_| NumberSpout {
            next: 0,
            count,
            pending: BTreeMap::new(),
            max_pending: 64,
            acked: a.clone(),
            failed: f.clone(),
        }),
    );
    components.insert("split".to_string(), Component::bolt(|_| SplitBolt));
    let s = seen.clone();
    components.insert("sink".to_string(), Component::bolt(move |_| SinkBolt { seen: s.clone() }));
    Harness { topology: Topology::build(spec).unwrap(), components, acked, failed, seen }
}

#[test]
fn clean_run_acks_every_message_once() {
    let h = harness(500, 3, 2);
    let report = run(&h.topology, &h.components, &StopCondition::drain(), &RunOptions::default()).unwrap();
    let mut acked = h.acked.lock().unwrap().clone();
    acked.sort_unstable();
    assert_eq!(acked, (0..500).collect::<Vec<_>>());
    let mut seen = h.seen.lock().unwrap().clone();
    seen.sort_unstable();
    assert_eq!(seen, (0..1000).collect::<Vec<_>>());
    assert_eq!(report.replays, 0);
    assert_eq!(report.nodes["split"].executed, 500);
    assert_eq!(report.nodes["sink"].executed, 1000);
    assert_eq!(report.spout_messages, 500);
}

#[test]
fn dropped_deliveries_are_replayed_in_virtual_time() {
    let h = harness(300, 2, 2);
    let options = RunOptions { virtual_clock: true, seed: 7, faults: FaultPlan::none().with_drop_rate(0.05), ..Default::default() };
    let report = run(&h.topology, &h.components, &StopCondition::drain(), &options).unwrap();
    assert!(report.injected_drops > 0);
    assert!(report.replays > 0);
    let acked = h.acked.lock().unwrap().clone();
    let failed = h.failed.lock().unwrap().clone();
    assert_eq!(acked.len() + failed.len(), 300);
    // at-least-once: every acked message reached the sink with both halves
    let seen = h.seen.lock().unwrap().clone();
    for n in acked {
        assert!(seen.contains(&(2 * n)) && seen.contains(&(2 * n + 1)), "message {n}");
    }
    assert!(report.clock_ms >= 5000, "replays need at least one timeout");
}

#[test]
fn virtual_runs_are_reproducible() {
    let options = RunOptions { virtual_clock: true, seed: 11, faults: FaultPlan::none().with_drop_rate(0.05), ..Default::default() };
    let a = harness(200, 2, 2);
    let ra = run(&a.topology, &a.components, &StopCondition::drain(), &options).unwrap();
    let b = harness(200, 2, 2);
    let rb = run(&b.topology, &b.components, &StopCondition::drain(), &options).unwrap();
    assert_eq!(ra.injected_drops, rb.injected_drops);
    assert_eq!(ra.replays, rb.replays);
    assert_eq!(*a.failed.lock().unwrap(), *b.failed.lock().unwrap());
}

#[test]
fn total_loss_exhausts_replay_budget() {
    let h = harness(10, 1, 1);
    let options = RunOptions { virtual_clock: true, faults: FaultPlan::none().with_drop_rate(1.0), ..Default::default() };
    let report = run(&h.topology, &h.components, &StopCondition::drain(), &options).unwrap();
    assert_eq!(report.replays, 30);
    assert_eq!(report.failed_roots, 10);
    assert_eq!(h.failed.lock().unwrap().len(), 10);
    assert!(h.acked.lock().unwrap().is_empty());
}

#[test]
fn killed_instance_is_restarted_and_run_completes() {
    let h = harness(100, 2, 2);
    let options = RunOptions { virtual_clock: true, faults: FaultPlan::none().with_kill("split", 0, 20), ..Default::default() };
    let report = run(&h.topology, &h.components, &StopCondition::drain(), &options).unwrap();
    assert_eq!(report.restarts, 1);
    assert_eq!(report.failed_roots, 0);
    let mut acked = h.acked.lock().unwrap().clone();
    acked.sort_unstable();
    assert_eq!(acked, (0..100).collect::<Vec<_>>());
}

struct PanicOnce {
    armed: Arc<AtomicBool>,
}

impl Bolt for PanicOnce {
    fn execute(&mut self, input: TupleEnvelope, out: &mut Collector<'_>) -> Result<(), BoltError> {
        if number(&input) == 3 && self.armed.swap(false, Ordering::SeqCst) {
            panic!("injected");
        }
        out.ack(&input);
        Ok(())
    }
}

#[test]
fn panicking_bolt_is_restarted_and_tuple_replayed() {
    let spec = TopologySpec::new()
        .spout("numbers", 1, vec![StreamDecl::new("numbers", &["key"])])
        .bolt("p", 1, vec![])
        .edge("numbers", "numbers", "p", Grouping::Shuffle);
    let acked = Arc::new(Mutex::new(Vec::new()));
    let failed = Arc::new(Mutex::new(Vec::new()));
    let mut components = HashMap::new();
    let (a, f) = (acked.clone(), failed.clone());
    components.insert(
        "numbers".to_string(),
        Component::spout(move |_| NumberSpout {
            next: 0,
            count: 10,
            pending: BTreeMap::new(),
            max_pending: 4,
            acked: a.clone(),
            failed: f.clone(),
        }),
    );
    let armed = Arc::new(AtomicBool::new(true));
    components.insert("p".to_string(), Component::bolt(move |_| PanicOnce { armed: armed.clone() }));
    let topology = Topology::build(spec).unwrap();
    let options = RunOptions { virtual_clock: true, ..Default::default() };
    let report = run(&topology, &components, &StopCondition::drain(), &options).unwrap();
    assert_eq!(report.restarts, 1);
    assert!(report.replays >= 1, "the lost tuple and any queued behind it are replayed");
    assert_eq!(acked.lock().unwrap().len(), 10);
}

struct FatalBolt;

impl Bolt for FatalBolt {
    fn execute(&mut self, _input: TupleEnvelope, _out: &mut Collector<'_>) -> Result<(), BoltError> {
        Err(BoltError::Fatal("disk gone".into()))
    }
}

#[test]
fn fatal_bolt_error_aborts_run() {
    let mut h = harness(10, 1, 1);
    h.components.insert("sink".to_string(), Component::bolt(|_| FatalBolt));
    let err = run(&h.topology, &h.components, &StopCondition::drain(), &RunOptions::default()).unwrap_err();
    assert!(matches!(err, RunError::Executor { ref node, .. } if node == "sink"), "{err}");
}

#[test]
fn missing_component_is_rejected() {
    let mut h = harness(1, 1, 1);
    h.components.remove("sink");
    assert!(matches!(
        run(&h.topology, &h.components, &StopCondition::drain(), &RunOptions::default()),
        Err(RunError::MissingComponent(_))
    ));
}

/// Source that never ends; only a kill stops it.
struct Endless(u64, VecDeque<u64>);

impl Spout for Endless {
    fn next_tuple(&mut self, _now: u64, _wall: i64) -> Result<SpoutPoll, SpoutError> {
        if self.1.len() > 16 {
            return Ok(SpoutPoll::Idle);
        }
        self.0 += 1;
        self.1.push_back(self.0);
        Ok(SpoutPoll::Emit(NumberSpout::emission(self.0)))
    }
    fn ack(&mut self, msg_id: u64) {
        self.1.retain(|&m| m != msg_id);
    }
    fn replay(&mut self, msg_id: u64) -> Option<SpoutEmission> {
        Some(NumberSpout::emission(msg_id))
    }
    fn fail(&mut self, _msg_id: u64) {}
}

#[test]
fn kill_flag_stops_an_endless_source() {
    let mut h = harness(1, 1, 1);
    h.components.insert("numbers".to_string(), Component::spout(|_| Endless(0, VecDeque::new())));
    let flag = Arc::new(AtomicBool::new(false));
    let setter = flag.clone();
    std::thread::spawn(move || {
        std::thread::sleep(std::time::Duration::from_millis(100));
        setter.store(true, Ordering::SeqCst);
    });
    let report = run(&h.topology, &h.components, &StopCondition::with_kill(flag), &RunOptions::default()).unwrap();
    assert!(report.killed);
    assert!(report.spout_messages > 0);
}
