//! Threaded execution of a [`Topology`].
//!
//! Every spout and bolt instance runs on its own thread. Bolts read from a
//! bounded input queue (senders block when it is full) and a control channel.
//! A single acker thread owns the [`AckerState`] and tells spouts when their
//! trees complete or need replay. The calling thread supervises: it ticks
//! components, advances the virtual clock and detects the end of the run.
//!
//! Quiescence is tracked with one counter: every message put on any channel
//! counts as in flight until its receiver has fully handled it, and each
//! spout holds one unit while it is actively polling its source.

use std::collections::{BTreeMap, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicI64, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, select, unbounded, Receiver, RecvTimeoutError, SendTimeoutError, Sender};
use log::{debug, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::acker::{AckerState, SpoutRef};
use super::clock::Clock;
use super::component::{Bolt, BoltError, Component, EmitError, Spout, SpoutEmission, SpoutPoll};
use super::envelope::{Payload, TupleEnvelope, TupleId, TupleIdGen};
use super::fault::FaultPlan;
use super::grouping::{route, Grouping};
use super::report::{NodeCounts, RunReport};
use super::topology::{NodeKind, Topology};

pub const DEFAULT_REPLAY_BUDGET: u32 = 3;
pub const DEFAULT_RESTART_BUDGET: u32 = 3;
const NO_WAKEUP: u64 = u64::MAX;
const SEND_POLL: Duration = Duration::from_millis(20);

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub seed: u64,
    /// Use a virtual clock that jumps to the next deadline whenever the
    /// topology is idle. Makes runs reproducible for a fixed seed.
    pub virtual_clock: bool,
    pub replay_budget: u32,
    /// Restarts allowed per executor after a panic before the run aborts.
    pub restart_budget: u32,
    pub tick_interval_ms: u64,
    pub faults: FaultPlan,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            seed: 0,
            virtual_clock: false,
            replay_budget: DEFAULT_REPLAY_BUDGET,
            restart_budget: DEFAULT_RESTART_BUDGET,
            tick_interval_ms: 20,
            faults: FaultPlan::none(),
        }
    }
}

/// When a run ends: always once sources are exhausted and every tree is
/// settled, or earlier when the kill flag is raised.
#[derive(Debug, Clone, Default)]
pub struct StopCondition {
    pub kill: Option<Arc<AtomicBool>>,
}

impl StopCondition {
    pub fn drain() -> Self {
        StopCondition { kill: None }
    }

    pub fn with_kill(flag: Arc<AtomicBool>) -> Self {
        StopCondition { kill: Some(flag) }
    }

    fn killed(&self) -> bool {
        self.kill.as_ref().is_some_and(|k| k.load(Ordering::SeqCst))
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("no component bound to node {0:?}")]
    MissingComponent(String),
    #[error("component bound to node {0:?} has the wrong kind")]
    KindMismatch(String),
    #[error("executor {node}[{instance}] failed: {reason}")]
    Executor { node: String, instance: usize, reason: String },
    #[error("virtual clock stalled with {pending} pending roots")]
    Stalled { pending: usize },
    #[error("could not spawn thread: {0}")]
    Spawn(String),
}

#[derive(Debug)]
enum Ctrl {
    Acked(u64),
    Replay(u64),
    Tick,
    Shutdown,
}

#[derive(Debug)]
enum AckerMsg {
    Open { root: TupleId, spout: SpoutRef, msg_id: u64, deadline: u64, xor: u64 },
    Xor { root: TupleId, value: u64 },
    Fail { root: TupleId },
    Tick,
    Stop,
}

struct Shared {
    clock: Clock,
    in_flight: AtomicI64,
    shutdown: AtomicBool,
    executed: Vec<AtomicU64>,
    emitted: Vec<AtomicU64>,
    spout_messages: AtomicU64,
    replays: AtomicU64,
    failed_roots: AtomicU64,
    drops: AtomicU64,
    errors: AtomicU64,
    restarts: AtomicU64,
    acker_pending: AtomicUsize,
    acker_deadline: AtomicU64,
    /// Per executor slot: requested wakeup time, or `NO_WAKEUP`.
    wakeups: Vec<AtomicU64>,
    /// Per executor slot; only meaningful for spouts.
    exhausted: Vec<AtomicBool>,
    fatal: Mutex<Option<RunError>>,
}

impl Shared {
    fn begin(&self) {
        self.in_flight.fetch_add(1, Ordering::SeqCst);
    }

    fn done(&self) {
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
    }

    fn set_fatal(&self, err: RunError) {
        let mut slot = self.fatal.lock().unwrap_or_else(|p| p.into_inner());
        if slot.is_none() {
            *slot = Some(err);
        }
        self.shutdown.store(true, Ordering::SeqCst);
    }
}

struct OutEdge {
    stream: String,
    grouping: Grouping,
    to: usize,
}

struct Wiring {
    node_ids: Vec<String>,
    declared: Vec<Vec<String>>,
    outs: Vec<Vec<OutEdge>>,
    /// Bolt input queues, indexed by node then instance (empty for spouts).
    inputs: Vec<Vec<Sender<TupleEnvelope>>>,
    ctrl: Vec<Vec<Sender<Ctrl>>>,
    /// First executor slot of each node.
    slot_base: Vec<usize>,
}

fn send_ctrl(shared: &Shared, tx: &Sender<Ctrl>, msg: Ctrl) {
    shared.begin();
    if tx.send(msg).is_err() {
        shared.done();
    }
}

fn send_acker(shared: &Shared, tx: &Sender<AckerMsg>, msg: AckerMsg) {
    shared.begin();
    if tx.send(msg).is_err() {
        shared.done();
    }
}

fn derive_seed(seed: u64, node: usize, instance: usize, purpose: u64) -> u64 {
    // splitmix64 finaliser over the combined inputs
    let mut z = seed
        ^ (node as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ (instance as u64).wrapping_mul(0xc2b2_ae3d_27d4_eb4f)
        ^ purpose.wrapping_mul(0x1656_67b1_9e37_79f9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-executor emission state.
struct ExecCore {
    node: usize,
    instance: usize,
    shared: Arc<Shared>,
    wiring: Arc<Wiring>,
    acker: Sender<AckerMsg>,
    ids: TupleIdGen,
    route_rng: ChaCha8Rng,
    fault_rng: ChaCha8Rng,
    drop_rate: f64,
}

impl ExecCore {
    fn new(node: usize, instance: usize, shared: Arc<Shared>, wiring: Arc<Wiring>, acker: Sender<AckerMsg>, options: &RunOptions) -> Self {
        ExecCore {
            node,
            instance,
            shared,
            wiring,
            acker,
            ids: TupleIdGen::new(derive_seed(options.seed, node, instance, 1)),
            route_rng: ChaCha8Rng::seed_from_u64(derive_seed(options.seed, node, instance, 2)),
            fault_rng: ChaCha8Rng::seed_from_u64(derive_seed(options.seed, node, instance, 3)),
            drop_rate: options.faults.drop_rate,
        }
    }

    fn slot(&self) -> usize {
        self.wiring.slot_base[self.node] + self.instance
    }

    fn node_id(&self) -> &str {
        &self.wiring.node_ids[self.node]
    }

    fn check_stream(&self, stream: &str) -> Result<(), EmitError> {
        if self.wiring.declared[self.node].iter().any(|s| s == stream) {
            Ok(())
        } else {
            Err(EmitError::UnknownStream(stream.to_string()))
        }
    }

    /// Pairs of (target node, target instance) for each subscriber of `stream`.
    fn targets(&mut self, stream: &str, payload: &Payload) -> Result<Vec<(usize, usize)>, EmitError> {
        let wiring = Arc::clone(&self.wiring);
        let mut out = Vec::new();
        for edge in wiring.outs[self.node].iter().filter(|e| e.stream == stream) {
            let parallelism = wiring.inputs[edge.to].len();
            let idx = route(payload, &edge.grouping, parallelism, &mut self.route_rng)?;
            out.push((edge.to, idx));
        }
        Ok(out)
    }

    /// Pushes onto a bolt queue, blocking while it is full, unless the
    /// delivery is chosen to be dropped.
    fn push(&mut self, to: usize, instance: usize, envelope: TupleEnvelope) {
        if self.drop_rate > 0.0 && self.fault_rng.gen_bool(self.drop_rate) {
            self.shared.drops.fetch_add(1, Ordering::Relaxed);
            return;
        }
        let tx = &self.wiring.inputs[to][instance];
        self.shared.begin();
        let mut pending = envelope;
        loop {
            match tx.send_timeout(pending, SEND_POLL) {
                Ok(()) => return,
                Err(SendTimeoutError::Timeout(e)) => {
                    if self.shared.shutdown.load(Ordering::SeqCst) {
                        self.shared.done();
                        return;
                    }
                    pending = e;
                }
                Err(SendTimeoutError::Disconnected(_)) => {
                    self.shared.done();
                    return;
                }
            }
        }
    }

    fn emit_root(&mut self, emission: SpoutEmission, timeout_ms: u64) -> Result<(), EmitError> {
        self.check_stream(&emission.stream)?;
        let root = self.ids.next_id();
        let targets = self.targets(&emission.stream, &emission.payload)?;
        let mut xor = 0u64;
        let mut envelopes = Vec::with_capacity(targets.len());
        for (to, idx) in targets {
            let env = TupleEnvelope::spout(&mut self.ids, root, &emission.stream, emission.payload.clone());
            xor ^= env.tuple_id;
            envelopes.push((to, idx, env));
        }
        let deadline = self.shared.clock.now_ms() + timeout_ms;
        let spout = SpoutRef { node: self.node, instance: self.instance };
        send_acker(&self.shared, &self.acker, AckerMsg::Open { root, spout, msg_id: emission.msg_id, deadline, xor });
        self.shared.emitted[self.node].fetch_add(envelopes.len() as u64, Ordering::Relaxed);
        for (to, idx, env) in envelopes {
            self.push(to, idx, env);
        }
        Ok(())
    }

    fn emit_anchored(&mut self, stream: &str, payload: Payload, anchors: &[&TupleEnvelope]) -> Result<usize, EmitError> {
        self.check_stream(stream)?;
        let targets = self.targets(stream, &payload)?;
        let count = targets.len();
        for (to, idx) in targets {
            let env = TupleEnvelope::anchored(&mut self.ids, anchors, stream, payload.clone())?;
            send_acker(&self.shared, &self.acker, AckerMsg::Xor { root: env.root_id, value: env.tuple_id });
            self.shared.emitted[self.node].fetch_add(1, Ordering::Relaxed);
            self.push(to, idx, env);
        }
        if count == 0 && anchors.is_empty() {
            return Err(super::acker::AckError::NoAnchors.into());
        }
        Ok(count)
    }
}

/// Handle given to bolts for emitting, acking and failing tuples.
pub struct Collector<'a> {
    core: &'a mut ExecCore,
}

impl Collector<'_> {
    /// Emits `payload` on `stream`, anchored to `anchors` (at least one, all
    /// from the same tree). Returns the number of deliveries.
    pub fn emit(&mut self, stream: &str, payload: Payload, anchors: &[&TupleEnvelope]) -> Result<usize, EmitError> {
        self.core.emit_anchored(stream, payload, anchors)
    }

    pub fn ack(&mut self, input: &TupleEnvelope) {
        send_acker(&self.core.shared, &self.core.acker, AckerMsg::Xor { root: input.root_id, value: input.tuple_id });
    }

    /// Fails the whole tree of `input`; the spout replays it.
    pub fn fail(&mut self, input: &TupleEnvelope) {
        send_acker(&self.core.shared, &self.core.acker, AckerMsg::Fail { root: input.root_id });
    }

    /// Counts a tuple routed to the error channel.
    pub fn report_error(&mut self, what: &str) {
        warn!("{}[{}]: {what}", self.core.node_id(), self.core.instance);
        self.core.shared.errors.fetch_add(1, Ordering::Relaxed);
    }

    pub fn now_ms(&self) -> u64 {
        self.core.shared.clock.now_ms()
    }

    pub fn wall_ms(&self) -> i64 {
        self.core.shared.clock.wall_ms()
    }

    pub fn instance(&self) -> usize {
        self.core.instance
    }
}

type Metrics = Vec<(String, u64)>;

fn merge_metrics(into: &mut Metrics, from: Metrics) {
    into.extend(from);
}

fn publish_wakeup(shared: &Shared, slot: usize, wakeup: Option<u64>) {
    shared.wakeups[slot].store(wakeup.unwrap_or(NO_WAKEUP), Ordering::SeqCst);
}

struct SpoutRunner {
    core: ExecCore,
    spout: Box<dyn Spout>,
    attempts: HashMap<u64, u32>,
    replay_budget: u32,
    timeout_ms: u64,
}

impl SpoutRunner {
    /// Returns false when the spout should stop.
    fn handle(&mut self, msg: Ctrl) -> bool {
        match msg {
            Ctrl::Acked(msg_id) => {
                self.attempts.remove(&msg_id);
                self.spout.ack(msg_id);
            }
            Ctrl::Replay(msg_id) => {
                let n = self.attempts.entry(msg_id).or_insert(0);
                *n += 1;
                if *n <= self.replay_budget {
                    self.core.shared.replays.fetch_add(1, Ordering::Relaxed);
                    if let Some(e) = self.spout.replay(msg_id) {
                        debug!("{} replays message {msg_id} (attempt {n})", self.core.node_id());
                        if let Err(err) = self.core.emit_root(e, self.timeout_ms) {
                            self.fatal(err.to_string());
                            return false;
                        }
                    }
                } else {
                    self.attempts.remove(&msg_id);
                    self.core.shared.failed_roots.fetch_add(1, Ordering::Relaxed);
                    self.spout.fail(msg_id);
                }
            }
            Ctrl::Tick => {}
            Ctrl::Shutdown => return false,
        }
        true
    }

    fn fatal(&self, reason: String) {
        self.core.shared.set_fatal(RunError::Executor {
            node: self.core.node_id().to_string(),
            instance: self.core.instance,
            reason,
        });
    }

    fn run(mut self, ctrl: Receiver<Ctrl>) -> Metrics {
        let shared = Arc::clone(&self.core.shared);
        let slot = self.core.slot();
        // The supervisor already counted this spout's active token.
        'outer: loop {
            while let Ok(msg) = ctrl.try_recv() {
                let keep = self.handle(msg);
                shared.done();
                if !keep {
                    break 'outer;
                }
            }
            if shared.shutdown.load(Ordering::SeqCst) {
                break;
            }
            let poll = catch_unwind(AssertUnwindSafe(|| self.spout.next_tuple(shared.clock.now_ms(), shared.clock.wall_ms())));
            match poll {
                Ok(Ok(SpoutPoll::Emit(e))) => {
                    shared.exhausted[slot].store(false, Ordering::SeqCst);
                    shared.spout_messages.fetch_add(1, Ordering::Relaxed);
                    let first = self.attempts.insert(e.msg_id, 0);
                    debug_assert!(first.is_none(), "spout reused msg id {}", e.msg_id);
                    if let Err(err) = self.core.emit_root(e, self.timeout_ms) {
                        self.fatal(err.to_string());
                        break;
                    }
                }
                Ok(Ok(idle)) => {
                    shared.exhausted[slot].store(idle == SpoutPoll::Exhausted, Ordering::SeqCst);
                    publish_wakeup(&shared, slot, self.spout.next_wakeup());
                    shared.done();
                    let msg = if shared.clock.is_virtual() {
                        ctrl.recv().ok()
                    } else {
                        let now = shared.clock.now_ms();
                        let wait = self.spout.next_wakeup().map_or(50, |w| w.saturating_sub(now).min(50));
                        match ctrl.recv_timeout(Duration::from_millis(wait)) {
                            Ok(m) => Some(m),
                            Err(RecvTimeoutError::Timeout) => {
                                shared.begin();
                                continue;
                            }
                            Err(RecvTimeoutError::Disconnected) => None,
                        }
                    };
                    shared.begin();
                    let Some(msg) = msg else { break };
                    let keep = self.handle(msg);
                    shared.done();
                    if !keep {
                        break;
                    }
                }
                Ok(Err(err)) => {
                    self.fatal(err.to_string());
                    break;
                }
                Err(_) => {
                    self.fatal("spout panicked".to_string());
                    break;
                }
            }
        }
        publish_wakeup(&shared, slot, None);
        self.spout.metrics()
    }
}

struct BoltRunner {
    core: ExecCore,
    factory: super::component::BoltFactory,
    bolt: Box<dyn Bolt>,
    kill_after: Option<u64>,
    processed: u64,
    restarts: u32,
    restart_budget: u32,
    retired_metrics: Metrics,
}

impl BoltRunner {
    fn fatal(&self, reason: String) {
        self.core.shared.set_fatal(RunError::Executor {
            node: self.core.node_id().to_string(),
            instance: self.core.instance,
            reason,
        });
    }

    fn replace_instance(&mut self, input: &Receiver<TupleEnvelope>) {
        let old = std::mem::replace(&mut self.bolt, (self.factory)(self.core.instance));
        merge_metrics(&mut self.retired_metrics, old.metrics());
        for _ in input.try_iter() {
            self.core.shared.done();
        }
        self.core.shared.restarts.fetch_add(1, Ordering::Relaxed);
    }

    /// Returns false when the run must stop.
    fn outcome(&mut self, result: std::thread::Result<Result<(), BoltError>>, input: &Receiver<TupleEnvelope>) -> bool {
        match result {
            Ok(Ok(())) => true,
            Ok(Err(err)) => {
                self.fatal(err.to_string());
                false
            }
            Err(_) => {
                self.restarts += 1;
                if self.restarts > self.restart_budget {
                    self.fatal("bolt panicked too often".to_string());
                    return false;
                }
                warn!("{}[{}] panicked; restarting", self.core.node_id(), self.core.instance);
                self.replace_instance(input);
                true
            }
        }
    }

    fn run(mut self, input: Receiver<TupleEnvelope>, ctrl: Receiver<Ctrl>) -> Metrics {
        let shared = Arc::clone(&self.core.shared);
        let slot = self.core.slot();
        let node = self.core.node;
        loop {
            let keep = select! {
                recv(ctrl) -> msg => match msg {
                    Ok(Ctrl::Tick) => {
                        let bolt = &mut self.bolt;
                        let mut out = Collector { core: &mut self.core };
                        let r = catch_unwind(AssertUnwindSafe(|| bolt.tick(&mut out)));
                        self.outcome(r, &input)
                    }
                    Ok(Ctrl::Shutdown) => {
                        if let Err(err) = self.bolt.finish() {
                            self.fatal(err.to_string());
                        }
                        shared.done();
                        break;
                    }
                    Err(_) => {
                        let _ = self.bolt.finish();
                        break;
                    }
                    Ok(_) => true,
                },
                recv(input) -> msg => match msg {
                    Ok(env) => {
                        shared.executed[node].fetch_add(1, Ordering::Relaxed);
                        self.processed += 1;
                        let bolt = &mut self.bolt;
                        let mut out = Collector { core: &mut self.core };
                        let r = catch_unwind(AssertUnwindSafe(|| bolt.execute(env, &mut out)));
                        let keep = self.outcome(r, &input);
                        if self.kill_after == Some(self.processed) {
                            warn!("killing {}[{}] after {} tuples", self.core.node_id(), self.core.instance, self.processed);
                            self.replace_instance(&input);
                        }
                        keep
                    }
                    Err(_) => {
                        let _ = self.bolt.finish();
                        break;
                    }
                },
            };
            publish_wakeup(&shared, slot, self.bolt.next_wakeup());
            shared.done();
            if !keep {
                break;
            }
        }
        publish_wakeup(&shared, slot, None);
        let mut metrics = std::mem::take(&mut self.retired_metrics);
        merge_metrics(&mut metrics, self.bolt.metrics());
        metrics
    }
}

fn acker_loop(rx: Receiver<AckerMsg>, shared: Arc<Shared>, wiring: Arc<Wiring>) {
    let mut state = AckerState::new();
    let notify = |spout: SpoutRef, msg: Ctrl| {
        send_ctrl(&shared, &wiring.ctrl[spout.node][spout.instance], msg);
    };
    while let Ok(msg) = rx.recv() {
        match msg {
            AckerMsg::Open { root, spout, msg_id, deadline, xor } => {
                if state.open_root(root, spout, msg_id, deadline).is_ok() {
                    if let Ok(true) = state.record_xor(root, xor) {
                        notify(spout, Ctrl::Acked(msg_id));
                    }
                }
            }
            AckerMsg::Xor { root, value } => {
                let owner = state.entry(root).map(|e| (e.spout, e.msg_id));
                // Unknown roots belong to trees that already timed out.
                if let (Some((spout, msg_id)), Ok(true)) = (owner, state.record_xor(root, value)) {
                    notify(spout, Ctrl::Acked(msg_id));
                }
            }
            AckerMsg::Fail { root } => {
                if let Some(req) = state.fail(root) {
                    notify(req.spout, Ctrl::Replay(req.msg_id));
                }
            }
            AckerMsg::Tick => {
                for req in state.expire(shared.clock.now_ms()) {
                    debug!("root {:#x} timed out", req.old_root);
                    notify(req.spout, Ctrl::Replay(req.msg_id));
                }
            }
            AckerMsg::Stop => {
                shared.done();
                break;
            }
        }
        shared.acker_pending.store(state.pending(), Ordering::SeqCst);
        shared.acker_deadline.store(state.next_deadline().unwrap_or(NO_WAKEUP), Ordering::SeqCst);
        shared.done();
    }
}

enum Worker {
    Spout(usize, usize, JoinHandle<Metrics>),
    Bolt(usize, usize, JoinHandle<Metrics>),
}

/// Runs `topology` with the given node implementations until `stop` says so.
pub fn run(
    topology: &Topology,
    components: &HashMap<String, Component>,
    stop: &StopCondition,
    options: &RunOptions,
) -> Result<RunReport, RunError> {
    let spec = topology.spec();
    let nodes = topology.nodes();
    for node in nodes {
        match (components.get(&node.id), node.kind) {
            (None, _) => return Err(RunError::MissingComponent(node.id.clone())),
            (Some(Component::Spout(_)), NodeKind::Spout) | (Some(Component::Bolt(_)), NodeKind::Bolt) => {}
            _ => return Err(RunError::KindMismatch(node.id.clone())),
        }
    }

    let started = Instant::now();
    let clock = if options.virtual_clock { Clock::virtual_at(0) } else { Clock::real() };
    let slots = topology.executor_count();
    let shared = Arc::new(Shared {
        clock: clock.clone(),
        in_flight: AtomicI64::new(0),
        shutdown: AtomicBool::new(false),
        executed: nodes.iter().map(|_| AtomicU64::new(0)).collect(),
        emitted: nodes.iter().map(|_| AtomicU64::new(0)).collect(),
        spout_messages: AtomicU64::new(0),
        replays: AtomicU64::new(0),
        failed_roots: AtomicU64::new(0),
        drops: AtomicU64::new(0),
        errors: AtomicU64::new(0),
        restarts: AtomicU64::new(0),
        acker_pending: AtomicUsize::new(0),
        acker_deadline: AtomicU64::new(NO_WAKEUP),
        wakeups: (0..slots).map(|_| AtomicU64::new(NO_WAKEUP)).collect(),
        exhausted: (0..slots).map(|_| AtomicBool::new(false)).collect(),
        fatal: Mutex::new(None),
    });

    let mut input_rx: Vec<Vec<Receiver<TupleEnvelope>>> = Vec::new();
    let mut ctrl_rx: Vec<Vec<Receiver<Ctrl>>> = Vec::new();
    let mut inputs = Vec::new();
    let mut ctrl = Vec::new();
    let mut slot_base = Vec::new();
    let mut next_slot = 0;
    for node in nodes {
        slot_base.push(next_slot);
        next_slot += node.parallelism;
        let (mut txs, mut rxs, mut ctxs, mut crxs) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for _ in 0..node.parallelism {
            if node.kind == NodeKind::Bolt {
                let (tx, rx) = bounded(spec.queue_capacity);
                txs.push(tx);
                rxs.push(rx);
            }
            let (tx, rx) = unbounded();
            ctxs.push(tx);
            crxs.push(rx);
        }
        inputs.push(txs);
        input_rx.push(rxs);
        ctrl.push(ctxs);
        ctrl_rx.push(crxs);
    }
    let outs = (0..nodes.len())
        .map(|i| {
            topology
                .out_edges(i)
                .iter()
                .map(|&ei| {
                    let e = &topology.edges()[ei];
                    OutEdge {
                        stream: e.stream.clone(),
                        grouping: e.grouping.clone(),
                        to: topology.node_index(&e.to).expect("validated edge"),
                    }
                })
                .collect()
        })
        .collect();
    let wiring = Arc::new(Wiring {
        node_ids: nodes.iter().map(|n| n.id.clone()).collect(),
        declared: nodes.iter().map(|n| n.outputs.iter().map(|s| s.name.clone()).collect()).collect(),
        outs,
        inputs,
        ctrl,
        slot_base,
    });

    let (acker_tx, acker_rx) = unbounded();
    let acker_handle = {
        let shared = Arc::clone(&shared);
        let wiring = Arc::clone(&wiring);
        thread::Builder::new()
            .name("acker".into())
            .spawn(move || acker_loop(acker_rx, shared, wiring))
            .map_err(|e| RunError::Spawn(e.to_string()))?
    };

    let mut workers = Vec::new();
    for (ni, node) in nodes.iter().enumerate() {
        let component = components[&node.id].clone();
        for instance in 0..node.parallelism {
            let core = ExecCore::new(ni, instance, Arc::clone(&shared), Arc::clone(&wiring), acker_tx.clone(), options);
            let name = format!("{}-{}", node.id, instance);
            let ctrl = ctrl_rx[ni][instance].clone();
            let spawned = match &component {
                Component::Spout(factory) => {
                    shared.begin();
                    let runner = SpoutRunner {
                        core,
                        spout: factory(instance),
                        attempts: HashMap::new(),
                        replay_budget: options.replay_budget,
                        timeout_ms: spec.message_timeout_ms,
                    };
                    thread::Builder::new().name(name).spawn(move || runner.run(ctrl)).map(|h| Worker::Spout(ni, instance, h))
                }
                Component::Bolt(factory) => {
                    let runner = BoltRunner {
                        core,
                        factory: Arc::clone(factory),
                        bolt: factory(instance),
                        kill_after: options.faults.kill_after(&node.id, instance),
                        processed: 0,
                        restarts: 0,
                        restart_budget: options.restart_budget,
                        retired_metrics: Vec::new(),
                    };
                    let input = input_rx[ni][instance].clone();
                    thread::Builder::new()
                        .name(name)
                        .spawn(move || runner.run(input, ctrl))
                        .map(|h| Worker::Bolt(ni, instance, h))
                }
            };
            match spawned {
                Ok(w) => workers.push(w),
                Err(e) => {
                    shared.set_fatal(RunError::Spawn(e.to_string()));
                    break;
                }
            }
        }
    }
    drop(input_rx);
    drop(ctrl_rx);

    let spout_slots: Vec<usize> = nodes
        .iter()
        .enumerate()
        .filter(|(_, n)| n.kind == NodeKind::Spout)
        .flat_map(|(i, n)| {
            let base = wiring.slot_base[i];
            (0..n.parallelism).map(move |k| base + k)
        })
        .collect();

    let broadcast_tick = || {
        send_acker(&shared, &acker_tx, AckerMsg::Tick);
        for senders in &wiring.ctrl {
            for tx in senders {
                send_ctrl(&shared, tx, Ctrl::Tick);
            }
        }
    };

    let mut killed = false;
    let mut outcome: Result<(), RunError> = Ok(());
    let mut last_tick = clock.now_ms();
    loop {
        if let Some(err) = shared.fatal.lock().unwrap_or_else(|p| p.into_inner()).take() {
            outcome = Err(err);
            break;
        }
        if stop.killed() {
            killed = true;
            break;
        }
        if shared.in_flight.load(Ordering::SeqCst) == 0 {
            let pending = shared.acker_pending.load(Ordering::SeqCst);
            let exhausted = spout_slots.iter().all(|&s| shared.exhausted[s].load(Ordering::SeqCst));
            if exhausted && pending == 0 {
                break;
            }
            if clock.is_virtual() {
                let deadline = shared.acker_deadline.load(Ordering::SeqCst);
                let next = shared
                    .wakeups
                    .iter()
                    .map(|w| w.load(Ordering::SeqCst))
                    .chain(std::iter::once(deadline.saturating_add(1)))
                    .min()
                    .unwrap_or(NO_WAKEUP);
                if next >= NO_WAKEUP {
                    outcome = Err(RunError::Stalled { pending });
                    break;
                }
                clock.advance_to(next.max(clock.now_ms() + 1));
                broadcast_tick();
                continue;
            }
        }
        if !clock.is_virtual() && clock.now_ms() >= last_tick + options.tick_interval_ms {
            last_tick = clock.now_ms();
            broadcast_tick();
        }
        thread::sleep(Duration::from_micros(if clock.is_virtual() { 20 } else { 500 }));
    }

    let graceful = outcome.is_ok() && !killed;
    if !graceful {
        shared.shutdown.store(true, Ordering::SeqCst);
    }
    // Stop in topological order so upstream nodes finish before downstream ones.
    let mut by_node: BTreeMap<usize, Vec<Worker>> = BTreeMap::new();
    for w in workers {
        let ni = match &w {
            Worker::Spout(n, _, _) | Worker::Bolt(n, _, _) => *n,
        };
        by_node.entry(ni).or_default().push(w);
    }
    let mut metrics: BTreeMap<String, u64> = BTreeMap::new();
    for &ni in topology.order() {
        let Some(ws) = by_node.remove(&ni) else { continue };
        for w in &ws {
            let (Worker::Spout(n, i, _) | Worker::Bolt(n, i, _)) = w;
            send_ctrl(&shared, &wiring.ctrl[*n][*i], Ctrl::Shutdown);
        }
        for w in ws {
            let (n, i, handle) = match w {
                Worker::Spout(n, i, h) | Worker::Bolt(n, i, h) => (n, i, h),
            };
            match handle.join() {
                Ok(m) => {
                    for (k, v) in m {
                        *metrics.entry(format!("{}.{k}", wiring.node_ids[n])).or_insert(0) += v;
                    }
                }
                Err(_) => {
                    if outcome.is_ok() {
                        outcome = Err(RunError::Executor {
                            node: wiring.node_ids[n].clone(),
                            instance: i,
                            reason: "thread panicked".into(),
                        });
                    }
                }
            }
        }
    }
    send_acker(&shared, &acker_tx, AckerMsg::Stop);
    drop(acker_tx);
    let _ = acker_handle.join();
    if let Some(err) = shared.fatal.lock().unwrap_or_else(|p| p.into_inner()).take() {
        if outcome.is_ok() {
            outcome = Err(err);
        }
    }
    outcome?;

    let mut report = RunReport {
        spout_messages: shared.spout_messages.load(Ordering::SeqCst),
        replays: shared.replays.load(Ordering::SeqCst),
        failed_roots: shared.failed_roots.load(Ordering::SeqCst),
        injected_drops: shared.drops.load(Ordering::SeqCst),
        errors: shared.errors.load(Ordering::SeqCst),
        restarts: shared.restarts.load(Ordering::SeqCst),
        wall_time_ms: started.elapsed().as_millis() as u64,
        clock_ms: clock.now_ms(),
        killed,
        metrics,
        ..Default::default()
    };
    for (i, node) in nodes.iter().enumerate() {
        report.nodes.insert(
            node.id.clone(),
            NodeCounts {
                executed: shared.executed[i].load(Ordering::SeqCst),
                emitted: shared.emitted[i].load(Ordering::SeqCst),
            },
        );
    }
    Ok(report)
}
