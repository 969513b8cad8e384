//! Pipelined execution of a segmented plan over a batch of inputs.
//!
//! Three backends compute the same virtual timeline:
//! - [`analytic_makespan`]: fill time plus `(B−1)` bottleneck periods (unbounded queues only);
//! - [`simulate_events`]: a single-threaded discrete-event simulation;
//! - [`emulate_concurrent`]: one worker thread per stage connected by FIFO channels,
//!   mirroring a host thread per device with queues between them.
//!
//! Stage `i` serves each input for `transfer_i + service_i` (the incoming
//! transfer is not overlapped with compute). With a bounded queue of
//! capacity `Q` in front of a stage, an upstream stage that finishes while
//! that queue is full holds its item, and stays busy, until a slot frees up.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::device::StageCost;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanStage<T> {
    pub service_s: T,
    /// Transfer into this stage; zero for the first stage, whose input upload is part of its service.
    pub transfer_s: T,
}

impl<T: Scalar> PlanStage<T> {
    pub fn effective_s(&self) -> T {
        self.transfer_s + self.service_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelinePlan<T> {
    pub stages: Vec<PlanStage<T>>,
}

impl<T: Scalar> PipelinePlan<T> {
    /// Plan with zero transfers.
    pub fn from_services(services: &[T]) -> Self {
        PipelinePlan {
            stages: services
                .iter()
                .map(|&s| PlanStage {
                    service_s: s,
                    transfer_s: T::zero(),
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::Simulation("plan has no stages".into()));
        }
        if self
            .stages
            .iter()
            .any(|s| !s.service_s.is_non_negative() || !s.transfer_s.is_non_negative())
        {
            return Err(Error::Simulation("plan latencies must be non-negative".into()));
        }
        Ok(())
    }

    pub fn effective(&self) -> Vec<T> {
        self.stages.iter().map(PlanStage::effective_s).collect()
    }

    /// Index of the slowest stage (first one on ties).
    pub fn bottleneck_stage(&self) -> usize {
        let eff = self.effective();
        let mut best = 0;
        for (i, &e) in eff.iter().enumerate() {
            if e > eff[best] {
                best = i;
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Analytic,
    Events,
    Emulated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub batch: usize,
    pub backend: Backend,
    /// Waiting slots in front of each non-first stage; `None` is unbounded.
    pub queue_capacity: Option<usize>,
    /// Emulated backend only: also sleep `scale × service` seconds of wall
    /// clock per item. Demo use; the reported timeline stays virtual.
    #[serde(default)]
    pub wall_clock_scale: Option<f64>,
}

impl SimOptions {
    pub fn new(batch: usize, backend: Backend) -> Self {
        SimOptions {
            batch,
            backend,
            queue_capacity: None,
            wall_clock_scale: None,
        }
    }

    pub fn with_queue_capacity(mut self, capacity: usize) -> Self {
        self.queue_capacity = Some(capacity);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch < 1 {
            return Err(Error::Simulation("batch must be at least 1".into()));
        }
        if self.queue_capacity == Some(0) {
            return Err(Error::Simulation("queue capacity must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimelineEvent<T> {
    pub stage: usize,
    pub input_index: usize,
    pub start_s: T,
    pub end_s: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult<T> {
    pub makespan_s: T,
    pub per_inference_s: T,
    pub stage_busy_s: Vec<T>,
    pub bottleneck_stage: usize,
    /// Ordered by stage, then input. Empty for the analytic backend.
    pub timeline: Vec<TimelineEvent<T>>,
}

impl<T: Scalar> SimResult<T> {
    fn assemble(plan: &PipelinePlan<T>, batch: usize, makespan: T, mut timeline: Vec<TimelineEvent<T>>) -> Self {
        timeline.sort_by_key(|e| (e.stage, e.input_index));
        let b = T::from_count(batch as u64);
        SimResult {
            makespan_s: makespan,
            per_inference_s: makespan / b,
            stage_busy_s: plan.effective().into_iter().map(|e| e * b).collect(),
            bottleneck_stage: plan.bottleneck_stage(),
            timeline,
        }
    }
}

/// `Σ (transfer + service) + (B−1) · max (transfer + service)`.
pub fn analytic_makespan<T: Scalar>(plan: &PipelinePlan<T>, batch: usize) -> T {
    let eff = plan.effective();
    let fill = eff.iter().fold(T::zero(), |acc, &e| acc + e);
    let bottleneck = eff.iter().fold(T::zero(), |acc, &e| acc.max_of(e));
    fill + T::from_count(batch.saturating_sub(1) as u64) * bottleneck
}

pub fn simulate<T: Scalar>(plan: &PipelinePlan<T>, options: &SimOptions) -> Result<SimResult<T>> {
    match options.backend {
        Backend::Analytic => simulate_analytic(plan, options),
        Backend::Events => simulate_events(plan, options),
        Backend::Emulated => emulate_concurrent(plan, options),
    }
}

pub fn simulate_analytic<T: Scalar>(plan: &PipelinePlan<T>, options: &SimOptions) -> Result<SimResult<T>> {
    plan.validate()?;
    options.validate()?;
    if options.queue_capacity.is_some() {
        return Err(Error::Simulation(
            "the analytic backend only models unbounded queues".into(),
        ));
    }
    let makespan = analytic_makespan(plan, options.batch);
    Ok(SimResult::assemble(plan, options.batch, makespan, Vec::new()))
}

#[derive(Debug)]
struct Scheduled<T> {
    time: T,
    seq: u64,
    stage: usize,
}

impl<T: PartialOrd> PartialEq for Scheduled<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: PartialOrd> Eq for Scheduled<T> {}

impl<T: PartialOrd> PartialOrd for Scheduled<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: PartialOrd> Ord for Scheduled<T> {
    // Reversed so the max-heap pops the earliest event first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .partial_cmp(&self.time)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

struct StageState<T> {
    queue: VecDeque<(usize, T)>,
    serving: Option<(usize, T)>,
    blocked: Option<usize>,
}

struct EventSim<T> {
    eff: Vec<T>,
    capacity: Option<usize>,
    stages: Vec<StageState<T>>,
    heap: BinaryHeap<Scheduled<T>>,
    seq: u64,
    timeline: Vec<TimelineEvent<T>>,
    makespan: T,
}

impl<T: Scalar> EventSim<T> {
    fn has_room(&self, stage: usize) -> bool {
        self.capacity.is_none_or(|cap| self.stages[stage].queue.len() < cap)
    }

    fn try_start(&mut self, stage: usize, now: T) {
        let st = &self.stages[stage];
        if st.serving.is_some() || st.blocked.is_some() {
            return;
        }
        let Some((item, _arrived)) = self.stages[stage].queue.pop_front() else {
            return;
        };
        let end = now + self.eff[stage];
        self.stages[stage].serving = Some((item, now));
        self.timeline.push(TimelineEvent {
            stage,
            input_index: item,
            start_s: now,
            end_s: end,
        });
        self.seq += 1;
        self.heap.push(Scheduled {
            time: end,
            seq: self.seq,
            stage,
        });
        // A slot opened in front of this stage: admit a held upstream item.
        if stage > 0 {
            if let Some(held) = self.stages[stage - 1].blocked.take() {
                self.stages[stage].queue.push_back((held, now));
                self.try_start(stage - 1, now);
            }
        }
    }

    fn complete(&mut self, stage: usize, now: T) {
        let (item, _) = self.stages[stage]
            .serving
            .take()
            .expect("completion for an idle stage");
        let last = self.stages.len() - 1;
        if stage == last {
            self.makespan = self.makespan.max_of(now);
        } else if self.has_room(stage + 1) {
            self.stages[stage + 1].queue.push_back((item, now));
            self.try_start(stage + 1, now);
        } else {
            self.stages[stage].blocked = Some(item);
            return;
        }
        self.try_start(stage, now);
    }
}

/// Discrete-event simulation with FIFO stages and optional bounded queues.
pub fn simulate_events<T: Scalar>(plan: &PipelinePlan<T>, options: &SimOptions) -> Result<SimResult<T>> {
    plan.validate()?;
    options.validate()?;
    let mut sim = EventSim {
        eff: plan.effective(),
        capacity: options.queue_capacity,
        stages: (0..plan.stages.len())
            .map(|_| StageState {
                queue: VecDeque::new(),
                serving: None,
                blocked: None,
            })
            .collect(),
        heap: BinaryHeap::new(),
        seq: 0,
        timeline: Vec::with_capacity(options.batch * plan.stages.len()),
        makespan: T::zero(),
    };
    // The whole batch is available to the first stage at time zero.
    sim.stages[0]
        .queue
        .extend((0..options.batch).map(|b| (b, T::zero())));
    sim.try_start(0, T::zero());
    while let Some(ev) = sim.heap.pop() {
        sim.complete(ev.stage, ev.time);
    }
    Ok(SimResult::assemble(plan, options.batch, sim.makespan, sim.timeline))
}

/// One thread per stage exchanging virtual timestamps over FIFO channels.
///
/// Each worker handles inputs in order: it starts an item at
/// `max(arrival, own previous departure)`, finishes `effective` later and,
/// with a bounded downstream queue of capacity `Q`, departs no earlier than
/// the downstream start of item `b − Q` (reported back on an ack channel).
/// The result depends only on these recurrences, not on thread scheduling.
pub fn emulate_concurrent<T: Scalar>(plan: &PipelinePlan<T>, options: &SimOptions) -> Result<SimResult<T>> {
    plan.validate()?;
    options.validate()?;
    let n = plan.stages.len();
    let batch = options.batch;
    let eff = plan.effective();

    let mut forward_tx = Vec::with_capacity(n);
    let mut forward_rx = Vec::with_capacity(n);
    for _ in 0..n {
        let (tx, rx) = mpsc::channel::<(usize, T)>();
        forward_tx.push(Some(tx));
        forward_rx.push(Some(rx));
    }
    // ack channel i carries start times of stage i back to stage i-1.
    let mut ack_tx: Vec<Option<mpsc::Sender<T>>> = Vec::with_capacity(n);
    let mut ack_rx: Vec<Option<mpsc::Receiver<T>>> = Vec::with_capacity(n);
    for _ in 0..n {
        let (tx, rx) = mpsc::channel::<T>();
        ack_tx.push(Some(tx));
        ack_rx.push(Some(rx));
    }

    let capacity = options.queue_capacity;
    let wall = options.wall_clock_scale;
    let (done_tx, done_rx) = mpsc::channel::<Vec<TimelineEvent<T>>>();

    thread::scope(|scope| {
        for stage in 0..n {
            let inbox = forward_rx[stage].take().expect("receiver taken once");
            let outbox = if stage + 1 < n {
                forward_tx[stage + 1].take()
            } else {
                None
            };
            let acks_in = if stage + 1 < n && capacity.is_some() {
                ack_rx[stage + 1].take()
            } else {
                None
            };
            let acks_out = if stage > 0 && capacity.is_some() {
                ack_tx[stage].take()
            } else {
                None
            };
            let service = eff[stage];
            let done = done_tx.clone();
            scope.spawn(move || {
                let mut events = Vec::with_capacity(batch);
                let mut downstream_starts: Vec<T> = Vec::new();
                let mut prev_departure = T::zero();
                for _ in 0..batch {
                    let (item, arrival) = inbox.recv().expect("upstream worker hung up");
                    let start = arrival.max_of(prev_departure);
                    let end = start + service;
                    if let Some(acks) = &acks_out {
                        let _ = acks.send(start);
                    }
                    if let Some(scale) = wall {
                        let secs = service.to_f64_lossy() * scale;
                        if secs.is_finite() && secs > 0.0 {
                            thread::sleep(Duration::from_secs_f64(secs));
                        }
                    }
                    let mut departure = end;
                    if let (Some(acks), Some(cap)) = (&acks_in, capacity) {
                        if item >= cap {
                            while downstream_starts.len() <= item - cap {
                                downstream_starts.push(acks.recv().expect("downstream worker hung up"));
                            }
                            departure = departure.max_of(downstream_starts[item - cap]);
                        }
                    }
                    if let Some(out) = &outbox {
                        out.send((item, departure)).expect("downstream worker hung up");
                    }
                    prev_departure = departure;
                    events.push(TimelineEvent {
                        stage,
                        input_index: item,
                        start_s: start,
                        end_s: end,
                    });
                }
                done.send(events).expect("collector alive");
            });
        }
        let source = forward_tx[0].take().expect("source sender");
        for b in 0..batch {
            source.send((b, T::zero())).expect("first worker alive");
        }
    });
    drop(done_tx);

    let timeline: Vec<TimelineEvent<T>> = done_rx.into_iter().flatten().collect();
    let makespan = timeline
        .iter()
        .filter(|e| e.stage == n - 1)
        .fold(T::zero(), |acc, e| acc.max_of(e.end_s));
    Ok(SimResult::assemble(plan, batch, makespan, timeline))
}

/// Single-input makespan over per-inference time at batch B.
pub fn speedup_vs_single_input<T: Scalar>(batched: &SimResult<T>, single_input: &SimResult<T>) -> T {
    single_input.makespan_s / batched.per_inference_s
}

/// One-device inference time over pipelined per-inference time.
pub fn speedup_vs_single_device<T: Scalar>(result: &SimResult<T>, single: &StageCost<T>) -> T {
    single.total_s / result.per_inference_s
}

/// `stage,input_index,start_s,end_s` rows.
pub fn timeline_csv<T: Scalar>(timeline: &[TimelineEvent<T>]) -> String {
    let mut out = String::from("stage,input_index,start_s,end_s\n");
    for e in timeline {
        out.push_str(&format!(
            "{},{},{},{}\n",
            e.stage,
            e.input_index,
            e.start_s.to_f64_lossy(),
            e.end_s.to_f64_lossy()
        ));
    }
    out
}
