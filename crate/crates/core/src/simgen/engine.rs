//! Event-driven execution of a [`SimConfig`].
//!
//! Every lock is a FIFO queue. A workload runs operations back to back; each
//! operation acquires its planned locks one after another, holding each for
//! a sampled time. Operations that start before the session ends run to
//! completion, so every present workload finishes at least one operation.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap, VecDeque};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{LockModel, Sharing, SimConfig};
use super::ConfigError;
use crate::model::{
    InitRecord, LockEvent, Platform, StackId, StackTrace, WorkloadTrace,
};

const ADDR_BASE: u64 = 0xffff_8880_0000_0000;
const SLOT_STRIDE: u64 = 0x100;
const BUCKET_STRIDE: u64 = 0x40;

pub(crate) fn model_base(model: usize) -> u64 {
    ADDR_BASE + ((model as u64 + 1) << 24)
}

pub(crate) fn private_addr(model: usize, workload: usize) -> u64 {
    model_base(model) + workload as u64 * SLOT_STRIDE
}

pub(crate) fn bucket_addr(model: usize, bucket: u64) -> u64 {
    model_base(model) + bucket * BUCKET_STRIDE
}

fn pool_addr(model: usize, slot: u64) -> u64 {
    // Pools live in the upper half of the model's range, away from private slots.
    model_base(model) + (1 << 23) + slot * SLOT_STRIDE
}

pub(crate) fn pid_of(workload: usize) -> u32 {
    1000 + workload as u32
}

pub(crate) fn stack_id_of(workload: usize, model: usize) -> StackId {
    StackId((workload as u64 + 1) * 1000 + model as u64)
}

/// Synthetic three-frame stack: primitive, acquiring function, operation entry.
pub(crate) fn stack_frames(model: &LockModel, profile_name: &str) -> Vec<String> {
    vec![
        model.primitive().to_owned(),
        model.key.function.clone(),
        op_entry_function(profile_name),
    ]
}

pub(crate) fn op_entry_function(profile_name: &str) -> String {
    format!("sim_{profile_name}_op")
}

/// Worker throughput for one timeline interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalRecord {
    pub interval_index: u32,
    pub t_start_s: f64,
    /// Worker operations that started in this interval.
    pub worker_ops: u64,
    pub mean_latency_ns: f64,
    pub active_trashers: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PerfTimeline {
    pub intervals: Vec<IntervalRecord>,
}

impl PerfTimeline {
    pub fn total_ops(&self) -> u64 {
        self.intervals.iter().map(|i| i.worker_ops).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    /// One per configured workload, worker first.
    pub traces: Vec<WorkloadTrace>,
    pub timeline: PerfTimeline,
    pub total_acquisitions: u64,
    pub worker_ops: u64,
}

#[derive(Debug, Clone, Copy)]
enum Target {
    Fixed(u64),
    Pooled,
}

#[derive(Debug, Clone, Copy)]
struct Step {
    model: usize,
    target: Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Action {
    BeginOp(usize),
    Release(usize),
}

#[derive(Default)]
struct LockState {
    holder: Option<usize>,
    waiters: VecDeque<usize>,
}

struct Agg {
    first_seen_ns: u64,
    count: u64,
    hold_ns: u64,
}

struct Workload {
    plan: Vec<Step>,
    step: usize,
    op_start: u64,
    ops_in_iter: u32,
    /// Pool slots held by the current operation, per model.
    held: HashMap<usize, u64>,
    current_addr: u64,
    agg: Vec<((u64, u32, StackId), Agg)>,
    agg_slot: HashMap<(u64, u32, StackId), usize>,
}

struct Engine<'c> {
    config: &'c SimConfig,
    rng: ChaCha8Rng,
    queue: BinaryHeap<Reverse<(u64, u64, Action)>>,
    seq: u64,
    locks: HashMap<u64, LockState>,
    generation: HashMap<u64, u32>,
    free_slots: HashMap<usize, Vec<u64>>,
    next_slot: HashMap<usize, u64>,
    inits: Vec<InitRecord>,
    workloads: Vec<Workload>,
    duration_ns: u64,
    total_acquisitions: u64,
    worker_ops: Vec<(u64, u64)>,
}

fn plan_for(config: &SimConfig, index: usize, models: &HashMap<&str, usize>) -> Vec<Step> {
    let mut plan = Vec::new();
    for u in &config.profile(index).locks_per_op {
        let mi = models[u.lock.as_str()];
        let model = &config.lock_models[mi];
        match model.sharing {
            Sharing::Private if model.recycle => {
                plan.extend((0..u.count).map(|_| Step { model: mi, target: Target::Pooled }))
            }
            Sharing::Private => plan.extend(
                (0..u.count).map(|_| Step { model: mi, target: Target::Fixed(private_addr(mi, index)) }),
            ),
            Sharing::SharedGlobal => plan.extend(
                (0..u.count).map(|_| Step { model: mi, target: Target::Fixed(model_base(mi)) }),
            ),
            Sharing::IncidentalHash => {
                for &r in &u.resources {
                    let addr = bucket_addr(mi, r % u64::from(model.hash_buckets));
                    plan.extend((0..u.count).map(|_| Step { model: mi, target: Target::Fixed(addr) }));
                }
            }
        }
    }
    plan
}

impl<'c> Engine<'c> {
    fn new(config: &'c SimConfig) -> Self {
        let models = config.model_index();
        let n = config.trasher_count as usize + 1;
        let workloads = (0..n)
            .map(|i| Workload {
                plan: plan_for(config, i, &models),
                step: 0,
                op_start: 0,
                ops_in_iter: 0,
                held: HashMap::new(),
                current_addr: 0,
                agg: Vec::new(),
                agg_slot: HashMap::new(),
            })
            .collect();
        Self {
            config,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            queue: BinaryHeap::new(),
            seq: 0,
            locks: HashMap::new(),
            generation: HashMap::new(),
            free_slots: HashMap::new(),
            next_slot: HashMap::new(),
            inits: Vec::new(),
            workloads,
            duration_ns: config.duration_ns(),
            total_acquisitions: 0,
            worker_ops: Vec::new(),
        }
    }

    fn schedule(&mut self, t: u64, action: Action) {
        self.queue.push(Reverse((t, self.seq, action)));
        self.seq += 1;
    }

    fn run(&mut self) {
        for w in 0..self.workloads.len() {
            if self.config.is_present(w) {
                self.schedule(self.config.start_ns(w), Action::BeginOp(w));
            }
        }
        while let Some(Reverse((t, _, action))) = self.queue.pop() {
            match action {
                Action::BeginOp(w) => self.begin_op(w, t),
                Action::Release(w) => self.release(w, t),
            }
        }
    }

    fn begin_op(&mut self, w: usize, t: u64) {
        if t >= self.duration_ns {
            return;
        }
        let pooled: Vec<usize> = {
            let wl = &self.workloads[w];
            let mut ms: Vec<usize> = wl
                .plan
                .iter()
                .filter(|s| matches!(s.target, Target::Pooled))
                .map(|s| s.model)
                .collect();
            ms.dedup();
            ms.sort_unstable();
            ms.dedup();
            ms
        };
        for model in pooled {
            let slot = match self.free_slots.entry(model).or_default().pop() {
                Some(s) => s,
                None => {
                    let next = self.next_slot.entry(model).or_default();
                    *next += 1;
                    *next - 1
                }
            };
            let addr = pool_addr(model, slot);
            *self.generation.entry(addr).or_default() += 1;
            self.inits.push(InitRecord { lock_addr: addr, t_ns: t });
            self.workloads[w].held.insert(model, slot);
        }
        let wl = &mut self.workloads[w];
        wl.op_start = t;
        wl.step = 0;
        self.request(w, t);
    }

    fn request(&mut self, w: usize, t: u64) {
        let wl = &mut self.workloads[w];
        let step = wl.plan[wl.step];
        let addr = match step.target {
            Target::Fixed(a) => a,
            Target::Pooled => pool_addr(step.model, wl.held[&step.model]),
        };
        wl.current_addr = addr;
        let lock = self.locks.entry(addr).or_default();
        if lock.holder.is_none() && lock.waiters.is_empty() {
            self.grant(w, addr, t);
        } else {
            lock.waiters.push_back(w);
        }
    }

    fn grant(&mut self, w: usize, addr: u64, t: u64) {
        self.locks.get_mut(&addr).expect("lock state exists").holder = Some(w);
        let wl = &self.workloads[w];
        let model = wl.plan[wl.step].model;
        let hold = self.config.lock_models[model].hold_time_ns.sample(&mut self.rng).max(1);
        let generation = self.generation.get(&addr).copied().unwrap_or(0);
        let key = (addr, generation, stack_id_of(w, model));
        let wl = &mut self.workloads[w];
        match wl.agg_slot.get(&key) {
            Some(&i) => {
                wl.agg[i].1.count += 1;
                wl.agg[i].1.hold_ns += hold;
            }
            None => {
                wl.agg_slot.insert(key, wl.agg.len());
                wl.agg.push((key, Agg { first_seen_ns: t, count: 1, hold_ns: hold }));
            }
        }
        self.total_acquisitions += 1;
        self.schedule(t + hold, Action::Release(w));
    }

    fn release(&mut self, w: usize, t: u64) {
        let addr = self.workloads[w].current_addr;
        let lock = self.locks.get_mut(&addr).expect("released lock exists");
        debug_assert_eq!(lock.holder, Some(w));
        lock.holder = None;
        if let Some(next) = lock.waiters.pop_front() {
            self.grant(next, addr, t);
        }
        let wl = &mut self.workloads[w];
        wl.step += 1;
        if wl.step < wl.plan.len() {
            self.request(w, t);
        } else {
            self.finish_op(w, t);
        }
    }

    fn finish_op(&mut self, w: usize, t: u64) {
        let wl = &mut self.workloads[w];
        if w == 0 {
            self.worker_ops.push((wl.op_start, t - wl.op_start));
        }
        let mut held: Vec<(usize, u64)> = wl.held.drain().collect();
        held.sort_unstable();
        for (model, slot) in held {
            self.free_slots.entry(model).or_default().push(slot);
        }
        let wl = &mut self.workloads[w];
        let profile = self.config.profile(w);
        wl.ops_in_iter += 1;
        let next = if wl.ops_in_iter >= profile.ops_per_iter {
            wl.ops_in_iter = 0;
            t + profile.think_time_ns.sample(&mut self.rng)
        } else {
            t
        };
        self.schedule(next, Action::BeginOp(w));
    }

    fn timeline(&self) -> PerfTimeline {
        let interval = self.config.interval_ns();
        let n = self.duration_ns.div_ceil(interval);
        let mut ops = vec![0u64; n as usize];
        let mut latency = vec![0u128; n as usize];
        for &(start, lat) in &self.worker_ops {
            let i = (start / interval) as usize;
            ops[i] += 1;
            latency[i] += u128::from(lat);
        }
        let intervals = (0..n as usize)
            .map(|i| {
                let t_start = i as u64 * interval;
                let active = (1..=self.config.trasher_count as usize)
                    .filter(|&k| self.config.start_ns(k) <= t_start)
                    .count() as u32;
                IntervalRecord {
                    interval_index: i as u32,
                    t_start_s: t_start as f64 / 1e9,
                    worker_ops: ops[i],
                    mean_latency_ns: if ops[i] == 0 { 0.0 } else { latency[i] as f64 / ops[i] as f64 },
                    active_trashers: active,
                }
            })
            .collect();
        PerfTimeline { intervals }
    }

    fn into_result(mut self) -> SimResult {
        let timeline = self.timeline();
        self.inits.sort_by_key(|r| (r.t_ns, r.lock_addr));
        let ids = self.config.workload_ids();
        let mut traces = Vec::with_capacity(ids.len());
        for (w, id) in ids.into_iter().enumerate() {
            let profile = self.config.profile(w);
            let mut stacks = BTreeMap::new();
            let mut events = Vec::new();
            for ((addr, _generation, stack_id), agg) in &self.workloads[w].agg {
                let model = &self.config.lock_models[(stack_id.0 % 1000) as usize];
                stacks.entry(*stack_id).or_insert_with(|| StackTrace {
                    stack_id: *stack_id,
                    frames: stack_frames(model, &profile.name),
                });
                events.push(LockEvent {
                    pid: pid_of(w),
                    tid: pid_of(w),
                    lock_addr: *addr,
                    lock_name: model.key.lock_name.clone(),
                    lock_class: model.key.lock_class,
                    primitive: model.primitive().to_owned(),
                    stack_id: *stack_id,
                    acquire_count: agg.count,
                    total_hold_ns: agg.hold_ns,
                    first_seen_ns: agg.first_seen_ns,
                    process_name: id.clone(),
                });
            }
            traces.push(WorkloadTrace {
                workload_id: id,
                platform: Platform::Synthetic,
                run_index: self.config.run_index,
                duration_s: self.config.duration_s,
                events,
                stacks,
                init_records: self.inits.clone(),
            });
        }
        SimResult {
            traces,
            timeline,
            total_acquisitions: self.total_acquisitions,
            worker_ops: self.worker_ops.len() as u64,
        }
    }
}

pub fn simulate(config: &SimConfig) -> Result<SimResult, ConfigError> {
    config.validate()?;
    let mut engine = Engine::new(config);
    engine.run();
    Ok(engine.into_result())
}
