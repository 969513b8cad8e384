//! Contiguous segmentation of a layer stack across devices.
//!
//! A [`Partition`] is a composition of `l` layers into `s` positive parts;
//! there are `C(l−1, s−1)` of them. Candidates are always enumerated in
//! lexicographic order of their sizes, which fixes the search order of the
//! threshold partitioner and the tie-break of the exhaustive one.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::device::{allocate_layers, stage_cost, AcceleratorProfile, Placement, StageCost};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::pipeline::{analytic_makespan, PipelinePlan, PlanStage};
use crate::scalar::Scalar;

/// Default cap on the number of candidates `exhaustive_best` will evaluate.
pub const DEFAULT_ENUMERATION_BUDGET: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Partition {
    pub sizes: Vec<usize>,
}

impl Partition {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(Error::Argument(format!(
                "partition sizes must be positive and non-empty, got {sizes:?}"
            )));
        }
        Ok(Partition { sizes })
    }

    pub fn segments(&self) -> usize {
        self.sizes.len()
    }

    pub fn layer_count(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// Half-open layer index ranges, one per segment, in model order.
    pub fn ranges(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        self.sizes.iter().scan(0usize, |start, &len| {
            let r = *start..*start + len;
            *start += len;
            Some(r)
        })
    }

    /// `1-2-2` notation.
    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.sizes.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join("-"))
    }
}

fn check_counts(l: usize, s: usize) -> Result<()> {
    if s < 1 || s > l {
        return Err(Error::Argument(format!(
            "segment count {s} must be between 1 and the layer count {l}"
        )));
    }
    Ok(())
}

/// `C(l−1, s−1)`, saturating at `u128::MAX`.
pub fn partition_count(l: usize, s: usize) -> u128 {
    if s < 1 || s > l {
        return 0;
    }
    let (n, k) = ((l - 1) as u128, (s - 1) as u128);
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is always divisible by (i + 1) after the multiply.
        acc = match acc.checked_mul(n - i) {
            Some(v) => v / (i + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Lazy lexicographic iterator over the compositions of `l` into `s` parts.
#[derive(Debug, Clone)]
pub struct Compositions {
    next: Option<Vec<usize>>,
}

impl Compositions {
    pub fn new(l: usize, s: usize) -> Result<Self> {
        check_counts(l, s)?;
        let mut first = vec![1; s];
        first[s - 1] = l - s + 1;
        Ok(Compositions { next: Some(first) })
    }
}

impl Iterator for Compositions {
    type Item = Partition;

    fn next(&mut self) -> Option<Partition> {
        let current = self.next.take()?;
        let s = current.len();
        // Rightmost position (not the last) whose suffix still has slack to give.
        let mut suffix = current[s - 1];
        let mut successor = None;
        for i in (0..s.saturating_sub(1)).rev() {
            let slots = s - 1 - i;
            if suffix > slots {
                let mut next = current[..=i].to_vec();
                next[i] += 1;
                next.extend(std::iter::repeat_n(1, slots - 1));
                next.push(suffix - 1 - (slots - 1));
                successor = Some(next);
                break;
            }
            suffix += current[i];
        }
        self.next = successor;
        Some(Partition { sizes: current })
    }
}

pub fn enumerate_partitions(l: usize, s: usize) -> Result<Vec<Partition>> {
    Ok(Compositions::new(l, s)?.collect())
}

/// Default segmentation: sizes as equal as possible, smaller segments first.
pub fn even_split(l: usize, s: usize) -> Result<Partition> {
    check_counts(l, s)?;
    let (base, extra) = (l / s, l % s);
    let sizes = (0..s).map(|i| if i < s - extra { base } else { base + 1 }).collect();
    Ok(Partition { sizes })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEvaluation<T> {
    pub first_layer: usize,
    pub layer_count: usize,
    pub placement: Placement,
    pub cost: StageCost<T>,
    /// Boundary tensor transfer from the previous device through the host.
    pub incoming_transfer_s: T,
    pub effective_s: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionEvaluation<T> {
    pub partition: Partition,
    pub stages: Vec<StageEvaluation<T>>,
    pub steady_state_per_inference_s: T,
    pub batch: usize,
    pub batch_makespan_s: T,
    pub fully_on_chip: bool,
}

impl<T: Scalar> PartitionEvaluation<T> {
    pub fn plan(&self) -> PipelinePlan<T> {
        PipelinePlan {
            stages: self
                .stages
                .iter()
                .map(|st| PlanStage {
                    service_s: st.cost.total_s,
                    transfer_s: st.incoming_transfer_s,
                })
                .collect(),
        }
    }

    pub fn per_inference_s(&self) -> T {
        self.batch_makespan_s / T::from_count(self.batch as u64)
    }

    /// Fastest-to-slowest stage latency gap.
    pub fn latency_spread_s(&self) -> T {
        let mut it = self.stages.iter().map(|s| s.effective_s);
        let first = it.next().expect("evaluation has at least one stage");
        let (lo, hi) = it.fold((first, first), |(lo, hi), v| (lo.min_of(v), hi.max_of(v)));
        hi - lo
    }

    pub fn host_layers(&self) -> usize {
        self.stages.iter().map(|s| s.placement.host_layers()).sum()
    }
}

/// Costs a partition on one device per segment and runs it as a pipeline over `batch` inputs.
pub fn evaluate_partition<T: Scalar>(
    model: &ModelSpec,
    partition: &Partition,
    profiles: &[AcceleratorProfile<T>],
    batch: usize,
) -> Result<PartitionEvaluation<T>> {
    if partition.layer_count() != model.layer_count() {
        return Err(Error::Argument(format!(
            "partition {partition} covers {} layers, model {} has {}",
            partition.layer_count(),
            model.id,
            model.layer_count()
        )));
    }
    if profiles.len() != partition.segments() {
        return Err(Error::Argument(format!(
            "{} profiles given for {} segments",
            profiles.len(),
            partition.segments()
        )));
    }
    if batch < 1 {
        return Err(Error::Argument("batch must be at least 1".into()));
    }
    let bpw = model.bytes_per_weight;
    let mut stages: Vec<StageEvaluation<T>> = Vec::with_capacity(partition.segments());
    for (i, range) in partition.ranges().enumerate() {
        let layers = &model.layers[range.clone()];
        let profile = &profiles[i];
        let placement = allocate_layers(layers, bpw, profile);
        let cost = stage_cost(layers, bpw, &placement, profile)?;
        // Device to host on the sender's link, host to device on the receiver's.
        let incoming = if i == 0 {
            T::zero()
        } else {
            let bytes = model.layers[range.start - 1].output_bytes();
            profiles[i - 1].pcie_transfer_s(bytes) + profile.pcie_transfer_s(bytes)
        };
        stages.push(StageEvaluation {
            first_layer: range.start,
            layer_count: range.len(),
            placement,
            cost,
            incoming_transfer_s: incoming,
            effective_s: cost.total_s + incoming,
        });
    }
    let fully_on_chip = stages.iter().all(|s| s.placement.fully_on_chip());
    let steady = stages
        .iter()
        .map(|s| s.effective_s)
        .fold(T::zero(), Scalar::max_of);
    let mut eval = PartitionEvaluation {
        partition: partition.clone(),
        stages,
        steady_state_per_inference_s: steady,
        batch,
        batch_makespan_s: T::zero(),
        fully_on_chip,
    };
    eval.batch_makespan_s = analytic_makespan(&eval.plan(), batch);
    Ok(eval)
}

fn check_search(model: &ModelSpec, s: usize, profiles_len: usize) -> Result<()> {
    check_counts(model.layer_count(), s)?;
    if profiles_len != s {
        return Err(Error::Argument(format!("{profiles_len} profiles given for {s} segments")));
    }
    Ok(())
}

/// Evaluates every partition and returns the one with the smallest batch makespan.
/// Ties go to the lexicographically smallest sizes.
pub fn exhaustive_best<T: Scalar>(
    model: &ModelSpec,
    s: usize,
    profiles: &[AcceleratorProfile<T>],
    batch: usize,
    budget: u128,
) -> Result<PartitionEvaluation<T>> {
    let all = evaluate_all(model, s, profiles, batch, budget)?;
    Ok(best_of(all))
}

/// Evaluations of every partition in lexicographic order.
pub fn evaluate_all<T: Scalar>(
    model: &ModelSpec,
    s: usize,
    profiles: &[AcceleratorProfile<T>],
    batch: usize,
    budget: u128,
) -> Result<Vec<PartitionEvaluation<T>>> {
    check_search(model, s, profiles.len())?;
    let count = partition_count(model.layer_count(), s);
    if count > budget {
        return Err(Error::BudgetExceeded { count, budget });
    }
    let candidates: Vec<Partition> = Compositions::new(model.layer_count(), s)?.collect();
    candidates
        .par_iter()
        .map(|p| evaluate_partition(model, p, profiles, batch))
        .collect()
}

/// Sequential reduction over lexicographically ordered evaluations.
pub(crate) fn best_of<T: Scalar>(evals: Vec<PartitionEvaluation<T>>) -> PartitionEvaluation<T> {
    evals
        .into_iter()
        .reduce(|best, e| if e.batch_makespan_s < best.batch_makespan_s { e } else { best })
        .expect("at least one partition exists")
}

/// Returns the first partition, in lexicographic order, whose fastest-to-slowest
/// stage gap is at most `max_diff_s`; if none qualifies, the last one tested.
pub fn threshold_partition<T: Scalar>(
    model: &ModelSpec,
    s: usize,
    profiles: &[AcceleratorProfile<T>],
    batch: usize,
    max_diff_s: T,
) -> Result<PartitionEvaluation<T>> {
    check_search(model, s, profiles.len())?;
    let mut last = None;
    for p in Compositions::new(model.layer_count(), s)? {
        let eval = evaluate_partition(model, &p, profiles, batch)?;
        if eval.latency_spread_s() <= max_diff_s {
            return Ok(eval);
        }
        last = Some(eval);
    }
    Ok(last.expect("at least one partition exists"))
}
