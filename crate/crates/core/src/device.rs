//! Analytic cost model for one accelerator.
//!
//! Weights are placed on chip one whole layer at a time; layers that do not
//! fit stay in host memory and are streamed over PCIe on every inference.
//! Per-layer compute time is a roofline: the larger of the MAC-bound and
//! on-chip-bandwidth-bound times.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LayerSpec, ModelSpec};
use crate::scalar::Scalar;

/// How layers that do not fit are handled during placement.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocationPolicy {
    /// A layer that does not fit goes to the host; later layers may still fit.
    #[default]
    FirstFitSkip,
    /// Once one layer spills, every later layer spills too.
    NoSkip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceleratorProfile<T> {
    pub on_chip_bytes: u64,
    /// Bytes of on-chip memory held back for instructions and activations.
    pub reserved_bytes: u64,
    pub peak_macs_per_s: T,
    pub effective_onchip_bw_bytes_per_s: T,
    pub pcie_bw_bytes_per_s: T,
    /// Fixed cost of each PCIe transfer.
    pub pcie_latency_s: T,
    #[serde(default)]
    pub allocation: AllocationPolicy,
}

impl<T: Scalar> Default for AcceleratorProfile<T> {
    /// 8 MiB with 1 MiB reserved, 64×64 MACs at 480 MHz, calibrated bandwidths.
    fn default() -> Self {
        AcceleratorProfile {
            on_chip_bytes: 8 * 1024 * 1024,
            reserved_bytes: 1024 * 1024,
            peak_macs_per_s: T::lit(1.96608e12),
            effective_onchip_bw_bytes_per_s: T::lit(3.0e9),
            pcie_bw_bytes_per_s: T::lit(4.0e8),
            pcie_latency_s: T::lit(1.0e-4),
            allocation: AllocationPolicy::FirstFitSkip,
        }
    }
}

impl<T: Scalar> AcceleratorProfile<T> {
    pub fn capacity_bytes(&self) -> u64 {
        self.on_chip_bytes.saturating_sub(self.reserved_bytes)
    }

    pub fn validate(&self) -> Result<()> {
        let zero = T::zero();
        if self.on_chip_bytes == 0 || self.reserved_bytes >= self.on_chip_bytes {
            return Err(Error::Config(
                "profile needs on_chip_bytes > reserved_bytes".into(),
            ));
        }
        if !(self.peak_macs_per_s > zero
            && self.effective_onchip_bw_bytes_per_s > zero
            && self.pcie_bw_bytes_per_s > zero)
        {
            return Err(Error::Config("profile rates must be positive".into()));
        }
        if !self.pcie_latency_s.is_non_negative() {
            return Err(Error::Config("pcie_latency_s must not be negative".into()));
        }
        Ok(())
    }

    /// Time to move `bytes` across PCIe in one transfer.
    pub fn pcie_transfer_s(&self, bytes: u64) -> T {
        T::from_count(bytes) / self.pcie_bw_bytes_per_s + self.pcie_latency_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Location {
    OnChip,
    HostResident,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub locations: Vec<Location>,
    pub on_chip_used_bytes: u64,
    pub host_bytes: u64,
}

impl Placement {
    pub fn host_layers(&self) -> usize {
        self.locations
            .iter()
            .filter(|l| **l == Location::HostResident)
            .count()
    }

    pub fn fully_on_chip(&self) -> bool {
        self.host_bytes == 0 && self.host_layers() == 0
    }
}

/// Places whole layers, given their weight sizes, into `capacity` bytes.
pub fn allocate_weights(weight_bytes: &[u64], capacity: u64, policy: AllocationPolicy) -> Placement {
    let mut used = 0u64;
    let mut host = 0u64;
    let mut spilled = false;
    let locations = weight_bytes
        .iter()
        .map(|&w| {
            let fits = used + w <= capacity && !(spilled && policy == AllocationPolicy::NoSkip);
            if fits {
                used += w;
                Location::OnChip
            } else {
                spilled = true;
                host += w;
                Location::HostResident
            }
        })
        .collect();
    Placement {
        locations,
        on_chip_used_bytes: used,
        host_bytes: host,
    }
}

pub fn allocate_layers<T: Scalar>(
    layers: &[LayerSpec],
    bytes_per_weight: u64,
    profile: &AcceleratorProfile<T>,
) -> Placement {
    let weights: Vec<u64> = layers.iter().map(|l| l.weight_bytes(bytes_per_weight)).collect();
    allocate_weights(&weights, profile.capacity_bytes(), profile.allocation)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageCost<T> {
    pub compute_s: T,
    pub weight_stream_s: T,
    pub io_s: T,
    pub total_s: T,
}

impl<T: Scalar> StageCost<T> {
    pub fn new(compute_s: T, weight_stream_s: T, io_s: T) -> Self {
        StageCost {
            compute_s,
            weight_stream_s,
            io_s,
            total_s: compute_s + weight_stream_s + io_s,
        }
    }
}

/// Roofline time of one layer executing from on-chip memory.
pub fn layer_compute_s<T: Scalar>(
    layer: &LayerSpec,
    bytes_per_weight: u64,
    profile: &AcceleratorProfile<T>,
) -> T {
    let mac_bound = T::from_count(layer.macs()) / profile.peak_macs_per_s;
    let traffic = layer.weight_bytes(bytes_per_weight) + layer.input_bytes() + layer.output_bytes();
    let mem_bound = T::from_count(traffic) / profile.effective_onchip_bw_bytes_per_s;
    mac_bound.max_of(mem_bound)
}

/// Cost of running `layers` as one stage on one device with the given placement.
pub fn stage_cost<T: Scalar>(
    layers: &[LayerSpec],
    bytes_per_weight: u64,
    placement: &Placement,
    profile: &AcceleratorProfile<T>,
) -> Result<StageCost<T>> {
    if layers.is_empty() {
        return Err(Error::Argument("a stage needs at least one layer".into()));
    }
    if placement.locations.len() != layers.len() {
        return Err(Error::Argument(format!(
            "placement covers {} layers, stage has {}",
            placement.locations.len(),
            layers.len()
        )));
    }
    let mut compute = T::zero();
    let mut stream = T::zero();
    for (layer, loc) in layers.iter().zip(&placement.locations) {
        compute = compute + layer_compute_s(layer, bytes_per_weight, profile);
        if *loc == Location::HostResident {
            stream = stream + profile.pcie_transfer_s(layer.weight_bytes(bytes_per_weight));
        }
    }
    let boundary = layers[0].input_bytes() + layers[layers.len() - 1].output_bytes();
    let io = T::from_count(boundary) / profile.pcie_bw_bytes_per_s
        + profile.pcie_latency_s
        + profile.pcie_latency_s;
    Ok(StageCost::new(compute, stream, io))
}

/// Placement and cost of the whole model on one device.
pub fn single_device<T: Scalar>(
    model: &ModelSpec,
    profile: &AcceleratorProfile<T>,
) -> (Placement, StageCost<T>) {
    let placement = allocate_layers(&model.layers, model.bytes_per_weight, profile);
    let cost = stage_cost(&model.layers, model.bytes_per_weight, &placement, profile)
        .expect("validated model has at least one layer");
    (placement, cost)
}

pub fn single_device_time<T: Scalar>(model: &ModelSpec, profile: &AcceleratorProfile<T>) -> StageCost<T> {
    single_device(model, profile).1
}

/// MACs per byte of weight and output traffic for one inference.
pub fn arithmetic_intensity(model: &ModelSpec) -> f64 {
    let bytes: u64 = model
        .layers
        .iter()
        .map(|l| l.weight_bytes(model.bytes_per_weight) + l.output_bytes())
        .sum();
    model.macs() as f64 / bytes as f64
}
