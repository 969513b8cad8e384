//! End-to-end experiment drivers behind the command-line harness.
//!
//! Every driver is deterministic: sweep points may be evaluated in parallel
//! but rows are sorted by `(param, s, batch)` before they are returned.

use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::device::{single_device, single_device_time, AcceleratorProfile};
use crate::error::{Error, Result};
use crate::model::{build_model, enumerate_sweep, ModelSpec, SweepConfig, SweepPoint};
use crate::partition::{
    best_of, evaluate_all, evaluate_partition, even_split, exhaustive_best, threshold_partition,
    Partition, PartitionEvaluation,
};
use crate::systolic::{simulate_matvec, CycleReport, MatVecJob, SystolicArrayConfig};

/// How a segmentation is chosen for each `(model, s, batch)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub enum PartitionerChoice {
    #[default]
    Even,
    /// Stop at the first partition whose stage gap is within this many seconds.
    Threshold(f64),
    Exhaustive,
}

impl FromStr for PartitionerChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "even" => Ok(PartitionerChoice::Even),
            "exhaustive" => Ok(PartitionerChoice::Exhaustive),
            other => {
                let value = other.strip_prefix("threshold=").ok_or_else(|| {
                    Error::Argument(format!(
                        "unknown partitioner `{other}` (expected even, threshold=<sec> or exhaustive)"
                    ))
                })?;
                let secs: f64 = value
                    .parse()
                    .map_err(|_| Error::Argument(format!("bad threshold `{value}`")))?;
                if secs.is_nan() {
                    return Err(Error::Argument("threshold must be a number".into()));
                }
                Ok(PartitionerChoice::Threshold(secs))
            }
        }
    }
}

impl fmt::Display for PartitionerChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartitionerChoice::Even => f.write_str("even"),
            PartitionerChoice::Threshold(s) => write!(f, "threshold={s}"),
            PartitionerChoice::Exhaustive => f.write_str("exhaustive"),
        }
    }
}

impl Serialize for PartitionerChoice {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PartitionerChoice {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn default_segments() -> Vec<usize> {
    vec![1, 2, 3, 4]
}

fn default_batches() -> Vec<usize> {
    vec![1, 50]
}

fn default_budget() -> u64 {
    crate::partition::DEFAULT_ENUMERATION_BUDGET as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub sweep: SweepConfig,
    #[serde(default)]
    pub profile: AcceleratorProfile<f64>,
    #[serde(default = "default_segments")]
    pub segments: Vec<usize>,
    #[serde(default = "default_batches")]
    pub batches: Vec<usize>,
    #[serde(default)]
    pub partitioner: PartitionerChoice,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_budget")]
    pub enumeration_budget: u64,
}

impl ExperimentConfig {
    pub fn new(sweep: SweepConfig) -> Self {
        ExperimentConfig {
            sweep,
            profile: AcceleratorProfile::default(),
            segments: default_segments(),
            batches: default_batches(),
            partitioner: PartitionerChoice::Even,
            output_dir: None,
            enumeration_budget: default_budget(),
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.sweep.validate()?;
        self.profile.validate()?;
        let layers = self.sweep.layer_count as usize;
        if self.segments.is_empty() || self.segments.iter().any(|&s| s < 1 || s > layers) {
            return Err(Error::Argument(format!(
                "segments must be non-empty and within 1..={layers}"
            )));
        }
        if self.batches.is_empty() || self.batches.contains(&0) {
            return Err(Error::Argument("batches must be non-empty and at least 1".into()));
        }
        Ok(())
    }

    fn profiles(&self, s: usize) -> Vec<AcceleratorProfile<f64>> {
        vec![self.profile.clone(); s]
    }
}

/// Picks a partition with the configured strategy and evaluates it at `batch`.
pub fn choose_partition(
    model: &ModelSpec,
    s: usize,
    profiles: &[AcceleratorProfile<f64>],
    batch: usize,
    choice: PartitionerChoice,
    budget: u128,
) -> Result<PartitionEvaluation<f64>> {
    match choice {
        PartitionerChoice::Even => {
            evaluate_partition(model, &even_split(model.layer_count(), s)?, profiles, batch)
        }
        PartitionerChoice::Threshold(max_diff) => threshold_partition(model, s, profiles, batch, max_diff),
        PartitionerChoice::Exhaustive => exhaustive_best(model, s, profiles, batch, budget),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub model_id: String,
    pub param: u64,
    pub macs: u64,
    pub weight_bytes: u64,
    pub on_chip_bytes: u64,
    pub host_bytes: u64,
    pub host_layers: usize,
    pub time_s: f64,
    /// Billions of MACs per second.
    pub gops: f64,
}

fn sweep_points(config: &ExperimentConfig) -> Result<Vec<SweepPoint>> {
    config.validate()?;
    enumerate_sweep(&config.sweep)
}

/// One row per sweep model, run whole on a single device.
pub fn cmd_sweep(config: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    let points = sweep_points(config)?;
    let mut rows: Vec<SweepRow> = points
        .par_iter()
        .map(|pt| {
            let (placement, cost) = single_device(&pt.model, &config.profile);
            let macs = pt.model.macs();
            SweepRow {
                model_id: pt.model.id.clone(),
                param: pt.param,
                macs,
                weight_bytes: pt.model.weight_bytes(),
                on_chip_bytes: placement.on_chip_used_bytes,
                host_bytes: placement.host_bytes,
                host_layers: placement.host_layers(),
                time_s: cost.total_s,
                gops: macs as f64 / cost.total_s / 1e9,
            }
        })
        .collect();
    rows.sort_by_key(|r| r.param);
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRow {
    pub model_id: String,
    pub param: u64,
    pub s: usize,
    pub partition: String,
    pub batch: usize,
    pub per_inference_s: f64,
    pub makespan_s: f64,
    pub fully_on_chip: bool,
    pub speedup_vs_b1: f64,
    pub speedup_vs_1tpu: f64,
}

fn segment_rows_for(config: &ExperimentConfig, pt: &SweepPoint) -> Result<Vec<SegmentRow>> {
    let single = single_device_time(&pt.model, &config.profile);
    let mut rows = Vec::new();
    for &s in &config.segments {
        let profiles = config.profiles(s);
        for &batch in &config.batches {
            let eval = choose_partition(
                &pt.model,
                s,
                &profiles,
                batch,
                config.partitioner,
                config.enumeration_budget as u128,
            )?;
            let one = evaluate_partition(&pt.model, &eval.partition, &profiles, 1)?;
            let per_inference = eval.per_inference_s();
            rows.push(SegmentRow {
                model_id: pt.model.id.clone(),
                param: pt.param,
                s,
                partition: eval.partition.label(),
                batch,
                per_inference_s: per_inference,
                makespan_s: eval.batch_makespan_s,
                fully_on_chip: eval.fully_on_chip,
                speedup_vs_b1: one.batch_makespan_s / per_inference,
                speedup_vs_1tpu: single.total_s / per_inference,
            });
        }
    }
    Ok(rows)
}

/// Segmented sweep: every (model, s, batch) with the configured partitioner.
pub fn cmd_segment(config: &ExperimentConfig) -> Result<Vec<SegmentRow>> {
    let points = sweep_points(config)?;
    let nested: Vec<Vec<SegmentRow>> = points
        .par_iter()
        .map(|pt| segment_rows_for(config, pt))
        .collect::<Result<_>>()?;
    let mut rows: Vec<SegmentRow> = nested.into_iter().flatten().collect();
    rows.sort_by_key(|r| (r.param, r.s, r.batch));
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub sizes: Vec<usize>,
    pub label: String,
    pub is_best: bool,
    pub is_even_split: bool,
    pub is_threshold_pick: bool,
    pub evaluation: PartitionEvaluation<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub model_id: String,
    pub segments: usize,
    pub batch: usize,
    pub threshold_max_diff_s: f64,
    pub best: Partition,
    pub even_split: Partition,
    pub threshold_pick: Partition,
    /// Sorted by batch makespan; ties keep lexicographic order.
    pub entries: Vec<ProfileEntry>,
}

/// Evaluates every partition of one model at the largest configured batch.
///
/// The threshold pick uses the configured threshold, or zero when the
/// configured partitioner is not the threshold one.
pub fn cmd_profile(config: &ExperimentConfig, model_id: &str, s: usize) -> Result<ProfileReport> {
    let points = sweep_points(config)?;
    let model = points
        .into_iter()
        .map(|p| p.model)
        .find(|m| m.id == model_id)
        .ok_or_else(|| Error::Argument(format!("model `{model_id}` is not part of the sweep")))?;
    let batch = config.batches.iter().copied().max().unwrap_or(1);
    let profiles = config.profiles(s);
    let all = evaluate_all(&model, s, &profiles, batch, config.enumeration_budget as u128)?;
    let max_diff = match config.partitioner {
        PartitionerChoice::Threshold(x) => x,
        _ => 0.0,
    };
    let best = best_of(all.clone()).partition;
    let even = even_split(model.layer_count(), s)?;
    let threshold = threshold_partition(&model, s, &profiles, batch, max_diff)?.partition;
    let mut entries: Vec<ProfileEntry> = all
        .into_iter()
        .map(|e| ProfileEntry {
            sizes: e.partition.sizes.clone(),
            label: e.partition.label(),
            is_best: e.partition == best,
            is_even_split: e.partition == even,
            is_threshold_pick: e.partition == threshold,
            evaluation: e,
        })
        .collect();
    entries.sort_by(|a, b| {
        a.evaluation
            .batch_makespan_s
            .total_cmp(&b.evaluation.batch_makespan_s)
    });
    Ok(ProfileReport {
        model_id: model.id,
        segments: s,
        batch,
        threshold_max_diff_s: max_diff,
        best,
        even_split: even,
        threshold_pick: threshold,
        entries,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub param: u64,
    pub time_s: f64,
}

/// Reads `param,time_s` measurements; other columns are ignored, so a sweep CSV can be fed back.
pub fn parse_measurements<R: Read>(reader: R) -> Result<Vec<Measurement>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    let column = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            line: 1,
            message: format!("missing `{name}` column"),
        })
    };
    let (param_col, time_col) = (column("param")?, column("time_s")?);
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| {
            record.get(i).ok_or_else(|| Error::Parse {
                line,
                message: "missing field".into(),
            })
        };
        let param: u64 = field(param_col)?.parse().map_err(|_| Error::Parse {
            line,
            message: format!("`{}` is not a valid param", &record[param_col]),
        })?;
        let time_s: f64 = field(time_col)?.parse().map_err(|_| Error::Parse {
            line,
            message: format!("`{}` is not a valid time", &record[time_col]),
        })?;
        if !(time_s.is_finite() && time_s > 0.0) {
            return Err(Error::Parse {
                line,
                message: "time_s must be a positive finite number".into(),
            });
        }
        out.push(Measurement { param, time_s });
    }
    Ok(out)
}

/// Candidate values for each fitted profile field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationGrid {
    pub effective_onchip_bw_bytes_per_s: Vec<f64>,
    pub pcie_bw_bytes_per_s: Vec<f64>,
    pub pcie_latency_s: Vec<f64>,
    pub reserved_bytes: Vec<u64>,
}

impl Default for CalibrationGrid {
    fn default() -> Self {
        const MIB: u64 = 1024 * 1024;
        CalibrationGrid {
            effective_onchip_bw_bytes_per_s: vec![1.0e9, 1.5e9, 2.0e9, 3.0e9, 4.5e9, 6.0e9, 9.0e9],
            pcie_bw_bytes_per_s: vec![1.0e8, 2.0e8, 3.0e8, 4.0e8, 6.0e8, 8.0e8, 1.2e9],
            pcie_latency_s: vec![2.5e-5, 5.0e-5, 1.0e-4, 2.0e-4, 4.0e-4],
            reserved_bytes: vec![0, MIB / 2, MIB, 3 * MIB / 2, 2 * MIB],
        }
    }
}

impl CalibrationGrid {
    fn dims(&self) -> [usize; 4] {
        [
            self.effective_onchip_bw_bytes_per_s.len(),
            self.pcie_bw_bytes_per_s.len(),
            self.pcie_latency_s.len(),
            self.reserved_bytes.len(),
        ]
    }

    fn point(&self, flat: usize) -> [usize; 4] {
        let d = self.dims();
        let mut rest = flat;
        let mut idx = [0; 4];
        for axis in (0..4).rev() {
            idx[axis] = rest % d[axis];
            rest /= d[axis];
        }
        idx
    }

    /// The base profile with the four fitted fields taken from grid index `idx`.
    pub fn apply(&self, base: &AcceleratorProfile<f64>, idx: [usize; 4]) -> AcceleratorProfile<f64> {
        AcceleratorProfile {
            effective_onchip_bw_bytes_per_s: self.effective_onchip_bw_bytes_per_s[idx[0]],
            pcie_bw_bytes_per_s: self.pcie_bw_bytes_per_s[idx[1]],
            pcie_latency_s: self.pcie_latency_s[idx[2]],
            reserved_bytes: self.reserved_bytes[idx[3]],
            ..base.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub param: u64,
    pub measured_s: f64,
    pub predicted_s: f64,
    /// `ln(predicted) − ln(measured)`.
    pub log_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub profile: AcceleratorProfile<f64>,
    /// Index into each grid axis: onchip bw, pcie bw, pcie latency, reserved bytes.
    pub grid_index: [usize; 4],
    pub sum_squared_log_error: f64,
    pub residuals: Vec<Residual>,
    pub warnings: Vec<String>,
}

fn residuals(models: &[(ModelSpec, Measurement)], profile: &AcceleratorProfile<f64>) -> Vec<Residual> {
    models
        .iter()
        .map(|(model, m)| {
            let predicted = single_device_time(model, profile).total_s;
            Residual {
                param: m.param,
                measured_s: m.time_s,
                predicted_s: predicted,
                log_error: predicted.ln() - m.time_s.ln(),
            }
        })
        .collect()
}

/// Grid search minimizing the summed squared log error of single-device times.
pub fn cmd_calibrate(
    measured: &[Measurement],
    config: &ExperimentConfig,
    grid: &CalibrationGrid,
) -> Result<CalibrationReport> {
    config.sweep.validate()?;
    if measured.len() < 2 {
        return Err(Error::Calibration(format!(
            "insufficient data: {} measurement(s), need at least 2",
            measured.len()
        )));
    }
    let dims = grid.dims();
    if dims.contains(&0) {
        return Err(Error::Calibration("every grid axis needs at least one value".into()));
    }
    let models: Vec<(ModelSpec, Measurement)> = measured
        .iter()
        .map(|m| Ok((build_model(&config.sweep, m.param)?, *m)))
        .collect::<Result<_>>()?;

    let total: usize = dims.iter().product();
    let scores: Vec<(usize, f64)> = (0..total)
        .into_par_iter()
        .filter_map(|flat| {
            let profile = grid.apply(&config.profile, grid.point(flat));
            profile.validate().ok()?;
            let sse = residuals(&models, &profile)
                .iter()
                .map(|r| r.log_error * r.log_error)
                .sum::<f64>();
            Some((flat, sse))
        })
        .collect();
    let &(best_flat, best_sse) = scores
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .ok_or_else(|| Error::Calibration("no grid point yields a valid profile".into()))?;

    let mut warnings = Vec::new();
    let (lo, hi) = measured
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), m| (lo.min(m.time_s), hi.max(m.time_s)));
    if hi - lo <= 1e-12 * hi {
        warnings.push("measured times are constant; the fit is degenerate".to_string());
    }
    let ties = scores.iter().filter(|(_, sse)| *sse == best_sse).count();
    if ties > 1 {
        warnings.push(format!(
            "{ties} grid points fit equally well; the first in grid order was chosen"
        ));
    }

    let grid_index = grid.point(best_flat);
    let profile = grid.apply(&config.profile, grid_index);
    Ok(CalibrationReport {
        residuals: residuals(&models, &profile),
        profile,
        grid_index,
        sum_squared_log_error: best_sse,
        warnings,
    })
}

/// Model-predicted single-device times for a sweep; handy as calibration input.
pub fn synthetic_measurements(config: &ExperimentConfig, profile: &AcceleratorProfile<f64>) -> Result<Vec<Measurement>> {
    Ok(enumerate_sweep(&config.sweep)?
        .iter()
        .map(|pt| Measurement {
            param: pt.param,
            time_s: single_device_time(&pt.model, profile).total_s,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystolicReport {
    pub config: SystolicArrayConfig,
    pub m: usize,
    pub k: usize,
    pub batch: usize,
    pub seed: u64,
    pub peak_ops_per_second: u64,
    pub report: CycleReport,
    /// Outputs matched a direct integer matrix product.
    pub verified: bool,
}

/// Runs a random int8 job through the systolic simulator.
pub fn cmd_systolic(config: SystolicArrayConfig, m: usize, k: usize, batch: usize, seed: u64) -> Result<SystolicReport> {
    config.validate()?;
    if m < 1 || k < 1 || batch < 1 {
        return Err(Error::Argument("M, K and B must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut random_rows = |rows: usize| -> Vec<Vec<i8>> {
        (0..rows).map(|_| (0..k).map(|_| rng.gen::<i8>()).collect()).collect()
    };
    let weights = random_rows(m);
    let inputs = random_rows(batch);
    let job = MatVecJob::new(weights, inputs)?;
    let out = simulate_matvec(&config, &job)?;
    let verified = (0..m).all(|row| {
        (0..batch).all(|b| {
            let want: i64 = (0..k)
                .map(|i| job.weights[row][i] as i64 * job.inputs[b][i] as i64)
                .sum();
            out.outputs[row][b] as i64 == want
        })
    });
    Ok(SystolicReport {
        config,
        m,
        k,
        batch,
        seed,
        peak_ops_per_second: config.peak_ops_per_second(),
        report: out.report,
        verified,
    })
}

pub fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_json<V: Serialize>(path: &Path, value: &V) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelKind;

    #[test]
    fn partitioner_parsing() {
        assert_eq!("even".parse::<PartitionerChoice>().unwrap(), PartitionerChoice::Even);
        assert_eq!(
            "threshold=0.002".parse::<PartitionerChoice>().unwrap(),
            PartitionerChoice::Threshold(0.002)
        );
        assert_eq!("exhaustive".parse::<PartitionerChoice>().unwrap(), PartitionerChoice::Exhaustive);
        assert!("greedy".parse::<PartitionerChoice>().is_err());
        assert!("threshold=x".parse::<PartitionerChoice>().is_err());
        assert_eq!(PartitionerChoice::Threshold(0.5).to_string(), "threshold=0.5");
    }

    #[test]
    fn config_json_defaults() {
        let cfg: ExperimentConfig =
            serde_json::from_str(&format!(r#"{{"sweep": {}}}"#, serde_json::to_string(&SweepConfig::fc_default()).unwrap()))
                .unwrap();
        assert_eq!(cfg, ExperimentConfig::new(SweepConfig::fc_default()));
        let mut bad = cfg.clone();
        bad.segments = vec![6];
        assert!(bad.validate().is_err());
        bad.segments = vec![2];
        bad.batches = vec![0];
        assert!(bad.validate().is_err());
        let text = serde_json::to_string(&ExperimentConfig {
            partitioner: PartitionerChoice::Threshold(1e-3),
            ..cfg
        })
        .unwrap();
        assert!(text.contains(r#""partitioner":"threshold=0.001""#));
    }

    #[test]
    fn single_point_sweep() {
        let mut sweep = SweepConfig::fc_default();
        sweep.param_max = sweep.param_min;
        let rows = cmd_sweep(&ExperimentConfig::new(sweep)).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].model_id, "fc-n100");
        assert_eq!(rows[0].macs, 37_400);
        assert_eq!(rows[0].host_layers, 0);
    }

    #[test]
    fn profile_lists_every_partition() {
        let cfg = ExperimentConfig::new(SweepConfig::fc_default());
        let report = cmd_profile(&cfg, "fc-n1500", 3).unwrap();
        assert_eq!(report.entries.len(), 6);
        assert_eq!(report.batch, 50);
        assert_eq!(report.entries.iter().filter(|e| e.is_best).count(), 1);
        assert!(report.entries[0].is_best);
        let even = report.entries.iter().find(|e| e.is_even_split).unwrap();
        assert_eq!(even.sizes, vec![1, 2, 2]);
        assert!(report.entries[0].evaluation.batch_makespan_s <= even.evaluation.batch_makespan_s);

        let all = cmd_profile(&cfg, "fc-n1500", 5).unwrap();
        assert_eq!(all.entries.len(), 1);
        assert_eq!(all.entries[0].sizes, vec![1; 5]);

        assert!(cmd_profile(&cfg, "fc-n7", 3).is_err());
        assert!(cmd_profile(&cfg, "fc-n1500", 6).is_err());
    }

    #[test]
    fn measurements_parse_with_line_numbers() {
        let ok = parse_measurements("param,time_s\n100,0.001\n140, 0.002\n".as_bytes()).unwrap();
        assert_eq!(ok.len(), 2);
        assert_eq!(ok[1], Measurement { param: 140, time_s: 0.002 });

        let err = parse_measurements("param,time_s\n100,0.001\n140,abc\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse_measurements("param,time\n100,0.001\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = parse_measurements("param,time_s\n100,0.001\n140\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse_measurements("param,time_s\n100,-1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn calibration_rejects_and_warns() {
        let cfg = ExperimentConfig::new(SweepConfig::fc_default());
        let grid = CalibrationGrid::default();
        let one = [Measurement { param: 100, time_s: 0.001 }];
        assert!(matches!(cmd_calibrate(&one, &cfg, &grid), Err(Error::Calibration(_))));

        let flat: Vec<Measurement> = [100, 500, 900, 1300]
            .iter()
            .map(|&param| Measurement { param, time_s: 0.003 })
            .collect();
        let report = cmd_calibrate(&flat, &cfg, &grid).unwrap();
        assert!(report.warnings.iter().any(|w| w.contains("degenerate")));
    }

    #[test]
    fn systolic_command() {
        let r = cmd_systolic(
            SystolicArrayConfig {
                rows: 3,
                cols: 3,
                clock_hz: 1,
            },
            3,
            3,
            1,
            0,
        )
        .unwrap();
        assert_eq!(r.report.total_cycles, 5);
        assert!(r.verified);
        let big = cmd_systolic(SystolicArrayConfig::edge_tpu(), 64, 64, 1, 0).unwrap();
        assert_eq!(big.peak_ops_per_second, 3_932_160_000_000);
        assert!(big.report.utilization <= 1.0);
        assert!(cmd_systolic(SystolicArrayConfig::edge_tpu(), 0, 1, 1, 0).is_err());
    }

    #[test]
    fn kind_parses() {
        assert_eq!("CONV".parse::<ModelKind>().unwrap(), ModelKind::Conv);
    }
}
