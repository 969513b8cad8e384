//! Register-level simulation of an R×C systolic matrix of multiply-sum chains.
//!
//! Each of the R rows is a chain of C cells computing one neuron's dot
//! product. Partial sums move one cell to the right per cycle; input
//! elements enter row 0 at the top and move one row down per cycle, which
//! produces the skewed wavefront of the dataflow: element `k` of wavefront
//! `w` is at cell `(r, k)` during cycle `w + r + k`.
//!
//! A wavefront is one (input vector, fragment) pair. Inputs longer than the
//! chain are split into `⌈K/C⌉` fragments; fragment partial sums are added
//! at the chain output with no extra cycles. Weight matrices taller than the
//! array are processed as sequential row tiles, each paying its own fill.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystolicArrayConfig {
    /// Number of chains (neurons computed concurrently).
    pub rows: usize,
    /// Cells per chain.
    pub cols: usize,
    pub clock_hz: u64,
}

impl SystolicArrayConfig {
    /// 64×64 cells at 480 MHz.
    pub fn edge_tpu() -> Self {
        SystolicArrayConfig {
            rows: 64,
            cols: 64,
            clock_hz: 480_000_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows < 1 || self.cols < 1 || self.clock_hz < 1 {
            return Err(Error::Config(
                "systolic array needs rows, cols and clock_hz of at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Peak operations per second, counting each MAC as two operations.
    pub fn peak_ops_per_second(&self) -> u64 {
        self.rows as u64 * self.cols as u64 * 2 * self.clock_hz
    }
}

/// Batched matrix-vector product: `weights` is M×K, `inputs` holds B vectors of length K.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatVecJob {
    pub weights: Vec<Vec<i8>>,
    pub inputs: Vec<Vec<i8>>,
}

impl MatVecJob {
    pub fn new(weights: Vec<Vec<i8>>, inputs: Vec<Vec<i8>>) -> Result<Self> {
        let job = MatVecJob { weights, inputs };
        job.dims()?;
        Ok(job)
    }

    /// Returns (M, K, B) after checking the job is rectangular and non-empty.
    pub fn dims(&self) -> Result<(usize, usize, usize)> {
        let m = self.weights.len();
        let b = self.inputs.len();
        if m == 0 || b == 0 {
            return Err(Error::Job("weights and inputs must be non-empty".into()));
        }
        let k = self.weights[0].len();
        if k == 0 {
            return Err(Error::Job("vector length must be at least 1".into()));
        }
        if let Some(row) = self.weights.iter().position(|r| r.len() != k) {
            return Err(Error::Job(format!("weight row {row} does not have {k} columns")));
        }
        if let Some(v) = self.inputs.iter().position(|v| v.len() != k) {
            return Err(Error::Job(format!("input {v} does not have length {k}")));
        }
        Ok((m, k, b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub total_cycles: u64,
    pub mac_ops: u64,
    pub utilization: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatVecOutput {
    /// `outputs[m][b]`: dot product of weight row `m` with input `b`.
    pub outputs: Vec<Vec<i32>>,
    pub report: CycleReport,
}

#[derive(Clone, Copy, Default)]
struct Token {
    wave: usize,
    value: i32,
}

/// Simulates one row tile; returns the cycle count of the tile.
fn run_tile(
    cols: usize,
    weights: &[Vec<i8>],
    inputs: &[Vec<i8>],
    out: &mut [Vec<i32>],
) -> Result<u64> {
    let tile_rows = weights.len();
    let k = inputs[0].len();
    let fragments = k.div_ceil(cols);
    let batch = inputs.len();
    let waves = fragments * batch;

    // Element `col` of wavefront `wave`, zero-padded past the end of the vector.
    let feed = |wave: usize, col: usize| -> i32 {
        let (b, frag) = (wave / fragments, wave % fragments);
        let idx = frag * cols + col;
        inputs[b].get(idx).copied().unwrap_or(0) as i32
    };
    let weight = |row: usize, wave: usize, col: usize| -> i32 {
        let idx = (wave % fragments) * cols + col;
        weights[row].get(idx).copied().unwrap_or(0) as i32
    };

    // Registers latched at the end of the previous cycle.
    let mut x_reg: Vec<Vec<Option<Token>>> = vec![vec![None; cols]; tile_rows];
    let mut psum_reg: Vec<Vec<Option<Token>>> = vec![vec![None; cols]; tile_rows];
    let mut emitted = 0usize;
    let mut cycle = 0u64;

    while emitted < tile_rows * waves {
        let mut x_next = vec![vec![None; cols]; tile_rows];
        let mut psum_next = vec![vec![None; cols]; tile_rows];
        for r in 0..tile_rows {
            for c in 0..cols {
                let x = if r == 0 {
                    let t = cycle as usize;
                    (t >= c && t - c < waves).then(|| Token {
                        wave: t - c,
                        value: feed(t - c, c),
                    })
                } else {
                    x_reg[r - 1][c]
                };
                let Some(x) = x else { continue };
                let acc_in = if c == 0 {
                    0
                } else {
                    let upstream = psum_reg[r][c - 1].expect("partial sum missing in chain");
                    debug_assert_eq!(upstream.wave, x.wave);
                    upstream.value
                };
                let product = weight(r, x.wave, c) * x.value;
                let acc = acc_in
                    .checked_add(product)
                    .ok_or(Error::AccumulatorOverflow {
                        row: r,
                        input: x.wave / fragments,
                    })?;
                x_next[r][c] = Some(x);
                psum_next[r][c] = Some(Token {
                    wave: x.wave,
                    value: acc,
                });
                if c == cols - 1 {
                    let b = x.wave / fragments;
                    out[r][b] = out[r][b]
                        .checked_add(acc)
                        .ok_or(Error::AccumulatorOverflow { row: r, input: b })?;
                    emitted += 1;
                }
            }
        }
        x_reg = x_next;
        psum_reg = psum_next;
        cycle += 1;
    }
    Ok(cycle)
}

/// Runs the job through the array, returning exact 32-bit outputs and the cycle report.
pub fn simulate_matvec(config: &SystolicArrayConfig, job: &MatVecJob) -> Result<MatVecOutput> {
    config.validate()?;
    let (m, k, b) = job.dims()?;
    let mut outputs = vec![vec![0i32; b]; m];
    let mut total_cycles = 0u64;
    for start in (0..m).step_by(config.rows) {
        let end = (start + config.rows).min(m);
        total_cycles += run_tile(
            config.cols,
            &job.weights[start..end],
            &job.inputs,
            &mut outputs[start..end],
        )?;
    }
    let mac_ops = (m * k * b) as u64;
    let cells = (config.rows * config.cols) as f64;
    Ok(MatVecOutput {
        outputs,
        report: CycleReport {
            total_cycles,
            mac_ops,
            utilization: mac_ops as f64 / (total_cycles as f64 * cells),
            wall_time_s: total_cycles as f64 / config.clock_hz as f64,
        },
    })
}

pub fn peak_ops_per_second(config: &SystolicArrayConfig) -> u64 {
    config.peak_ops_per_second()
}

/// MACs per cycle achieved on `job`.
pub fn steady_state_throughput(config: &SystolicArrayConfig, job: &MatVecJob) -> Result<f64> {
    let report = simulate_matvec(config, job)?.report;
    Ok(report.mac_ops as f64 / report.total_cycles as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(rows: usize, cols: usize) -> SystolicArrayConfig {
        SystolicArrayConfig {
            rows,
            cols,
            clock_hz: 1,
        }
    }

    #[test]
    fn identity_passthrough() {
        let w = vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]];
        let job = MatVecJob::new(w, vec![vec![1, 2, 3]]).unwrap();
        let out = simulate_matvec(&cfg(3, 3), &job).unwrap();
        assert_eq!(out.outputs, vec![vec![1], vec![2], vec![3]]);
        assert_eq!(out.report.total_cycles, 5);
        assert_eq!(out.report.mac_ops, 9);
    }

    #[test]
    fn batch_adds_one_cycle_each() {
        let w = vec![vec![1i8; 3]; 3];
        for b in 1..6u64 {
            let job = MatVecJob::new(w.clone(), vec![vec![2i8; 3]; b as usize]).unwrap();
            let r = simulate_matvec(&cfg(3, 3), &job).unwrap().report;
            assert_eq!(r.total_cycles, 3 + 3 - 1 + b - 1);
        }
    }

    #[test]
    fn throughput_limits() {
        let w = vec![vec![1i8; 3]; 3];
        let one = MatVecJob::new(w.clone(), vec![vec![1i8; 3]]).unwrap();
        assert_eq!(steady_state_throughput(&cfg(3, 3), &one).unwrap(), 9.0 / 5.0);
        let many = MatVecJob::new(w, vec![vec![1i8; 3]; 2000]).unwrap();
        let t = steady_state_throughput(&cfg(3, 3), &many).unwrap();
        assert!(t < 9.0 && t > 8.98, "{t}");
    }

    #[test]
    fn tiling_and_fragments() {
        // M=5 over 2 rows -> 3 tiles; K=7 over 3 cols -> 3 fragments.
        let w: Vec<Vec<i8>> = (0..5)
            .map(|m| (0..7).map(|k| (m * 7 + k) as i8 - 17).collect())
            .collect();
        let x: Vec<Vec<i8>> = (0..2).map(|b| (0..7).map(|k| (k * 3 + b) as i8 - 5).collect()).collect();
        let job = MatVecJob::new(w.clone(), x.clone()).unwrap();
        let out = simulate_matvec(&cfg(2, 3), &job).unwrap();
        for m in 0..5 {
            for b in 0..2 {
                let want: i32 = (0..7).map(|k| w[m][k] as i32 * x[b][k] as i32).sum();
                assert_eq!(out.outputs[m][b], want);
            }
        }
        // Tiles of 2, 2, 1 rows; 6 wavefronts each: (2+3-1+5) + (2+3-1+5) + (1+3-1+5).
        assert_eq!(out.report.total_cycles, 9 + 9 + 8);
        assert!(out.report.utilization <= 1.0);
    }

    #[test]
    fn peak_ops() {
        assert_eq!(SystolicArrayConfig::edge_tpu().peak_ops_per_second(), 3_932_160_000_000);
        assert_eq!(cfg(1, 1).peak_ops_per_second(), 2);
        let c = SystolicArrayConfig {
            rows: 3,
            cols: 3,
            clock_hz: 100,
        };
        assert_eq!(peak_ops_per_second(&c), 1_800);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        assert!(MatVecJob::new(vec![vec![1, 2], vec![1]], vec![vec![1, 2]]).is_err());
        assert!(MatVecJob::new(vec![vec![1, 2]], vec![vec![1, 2, 3]]).is_err());
        assert!(MatVecJob::new(vec![], vec![vec![1]]).is_err());
        assert!(simulate_matvec(&cfg(0, 3), &MatVecJob::new(vec![vec![1]], vec![vec![1]]).unwrap()).is_err());
    }

    #[test]
    fn overflow_is_an_error() {
        // 128 * 128 * 131072 > i32::MAX
        let k = 131_072;
        let job = MatVecJob::new(vec![vec![-128; k]], vec![vec![-128; k]]).unwrap();
        let err = simulate_matvec(&cfg(1, 64), &job).unwrap_err();
        assert!(matches!(err, Error::AccumulatorOverflow { .. }));
    }
}
