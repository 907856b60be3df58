//! Bin-discretization baseline.
//!
//! Every joint dimension `(s, a, s')` is cut into `b` equal bins and one
//! existence flag is kept per cell of the full product grid. Cells are laid
//! out row-major with the next-state dimensions last, so all next-state cells
//! for a given `(s, a)` cell are contiguous and a query scans exactly
//! `b^d_out` flags.
//!
//! Besides serving as a baseline this is an existence oracle for the CDRM
//! valid set on low-dimensional problems.

use rustc_hash::FxHashMap;

use serde::Serialize;

use crate::data::{Dims, TransitionDataset};
use crate::error::{CdrmError, Result};
use crate::inference::{infer, InferenceConfig, InferenceResult};
use crate::model::CdrmModel;

#[derive(Debug, Clone)]
pub struct BinGrid {
    bins: usize,
    dims: Dims,
    bounds: Vec<(f64, f64)>,
    flags: Vec<u64>,
    counts: FxHashMap<usize, u32>,
    /// `bins^d_out`: number of next-state cells under one input cell.
    out_cells: usize,
}

/// Bin of `v` in `[lo, hi]` split into `bins` half-open intervals, the last
/// one closed.
fn bin_index(v: f64, lo: f64, hi: f64, bins: usize) -> Option<usize> {
    if !(v >= lo && v <= hi) {
        return None;
    }
    if hi == lo {
        return Some(0);
    }
    let k = ((v - lo) / (hi - lo) * bins as f64).floor() as usize;
    Some(k.min(bins - 1))
}

fn checked_cells(bins: usize, n_dims: usize) -> Option<usize> {
    u32::try_from(n_dims).ok().and_then(|e| bins.checked_pow(e))
}

impl BinGrid {
    pub fn build(dataset: &TransitionDataset, bins: usize, bounds: &[(f64, f64)]) -> Result<Self> {
        let dims = dataset.dims();
        if bins == 0 {
            return Err(CdrmError::InvalidConfig("need at least one bin per dimension".into()));
        }
        CdrmError::check_dim(dims.joint(), bounds.len())?;
        if bounds.iter().any(|&(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi)) {
            return Err(CdrmError::InvalidConfig("grid bounds must be finite with low <= high".into()));
        }
        let total = checked_cells(bins, dims.joint())
            .filter(|&c| c <= (1usize << 40))
            .ok_or_else(|| {
                CdrmError::InvalidConfig(format!(
                    "{bins}^{} cells do not fit in memory",
                    dims.joint()
                ))
            })?;
        let out_cells = checked_cells(bins, dims.d_out).expect("divides total");

        let mut grid = Self {
            bins,
            dims,
            bounds: bounds.to_vec(),
            flags: vec![0; total.div_ceil(64)],
            counts: FxHashMap::default(),
            out_cells,
        };
        for (i, t) in dataset.tuples().iter().enumerate() {
            let cell = grid
                .cell_of(&t.joint())
                .ok_or(CdrmError::OutOfBounds { index: i })?;
            grid.flags[cell / 64] |= 1 << (cell % 64);
            *grid.counts.entry(cell).or_insert(0) += 1;
        }
        Ok(grid)
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn total_cells(&self) -> usize {
        self.out_cells * checked_cells(self.bins, self.dims.input()).expect("fits")
    }

    pub fn occupied_cells(&self) -> usize {
        self.counts.len()
    }

    pub fn is_flagged(&self, cell: usize) -> bool {
        self.flags[cell / 64] >> (cell % 64) & 1 == 1
    }

    pub fn count(&self, cell: usize) -> u32 {
        self.counts.get(&cell).copied().unwrap_or(0)
    }

    fn cell_of(&self, point: &[f64]) -> Option<usize> {
        let mut cell = 0usize;
        for (&v, &(lo, hi)) in point.iter().zip(&self.bounds) {
            cell = cell * self.bins + bin_index(v, lo, hi, self.bins)?;
        }
        Some(cell)
    }

    /// Center of next-state cell `k` (row-major over the next-state dims).
    fn out_center(&self, mut k: usize) -> Vec<f64> {
        let out_bounds = &self.bounds[self.dims.output_range()];
        let mut center = vec![0.0; self.dims.d_out];
        for d in (0..self.dims.d_out).rev() {
            let idx = k % self.bins;
            k /= self.bins;
            let (lo, hi) = out_bounds[d];
            let width = (hi - lo) / self.bins as f64;
            center[d] = lo + (idx as f64 + 0.5) * width;
        }
        center
    }

    fn input_base(&self, input: &[f64]) -> Result<usize> {
        CdrmError::check_dim(self.dims.input(), input.len())?;
        let idx = self.cell_of(input).ok_or_else(|| {
            CdrmError::InvalidInput(format!("query {input:?} lies outside the grid bounds"))
        })?;
        Ok(idx * self.out_cells)
    }

    /// Occupied next-state cells for `(s, a)` as `(joint cell index, center)`.
    pub fn query_cells(&self, input: &[f64]) -> Result<Vec<(usize, Vec<f64>)>> {
        let base = self.input_base(input)?;
        Ok((0..self.out_cells)
            .filter(|k| self.is_flagged(base + k))
            .map(|k| (base + k, self.out_center(k)))
            .collect())
    }

    /// Centers of the occupied next-state cells for `(s, a)`, by cell index.
    pub fn query(&self, input: &[f64]) -> Result<Vec<Vec<f64>>> {
        Ok(self.query_cells(input)?.into_iter().map(|(_, c)| c).collect())
    }

    /// Prediction and AU from the occupied cells. The grid has no notion of
    /// model confidence, so EU is 1 when no cell is occupied and 0 otherwise.
    ///
    /// The spread is accumulated from integer bin indices in one scan, so a
    /// query costs one flag test per next-state cell plus constant work per
    /// occupied cell.
    pub fn bin_infer(&self, input: &[f64]) -> Result<InferenceResult> {
        let base = self.input_base(input)?;
        let d = self.dims.d_out;
        // per dimension: sum of indices, sum of squared indices
        let mut sums = vec![(0u128, 0u128); d];
        let mut hits = 0u128;
        let mut best: Option<(usize, u32)> = None;
        for k in 0..self.out_cells {
            if !self.is_flagged(base + k) {
                continue;
            }
            hits += 1;
            let mut rest = k;
            for dim in (0..d).rev() {
                let idx = (rest % self.bins) as u128;
                rest /= self.bins;
                sums[dim].0 += idx;
                sums[dim].1 += idx * idx;
            }
            let c = self.count(base + k);
            if best.is_none_or(|(_, bc)| c > bc) {
                best = Some((k, c));
            }
        }
        let Some((k, _)) = best else {
            return Ok(InferenceResult {
                prediction: None,
                eu: 1.0,
                au: None,
                valid_count: 0,
                per_step_max: Vec::new(),
            });
        };
        let out_bounds = &self.bounds[self.dims.output_range()];
        let mut total = 0.0;
        for (&(s1, s2), &(lo, hi)) in sums.iter().zip(out_bounds) {
            let width = (hi - lo) / self.bins as f64;
            let var_idx = (hits * s2 - s1 * s1) as f64 / (hits * hits) as f64;
            total += var_idx * width * width;
        }
        Ok(InferenceResult {
            prediction: Some(self.out_center(k)),
            eu: 0.0,
            au: Some(total.sqrt()),
            valid_count: hits as usize,
            per_step_max: Vec::new(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MemoryReport {
    /// Cells of the joint grid, `b^(d_s + d_a + d_out)`.
    pub joint_cells: u64,
    /// `d_s^2 * d_a * b^3`, the flag count of per-dimension concatenated indexing.
    pub concat_index_cells: u64,
    /// Set when either count overflowed and was clamped to `u64::MAX`.
    pub saturated: bool,
}

pub fn memory_report(dims: Dims, bins: u64) -> MemoryReport {
    let exp = (dims.joint()) as u32;
    let joint = bins.checked_pow(exp);
    let concat = (dims.d_s as u64)
        .checked_pow(2)
        .and_then(|v| v.checked_mul(dims.d_a as u64))
        .and_then(|v| bins.checked_pow(3).and_then(|b3| v.checked_mul(b3)));
    MemoryReport {
        joint_cells: joint.unwrap_or(u64::MAX),
        concat_index_cells: concat.unwrap_or(u64::MAX),
        saturated: joint.is_none() || concat.is_none(),
    }
}

/// One probe of the existence comparison between CDRM and the grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementProbe {
    pub input: Vec<f64>,
    pub cdrm_valid: usize,
    pub bin_cells: usize,
}

impl AgreementProbe {
    pub fn agrees(&self) -> bool {
        (self.cdrm_valid == 0) == (self.bin_cells == 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementReport {
    pub probes: Vec<AgreementProbe>,
    pub agreed: usize,
    pub fraction: f64,
}

/// `points` evenly spaced values per input dimension spanning the observed
/// inputs of `dataset`, as a row-major product grid.
pub fn input_probe_grid(dataset: &TransitionDataset, points: usize) -> Result<Vec<Vec<f64>>> {
    let d = dataset.dims().input();
    if dataset.is_empty() || points == 0 {
        return Err(CdrmError::InvalidInput("need data and at least one probe per axis".into()));
    }
    let inputs = dataset.inputs();
    let ranges: Vec<(f64, f64)> = (0..d)
        .map(|j| {
            inputs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                (lo.min(x[j]), hi.max(x[j]))
            })
        })
        .collect();
    let axis = |(lo, hi): (f64, f64), k: usize| {
        if points == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * k as f64 / (points - 1) as f64
        }
    };
    let total = checked_cells(points, d).ok_or_else(|| {
        CdrmError::InvalidConfig("probe grid is too large".into())
    })?;
    Ok((0..total)
        .map(|mut idx| {
            let mut p = vec![0.0; d];
            for j in (0..d).rev() {
                p[j] = axis(ranges[j], idx % points);
                idx /= points;
            }
            p
        })
        .collect())
}

/// Compares CDRM valid-set emptiness with grid emptiness at each probe.
pub fn oracle_agreement(
    model: &CdrmModel,
    grid: &BinGrid,
    probes: &[Vec<f64>],
    cfg: &InferenceConfig,
    seed: u64,
) -> Result<AgreementReport> {
    let mut out = Vec::with_capacity(probes.len());
    for (i, p) in probes.iter().enumerate() {
        let r = infer(model, p, cfg, seed.wrapping_add(i as u64))?;
        out.push(AgreementProbe {
            input: p.clone(),
            cdrm_valid: r.valid_count,
            bin_cells: grid.query_cells(p)?.len(),
        });
    }
    let agreed = out.iter().filter(|p| p.agrees()).count();
    Ok(AgreementReport {
        fraction: agreed as f64 / out.len().max(1) as f64,
        agreed,
        probes: out,
    })
}
