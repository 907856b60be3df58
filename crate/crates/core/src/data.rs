//! Transition datasets, the synthetic generators used for evaluation, and the
//! CSV dataset format.
//!
//! The CSV format is a single header line `# dims=d_s,d_a,d_out` followed by
//! one comma-separated row per tuple holding `s`, then `a`, then `s_next`.
//! Floats are written in shortest round-trip form, so a save/load cycle is
//! bit-exact.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{CdrmError, Result};

/// Widths of the state, action, and next-state blocks of a transition.
///
/// Regression problems use `d_a = 0`, with the regressor input in `s` and the
/// target in `s_next`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub d_s: usize,
    pub d_a: usize,
    pub d_out: usize,
}

impl Dims {
    pub fn new(d_s: usize, d_a: usize, d_out: usize) -> Self {
        Self { d_s, d_a, d_out }
    }

    /// Width of the conditioning block `(s, a)`.
    pub fn input(&self) -> usize {
        self.d_s + self.d_a
    }

    /// Width of a full `(s, a, s_next)` tuple.
    pub fn joint(&self) -> usize {
        self.d_s + self.d_a + self.d_out
    }

    /// Indices of the next-state block inside a joint tuple.
    pub fn output_range(&self) -> std::ops::Range<usize> {
        self.input()..self.joint()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub s_next: Vec<f64>,
}

impl Transition {
    pub fn new(s: Vec<f64>, a: Vec<f64>, s_next: Vec<f64>) -> Self {
        Self { s, a, s_next }
    }

    /// The concatenated `(s, a, s_next)` vector.
    pub fn joint(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.s.len() + self.a.len() + self.s_next.len());
        v.extend_from_slice(&self.s);
        v.extend_from_slice(&self.a);
        v.extend_from_slice(&self.s_next);
        v
    }

    pub fn input(&self) -> Vec<f64> {
        let mut v = self.s.clone();
        v.extend_from_slice(&self.a);
        v
    }
}

/// Fraction of each dimension's data range added on both sides when deriving
/// the sampling bounds of a dataset.
pub const BOUNDS_PADDING: f64 = 0.1;

/// Ordered transition tuples with per-dimension bounds over the joint space.
///
/// Bounds are derived from the data: the observed range of each joint
/// dimension padded by [`BOUNDS_PADDING`] of its width (or by 0.5 when the
/// dimension is constant).
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionDataset {
    dims: Dims,
    tuples: Vec<Transition>,
    bounds: Vec<(f64, f64)>,
}

impl TransitionDataset {
    pub fn new(dims: Dims, tuples: Vec<Transition>) -> Result<Self> {
        for (i, t) in tuples.iter().enumerate() {
            if t.s.len() != dims.d_s || t.a.len() != dims.d_a || t.s_next.len() != dims.d_out {
                return Err(CdrmError::InvalidInput(format!(
                    "tuple {i} does not match dims ({}, {}, {})",
                    dims.d_s, dims.d_a, dims.d_out
                )));
            }
            if t.joint().iter().any(|v| !v.is_finite()) {
                return Err(CdrmError::InvalidInput(format!("tuple {i} is not finite")));
            }
        }
        let bounds = derive_bounds(dims.joint(), &tuples);
        Ok(Self {
            dims,
            tuples,
            bounds,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn tuples(&self) -> &[Transition] {
        &self.tuples
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    /// Per-dimension `(low, high)` over the joint `(s, a, s_next)` space.
    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    /// All `(s, a)` inputs, one per tuple.
    pub fn inputs(&self) -> Vec<Vec<f64>> {
        self.tuples.iter().map(Transition::input).collect()
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .map_err(|e| CdrmError::io(path, e))?;
        fs::write(path, buf).map_err(|e| CdrmError::io(path, e))
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| CdrmError::io(path, e))?;
        Self::read_csv(file)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let Dims { d_s, d_a, d_out } = self.dims;
        writeln!(w, "# dims={d_s},{d_a},{d_out}")?;
        for t in &self.tuples {
            let row: Vec<String> = t.joint().iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut lines = BufReader::new(reader).lines();
        let header = match lines.next() {
            Some(line) => line.map_err(|e| parse_err(1, e.to_string()))?,
            None => return Err(parse_err(1, "missing `# dims=` header")),
        };
        let dims = parse_header(&header)?;
        let width = dims.joint();
        let mut tuples = Vec::new();
        for (idx, line) in lines.enumerate() {
            let line_no = idx + 2;
            let line = line.map_err(|e| parse_err(line_no, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let values = line
                .split(',')
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| parse_err(line_no, format!("`{}`: {e}", f.trim())))
                })
                .collect::<Result<Vec<f64>>>()?;
            if values.len() != width {
                return Err(parse_err(
                    line_no,
                    format!("expected {width} columns from the header, found {}", values.len()),
                ));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(parse_err(line_no, "non-finite value"));
            }
            let (s, rest) = values.split_at(dims.d_s);
            let (a, s_next) = rest.split_at(dims.d_a);
            tuples.push(Transition::new(s.to_vec(), a.to_vec(), s_next.to_vec()));
        }
        Self::new(dims, tuples)
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> CdrmError {
    CdrmError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_header(header: &str) -> Result<Dims> {
    let spec = header
        .trim()
        .strip_prefix('#')
        .map(str::trim)
        .and_then(|s| s.strip_prefix("dims="))
        .ok_or_else(|| parse_err(1, "header must read `# dims=d_s,d_a,d_out`"))?;
    let parts = spec
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| parse_err(1, format!("bad dims: {e}")))?;
    match parts[..] {
        [d_s, d_a, d_out] if d_s + d_a > 0 && d_out > 0 => Ok(Dims::new(d_s, d_a, d_out)),
        _ => Err(parse_err(1, "dims must list three widths with d_out > 0")),
    }
}

fn derive_bounds(width: usize, tuples: &[Transition]) -> Vec<(f64, f64)> {
    let mut lo = vec![f64::INFINITY; width];
    let mut hi = vec![f64::NEG_INFINITY; width];
    for t in tuples {
        for (d, v) in t.joint().into_iter().enumerate() {
            lo[d] = lo[d].min(v);
            hi[d] = hi[d].max(v);
        }
    }
    lo.into_iter()
        .zip(hi)
        .map(|(l, h)| {
            if !l.is_finite() {
                (-1.0, 1.0)
            } else if h > l {
                let pad = BOUNDS_PADDING * (h - l);
                (l - pad, h + pad)
            } else {
                (l - 0.5, h + 0.5)
            }
        })
        .collect()
}

/// Settings for the 1-D toy regression problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyConfig {
    pub n_per_region: usize,
    pub sigma_eta: f64,
    pub multimodal: bool,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            n_per_region: 200,
            sigma_eta: 0.3,
            multimodal: false,
            seed: 0,
        }
    }
}

/// Left edge of the region without data.
pub const TOY_GAP_LOW: f64 = -0.33;
/// Right edge (exclusive) of the region without data.
pub const TOY_GAP_HIGH: f64 = 0.33;

/// Toy regression data: a clean `sin(x)` branch on `[-1, -0.33)`, nothing on
/// `[-0.33, 0.33)`, and `sin(x)` plus Gaussian noise on `[0.33, 1]`. The
/// multimodal variant appends a copy of every tuple with `y` negated.
pub fn gen_toy(cfg: &ToyConfig) -> Result<TransitionDataset> {
    if cfg.n_per_region == 0 {
        return Err(CdrmError::InvalidConfig("n_per_region must be at least 1".into()));
    }
    if !(cfg.sigma_eta >= 0.0 && cfg.sigma_eta.is_finite()) {
        return Err(CdrmError::InvalidConfig("sigma_eta must be finite and non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.sigma_eta).expect("validated above");
    let mut tuples = Vec::with_capacity(cfg.n_per_region * if cfg.multimodal { 4 } else { 2 });

    for _ in 0..cfg.n_per_region {
        let x = rng.random_range(-1.0..TOY_GAP_LOW);
        tuples.push(Transition::new(vec![x], vec![], vec![x.sin()]));
    }
    for _ in 0..cfg.n_per_region {
        let x = rng.random_range(TOY_GAP_HIGH..=1.0);
        let y = x.sin() + noise.sample(&mut rng);
        tuples.push(Transition::new(vec![x], vec![], vec![y]));
    }
    if cfg.multimodal {
        let mirrored: Vec<Transition> = tuples
            .iter()
            .map(|t| Transition::new(t.s.clone(), vec![], vec![-t.s_next[0]]))
            .collect();
        tuples.extend(mirrored);
    }
    TransitionDataset::new(Dims::new(1, 0, 1), tuples)
}

/// Closed axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub const fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p[0] >= self.x0 && p[0] <= self.x1 && p[1] >= self.y0 && p[1] <= self.y1
    }

    pub fn center(&self) -> [f64; 2] {
        [(self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0]
    }

    fn overlaps(&self, other: &Rect) -> bool {
        self.x0 < other.x1 && other.x0 < self.x1 && self.y0 < other.y1 && other.y0 < self.y1
    }
}

/// The room-exploration environment: a unit-square room with a region of
/// random sensor readings and a hidden region the walker never enters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoomLayout {
    pub room: Rect,
    pub noisy_region: Rect,
    pub hidden_region: Rect,
    pub noise_mean: f64,
    pub noise_std: f64,
    /// Largest per-axis displacement of one walk step.
    pub step_size: f64,
}

impl Default for RoomLayout {
    fn default() -> Self {
        Self {
            room: Rect::new(0.0, 1.0, 0.0, 1.0),
            noisy_region: Rect::new(0.0, 0.3, 0.0, 0.3),
            hidden_region: Rect::new(0.7, 1.0, 0.7, 1.0),
            noise_mean: 1.0,
            noise_std: 0.5,
            step_size: 0.1,
        }
    }
}

impl RoomLayout {
    pub fn validate(&self) -> Result<()> {
        let inside = |r: &Rect| {
            r.x0 >= self.room.x0 && r.x1 <= self.room.x1 && r.y0 >= self.room.y0 && r.y1 <= self.room.y1
        };
        let proper = |r: &Rect| r.x0 < r.x1 && r.y0 < r.y1;
        if !proper(&self.room) || !proper(&self.noisy_region) || !proper(&self.hidden_region) {
            return Err(CdrmError::InvalidConfig("regions must have positive area".into()));
        }
        if !inside(&self.noisy_region) || !inside(&self.hidden_region) {
            return Err(CdrmError::InvalidConfig("regions must lie within the room".into()));
        }
        if self.noisy_region.overlaps(&self.hidden_region) {
            return Err(CdrmError::InvalidConfig("noisy and hidden regions overlap".into()));
        }
        if !(self.noise_std >= 0.0) || !(self.step_size > 0.0) {
            return Err(CdrmError::InvalidConfig(
                "noise_std must be non-negative and step_size positive".into(),
            ));
        }
        Ok(())
    }

    /// Deterministic temperature outside the noisy region.
    pub fn base_temperature(&self, p: &[f64]) -> f64 {
        0.5 * (p[0] + p[1]) / 1.0
    }
}

/// Ground truth of which uncertainty a probe location carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RegionLabel {
    AuPositive,
    EuPositive,
    Clean,
}

impl RegionLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            RegionLabel::AuPositive => "AU_POSITIVE",
            RegionLabel::EuPositive => "EU_POSITIVE",
            RegionLabel::Clean => "CLEAN",
        }
    }
}

pub fn label_probe(layout: &RoomLayout, p: &[f64]) -> Result<RegionLabel> {
    CdrmError::check_dim(2, p.len())?;
    if !layout.room.contains(p) {
        return Err(CdrmError::InvalidInput(format!(
            "probe ({}, {}) lies outside the room",
            p[0], p[1]
        )));
    }
    Ok(if layout.noisy_region.contains(p) {
        RegionLabel::AuPositive
    } else if layout.hidden_region.contains(p) {
        RegionLabel::EuPositive
    } else {
        RegionLabel::Clean
    })
}

/// Rejection attempts per walk step before the walker stays in place.
const MAX_STEP_ATTEMPTS: usize = 64;

/// Random walk through the room recording `(position, temperature)` at every
/// step. Proposals leaving the room or entering the hidden region are
/// rejected and redrawn.
pub fn gen_room(n_steps: usize, layout: &RoomLayout, seed: u64) -> Result<TransitionDataset> {
    if n_steps == 0 {
        return Err(CdrmError::InvalidConfig("n_steps must be at least 1".into()));
    }
    layout.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(layout.noise_mean, layout.noise_std).expect("validated layout");
    let room = layout.room;
    let allowed = |p: &[f64; 2]| room.contains(p) && !layout.hidden_region.contains(p);

    let mut pos = loop {
        let p = [
            rng.random_range(room.x0..=room.x1),
            rng.random_range(room.y0..=room.y1),
        ];
        if allowed(&p) {
            break p;
        }
    };

    let mut tuples = Vec::with_capacity(n_steps);
    for step in 0..n_steps {
        if step > 0 {
            for _ in 0..MAX_STEP_ATTEMPTS {
                let p = [
                    pos[0] + rng.random_range(-layout.step_size..=layout.step_size),
                    pos[1] + rng.random_range(-layout.step_size..=layout.step_size),
                ];
                if allowed(&p) {
                    pos = p;
                    break;
                }
            }
        }
        let kappa = if layout.noisy_region.contains(&pos) {
            noise.sample(&mut rng)
        } else {
            layout.base_temperature(&pos)
        };
        tuples.push(Transition::new(pos.to_vec(), vec![], vec![kappa]));
    }
    TransitionDataset::new(Dims::new(2, 0, 1), tuples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(multimodal: bool, sigma_eta: f64) -> TransitionDataset {
        gen_toy(&ToyConfig {
            n_per_region: 150,
            sigma_eta,
            multimodal,
            seed: 11,
        })
        .unwrap()
    }

    #[test]
    fn toy_leaves_the_gap_empty() {
        for t in toy(true, 0.3).tuples() {
            assert!(!(TOY_GAP_LOW..TOY_GAP_HIGH).contains(&t.s[0]));
            assert!((-1.0..=1.0).contains(&t.s[0]));
        }
    }

    #[test]
    fn noiseless_toy_follows_sine_exactly() {
        let ds = toy(false, 0.0);
        assert_eq!(ds.len(), 300);
        for t in ds.tuples() {
            assert_eq!(t.s_next[0], t.s[0].sin());
        }
        // left-region formula has no noise term
        assert_eq!((-0.5f64).sin(), -0.479425538604203);
        for t in toy(false, 0.3).tuples().iter().filter(|t| t.s[0] < 0.0) {
            assert_eq!(t.s_next[0], t.s[0].sin());
        }
    }

    #[test]
    fn multimodal_toy_is_mirror_symmetric() {
        let uni = toy(false, 0.3);
        let multi = toy(true, 0.3);
        assert_eq!(multi.len(), 2 * uni.len());
        for t in multi.tuples() {
            let mirrored = multi
                .tuples()
                .iter()
                .any(|u| u.s == t.s && u.s_next[0] == -t.s_next[0]);
            assert!(mirrored);
        }
    }

    #[test]
    fn toy_rejects_bad_config() {
        let cfg = ToyConfig {
            n_per_region: 0,
            ..ToyConfig::default()
        };
        assert!(gen_toy(&cfg).is_err());
        let cfg = ToyConfig {
            sigma_eta: -1.0,
            ..ToyConfig::default()
        };
        assert!(gen_toy(&cfg).is_err());
    }

    #[test]
    fn room_walk_avoids_hidden_region() {
        let layout = RoomLayout::default();
        let ds = gen_room(3000, &layout, 5).unwrap();
        assert_eq!(ds.len(), 3000);
        assert_eq!(ds.dims(), Dims::new(2, 0, 1));
        for t in ds.tuples() {
            assert!(!layout.hidden_region.contains(&t.s));
            assert!(layout.room.contains(&t.s));
        }
    }

    #[test]
    fn room_readings_follow_their_region() {
        let layout = RoomLayout::default();
        let ds = gen_room(5000, &layout, 9).unwrap();
        let noisy: Vec<f64> = ds
            .tuples()
            .iter()
            .filter(|t| layout.noisy_region.contains(&t.s))
            .map(|t| t.s_next[0])
            .collect();
        assert!(noisy.len() >= 100, "only {} noisy samples", noisy.len());
        let mean = noisy.iter().sum::<f64>() / noisy.len() as f64;
        let tol = 3.0 * layout.noise_std / (noisy.len() as f64).sqrt();
        assert!((mean - layout.noise_mean).abs() <= tol, "mean {mean}");

        for t in ds.tuples().iter().filter(|t| !layout.noisy_region.contains(&t.s)) {
            assert_eq!(t.s_next[0], layout.base_temperature(&t.s));
        }
    }

    #[test]
    fn room_is_deterministic() {
        let layout = RoomLayout::default();
        assert_eq!(gen_room(500, &layout, 3).unwrap(), gen_room(500, &layout, 3).unwrap());
        assert_ne!(gen_room(500, &layout, 3).unwrap(), gen_room(500, &layout, 4).unwrap());
    }

    #[test]
    fn labels() {
        let layout = RoomLayout::default();
        assert_eq!(
            label_probe(&layout, &layout.noisy_region.center()).unwrap(),
            RegionLabel::AuPositive
        );
        assert_eq!(
            label_probe(&layout, &layout.hidden_region.center()).unwrap(),
            RegionLabel::EuPositive
        );
        assert_eq!(label_probe(&layout, &[0.5, 0.5]).unwrap(), RegionLabel::Clean);
        assert!(label_probe(&layout, &[1.5, 0.5]).is_err());
    }

    #[test]
    fn labels_partition_a_grid() {
        let layout = RoomLayout::default();
        let n = 23;
        let mut counts = [0usize; 3];
        for i in 0..n {
            for j in 0..n {
                let p = [i as f64 / (n - 1) as f64, j as f64 / (n - 1) as f64];
                match label_probe(&layout, &p).unwrap() {
                    RegionLabel::AuPositive => counts[0] += 1,
                    RegionLabel::EuPositive => counts[1] += 1,
                    RegionLabel::Clean => counts[2] += 1,
                }
            }
        }
        assert_eq!(counts.iter().sum::<usize>(), n * n);
        assert!(counts.iter().all(|&c| c > 0));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let ds = toy(true, 0.3);
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = TransitionDataset::read_csv(&buf[..]).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn empty_dataset_is_header_only() {
        let ds = TransitionDataset::new(Dims::new(2, 1, 2), vec![]).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "# dims=2,1,2\n");
        let back = TransitionDataset::read_csv(&buf[..]).unwrap();
        assert!(back.is_empty());
        assert_eq!(back.dims(), Dims::new(2, 1, 2));
    }

    #[test]
    fn csv_width_mismatch_reports_line() {
        let text = "# dims=1,0,1\n0.5,0.25\n0.1,0.2,0.3\n";
        match TransitionDataset::read_csv(text.as_bytes()) {
            Err(CdrmError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(
            TransitionDataset::read_csv("dims=1,0,1\n".as_bytes()),
            Err(CdrmError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            TransitionDataset::read_csv("# dims=1,0,1\n0.5,abc\n".as_bytes()),
            Err(CdrmError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn bounds_pad_the_data_range() {
        let ds = TransitionDataset::new(
            Dims::new(1, 0, 1),
            vec![
                Transition::new(vec![0.0], vec![], vec![2.0]),
                Transition::new(vec![1.0], vec![], vec![2.0]),
            ],
        )
        .unwrap();
        assert_eq!(ds.bounds()[0], (-0.1, 1.1));
        assert_eq!(ds.bounds()[1], (1.5, 2.5));
    }
}
