//! Observation operators, delay windows, trajectory-level splits and parameter
//! conditioning.
//!
//! Windows use a stride of one sample. A window never crosses a trajectory
//! boundary; each window records the series and offset it came from.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::io;
use crate::tensor::Mat;

/// Linear selection of state components.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ObservationOperator {
    Full,
    Component(usize),
    /// Column of a field trajectory sampled on a spatial grid.
    GridNode(usize),
    /// Explicit list of selected components, one per output row of `H`.
    Select(Vec<usize>),
}

impl ObservationOperator {
    /// Build from a 0/1 selector matrix `H` (p × d) with exactly one unit per row.
    pub fn from_matrix(h: &Mat) -> Result<Self> {
        if h.rows() == 0 || h.rows() > h.cols() {
            return Err(Error::invalid(format!(
                "selector must have 1..=d rows, got {}x{}",
                h.rows(),
                h.cols()
            )));
        }
        let mut sel = Vec::with_capacity(h.rows());
        for (r, row) in h.iter_rows().enumerate() {
            if row.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::invalid(format!("selector row {r} is not 0/1")));
            }
            let ones: Vec<usize> = (0..row.len()).filter(|&j| row[j] == 1.0).collect();
            if ones.len() != 1 {
                return Err(Error::invalid(format!(
                    "selector row {r} must select exactly one component"
                )));
            }
            sel.push(ones[0]);
        }
        Ok(ObservationOperator::Select(sel))
    }

    /// Selected state indices for a state of dimension `d`.
    pub fn indices(&self, d: usize) -> Result<Vec<usize>> {
        let idx = match self {
            ObservationOperator::Full => (0..d).collect(),
            ObservationOperator::Component(i) | ObservationOperator::GridNode(i) => vec![*i],
            ObservationOperator::Select(s) => s.clone(),
        };
        if let Some(&bad) = idx.iter().find(|&&i| i >= d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: bad + 1,
            });
        }
        if idx.is_empty() || idx.len() > d {
            return Err(Error::invalid("observation must select between 1 and d components"));
        }
        Ok(idx)
    }

    pub fn output_dim(&self, d: usize) -> Result<usize> {
        Ok(self.indices(d)?.len())
    }

    /// The selector matrix `H`.
    pub fn matrix(&self, d: usize) -> Result<Mat> {
        let idx = self.indices(d)?;
        let mut h = Mat::zeros(idx.len(), d);
        for (r, &j) in idx.iter().enumerate() {
            h[(r, j)] = 1.0;
        }
        Ok(h)
    }
}

impl fmt::Display for ObservationOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObservationOperator::Full => write!(f, "full"),
            ObservationOperator::Component(i) => write!(f, "component:{i}"),
            ObservationOperator::GridNode(j) => write!(f, "grid-node:{j}"),
            ObservationOperator::Select(s) => {
                let parts: Vec<String> = s.iter().map(|i| i.to_string()).collect();
                write!(f, "select:{}", parts.join(","))
            }
        }
    }
}

impl FromStr for ObservationOperator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "full" {
            return Ok(ObservationOperator::Full);
        }
        let (kind, arg) = s
            .split_once(':')
            .ok_or_else(|| Error::invalid(format!("unknown observation operator {s:?}")))?;
        let num = |a: &str| {
            a.trim()
                .parse::<usize>()
                .map_err(|_| Error::invalid(format!("bad index in observation operator {s:?}")))
        };
        match kind {
            "component" => Ok(ObservationOperator::Component(num(arg)?)),
            "grid-node" => Ok(ObservationOperator::GridNode(num(arg)?)),
            "select" => Ok(ObservationOperator::Select(
                arg.split(',').map(num).collect::<Result<_>>()?,
            )),
            _ => Err(Error::invalid(format!("unknown observation operator {s:?}"))),
        }
    }
}

impl TryFrom<String> for ObservationOperator {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ObservationOperator> for String {
    fn from(h: ObservationOperator) -> String {
        h.to_string()
    }
}

/// Row-wise application of `H` to the trajectory states.
pub fn observe(traj: &Trajectory, h: &ObservationOperator) -> Result<Mat> {
    let idx = h.indices(traj.dim())?;
    Ok(traj.states.select_cols(&idx))
}

/// Overlapping windows of `l` consecutive rows and their next-row targets.
///
/// Returns `(windows, targets)` with `windows` of shape `N × (l·p)` (token-major)
/// and `targets` of shape `N × p`, where `N = T − l`.
pub fn delay_windows(series: &Mat, l: usize) -> Result<(Mat, Mat)> {
    if l == 0 {
        return Err(Error::invalid("window length must be >= 1"));
    }
    let t = series.rows();
    if t < l + 1 {
        return Err(Error::invalid(format!(
            "series of length {t} too short for windows of length {l}"
        )));
    }
    let p = series.cols();
    let n = t - l;
    let mut windows = Mat::zeros(n, l * p);
    let mut targets = Mat::zeros(n, p);
    for i in 0..n {
        windows.row_mut(i).copy_from_slice(&series.data()[i * p..(i + l) * p]);
        targets.row_mut(i).copy_from_slice(series.row(i + l));
    }
    Ok((windows, targets))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

/// Count of trajectories per split for the given ratios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub unused: usize,
}

/// Assign each of `n` trajectories to a split (or `None` = unused) after a seeded shuffle.
///
/// When the ratios sum to one the test split takes the remainder, so every
/// trajectory is used.
pub fn make_split(n: usize, ratios: (f64, f64, f64), seed: u64) -> Result<Vec<Option<Split>>> {
    let (rt, rv, rs) = ratios;
    if [rt, rv, rs].iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(Error::invalid("split ratios must lie in [0, 1]"));
    }
    let total = rt + rv + rs;
    if total > 1.0 + 1e-9 {
        return Err(Error::invalid(format!("split ratios sum to {total} > 1")));
    }
    let exhaustive = (total - 1.0).abs() < 1e-9;
    let nt = ((rt * n as f64).round() as usize).min(n);
    let mut nv = (rv * n as f64).round() as usize;
    if exhaustive {
        nv = nv.min(n - nt);
    }
    let ns = if exhaustive {
        n - nt - nv
    } else {
        (rs * n as f64).round() as usize
    };
    if nt + nv + ns > n {
        return Err(Error::invalid("split counts exceed the number of trajectories"));
    }
    for (r, c, name) in [(rt, nt, "train"), (rv, nv, "val"), (rs, ns, "test")] {
        if r > 0.0 && c == 0 {
            return Err(Error::invalid(format!(
                "{name} split would be empty for {n} trajectories"
            )));
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![None; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = if rank < nt {
            Some(Split::Train)
        } else if rank < nt + nv {
            Some(Split::Val)
        } else if rank < nt + nv + ns {
            Some(Split::Test)
        } else {
            None
        };
    }
    Ok(out)
}

pub fn split_counts(assign: &[Option<Split>]) -> SplitCounts {
    let mut c = SplitCounts {
        train: 0,
        val: 0,
        test: 0,
        unused: 0,
    };
    for a in assign {
        match a {
            Some(Split::Train) => c.train += 1,
            Some(Split::Val) => c.val += 1,
            Some(Split::Test) => c.test += 1,
            None => c.unused += 1,
        }
    }
    c
}

/// Per-column z-scoring; returns the standardized series with means and stds.
/// Columns with zero spread are centred only.
pub fn zscore(series: &Mat) -> (Mat, Vec<f64>, Vec<f64>) {
    let (t, p) = series.shape();
    let mut means = vec![0.0; p];
    let mut stds = vec![0.0; p];
    for j in 0..p {
        let col = series.col(j);
        let m = col.iter().sum::<f64>() / t.max(1) as f64;
        let v = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / t.max(1) as f64;
        means[j] = m;
        stds[j] = v.sqrt();
    }
    let mut out = series.clone();
    for i in 0..t {
        for j in 0..p {
            let s = if stds[j] > 0.0 { stds[j] } else { 1.0 };
            out[(i, j)] = (series[(i, j)] - means[j]) / s;
        }
    }
    (out, means, stds)
}

/// One observed trajectory feeding the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedSeries {
    pub id: usize,
    pub times: Vec<f64>,
    pub values: Mat,
    pub split: Option<Split>,
    /// Normalized conditioning scalar, if any.
    pub cond: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub l: usize,
    pub dt: f64,
    pub observation: ObservationOperator,
    pub obs_dim: usize,
    #[serde(default)]
    pub cond_range: Option<(f64, f64)>,
    #[serde(default)]
    pub zscored: bool,
    /// Intrinsic dimension `n` of the underlying attractor, when known.
    #[serde(default)]
    pub intrinsic_dim: Option<usize>,
}

impl DatasetMeta {
    /// `L − (2n + 1)`; non-negative when the window satisfies the Takens bound.
    pub fn takens_margin(&self) -> Option<i64> {
        self.intrinsic_dim.map(|n| self.l as i64 - (2 * n as i64 + 1))
    }
}

/// Where a window came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowOrigin {
    /// Position in `DelayDataset::series`.
    pub series: usize,
    /// First sample of the window within that series.
    pub offset: usize,
}

/// Delay-embedded windows from a set of observed series.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayDataset {
    pub meta: DatasetMeta,
    pub series: Vec<ObservedSeries>,
    windows: Mat,
    targets: Mat,
    origin: Vec<WindowOrigin>,
}

/// Dense model inputs: `n` windows of `l` tokens of width `token_dim`, with
/// `n × out_dim` targets.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    pub n: usize,
    pub l: usize,
    pub token_dim: usize,
    pub out_dim: usize,
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
}

impl WindowSet {
    pub fn new(l: usize, token_dim: usize, out_dim: usize, inputs: Vec<f64>, targets: Vec<f64>) -> Result<Self> {
        let per = l * token_dim;
        if l == 0 || token_dim == 0 || out_dim == 0 {
            return Err(Error::invalid("window set dimensions must be positive"));
        }
        if !inputs.len().is_multiple_of(per) {
            return Err(Error::DimensionMismatch {
                expected: per,
                got: inputs.len() % per,
            });
        }
        let n = inputs.len() / per;
        if targets.len() != n * out_dim {
            return Err(Error::DimensionMismatch {
                expected: n * out_dim,
                got: targets.len(),
            });
        }
        Ok(WindowSet {
            n,
            l,
            token_dim,
            out_dim,
            inputs,
            targets,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn window(&self, i: usize) -> &[f64] {
        let per = self.l * self.token_dim;
        &self.inputs[i * per..(i + 1) * per]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets[i * self.out_dim..(i + 1) * self.out_dim]
    }

    /// Keep only the final token of every window.
    pub fn last_token(&self) -> WindowSet {
        let mut inputs = Vec::with_capacity(self.n * self.token_dim);
        for i in 0..self.n {
            let w = self.window(i);
            inputs.extend_from_slice(&w[(self.l - 1) * self.token_dim..]);
        }
        WindowSet {
            n: self.n,
            l: 1,
            token_dim: self.token_dim,
            out_dim: self.out_dim,
            inputs,
            targets: self.targets.clone(),
        }
    }

    pub fn subset(&self, idx: &[usize]) -> WindowSet {
        let mut inputs = Vec::with_capacity(idx.len() * self.l * self.token_dim);
        let mut targets = Vec::with_capacity(idx.len() * self.out_dim);
        for &i in idx {
            inputs.extend_from_slice(self.window(i));
            targets.extend_from_slice(self.target(i));
        }
        WindowSet {
            n: idx.len(),
            l: self.l,
            token_dim: self.token_dim,
            out_dim: self.out_dim,
            inputs,
            targets,
        }
    }
}

impl DelayDataset {
    /// Build windows from pre-observed series. Series shorter than `L + 1` are rejected.
    pub fn from_series(meta: DatasetMeta, series: Vec<ObservedSeries>) -> Result<Self> {
        if !(meta.dt > 0.0) {
            return Err(Error::invalid("dt must be positive"));
        }
        if let Some((lo, hi)) = meta.cond_range {
            if !(hi > lo) {
                return Err(Error::invalid("conditioning range requires max > min"));
            }
        }
        let p = meta.obs_dim;
        let mut windows = Mat::zeros(0, meta.l * p);
        let mut targets = Mat::zeros(0, p);
        let mut origin = Vec::new();
        for (si, s) in series.iter().enumerate() {
            if s.values.cols() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    got: s.values.cols(),
                });
            }
            if s.times.len() != s.values.rows() {
                return Err(Error::DimensionMismatch {
                    expected: s.values.rows(),
                    got: s.times.len(),
                });
            }
            if s.cond.is_some() != meta.cond_range.is_some() {
                return Err(Error::invalid(format!(
                    "series {} conditioning does not match the dataset",
                    s.id
                )));
            }
            let (w, t) = delay_windows(&s.values, meta.l)?;
            for i in 0..w.rows() {
                windows.push_row(w.row(i));
                targets.push_row(t.row(i));
                origin.push(WindowOrigin { series: si, offset: i });
            }
        }
        Ok(DelayDataset {
            meta,
            series,
            windows,
            targets,
            origin,
        })
    }

    /// Observe trajectories through `h` and window them. `assign[i]` is the split of
    /// trajectory `i`; unused trajectories (`None`) are dropped.
    pub fn from_trajectories(
        trajs: &[Trajectory],
        h: &ObservationOperator,
        l: usize,
        assign: &[Option<Split>],
        zscore_each: bool,
    ) -> Result<Self> {
        if trajs.len() != assign.len() {
            return Err(Error::DimensionMismatch {
                expected: trajs.len(),
                got: assign.len(),
            });
        }
        let first = trajs
            .first()
            .ok_or_else(|| Error::invalid("no trajectories supplied"))?;
        let obs_dim = h.output_dim(first.dim())?;
        let dt = first.meta.dt;
        let mut series = Vec::new();
        for (i, (tr, a)) in trajs.iter().zip(assign).enumerate() {
            if a.is_none() {
                continue;
            }
            if (tr.meta.dt - dt).abs() > 1e-12 * dt {
                return Err(Error::invalid("trajectories have differing sampling intervals"));
            }
            let mut values = observe(tr, h)?;
            if zscore_each {
                values = zscore(&values).0;
            }
            series.push(ObservedSeries {
                id: i,
                times: tr.times.clone(),
                values,
                split: *a,
                cond: None,
            });
        }
        let meta = DatasetMeta {
            l,
            dt,
            observation: h.clone(),
            obs_dim,
            cond_range: None,
            zscored: zscore_each,
            intrinsic_dim: None,
        };
        Self::from_series(meta, series)
    }

    pub fn len(&self) -> usize {
        self.origin.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origin.is_empty()
    }

    pub fn window(&self, i: usize) -> &[f64] {
        self.windows.row(i)
    }

    pub fn target(&self, i: usize) -> &[f64] {
        self.targets.row(i)
    }

    pub fn origin(&self, i: usize) -> WindowOrigin {
        self.origin[i]
    }

    pub fn split_of(&self, i: usize) -> Option<Split> {
        self.series[self.origin[i].series].split
    }

    pub fn cond_of(&self, i: usize) -> Option<f64> {
        self.series[self.origin[i].series].cond
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.split_of(i) == Some(split)).collect()
    }

    /// Token width seen by the model: observed channels plus one conditioning channel.
    pub fn token_dim(&self) -> usize {
        self.meta.obs_dim + usize::from(self.meta.cond_range.is_some())
    }

    /// Dense inputs for one split (or all windows). The conditioning scalar is
    /// appended to every token.
    pub fn window_set(&self, split: Option<Split>) -> WindowSet {
        let idx: Vec<usize> = match split {
            Some(s) => self.indices(s),
            None => (0..self.len()).collect(),
        };
        self.window_set_for(&idx)
    }

    pub fn window_set_for(&self, idx: &[usize]) -> WindowSet {
        let p = self.meta.obs_dim;
        let td = self.token_dim();
        let l = self.meta.l;
        let mut inputs = Vec::with_capacity(idx.len() * l * td);
        let mut targets = Vec::with_capacity(idx.len() * p);
        for &i in idx {
            let w = self.window(i);
            let c = self.cond_of(i);
            for tok in 0..l {
                inputs.extend_from_slice(&w[tok * p..(tok + 1) * p]);
                if let Some(c) = c {
                    inputs.push(c);
                }
            }
            targets.extend_from_slice(self.target(i));
        }
        WindowSet {
            n: idx.len(),
            l,
            token_dim: td,
            out_dim: p,
            inputs,
            targets,
        }
    }

    /// Combine datasets with identical window length, sampling and channel layout.
    /// The first part's observation operator is recorded.
    pub fn concat(parts: Vec<DelayDataset>) -> Result<Self> {
        let mut it = parts.into_iter();
        let first = it.next().ok_or_else(|| Error::invalid("nothing to concatenate"))?;
        let meta = first.meta.clone();
        let mut series = first.series;
        for d in it {
            let m = &d.meta;
            if m.l != meta.l
                || m.obs_dim != meta.obs_dim
                || (m.dt - meta.dt).abs() > 1e-12 * meta.dt
                || m.cond_range != meta.cond_range
                || m.zscored != meta.zscored
            {
                return Err(Error::invalid("datasets are not compatible for concatenation"));
            }
            series.extend(d.series);
        }
        for (k, s) in series.iter_mut().enumerate() {
            s.id = k;
        }
        Self::from_series(meta, series)
    }

    pub fn with_intrinsic_dim(mut self, n: usize) -> Self {
        self.meta.intrinsic_dim = Some(n);
        self
    }

    /// Write one CSV per series (`t,y0,…`) plus `manifest.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let p = self.meta.obs_dim;
        let mut header = vec!["t".to_string()];
        header.extend((0..p).map(|j| format!("y{j}")));
        let hdr: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut entries = Vec::with_capacity(self.series.len());
        for s in &self.series {
            let file = format!("series_{:05}.csv", s.id);
            let rows = s.times.iter().enumerate().map(|(i, &t)| {
                let mut r = vec![t];
                r.extend_from_slice(s.values.row(i));
                r
            });
            let bytes = io::csv_bytes(&hdr, rows)?;
            io::write_atomic(&dir.join(&file), &bytes)?;
            entries.push(ManifestEntry {
                id: s.id,
                file,
                sha256: io::sha256_bytes(&bytes),
                split: s.split,
                cond: s.cond,
            });
        }
        let manifest = DatasetManifest {
            meta: self.meta.clone(),
            n_windows: self.len(),
            series: entries,
        };
        io::write_json(&dir.join("manifest.json"), &manifest)
    }

    /// Read a dataset written by [`DelayDataset::save`], verifying file hashes.
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: DatasetManifest = io::read_json(&dir.join("manifest.json"))?;
        let p = manifest.meta.obs_dim;
        let mut series = Vec::with_capacity(manifest.series.len());
        for e in &manifest.series {
            let path = dir.join(&e.file);
            if io::sha256_file(&path)? != e.sha256 {
                return Err(Error::HashMismatch {
                    path: path.display().to_string(),
                });
            }
            let (_, rows) = io::read_csv(&path)?;
            let mut values = Mat::zeros(0, p);
            let mut times = Vec::with_capacity(rows.len());
            for r in rows {
                if r.len() != p + 1 {
                    return Err(Error::DimensionMismatch {
                        expected: p + 1,
                        got: r.len(),
                    });
                }
                times.push(r[0]);
                values.push_row(&r[1..]);
            }
            series.push(ObservedSeries {
                id: e.id,
                times,
                values,
                split: e.split,
                cond: e.cond,
            });
        }
        let ds = Self::from_series(manifest.meta, series)?;
        if ds.len() != manifest.n_windows {
            return Err(Error::invalid("window count differs from manifest"));
        }
        Ok(ds)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestEntry {
    id: usize,
    file: String,
    sha256: String,
    split: Option<Split>,
    cond: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DatasetManifest {
    meta: DatasetMeta,
    n_windows: usize,
    series: Vec<ManifestEntry>,
}

/// Normalize `value` into `[0, 1]` over `range` and attach it to every window.
pub fn attach_parameter(mut ds: DelayDataset, value: f64, range: (f64, f64)) -> Result<DelayDataset> {
    let c = normalize_parameter(value, range)?;
    if let Some(r) = ds.meta.cond_range {
        if r != range {
            return Err(Error::invalid("dataset already conditioned on a different range"));
        }
    }
    ds.meta.cond_range = Some(range);
    for s in &mut ds.series {
        s.cond = Some(c);
    }
    Ok(ds)
}

/// `(value − min)/(max − min)`; values outside the range are rejected.
pub fn normalize_parameter(value: f64, (lo, hi): (f64, f64)) -> Result<f64> {
    if !(hi > lo) {
        return Err(Error::invalid("normalization range requires max > min"));
    }
    let tol = 1e-12 * (hi - lo);
    if !(value >= lo - tol && value <= hi + tol) {
        return Err(Error::invalid(format!(
            "parameter {value} outside normalization range [{lo}, {hi}]"
        )));
    }
    Ok(((value - lo) / (hi - lo)).clamp(0.0, 1.0))
}
