//! Supervised maximum-likelihood classification and accuracy assessment.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inundation::{SlrScenario, WET};
use crate::raster::{resample_nearest, ClassGrid, FloatGrid, GridHeader, Legend, Rgba, CLASS_NODATA};

pub const WATERBODIES: u8 = 1;
pub const TREES: u8 = 2;
pub const GRASSLAND: u8 = 3;
pub const BUILT: u8 = 4;
pub const BARE_EARTH: u8 = 5;

/// The five land-cover classes of the study.
pub fn lulc_legend() -> Legend {
    Legend::new()
        .with(WATERBODIES, "Waterbodies", Rgba([0x41, 0x9b, 0xdf, 0xff]))
        .with(TREES, "Trees", Rgba([0x39, 0x7d, 0x49, 0xff]))
        .with(GRASSLAND, "Grassland", Rgba([0x88, 0xb0, 0x53, 0xff]))
        .with(BUILT, "Buildings or Roads", Rgba([0xc4, 0x28, 0x1b, 0xff]))
        .with(BARE_EARTH, "Bare Earth", Rgba([0xa5, 0x9b, 0x8f, 0xff]))
}

/// Aligned spectral bands.
#[derive(Debug, Clone, PartialEq)]
pub struct BandStack {
    names: Vec<String>,
    bands: Vec<FloatGrid>,
}

impl BandStack {
    pub fn new(names: Vec<String>, bands: Vec<FloatGrid>) -> Result<Self> {
        if bands.is_empty() || names.len() != bands.len() {
            return Err(Error::InvalidArgument(format!(
                "band stack needs one name per band and at least one band ({} names, {} bands)",
                names.len(),
                bands.len()
            )));
        }
        for b in &bands[1..] {
            bands[0].header().ensure_aligned(b.header())?;
        }
        Ok(BandStack { names, bands })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn bands(&self) -> &[FloatGrid] {
        &self.bands
    }

    pub fn len(&self) -> usize {
        self.bands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bands.is_empty()
    }

    pub fn header(&self) -> &GridHeader {
        self.bands[0].header()
    }

    /// Fill `out` with the pixel vector at a cell; `false` if any band is nodata.
    pub fn pixel(&self, index: usize, out: &mut [f64]) -> bool {
        for (slot, b) in out.iter_mut().zip(&self.bands) {
            match b.value(index) {
                Some(v) => *slot = v,
                None => return false,
            }
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSignature {
    pub class_id: u8,
    pub mean: Vec<f64>,
    /// Row-major covariance, `bands × bands`.
    pub covariance: Vec<f64>,
    pub samples: usize,
}

impl ClassSignature {
    pub fn bands(&self) -> usize {
        self.mean.len()
    }
}

/// Per-class mean and sample covariance (denominator `n - 1`) from the
/// labelled cells of `training`. Cells with any nodata band are skipped.
pub fn fit_signatures(stack: &BandStack, training: &ClassGrid) -> Result<Vec<ClassSignature>> {
    stack.header().ensure_aligned(training.header())?;
    let b = stack.len();
    let mut groups: BTreeMap<u8, Vec<f64>> = BTreeMap::new();
    let mut px = vec![0.0; b];
    for (i, &c) in training.cells().iter().enumerate() {
        if c == training.nodata() || !stack.pixel(i, &mut px) {
            continue;
        }
        groups.entry(c).or_default().extend_from_slice(&px);
    }
    groups
        .into_iter()
        .map(|(class_id, xs)| {
            let n = xs.len() / b;
            if n < b + 1 {
                return Err(Error::InsufficientTraining {
                    class: class_id,
                    found: n,
                    needed: b + 1,
                });
            }
            let mut mean = vec![0.0; b];
            for x in xs.chunks_exact(b) {
                for (m, v) in mean.iter_mut().zip(x) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= n as f64);
            let mut cov = vec![0.0; b * b];
            for x in xs.chunks_exact(b) {
                for i in 0..b {
                    for j in 0..b {
                        cov[i * b + j] += (x[i] - mean[i]) * (x[j] - mean[j]);
                    }
                }
            }
            cov.iter_mut().for_each(|v| *v /= (n - 1) as f64);
            Ok(ClassSignature {
                class_id,
                mean,
                covariance: cov,
                samples: n,
            })
        })
        .collect()
}

/// A signature ready for evaluation: inverse covariance and log-determinant.
#[derive(Debug, Clone)]
struct Prepared {
    class_id: u8,
    mean: DVector<f64>,
    inverse: DMatrix<f64>,
    constant: f64,
}

const DET_FLOOR: f64 = 1e-12;
const RIDGE: f64 = 1e-6;

fn prepare(sig: &ClassSignature, prior: f64) -> Result<Prepared> {
    let b = sig.bands();
    let mut cov = DMatrix::from_row_slice(b, b, &sig.covariance);
    if cov.determinant().abs() < DET_FLOOR {
        let ridge = RIDGE * cov.trace() / b as f64;
        for i in 0..b {
            cov[(i, i)] += ridge;
        }
    }
    let chol = cov
        .cholesky()
        .ok_or(Error::SingularCovariance(sig.class_id))?;
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    if !log_det.is_finite() {
        return Err(Error::SingularCovariance(sig.class_id));
    }
    Ok(Prepared {
        class_id: sig.class_id,
        mean: DVector::from_column_slice(&sig.mean),
        inverse: chol.inverse(),
        constant: prior.ln() - 0.5 * log_det,
    })
}

/// Maximum-likelihood classifier over a fixed set of signatures.
#[derive(Debug, Clone)]
pub struct MaxLikelihood {
    classes: Vec<Prepared>,
}

impl MaxLikelihood {
    /// `priors` maps class id to prior probability; missing ids and `None` mean equal priors.
    pub fn new(signatures: &[ClassSignature], priors: Option<&BTreeMap<u8, f64>>) -> Result<Self> {
        if signatures.is_empty() {
            return Err(Error::InvalidArgument("no class signatures".into()));
        }
        let equal = 1.0 / signatures.len() as f64;
        let mut sorted: Vec<&ClassSignature> = signatures.iter().collect();
        sorted.sort_by_key(|s| s.class_id);
        let classes = sorted
            .into_iter()
            .map(|s| {
                let p = priors.and_then(|p| p.get(&s.class_id).copied()).unwrap_or(equal);
                if !(p > 0.0 && p.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "prior for class {} must be positive",
                        s.class_id
                    )));
                }
                prepare(s, p)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MaxLikelihood { classes })
    }

    /// Discriminant `ln p − ½ln|Σ| − ½(x−μ)ᵀΣ⁻¹(x−μ)` for each class, ascending id.
    pub fn discriminants(&self, x: &[f64]) -> Vec<(u8, f64)> {
        let x = DVector::from_column_slice(x);
        self.classes
            .iter()
            .map(|c| {
                let d = &x - &c.mean;
                (c.class_id, c.constant - 0.5 * (d.transpose() * &c.inverse * &d)[(0, 0)])
            })
            .collect()
    }

    /// Best class; ties go to the lowest id.
    pub fn predict(&self, x: &[f64]) -> u8 {
        let mut best = (CLASS_NODATA, f64::NEG_INFINITY);
        for (id, g) in self.discriminants(x) {
            if g > best.1 || best.0 == CLASS_NODATA {
                best = (id, g);
            }
        }
        best.0
    }

    pub fn class_ids(&self) -> Vec<u8> {
        self.classes.iter().map(|c| c.class_id).collect()
    }

    /// Label every cell. Missing legend entries are filled with generic ones.
    pub fn classify(&self, stack: &BandStack, legend: &Legend) -> Result<ClassGrid> {
        let header = stack.header();
        let b = stack.len();
        let ncols = header.ncols;
        let mut cells = vec![CLASS_NODATA; header.len()];
        cells.par_chunks_mut(ncols).enumerate().for_each(|(r, row)| {
            let mut px = vec![0.0; b];
            for (c, out) in row.iter_mut().enumerate() {
                if stack.pixel(r * ncols + c, &mut px) {
                    *out = self.predict(&px);
                }
            }
        });
        let mut legend = legend.clone();
        let generic = Legend::generic(self.class_ids());
        for (id, info) in generic.iter() {
            if !legend.contains(id) {
                legend.insert(id, &info.name, info.color);
            }
        }
        ClassGrid::new(header.with_nodata(CLASS_NODATA as f64), cells, legend)
    }
}

pub fn maxlike_classify(
    stack: &BandStack,
    signatures: &[ClassSignature],
    priors: Option<&BTreeMap<u8, f64>>,
    legend: &Legend,
) -> Result<ClassGrid> {
    MaxLikelihood::new(signatures, priors)?.classify(stack, legend)
}

/// Text manifest: a `bands` line, then per class `class`, `mean` and row-major `cov` lines.
pub fn write_signatures(signatures: &[ClassSignature], band_names: &[String], path: &Path) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "bands\t{}\t{}", band_names.len(), band_names.join("\t"));
    for sig in signatures {
        let _ = writeln!(s, "class\t{}\t{}", sig.class_id, sig.samples);
        let join = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join("\t");
        let _ = writeln!(s, "mean\t{}", join(&sig.mean));
        let _ = writeln!(s, "cov\t{}", join(&sig.covariance));
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_signatures(path: &Path) -> Result<(Vec<String>, Vec<ClassSignature>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ctx = path.display().to_string();
    let bad = |msg: String| Error::parse(ctx.clone(), msg);
    let mut lines = text.lines().map(|l| l.split('\t').collect::<Vec<_>>());
    let head = lines.next().ok_or_else(|| bad("empty file".into()))?;
    if head.first() != Some(&"bands") || head.len() < 2 {
        return Err(bad("expected a `bands` line".into()));
    }
    let b: usize = head[1].parse().map_err(|_| bad(format!("bad band count `{}`", head[1])))?;
    let names: Vec<String> = head[2..].iter().map(|s| s.to_string()).collect();
    if names.len() != b {
        return Err(bad("band name count mismatch".into()));
    }
    let floats = |fields: &[&str], tag: &str, n: usize| -> Result<Vec<f64>> {
        if fields.first() != Some(&tag) || fields.len() != n + 1 {
            return Err(bad(format!("expected `{tag}` with {n} values")));
        }
        fields[1..]
            .iter()
            .map(|v| v.parse().map_err(|_| bad(format!("bad number `{v}`"))))
            .collect()
    };
    let mut sigs = Vec::new();
    while let Some(class) = lines.next() {
        if class.first() != Some(&"class") || class.len() != 3 {
            return Err(bad("expected a `class` line".into()));
        }
        let class_id = class[1].parse().map_err(|_| bad(format!("bad class `{}`", class[1])))?;
        let samples = class[2].parse().map_err(|_| bad(format!("bad count `{}`", class[2])))?;
        let mean = floats(&lines.next().unwrap_or_default(), "mean", b)?;
        let covariance = floats(&lines.next().unwrap_or_default(), "cov", b * b)?;
        sigs.push(ClassSignature {
            class_id,
            mean,
            covariance,
            samples,
        });
    }
    Ok((names, sigs))
}

/// A labelled assessment location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint {
    pub row: usize,
    pub col: usize,
    pub x: f64,
    pub y: f64,
    pub reference: u8,
}

/// Points per class: proportional to class area, at least `min(10, n/k)` and
/// at most the class size, summing to exactly `n`.
pub fn stratified_allocation(sizes: &BTreeMap<u8, usize>, n: usize) -> Result<BTreeMap<u8, usize>> {
    let k = sizes.len();
    let available: usize = sizes.values().sum();
    if k == 0 || n < k {
        return Err(Error::Allocation {
            requested: n,
            reason: format!("need at least one point for each of {k} classes"),
        });
    }
    if n > available {
        return Err(Error::Allocation {
            requested: n,
            reason: format!("only {available} data cells to sample"),
        });
    }
    let floor = |size: usize| size.min(10).min(n / k);
    let mut fixed: BTreeMap<u8, usize> = BTreeMap::new();
    loop {
        let budget = (n - fixed.values().sum::<usize>()) as u128;
        let free: Vec<(u8, usize)> = sizes
            .iter()
            .filter(|(id, _)| !fixed.contains_key(id))
            .map(|(&id, &s)| (id, s))
            .collect();
        let total: u128 = free.iter().map(|&(_, s)| s as u128).sum();
        let mut changed = false;
        for &(id, s) in &free {
            // share = budget * s / total, compared exactly
            let num = budget * s as u128;
            if num < floor(s) as u128 * total {
                fixed.insert(id, floor(s));
                changed = true;
            } else if num > s as u128 * total {
                fixed.insert(id, s);
                changed = true;
            }
        }
        if !changed {
            let mut out = fixed;
            let mut rem: Vec<(u128, u8)> = Vec::new();
            let mut given = 0u128;
            for &(id, s) in &free {
                let num = budget * s as u128;
                out.insert(id, (num / total) as usize);
                given += num / total;
                rem.push((num % total, id));
            }
            rem.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
            for &(_, id) in rem.iter().take((budget - given) as usize) {
                *out.get_mut(&id).expect("free class") += 1;
            }
            return Ok(out);
        }
    }
}

/// Stratified random points without replacement, deterministic for a seed.
pub fn stratified_sample(reference: &ClassGrid, n_points: usize, seed: u64) -> Result<Vec<SamplePoint>> {
    let mut by_class: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for (i, &c) in reference.cells().iter().enumerate() {
        if c != reference.nodata() {
            by_class.entry(c).or_default().push(i);
        }
    }
    let sizes = by_class.iter().map(|(&k, v)| (k, v.len())).collect();
    let quotas = stratified_allocation(&sizes, n_points)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = reference.header();
    let mut points = Vec::with_capacity(n_points);
    for (id, cells) in &by_class {
        let mut picked = rand::seq::index::sample(&mut rng, cells.len(), quotas[id]).into_vec();
        picked.sort_unstable();
        for p in picked {
            let (row, col) = h.row_col(cells[p]);
            let (x, y) = h.cell_center(row, col);
            points.push(SamplePoint {
                row,
                col,
                x,
                y,
                reference: *id,
            });
        }
    }
    Ok(points)
}

/// Rows are reference classes, columns predicted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<u8>,
    /// Row-major `k × k`.
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u8, u8)>, classes: &[u8]) -> Self {
        let mut classes = classes.to_vec();
        let pairs: Vec<(u8, u8)> = pairs.into_iter().collect();
        classes.extend(pairs.iter().flat_map(|&(a, b)| [a, b]));
        classes.sort_unstable();
        classes.dedup();
        let k = classes.len();
        let pos = |id: u8| classes.binary_search(&id).expect("class listed");
        let mut counts = vec![0; k * k];
        for (r, p) in pairs {
            counts[pos(r) * k + pos(p)] += 1;
        }
        ConfusionMatrix { classes, counts }
    }

    pub fn from_rows(classes: Vec<u8>, rows: &[Vec<u64>]) -> Self {
        let counts = rows.iter().flatten().copied().collect();
        ConfusionMatrix { classes, counts }
    }

    pub fn k(&self) -> usize {
        self.classes.len()
    }

    pub fn at(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.k() + j]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        let k = self.k();
        (0..k).map(|i| (0..k).map(|j| self.at(i, j)).sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        let k = self.k();
        (0..k).map(|j| (0..k).map(|i| self.at(i, j)).sum()).collect()
    }

    pub fn diagonal(&self) -> Vec<u64> {
        (0..self.k()).map(|i| self.at(i, i)).collect()
    }

    pub fn overall_accuracy(&self) -> f64 {
        self.diagonal().iter().sum::<u64>() as f64 / self.total() as f64
    }

    /// Chance agreement `Σ row·col / N²`.
    pub fn expected_agreement(&self) -> f64 {
        let n = self.total() as f64;
        self.row_sums()
            .iter()
            .zip(self.col_sums())
            .map(|(&r, c)| r as f64 * c as f64)
            .sum::<f64>()
            / (n * n)
    }

    /// Cohen's kappa. When chance agreement is total, agreement is too, and kappa is 1.
    pub fn kappa(&self) -> f64 {
        let p_e = self.expected_agreement();
        if p_e == 1.0 {
            return 1.0;
        }
        (self.overall_accuracy() - p_e) / (1.0 - p_e)
    }

    /// Diagonal over column sums; `None` for classes never predicted.
    pub fn users_accuracy(&self) -> Vec<Option<f64>> {
        ratio(&self.diagonal(), &self.col_sums())
    }

    /// Diagonal over row sums; `None` for classes absent from the reference.
    pub fn producers_accuracy(&self) -> Vec<Option<f64>> {
        ratio(&self.diagonal(), &self.row_sums())
    }
}

fn ratio(num: &[u64], den: &[u64]) -> Vec<Option<f64>> {
    num.iter()
        .zip(den)
        .map(|(&a, &b)| (b > 0).then(|| a as f64 / b as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub matrix: ConfusionMatrix,
    pub overall_accuracy: f64,
    pub kappa: f64,
    pub users_accuracy: Vec<Option<f64>>,
    pub producers_accuracy: Vec<Option<f64>>,
}

impl Assessment {
    pub fn from_matrix(matrix: ConfusionMatrix) -> Result<Self> {
        if matrix.total() == 0 {
            return Err(Error::EmptyAssessment);
        }
        Ok(Assessment {
            overall_accuracy: matrix.overall_accuracy(),
            kappa: matrix.kappa(),
            users_accuracy: matrix.users_accuracy(),
            producers_accuracy: matrix.producers_accuracy(),
            matrix,
        })
    }

    /// Matrix, marginals and per-class accuracies as CSV.
    pub fn to_csv(&self, legend: &Legend) -> String {
        let m = &self.matrix;
        let name = |id: u8| legend.get(id).map_or(format!("class {id}"), |c| c.name.clone());
        let pct = |v: Option<f64>| v.map_or(String::new(), |v| format!("{:.4}", v));
        let mut s = String::from("reference\\predicted");
        for &id in &m.classes {
            let _ = write!(s, ",{}", name(id));
        }
        s.push_str(",total,producers_accuracy\n");
        let rows = m.row_sums();
        for (i, &id) in m.classes.iter().enumerate() {
            let _ = write!(s, "{}", name(id));
            for j in 0..m.k() {
                let _ = write!(s, ",{}", m.at(i, j));
            }
            let _ = writeln!(s, ",{},{}", rows[i], pct(self.producers_accuracy[i]));
        }
        s.push_str("total");
        for c in m.col_sums() {
            let _ = write!(s, ",{c}");
        }
        let _ = writeln!(s, ",{},", m.total());
        s.push_str("users_accuracy");
        for u in &self.users_accuracy {
            let _ = write!(s, ",{}", pct(*u));
        }
        s.push_str(",,\n");
        let _ = writeln!(s, "overall_accuracy,{:.4}", self.overall_accuracy);
        let _ = writeln!(s, "kappa,{:.4}", self.kappa);
        s
    }

    pub fn report_text(&self, legend: &Legend) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "Accuracy assessment ({} points)", self.matrix.total());
        let _ = writeln!(s, "  overall accuracy  {:.2}%", 100.0 * self.overall_accuracy);
        let _ = writeln!(s, "  kappa coefficient {:.2}%", 100.0 * self.kappa);
        let _ = writeln!(s, "  class                 user's   producer's");
        for (i, &id) in self.matrix.classes.iter().enumerate() {
            let name = legend.get(id).map_or(format!("class {id}"), |c| c.name.clone());
            let f = |v: Option<f64>| v.map_or("   n/a".to_string(), |v| format!("{:6.2}%", 100.0 * v));
            let _ = writeln!(
                s,
                "  {:<20} {}  {}",
                name,
                f(self.users_accuracy[i]),
                f(self.producers_accuracy[i])
            );
        }
        s
    }
}

/// Cross-tabulate predicted labels at the reference points.
pub fn assess(predicted: &ClassGrid, points: &[SamplePoint]) -> Result<Assessment> {
    if points.is_empty() {
        return Err(Error::EmptyAssessment);
    }
    let h = predicted.header();
    let mut pairs = Vec::with_capacity(points.len());
    for p in points {
        if p.row >= h.nrows || p.col >= h.ncols {
            return Err(Error::InvalidPoint {
                row: p.row,
                col: p.col,
                reason: "outside the grid".into(),
            });
        }
        let v = predicted.get(p.row, p.col).ok_or_else(|| Error::InvalidPoint {
            row: p.row,
            col: p.col,
            reason: "predicted cell is nodata".into(),
        })?;
        pairs.push((p.reference, v));
    }
    let classes: Vec<u8> = predicted.legend().ids().collect();
    Assessment::from_matrix(ConfusionMatrix::from_pairs(pairs, &classes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassShare {
    pub class_id: u8,
    pub name: String,
    pub cells: u64,
    pub pct: f64,
}

/// Land-cover composition of the inundated cells. The coarser of the two
/// grids is resampled (nearest) onto the finer one first.
pub fn lulc_under_slr(lulc: &ClassGrid, scenario: &SlrScenario) -> Result<Vec<ClassShare>> {
    let mask = &scenario.mask;
    let (lulc, mask) = if lulc.header().is_aligned(mask.header()) {
        (lulc.clone(), mask.clone())
    } else if lulc.header().cell_size >= mask.header().cell_size {
        (resample_nearest(lulc, mask.header())?, mask.clone())
    } else {
        (lulc.clone(), resample_nearest(mask, lulc.header())?)
    };
    let mut counts: BTreeMap<u8, u64> = lulc.legend().ids().map(|id| (id, 0)).collect();
    for (&m, &c) in mask.cells().iter().zip(lulc.cells()) {
        if m == WET && c != lulc.nodata() {
            *counts.entry(c).or_default() += 1;
        }
    }
    Ok(shares_from_counts(&counts, lulc.legend()))
}

/// Percentages of a per-class count table; zero total gives zero percentages.
pub fn shares_from_counts(counts: &BTreeMap<u8, u64>, legend: &Legend) -> Vec<ClassShare> {
    let total: u64 = counts.values().sum();
    counts
        .iter()
        .map(|(&id, &cells)| ClassShare {
            class_id: id,
            name: legend.get(id).map_or(format!("class {id}"), |c| c.name.clone()),
            cells,
            pct: if total == 0 {
                0.0
            } else {
                100.0 * cells as f64 / total as f64
            },
        })
        .collect()
}
