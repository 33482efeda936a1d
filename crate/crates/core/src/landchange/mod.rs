//! Land change modelling: change analysis, transition potentials from a small
//! perceptron, Markov quotas, hard allocation and three-map validation.

mod mlp;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use mlp::{
    evaluate, skill, target, train_mlp, variable_influence, Influence, InfluenceRow, MlpModel,
    MlpParams, Network, Performance, RmsRecord, HIDDEN, INPUTS, OUTPUTS, PARAM_COUNT,
};

use crate::drivers::{DriverStack, DRIVER_TITLES};
use crate::error::{Error, Result};
use crate::raster::{cross_tab, ClassGrid, CrossTab, FloatGrid, Legend, Rgba, CLASS_NODATA};

/// Transitions below this many cells are not modelled.
pub const DEFAULT_TRANSITION_THRESHOLD: u64 = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionSpec {
    pub from_class: u8,
    pub to_class: u8,
    pub cell_count: u64,
    pub included: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChangeAnalysis {
    pub table: CrossTab,
    /// Per class, in `table.classes` order.
    pub gains: Vec<u64>,
    pub losses: Vec<u64>,
    pub persistence: Vec<u64>,
    /// Every off-diagonal pair with at least one cell, row-major.
    pub transitions: Vec<TransitionSpec>,
}

impl ChangeAnalysis {
    pub fn gain(&self, class_id: u8) -> u64 {
        self.table.position(class_id).map_or(0, |i| self.gains[i])
    }

    pub fn loss(&self, class_id: u8) -> u64 {
        self.table.position(class_id).map_or(0, |i| self.losses[i])
    }
}

pub fn change_analysis(t1: &ClassGrid, t2: &ClassGrid) -> Result<ChangeAnalysis> {
    let table = cross_tab(t1, t2)?;
    let k = table.k();
    let diag: Vec<u64> = (0..k).map(|i| table.at(i, i)).collect();
    let rows = table.row_sums();
    let cols = table.col_sums();
    let mut transitions = Vec::new();
    for i in 0..k {
        for j in 0..k {
            let n = table.at(i, j);
            if i != j && n > 0 {
                transitions.push(TransitionSpec {
                    from_class: table.classes[i],
                    to_class: table.classes[j],
                    cell_count: n,
                    included: true,
                });
            }
        }
    }
    Ok(ChangeAnalysis {
        gains: (0..k).map(|i| cols[i] - diag[i]).collect(),
        losses: (0..k).map(|i| rows[i] - diag[i]).collect(),
        persistence: diag,
        transitions,
        table,
    })
}

/// Specs with at least `threshold` cells, marked included.
pub fn filter_transitions(specs: &[TransitionSpec], threshold: u64) -> Vec<TransitionSpec> {
    specs
        .iter()
        .filter(|s| s.cell_count >= threshold)
        .map(|s| TransitionSpec {
            included: true,
            ..*s
        })
        .collect()
}

/// All specs with `included` set against the threshold.
pub fn mark_transitions(specs: &[TransitionSpec], threshold: u64) -> Vec<TransitionSpec> {
    specs
        .iter()
        .map(|s| TransitionSpec {
            included: s.cell_count >= threshold,
            ..*s
        })
        .collect()
}

/// One labelled cell: raw and normalized driver values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub index: usize,
    pub raw: [f64; INPUTS],
    pub features: [f64; INPUTS],
    pub transition: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub from_class: u8,
    pub to_class: u8,
    pub norm_min: [f64; INPUTS],
    pub norm_max: [f64; INPUTS],
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl TrainingSet {
    pub fn disjoint(&self) -> bool {
        let train: std::collections::HashSet<usize> = self.train.iter().map(|s| s.index).collect();
        self.test.iter().all(|s| !train.contains(&s.index))
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Min-max scaling clamped to [0, 1]. A constant variable maps to 0.
pub fn normalize(raw: &[f64; INPUTS], min: &[f64; INPUTS], max: &[f64; INPUTS]) -> [f64; INPUTS] {
    let mut x = [0.0; INPUTS];
    for i in 0..INPUTS {
        let range = max[i] - min[i];
        x[i] = if range > 0.0 {
            ((raw[i] - min[i]) / range).clamp(0.0, 1.0)
        } else {
            0.0
        };
    }
    x
}

/// Equal-size seeded samples of cells that made `spec`'s transition and of
/// cells of its source class that persisted. Each group is split in half
/// between training and testing; normalization bounds come from the training
/// half.
pub fn build_training_set(
    t1: &ClassGrid,
    t2: &ClassGrid,
    drivers: &DriverStack,
    spec: &TransitionSpec,
    samples_per_class: usize,
    seed: u64,
) -> Result<TrainingSet> {
    if samples_per_class < 2 {
        return Err(Error::InvalidArgument("samples_per_class must be at least 2".into()));
    }
    t1.header().ensure_aligned(t2.header())?;
    t1.header().ensure_aligned(drivers.header())?;
    let mut changed = Vec::new();
    let mut stayed = Vec::new();
    for (i, (&a, &b)) in t1.cells().iter().zip(t2.cells()).enumerate() {
        if a != spec.from_class || drivers.sample(i).is_none() {
            continue;
        }
        if b == spec.to_class {
            changed.push(i);
        } else if b == spec.from_class {
            stayed.push(i);
        }
    }
    for (group, cells) in [("transition", &changed), ("persistence", &stayed)] {
        if cells.len() < samples_per_class {
            return Err(Error::InsufficientSamples {
                group,
                found: cells.len(),
                needed: samples_per_class,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pick = |cells: &[usize]| -> Vec<usize> {
        rand::seq::index::sample(&mut rng, cells.len(), samples_per_class)
            .into_iter()
            .map(|k| cells[k])
            .collect()
    };
    let changed = pick(&changed);
    let stayed = pick(&stayed);
    let raw = |i: usize| drivers.sample(i).expect("filtered to valid cells");
    let half = samples_per_class.div_ceil(2);
    let mut min = [f64::INFINITY; INPUTS];
    let mut max = [f64::NEG_INFINITY; INPUTS];
    for &i in changed[..half].iter().chain(&stayed[..half]) {
        for (v, r) in raw(i).iter().enumerate() {
            min[v] = min[v].min(*r);
            max[v] = max[v].max(*r);
        }
    }
    let make = |i: usize, transition: bool| {
        let raw = raw(i);
        Sample {
            index: i,
            raw,
            features: normalize(&raw, &min, &max),
            transition,
        }
    };
    let mut train = Vec::with_capacity(samples_per_class);
    let mut test = Vec::with_capacity(samples_per_class);
    for (cells, transition) in [(&changed, true), (&stayed, false)] {
        train.extend(cells[..half].iter().map(|&i| make(i, transition)));
        test.extend(cells[half..].iter().map(|&i| make(i, transition)));
    }
    Ok(TrainingSet {
        from_class: spec.from_class,
        to_class: spec.to_class,
        norm_min: min,
        norm_max: max,
        train,
        test,
    })
}

const POTENTIAL_NODATA: f64 = -9999.0;

/// Transition-neuron activation for every cell currently in the model's
/// source class; other cells are nodata.
pub fn transition_potential(model: &MlpModel, lulc: &ClassGrid, drivers: &DriverStack) -> Result<FloatGrid> {
    lulc.header().ensure_aligned(drivers.header())?;
    let cells = lulc
        .cells()
        .par_iter()
        .enumerate()
        .map(|(i, &c)| match drivers.sample(i) {
            Some(raw) if c == model.from_class => model.potential(&raw),
            _ => POTENTIAL_NODATA,
        })
        .collect();
    FloatGrid::new(lulc.header().with_nodata(POTENTIAL_NODATA), cells)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovMatrix {
    pub classes: Vec<u8>,
    /// Row-major, row-stochastic.
    pub p: Vec<f64>,
    pub base_years: f64,
}

impl MarkovMatrix {
    pub fn k(&self) -> usize {
        self.classes.len()
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.k() + j]
    }

    pub fn identity(classes: Vec<u8>, base_years: f64) -> Self {
        let k = classes.len();
        let p = (0..k * k).map(|x| if x / k == x % k { 1.0 } else { 0.0 }).collect();
        MarkovMatrix { classes, p, base_years }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.p.chunks(self.k()).map(|r| r.iter().sum()).collect()
    }

    fn multiply(&self, other: &[f64]) -> Vec<f64> {
        let k = self.k();
        let mut out = vec![0.0; k * k];
        for i in 0..k {
            for l in 0..k {
                let a = self.p[i * k + l];
                if a == 0.0 {
                    continue;
                }
                for j in 0..k {
                    out[i * k + j] += a * other[l * k + j];
                }
            }
        }
        out
    }

    /// `P^n` for a whole number of periods.
    pub fn power(&self, n: u32) -> Vec<f64> {
        let mut m = MarkovMatrix::identity(self.classes.clone(), self.base_years).p;
        for _ in 0..n {
            m = self.multiply(&m);
        }
        m
    }

    /// `(1 − f)·P^⌊s⌋ + f·P^⌈s⌉` for a fractional number of periods.
    pub fn effective(&self, steps: f64) -> Vec<f64> {
        let lo = steps.floor();
        let f = steps - lo;
        let a = self.power(lo as u32);
        if f == 0.0 {
            return a;
        }
        let b = self.multiply(&a);
        a.iter().zip(&b).map(|(x, y)| (1.0 - f) * x + f * y).collect()
    }
}

/// `P[i][j] = count(i → j) / count(i)`; classes absent at t1 get identity rows.
pub fn markov_from_crosstab(t1: &ClassGrid, t2: &ClassGrid, t1_year: f64, t2_year: f64) -> Result<MarkovMatrix> {
    if !(t2_year > t1_year) {
        return Err(Error::InvalidArgument(format!(
            "second year {t2_year} must follow the first {t1_year}"
        )));
    }
    Ok(markov_from_table(&cross_tab(t1, t2)?, t2_year - t1_year))
}

pub fn markov_from_table(table: &CrossTab, base_years: f64) -> MarkovMatrix {
    let k = table.k();
    let rows = table.row_sums();
    let mut p = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            p[i * k + j] = if rows[i] == 0 {
                f64::from(u8::from(i == j))
            } else {
                table.at(i, j) as f64 / rows[i] as f64
            };
        }
    }
    MarkovMatrix {
        classes: table.classes.clone(),
        p,
        base_years,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovProjection {
    pub classes: Vec<u8>,
    pub steps: f64,
    pub effective: Vec<f64>,
    /// Expected cells moving from class i to class j, row-major.
    pub quotas: Vec<f64>,
}

impl MarkovProjection {
    pub fn quota(&self, from: u8, to: u8) -> f64 {
        let k = self.classes.len();
        match (self.classes.binary_search(&from), self.classes.binary_search(&to)) {
            (Ok(i), Ok(j)) => self.quotas[i * k + j],
            _ => 0.0,
        }
    }

    /// Expected class totals after the projection.
    pub fn expected_counts(&self) -> Vec<f64> {
        let k = self.classes.len();
        (0..k).map(|j| (0..k).map(|i| self.quotas[i * k + j]).sum()).collect()
    }
}

/// Per-class cell counts, for every legend class.
pub fn class_counts(grid: &ClassGrid) -> BTreeMap<u8, u64> {
    let mut counts: BTreeMap<u8, u64> = grid.legend().ids().map(|id| (id, 0)).collect();
    for &c in grid.cells() {
        if c != grid.nodata() {
            *counts.entry(c).or_default() += 1;
        }
    }
    counts
}

pub fn project_markov(
    p: &MarkovMatrix,
    counts: &BTreeMap<u8, u64>,
    base_year: f64,
    target_year: f64,
) -> Result<MarkovProjection> {
    if !(target_year > base_year) {
        return Err(Error::InvalidArgument(format!(
            "target year {target_year} must follow the base year {base_year}"
        )));
    }
    let steps = (target_year - base_year) / p.base_years;
    let effective = p.effective(steps);
    let k = p.k();
    let mut quotas = vec![0.0; k * k];
    for i in 0..k {
        let n = counts.get(&p.classes[i]).copied().unwrap_or(0) as f64;
        for j in 0..k {
            quotas[i * k + j] = n * effective[i * k + j];
        }
    }
    Ok(MarkovProjection {
        classes: p.classes.clone(),
        steps,
        effective,
        quotas,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shortfall {
    pub from_class: u8,
    pub to_class: u8,
    pub requested: u64,
    pub converted: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub grid: ClassGrid,
    /// Cells converted per transition, in input order.
    pub converted: Vec<(TransitionSpec, u64)>,
    pub shortfalls: Vec<Shortfall>,
}

/// Hard allocation. For each included transition, the `round(quota)` cells of
/// its source class with the highest potential convert, ties by row-major
/// index. A cell converts at most once.
pub fn allocate(
    lulc_base: &ClassGrid,
    potentials: &[(TransitionSpec, FloatGrid)],
    quotas: &MarkovProjection,
) -> Result<Allocation> {
    let mut cells = lulc_base.cells().to_vec();
    let mut touched = vec![false; cells.len()];
    let mut converted = Vec::new();
    let mut shortfalls = Vec::new();
    for (spec, potential) in potentials {
        lulc_base.header().ensure_aligned(potential.header())?;
        if !spec.included {
            continue;
        }
        if !lulc_base.legend().contains(spec.to_class) {
            return Err(Error::InvalidArgument(format!(
                "target class {} is not in the legend",
                spec.to_class
            )));
        }
        let q = quotas.quota(spec.from_class, spec.to_class).round().max(0.0) as u64;
        let mut eligible: Vec<(f64, usize)> = lulc_base
            .cells()
            .iter()
            .enumerate()
            .filter(|&(i, &c)| c == spec.from_class && !touched[i])
            .filter_map(|(i, _)| potential.value(i).map(|v| (v, i)))
            .collect();
        eligible.par_sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let n = (q as usize).min(eligible.len());
        for &(_, i) in &eligible[..n] {
            cells[i] = spec.to_class;
            touched[i] = true;
        }
        if (n as u64) < q {
            log::warn!(
                "transition {}->{}: quota {q} exceeds {} eligible cells",
                spec.from_class,
                spec.to_class,
                eligible.len()
            );
            shortfalls.push(Shortfall {
                from_class: spec.from_class,
                to_class: spec.to_class,
                requested: q,
                converted: n as u64,
            });
        }
        converted.push((*spec, n as u64));
    }
    Ok(Allocation {
        grid: lulc_base.with_cells(cells)?,
        converted,
        shortfalls,
    })
}

pub const CORRECT_REJECTION: u8 = 0;
pub const HIT: u8 = 1;
pub const MISS: u8 = 2;
pub const FALSE_ALARM: u8 = 3;

pub fn validation_legend() -> Legend {
    Legend::new()
        .with(CORRECT_REJECTION, "correct rejection", Rgba([0xdd, 0xdd, 0xdd, 0xff]))
        .with(HIT, "hit", Rgba([0x1a, 0x96, 0x41, 0xff]))
        .with(MISS, "miss", Rgba([0xd7, 0x19, 0x1c, 0xff]))
        .with(FALSE_ALARM, "false alarm", Rgba([0xfd, 0xae, 0x61, 0xff]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationCounts {
    pub hits: u64,
    pub misses: u64,
    pub false_alarms: u64,
    pub correct_rejections: u64,
}

impl ValidationCounts {
    pub fn total(&self) -> u64 {
        self.hits + self.misses + self.false_alarms + self.correct_rejections
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationMap {
    pub grid: ClassGrid,
    pub counts: ValidationCounts,
}

/// Compare predicted against observed change since `observed_t2`.
pub fn validate_three_map(
    observed_t2: &ClassGrid,
    predicted_t3: &ClassGrid,
    observed_t3: &ClassGrid,
) -> Result<ValidationMap> {
    let h = observed_t2.header();
    h.ensure_aligned(predicted_t3.header())?;
    h.ensure_aligned(observed_t3.header())?;
    let mut counts = ValidationCounts {
        hits: 0,
        misses: 0,
        false_alarms: 0,
        correct_rejections: 0,
    };
    let cells = (0..h.len())
        .map(|i| {
            let (Some(a), Some(p), Some(o)) =
                (observed_t2.value(i), predicted_t3.value(i), observed_t3.value(i))
            else {
                return CLASS_NODATA;
            };
            let (obs, pred) = (a != o, a != p);
            let (class, slot) = match (obs, pred) {
                (true, true) => (HIT, &mut counts.hits),
                (true, false) => (MISS, &mut counts.misses),
                (false, true) => (FALSE_ALARM, &mut counts.false_alarms),
                (false, false) => (CORRECT_REJECTION, &mut counts.correct_rejections),
            };
            *slot += 1;
            class
        })
        .collect();
    let grid = ClassGrid::new(h.with_nodata(CLASS_NODATA as f64), cells, validation_legend())?;
    Ok(ValidationMap { grid, counts })
}

fn class_name(legend: &Legend, id: u8) -> String {
    legend.get(id).map_or(format!("class {id}"), |c| c.name.clone())
}

/// Model parameters and performance as `parameter,value` rows.
pub fn parameters_csv(model: &MlpModel) -> String {
    let p = &model.params;
    let rms = model.final_rms();
    let rows: [(&str, String); 13] = [
        ("input_layer_neurons", INPUTS.to_string()),
        ("hidden_layer_neurons", HIDDEN.to_string()),
        ("output_layer_neurons", OUTPUTS.to_string()),
        ("requested_samples_per_class", p.samples_per_class.to_string()),
        ("final_learning_rate", format!("{}", model.final_learning_rate())),
        ("momentum_factor", format!("{}", p.momentum)),
        ("sigmoid_constant", format!("{}", p.sigmoid_c)),
        ("acceptable_rms", format!("{}", p.target_rms)),
        ("iterations", model.epochs().to_string()),
        ("training_rms", format!("{:.4}", rms.train)),
        ("testing_rms", format!("{:.4}", rms.test)),
        ("accuracy_pct", format!("{:.2}", 100.0 * model.performance.accuracy)),
        ("skill_measure", format!("{:.4}", model.performance.skill)),
    ];
    let mut s = String::from("parameter,value\n");
    for (k, v) in rows {
        let _ = writeln!(s, "{k},{v}");
    }
    s
}

/// Per-group skill: the transition and the persistence of its source class.
pub fn class_skill_csv(model: &MlpModel, legend: &Legend) -> String {
    let (from, to) = (class_name(legend, model.from_class), class_name(legend, model.to_class));
    format!(
        "class,skill_measure\n\"Transition : {from} to {to}\",{:.4}\n\"Persistence : {from}\",{:.4}\n",
        model.performance.transition_skill, model.performance.persistence_skill
    )
}

pub fn forced_constant_csv(influence: &Influence) -> String {
    let mut s = String::from("model,accuracy_pct,skill_measure,influence_order\n");
    let all = &influence.all_variables;
    let _ = writeln!(s, "With all variables,{:.2},{:.4},", 100.0 * all.accuracy, all.skill);
    for r in &influence.forced_constant {
        let _ = writeln!(
            s,
            "Var. {} constant ({}),{:.2},{:.4},{}",
            r.variable + 1,
            DRIVER_TITLES[r.variable],
            100.0 * r.accuracy,
            r.skill,
            r.order.map_or(String::new(), |o| o.to_string())
        );
    }
    s
}

pub fn all_but_one_csv(influence: &Influence) -> String {
    let mut s = String::from("model,accuracy_pct,skill_measure\n");
    let all = &influence.all_variables;
    let _ = writeln!(s, "With all variables,{:.2},{:.4}", 100.0 * all.accuracy, all.skill);
    for r in &influence.all_but_one {
        let _ = writeln!(
            s,
            "All constant but var. {} ({}),{:.2},{:.4}",
            r.variable + 1,
            DRIVER_TITLES[r.variable],
            100.0 * r.accuracy,
            r.skill
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::GridHeader;

    fn grid(cells: Vec<u8>) -> ClassGrid {
        let h = GridHeader::new(cells.len(), 1, 1.0, 0.0, 0.0, "t", 255.0).unwrap();
        ClassGrid::new(h, cells, Legend::generic([1, 2, 3])).unwrap()
    }

    #[test]
    fn skill_matches_table() {
        assert!((skill(0.6760, 2) - 0.3520).abs() < 5e-5);
        assert_eq!(skill(0.5, 2), 0.0);
        assert_eq!(skill(1.0, 2), 1.0);
    }

    #[test]
    fn single_cell_change() {
        let a = change_analysis(&grid(vec![1, 1, 2]), &grid(vec![2, 1, 2])).unwrap();
        assert_eq!(a.gain(2), 1);
        assert_eq!(a.loss(1), 1);
        assert_eq!(
            a.transitions,
            vec![TransitionSpec { from_class: 1, to_class: 2, cell_count: 1, included: true }]
        );
    }

    #[test]
    fn quarter_of_class_one_moves() {
        let t1 = grid(vec![1, 1, 1, 1, 2]);
        let t2 = grid(vec![1, 2, 1, 1, 2]);
        let m = markov_from_crosstab(&t1, &t2, 1991.0, 2006.0).unwrap();
        assert_eq!(&m.p[0..3], &[0.75, 0.25, 0.0]);
        assert_eq!(&m.p[6..9], &[0.0, 0.0, 1.0], "absent class keeps an identity row");
        assert_eq!(m.base_years, 15.0);
    }

    #[test]
    fn fractional_steps_interpolate() {
        let m = MarkovMatrix { classes: vec![1, 2], p: vec![0.5, 0.5, 0.0, 1.0], base_years: 10.0 };
        let e = m.effective(1.5);
        // P = [[.5,.5],[0,1]], P² = [[.25,.75],[0,1]]
        assert!((e[0] - 0.375).abs() < 1e-15);
        assert!((e[1] - 0.625).abs() < 1e-15);
    }

    #[test]
    fn allocation_clamps_with_shortfall() {
        let base = grid(vec![1, 1, 2]);
        let pot = FloatGrid::new(base.header().with_nodata(-9999.0), vec![0.2, 0.9, -9999.0]).unwrap();
        let spec = TransitionSpec { from_class: 1, to_class: 3, cell_count: 9, included: true };
        let proj = MarkovProjection {
            classes: vec![1, 2, 3],
            steps: 1.0,
            effective: vec![],
            quotas: vec![0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        };
        let a = allocate(&base, &[(spec, pot)], &proj).unwrap();
        assert_eq!(a.grid.cells(), &[3, 3, 2]);
        assert_eq!(a.shortfalls.len(), 1);
        assert_eq!(a.shortfalls[0].converted, 2);
    }
}
