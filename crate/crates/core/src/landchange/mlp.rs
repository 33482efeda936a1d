//! A 6–7–2 sigmoid perceptron trained by online backpropagation with momentum.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Sample, TrainingSet};
use crate::error::{Error, Result};

pub const INPUTS: usize = 6;
pub const HIDDEN: usize = 7;
pub const OUTPUTS: usize = 2;

/// Hyperparameters. The defaults are the published settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpParams {
    pub lr_start: f64,
    pub lr_end: f64,
    pub momentum: f64,
    pub sigmoid_c: f64,
    pub max_iter: usize,
    pub target_rms: f64,
    pub samples_per_class: usize,
    pub seed: u64,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            lr_start: 0.01,
            lr_end: 0.0005,
            momentum: 0.5,
            sigmoid_c: 1.0,
            max_iter: 10_000,
            target_rms: 0.01,
            samples_per_class: 6014,
            seed: 1,
        }
    }
}

impl MlpParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("lr_start", self.lr_start)?;
        positive("lr_end", self.lr_end)?;
        positive("sigmoid_c", self.sigmoid_c)?;
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        if !(self.target_rms >= 0.0) {
            return Err(Error::InvalidArgument(format!("target_rms must be non-negative, got {}", self.target_rms)));
        }
        Ok(())
    }

    /// Learning rate for a zero-based epoch, linear from `lr_start` to `lr_end`.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        if self.max_iter <= 1 {
            return self.lr_end;
        }
        let t = epoch.min(self.max_iter - 1) as f64 / (self.max_iter - 1) as f64;
        self.lr_start + (self.lr_end - self.lr_start) * t
    }
}

/// Weights and biases. Also used as the gradient container.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Network {
    pub w1: [[f64; INPUTS]; HIDDEN],
    pub b1: [f64; HIDDEN],
    pub w2: [[f64; HIDDEN]; OUTPUTS],
    pub b2: [f64; OUTPUTS],
    pub c: f64,
}

pub const PARAM_COUNT: usize = HIDDEN * INPUTS + HIDDEN + OUTPUTS * HIDDEN + OUTPUTS;

fn sigmoid(c: f64, z: f64) -> f64 {
    1.0 / (1.0 + (-c * z).exp())
}

impl Network {
    pub fn zeros(c: f64) -> Self {
        Network {
            w1: [[0.0; INPUTS]; HIDDEN],
            b1: [0.0; HIDDEN],
            w2: [[0.0; HIDDEN]; OUTPUTS],
            b2: [0.0; OUTPUTS],
            c,
        }
    }

    /// Uniform weights in ±0.5.
    pub fn random(c: f64, rng: &mut impl Rng) -> Self {
        let mut n = Network::zeros(c);
        let mut p = n.params();
        p.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
        n.set_params(&p);
        n
    }

    /// Flat parameter vector: w1 row-major, b1, w2 row-major, b2.
    pub fn params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(PARAM_COUNT);
        self.w1.iter().for_each(|r| v.extend_from_slice(r));
        v.extend_from_slice(&self.b1);
        self.w2.iter().for_each(|r| v.extend_from_slice(r));
        v.extend_from_slice(&self.b2);
        v
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), PARAM_COUNT);
        let mut it = p.iter().copied();
        for r in self.w1.iter_mut() {
            r.iter_mut().for_each(|w| *w = it.next().expect("length checked"));
        }
        self.b1.iter_mut().for_each(|w| *w = it.next().expect("length checked"));
        for r in self.w2.iter_mut() {
            r.iter_mut().for_each(|w| *w = it.next().expect("length checked"));
        }
        self.b2.iter_mut().for_each(|w| *w = it.next().expect("length checked"));
    }

    fn clear(&mut self) {
        *self = Network::zeros(self.c);
    }

    /// `v ← μv − ηg; θ ← θ + v` for every parameter.
    fn momentum_step(&mut self, v: &mut Network, g: &Network, lr: f64, mu: f64) {
        let step = |w: &mut f64, v: &mut f64, g: f64| {
            *v = mu * *v - lr * g;
            *w += *v;
        };
        for j in 0..HIDDEN {
            for i in 0..INPUTS {
                step(&mut self.w1[j][i], &mut v.w1[j][i], g.w1[j][i]);
            }
            step(&mut self.b1[j], &mut v.b1[j], g.b1[j]);
        }
        for k in 0..OUTPUTS {
            for j in 0..HIDDEN {
                step(&mut self.w2[k][j], &mut v.w2[k][j], g.w2[k][j]);
            }
            step(&mut self.b2[k], &mut v.b2[k], g.b2[k]);
        }
    }

    pub fn forward(&self, x: &[f64; INPUTS]) -> ([f64; HIDDEN], [f64; OUTPUTS]) {
        let mut h = [0.0; HIDDEN];
        for (j, hj) in h.iter_mut().enumerate() {
            let z: f64 = self.b1[j] + (0..INPUTS).map(|i| self.w1[j][i] * x[i]).sum::<f64>();
            *hj = sigmoid(self.c, z);
        }
        let mut o = [0.0; OUTPUTS];
        for (k, ok) in o.iter_mut().enumerate() {
            let z: f64 = self.b2[k] + (0..HIDDEN).map(|j| self.w2[k][j] * h[j]).sum::<f64>();
            *ok = sigmoid(self.c, z);
        }
        (h, o)
    }

    pub fn output(&self, x: &[f64; INPUTS]) -> [f64; OUTPUTS] {
        self.forward(x).1
    }

    /// Accumulate `∂E/∂θ` for `E = ½Σ(o − t)²` into `grad`; returns `E`.
    fn backprop(&self, x: &[f64; INPUTS], t: &[f64; OUTPUTS], grad: &mut Network) -> f64 {
        let (h, o) = self.forward(x);
        let c = self.c;
        let mut delta_o = [0.0; OUTPUTS];
        let mut e = 0.0;
        for k in 0..OUTPUTS {
            let err = o[k] - t[k];
            e += 0.5 * err * err;
            delta_o[k] = err * c * o[k] * (1.0 - o[k]);
            for j in 0..HIDDEN {
                grad.w2[k][j] += delta_o[k] * h[j];
            }
            grad.b2[k] += delta_o[k];
        }
        for j in 0..HIDDEN {
            let back: f64 = (0..OUTPUTS).map(|k| self.w2[k][j] * delta_o[k]).sum();
            let delta_h = back * c * h[j] * (1.0 - h[j]);
            for i in 0..INPUTS {
                grad.w1[j][i] += delta_h * x[i];
            }
            grad.b1[j] += delta_h;
        }
        e
    }

    /// Summed squared-error loss and its analytic gradient over a batch.
    pub fn loss_and_gradient(&self, batch: &[([f64; INPUTS], [f64; OUTPUTS])]) -> (f64, Network) {
        let mut grad = Network::zeros(self.c);
        let loss = batch.iter().map(|(x, t)| self.backprop(x, t, &mut grad)).sum();
        (loss, grad)
    }

    pub fn loss(&self, batch: &[([f64; INPUTS], [f64; OUTPUTS])]) -> f64 {
        batch
            .iter()
            .map(|(x, t)| {
                let o = self.output(x);
                (0..OUTPUTS).map(|k| 0.5 * (o[k] - t[k]).powi(2)).sum::<f64>()
            })
            .sum()
    }
}

/// Output 0 is the transition neuron, output 1 persistence.
pub fn target(transition: bool) -> [f64; OUTPUTS] {
    if transition {
        [1.0, 0.0]
    } else {
        [0.0, 1.0]
    }
}

fn predicts_transition(o: &[f64; OUTPUTS]) -> bool {
    o[0] > o[1]
}

/// Chance-corrected accuracy `(A − 1/k)/(1 − 1/k)`.
pub fn skill(accuracy: f64, k_classes: usize) -> f64 {
    let chance = 1.0 / k_classes as f64;
    (accuracy - chance) / (1.0 - chance)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmsRecord {
    pub train: f64,
    pub test: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Performance {
    pub accuracy: f64,
    pub skill: f64,
    /// Recall-based skill for the transition and persistence groups.
    pub transition_skill: f64,
    pub persistence_skill: f64,
}

/// Evaluate classification performance on a sample set; `column_override`
/// replaces the given input columns with fixed values first.
pub fn evaluate(net: &Network, samples: &[Sample], column_override: &[(usize, f64)]) -> Performance {
    let (mut hits, mut t_hits, mut t_n, mut p_hits, mut p_n) = (0usize, 0usize, 0usize, 0usize, 0usize);
    for s in samples {
        let mut x = s.features;
        for &(i, v) in column_override {
            x[i] = v;
        }
        let ok = predicts_transition(&net.output(&x)) == s.transition;
        hits += usize::from(ok);
        if s.transition {
            t_n += 1;
            t_hits += usize::from(ok);
        } else {
            p_n += 1;
            p_hits += usize::from(ok);
        }
    }
    let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let accuracy = frac(hits, samples.len());
    Performance {
        accuracy,
        skill: skill(accuracy, OUTPUTS),
        transition_skill: skill(frac(t_hits, t_n), OUTPUTS),
        persistence_skill: skill(frac(p_hits, p_n), OUTPUTS),
    }
}

fn rms(net: &Network, samples: &[Sample]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let sum: f64 = samples
        .iter()
        .map(|s| {
            let o = net.output(&s.features);
            let t = target(s.transition);
            (0..OUTPUTS).map(|k| (o[k] - t[k]).powi(2)).sum::<f64>()
        })
        .sum();
    (sum / (samples.len() * OUTPUTS) as f64).sqrt()
}

/// A trained transition model.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub from_class: u8,
    pub to_class: u8,
    pub network: Network,
    pub norm_min: [f64; INPUTS],
    pub norm_max: [f64; INPUTS],
    pub params: MlpParams,
    pub history: Vec<RmsRecord>,
    pub performance: Performance,
}

impl MlpModel {
    pub fn epochs(&self) -> usize {
        self.history.len()
    }

    pub fn final_rms(&self) -> RmsRecord {
        self.history.last().copied().unwrap_or(RmsRecord { train: f64::NAN, test: f64::NAN })
    }

    pub fn final_learning_rate(&self) -> f64 {
        self.params.learning_rate(self.epochs().saturating_sub(1))
    }

    /// Min-max normalize raw driver values, clamped to [0, 1].
    pub fn normalize(&self, raw: &[f64; INPUTS]) -> [f64; INPUTS] {
        super::normalize(raw, &self.norm_min, &self.norm_max)
    }

    /// Activation of the transition neuron for raw driver values.
    pub fn potential(&self, raw: &[f64; INPUTS]) -> f64 {
        self.network.output(&self.normalize(raw))[0]
    }

    /// Text manifest with every number in shortest round-trip form.
    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(" ");
        let p = &self.params;
        let n = &self.network;
        let mut s = String::new();
        let _ = writeln!(s, "layers {INPUTS} {HIDDEN} {OUTPUTS}");
        let _ = writeln!(s, "transition {} {}", self.from_class, self.to_class);
        let _ = writeln!(s, "lr_start {}", p.lr_start);
        let _ = writeln!(s, "lr_end {}", p.lr_end);
        let _ = writeln!(s, "momentum {}", p.momentum);
        let _ = writeln!(s, "sigmoid_c {}", p.sigmoid_c);
        let _ = writeln!(s, "max_iter {}", p.max_iter);
        let _ = writeln!(s, "target_rms {}", p.target_rms);
        let _ = writeln!(s, "samples_per_class {}", p.samples_per_class);
        let _ = writeln!(s, "seed {}", p.seed);
        let _ = writeln!(s, "norm_min {}", join(&self.norm_min));
        let _ = writeln!(s, "norm_max {}", join(&self.norm_max));
        let _ = writeln!(s, "w1 {}", join(&n.w1.concat()));
        let _ = writeln!(s, "b1 {}", join(&n.b1));
        let _ = writeln!(s, "w2 {}", join(&n.w2.concat()));
        let _ = writeln!(s, "b2 {}", join(&n.b2));
        let perf = &self.performance;
        let _ = writeln!(
            s,
            "performance {}",
            join(&[perf.accuracy, perf.skill, perf.transition_skill, perf.persistence_skill])
        );
        let _ = writeln!(s, "epochs {}", self.history.len());
        for r in &self.history {
            let _ = writeln!(s, "rms {} {}", r.train, r.test);
        }
        s
    }

    pub fn from_text(text: &str, context: &str) -> Result<MlpModel> {
        let bad = |m: String| Error::parse(context, m);
        let mut lines = text.lines();
        let mut next = |key: &str| -> Result<Vec<String>> {
            let line = lines.next().ok_or_else(|| bad(format!("missing `{key}`")))?;
            let mut f = line.split_whitespace();
            if f.next() != Some(key) {
                return Err(bad(format!("expected `{key}`, found `{line}`")));
            }
            Ok(f.map(str::to_string).collect())
        };
        fn nums<T: std::str::FromStr>(v: Vec<String>, n: usize, ctx: &str) -> Result<Vec<T>> {
            if v.len() != n {
                return Err(Error::parse(ctx, format!("expected {n} values, found {}", v.len())));
            }
            v.iter()
                .map(|s| s.parse().map_err(|_| Error::parse(ctx, format!("bad number `{s}`"))))
                .collect()
        }
        let one = |v: Vec<String>| -> Result<f64> { Ok(nums::<f64>(v, 1, context)?[0]) };
        let layers: Vec<usize> = nums(next("layers")?, 3, context)?;
        if layers != [INPUTS, HIDDEN, OUTPUTS] {
            return Err(bad(format!("unsupported layer sizes {layers:?}")));
        }
        let tr: Vec<u8> = nums(next("transition")?, 2, context)?;
        let params = MlpParams {
            lr_start: one(next("lr_start")?)?,
            lr_end: one(next("lr_end")?)?,
            momentum: one(next("momentum")?)?,
            sigmoid_c: one(next("sigmoid_c")?)?,
            max_iter: nums::<usize>(next("max_iter")?, 1, context)?[0],
            target_rms: one(next("target_rms")?)?,
            samples_per_class: nums::<usize>(next("samples_per_class")?, 1, context)?[0],
            seed: nums::<u64>(next("seed")?, 1, context)?[0],
        };
        let arr6 = |v: Vec<f64>| -> [f64; INPUTS] { v.try_into().expect("length checked") };
        let norm_min = arr6(nums(next("norm_min")?, INPUTS, context)?);
        let norm_max = arr6(nums(next("norm_max")?, INPUTS, context)?);
        let mut flat: Vec<f64> = nums(next("w1")?, HIDDEN * INPUTS, context)?;
        flat.extend(nums::<f64>(next("b1")?, HIDDEN, context)?);
        flat.extend(nums::<f64>(next("w2")?, OUTPUTS * HIDDEN, context)?);
        flat.extend(nums::<f64>(next("b2")?, OUTPUTS, context)?);
        let mut network = Network::zeros(params.sigmoid_c);
        network.set_params(&flat);
        let perf: Vec<f64> = nums(next("performance")?, 4, context)?;
        let epochs = nums::<usize>(next("epochs")?, 1, context)?[0];
        let mut history = Vec::with_capacity(epochs);
        for _ in 0..epochs {
            let r: Vec<f64> = nums(next("rms")?, 2, context)?;
            history.push(RmsRecord { train: r[0], test: r[1] });
        }
        Ok(MlpModel {
            from_class: tr[0],
            to_class: tr[1],
            network,
            norm_min,
            norm_max,
            params,
            history,
            performance: Performance {
                accuracy: perf[0],
                skill: perf[1],
                transition_skill: perf[2],
                persistence_skill: perf[3],
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<MlpModel> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        MlpModel::from_text(&text, &path.display().to_string())
    }
}

/// Online backpropagation with momentum. One iteration is one pass over the
/// shuffled training half.
pub fn train_mlp(set: &TrainingSet, params: &MlpParams) -> Result<MlpModel> {
    if set.train.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    params.validate()?;
    debug_assert!(set.disjoint(), "train and test halves overlap");
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut net = Network::random(params.sigmoid_c, &mut rng);
    let mut velocity = Network::zeros(params.sigmoid_c);
    let mut grad = Network::zeros(params.sigmoid_c);
    let mut order: Vec<usize> = (0..set.train.len()).collect();
    let mut history = Vec::new();
    for epoch in 0..params.max_iter {
        let lr = params.learning_rate(epoch);
        order.shuffle(&mut rng);
        for &i in &order {
            let s = &set.train[i];
            grad.clear();
            net.backprop(&s.features, &target(s.transition), &mut grad);
            net.momentum_step(&mut velocity, &grad, lr, params.momentum);
        }
        let record = RmsRecord {
            train: rms(&net, &set.train),
            test: rms(&net, &set.test),
        };
        if !(record.train.is_finite() && record.test.is_finite() && net.params().iter().all(|w| w.is_finite())) {
            return Err(Error::Divergence { epoch });
        }
        history.push(record);
        if record.train <= params.target_rms {
            break;
        }
    }
    Ok(MlpModel {
        from_class: set.from_class,
        to_class: set.to_class,
        performance: evaluate(&net, &set.test, &[]),
        network: net,
        norm_min: set.norm_min,
        norm_max: set.norm_max,
        params: params.clone(),
        history,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceRow {
    /// Zero-based driver index.
    pub variable: usize,
    pub accuracy: f64,
    pub skill: f64,
    /// 1 = most influential. Only set for the forced-constant table.
    pub order: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Influence {
    pub all_variables: Performance,
    pub forced_constant: Vec<InfluenceRow>,
    pub all_but_one: Vec<InfluenceRow>,
}

/// Re-evaluate the trained model on the test half with variables held at
/// their training means. No retraining.
pub fn variable_influence(model: &MlpModel, set: &TrainingSet) -> Influence {
    let n = set.train.len().max(1) as f64;
    let mut means = [0.0; INPUTS];
    for s in &set.train {
        for (m, v) in means.iter_mut().zip(s.features) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n);
    let row = |variable: usize, p: Performance| InfluenceRow {
        variable,
        accuracy: p.accuracy,
        skill: p.skill,
        order: None,
    };
    let net = &model.network;
    let mut forced: Vec<InfluenceRow> = (0..INPUTS)
        .map(|v| row(v, evaluate(net, &set.test, &[(v, means[v])])))
        .collect();
    let mut ranked: Vec<usize> = (0..INPUTS).collect();
    ranked.sort_by(|&a, &b| forced[a].accuracy.total_cmp(&forced[b].accuracy).then(a.cmp(&b)));
    for (rank, &v) in ranked.iter().enumerate() {
        forced[v].order = Some(rank + 1);
    }
    let all_but_one = (0..INPUTS)
        .map(|keep| {
            let held: Vec<(usize, f64)> =
                (0..INPUTS).filter(|&i| i != keep).map(|i| (i, means[i])).collect();
            row(keep, evaluate(net, &set.test, &held))
        })
        .collect();
    Influence {
        all_variables: evaluate(net, &set.test, &[]),
        forced_constant: forced,
        all_but_one,
    }
}
