//! One-nearest-neighbour classification and the Monte-Carlo evaluation
//! harness: stratified train/test splits, confusion accounting and
//! row-normalised reporting.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envelope::{FeatureMode, FeatureVector};
use crate::error::{invalid, Result};
use crate::metrics::{dtw_cost_lanes, frechet_cost_lanes, DistanceKind};
use crate::signals::MotionClass;

const N_CLASSES: usize = MotionClass::COUNT;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ItemMeta {
    pub speed: f64,
    pub angle_deg: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledItem {
    pub features: FeatureVector,
    pub label: MotionClass,
    #[serde(default)]
    pub meta: ItemMeta,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LabeledDataset {
    items: Vec<LabeledItem>,
}

impl LabeledDataset {
    /// All vectors must share one length and one mode.
    pub fn new(items: Vec<LabeledItem>) -> Result<Self> {
        if let Some(first) = items.first() {
            let (len, mode) = (first.features.len(), first.features.mode);
            if let Some((i, bad)) = items
                .iter()
                .enumerate()
                .find(|(_, it)| it.features.len() != len || it.features.mode != mode)
            {
                return Err(invalid(format!(
                    "item {i} is {:?} of length {}, expected {mode:?} of length {len}",
                    bad.features.mode,
                    bad.features.len()
                )));
            }
        }
        Ok(Self { items })
    }

    pub fn items(&self) -> &[LabeledItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn mode(&self) -> Option<FeatureMode> {
        self.items.first().map(|it| it.features.mode)
    }

    pub fn labels(&self) -> Vec<MotionClass> {
        self.items.iter().map(|it| it.label).collect()
    }

    pub fn to_mode(&self, mode: FeatureMode) -> Self {
        Self {
            items: self
                .items
                .iter()
                .map(|it| LabeledItem {
                    features: it.features.to_mode(mode),
                    ..it.clone()
                })
                .collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            items: self
                .items
                .iter()
                .map(|it| LabeledItem {
                    features: it.features.scaled(c),
                    ..it.clone()
                })
                .collect(),
        }
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            items: indices.iter().map(|&i| self.items[i].clone()).collect(),
        }
    }
}

/// How a metric is applied to feature vectors: over the whole concatenation,
/// or separately per envelope block with the costs summed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metric {
    pub kind: DistanceKind,
    #[serde(default)]
    pub per_segment: bool,
}

impl Metric {
    pub fn whole(kind: DistanceKind) -> Self {
        Self {
            kind,
            per_segment: false,
        }
    }

    pub fn distance(&self, a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
        if a.mode != b.mode || a.len() != b.len() {
            return Err(invalid(format!(
                "cannot compare {:?}[{}] with {:?}[{}]",
                a.mode,
                a.len(),
                b.mode,
                b.len()
            )));
        }
        if self.per_segment {
            a.blocks().zip(b.blocks()).map(|(x, y)| self.kind.distance(x, y)).sum()
        } else {
            self.kind.distance(&a.values, &b.values)
        }
    }
}

/// Index minimising `dist` over `0..n`; the lowest index wins ties.
pub fn nearest_index(n: usize, mut dist: impl FnMut(usize) -> f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for i in 0..n {
        let d = dist(i);
        if best.is_none_or(|(_, b)| d < b) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i)
}

pub fn nn_classify(query: &FeatureVector, train: &LabeledDataset, metric: DistanceKind) -> Result<MotionClass> {
    nn_classify_with(query, train, Metric::whole(metric))
}

pub fn nn_classify_with(query: &FeatureVector, train: &LabeledDataset, metric: Metric) -> Result<MotionClass> {
    if train.is_empty() {
        return Err(invalid("training set is empty"));
    }
    let mut dists = Vec::with_capacity(train.len());
    if metric.kind == DistanceKind::Dtw && !metric.per_segment && check_shape(query, train).is_ok() {
        let refs: Vec<&[f64]> = train.items.iter().map(|it| it.features.values.as_slice()).collect();
        if query.is_empty() {
            return Err(invalid("feature vectors must be non-empty"));
        }
        dists = dtw_cost_lanes(&query.values, &refs);
    } else {
        for it in &train.items {
            dists.push(metric.distance(query, &it.features)?);
        }
    }
    let best = nearest_index(dists.len(), |i| dists[i]).expect("non-empty");
    Ok(train.items[best].label)
}

fn check_shape(query: &FeatureVector, train: &LabeledDataset) -> Result<()> {
    match train.items.first() {
        Some(first) if first.features.mode == query.mode && first.features.len() == query.len() => Ok(()),
        _ => Err(invalid("query does not match the training vectors")),
    }
}

/// Per-class random partition; each class contributes
/// `round(fraction · count)` training items, kept within `[1, count − 1]`.
/// Both index lists come back in ascending order.
pub fn stratified_split(labels: &[MotionClass], fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(invalid(format!("train fraction must lie in (0, 1), got {fraction}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for class in MotionClass::ALL {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < 2 {
            return Err(invalid(format!("class {class} has only one item; splitting needs two")));
        }
        let n_train = ((fraction * members.len() as f64).round() as usize).clamp(1, members.len() - 1);
        members.shuffle(&mut rng);
        train.extend_from_slice(&members[..n_train]);
        test.extend_from_slice(&members[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub train_fraction: f64,
    pub trials: usize,
    pub metric: DistanceKind,
    pub feature_mode: FeatureMode,
    pub seed: u64,
    #[serde(default)]
    pub per_segment: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.7,
            trials: 50,
            metric: DistanceKind::Dtw,
            feature_mode: FeatureMode::Augmented,
            seed: 0,
            per_segment: false,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(invalid(format!("train_fraction must lie in (0, 1), got {}", self.train_fraction)));
        }
        if self.trials == 0 {
            return Err(invalid("trials must be >= 1"));
        }
        Ok(())
    }

    pub fn metric(&self) -> Metric {
        Metric {
            kind: self.metric,
            per_segment: self.per_segment,
        }
    }
}

/// Symmetric matrix of pairwise distances over a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceTable {
    n: usize,
    d: Vec<f64>,
}

impl DistanceTable {
    pub fn compute(data: &LabeledDataset, metric: Metric) -> Result<Self> {
        let n = data.len();
        if let Some(first) = data.items.first() {
            if first.features.is_empty() {
                return Err(invalid("feature vectors must be non-empty"));
            }
        }
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let query = &data.items[i].features;
                let rest = &data.items[i + 1..];
                let refs: Vec<&[f64]> = rest.iter().map(|it| it.features.values.as_slice()).collect();
                match (metric.kind, metric.per_segment) {
                    (DistanceKind::Dtw, false) => Ok(dtw_cost_lanes(&query.values, &refs)),
                    (DistanceKind::Frechet, false) => Ok(frechet_cost_lanes(&query.values, &refs)),
                    _ => rest.iter().map(|it| metric.distance(query, &it.features)).collect(),
                }
            })
            .collect::<Result<_>>()?;
        let mut d = vec![0.0; n * n];
        for (i, row) in rows.into_iter().enumerate() {
            for (k, v) in row.into_iter().enumerate() {
                let j = i + 1 + k;
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        Ok(Self { n, d })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// `counts[true][predicted]`, classes in `MotionClass::ALL` order.
    pub counts: [[u64; N_CLASSES]; N_CLASSES],
    pub trials: usize,
}

impl ConfusionMatrix {
    pub fn new(trials: usize) -> Self {
        Self {
            counts: [[0; N_CLASSES]; N_CLASSES],
            trials,
        }
    }

    pub fn record(&mut self, truth: MotionClass, predicted: MotionClass) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..N_CLASSES).map(|c| self.counts[c][c]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.correct() as f64 / self.total() as f64
    }

    /// Row percentages in hundredths of a percent. Each non-empty row sums
    /// to exactly 10000: remainders go to the largest fractional parts.
    pub fn row_basis_points(&self) -> Result<[[u64; N_CLASSES]; N_CLASSES]> {
        if self.trials == 0 {
            return Err(invalid("confusion matrix has no trials"));
        }
        let mut out = [[0; N_CLASSES]; N_CLASSES];
        for (row, counts) in out.iter_mut().zip(&self.counts) {
            let total: u64 = counts.iter().sum();
            if total == 0 {
                continue;
            }
            let mut rem = [0u64; N_CLASSES];
            for c in 0..N_CLASSES {
                row[c] = counts[c] * 10_000 / total;
                rem[c] = counts[c] * 10_000 % total;
            }
            let missing = 10_000 - row.iter().sum::<u64>();
            let mut order: Vec<usize> = (0..N_CLASSES).collect();
            order.sort_by(|&a, &b| rem[b].cmp(&rem[a]).then(a.cmp(&b)));
            for &c in order.iter().take(missing as usize) {
                row[c] += 1;
            }
        }
        Ok(out)
    }

    /// Fraction of each true class predicted correctly; 0 for absent classes.
    pub fn per_class_rates(&self) -> [f64; N_CLASSES] {
        std::array::from_fn(|c| {
            let total: u64 = self.counts[c].iter().sum();
            if total == 0 {
                0.0
            } else {
                self.counts[c][c] as f64 / total as f64
            }
        })
    }
}

impl std::ops::AddAssign<&ConfusionMatrix> for ConfusionMatrix {
    fn add_assign(&mut self, rhs: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().flatten().zip(rhs.counts.iter().flatten()) {
            *a += b;
        }
        self.trials += rhs.trials;
    }
}

/// CSV of row-normalised percentages with two decimals, rows and columns
/// labelled `a`–`f`.
pub fn render_confusion(cm: &ConfusionMatrix) -> Result<String> {
    let bp = cm.row_basis_points()?;
    let mut out = String::from("true\\predicted");
    for class in MotionClass::ALL {
        out.push(',');
        out.push(class.letter());
    }
    out.push('\n');
    for class in MotionClass::ALL {
        out.push(class.letter());
        for v in bp[class.index()] {
            out.push_str(&format!(",{}.{:02}", v / 100, v % 100));
        }
        out.push('\n');
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub per_class_rates: [f64; N_CLASSES],
}

/// Monte-Carlo evaluation: `cfg.trials` stratified splits seeded with
/// `cfg.seed + trial`, each test item classified by its nearest training item.
pub fn evaluate(data: &LabeledDataset, cfg: &EvalConfig) -> Result<Evaluation> {
    cfg.validate()?;
    let data = match data.mode() {
        Some(mode) if mode != cfg.feature_mode => data.to_mode(cfg.feature_mode),
        _ => data.clone(),
    };
    let table = DistanceTable::compute(&data, cfg.metric())?;
    evaluate_with_table(&data.labels(), &table, cfg)
}

/// [`evaluate`] over precomputed distances; `labels[i]` belongs to row `i`.
pub fn evaluate_with_table(labels: &[MotionClass], table: &DistanceTable, cfg: &EvalConfig) -> Result<Evaluation> {
    cfg.validate()?;
    if labels.len() != table.len() {
        return Err(invalid(format!("{} labels for a {}-item table", labels.len(), table.len())));
    }
    if labels.is_empty() {
        return Err(invalid("dataset is empty"));
    }
    let per_trial: Vec<ConfusionMatrix> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let (train, test) = stratified_split(labels, cfg.train_fraction, cfg.seed.wrapping_add(trial as u64))?;
            let mut cm = ConfusionMatrix::new(1);
            for &t in &test {
                let best = nearest_index(train.len(), |k| table.get(t, train[k])).expect("train non-empty");
                cm.record(labels[t], labels[train[best]]);
            }
            Ok(cm)
        })
        .collect::<Result<_>>()?;
    let mut confusion = ConfusionMatrix::new(0);
    for cm in &per_trial {
        confusion += cm;
    }
    Ok(Evaluation {
        accuracy: confusion.accuracy(),
        per_class_rates: confusion.per_class_rates(),
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fv(values: Vec<f64>) -> FeatureVector {
        let n = values.len() / 2;
        FeatureVector::new(values, FeatureMode::Basic, n).unwrap()
    }

    fn item(values: Vec<f64>, label: MotionClass) -> LabeledItem {
        LabeledItem {
            features: fv(values),
            label,
            meta: ItemMeta::default(),
        }
    }

    fn clustered(per_class: usize, spread: f64) -> LabeledDataset {
        let mut items = Vec::new();
        for class in MotionClass::ALL {
            for r in 0..per_class {
                let base = 100.0 * class.index() as f64;
                let w = spread * (r as f64 - per_class as f64 / 2.0);
                items.push(item(vec![base + w, base - w, base, base + 2.0 * w], class));
            }
        }
        LabeledDataset::new(items).unwrap()
    }

    #[test]
    fn hand_worked_nn() {
        let train = LabeledDataset::new(vec![
            item(vec![0.0, 1.0], MotionClass::PushPull),
            item(vec![5.0, 5.0], MotionClass::Cross),
        ])
        .unwrap();
        let q = fv(vec![0.0, 0.0]);
        assert_eq!(nn_classify(&q, &train, DistanceKind::L1).unwrap(), MotionClass::PushPull);
    }

    #[test]
    fn singleton_and_exact_match() {
        let train = LabeledDataset::new(vec![item(vec![9.0, 9.0], MotionClass::Roll)]).unwrap();
        for kind in DistanceKind::ALL {
            assert_eq!(nn_classify(&fv(vec![-3.0, 4.0]), &train, kind).unwrap(), MotionClass::Roll);
        }
        let data = clustered(3, 1.0);
        for (i, it) in data.items().iter().enumerate() {
            for kind in DistanceKind::ALL {
                assert_eq!(nn_classify(&it.features, &data, kind).unwrap(), data.items()[i].label);
            }
        }
    }

    #[test]
    fn ties_go_to_lowest_index() {
        assert_eq!(nearest_index(4, |_| 1.0), Some(0));
        assert_eq!(nearest_index(4, |i| [3.0, 1.0, 0.5, 0.5][i]), Some(2));
        assert_eq!(nearest_index(0, |_| 0.0), None);
        // A metric that is zero only at a fixed index always selects it.
        for k in 0..7 {
            assert_eq!(nearest_index(7, |i| if i == k { 0.0 } else { 1.0 }), Some(k));
        }
    }

    #[test]
    fn nn_rejects_bad_inputs() {
        let empty = LabeledDataset::default();
        assert!(nn_classify(&fv(vec![0.0, 0.0]), &empty, DistanceKind::L1).is_err());
        let train = LabeledDataset::new(vec![item(vec![0.0, 1.0], MotionClass::Roll)]).unwrap();
        let aug = fv(vec![0.0, 0.0]).to_mode(FeatureMode::Augmented);
        for kind in DistanceKind::ALL {
            assert!(nn_classify(&aug, &train, kind).is_err());
        }
        assert!(LabeledDataset::new(vec![
            item(vec![0.0, 1.0], MotionClass::Roll),
            item(vec![0.0, 1.0, 2.0, 3.0], MotionClass::Roll)
        ])
        .is_err());
    }

    #[test]
    fn split_sizes_and_determinism() {
        let labels: Vec<MotionClass> = MotionClass::ALL.iter().flat_map(|&c| [c; 10]).collect();
        let (train, test) = stratified_split(&labels, 0.7, 5).unwrap();
        for class in MotionClass::ALL {
            assert_eq!(train.iter().filter(|&&i| labels[i] == class).count(), 7);
            assert_eq!(test.iter().filter(|&&i| labels[i] == class).count(), 3);
        }
        assert_eq!(stratified_split(&labels, 0.7, 5).unwrap(), (train.clone(), test));
        assert_ne!(stratified_split(&labels, 0.7, 6).unwrap().0, train);
        assert!(stratified_split(&[MotionClass::Roll], 0.7, 0).is_err());
        assert!(stratified_split(&labels, 1.0, 0).is_err());
    }

    #[test]
    fn separated_classes_are_perfect() {
        let data = clustered(6, 1.0);
        for kind in DistanceKind::ALL {
            let cfg = EvalConfig {
                metric: kind,
                feature_mode: FeatureMode::Basic,
                trials: 5,
                ..EvalConfig::default()
            };
            let ev = evaluate(&data, &cfg).unwrap();
            assert_eq!(ev.accuracy, 1.0, "{kind}");
            assert_eq!(ev.confusion.trials, 5);
            assert_eq!(ev.confusion.total(), 5 * 6 * 2);
        }
    }

    #[test]
    fn evaluation_is_deterministic_and_consistent() {
        let data = clustered(5, 30.0);
        let cfg = EvalConfig {
            trials: 7,
            seed: 11,
            ..EvalConfig::default()
        };
        let a = evaluate(&data, &cfg).unwrap();
        let b = evaluate(&data, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.accuracy, a.confusion.correct() as f64 / a.confusion.total() as f64);
        assert!(evaluate(&data, &EvalConfig { trials: 0, ..cfg }).is_err());
    }

    #[test]
    fn per_segment_metric_sums_blocks() {
        let a = fv(vec![0.0, 1.0, 2.0, 3.0]);
        let b = fv(vec![1.0, 1.0, 2.0, 5.0]);
        let m = Metric {
            kind: DistanceKind::L1,
            per_segment: true,
        };
        assert_eq!(m.distance(&a, &b).unwrap(), 3.0);
        let m = Metric {
            kind: DistanceKind::Dtw,
            per_segment: true,
        };
        assert_eq!(
            m.distance(&a, &b).unwrap(),
            DistanceKind::Dtw.distance(&[0.0, 1.0], &[1.0, 1.0]).unwrap()
                + DistanceKind::Dtw.distance(&[2.0, 3.0], &[2.0, 5.0]).unwrap()
        );
    }

    #[test]
    fn render_examples() {
        let mut cm = ConfusionMatrix::new(1);
        for class in MotionClass::ALL {
            cm.record(class, class);
        }
        let text = render_confusion(&cm).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "true\\predicted,a,b,c,d,e,f");
        assert_eq!(lines[1], "a,100.00,0.00,0.00,0.00,0.00,0.00");

        let mut cm = ConfusionMatrix::new(1);
        cm.record(MotionClass::PushPull, MotionClass::PushPull);
        cm.record(MotionClass::PushPull, MotionClass::CrossOpen);
        assert!(render_confusion(&cm).unwrap().contains("a,50.00,50.00,0.00,0.00,0.00,0.00"));

        assert!(render_confusion(&ConfusionMatrix::new(0)).is_err());
    }

    proptest! {
        #[test]
        fn rows_sum_to_hundred(counts in prop::array::uniform6(prop::array::uniform6(0u64..1000))) {
            let cm = ConfusionMatrix { counts, trials: 1 };
            let bp = cm.row_basis_points().unwrap();
            for (row, c) in bp.iter().zip(&counts) {
                let s: u64 = row.iter().sum();
                prop_assert_eq!(s, if c.iter().sum::<u64>() == 0 { 0 } else { 10_000 });
                for (v, &k) in row.iter().zip(c) {
                    let exact = 10_000.0 * k as f64 / c.iter().sum::<u64>().max(1) as f64;
                    prop_assert!((*v as f64 - exact).abs() < 1.0);
                }
            }
        }

        #[test]
        fn split_partitions(labels in prop::collection::vec(0usize..6, 0..80), frac in 0.05f64..0.95, seed: u64) {
            let mut labels: Vec<MotionClass> = labels.into_iter().map(|i| MotionClass::from_index(i).unwrap()).collect();
            // Guarantee every present class has at least two members.
            let extra: Vec<MotionClass> = labels.clone();
            labels.extend(extra);
            let (train, test) = stratified_split(&labels, frac, seed).unwrap();
            let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        }

        #[test]
        fn scaling_preserves_predictions(
            c in prop::sample::select(vec![0.25, 0.5, 2.0, 1024.0]),
            queries in prop::collection::vec(prop::collection::vec(-50.0f64..600.0, 4), 1..6),
        ) {
            let data = clustered(3, 20.0);
            let scaled = data.scaled(c);
            for q in queries {
                let q = fv(q);
                let sq = q.scaled(c);
                for kind in DistanceKind::ALL {
                    prop_assert_eq!(nn_classify(&q, &data, kind).unwrap(), nn_classify(&sq, &scaled, kind).unwrap());
                }
            }
        }
    }
}
