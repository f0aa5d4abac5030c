//! Attribute inference from recommendation lists alone.
//!
//! Each user is represented by the binary membership vector of their Top-N
//! list over the catalog; a multinomial logistic regression predicts the
//! user's attribute and is compared with a constant most-frequent predictor
//! under stratified k-fold cross validation, scored by macro-F1.

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ranker::TopNList;
use crate::splits::FoldAssignment;

/// Sparse binary matrix: `rows[r]` lists the (sorted) columns set to 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ListFeatureMatrix {
    pub num_columns: usize,
    pub rows: Vec<Vec<u32>>,
}

impl ListFeatureMatrix {
    pub fn from_dense(dense: &[Vec<u8>]) -> Self {
        let num_columns = dense.first().map_or(0, Vec::len);
        ListFeatureMatrix {
            num_columns,
            rows: dense
                .iter()
                .map(|r| (0..r.len() as u32).filter(|&c| r[c as usize] != 0).collect())
                .collect(),
        }
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        u8::from(self.rows[row].binary_search(&(col as u32)).is_ok())
    }

    fn select(&self, rows: &[usize]) -> ListFeatureMatrix {
        ListFeatureMatrix {
            num_columns: self.num_columns,
            rows: rows.iter().map(|&r| self.rows[r].clone()).collect(),
        }
    }
}

/// One row per list user, one column per catalog item (in catalog order).
pub fn build_features(lists: &TopNList, catalog: &[String]) -> Result<ListFeatureMatrix> {
    let column: HashMap<&str, u32> = catalog
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i as u32))
        .collect();
    let rows = lists
        .lists
        .iter()
        .map(|list| {
            let mut cols = list
                .iter()
                .map(|r| {
                    let id = &lists.items[r.item as usize];
                    column.get(id.as_str()).copied().ok_or_else(|| {
                        Error::InvalidInput(format!("recommended item `{id}` not in catalog"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            cols.sort_unstable();
            cols.dedup();
            Ok(cols)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ListFeatureMatrix {
        num_columns: catalog.len(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    pub l2_strength: f64,
    pub max_iterations: usize,
    pub convergence_tol: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            l2_strength: 1.0,
            max_iterations: 500,
            convergence_tol: 1e-6,
            seed: 0,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Config("classifier max_iterations must be at least 1".into()));
        }
        if !(self.l2_strength >= 0.0) || !(self.convergence_tol > 0.0) {
            return Err(Error::Config("classifier l2_strength / convergence_tol out of range".into()));
        }
        Ok(())
    }
}

/// Multinomial logistic regression. `weights` is `classes x (features + 1)`
/// row-major, the last column of each row being the (unpenalized) intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticRegression {
    pub classes: usize,
    pub features: usize,
    pub weights: Vec<f64>,
}

impl LogisticRegression {
    pub fn zeros(classes: usize, features: usize) -> Self {
        LogisticRegression {
            classes,
            features,
            weights: vec![0.0; classes * (features + 1)],
        }
    }

    fn stride(&self) -> usize {
        self.features + 1
    }

    fn logits_into(&self, weights: &[f64], row: &[u32], out: &mut [f64]) {
        let s = self.stride();
        for (c, z) in out.iter_mut().enumerate() {
            let w = &weights[c * s..(c + 1) * s];
            *z = w[self.features] + row.iter().map(|&j| w[j as usize]).sum::<f64>();
        }
    }

    pub fn predict_proba(&self, row: &[u32]) -> Vec<f64> {
        let mut z = vec![0.0; self.classes];
        self.logits_into(&self.weights, row, &mut z);
        softmax_in_place(&mut z);
        z
    }

    /// Most probable class, lowest index on ties.
    pub fn predict(&self, row: &[u32]) -> usize {
        let p = self.predict_proba(row);
        let mut best = 0;
        for c in 1..p.len() {
            if p[c] > p[best] {
                best = c;
            }
        }
        best
    }

    pub fn predict_all(&self, x: &ListFeatureMatrix) -> Vec<usize> {
        x.rows.iter().map(|r| self.predict(r)).collect()
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// Mean cross-entropy plus `l2 / (2n) * |W|^2` (intercepts excluded).
pub fn logreg_objective(model: &LogisticRegression, weights: &[f64], x: &ListFeatureMatrix, y: &[usize], l2: f64) -> f64 {
    let n = x.num_rows() as f64;
    let mut z = vec![0.0; model.classes];
    let mut loss = 0.0;
    for (row, &label) in x.rows.iter().zip(y) {
        model.logits_into(weights, row, &mut z);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - z[label];
    }
    let s = model.stride();
    let penalty: f64 = weights
        .chunks(s)
        .map(|w| w[..model.features].iter().map(|v| v * v).sum::<f64>())
        .sum();
    loss / n + l2 / (2.0 * n) * penalty
}

/// Gradient of [`logreg_objective`] with respect to the weights.
pub fn logreg_gradient(model: &LogisticRegression, weights: &[f64], x: &ListFeatureMatrix, y: &[usize], l2: f64) -> Vec<f64> {
    let n = x.num_rows() as f64;
    let s = model.stride();
    let mut grad = vec![0.0; weights.len()];
    let mut p = vec![0.0; model.classes];
    for (row, &label) in x.rows.iter().zip(y) {
        model.logits_into(weights, row, &mut p);
        softmax_in_place(&mut p);
        p[label] -= 1.0;
        for (c, &err) in p.iter().enumerate() {
            let g = &mut grad[c * s..(c + 1) * s];
            for &j in row {
                g[j as usize] += err;
            }
            g[model.features] += err;
        }
    }
    for (c, g) in grad.chunks_mut(s).enumerate() {
        let w = &weights[c * s..(c + 1) * s];
        for j in 0..model.features {
            g[j] = g[j] / n + l2 / n * w[j];
        }
        g[model.features] /= n;
    }
    grad
}

/// Full-batch gradient descent from zero weights with backtracking
/// (Armijo) step control, so the objective never increases. Stops after
/// `max_iterations` steps or when the objective moves by less than
/// `convergence_tol`. Rows are labeled `0..num_classes`.
pub fn train_logreg(
    x: &ListFeatureMatrix,
    y: &[usize],
    num_classes: usize,
    cfg: &ClassifierConfig,
) -> Result<LogisticRegression> {
    if x.num_rows() != y.len() {
        return Err(Error::InvalidInput("feature rows and labels differ in length".into()));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= num_classes) {
        return Err(Error::InvalidInput(format!("label {bad} outside {num_classes} classes")));
    }
    let distinct: BTreeSet<usize> = y.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(Error::InvalidInput("logistic regression needs at least two classes".into()));
    }
    let mut model = LogisticRegression::zeros(num_classes, x.num_columns);
    let l2 = cfg.l2_strength;
    let mut weights = std::mem::take(&mut model.weights);
    let mut f = logreg_objective(&model, &weights, x, y, l2);
    // Hessian bound of the mean cross-entropy: 1/2 * max |x_i|^2 (+1 intercept).
    let max_sq = x.rows.iter().map(|r| r.len() + 1).max().unwrap_or(1) as f64;
    let mut step = 1.0 / (0.5 * max_sq + l2 / x.num_rows() as f64);
    let mut candidate = vec![0.0; weights.len()];
    for _ in 0..cfg.max_iterations {
        let g = logreg_gradient(&model, &weights, x, y, l2);
        let g_sq: f64 = g.iter().map(|v| v * v).sum();
        if g_sq == 0.0 {
            break;
        }
        step *= 2.0;
        let f_new = loop {
            for ((c, w), gi) in candidate.iter_mut().zip(&weights).zip(&g) {
                *c = w - step * gi;
            }
            let f_c = logreg_objective(&model, &candidate, x, y, l2);
            if f_c <= f - 0.5 * step * g_sq || step < 1e-12 {
                break f_c;
            }
            step *= 0.5;
        };
        if f_new > f {
            break;
        }
        std::mem::swap(&mut weights, &mut candidate);
        let delta = f - f_new;
        f = f_new;
        if delta < cfg.convergence_tol {
            break;
        }
    }
    model.weights = weights;
    Ok(model)
}

/// Constant predictor of the modal training class (lowest index on ties).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MostFrequent {
    pub class: usize,
}

impl MostFrequent {
    pub fn predict_all(&self, rows: usize) -> Vec<usize> {
        vec![self.class; rows]
    }
}

pub fn most_frequent_baseline(y_train: &[usize]) -> Result<MostFrequent> {
    let max_label = *y_train
        .iter()
        .max()
        .ok_or_else(|| Error::InvalidInput("no training labels".into()))?;
    let mut counts = vec![0usize; max_label + 1];
    for &c in y_train {
        counts[c] += 1;
    }
    let mut class = 0;
    for c in 1..counts.len() {
        if counts[c] > counts[class] {
            class = c;
        }
    }
    Ok(MostFrequent { class })
}

/// Unweighted mean over the classes in `truth ∪ predictions` of per-class F1
/// (0 when precision + recall is 0).
pub fn macro_f1(predictions: &[usize], truth: &[usize]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::InvalidInput(format!(
            "{} predictions for {} labels",
            predictions.len(),
            truth.len()
        )));
    }
    let classes: BTreeSet<usize> = truth.iter().chain(predictions).copied().collect();
    if classes.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for &c in &classes {
        let tp = predictions.iter().zip(truth).filter(|(p, t)| **p == c && **t == c).count();
        let predicted = predictions.iter().filter(|&&p| p == c).count();
        let actual = truth.iter().filter(|&&t| t == c).count();
        let precision = if predicted > 0 { tp as f64 / predicted as f64 } else { 0.0 };
        let recall = if actual > 0 { tp as f64 / actual as f64 } else { 0.0 };
        if precision + recall > 0.0 {
            total += 2.0 * precision * recall / (precision + recall);
        }
    }
    Ok(total / classes.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub attribute: String,
    /// Mean macro-F1 of the classifier over folds.
    pub classifier_f1: f64,
    /// Population standard deviation over folds.
    pub classifier_f1_std: f64,
    pub baseline_f1: f64,
    pub baseline_f1_std: f64,
    pub fold_f1: Vec<f64>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Fits on k-1 folds and scores macro-F1 on the held-out fold, for both the
/// classifier and the most-frequent baseline.
pub fn cross_validate(
    attribute: &str,
    x: &ListFeatureMatrix,
    y: &[usize],
    num_classes: usize,
    folds: &FoldAssignment,
    cfg: &ClassifierConfig,
) -> Result<AuditReport> {
    cfg.validate()?;
    if folds.assignment.len() != x.num_rows() || y.len() != x.num_rows() {
        return Err(Error::InvalidInput("folds, rows and labels must have equal length".into()));
    }
    let scores = (0..folds.k)
        .into_par_iter()
        .map(|f| {
            let (train_rows, test_rows) = folds.partition(f);
            if test_rows.is_empty() {
                return Err(Error::Fold { fold: f, message: "empty held-out fold".into() });
            }
            let y_train: Vec<usize> = train_rows.iter().map(|&r| y[r]).collect();
            let y_test: Vec<usize> = test_rows.iter().map(|&r| y[r]).collect();
            let distinct: BTreeSet<usize> = y_train.iter().copied().collect();
            if distinct.len() < 2 {
                return Err(Error::Fold {
                    fold: f,
                    message: "training part contains a single class".into(),
                });
            }
            let x_train = x.select(&train_rows);
            let x_test = x.select(&test_rows);
            let model = train_logreg(&x_train, &y_train, num_classes, cfg)
                .map_err(|e| Error::Fold { fold: f, message: e.to_string() })?;
            let clf = macro_f1(&model.predict_all(&x_test), &y_test)?;
            let baseline = most_frequent_baseline(&y_train)?;
            let base = macro_f1(&baseline.predict_all(y_test.len()), &y_test)?;
            Ok((clf, base))
        })
        .collect::<Result<Vec<_>>>()?;
    let fold_f1: Vec<f64> = scores.iter().map(|s| s.0).collect();
    let base: Vec<f64> = scores.iter().map(|s| s.1).collect();
    let (classifier_f1, classifier_f1_std) = mean_std(&fold_f1);
    let (baseline_f1, baseline_f1_std) = mean_std(&base);
    Ok(AuditReport {
        attribute: attribute.to_owned(),
        classifier_f1,
        classifier_f1_std,
        baseline_f1,
        baseline_f1_std,
        fold_f1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ranker::Recommendation;
    use crate::splits::stratified_kfold;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn list_to_row() {
        let lists = TopNList {
            n: 2,
            users: vec!["u".into(), "v".into()],
            items: vec!["A".into(), "B".into(), "C".into()],
            lists: vec![
                vec![Recommendation { item: 2, score: 1.0 }, Recommendation { item: 0, score: 0.5 }],
                vec![],
            ],
        };
        let x = build_features(&lists, &lists.items).unwrap();
        assert_eq!(x.rows[0], vec![0, 2]);
        assert!(x.rows[1].is_empty());
        assert!(build_features(&lists, &["A".to_string(), "B".to_string()]).is_err());
    }

    #[test]
    fn macro_f1_cases() {
        assert_eq!(macro_f1(&[0, 1, 2, 1], &[0, 1, 2, 1]).unwrap(), 1.0);
        let truth = [0, 0, 0, 1];
        let f = macro_f1(&[0; 4], &truth).unwrap();
        assert!((f - (2.0 * 0.75 / 1.75) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn macro_f1_confusion_oracle() {
        // truth/pred over 3 classes, confusion matrix worked by hand:
        //          pred0 pred1 pred2
        // true0      2     1     0
        // true1      0     1     1
        // true2      1     0     2
        let truth = [0, 0, 0, 1, 1, 2, 2, 2];
        let pred = [0, 0, 1, 1, 2, 0, 2, 2];
        let f0 = 2.0 * (2.0 / 3.0) * (2.0 / 3.0) / (4.0 / 3.0);
        let f1 = 2.0 * 0.5 * 0.5 / 1.0;
        let f2 = 2.0 * (2.0 / 3.0) * (2.0 / 3.0) / (4.0 / 3.0);
        let want = (f0 + f1 + f2) / 3.0;
        assert!((macro_f1(&pred, &truth).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn macro_f1_symmetric_under_relabeling() {
        let truth = [0, 0, 1, 2, 2, 1, 0];
        let pred = [0, 1, 1, 2, 0, 1, 0];
        let perm = [2, 0, 1];
        let t2: Vec<usize> = truth.iter().map(|&c| perm[c]).collect();
        let p2: Vec<usize> = pred.iter().map(|&c| perm[c]).collect();
        assert!((macro_f1(&pred, &truth).unwrap() - macro_f1(&p2, &t2).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn baseline_uniform_four_classes() {
        let y: Vec<usize> = (0..40).map(|i| i % 4).collect();
        let b = most_frequent_baseline(&y).unwrap();
        assert_eq!(b.class, 0);
        let f = macro_f1(&b.predict_all(y.len()), &y).unwrap();
        assert!((f - 0.1).abs() < 1e-15);
    }

    #[test]
    fn baseline_binary_closed_form() {
        let y = [1, 1, 1, 0, 1, 0, 1, 1];
        let p = 6.0 / 8.0;
        let b = most_frequent_baseline(&y).unwrap();
        assert_eq!(b.class, 1);
        assert_eq!(macro_f1(&b.predict_all(8), &y).unwrap(), p / (1.0 + p));
    }

    fn separable() -> (ListFeatureMatrix, Vec<usize>) {
        let dense: Vec<Vec<u8>> = (0..20)
            .map(|r| if r % 2 == 0 { vec![1, 0, 1, 0] } else { vec![0, 1, 0, 1] })
            .collect();
        let y = (0..20).map(|r| r % 2).collect();
        (ListFeatureMatrix::from_dense(&dense), y)
    }

    #[test]
    fn separable_training_accuracy() {
        let (x, y) = separable();
        let m = train_logreg(&x, &y, 2, &ClassifierConfig::default()).unwrap();
        assert_eq!(m.predict_all(&x), y);
    }

    #[test]
    fn zero_iterations_is_uniform() {
        let (x, y) = separable();
        let cfg = ClassifierConfig { max_iterations: 0, ..ClassifierConfig::default() };
        let m = train_logreg(&x, &y, 3, &cfg).unwrap();
        for p in m.predict_proba(&x.rows[0]) {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn single_class_rejected() {
        let (x, _) = separable();
        assert!(train_logreg(&x, &[1; 20], 2, &ClassifierConfig::default()).is_err());
    }

    fn random_problem(seed: u64, rows: usize, cols: usize, classes: usize) -> (ListFeatureMatrix, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dense: Vec<Vec<u8>> = (0..rows)
            .map(|_| (0..cols).map(|_| u8::from(rng.gen_bool(0.3))).collect())
            .collect();
        let y = (0..rows)
            .map(|r| {
                let signal = dense[r][0] as usize + dense[r][1] as usize;
                if rng.gen_bool(0.8) { signal.min(classes - 1) } else { rng.gen_range(0..classes) }
            })
            .collect();
        (ListFeatureMatrix::from_dense(&dense), y)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (x, y) = random_problem(5, 30, 6, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let model = LogisticRegression::zeros(3, 6);
        let w: Vec<f64> = (0..model.weights.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let l2 = 0.7;
        let g = logreg_gradient(&model, &w, &x, &y, l2);
        let h = 1e-5;
        for i in 0..w.len() {
            let (mut wp, mut wm) = (w.clone(), w.clone());
            wp[i] += h;
            wm[i] -= h;
            let fd = (logreg_objective(&model, &wp, &x, &y, l2) - logreg_objective(&model, &wm, &x, &y, l2)) / (2.0 * h);
            let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-8);
            assert!(rel < 1e-4, "coord {i}: fd {fd} analytic {}", g[i]);
        }
    }

    #[test]
    fn objective_never_increases() {
        let (x, y) = random_problem(8, 40, 10, 3);
        let model = LogisticRegression::zeros(3, 10);
        let mut prev = logreg_objective(&model, &model.weights, &x, &y, 1.0);
        for iters in 1..30 {
            let cfg = ClassifierConfig { max_iterations: iters, convergence_tol: 1e-300, ..ClassifierConfig::default() };
            let m = train_logreg(&x, &y, 3, &cfg).unwrap();
            let f = logreg_objective(&m, &m.weights, &x, &y, 1.0);
            assert!(f <= prev + 1e-15, "iteration {iters}: {f} > {prev}");
            prev = f;
        }
    }

    #[test]
    fn cv_manual_two_split() {
        let (x, y) = random_problem(21, 24, 8, 2);
        let folds = stratified_kfold(&y, 2, 3).unwrap();
        let cfg = ClassifierConfig::default();
        let report = cross_validate("a", &x, &y, 2, &folds, &cfg).unwrap();
        let mut manual = Vec::new();
        for f in 0..2 {
            let train: Vec<usize> = (0..24).filter(|&r| folds.assignment[r] != f).collect();
            let test: Vec<usize> = (0..24).filter(|&r| folds.assignment[r] == f).collect();
            let xt = ListFeatureMatrix { num_columns: 8, rows: train.iter().map(|&r| x.rows[r].clone()).collect() };
            let yt: Vec<usize> = train.iter().map(|&r| y[r]).collect();
            let m = train_logreg(&xt, &yt, 2, &cfg).unwrap();
            let pred: Vec<usize> = test.iter().map(|&r| m.predict(&x.rows[r])).collect();
            let truth: Vec<usize> = test.iter().map(|&r| y[r]).collect();
            manual.push(macro_f1(&pred, &truth).unwrap());
        }
        assert_eq!(report.fold_f1, manual);
        assert!((report.classifier_f1 - (manual[0] + manual[1]) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn cv_invariant_to_row_shuffle() {
        let (x, y) = random_problem(4, 30, 7, 3);
        let folds = stratified_kfold(&y, 3, 9).unwrap();
        let cfg = ClassifierConfig::default();
        let a = cross_validate("a", &x, &y, 3, &folds, &cfg).unwrap();
        let mut perm: Vec<usize> = (0..30).collect();
        perm.reverse();
        let x2 = ListFeatureMatrix { num_columns: 7, rows: perm.iter().map(|&r| x.rows[r].clone()).collect() };
        let y2: Vec<usize> = perm.iter().map(|&r| y[r]).collect();
        let f2 = FoldAssignment { k: 3, assignment: perm.iter().map(|&r| folds.assignment[r]).collect() };
        let b = cross_validate("a", &x2, &y2, 3, &f2, &cfg).unwrap();
        assert!((a.classifier_f1 - b.classifier_f1).abs() < 1e-9);
        assert!((a.baseline_f1 - b.baseline_f1).abs() < 1e-15);
    }

    #[test]
    fn single_class_fold_reports_index() {
        let x = ListFeatureMatrix::from_dense(&vec![vec![1, 0]; 4]);
        let y = [0, 0, 0, 1];
        let folds = FoldAssignment { k: 2, assignment: vec![0, 0, 0, 1] };
        match cross_validate("g", &x, &y, 2, &folds, &ClassifierConfig::default()) {
            Err(Error::Fold { fold, .. }) => assert_eq!(fold, 0),
            other => panic!("unexpected {other:?}"),
        }
    }
}
