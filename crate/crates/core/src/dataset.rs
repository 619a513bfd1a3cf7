//! Thyroid ("ann") pattern loading, min-max scaling and k-fold splits.
//!
//! The UCI `ann-train.data` / `ann-test.data` files hold one pattern per
//! line: 21 whitespace-separated attribute values followed by an integer
//! class label in `{1, 2, 3}`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Number of attributes per pattern in the "ann" Thyroid variant.
pub const THYROID_ATTRIBUTES: usize = 21;
/// Number of classes in the "ann" Thyroid variant.
pub const THYROID_CLASSES: usize = 3;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("input contains no patterns")]
    Empty,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Feature matrix with one-hot targets, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n_features: usize,
    n_classes: usize,
    features: Vec<f64>,
    targets: Vec<f64>,
    scaling: Option<Vec<(f64, f64)>>,
}

impl Dataset {
    /// Builds a dataset from flat row-major buffers.
    ///
    /// Every target row must be one-hot. An empty dataset (zero rows) is
    /// accepted so that callers can detect it downstream.
    pub fn new(
        n_features: usize,
        n_classes: usize,
        features: Vec<f64>,
        targets: Vec<f64>,
    ) -> Result<Self, DatasetError> {
        if n_features == 0 || n_classes == 0 {
            return Err(DatasetError::InvalidArgument(
                "feature and class counts must be positive".into(),
            ));
        }
        if !features.len().is_multiple_of(n_features) || !targets.len().is_multiple_of(n_classes) {
            return Err(DatasetError::InvalidArgument(
                "buffer lengths are not multiples of the column counts".into(),
            ));
        }
        let rows = features.len() / n_features;
        if targets.len() / n_classes != rows {
            return Err(DatasetError::InvalidArgument(format!(
                "{} feature rows but {} target rows",
                rows,
                targets.len() / n_classes
            )));
        }
        for (i, row) in targets.chunks(n_classes).enumerate() {
            let ones = row.iter().filter(|&&v| v == 1.0).count();
            let zeros = row.iter().filter(|&&v| v == 0.0).count();
            if ones != 1 || zeros != n_classes - 1 {
                return Err(DatasetError::InvalidArgument(format!(
                    "target row {i} is not one-hot"
                )));
            }
        }
        Ok(Self {
            n_features,
            n_classes,
            features,
            targets,
            scaling: None,
        })
    }

    /// Builds a dataset from explicit rows and zero-based class indices.
    pub fn from_labels(
        rows: &[Vec<f64>],
        labels: &[usize],
        n_classes: usize,
    ) -> Result<Self, DatasetError> {
        if rows.len() != labels.len() {
            return Err(DatasetError::InvalidArgument(
                "row and label counts differ".into(),
            ));
        }
        let n_features = rows.first().map_or(0, Vec::len);
        let mut features = Vec::with_capacity(rows.len() * n_features);
        let mut targets = vec![0.0; rows.len() * n_classes];
        for (i, (row, &label)) in rows.iter().zip(labels).enumerate() {
            if row.len() != n_features {
                return Err(DatasetError::InvalidArgument(format!(
                    "row {i} has {} features, expected {n_features}",
                    row.len()
                )));
            }
            if label >= n_classes {
                return Err(DatasetError::InvalidArgument(format!(
                    "label {label} out of range for {n_classes} classes"
                )));
            }
            features.extend_from_slice(row);
            targets[i * n_classes + label] = 1.0;
        }
        Self::new(n_features.max(1), n_classes, features, targets)
    }

    pub fn n_rows(&self) -> usize {
        self.features.len() / self.n_features
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn feature_row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn target_row(&self, i: usize) -> &[f64] {
        &self.targets[i * self.n_classes..(i + 1) * self.n_classes]
    }

    /// Zero-based class index of row `i`.
    pub fn label(&self, i: usize) -> usize {
        self.target_row(i)
            .iter()
            .position(|&v| v == 1.0)
            .expect("target rows are one-hot")
    }

    /// Per-column `(min, max)` recorded by [`scale_min_max`], if applied.
    pub fn scaling(&self) -> Option<&[(f64, f64)]> {
        self.scaling.as_deref()
    }

    /// Rows selected by `indices`, in the given order. Scaling metadata is kept.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        let mut targets = Vec::with_capacity(indices.len() * self.n_classes);
        for &i in indices {
            features.extend_from_slice(self.feature_row(i));
            targets.extend_from_slice(self.target_row(i));
        }
        Dataset {
            n_features: self.n_features,
            n_classes: self.n_classes,
            features,
            targets,
            scaling: self.scaling.clone(),
        }
    }

    /// Renders the dataset back into the whitespace-separated "ann" layout.
    ///
    /// Values use the shortest representation that parses back to the same
    /// `f64`, so [`parse_thyroid`] on the output reproduces the features.
    pub fn to_thyroid_string(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n_rows() {
            for v in self.feature_row(i) {
                write!(out, "{v} ").unwrap();
            }
            writeln!(out, "{}", self.label(i) + 1).unwrap();
        }
        out
    }
}

/// Parses "ann"-format text. Class label `c` maps to target column `c - 1`.
pub fn parse_thyroid(text: &str) -> Result<Dataset, DatasetError> {
    let mut features = Vec::new();
    let mut targets = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != THYROID_ATTRIBUTES + 1 {
            return Err(DatasetError::Parse {
                line: line_no,
                reason: format!(
                    "expected {} fields, found {}",
                    THYROID_ATTRIBUTES + 1,
                    tokens.len()
                ),
            });
        }
        for tok in &tokens[..THYROID_ATTRIBUTES] {
            let v: f64 = tok.parse().map_err(|_| DatasetError::Parse {
                line: line_no,
                reason: format!("non-numeric attribute {tok:?}"),
            })?;
            if !v.is_finite() {
                return Err(DatasetError::Parse {
                    line: line_no,
                    reason: format!("non-finite attribute {tok:?}"),
                });
            }
            features.push(v);
        }
        let label_tok = tokens[THYROID_ATTRIBUTES];
        let label: usize = match label_tok.parse() {
            Ok(c @ 1..=3) => c,
            _ => {
                return Err(DatasetError::Parse {
                    line: line_no,
                    reason: format!("class label {label_tok:?} is not one of 1, 2, 3"),
                })
            }
        };
        let mut row = [0.0; THYROID_CLASSES];
        row[label - 1] = 1.0;
        targets.extend_from_slice(&row);
    }
    if features.is_empty() {
        return Err(DatasetError::Empty);
    }
    Dataset::new(THYROID_ATTRIBUTES, THYROID_CLASSES, features, targets)
}

/// Reads and parses an "ann" Thyroid file. No scaling is applied.
pub fn load_thyroid(path: impl AsRef<Path>) -> Result<Dataset, DatasetError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_thyroid(&text)
}

/// Maps every feature column onto `[0, 1]` by `(x - min) / (max - min)`.
///
/// Constant columns map to 0. The per-column extremes are recorded in
/// [`Dataset::scaling`].
pub fn scale_min_max(d: &Dataset) -> Dataset {
    let cols = d.n_features;
    let mut extremes = vec![(f64::INFINITY, f64::NEG_INFINITY); cols];
    for row in d.features.chunks(cols) {
        for (ext, &v) in extremes.iter_mut().zip(row) {
            ext.0 = ext.0.min(v);
            ext.1 = ext.1.max(v);
        }
    }
    let mut features = d.features.clone();
    for row in features.chunks_mut(cols) {
        for (v, &(lo, hi)) in row.iter_mut().zip(&extremes) {
            *v = if hi > lo { (*v - lo) / (hi - lo) } else { 0.0 };
        }
    }
    Dataset {
        features,
        scaling: Some(extremes),
        ..d.clone()
    }
}

/// One fold of a k-fold partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub fold_id: usize,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Partitions `0..n_rows` into `k` folds after a seeded shuffle.
///
/// Fold sizes differ by at most one; the first `n_rows % k` folds get the
/// extra row. Index lists are sorted ascending.
pub fn kfold_split(n_rows: usize, k: usize, seed: u64) -> Result<Vec<FoldSplit>, DatasetError> {
    if k < 2 || k > n_rows {
        return Err(DatasetError::InvalidArgument(format!(
            "k-fold requires 2 <= k <= n_rows, got k={k}, n_rows={n_rows}"
        )));
    }
    let mut order: Vec<usize> = (0..n_rows).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let base = n_rows / k;
    let extra = n_rows % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for fold_id in 0..k {
        let len = base + usize::from(fold_id < extra);
        let mut test_indices = order[start..start + len].to_vec();
        test_indices.sort_unstable();
        let mut train_indices: Vec<usize> = order[..start]
            .iter()
            .chain(&order[start + len..])
            .copied()
            .collect();
        train_indices.sort_unstable();
        folds.push(FoldSplit {
            fold_id,
            train_indices,
            test_indices,
        });
        start += len;
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(values: &[f64], label: &str) -> String {
        let mut s: Vec<String> = values.iter().map(|v| v.to_string()).collect();
        s.push(label.to_string());
        s.join(" ")
    }

    #[test]
    fn parses_single_pattern() {
        let mut attrs = vec![0.0; THYROID_ATTRIBUTES];
        attrs[0] = 0.5;
        attrs[2] = 1.0;
        attrs[20] = 0.02;
        let d = parse_thyroid(&line(&attrs, "3")).unwrap();
        assert_eq!(d.n_rows(), 1);
        assert_eq!(d.feature_row(0), attrs.as_slice());
        assert_eq!(d.target_row(0), &[0.0, 0.0, 1.0]);
        assert!(d.scaling().is_none());
    }

    #[test]
    fn accepts_trailing_whitespace_like_the_uci_files() {
        let attrs = vec![0.1; THYROID_ATTRIBUTES];
        let text = format!("{}  \n{}   \n", line(&attrs, "1"), line(&attrs, "2"));
        let d = parse_thyroid(&text).unwrap();
        assert_eq!(d.n_rows(), 2);
        assert_eq!(d.label(0), 0);
        assert_eq!(d.label(1), 1);
    }

    #[test]
    fn short_line_reports_its_number() {
        let good = line(&[0.0; THYROID_ATTRIBUTES], "1");
        let bad = line(&[0.0; THYROID_ATTRIBUTES - 1], "1");
        let err = parse_thyroid(&format!("{good}\n{bad}\n")).unwrap_err();
        match err {
            DatasetError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_tokens_and_labels() {
        let mut attrs: Vec<String> = vec!["0".into(); THYROID_ATTRIBUTES];
        attrs[4] = "abc".into();
        let text = format!("{} 1", attrs.join(" "));
        assert!(matches!(
            parse_thyroid(&text),
            Err(DatasetError::Parse { line: 1, .. })
        ));
        for label in ["0", "4", "2.5", "x"] {
            let text = line(&[0.0; THYROID_ATTRIBUTES], label);
            assert!(
                matches!(
                    parse_thyroid(&text),
                    Err(DatasetError::Parse { line: 1, .. })
                ),
                "label {label}"
            );
        }
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(parse_thyroid(""), Err(DatasetError::Empty)));
        assert!(matches!(parse_thyroid("\n  \n"), Err(DatasetError::Empty)));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_thyroid("/nonexistent/ann-train.data"),
            Err(DatasetError::Io { .. })
        ));
    }

    fn column_dataset(col: &[f64]) -> Dataset {
        let rows: Vec<Vec<f64>> = col.iter().map(|&v| vec![v]).collect();
        Dataset::from_labels(&rows, &vec![0; col.len()], 1).unwrap()
    }

    #[test]
    fn min_max_examples() {
        let d = scale_min_max(&column_dataset(&[2.0, 4.0, 6.0]));
        assert_eq!(d.features(), &[0.0, 0.5, 1.0]);
        assert_eq!(d.scaling().unwrap(), &[(2.0, 6.0)]);

        let d = scale_min_max(&column_dataset(&[7.0, 7.0, 7.0]));
        assert_eq!(d.features(), &[0.0, 0.0, 0.0]);

        let d = scale_min_max(&column_dataset(&[0.0, 1.0]));
        assert_eq!(d.features(), &[0.0, 1.0]);
    }

    #[test]
    fn rejects_non_one_hot_targets() {
        assert!(Dataset::new(1, 2, vec![0.0], vec![1.0, 1.0]).is_err());
        assert!(Dataset::new(1, 2, vec![0.0], vec![0.5, 0.5]).is_err());
        assert!(Dataset::new(1, 2, vec![0.0, 1.0], vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn kfold_examples() {
        let folds = kfold_split(10, 10, 1).unwrap();
        assert_eq!(folds.len(), 10);
        assert!(folds.iter().all(|f| f.test_indices.len() == 1));

        let folds = kfold_split(10, 3, 1).unwrap();
        let mut sizes: Vec<usize> = folds.iter().map(|f| f.test_indices.len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![3, 3, 4]);

        assert_eq!(
            kfold_split(10, 3, 99).unwrap(),
            kfold_split(10, 3, 99).unwrap()
        );
        assert_ne!(
            kfold_split(50, 5, 1).unwrap(),
            kfold_split(50, 5, 2).unwrap()
        );
    }

    #[test]
    fn kfold_rejects_bad_k() {
        assert!(kfold_split(10, 1, 0).is_err());
        assert!(kfold_split(10, 11, 0).is_err());
        assert!(kfold_split(0, 2, 0).is_err());
    }

    proptest! {
        #[test]
        fn kfold_partitions_all_rows(n in 2usize..200, k_raw in 2usize..200, seed: u64) {
            let k = 2 + (k_raw - 2) % (n - 1);
            let folds = kfold_split(n, k, seed).unwrap();
            let mut seen = vec![0u32; n];
            for f in &folds {
                for &i in &f.test_indices { seen[i] += 1; }
                prop_assert_eq!(f.train_indices.len() + f.test_indices.len(), n);
                prop_assert!(f.train_indices.iter().all(|i| f.test_indices.binary_search(i).is_err()));
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
            let sizes: Vec<usize> = folds.iter().map(|f| f.test_indices.len()).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }

        #[test]
        fn scaling_lands_in_unit_interval_and_is_idempotent(
            rows in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 3), 1..40)
        ) {
            let d = Dataset::from_labels(&rows, &vec![0; rows.len()], 2).unwrap();
            let once = scale_min_max(&d);
            prop_assert!(once.features().iter().all(|v| (0.0..=1.0).contains(v)));
            let twice = scale_min_max(&once);
            prop_assert_eq!(once.features(), twice.features());
        }

        #[test]
        fn serialize_then_parse_round_trips(
            rows in prop::collection::vec(
                prop::collection::vec(-1e3f64..1e3, THYROID_ATTRIBUTES), 1..20),
            labels in prop::collection::vec(0usize..3, 20),
        ) {
            let labels = &labels[..rows.len()];
            let d = Dataset::from_labels(&rows, labels, THYROID_CLASSES).unwrap();
            let back = parse_thyroid(&d.to_thyroid_string()).unwrap();
            prop_assert_eq!(back, d);
        }
    }
}
