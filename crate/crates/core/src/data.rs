//! Dataset ingestion, the 40/40/20 partition, vertical feature splitting,
//! and train-split standardization.

use crate::error::{CoreError, Result};
use crate::matrix::Matrix2D;
use crate::rng::stream_rng;
use rand::seq::SliceRandom;
use std::collections::{BTreeSet, HashMap};
use std::path::Path;

/// Column layout of a party's CSV: an id column, optional label column
/// (host only), and the remaining columns as features in header order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSchema {
    pub id_column: String,
    pub label_column: Option<String>,
    pub feature_columns: Vec<String>,
}

/// One party's ID-indexed feature table. The host additionally holds labels.
#[derive(Clone, Debug)]
pub struct PartyDataset {
    pub ids: Vec<String>,
    pub feature_names: Vec<String>,
    pub features: Matrix2D,
    pub labels: Option<Vec<f64>>,
    index: HashMap<String, usize>,
}

impl PartyDataset {
    pub fn new(
        ids: Vec<String>,
        feature_names: Vec<String>,
        features: Matrix2D,
        labels: Option<Vec<f64>>,
    ) -> Result<Self> {
        if features.rows() != ids.len() {
            return Err(CoreError::ShapeMismatch {
                context: "PartyDataset".into(),
                expected: format!("{} rows", ids.len()),
                actual: format!("{} rows", features.rows()),
            });
        }
        if features.cols() != feature_names.len() {
            return Err(CoreError::ShapeMismatch {
                context: "PartyDataset".into(),
                expected: format!("{} feature columns", feature_names.len()),
                actual: format!("{}", features.cols()),
            });
        }
        if let Some(l) = &labels {
            if l.len() != ids.len() {
                return Err(CoreError::ShapeMismatch {
                    context: "PartyDataset labels".into(),
                    expected: format!("{}", ids.len()),
                    actual: format!("{}", l.len()),
                });
            }
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(CoreError::DuplicateId(id.clone()));
            }
        }
        Ok(Self {
            ids,
            feature_names,
            features,
            labels,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn contains_id(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn row_index(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| CoreError::UnknownId(id.to_string()))
    }

    /// Feature rows for the given ids, in the requested order.
    pub fn rows_for_ids(&self, ids: &[String]) -> Result<Matrix2D> {
        let indices = ids
            .iter()
            .map(|id| self.row_index(id))
            .collect::<Result<Vec<_>>>()?;
        self.features.select_rows(&indices)
    }

    /// Label column (as a `[n×1]` matrix) for the given ids.
    pub fn labels_for_ids(&self, ids: &[String]) -> Result<Matrix2D> {
        let labels = self
            .labels
            .as_ref()
            .ok_or_else(|| CoreError::Empty("party holds no labels".into()))?;
        let mut out = Vec::with_capacity(ids.len());
        for id in ids {
            out.push(labels[self.row_index(id)?]);
        }
        Ok(Matrix2D::column(&out))
    }

    pub fn id_set(&self) -> BTreeSet<String> {
        self.ids.iter().cloned().collect()
    }
}

/// Reads a CSV with a header row. Every column other than the id column and
/// the optional label column becomes a feature, in header order. Missing or
/// non-numeric cells are rejected.
pub fn load_csv(
    path: impl AsRef<Path>,
    id_column: &str,
    label_column: Option<&str>,
) -> Result<PartyDataset> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let id_pos = headers
        .iter()
        .position(|h| h == id_column)
        .ok_or_else(|| CoreError::MissingColumn(id_column.to_string()))?;
    let label_pos = match label_column {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| CoreError::MissingColumn(name.to_string()))?,
        ),
        None => None,
    };
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != id_pos && Some(*i) != label_pos)
        .map(|(_, h)| h.clone())
        .collect();
    let feature_pos: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != id_pos && Some(*i) != label_pos)
        .map(|(i, _)| i)
        .collect();

    let mut ids = Vec::new();
    let mut data = Vec::new();
    let mut labels = label_pos.map(|_| Vec::new());
    for (row_no, record) in reader.records().enumerate() {
        let record = record?;
        let id = record
            .get(id_pos)
            .ok_or_else(|| CoreError::MissingColumn(id_column.to_string()))?;
        ids.push(id.to_string());
        for &p in &feature_pos {
            let cell = record.get(p).unwrap_or("");
            let value: f64 = cell.trim().parse().map_err(|_| CoreError::NonNumericCell {
                row: row_no + 1,
                column: headers[p].clone(),
                value: cell.to_string(),
            })?;
            data.push(value);
        }
        if let (Some(lp), Some(buf)) = (label_pos, labels.as_mut()) {
            let cell = record.get(lp).unwrap_or("");
            let value: f64 = cell.trim().parse().map_err(|_| CoreError::NonNumericCell {
                row: row_no + 1,
                column: headers[lp].clone(),
                value: cell.to_string(),
            })?;
            if value != 0.0 && value != 1.0 {
                return Err(CoreError::InvalidLabel(value));
            }
            buf.push(value);
        }
    }
    let rows = ids.len();
    let features = Matrix2D::from_vec(rows, feature_names.len(), data)?;
    PartyDataset::new(ids, feature_names, features, labels)
}

/// Fractions for the self-taught / train / test partition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PartitionSpec {
    pub self_taught: f64,
    pub train: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for PartitionSpec {
    fn default() -> Self {
        Self {
            self_taught: 0.40,
            train: 0.40,
            test: 0.20,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    pub self_taught: Vec<String>,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// Splits ids into disjoint self-taught / train / test lists. Sizes follow
/// the floor rule: ⌊f·N⌋ for the first two splits, remainder to test.
pub fn partition(ids: &[String], spec: &PartitionSpec) -> Result<Partition> {
    if (spec.self_taught + spec.train + spec.test - 1.0).abs() > 1e-9 {
        return Err(CoreError::InvalidSplit(format!(
            "partition fractions sum to {}",
            spec.self_taught + spec.train + spec.test
        )));
    }
    let n = ids.len();
    if n < 5 {
        return Err(CoreError::PartitionTooSmall(n));
    }
    let mut shuffled: Vec<String> = ids.to_vec();
    shuffled.sort(); // canonical base order, independent of input order
    let mut rng = stream_rng(spec.seed, "partition", 0);
    shuffled.shuffle(&mut rng);
    let n_self = (spec.self_taught * n as f64).floor() as usize;
    let n_train = (spec.train * n as f64).floor() as usize;
    let self_taught = shuffled[..n_self].to_vec();
    let train = shuffled[n_self..n_self + n_train].to_vec();
    let test = shuffled[n_self + n_train..].to_vec();
    Ok(Partition {
        self_taught,
        train,
        test,
    })
}

/// Assignment of every feature to exactly one party; the host keeps the label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerticalSplitSpec {
    pub host_features: Vec<String>,
    pub guest_features: Vec<Vec<String>>,
}

impl VerticalSplitSpec {
    /// Default split: host takes the first ⌈d/2⌉ features, one guest the rest.
    pub fn default_half(feature_names: &[String]) -> Self {
        let host_count = feature_names.len().div_ceil(2);
        Self {
            host_features: feature_names[..host_count].to_vec(),
            guest_features: vec![feature_names[host_count..].to_vec()],
        }
    }

    pub fn validate(&self, feature_names: &[String]) -> Result<()> {
        let all: BTreeSet<&String> = feature_names.iter().collect();
        let mut seen = BTreeSet::new();
        for name in self
            .host_features
            .iter()
            .chain(self.guest_features.iter().flatten())
        {
            if !all.contains(name) {
                return Err(CoreError::InvalidSplit(format!(
                    "unknown feature {name:?}"
                )));
            }
            if !seen.insert(name) {
                return Err(CoreError::InvalidSplit(format!(
                    "feature {name:?} assigned twice"
                )));
            }
        }
        if seen.len() != all.len() {
            return Err(CoreError::InvalidSplit(
                "every feature must be assigned to exactly one party".into(),
            ));
        }
        for (k, guest) in self.guest_features.iter().enumerate() {
            if guest.is_empty() {
                return Err(CoreError::InvalidSplit(format!(
                    "guest {k} contributes no features beyond the host's schema"
                )));
            }
        }
        Ok(())
    }
}

/// Projects the full table into per-party datasets. The host keeps the label
/// column; each guest must end up with at least one feature of its own.
pub fn vertical_split(
    dataset: &PartyDataset,
    spec: &VerticalSplitSpec,
) -> Result<(PartyDataset, Vec<PartyDataset>)> {
    spec.validate(&dataset.feature_names)?;
    let col_of = |name: &String| -> usize {
        dataset
            .feature_names
            .iter()
            .position(|f| f == name)
            .expect("validated")
    };
    let project = |names: &[String]| -> Result<Matrix2D> {
        let mut data = Vec::with_capacity(dataset.len() * names.len());
        let cols: Vec<usize> = names.iter().map(col_of).collect();
        for r in 0..dataset.len() {
            let row = dataset.features.row(r);
            for &c in &cols {
                data.push(row[c]);
            }
        }
        Matrix2D::from_vec(dataset.len(), names.len(), data)
    };
    let host = PartyDataset::new(
        dataset.ids.clone(),
        spec.host_features.clone(),
        project(&spec.host_features)?,
        dataset.labels.clone(),
    )?;
    let guests = spec
        .guest_features
        .iter()
        .map(|names| {
            PartyDataset::new(
                dataset.ids.clone(),
                names.clone(),
                project(names)?,
                None,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((host, guests))
}

/// Per-column mean/std computed on the training split only, applied
/// identically to every split. Constant columns hit the std floor and land
/// on zero instead of blowing up.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

pub const STD_FLOOR: f64 = 1e-8;

impl Standardizer {
    pub fn fit(dataset: &PartyDataset, train_ids: &[String]) -> Result<Self> {
        if train_ids.is_empty() {
            return Err(CoreError::Empty("Standardizer::fit on no rows".into()));
        }
        let rows = dataset.rows_for_ids(train_ids)?;
        let n = rows.rows() as f64;
        let mut means = vec![0.0; rows.cols()];
        for r in 0..rows.rows() {
            for (m, v) in means.iter_mut().zip(rows.row(r)) {
                *m += v;
            }
        }
        for m in &mut means {
            *m /= n;
        }
        let mut stds = vec![0.0; rows.cols()];
        for r in 0..rows.rows() {
            for ((s, m), v) in stds.iter_mut().zip(&means).zip(rows.row(r)) {
                *s += (v - m).powi(2);
            }
        }
        for s in &mut stds {
            *s = (*s / n).sqrt().max(STD_FLOOR);
        }
        Ok(Self { means, stds })
    }

    pub fn apply(&self, dataset: &PartyDataset) -> Result<PartyDataset> {
        if self.means.len() != dataset.feature_dim() {
            return Err(CoreError::ShapeMismatch {
                context: "Standardizer::apply".into(),
                expected: format!("{} columns", self.means.len()),
                actual: format!("{}", dataset.feature_dim()),
            });
        }
        let mut features = dataset.features.clone();
        let cols = features.cols();
        for r in 0..features.rows() {
            let row = &mut features.data_mut()[r * cols..(r + 1) * cols];
            for ((v, m), s) in row.iter_mut().zip(&self.means).zip(&self.stds) {
                *v = (*v - m) / s;
            }
        }
        PartyDataset::new(
            dataset.ids.clone(),
            dataset.feature_names.clone(),
            features,
            dataset.labels.clone(),
        )
    }
}
