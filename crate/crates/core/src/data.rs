//! Datasets: Gaussian-mixture synthesis, IDX and CSV loaders, and
//! deterministic batching.

use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::LabeledBatch;
use crate::rng::{rng_for, stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// How raw values were mapped into `[0, 1]`; enough to invert the mapping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Normalization {
    Identity,
    /// `x / divisor`.
    Scale {
        divisor: f64,
    },
    /// `(x - min) / (max - min)` with one pair of bounds for every feature.
    GlobalMinMax {
        min: f64,
        max: f64,
    },
    /// Per-column bounds. Constant columns map to 0.
    PerColumnMinMax {
        mins: Vec<f64>,
        maxs: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub normalization: Normalization,
    /// Always `"none"`: no augmentation pipeline exists.
    pub augmentation: String,
}

impl Provenance {
    pub fn new(source: impl Into<String>, normalization: Normalization) -> Self {
        Self {
            source: source.into(),
            normalization,
            augmentation: "none".into(),
        }
    }
}

/// Labeled examples with features in `[0, 1]` and 0-based labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    num_classes: usize,
    split: Split,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        num_classes: usize,
        split: Split,
        provenance: Provenance,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Empty("dataset".into()));
        }
        if num_classes < 2 {
            return Err(Error::config("num_classes", "need at least 2 classes"));
        }
        if features.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                context: "dataset rows",
                expected: labels.len(),
                actual: features.nrows(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange { label, num_classes });
        }
        if features.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Domain("dataset features must lie in [0, 1]".into()));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
            split,
            provenance,
        })
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows at `indices`, same split and provenance.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let b = self.batch(indices)?;
        Dataset::new(
            b.features().clone(),
            b.labels().to_vec(),
            self.num_classes,
            self.split,
            self.provenance.clone(),
        )
    }

    /// Rows at `indices`, in that order, as a batch.
    pub fn batch(&self, indices: &[usize]) -> Result<LabeledBatch> {
        let features = self.features.select(Axis(0), indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        LabeledBatch::new(features, labels, self.num_classes)
    }

    pub fn as_batch(&self) -> Result<LabeledBatch> {
        LabeledBatch::new(self.features.clone(), self.labels.clone(), self.num_classes)
    }
}

/// Isotropic Gaussian mixture with one component per class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub num_classes: usize,
    pub dim: usize,
    pub means: Vec<Vec<f64>>,
    pub spread: f64,
    pub samples_per_class: usize,
    pub seed: u64,
}

impl MixtureSpec {
    /// Three classes on a line. Classes 0 and 1 sit close together; class 2
    /// is further out, so class 1 is squeezed between two neighbours and is
    /// the hardest.
    pub fn toy3(samples_per_class: usize, seed: u64) -> Self {
        Self {
            num_classes: 3,
            dim: 2,
            means: vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![2.2, 0.0]],
            spread: 0.35,
            samples_per_class,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::config("num_classes", "need at least 2 classes"));
        }
        if self.means.len() != self.num_classes {
            return Err(Error::DimensionMismatch {
                context: "mixture means",
                expected: self.num_classes,
                actual: self.means.len(),
            });
        }
        if let Some(m) = self.means.iter().find(|m| m.len() != self.dim) {
            return Err(Error::DimensionMismatch {
                context: "mixture mean dimension",
                expected: self.dim,
                actual: m.len(),
            });
        }
        for i in 0..self.means.len() {
            for j in 0..i {
                if self.means[i] == self.means[j] {
                    return Err(Error::config("means", format!("means {j} and {i} coincide")));
                }
            }
        }
        if !(self.spread > 0.0 && self.spread.is_finite()) {
            return Err(Error::config("spread", "must be positive"));
        }
        if self.samples_per_class == 0 || self.dim == 0 {
            return Err(Error::config("samples_per_class", "must be positive"));
        }
        Ok(())
    }
}

fn draw_mixture(spec: &MixtureSpec, per_class: usize, stream_index: u64) -> (Array2<f64>, Vec<usize>) {
    let mut rng = rng_for(spec.seed, &[stream::DATA, stream_index]);
    let n = per_class * spec.num_classes;
    let mut features = Array2::zeros((n, spec.dim));
    let mut labels = Vec::with_capacity(n);
    for (k, mean) in spec.means.iter().enumerate() {
        for i in 0..per_class {
            let mut row = features.row_mut(k * per_class + i);
            for (x, &mu) in row.iter_mut().zip(mean) {
                let z: f64 = StandardNormal.sample(&mut rng);
                *x = mu + spec.spread * z;
            }
            labels.push(k);
        }
    }
    (features, labels)
}

fn rescale_global(features: &mut Array2<f64>, min: f64, max: f64) {
    let range = max - min;
    features.mapv_inplace(|v| {
        if range > 0.0 {
            ((v - min) / range).clamp(0.0, 1.0)
        } else {
            0.0
        }
    });
}

fn global_bounds<'a>(arrays: impl IntoIterator<Item = &'a Array2<f64>>) -> (f64, f64) {
    arrays
        .into_iter()
        .flat_map(|a| a.iter())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}

/// Sample `samples_per_class` points per class and min-max rescale all
/// features into `[0, 1]` with one global pair of bounds.
pub fn gen_gaussian_mixture(spec: &MixtureSpec) -> Result<Dataset> {
    spec.validate()?;
    let (mut features, labels) = draw_mixture(spec, spec.samples_per_class, 0);
    let (min, max) = global_bounds([&features]);
    rescale_global(&mut features, min, max);
    Dataset::new(
        features,
        labels,
        spec.num_classes,
        Split::Train,
        Provenance::new(
            format!("gaussian-mixture(seed={})", spec.seed),
            Normalization::GlobalMinMax { min, max },
        ),
    )
}

/// Train split of `spec.samples_per_class` per class and an independent test
/// split of `test_per_class`, rescaled with bounds shared across both.
pub fn gen_mixture_split(spec: &MixtureSpec, test_per_class: usize) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    if test_per_class == 0 {
        return Err(Error::config("test_per_class", "must be positive"));
    }
    let (mut train, train_labels) = draw_mixture(spec, spec.samples_per_class, 0);
    let (mut test, test_labels) = draw_mixture(spec, test_per_class, 1);
    let (min, max) = global_bounds([&train, &test]);
    rescale_global(&mut train, min, max);
    rescale_global(&mut test, min, max);
    let provenance = |split: &str| {
        Provenance::new(
            format!("gaussian-mixture(seed={},split={split})", spec.seed),
            Normalization::GlobalMinMax { min, max },
        )
    };
    Ok((
        Dataset::new(train, train_labels, spec.num_classes, Split::Train, provenance("train"))?,
        Dataset::new(test, test_labels, spec.num_classes, Split::Test, provenance("test"))?,
    ))
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

fn check_len(path: &Path, bytes: &[u8], expected: usize) -> Result<()> {
    if bytes.len() < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len(),
        });
    }
    Ok(())
}

fn check_magic(path: &Path, bytes: &[u8], expected: u32) -> Result<()> {
    check_len(path, bytes, 4)?;
    let found = be_u32(bytes, 0);
    if found != expected {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

/// Load an IDX image/label pair (unsigned byte payloads). Pixels are divided
/// by 255 and images are flattened row-major. The class count is one more
/// than the largest label (at least 2).
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let img = std::fs::read(images)?;
    check_magic(images, &img, IDX_IMAGES_MAGIC)?;
    check_len(images, &img, 16)?;
    let n = be_u32(&img, 4) as usize;
    let rows = be_u32(&img, 8) as usize;
    let cols = be_u32(&img, 12) as usize;
    let d = rows * cols;
    check_len(images, &img, 16 + n * d)?;

    let lab = std::fs::read(labels)?;
    check_magic(labels, &lab, IDX_LABELS_MAGIC)?;
    check_len(labels, &lab, 8)?;
    let n_labels = be_u32(&lab, 4) as usize;
    check_len(labels, &lab, 8 + n_labels)?;
    if n != n_labels {
        return Err(Error::CountMismatch {
            images: n,
            labels: n_labels,
        });
    }

    let features = Array2::from_shape_fn((n, d), |(i, j)| img[16 + i * d + j] as f64 / 255.0);
    let labels_vec: Vec<usize> = lab[8..8 + n].iter().map(|&b| b as usize).collect();
    let num_classes = labels_vec.iter().max().map_or(2, |&m| (m + 1).max(2));
    Dataset::new(
        features,
        labels_vec,
        num_classes,
        Split::Train,
        Provenance::new(
            format!("idx:{}", images.display()),
            Normalization::Scale { divisor: 255.0 },
        ),
    )
}

/// Layout of a numeric CSV file.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvSpec {
    pub label_column: usize,
    pub num_classes: usize,
    pub has_header: bool,
    /// Per-column min-max rescaling. When off, values must already lie in
    /// `[0, 1]`.
    pub normalize: bool,
}

/// Load a rectangular numeric CSV with an integral label column.
pub fn load_csv(path: &Path, spec: &CsvSpec) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(spec.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let parse_err = |line: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if *width.get_or_insert(record.len()) != record.len() {
            return Err(parse_err(
                line,
                format!("ragged row: {} fields, expected {}", record.len(), width.unwrap()),
            ));
        }
        if spec.label_column >= record.len() {
            return Err(parse_err(
                line,
                format!("label column {} out of range", spec.label_column),
            ));
        }
        let mut row = Vec::with_capacity(record.len() - 1);
        for (j, cell) in record.iter().enumerate() {
            if j == spec.label_column {
                let label: usize = cell
                    .parse()
                    .map_err(|_| parse_err(line, format!("label {cell:?} is not a nonnegative integer")))?;
                if label >= spec.num_classes {
                    return Err(parse_err(
                        line,
                        format!("label {label} out of range for {} classes", spec.num_classes),
                    ));
                }
                labels.push(label);
            } else {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| parse_err(line, format!("column {j}: {cell:?} is not numeric")))?;
                if !v.is_finite() {
                    return Err(parse_err(line, format!("column {j}: non-finite value")));
                }
                row.push(v);
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Empty(format!("{}: no data rows", path.display())));
    }
    let d = rows[0].len();
    let mut features = Array2::from_shape_fn((rows.len(), d), |(i, j)| rows[i][j]);

    let normalization = if spec.normalize {
        let mut mins = Vec::with_capacity(d);
        let mut maxs = Vec::with_capacity(d);
        for mut col in features.columns_mut() {
            let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
            let range = hi - lo;
            col.mapv_inplace(|v| if range > 0.0 { (v - lo) / range } else { 0.0 });
            mins.push(lo);
            maxs.push(hi);
        }
        Normalization::PerColumnMinMax { mins, maxs }
    } else {
        Normalization::Identity
    };

    Dataset::new(
        features,
        labels,
        spec.num_classes,
        Split::Train,
        Provenance::new(format!("csv:{}", path.display()), normalization),
    )
}

/// Write `label,f0,f1,...` with shortest round-trip float formatting.
pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["label".to_string()];
    header.extend((0..dataset.dim()).map(|j| format!("f{j}")));
    w.write_record(&header)?;
    for (row, &label) in dataset.features().outer_iter().zip(dataset.labels()) {
        let mut record = vec![label.to_string()];
        record.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Index order for one epoch: a permutation keyed by `(seed, epoch)`, or the
/// identity when `shuffle` is off.
pub fn epoch_order(n: usize, seed: u64, epoch: usize, shuffle: bool) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    if shuffle {
        order.shuffle(&mut rng_for(seed, &[stream::BATCH, epoch as u64]));
    }
    order
}

/// Class-interleaved order: each class is shuffled independently and the
/// classes are then dealt round-robin, so every window of `K` consecutive
/// indices holds one example per class while all classes last.
pub fn stratified_order(dataset: &Dataset, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = rng_for(seed, &[stream::BATCH, epoch as u64]);
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.num_classes()];
    for (i, &l) in dataset.labels().iter().enumerate() {
        per_class[l].push(i);
    }
    for class in &mut per_class {
        class.shuffle(&mut rng);
    }
    let longest = per_class.iter().map(Vec::len).max().unwrap_or(0);
    (0..longest)
        .flat_map(|i| per_class.iter().filter_map(move |c| c.get(i).copied()))
        .collect()
}

fn chunk(dataset: &Dataset, order: Vec<usize>, batch_size: usize) -> Result<Vec<LabeledBatch>> {
    order.chunks(batch_size).map(|idx| dataset.batch(idx)).collect()
}

/// Partition one epoch into batches; the last batch may be short.
pub fn batch_iter(
    dataset: &Dataset,
    batch_size: usize,
    seed: u64,
    epoch: usize,
    shuffle: bool,
) -> Result<Vec<LabeledBatch>> {
    if batch_size == 0 {
        return Err(Error::config("batch_size", "must be >= 1"));
    }
    if dataset.is_empty() {
        return Err(Error::Empty("dataset".into()));
    }
    chunk(dataset, epoch_order(dataset.len(), seed, epoch, shuffle), batch_size)
}

/// Like [`batch_iter`] but over [`stratified_order`]. On a balanced dataset
/// with `batch_size` a multiple of `K`, every batch is exactly balanced.
pub fn stratified_batch_iter(
    dataset: &Dataset,
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Result<Vec<LabeledBatch>> {
    if batch_size == 0 {
        return Err(Error::config("batch_size", "must be >= 1"));
    }
    chunk(dataset, stratified_order(dataset, seed, epoch), batch_size)
}
