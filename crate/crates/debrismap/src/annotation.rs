//! Multi-annotator dense labels, consensus aggregation, and dataset manifests.
//!
//! Every image carries a dense per-pixel label over three density levels
//! (no debris / low-density / high-density). Multiple annotators label the
//! same image; [`aggregate_consensus`] merges their masks by taking the
//! per-pixel ceiling of the mean label, which resolves minor disagreements
//! and rectifies individual errors. Dataset manifests group labeled images
//! into train/validation/test splits with one event held out entirely for
//! testing.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Current on-disk manifest schema.
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum AnnotationError {
    #[error("mask contains value {value} at ({row}, {col}); labels must be in {{0,1,2}}")]
    InvalidLabel { value: u8, row: usize, col: usize },

    #[error("mask file {path} contains value {value}; labels must be in {{0,1,2}}")]
    InvalidLabelInFile { path: PathBuf, value: u8 },

    #[error("mask file {path} is not a single-channel 8-bit image")]
    NotSingleChannel { path: PathBuf },

    #[error("annotation stack is empty; at least one annotator mask is required")]
    EmptyStack,

    #[error("annotator mask {index} has dims {got:?}, expected {expected:?}")]
    ShapeMismatch {
        index: usize,
        got: (usize, usize),
        expected: (usize, usize),
    },

    #[error("duplicate annotator id {0:?} in stack")]
    DuplicateAnnotator(String),

    #[error("held-out event {0:?} has no records")]
    MissingHeldOutEvent(String),

    #[error("no records outside held-out event {0:?}; nothing to train on")]
    NoTrainingEvents(String),

    #[error("val_fraction must lie in (0,1), got {0}")]
    InvalidValFraction(f64),

    #[error("duplicate image_id {0:?} in manifest")]
    DuplicateImageId(String),

    #[error("held-out event {event:?} leaked into {split} split (image {image_id})")]
    HeldOutLeak {
        event: String,
        split: Split,
        image_id: String,
    },

    #[error("manifest incomplete: {0} record(s) missing consensus: {1:?}")]
    IncompleteManifest(usize, Vec<String>),

    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to decode image {path}: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("failed to parse manifest {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("manifest {path} has schema_version {got}, expected {expected}")]
    SchemaVersion {
        path: PathBuf,
        got: u32,
        expected: u32,
    },
}

/// Debris density level of a single pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DensityLevel {
    NoDebris,
    LowDensity,
    HighDensity,
}

impl DensityLevel {
    /// All levels in label order.
    pub const ALL: [DensityLevel; 3] = [
        DensityLevel::NoDebris,
        DensityLevel::LowDensity,
        DensityLevel::HighDensity,
    ];

    /// Debris levels only (everything except [`DensityLevel::NoDebris`]).
    pub const DEBRIS: [DensityLevel; 2] = [DensityLevel::LowDensity, DensityLevel::HighDensity];

    pub fn value(self) -> u8 {
        match self {
            DensityLevel::NoDebris => 0,
            DensityLevel::LowDensity => 1,
            DensityLevel::HighDensity => 2,
        }
    }

    pub fn from_value(value: u8) -> Option<Self> {
        match value {
            0 => Some(DensityLevel::NoDebris),
            1 => Some(DensityLevel::LowDensity),
            2 => Some(DensityLevel::HighDensity),
            _ => None,
        }
    }

    /// Fixed text prompt associated with this level.
    pub fn text_prompt(self) -> &'static str {
        match self {
            DensityLevel::NoDebris => "no debris",
            DensityLevel::LowDensity => "debris at low-density",
            DensityLevel::HighDensity => "debris at high-density",
        }
    }

    /// Short human-readable name.
    pub fn name(self) -> &'static str {
        match self {
            DensityLevel::NoDebris => "no-debris",
            DensityLevel::LowDensity => "low-density",
            DensityLevel::HighDensity => "high-density",
        }
    }
}

impl fmt::Display for DensityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Dense per-pixel density labels for one image. All entries are in {0,1,2}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DenseMask {
    labels: Array2<u8>,
}

impl DenseMask {
    /// Wrap a label grid, validating every entry.
    pub fn new(labels: Array2<u8>) -> Result<Self, AnnotationError> {
        for ((row, col), &value) in labels.indexed_iter() {
            if value > 2 {
                return Err(AnnotationError::InvalidLabel { value, row, col });
            }
        }
        Ok(Self { labels })
    }

    /// Constant mask of the given level.
    pub fn filled(height: usize, width: usize, level: DensityLevel) -> Self {
        Self {
            labels: Array2::from_elem((height, width), level.value()),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.labels.dim()
    }

    pub fn labels(&self) -> &Array2<u8> {
        &self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.labels[(row, col)]
    }

    /// True iff any pixel carries a debris label.
    pub fn any_debris(&self) -> bool {
        self.labels.iter().any(|&v| v != 0)
    }

    /// True iff at least one pixel equals `level`.
    pub fn contains_level(&self, level: DensityLevel) -> bool {
        let v = level.value();
        self.labels.iter().any(|&x| x == v)
    }

    /// One-vs-rest binary mask: 1 where the pixel equals `level`, else 0.
    pub fn binarize(&self, level: DensityLevel) -> Array2<u8> {
        let v = level.value();
        self.labels.mapv(|x| u8::from(x == v))
    }

    /// Nearest-neighbor resample to `(out_h, out_w)`. Identity when the
    /// target matches the current dims. Label values are never interpolated.
    pub fn resize_nearest(&self, out_h: usize, out_w: usize) -> DenseMask {
        let (h, w) = self.dims();
        if (h, w) == (out_h, out_w) {
            return self.clone();
        }
        let mut out = Array2::<u8>::zeros((out_h, out_w));
        for r in 0..out_h {
            let src_r = nearest_index(r, out_h, h);
            for c in 0..out_w {
                let src_c = nearest_index(c, out_w, w);
                out[(r, c)] = self.labels[(src_r, src_c)];
            }
        }
        DenseMask { labels: out }
    }

    /// Load a mask from a single-channel 8-bit image. Values outside {0,1,2}
    /// are a hard error, never clamped.
    pub fn load_png(path: &Path) -> Result<Self, AnnotationError> {
        let img = image::open(path).map_err(|source| AnnotationError::Decode {
            path: path.to_path_buf(),
            source,
        })?;
        let gray = match img {
            image::DynamicImage::ImageLuma8(g) => g,
            _ => {
                return Err(AnnotationError::NotSingleChannel {
                    path: path.to_path_buf(),
                })
            }
        };
        let (w, h) = (gray.width() as usize, gray.height() as usize);
        let mut labels = Array2::<u8>::zeros((h, w));
        for (x, y, pixel) in gray.enumerate_pixels() {
            let value = pixel.0[0];
            if value > 2 {
                return Err(AnnotationError::InvalidLabelInFile {
                    path: path.to_path_buf(),
                    value,
                });
            }
            labels[(y as usize, x as usize)] = value;
        }
        Ok(Self { labels })
    }

    /// Write the mask as a single-channel 8-bit PNG with raw label values.
    pub fn save_png(&self, path: &Path) -> Result<(), AnnotationError> {
        let (h, w) = self.dims();
        let mut img = image::GrayImage::new(w as u32, h as u32);
        for (x, y, pixel) in img.enumerate_pixels_mut() {
            pixel.0[0] = self.labels[(y as usize, x as usize)];
        }
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|source| AnnotationError::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
        img.save(path).map_err(|source| AnnotationError::Decode {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn nearest_index(out_idx: usize, out_len: usize, src_len: usize) -> usize {
    // Center-aligned nearest neighbor; exact identity when out_len == src_len.
    let pos = (out_idx as f64 + 0.5) * src_len as f64 / out_len as f64;
    (pos.floor() as usize).min(src_len - 1)
}

/// H×W×N stack of per-annotator masks for one image.
#[derive(Debug, Clone)]
pub struct AnnotationStack {
    masks: Vec<DenseMask>,
    annotator_ids: Vec<String>,
}

impl AnnotationStack {
    pub fn new(
        masks: Vec<DenseMask>,
        annotator_ids: Vec<String>,
    ) -> Result<Self, AnnotationError> {
        if masks.is_empty() {
            return Err(AnnotationError::EmptyStack);
        }
        assert_eq!(masks.len(), annotator_ids.len(), "one id per mask");
        let expected = masks[0].dims();
        for (index, mask) in masks.iter().enumerate() {
            if mask.dims() != expected {
                return Err(AnnotationError::ShapeMismatch {
                    index,
                    got: mask.dims(),
                    expected,
                });
            }
        }
        let mut seen = BTreeSet::new();
        for id in &annotator_ids {
            if !seen.insert(id.clone()) {
                return Err(AnnotationError::DuplicateAnnotator(id.clone()));
            }
        }
        Ok(Self {
            masks,
            annotator_ids,
        })
    }

    pub fn num_annotators(&self) -> usize {
        self.masks.len()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.masks[0].dims()
    }

    pub fn masks(&self) -> &[DenseMask] {
        &self.masks
    }

    pub fn annotator_ids(&self) -> &[String] {
        &self.annotator_ids
    }
}

/// Aggregate an annotation stack into a consensus mask: per pixel, the
/// ceiling of the mean annotator label (smallest integer ≥ the mean).
///
/// Computed in exact integer arithmetic as `(sum + N - 1) / N`, so a single
/// annotator marking debris at a pixel forces a debris consensus there.
pub fn aggregate_consensus(stack: &AnnotationStack) -> DenseMask {
    let n = stack.num_annotators() as u32;
    let (h, w) = stack.dims();
    let mut sums = Array2::<u32>::zeros((h, w));
    for mask in stack.masks() {
        sums.zip_mut_with(mask.labels(), |acc, &v| *acc += u32::from(v));
    }
    let labels = sums.mapv(|s| ((s + n - 1) / n) as u8);
    DenseMask { labels }
}

/// True iff the consensus contains at least one debris pixel.
pub fn classify_positive(consensus: &DenseMask) -> bool {
    consensus.any_debris()
}

/// Dataset split a record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => f.write_str("train"),
            Split::Validation => f.write_str("validation"),
            Split::Test => f.write_str("test"),
        }
    }
}

/// One labeled image in the dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub image_id: String,
    pub event: String,
    pub region: String,
    pub split: Split,
    /// Set once the consensus exists; `None` marks an incomplete record.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub is_positive: Option<bool>,
    pub image_path: PathBuf,
    pub annotation_paths: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub consensus_path: Option<PathBuf>,
}

/// The full dataset: records plus the event held out for testing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub held_out_event: String,
    pub records: Vec<DatasetRecord>,
}

impl DatasetManifest {
    /// Validate manifest invariants: unique image ids, the held-out event
    /// confined to the test split, and only the held-out event in test.
    pub fn validate(&self) -> Result<(), AnnotationError> {
        let mut seen = BTreeSet::new();
        for record in &self.records {
            if !seen.insert(record.image_id.clone()) {
                return Err(AnnotationError::DuplicateImageId(record.image_id.clone()));
            }
            let held_out = record.event == self.held_out_event;
            match record.split {
                Split::Test if !held_out => {
                    return Err(AnnotationError::HeldOutLeak {
                        event: record.event.clone(),
                        split: record.split,
                        image_id: record.image_id.clone(),
                    })
                }
                Split::Train | Split::Validation if held_out => {
                    return Err(AnnotationError::HeldOutLeak {
                        event: record.event.clone(),
                        split: record.split,
                        image_id: record.image_id.clone(),
                    })
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn records_in(&self, split: Split) -> impl Iterator<Item = &DatasetRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn save(&self, path: &Path) -> Result<(), AnnotationError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|source| AnnotationError::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text).map_err(|source| AnnotationError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, AnnotationError> {
        let text = std::fs::read_to_string(path).map_err(|source| AnnotationError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let manifest: DatasetManifest =
            serde_json::from_str(&text).map_err(|source| AnnotationError::Parse {
                path: path.to_path_buf(),
                source,
            })?;
        if manifest.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(AnnotationError::SchemaVersion {
                path: path.to_path_buf(),
                got: manifest.schema_version,
                expected: MANIFEST_SCHEMA_VERSION,
            });
        }
        manifest.validate()?;
        Ok(manifest)
    }
}

/// Assign splits: every record of `held_out_event` goes to test; the rest are
/// shuffled with `seed` and split train/validation at `val_fraction`.
pub fn split_by_event(
    records: Vec<DatasetRecord>,
    held_out_event: &str,
    val_fraction: f64,
    seed: u64,
) -> Result<DatasetManifest, AnnotationError> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(AnnotationError::InvalidValFraction(val_fraction));
    }
    let mut test = Vec::new();
    let mut rest = Vec::new();
    for record in records {
        if record.event == held_out_event {
            test.push(record);
        } else {
            rest.push(record);
        }
    }
    if test.is_empty() {
        return Err(AnnotationError::MissingHeldOutEvent(
            held_out_event.to_string(),
        ));
    }
    if rest.is_empty() {
        return Err(AnnotationError::NoTrainingEvents(held_out_event.to_string()));
    }

    // Sort before shuffling so the split depends only on ids and the seed,
    // not on input ordering.
    rest.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rest.shuffle(&mut rng);

    let n = rest.len();
    let mut n_val = (val_fraction * n as f64).round() as usize;
    if n > 1 {
        n_val = n_val.clamp(1, n - 1);
    } else {
        n_val = 0;
    }

    let mut records = Vec::with_capacity(n + test.len());
    for (idx, mut record) in rest.into_iter().enumerate() {
        record.split = if idx < n_val {
            Split::Validation
        } else {
            Split::Train
        };
        records.push(record);
    }
    for mut record in test {
        record.split = Split::Test;
        records.push(record);
    }
    records.sort_by(|a, b| a.image_id.cmp(&b.image_id));

    let manifest = DatasetManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        held_out_event: held_out_event.to_string(),
        records,
    };
    manifest.validate()?;
    Ok(manifest)
}

/// Positive/negative counts for one split.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub positive: usize,
    pub negative: usize,
}

impl SplitCounts {
    pub fn total(&self) -> usize {
        self.positive + self.negative
    }
}

/// Per-split class balance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassBalance {
    pub train: SplitCounts,
    pub validation: SplitCounts,
    pub test: SplitCounts,
}

/// Count positive/negative records per split. Errors if any record is still
/// missing its consensus (and therefore its positive/negative call).
pub fn class_balance_report(manifest: &DatasetManifest) -> Result<ClassBalance, AnnotationError> {
    let missing: Vec<String> = manifest
        .records
        .iter()
        .filter(|r| r.is_positive.is_none())
        .map(|r| r.image_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(AnnotationError::IncompleteManifest(missing.len(), missing));
    }
    let mut balance = ClassBalance::default();
    for record in &manifest.records {
        let counts = match record.split {
            Split::Train => &mut balance.train,
            Split::Validation => &mut balance.validation,
            Split::Test => &mut balance.test,
        };
        if record.is_positive == Some(true) {
            counts.positive += 1;
        } else {
            counts.negative += 1;
        }
    }
    Ok(balance)
}

/// File name for one annotator's mask: `<image_id>__<annotator_id>.png`.
pub fn annotation_file_name(image_id: &str, annotator_id: &str) -> String {
    format!("{image_id}__{annotator_id}.png")
}

/// File name for a consensus mask: `<image_id>__consensus.png`.
pub fn consensus_file_name(image_id: &str) -> String {
    format!("{image_id}__consensus.png")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn mask(rows: Vec<Vec<u8>>) -> DenseMask {
        let h = rows.len();
        let w = rows[0].len();
        let flat: Vec<u8> = rows.into_iter().flatten().collect();
        DenseMask::new(Array2::from_shape_vec((h, w), flat).unwrap()).unwrap()
    }

    fn stack_of(pixel_rows: Vec<Vec<Vec<u8>>>) -> AnnotationStack {
        let ids = (0..pixel_rows.len()).map(|i| format!("a{i}")).collect();
        AnnotationStack::new(pixel_rows.into_iter().map(mask).collect(), ids).unwrap()
    }

    /// Scalar reference for the per-pixel consensus rule.
    fn consensus_oracle(labels: &[u8]) -> u8 {
        let n = labels.len() as f64;
        let mean = labels.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
        mean.ceil() as u8
    }

    #[test]
    fn consensus_triples() {
        // (0,0,0) -> 0, (0,0,1) -> 1, (2,2,1) -> 2, (1,2,0) -> 1.
        let cases: [(Vec<u8>, u8); 4] = [
            (vec![0, 0, 0], 0),
            (vec![0, 0, 1], 1),
            (vec![2, 2, 1], 2),
            (vec![1, 2, 0], 1),
        ];
        for (labels, expected) in cases {
            let stack = stack_of(labels.iter().map(|&v| vec![vec![v]]).collect());
            let consensus = aggregate_consensus(&stack);
            assert_eq!(consensus.get(0, 0), expected, "labels {labels:?}");
            assert_eq!(consensus_oracle(&labels), expected);
        }
    }

    #[test]
    fn consensus_all_27_triples_match_oracle() {
        for a in 0..=2u8 {
            for b in 0..=2u8 {
                for c in 0..=2u8 {
                    let stack = stack_of(vec![vec![vec![a]], vec![vec![b]], vec![vec![c]]]);
                    let got = aggregate_consensus(&stack).get(0, 0);
                    assert_eq!(got, consensus_oracle(&[a, b, c]), "({a},{b},{c})");
                }
            }
        }
    }

    #[test]
    fn consensus_single_annotator_is_identity() {
        let m = mask(vec![vec![0, 1], vec![2, 1]]);
        let stack = AnnotationStack::new(vec![m.clone()], vec!["solo".into()]).unwrap();
        assert_eq!(aggregate_consensus(&stack), m);
    }

    #[test]
    fn empty_stack_rejected() {
        assert!(matches!(
            AnnotationStack::new(vec![], vec![]),
            Err(AnnotationError::EmptyStack)
        ));
    }

    #[test]
    fn mismatched_dims_rejected() {
        let err = AnnotationStack::new(
            vec![mask(vec![vec![0]]), mask(vec![vec![0, 1]])],
            vec!["a".into(), "b".into()],
        )
        .unwrap_err();
        assert!(matches!(err, AnnotationError::ShapeMismatch { index: 1, .. }));
    }

    #[test]
    fn binarize_matches_definition() {
        let m = mask(vec![vec![0, 1], vec![2, 1]]);
        assert_eq!(
            m.binarize(DensityLevel::LowDensity),
            array![[0, 1], [0, 1]]
        );
        let all_two = DenseMask::filled(2, 2, DensityLevel::HighDensity);
        assert_eq!(
            all_two.binarize(DensityLevel::HighDensity),
            Array2::from_elem((2, 2), 1)
        );
        assert_eq!(
            all_two.binarize(DensityLevel::LowDensity),
            Array2::zeros((2, 2))
        );
    }

    #[test]
    fn classify_positive_cases() {
        assert!(!classify_positive(&DenseMask::filled(
            3,
            3,
            DensityLevel::NoDebris
        )));
        let mut one_low = Array2::<u8>::zeros((3, 3));
        one_low[(1, 1)] = 1;
        assert!(classify_positive(&DenseMask::new(one_low).unwrap()));
        let mut one_high = Array2::<u8>::zeros((3, 3));
        one_high[(2, 0)] = 2;
        assert!(classify_positive(&DenseMask::new(one_high).unwrap()));
    }

    #[test]
    fn invalid_label_rejected() {
        let arr = array![[0u8, 3u8]];
        assert!(matches!(
            DenseMask::new(arr),
            Err(AnnotationError::InvalidLabel { value: 3, .. })
        ));
    }

    fn record(id: &str, event: &str) -> DatasetRecord {
        DatasetRecord {
            image_id: id.to_string(),
            event: event.to_string(),
            region: "r".to_string(),
            split: Split::Train,
            is_positive: Some(true),
            image_path: PathBuf::from(format!("{id}.png")),
            annotation_paths: vec![],
            consensus_path: None,
        }
    }

    #[test]
    fn split_holds_out_event_entirely() {
        let mut records = Vec::new();
        for i in 0..20 {
            records.push(record(&format!("a{i:02}"), "event-a"));
        }
        for i in 0..10 {
            records.push(record(&format!("b{i:02}"), "event-b"));
        }
        for i in 0..8 {
            records.push(record(&format!("c{i:02}"), "event-c"));
        }
        let manifest = split_by_event(records, "event-c", 0.25, 7).unwrap();
        for r in &manifest.records {
            if r.event == "event-c" {
                assert_eq!(r.split, Split::Test);
            } else {
                assert_ne!(r.split, Split::Test);
            }
        }
        let n_val = manifest.records_in(Split::Validation).count();
        assert_eq!(n_val, (0.25f64 * 30.0).round() as usize);
        assert_eq!(manifest.records_in(Split::Test).count(), 8);
    }

    #[test]
    fn split_is_deterministic_for_fixed_seed() {
        let make = || {
            let mut records: Vec<_> = (0..30)
                .map(|i| record(&format!("x{i:02}"), "event-a"))
                .collect();
            records.push(record("t0", "event-t"));
            records
        };
        let a = split_by_event(make(), "event-t", 0.2, 42).unwrap();
        let b = split_by_event(make(), "event-t", 0.2, 42).unwrap();
        let splits = |m: &DatasetManifest| {
            m.records
                .iter()
                .map(|r| (r.image_id.clone(), r.split))
                .collect::<Vec<_>>()
        };
        assert_eq!(splits(&a), splits(&b));
        let c = split_by_event(make(), "event-t", 0.2, 43).unwrap();
        assert_ne!(splits(&a), splits(&c), "different seed should reshuffle");
    }

    #[test]
    fn split_missing_event_is_configuration_error() {
        let records = vec![record("a", "event-a")];
        assert!(matches!(
            split_by_event(records, "event-z", 0.2, 0),
            Err(AnnotationError::MissingHeldOutEvent(_))
        ));
    }

    #[test]
    fn balance_counts_and_incomplete_error() {
        let mut records = vec![
            record("p1", "event-a"),
            record("p2", "event-a"),
            record("n1", "event-a"),
            record("n2", "event-a"),
        ];
        records[2].is_positive = Some(false);
        records[3].is_positive = Some(false);
        for r in &mut records {
            r.split = Split::Test;
        }
        let manifest = DatasetManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            held_out_event: "event-a".to_string(),
            records,
        };
        let balance = class_balance_report(&manifest).unwrap();
        assert_eq!(balance.test.positive, 2);
        assert_eq!(balance.test.negative, 2);
        assert_eq!(balance.train.total(), 0);

        let mut incomplete = manifest.clone();
        incomplete.records[0].is_positive = None;
        assert!(matches!(
            class_balance_report(&incomplete),
            Err(AnnotationError::IncompleteManifest(1, _))
        ));
    }

    #[test]
    fn empty_manifest_balance_is_all_zero() {
        let manifest = DatasetManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            held_out_event: "event-a".to_string(),
            records: vec![],
        };
        let balance = class_balance_report(&manifest).unwrap();
        assert_eq!(balance, ClassBalance::default());
    }

    #[test]
    fn mask_png_round_trip_and_invalid_value() {
        let dir = tempfile::tempdir().unwrap();
        let m = mask(vec![vec![0, 1, 2], vec![2, 1, 0]]);
        let path = dir.path().join("m.png");
        m.save_png(&path).unwrap();
        assert_eq!(DenseMask::load_png(&path).unwrap(), m);

        // A value of 3 in the file must be a hard load error.
        let bad = image::GrayImage::from_pixel(2, 2, image::Luma([3u8]));
        let bad_path = dir.path().join("bad.png");
        bad.save(&bad_path).unwrap();
        assert!(matches!(
            DenseMask::load_png(&bad_path),
            Err(AnnotationError::InvalidLabelInFile { value: 3, .. })
        ));
    }

    proptest! {
        /// Vectorized consensus equals the per-pixel scalar oracle.
        #[test]
        fn consensus_matches_scalar_oracle(
            h in 1usize..16,
            w in 1usize..16,
            n in 1usize..=5,
            seed in any::<u64>(),
        ) {
            use rand::Rng;
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let masks: Vec<DenseMask> = (0..n)
                .map(|_| {
                    let data: Vec<u8> = (0..h * w).map(|_| rng.random_range(0..=2)).collect();
                    DenseMask::new(Array2::from_shape_vec((h, w), data).unwrap()).unwrap()
                })
                .collect();
            let ids = (0..n).map(|i| format!("a{i}")).collect();
            let stack = AnnotationStack::new(masks, ids).unwrap();
            let consensus = aggregate_consensus(&stack);
            for r in 0..h {
                for c in 0..w {
                    let labels: Vec<u8> = stack.masks().iter().map(|m| m.get(r, c)).collect();
                    prop_assert_eq!(consensus.get(r, c), consensus_oracle(&labels));
                }
            }
        }

        /// Raising one annotator's label never lowers the consensus, and the
        /// consensus stays within the per-pixel min/max annotator labels.
        #[test]
        fn consensus_monotone_and_in_range(
            labels in proptest::collection::vec(0u8..=2, 1..=5),
            bump in 0usize..5,
        ) {
            let base = consensus_oracle(&labels);
            let min = *labels.iter().min().unwrap();
            let max = *labels.iter().max().unwrap();
            prop_assert!(base >= min && base <= max);
            // Sensitivity floor: any debris label forces consensus >= 1.
            if labels.iter().any(|&v| v > 0) {
                prop_assert!(base >= 1);
            }
            let mut raised = labels.clone();
            let idx = bump % raised.len();
            if raised[idx] < 2 {
                raised[idx] += 1;
                prop_assert!(consensus_oracle(&raised) >= base);
            }
        }
    }
}
