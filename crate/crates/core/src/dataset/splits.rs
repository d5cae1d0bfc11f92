//! Split manifests: train/val pairs with and without mesh augmentation, the
//! shape-generalization test (all U-mesh set1 samples) and the superposition
//! test (a 25% subsample of set3 over the four training meshes), plus the
//! per-channel normalization constants taken over both accumulated train
//! splits.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::generate::{set_file_name, DatasetMeta, SetKind};
use super::{DatasetError, NormConstants, ProblemTag, SampleRecord};
use crate::mesh::ShapeTag;
use crate::rng;

pub const SPLIT_NAMES: [&str; 6] = [
    "train_noaug",
    "val_noaug",
    "train_aug",
    "val_aug",
    "shape_test",
    "superposition_test",
];

/// Location of one sample: dataset file plus zero-based line index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileLine {
    pub file: String,
    pub line: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitManifest {
    pub problem: ProblemTag,
    pub config_hash: String,
    pub split_seed: u64,
    pub normalization: NormConstants,
    pub splits: BTreeMap<String, Vec<FileLine>>,
}

impl SplitManifest {
    pub fn split(&self, name: &str) -> Result<&[FileLine], DatasetError> {
        self.splits
            .get(name)
            .map(|v| v.as_slice())
            .ok_or_else(|| DatasetError::MissingSplit(name.to_string()))
    }
}

pub fn manifest_path(data_dir: &Path, problem: ProblemTag) -> PathBuf {
    data_dir.join(format!("{}_manifest.json", problem.as_str()))
}

pub fn read_manifest(data_dir: &Path, problem: ProblemTag) -> Result<SplitManifest, DatasetError> {
    let path = manifest_path(data_dir, problem);
    if !path.exists() {
        return Err(DatasetError::MissingSet(path.display().to_string()));
    }
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

fn count_lines(path: &Path) -> Result<usize, DatasetError> {
    if !path.exists() {
        return Err(DatasetError::MissingSet(path.display().to_string()));
    }
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    Ok(reader.lines().count())
}

/// Entries for one set over the four training shapes, in shape order then
/// file order.
fn train_shape_entries(
    data_dir: &Path,
    problem: ProblemTag,
    set: SetKind,
) -> Result<Vec<FileLine>, DatasetError> {
    let mut entries = Vec::new();
    for shape in ShapeTag::TRAIN {
        let name = set_file_name(problem, shape, set);
        let n = count_lines(&data_dir.join(&name))?;
        entries.extend((0..n).map(|line| FileLine {
            file: name.clone(),
            line,
        }));
    }
    Ok(entries)
}

fn split_80_20(mut entries: Vec<FileLine>, rng: &mut impl rand::Rng) -> (Vec<FileLine>, Vec<FileLine>) {
    entries.shuffle(rng);
    let n_train = (entries.len() as f64 * 0.8).round() as usize;
    let val = entries.split_off(n_train);
    (entries, val)
}

/// Build the manifest for one problem. Requires all sets of all five shapes
/// to be present in `data_dir`.
pub fn make_splits(
    data_dir: &Path,
    problem: ProblemTag,
    split_seed: u64,
) -> Result<SplitManifest, DatasetError> {
    let meta = DatasetMeta::read(data_dir)?;

    let mut splits = BTreeMap::new();

    let set1 = train_shape_entries(data_dir, problem, SetKind::Set1)?;
    let mut rng = rng::rng_for(
        split_seed,
        &[rng::tag("split"), rng::tag(problem.as_str()), 1],
    );
    let (train, val) = split_80_20(set1, &mut rng);
    splits.insert("train_noaug".to_string(), train);
    splits.insert("val_noaug".to_string(), val);

    let set2 = train_shape_entries(data_dir, problem, SetKind::Set2)?;
    let mut rng = rng::rng_for(
        split_seed,
        &[rng::tag("split"), rng::tag(problem.as_str()), 2],
    );
    let (train, val) = split_80_20(set2, &mut rng);
    splits.insert("train_aug".to_string(), train);
    splits.insert("val_aug".to_string(), val);

    // Shape generalization: every U-mesh set1 sample, in file order.
    let u_file = set_file_name(problem, ShapeTag::UMesh, SetKind::Set1);
    let n_u = count_lines(&data_dir.join(&u_file))?;
    splits.insert(
        "shape_test".to_string(),
        (0..n_u)
            .map(|line| FileLine {
                file: u_file.clone(),
                line,
            })
            .collect(),
    );

    // Superposition: uniform 25% subsample of set3 over the training shapes.
    let mut set3 = train_shape_entries(data_dir, problem, SetKind::Set3)?;
    let mut rng = rng::rng_for(
        split_seed,
        &[rng::tag("split"), rng::tag(problem.as_str()), 3],
    );
    set3.shuffle(&mut rng);
    let keep = (set3.len() as f64 * 0.25).round() as usize;
    set3.truncate(keep);
    splits.insert("superposition_test".to_string(), set3);

    // Normalization constants over the union of both train splits.
    let mut union: Vec<FileLine> = splits["train_noaug"].clone();
    union.extend(splits["train_aug"].iter().cloned());
    let train_records = read_entries(data_dir, &union)?;
    let normalization = compute_normalization(problem, train_records.iter());

    let manifest = SplitManifest {
        problem,
        config_hash: meta.config_hash.clone(),
        split_seed,
        normalization: normalization.clone(),
        splits,
    };
    let json = serde_json::to_string(&manifest)?;
    std::fs::write(manifest_path(data_dir, problem), json)?;

    let mut meta = meta;
    meta.normalization
        .insert(problem.as_str().to_string(), normalization);
    meta.write(data_dir)?;

    Ok(manifest)
}

/// Per-channel maximum absolute value over the given records; channels that
/// are identically zero get the constant 1.
pub fn compute_normalization<'a>(
    problem: ProblemTag,
    records: impl Iterator<Item = &'a SampleRecord>,
) -> NormConstants {
    let mut feat = vec![0.0f64; problem.in_dim()];
    let mut target = vec![0.0f64; problem.out_dim()];
    for rec in records {
        for row in &rec.feat {
            for (c, v) in row.iter().enumerate() {
                feat[c] = feat[c].max(v.abs());
            }
        }
        for row in &rec.target {
            for (c, v) in row.iter().enumerate() {
                target[c] = target[c].max(v.abs());
            }
        }
    }
    for v in feat.iter_mut().chain(target.iter_mut()) {
        if *v == 0.0 {
            *v = 1.0;
        }
    }
    NormConstants { feat, target }
}

/// Load the records referenced by a split, in manifest order.
pub fn read_split(
    data_dir: &Path,
    manifest: &SplitManifest,
    name: &str,
) -> Result<Vec<SampleRecord>, DatasetError> {
    read_entries(data_dir, manifest.split(name)?)
}

fn read_entries(data_dir: &Path, entries: &[FileLine]) -> Result<Vec<SampleRecord>, DatasetError> {
    let mut by_file: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for e in entries {
        if !by_file.contains_key(e.file.as_str()) {
            let path = data_dir.join(&e.file);
            if !path.exists() {
                return Err(DatasetError::MissingSet(path.display().to_string()));
            }
            let lines: Vec<String> = std::fs::read_to_string(&path)?
                .lines()
                .map(str::to_string)
                .collect();
            by_file.insert(e.file.as_str(), lines);
        }
    }
    entries
        .iter()
        .map(|e| {
            let lines = &by_file[e.file.as_str()];
            let line = lines.get(e.line).ok_or_else(|| {
                DatasetError::MissingSet(format!("{} line {}", e.file, e.line))
            })?;
            Ok(serde_json::from_str(line)?)
        })
        .collect()
}
