//! Set generation: for every (problem, mesh family) three sets of N samples
//! each -- set1 (default mesh, 1-3 sources), set2 (augmented mesh, 1-3
//! sources; the U-mesh is never augmented), set3 (default mesh, 4-5
//! sources). Samples are generated in parallel from per-sample derived
//! seeds and written in index order, so output files are byte-identical for
//! a given (config, master seed) regardless of worker scheduling.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    build_sample_impl, sample_fixed_lines, sample_sources, DatasetError, NormConstants,
    ProblemTag, Provenance, SourceField,
};
use crate::fem::PoissonOperator;
use crate::mesh::{generate_mesh, sample_augmented_spec, Mesh, ShapeSpec, ShapeTag};
use crate::parallel;
use crate::rng::{derive_seed, tag};

const MAX_ATTEMPTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SetKind {
    Set1,
    Set2,
    Set3,
}

impl SetKind {
    pub const ALL: [SetKind; 3] = [SetKind::Set1, SetKind::Set2, SetKind::Set3];

    pub fn index(&self) -> u64 {
        match self {
            SetKind::Set1 => 1,
            SetKind::Set2 => 2,
            SetKind::Set3 => 3,
        }
    }

    pub fn augmented(&self) -> bool {
        matches!(self, SetKind::Set2)
    }

    /// Number of charges / currents / fixed lines per instance.
    pub fn source_range(&self) -> (u32, u32) {
        match self {
            SetKind::Set1 | SetKind::Set2 => (1, 3),
            SetKind::Set3 => (4, 5),
        }
    }
}

pub fn set_file_name(problem: ProblemTag, shape: ShapeTag, set: SetKind) -> String {
    format!("{}_{}_set{}.jsonl", problem.as_str(), shape.as_str(), set.index())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    pub problems: Vec<ProblemTag>,
    /// Samples per (problem, shape, set). 2500 at full scale, 250 for the
    /// desk preset.
    pub samples_per_set: usize,
    pub master_seed: u64,
}

impl GenerateConfig {
    pub fn preset(name: &str) -> Option<GenerateConfig> {
        let samples_per_set = match name {
            "full" => 2500,
            "desk" => 250,
            "smoke" => 10,
            _ => return None,
        };
        Some(GenerateConfig {
            problems: vec![ProblemTag::Es, ProblemTag::Ms],
            samples_per_set,
            master_seed: 0,
        })
    }

    /// Hash of everything that determines file contents (except the problem
    /// list, so incremental generation into one directory stays coherent).
    pub fn config_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"fieldop-dataset-v1");
        h.update(self.samples_per_set.to_le_bytes());
        h.update(self.master_seed.to_le_bytes());
        h.update(super::SOURCE_RADIUS.to_le_bytes());
        h.update(super::SOURCE_DENSITY.to_le_bytes());
        h.update(super::FIXED_LINE_HALF_WIDTH.to_le_bytes());
        hex(&h.finalize())
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Sidecar metadata written next to the dataset files. The per-problem
/// normalization map is filled in when splits are built.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct DatasetMeta {
    pub master_seed: u64,
    pub samples_per_set: usize,
    pub config_hash: String,
    pub problems: Vec<ProblemTag>,
    pub counts: BTreeMap<String, usize>,
    #[serde(default)]
    pub normalization: BTreeMap<String, NormConstants>,
}

impl DatasetMeta {
    pub fn path(data_dir: &Path) -> std::path::PathBuf {
        data_dir.join("dataset_meta.json")
    }

    pub fn read(data_dir: &Path) -> Result<DatasetMeta, DatasetError> {
        let path = Self::path(data_dir);
        if !path.exists() {
            return Err(DatasetError::MissingSet(path.display().to_string()));
        }
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn write(&self, data_dir: &Path) -> Result<(), DatasetError> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(Self::path(data_dir), json)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct GenerateSummary {
    pub samples_per_problem: BTreeMap<String, usize>,
    pub files: Vec<String>,
    /// Samples that needed more than one attempt (failed solve or degenerate
    /// augmented mesh).
    pub regenerated: usize,
}

/// Generate all sets for all configured problems into `out_dir`.
pub fn generate_sets(config: &GenerateConfig, out_dir: &Path) -> Result<GenerateSummary, DatasetError> {
    std::fs::create_dir_all(out_dir)?;
    let mut summary = GenerateSummary::default();

    for &problem in &config.problems {
        for shape in ShapeTag::ALL {
            let default_mesh = generate_mesh(&ShapeSpec::default_for(shape))?;
            let default_op = if problem == ProblemTag::El {
                None
            } else {
                Some(PoissonOperator::new(&default_mesh)?)
            };
            for set in SetKind::ALL {
                let results = parallel::map_indexed(config.samples_per_set, |idx| {
                    generate_one(
                        config,
                        problem,
                        shape,
                        set,
                        idx,
                        &default_mesh,
                        default_op.as_ref(),
                    )
                });
                let file_name = set_file_name(problem, shape, set);
                let file = std::fs::File::create(out_dir.join(&file_name))?;
                let mut w = std::io::BufWriter::new(file);
                let mut count = 0;
                for res in results {
                    let (line, attempts) = res?;
                    w.write_all(line.as_bytes())?;
                    w.write_all(b"\n")?;
                    summary.regenerated += attempts;
                    count += 1;
                }
                w.flush()?;
                summary.files.push(file_name.clone());
                *summary
                    .samples_per_problem
                    .entry(problem.as_str().to_string())
                    .or_default() += count;
            }
        }
    }

    let mut meta = match DatasetMeta::read(out_dir) {
        Ok(existing) => {
            if existing.master_seed != config.master_seed
                || existing.samples_per_set != config.samples_per_set
            {
                return Err(DatasetError::MissingSet(format!(
                    "existing dataset in {} was generated with a different config \
                     (seed {} / {} samples per set)",
                    out_dir.display(),
                    existing.master_seed,
                    existing.samples_per_set
                )));
            }
            existing
        }
        Err(_) => DatasetMeta::default(),
    };
    meta.master_seed = config.master_seed;
    meta.samples_per_set = config.samples_per_set;
    meta.config_hash = config.config_hash();
    for &p in &config.problems {
        if !meta.problems.contains(&p) {
            meta.problems.push(p);
        }
    }
    for f in &summary.files {
        meta.counts.insert(f.clone(), config.samples_per_set);
    }
    meta.write(out_dir)?;
    Ok(summary)
}

/// Generate the sample at `idx`; on failure (degenerate augmented geometry,
/// non-converged solve, empty fixed set) retry with the next derived seed.
/// Returns the serialized record and the number of extra attempts used.
fn generate_one(
    config: &GenerateConfig,
    problem: ProblemTag,
    shape: ShapeTag,
    set: SetKind,
    idx: usize,
    default_mesh: &Mesh,
    default_op: Option<&PoissonOperator>,
) -> Result<(String, usize), DatasetError> {
    let mut last_err = String::new();
    for attempt in 0..MAX_ATTEMPTS {
        let seed = derive_seed(
            config.master_seed,
            &[
                tag("sample"),
                tag(problem.as_str()),
                tag(shape.as_str()),
                set.index(),
                idx as u64,
                attempt as u64,
            ],
        );
        match try_generate(problem, shape, set, seed, default_mesh, default_op) {
            Ok(record) => {
                if attempt > 0 {
                    eprintln!(
                        "regenerated {}/{}/set{} sample {idx} after {attempt} failed attempt(s): {last_err}",
                        problem.as_str(),
                        shape.as_str(),
                        set.index()
                    );
                }
                return Ok((serde_json::to_string(&record)?, attempt));
            }
            Err(e) => last_err = e.to_string(),
        }
    }
    Err(DatasetError::GenerationFailed {
        attempts: MAX_ATTEMPTS,
        last: last_err,
    })
}

fn try_generate(
    problem: ProblemTag,
    shape: ShapeTag,
    set: SetKind,
    seed: u64,
    default_mesh: &Mesh,
    default_op: Option<&PoissonOperator>,
) -> Result<super::SampleRecord, DatasetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let augment = set.augmented() && shape != ShapeTag::UMesh;

    let augmented_mesh;
    let mesh: &Mesh = if augment {
        let spec = sample_augmented_spec(shape, &mut rng)?;
        augmented_mesh = generate_mesh(&spec)?;
        &augmented_mesh
    } else {
        default_mesh
    };

    match problem {
        ProblemTag::Es | ProblemTag::Ms => {
            let (q, k) = sample_sources(mesh, set.source_range(), &mut rng)?;
            let fresh_op;
            let op = if augment {
                fresh_op = PoissonOperator::new(mesh)?;
                &fresh_op
            } else {
                default_op.expect("poisson operator cached for default meshes")
            };
            build_sample_impl(
                mesh,
                problem,
                &SourceField::Density(q),
                Some(op),
                Provenance {
                    aug: augment,
                    n_sources: k,
                    seed,
                },
            )
        }
        ProblemTag::El => {
            let (fixed, k) = sample_fixed_lines(mesh, set.source_range(), &mut rng)?;
            build_sample_impl(
                mesh,
                problem,
                &SourceField::FixedNodes(fixed),
                None,
                Provenance {
                    aug: augment,
                    n_sources: k,
                    seed,
                },
            )
        }
    }
}
