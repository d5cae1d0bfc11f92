//! Dataset generation, serialization round trips, split bookkeeping and
//! normalization facts, on smoke-scale set sizes.

mod common;

use proptest::prelude::*;

use fieldop::dataset::{
    self, build_sample, generate_sets, make_splits, read_manifest, read_split, GenerateConfig,
    ProblemTag, SampleRecord, SourceField,
};
use fieldop::mesh::{generate_mesh, ShapeSpec, ShapeTag};

fn smoke_config(problems: Vec<ProblemTag>, n: usize, seed: u64) -> GenerateConfig {
    GenerateConfig {
        problems,
        samples_per_set: n,
        master_seed: seed,
    }
}

#[test]
fn generate_and_split_bookkeeping() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config(vec![ProblemTag::Es], 4, 3);
    let summary = generate_sets(&cfg, dir.path()).unwrap();
    // 5 shapes x 3 sets x 4 samples.
    assert_eq!(summary.samples_per_problem["es"], 60);

    let manifest = make_splits(dir.path(), ProblemTag::Es, 0).unwrap();
    // set1 of 4 training shapes = 16 entries split 80:20.
    assert_eq!(manifest.split("train_noaug").unwrap().len(), 13);
    assert_eq!(manifest.split("val_noaug").unwrap().len(), 3);
    assert_eq!(manifest.split("train_aug").unwrap().len(), 13);
    assert_eq!(manifest.split("val_aug").unwrap().len(), 3);
    assert_eq!(manifest.split("shape_test").unwrap().len(), 4);
    assert_eq!(manifest.split("superposition_test").unwrap().len(), 4);

    // Disjointness within each pair.
    for (a, b) in [("train_noaug", "val_noaug"), ("train_aug", "val_aug")] {
        let sa: std::collections::BTreeSet<_> = manifest
            .split(a)
            .unwrap()
            .iter()
            .map(|e| (e.file.clone(), e.line))
            .collect();
        for e in manifest.split(b).unwrap() {
            assert!(!sa.contains(&(e.file.clone(), e.line)));
        }
    }

    // U-mesh purity: never in train or val.
    for name in ["train_noaug", "val_noaug", "train_aug", "val_aug", "superposition_test"] {
        for e in manifest.split(name).unwrap() {
            assert!(
                !e.file.contains("u_mesh"),
                "{name} references the held-out mesh: {}",
                e.file
            );
        }
    }
    // Shape test is exactly the U-mesh.
    for e in manifest.split("shape_test").unwrap() {
        assert!(e.file.contains("u_mesh"));
    }

    // Records round-trip and carry matching dimensions.
    let records = read_split(dir.path(), &manifest, "train_noaug").unwrap();
    for rec in &records {
        assert_eq!(rec.feat.len(), rec.n_nodes());
        assert_eq!(rec.target.len(), rec.n_nodes());
        assert_eq!(rec.feat[0].len(), 4);
        assert_eq!(rec.target[0].len(), 3);
        assert_eq!(rec.edges.len(), rec.edge_attr.len());
        assert!((1..=3).contains(&rec.n_sources));
    }

    // Augmented set2 records flag themselves (except the U-mesh).
    let m2 = read_manifest(dir.path(), ProblemTag::Es).unwrap();
    let aug_records = read_split(dir.path(), &m2, "train_aug").unwrap();
    assert!(aug_records.iter().all(|r| r.aug));
}

#[test]
fn generation_is_byte_identical_per_seed() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let cfg = smoke_config(vec![ProblemTag::Es], 3, 123);
    generate_sets(&cfg, d1.path()).unwrap();
    generate_sets(&cfg, d2.path()).unwrap();
    for shape in ShapeTag::ALL {
        for set in dataset::SetKind::ALL {
            let name = dataset::set_file_name(ProblemTag::Es, shape, set);
            let a = std::fs::read(d1.path().join(&name)).unwrap();
            let b = std::fs::read(d2.path().join(&name)).unwrap();
            assert_eq!(a, b, "{name} differs between runs");
        }
    }

    let d3 = tempfile::tempdir().unwrap();
    let other = smoke_config(vec![ProblemTag::Es], 3, 124);
    generate_sets(&other, d3.path()).unwrap();
    let name = dataset::set_file_name(ProblemTag::Es, ShapeTag::Square, dataset::SetKind::Set1);
    assert_ne!(
        std::fs::read(d1.path().join(&name)).unwrap(),
        std::fs::read(d3.path().join(&name)).unwrap(),
        "different master seeds produced identical files"
    );
}

#[test]
fn stored_targets_are_reproducible_from_geometry_and_source() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config(vec![ProblemTag::Es, ProblemTag::Ms], 2, 9);
    generate_sets(&cfg, dir.path()).unwrap();
    for problem in [ProblemTag::Es, ProblemTag::Ms] {
        for shape in [ShapeTag::Square, ShapeTag::DiskHole] {
            for set in dataset::SetKind::ALL {
                let name = dataset::set_file_name(problem, shape, set);
                let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
                for line in text.lines() {
                    let rec: SampleRecord = serde_json::from_str(line).unwrap();
                    let mesh = rec.to_mesh();
                    let resolved = build_sample(&mesh, problem, &rec.source_field()).unwrap();
                    for (a, b) in rec.target.iter().flatten().zip(resolved.target.iter().flatten())
                    {
                        assert!((a - b).abs() < 1e-8, "{problem:?} target drift: {a} vs {b}");
                    }
                }
            }
        }
    }
}

#[test]
fn normalization_bounds_train_but_not_test() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config(vec![ProblemTag::Es], 12, 77);
    generate_sets(&cfg, dir.path()).unwrap();
    let manifest = make_splits(dir.path(), ProblemTag::Es, 0).unwrap();
    let norm = &manifest.normalization;

    // The boundary-flag channel is already in {0,1}.
    assert_eq!(norm.feat[3], 1.0);
    assert!(norm.feat.iter().chain(norm.target.iter()).all(|&c| c > 0.0));

    // Max |value| over the union of both train splits normalizes to 1.
    let mut train = read_split(dir.path(), &manifest, "train_noaug").unwrap();
    train.extend(read_split(dir.path(), &manifest, "train_aug").unwrap());
    for c in 0..3 {
        let max_abs = train
            .iter()
            .flat_map(|r| r.target.iter())
            .map(|row| (row[c] / norm.target[c]).abs())
            .fold(0.0f64, f64::max);
        assert!((max_abs - 1.0).abs() < 1e-12, "channel {c}: {max_abs}");
    }

    // The superposition split (4-5 sources) exceeds the train range; no
    // clipping is applied anywhere.
    let sup = read_split(dir.path(), &manifest, "superposition_test").unwrap();
    let max_pot = sup
        .iter()
        .flat_map(|r| r.target.iter())
        .map(|row| (row[0] / norm.target[0]).abs())
        .fold(0.0f64, f64::max);
    assert!(
        max_pot > 1.0,
        "superposition potentials should exceed the train normalization, got {max_pot}"
    );
}

#[test]
fn elasticity_records_have_the_appendix_feature_layout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config(vec![ProblemTag::El], 2, 5);
    generate_sets(&cfg, dir.path()).unwrap();
    let manifest = make_splits(dir.path(), ProblemTag::El, 0).unwrap();
    let records = read_split(dir.path(), &manifest, "train_noaug").unwrap();
    assert!(!records.is_empty());
    for rec in &records {
        assert_eq!(rec.feat[0].len(), 5);
        assert_eq!(rec.target[0].len(), 2);
        // Fixed nodes carry the flag and zero offsets to the fixed set.
        let any_fixed = (0..rec.n_nodes()).any(|i| rec.feat[i][4] == 1.0);
        assert!(any_fixed);
        for i in 0..rec.n_nodes() {
            if rec.feat[i][4] == 1.0 {
                assert_eq!(rec.feat[i][2], 0.0);
                assert_eq!(rec.feat[i][3], 0.0);
                // Fixed nodes do not move.
                assert_eq!(rec.target[i], vec![0.0, 0.0]);
            }
        }
    }
}

#[test]
fn es_sample_features_follow_the_input_table() {
    let mesh = generate_mesh(&ShapeSpec::default_for(ShapeTag::Disk)).unwrap();
    let mut rng = fieldop::rng::rng_for(4, &[]);
    let (q, _k) = dataset::sample_sources(&mesh, (1, 3), &mut rng).unwrap();
    let rec = build_sample(&mesh, ProblemTag::Es, &SourceField::Density(q.clone())).unwrap();
    for i in 0..mesh.n_nodes() {
        assert_eq!(rec.feat[i][2], q[i]);
        assert_eq!(rec.feat[i][3], f64::from(mesh.boundary[i] as u8));
        if !mesh.boundary[i] {
            // Offset points at the nearest boundary node.
            let (dx, dy) = (rec.feat[i][0], rec.feat[i][1]);
            let p = mesh.nodes[i];
            let nearest = mesh
                .nodes
                .iter()
                .enumerate()
                .filter(|(j, _)| mesh.boundary[*j])
                .map(|(_, b)| p.dist(b))
                .fold(f64::MAX, f64::min);
            let claimed = (dx * dx + dy * dy).sqrt();
            assert!((claimed - nearest).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Serialization round trip is the identity on generated records.
    #[test]
    fn record_round_trip(seed in 0u64..5000) {
        let mesh = generate_mesh(&ShapeSpec::default_for(ShapeTag::LMesh)).unwrap();
        let mut rng = fieldop::rng::rng_for(seed, &[]);
        let (q, _) = dataset::sample_sources(&mesh, (1, 3), &mut rng).unwrap();
        let rec = build_sample(&mesh, ProblemTag::Ms, &SourceField::Density(q)).unwrap();
        let json = serde_json::to_string(&rec).unwrap();
        let back: SampleRecord = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, rec);
    }
}
