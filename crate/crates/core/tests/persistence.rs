use aad_core::detector::{fit, read_model_header, MODEL_VERSION};
use aad_core::features::{extract_frames, read_frames, write_frames};
use aad_core::synthgen::{gen_normal, inject_knocks};
use aad_core::{AadError, DetectorKind, DetectorModel, FrameTensor, RunConfig};
use proptest::prelude::*;
use std::sync::OnceLock;

fn small_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.lstm.hidden = 8;
    cfg.lstm.epochs = 2;
    cfg
}

/// Train and test frames from a short generated clip, built once.
fn fixture() -> &'static (FrameTensor, FrameTensor) {
    static CELL: OnceLock<(FrameTensor, FrameTensor)> = OnceLock::new();
    CELL.get_or_init(|| {
        let cfg = small_config();
        let train = gen_normal(20.0, 16000, 1).unwrap();
        let test = inject_knocks(&gen_normal(10.0, 16000, 2).unwrap(), 30.0, 3).unwrap().clip;
        (extract_frames(&train, &cfg.features).unwrap(), extract_frames(&test, &cfg.features).unwrap())
    })
}

fn trained(kind: DetectorKind) -> DetectorModel {
    fit(kind, &fixture().0, &small_config()).unwrap()
}

#[test]
fn every_kind_round_trips_with_identical_scores() {
    let dir = tempfile::tempdir().unwrap();
    let test = &fixture().1;
    for kind in DetectorKind::ALL {
        let model = trained(kind);
        let path = dir.path().join(format!("{}.model", kind.id()));
        model.persist(&path).unwrap();
        let back = DetectorModel::restore(&path).unwrap();
        assert_eq!(back.kind(), kind);
        let a = model.score(test).unwrap();
        let b = back.score(test).unwrap();
        assert_eq!(a.origins, b.origins);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.scores), bits(&b.scores), "{}", kind.id());
        let header = read_model_header(&path).unwrap();
        assert_eq!(header.kind, kind);
        assert_eq!(header.version, MODEL_VERSION);
        assert_eq!(header.config_digest, small_config().digest());
    }
}

#[test]
fn truncated_files_are_corrupt() {
    for kind in DetectorKind::ALL {
        let bytes = trained(kind).to_bytes();
        for cut in [0, 7, 12, bytes.len() / 2, bytes.len() - 1] {
            assert!(
                matches!(DetectorModel::from_bytes(&bytes[..cut]), Err(AadError::CorruptModelFile(_))),
                "{} cut at {cut}",
                kind.id()
            );
        }
    }
}

#[test]
fn future_version_is_rejected() {
    let mut bytes = trained(DetectorKind::KMeans).to_bytes();
    bytes[8..12].copy_from_slice(&2u32.to_le_bytes());
    assert!(matches!(DetectorModel::from_bytes(&bytes), Err(AadError::VersionMismatch { found: 2, expected: 1 })));
}

#[test]
fn frame_archive_is_lossless() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("train.frames");
    let frames = &fixture().0;
    write_frames(&path, frames, 1024).unwrap();
    let (back, meta) = read_frames(&path).unwrap();
    assert_eq!(&back, frames);
    assert_eq!(meta.sample_rate, 16000);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn any_truncation_fails_cleanly(frac in 0.0f64..1.0) {
        let bytes = trained(DetectorKind::KMeans).to_bytes();
        let cut = ((bytes.len() as f64) * frac) as usize;
        prop_assert!(matches!(DetectorModel::from_bytes(&bytes[..cut]), Err(AadError::CorruptModelFile(_))));
    }
}
