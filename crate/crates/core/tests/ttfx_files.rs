use proptest::prelude::*;

use latent_steer::linalg::{AxisMatrix, FeatureAxes, FitMetadata, Matrix};
use latent_steer::manifest::RunManifest;
use latent_steer::pipeline::{demo_world, fit_world_axes};
use latent_steer::ttfx::{load_world, world_to_ttfx, AxesArtifact, Section, TtfxFile, TAG_BASIS, TAG_RAW_AXES};

#[test]
fn world_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.ttfx");
    let world = demo_world().unwrap();
    world_to_ttfx(&world).write(&path).unwrap();
    assert_eq!(load_world(&path).unwrap(), world);
}

#[test]
fn axes_file_round_trip_keeps_both_matrices() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.ttfx");
    let world = demo_world().unwrap();
    let art = AxesArtifact {
        axes: fit_world_axes(&world, 500, 1e-3, 4).unwrap(),
        attributes: world.attributes().clone(),
    };
    let mut file = art.to_ttfx();
    file.set_manifest(&RunManifest::new("fit", serde_json::json!({}), Some(4)));
    file.write(&path).unwrap();
    let back = AxesArtifact::load(&path).unwrap();
    assert_eq!(back, art);
    let reread = TtfxFile::read(&path).unwrap();
    assert!(reread.section(TAG_RAW_AXES).is_some() && reread.section(TAG_BASIS).is_some());
    assert_eq!(reread.manifest().unwrap().unwrap().subcommand, "fit");
}

#[test]
fn non_orthonormal_basis_section_is_rejected() {
    let world = demo_world().unwrap();
    let art = AxesArtifact {
        axes: fit_world_axes(&world, 500, 1e-3, 4).unwrap(),
        attributes: world.attributes().clone(),
    };
    let mut file = art.to_ttfx();
    for s in &mut file.sections {
        if s.tag == TAG_BASIS {
            s.matrix = art.axes.raw.matrix().clone();
        }
    }
    assert!(AxesArtifact::from_ttfx(&file).is_err());
}

#[test]
fn every_truncation_is_an_error() {
    let bytes = world_to_ttfx(&demo_world().unwrap()).to_bytes().unwrap();
    for cut in 0..bytes.len() {
        assert!(
            TtfxFile::from_bytes(&bytes[..cut]).is_err(),
            "prefix of {cut} bytes parsed"
        );
    }
}

#[test]
fn missing_file_is_an_io_error() {
    let err = load_world(std::path::Path::new("/nonexistent/w.ttfx")).unwrap_err();
    assert_eq!(err.class(), latent_steer::ErrorClass::Io);
}

proptest! {
    #[test]
    fn sections_round_trip_bit_exactly(
        rows in 0usize..6,
        cols in 0usize..6,
        seed in any::<u64>(),
        meta in "[ -~]{0,40}",
    ) {
        let mut rng = latent_steer::rng::CounterRng::new(seed, 0);
        let data: Vec<f64> = (0..rows * cols).map(|_| f64::from_bits(rng.next_u64())).filter(|v| v.is_finite()).collect();
        prop_assume!(data.len() == rows * cols);
        let matrix = Matrix::from_col_major(rows, cols, data).unwrap();
        let mut file = TtfxFile::default();
        file.push(Section::new(*b"TEST", matrix.clone(), meta.clone()));
        let back = TtfxFile::from_bytes(&file.to_bytes().unwrap()).unwrap();
        prop_assert_eq!(back.sections.len(), 1);
        let s = &back.sections[0];
        prop_assert_eq!(&s.metadata, &meta);
        let bits = |m: &Matrix| m.as_col_major().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&s.matrix), bits(&matrix));
        prop_assert_eq!((s.matrix.rows(), s.matrix.cols()), (rows, cols));
    }

    #[test]
    fn payload_hash_ignores_manifest_only(seed in any::<u64>()) {
        let m = Matrix::from_col_major(3, 2, latent_steer::rng::CounterRng::new(seed, 0).normal_vec(6)).unwrap();
        let raw = AxisMatrix::new(m, FitMetadata { method: "t".into(), seed: Some(seed), samples: 6, ridge: 0.0 }).unwrap();
        let art = AxesArtifact {
            axes: FeatureAxes::from_raw(raw).unwrap(),
            attributes: latent_steer::attributes::AttributeSet::celeba_prefix(2).unwrap(),
        };
        let plain = art.to_ttfx();
        let mut stamped = art.to_ttfx();
        let mut manifest = RunManifest::new("fit", serde_json::json!({}), None);
        manifest.timestamp = seed;
        stamped.set_manifest(&manifest);
        prop_assert_eq!(plain.payload_hash().unwrap(), stamped.payload_hash().unwrap());
    }
}
