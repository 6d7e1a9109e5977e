//! Cross-validation, normalization and model files end to end.

mod common;

use common::random_matrix;
use mvproc::evaluation::{self, cross_validate, kfold_blocks, lower_median, Dataset, ModelKind};
use mvproc::model_io::{self, ModelFile};
use mvproc::{fit, Family, FitOptions, KernelFamily, KernelSpec};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Smooth multi-output data with correlated outputs.
fn synthetic(n: usize, p: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_matrix(&mut rng, n, p, -2.0, 2.0);
    let w = random_matrix(&mut rng, p, d, -1.0, 1.0);
    let noise = random_matrix(&mut rng, n, d, -0.05, 0.05);
    let y = (&x * &w).map(f64::sin) * 3.0 + noise.add_scalar(10.0);
    Dataset::new(
        x,
        y,
        (0..p).map(|i| format!("x{i}")).collect(),
        (0..d).map(|j| format!("y{j}")).collect(),
    )
    .unwrap()
}

fn quick() -> FitOptions {
    FitOptions {
        restarts: 2,
        max_iters: 60,
        seed: 5,
        ..FitOptions::default()
    }
}

#[test]
fn crossval_report_shape_and_mmo() {
    let data = synthetic(40, 3, 2, 1);
    let spec = KernelSpec::unit(KernelFamily::SeArd, 3);
    let report = cross_validate(&data, 4, &ModelKind::ALL, &spec, &quick()).unwrap();
    assert_eq!(report.folds.len(), 4);
    assert!(report.folds.iter().all(|f| f.len() == 4));

    for mae in [false, true] {
        let (labels, rows) = report.table(mae).unwrap();
        assert_eq!(labels, ["y0", "y1", "MMO"]);
        assert!(rows.iter().all(|r| r.len() == 4));
        for m in 0..4 {
            let medians: Vec<f64> = (0..2)
                .map(|j| {
                    let per_fold: Vec<f64> =
                        report.folds[m].iter().map(|f| if mae { f.mae[j] } else { f.mse[j] }).collect();
                    lower_median(&per_fold).unwrap()
                })
                .collect();
            assert_eq!(rows[0][m], medians[0]);
            assert_eq!(rows[1][m], medians[1]);
            assert_eq!(rows[2][m], medians[0].max(medians[1]));
        }
    }
    // a smooth signal is learned far better than the unit-variance baseline
    assert!(report.table(false).unwrap().1[2].iter().all(|v| *v < 0.5));

    let again = cross_validate(&data, 4, &ModelKind::ALL, &spec, &quick()).unwrap();
    assert_eq!(report, again);
}

#[test]
fn crossval_rejects_uneven_folds() {
    let data = synthetic(10, 1, 1, 2);
    let spec = KernelSpec::unit(KernelFamily::Se, 1);
    assert!(cross_validate(&data, 3, &[ModelKind::Gp], &spec, &quick()).is_err());
    assert!(kfold_blocks(10, 3).is_err());
    let blocks = kfold_blocks(12, 4).unwrap();
    let covered: Vec<usize> = blocks.into_iter().flatten().collect();
    assert_eq!(covered, (0..12).collect::<Vec<_>>());
}

#[test]
fn normalization_round_trip() {
    let data = synthetic(25, 2, 3, 3);
    let (z, state) = evaluation::normalize(&data.y).unwrap();
    for j in 0..3 {
        let c = z.column(j);
        let mean = c.mean();
        let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 24.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
    }
    let back = evaluation::denormalize(&z, &state);
    assert!((back - &data.y).amax() < 1e-12);
    let constant = DMatrix::from_element(5, 1, 2.0);
    assert!(evaluation::normalize_named(&constant, Some(&["flat".to_string()]))
        .unwrap_err()
        .to_string()
        .contains("flat"));
}

#[test]
fn model_file_round_trip_preserves_predictions() {
    let data = synthetic(20, 2, 2, 4);
    let xs = synthetic(7, 2, 2, 5).x;
    for family in [Family::Gp, Family::Tp] {
        let m = fit(family, &data.x, &data.y, &KernelSpec::unit(KernelFamily::SeArd, 2), &quick()).unwrap();
        let file = ModelFile {
            model: m,
            input_names: data.input_names.clone(),
            output_names: data.output_names.clone(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.mvp");
        model_io::save(&file, &path).unwrap();
        let back = model_io::load(&path).unwrap();
        assert_eq!(back.input_names, file.input_names);
        assert_eq!(back.output_names, file.output_names);
        assert_eq!(back.model.params(), file.model.params());
        assert_eq!(back.model.nlml().to_bits(), file.model.nlml().to_bits());
        assert_eq!(back.model.predict(&xs).unwrap(), file.model.predict(&xs).unwrap());
        assert_eq!(model_io::to_string(&back).unwrap(), model_io::to_string(&file).unwrap());
    }
}

#[test]
fn damaged_model_files_are_rejected() {
    let data = synthetic(6, 1, 1, 6);
    let m = fit(Family::Gp, &data.x, &data.y, &KernelSpec::unit(KernelFamily::Se, 1), &quick()).unwrap();
    let text = model_io::to_string(&ModelFile::unnamed(m)).unwrap();
    assert!(model_io::from_str(&text).is_ok());
    assert!(model_io::from_str(&text.replace("family", "famly")).is_err());
    assert!(model_io::from_str(&text[..text.len() / 2]).is_err());
    assert!(model_io::from_str(&format!("{text}extra = 1\n")).is_err());
}
