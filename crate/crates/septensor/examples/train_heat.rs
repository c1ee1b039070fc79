//! Data-driven training: fit a separable field to samples of a parametric
//! heat solution generated by a finite-difference solver, mode by mode
//! (boosting), then score it on held-out parameter points.

use septensor::basis::{Kernel, PatchConfig};
use septensor::field::{DimKind, DimensionSpec};
use septensor::mesh::make_uniform_mesh;
use septensor::oracle::fd_heat_2d_param;
use septensor::trainer::{train_boosting, Dataset, TrainConfig, TrainScheme};

fn sample_rows(ks: &[f64], ps: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for &k in ks {
        for &p in ps {
            let traj = fd_heat_2d_param(33, 100, 0.04, k, p).unwrap();
            for (s, &t) in traj.times.iter().enumerate().skip(1).step_by(20) {
                for i in (0..33).step_by(4) {
                    for j in (0..33).step_by(4) {
                        let (x, y) = (i as f64 / 32.0, j as f64 / 32.0);
                        inputs.push(vec![x, y, k, p, t]);
                        targets.push(traj.frames[s][i * 33 + j]);
                    }
                }
            }
        }
    }
    (inputs, targets)
}

fn rmse(field: &septensor::field::SeparableField, inputs: &[Vec<f64>], targets: &[f64]) -> f64 {
    let preds = field.evaluate_batch(inputs).unwrap();
    (preds
        .iter()
        .zip(targets)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / targets.len() as f64)
        .sqrt()
}

fn main() {
    let patch = PatchConfig::new(2, 20.0, 1, Kernel::InterpMls).unwrap();
    let spec = |name: &str, lo: f64, hi: f64, n: usize, kind| DimensionSpec {
        name: name.to_string(),
        mesh: make_uniform_mesh(lo, hi, n).unwrap(),
        patch: patch.clone(),
        kind,
    };
    let dims = vec![
        spec("x", 0.0, 1.0, 16, DimKind::Space),
        spec("y", 0.0, 1.0, 16, DimKind::Space),
        // coarse parameter meshes: only a few distinct (k, P) samples
        // constrain these directions
        spec("k", 1.0, 4.0, 3, DimKind::Param),
        spec("P", 100.0, 200.0, 2, DimKind::Param),
        spec("t", 0.0, 0.04, 10, DimKind::Time),
    ];
    let (inputs, targets) = sample_rows(&[1.0, 2.0, 3.0, 4.0], &[100.0, 150.0, 200.0]);
    let dataset = Dataset::new(inputs, targets, &dims).unwrap();
    println!("training on {} samples", dataset.len());

    let mut cfg = TrainConfig::new(TrainScheme::Boosting, 10, 150);
    cfg.learning_rate = 1e-3;
    let t0 = std::time::Instant::now();
    let (field, report) = train_boosting(&dims, &dataset, &cfg).unwrap();
    println!(
        "trained {} parameters in {:.1} s ({})",
        report.param_count,
        t0.elapsed().as_secs_f64(),
        report.stop_reason
    );
    println!(
        "final train mse {:.3e}, validation mse {:.3e}",
        report.train_mse.last().unwrap(),
        report.validation_mse.last().unwrap()
    );

    // score on parameter points the trainer never saw
    let (test_in, test_tg) = sample_rows(&[1.5, 3.5], &[125.0, 175.0]);
    println!("held-out rmse {:.3e}", rmse(&field, &test_in, &test_tg));
}
