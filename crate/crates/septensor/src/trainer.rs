use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::adam::Adam;
use crate::basis::{eval_basis, BasisEval};
use crate::error::{Error, Result};
use crate::field::{DimensionSpec, SeparableField};

/// Labeled samples (x_k, y_k) validated against the declared box domain.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<f64>, dims: &[DimensionSpec]) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::InvalidArgument(format!(
                "{} input rows vs {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        if inputs.is_empty() {
            return Err(Error::InvalidArgument("dataset is empty".into()));
        }
        let mut failures = Vec::new();
        for (k, row) in inputs.iter().enumerate() {
            if row.len() != dims.len() {
                failures.push((
                    k,
                    Box::new(Error::InvalidArgument(format!(
                        "row has {} coordinates, {} dimensions declared",
                        row.len(),
                        dims.len()
                    ))),
                ));
                continue;
            }
            for (d, &x) in dims.iter().zip(row) {
                let (lo, hi) = d.mesh.domain();
                let tol = 1e-12 * d.mesh.length();
                if !x.is_finite() || x < lo - tol || x > hi + tol {
                    failures.push((k, Box::new(Error::OutOfDomain { x, lo, hi })));
                    break;
                }
            }
        }
        if !failures.is_empty() {
            return Err(Error::Indexed(failures));
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// CSV with a header row naming the dimensions then the target column.
    pub fn from_csv(path: &Path, dims: &[DimensionSpec]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty dataset file".into()))?;
        let cols: Vec<&str> = header.split(',').map(|c| c.trim()).collect();
        if cols.len() != dims.len() + 1 {
            return Err(Error::Format(format!(
                "header has {} columns, expected {} dimensions + target",
                cols.len(),
                dims.len()
            )));
        }
        for (c, d) in cols.iter().zip(dims) {
            if *c != d.name {
                return Err(Error::Format(format!(
                    "header column {c:?} does not match dimension {:?}",
                    d.name
                )));
            }
        }
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let vals: std::result::Result<Vec<f64>, _> =
                line.split(',').map(|v| v.trim().parse::<f64>()).collect();
            let vals = vals.map_err(|e| {
                Error::Format(format!("line {}: {e}", lineno + 2))
            })?;
            if vals.len() != dims.len() + 1 {
                return Err(Error::Format(format!(
                    "line {}: {} values, expected {}",
                    lineno + 2,
                    vals.len(),
                    dims.len() + 1
                )));
            }
            targets.push(*vals.last().unwrap());
            inputs.push(vals[..dims.len()].to_vec());
        }
        Self::new(inputs, targets, dims)
    }

    pub fn write_csv(&self, path: &Path, dims: &[DimensionSpec], target_name: &str) -> Result<()> {
        let mut out = String::new();
        let names: Vec<&str> = dims.iter().map(|d| d.name.as_str()).collect();
        out.push_str(&names.join(","));
        out.push(',');
        out.push_str(target_name);
        out.push('\n');
        for (row, y) in self.inputs.iter().zip(&self.targets) {
            for x in row {
                out.push_str(&format!("{x:.16e},"));
            }
            out.push_str(&format!("{y:.16e}\n"));
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainScheme {
    Boosting,
    AllAtOnce,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub scheme: TrainScheme,
    pub modes: usize,
    pub epochs_max: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub early_stop_patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(scheme: TrainScheme, modes: usize, epochs_max: usize) -> Self {
        Self {
            scheme,
            modes,
            epochs_max,
            batch_size: 128,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            early_stop_patience: 10,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub train_mse: Vec<f64>,
    pub validation_mse: Vec<f64>,
    pub stop_reason: String,
    pub param_count: usize,
}

/// Mean squared error of the field against a dataset.
pub fn loss_mse(field: &SeparableField, dataset: &Dataset) -> Result<f64> {
    let preds = field.evaluate_batch(&dataset.inputs)?;
    let k = dataset.len() as f64;
    Ok(preds
        .iter()
        .zip(&dataset.targets)
        .map(|(p, y)| (p - y) * (p - y))
        .sum::<f64>()
        / k)
}

/// Analytic MSE gradient with the same (mode, dim, node) shape as the
/// field's coefficients.
pub fn grad_mse(
    field: &SeparableField,
    inputs: &[Vec<f64>],
    targets: &[f64],
) -> Result<Vec<Vec<Vec<f64>>>> {
    if inputs.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let dims = field.dims();
    let ndim = dims.len();
    let nmodes = field.num_modes();
    let mut grad: Vec<Vec<Vec<f64>>> = (0..nmodes)
        .map(|_| dims.iter().map(|d| vec![0.0; d.mesh.num_nodes()]).collect())
        .collect();
    let scale = 2.0 / inputs.len() as f64;
    let mut per_dim: Vec<BasisEval> = Vec::with_capacity(ndim);
    for (row, &y) in inputs.iter().zip(targets) {
        per_dim.clear();
        for (d, &x) in dims.iter().zip(row) {
            per_dim.push(eval_basis(&d.mesh, &d.patch, x)?);
        }
        accumulate_sample_grad(field, &per_dim, y, scale, &mut grad);
    }
    Ok(grad)
}

/// Add one sample's gradient contribution given its cached basis evals.
fn accumulate_sample_grad(
    field: &SeparableField,
    per_dim: &[BasisEval],
    target: f64,
    scale: f64,
    grad: &mut [Vec<Vec<f64>>],
) {
    let ndim = per_dim.len();
    let mut pred = 0.0;
    let mut vals: Vec<Vec<f64>> = Vec::with_capacity(field.num_modes());
    for mode in field.modes() {
        let v: Vec<f64> = per_dim.iter().zip(mode).map(|(be, u)| be.dot(u)).collect();
        pred += v.iter().product::<f64>();
        vals.push(v);
    }
    let r = pred - target;
    for (m, v) in vals.iter().enumerate() {
        for d in 0..ndim {
            let mut factor = scale * r;
            for (dd, &vd) in v.iter().enumerate() {
                if dd != d {
                    factor *= vd;
                }
            }
            let be = &per_dim[d];
            for (li, &node) in be.node_indices.iter().enumerate() {
                grad[m][d][node] += factor * be.values[li];
            }
        }
    }
}

struct FlatParams {
    /// (dim sizes) shared by every mode
    sizes: Vec<usize>,
    n_modes: usize,
}

impl FlatParams {
    fn stride(&self) -> usize {
        self.sizes.iter().sum()
    }

    fn total(&self) -> usize {
        self.n_modes * self.stride()
    }

    fn to_flat(&self, modes: &[Vec<Vec<f64>>]) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.total());
        for mode in modes {
            for v in mode {
                flat.extend_from_slice(v);
            }
        }
        flat
    }

    fn from_flat(&self, flat: &[f64]) -> Vec<Vec<Vec<f64>>> {
        let mut modes = Vec::with_capacity(self.n_modes);
        let mut off = 0;
        for _ in 0..self.n_modes {
            let mut mode = Vec::with_capacity(self.sizes.len());
            for &n in &self.sizes {
                mode.push(flat[off..off + n].to_vec());
                off += n;
            }
            modes.push(mode);
        }
        modes
    }
}

/// Fit `n_modes` fresh modes against residual targets with cached basis
/// evaluations; returns the best-validation coefficients and histories.
fn fit_modes(
    dims: &[DimensionSpec],
    caches: &[Vec<BasisEval>],
    residuals: &[f64],
    train_idx: &[usize],
    val_idx: &[usize],
    n_modes: usize,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    report: &mut TrainReport,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let layout = FlatParams {
        sizes: dims.iter().map(|d| d.mesh.num_nodes()).collect(),
        n_modes,
    };
    let init_scale = 0.1 / n_modes.max(1) as f64;
    let mut params: Vec<f64> = (0..layout.total())
        .map(|_| rng.gen_range(-init_scale..init_scale))
        .collect();
    let mut opt = Adam::new(layout.total(), cfg.learning_rate);
    opt.beta1 = cfg.beta1;
    opt.beta2 = cfg.beta2;
    opt.eps = cfg.eps;

    let mut field = SeparableField::new(dims.to_vec())?;
    for mode in layout.from_flat(&params) {
        field.add_mode(mode)?;
    }

    let mse_over = |field: &SeparableField, idx: &[usize]| -> f64 {
        if idx.is_empty() {
            return 0.0;
        }
        let mut acc = 0.0;
        for &k in idx {
            let mut pred = 0.0;
            for mode in field.modes() {
                let mut prod = 1.0;
                for (d, u) in mode.iter().enumerate() {
                    prod *= caches[k][d].dot(u);
                }
                pred += prod;
            }
            let r = pred - residuals[k];
            acc += r * r;
        }
        acc / idx.len() as f64
    };

    let mut order: Vec<usize> = train_idx.to_vec();
    let mut best_params = params.clone();
    let mut best_val = f64::INFINITY;
    let mut rising = 0usize;
    let mut prev_val = f64::INFINITY;
    let mut stop_reason = "epochs_max".to_string();
    let mut grad_modes: Vec<Vec<Vec<f64>>> = layout.from_flat(&vec![0.0; layout.total()]);

    for epoch in 0..cfg.epochs_max {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            for g in grad_modes.iter_mut().flatten().flatten() {
                *g = 0.0;
            }
            let scale = 2.0 / chunk.len() as f64;
            for &k in chunk {
                accumulate_sample_grad(&field, &caches[k], residuals[k], scale, &mut grad_modes);
            }
            let grad_flat = layout.to_flat(&grad_modes);
            opt.step(&mut params, &grad_flat);
            let new_modes = layout.from_flat(&params);
            for (m, mode) in new_modes.into_iter().enumerate() {
                *field.mode_mut(m) = mode;
            }
        }
        let train_mse = mse_over(&field, train_idx);
        let val_mse = if val_idx.is_empty() {
            train_mse
        } else {
            mse_over(&field, val_idx)
        };
        if !train_mse.is_finite() || !val_mse.is_finite() {
            return Err(Error::Training {
                epoch,
                message: format!("loss diverged (train {train_mse}, val {val_mse})"),
            });
        }
        report.train_mse.push(train_mse);
        report.validation_mse.push(val_mse);
        if val_mse < best_val {
            best_val = val_mse;
            best_params = params.clone();
        }
        if val_mse > prev_val {
            rising += 1;
            if rising >= cfg.early_stop_patience {
                stop_reason = format!("validation rising for {rising} epochs");
                break;
            }
        } else {
            rising = 0;
        }
        prev_val = val_mse;
    }
    report.stop_reason = stop_reason;
    Ok(layout.from_flat(&best_params))
}

fn prepare(
    dims: &[DimensionSpec],
    dataset: &Dataset,
    cfg: &TrainConfig,
) -> Result<(Vec<Vec<BasisEval>>, Vec<usize>, Vec<usize>, ChaCha8Rng)> {
    let mut caches = Vec::with_capacity(dataset.len());
    for row in &dataset.inputs {
        let mut per_dim = Vec::with_capacity(dims.len());
        for (d, &x) in dims.iter().zip(row) {
            per_dim.push(eval_basis(&d.mesh, &d.patch, x)?);
        }
        caches.push(per_dim);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut idx: Vec<usize> = (0..dataset.len()).collect();
    idx.shuffle(&mut rng);
    let n_val = ((dataset.len() as f64) * cfg.validation_fraction).floor() as usize;
    let n_val = n_val.min(dataset.len().saturating_sub(1));
    let val_idx = idx[..n_val].to_vec();
    let train_idx = idx[n_val..].to_vec();
    Ok((caches, train_idx, val_idx, rng))
}

/// Fit all modes simultaneously by mini-batch Adam.
pub fn train_all_at_once(
    dims: &[DimensionSpec],
    dataset: &Dataset,
    cfg: &TrainConfig,
) -> Result<(SeparableField, TrainReport)> {
    let (caches, train_idx, val_idx, mut rng) = prepare(dims, dataset, cfg)?;
    let mut report = TrainReport::default();
    let modes = fit_modes(
        dims,
        &caches,
        &dataset.targets,
        &train_idx,
        &val_idx,
        cfg.modes,
        cfg,
        &mut rng,
        &mut report,
    )?;
    let mut field = SeparableField::new(dims.to_vec())?;
    for m in modes {
        field.add_mode(m)?;
    }
    report.param_count = field.num_modes()
        * dims.iter().map(|d| d.mesh.num_nodes()).sum::<usize>();
    Ok((field, report))
}

/// Fit modes one at a time, each against the residual of the frozen partial
/// sum.
pub fn train_boosting(
    dims: &[DimensionSpec],
    dataset: &Dataset,
    cfg: &TrainConfig,
) -> Result<(SeparableField, TrainReport)> {
    let (caches, train_idx, val_idx, mut rng) = prepare(dims, dataset, cfg)?;
    let mut field = SeparableField::new(dims.to_vec())?;
    let mut report = TrainReport::default();
    let mut residuals = dataset.targets.clone();

    for _stage in 0..cfg.modes {
        let modes = fit_modes(
            dims,
            &caches,
            &residuals,
            &train_idx,
            &val_idx,
            1,
            cfg,
            &mut rng,
            &mut report,
        )?;
        let mode = modes.into_iter().next().unwrap();
        // freeze: fold the new mode's predictions into the residual targets
        for (k, cache) in caches.iter().enumerate() {
            let mut prod = 1.0;
            for (d, u) in mode.iter().enumerate() {
                prod *= cache[d].dot(u);
            }
            residuals[k] -= prod;
        }
        field.add_mode(mode)?;
    }
    report.param_count = field.num_modes()
        * dims.iter().map(|d| d.mesh.num_nodes()).sum::<usize>();
    Ok((field, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::PatchConfig;
    use crate::field::DimKind;
    use crate::mesh::make_uniform_mesh;
    use approx::assert_abs_diff_eq;

    fn dim(name: &str, n_elem: usize) -> DimensionSpec {
        DimensionSpec {
            name: name.into(),
            mesh: make_uniform_mesh(0.0, 1.0, n_elem).unwrap(),
            patch: PatchConfig::linear(),
            kind: DimKind::Space,
        }
    }

    fn bilinear_dataset(dims: &[DimensionSpec], n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)])
            .collect();
        let targets: Vec<f64> = inputs.iter().map(|p| p[0] * p[1]).collect();
        Dataset::new(inputs, targets, dims).unwrap()
    }

    #[test]
    fn loss_basics() {
        let dims = vec![dim("x", 4), dim("y", 4)];
        let mut field = SeparableField::new(dims.clone()).unwrap();
        field
            .add_mode(vec![vec![1.0; 5], vec![1.0; 5]])
            .unwrap();
        let ds = Dataset::new(
            vec![vec![0.2, 0.3], vec![0.8, 0.1]],
            vec![1.0, 1.0],
            &dims,
        )
        .unwrap();
        assert_abs_diff_eq!(loss_mse(&field, &ds).unwrap(), 0.0, epsilon = 1e-14);
        let zero = SeparableField::new(dims.clone()).unwrap();
        let c = Dataset::new(vec![vec![0.5, 0.5]], vec![3.0], &dims).unwrap();
        assert_abs_diff_eq!(loss_mse(&zero, &c).unwrap(), 9.0, epsilon = 1e-14);
    }

    #[test]
    fn dataset_rejects_out_of_domain() {
        let dims = vec![dim("x", 4)];
        match Dataset::new(vec![vec![0.5], vec![1.5]], vec![0.0, 0.0], &dims) {
            Err(Error::Indexed(f)) => assert_eq!(f[0].0, 1),
            other => panic!("expected indexed error, got {other:?}"),
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let dims = vec![dim("x", 5), dim("y", 6)];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _case in 0..50 {
            let mut field = SeparableField::new(dims.clone()).unwrap();
            let n_modes = rng.gen_range(1..4);
            for _ in 0..n_modes {
                field
                    .add_mode(vec![
                        (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                        (0..7).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                    ])
                    .unwrap();
            }
            let batch: Vec<Vec<f64>> = (0..4)
                .map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)])
                .collect();
            let targets: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let grad = grad_mse(&field, &batch, &targets).unwrap();

            // probe a few coefficients by central differences
            for _probe in 0..3 {
                let m = rng.gen_range(0..n_modes);
                let d = rng.gen_range(0..2);
                let i = rng.gen_range(0..field.mode(m)[d].len());
                let h = 1e-6;
                let eval = |field: &SeparableField| -> f64 {
                    let preds = field.evaluate_batch(&batch).unwrap();
                    preds
                        .iter()
                        .zip(&targets)
                        .map(|(p, y)| (p - y) * (p - y))
                        .sum::<f64>()
                        / 4.0
                };
                let mut fp = field.clone();
                fp.mode_mut(m)[d][i] += h;
                let mut fm = field.clone();
                fm.mode_mut(m)[d][i] -= h;
                let fd = (eval(&fp) - eval(&fm)) / (2.0 * h);
                let g = grad[m][d][i];
                let denom = fd.abs().max(1e-8);
                assert!(
                    (g - fd).abs() / denom < 1e-5,
                    "grad {g} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn gradient_locality_single_sample() {
        let dims = vec![dim("x", 10)];
        let mut field = SeparableField::new(dims).unwrap();
        field.add_mode(vec![vec![0.5; 11]]).unwrap();
        let grad = grad_mse(&field, &[vec![0.25]], &[1.0]).unwrap();
        // sample sits in element 2: only nodes 2 and 3 receive gradient
        for (i, g) in grad[0][0].iter().enumerate() {
            if i == 2 || i == 3 {
                assert!(g.abs() > 0.0);
            } else {
                assert_eq!(*g, 0.0);
            }
        }
    }

    #[test]
    fn learns_rank1_bilinear_target() {
        let dims = vec![dim("x", 10), dim("y", 10)];
        let ds = bilinear_dataset(&dims, 2000, 1);
        let mut cfg = TrainConfig::new(TrainScheme::AllAtOnce, 1, 400);
        cfg.learning_rate = 5e-3;
        cfg.seed = 2;
        let (field, report) = train_all_at_once(&dims, &ds, &cfg).unwrap();
        let rmse = loss_mse(&field, &ds).unwrap().sqrt();
        assert!(rmse <= 1e-3, "train RMSE {rmse}");
        assert_eq!(report.param_count, 22);
    }

    #[test]
    fn boosting_first_mode_dominates_rank1() {
        let dims = vec![dim("x", 10), dim("y", 10)];
        let ds = bilinear_dataset(&dims, 2000, 3);
        let mut cfg = TrainConfig::new(TrainScheme::Boosting, 3, 300);
        cfg.learning_rate = 5e-3;
        cfg.seed = 4;
        let (field, _) = train_boosting(&dims, &ds, &cfg).unwrap();
        assert_eq!(field.num_modes(), 3);
        let mut one = SeparableField::new(dims.clone()).unwrap();
        one.add_mode(field.mode(0).to_vec()).unwrap();
        let rmse1 = loss_mse(&one, &ds).unwrap().sqrt();
        assert!(rmse1 <= 1e-3, "first-mode RMSE {rmse1}");
        // later modes contribute little energy
        for m in 1..3 {
            let mut fm = SeparableField::new(dims.clone()).unwrap();
            fm.add_mode(field.mode(m).to_vec()).unwrap();
            let e = fm.inner_product_l2(&fm).unwrap().sqrt();
            assert!(e < 1e-2, "mode {m} energy {e}");
        }
    }

    #[test]
    fn zero_target_converges_to_zero() {
        let dims = vec![dim("x", 6), dim("y", 6)];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let inputs: Vec<Vec<f64>> = (0..500)
            .map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)])
            .collect();
        let ds = Dataset::new(inputs, vec![0.0; 500], &dims).unwrap();
        let mut cfg = TrainConfig::new(TrainScheme::AllAtOnce, 2, 500);
        cfg.learning_rate = 1e-2;
        let (field, _) = train_all_at_once(&dims, &ds, &cfg).unwrap();
        let rmse = loss_mse(&field, &ds).unwrap().sqrt();
        assert!(rmse <= 1e-6, "RMSE {rmse}");
    }

    #[test]
    fn training_is_deterministic() {
        let dims = vec![dim("x", 8), dim("y", 8)];
        let ds = bilinear_dataset(&dims, 400, 7);
        let mut cfg = TrainConfig::new(TrainScheme::AllAtOnce, 2, 20);
        cfg.seed = 9;
        let (f1, r1) = train_all_at_once(&dims, &ds, &cfg).unwrap();
        let (f2, r2) = train_all_at_once(&dims, &ds, &cfg).unwrap();
        assert_eq!(r1.train_mse, r2.train_mse);
        let p = [0.3, 0.6];
        assert_eq!(f1.evaluate(&p).unwrap(), f2.evaluate(&p).unwrap());
    }

    #[test]
    fn csv_round_trip() {
        let dims = vec![dim("x", 4), dim("y", 4)];
        let ds = bilinear_dataset(&dims, 25, 11);
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("data.csv");
        ds.write_csv(&path, &dims, "u").unwrap();
        let back = Dataset::from_csv(&path, &dims).unwrap();
        assert_eq!(ds.inputs, back.inputs);
        assert_eq!(ds.targets, back.targets);
        // header mismatch is rejected
        let wrong = vec![dim("a", 4), dim("y", 4)];
        assert!(Dataset::from_csv(&path, &wrong).is_err());
    }
}
