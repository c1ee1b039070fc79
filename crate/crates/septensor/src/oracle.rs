//! Independent reference implementations: dense tensor-product Galerkin
//! solves, finite-difference time steppers, error metrics, and the
//! Karhunen-Loeve machinery used to generate data and cross-check the
//! separable solver.

use nalgebra::{DMatrix, DVector};

use crate::assembly::{
    assemble_load, assemble_matrix_with_quad, SeparableOperator, SeparableSource,
};
use crate::banded::{BandedLu, BandedMatrix};
use crate::basis::{eval_basis, PatchConfig};
use crate::error::{Error, Result};
use crate::field::SeparableField;
use crate::mesh::Mesh1D;
use crate::solver::DirichletSpec;

/// Flattened tensor-grid index with dimension 0 slowest.
pub fn flat_index(idx: &[usize], sizes: &[usize]) -> usize {
    let mut f = 0;
    for (i, n) in idx.iter().zip(sizes) {
        f = f * n + i;
    }
    f
}

/// Nodal values of a separable field on its full tensor grid, flattened with
/// dimension 0 slowest.
pub fn field_nodal_values(field: &SeparableField) -> Vec<f64> {
    let sizes: Vec<usize> = field.dims().iter().map(|d| d.mesh.num_nodes()).collect();
    let total: usize = sizes.iter().product();
    let mut out = vec![0.0; total];
    for mode in field.modes() {
        let mut idx = vec![0usize; sizes.len()];
        for f in 0..total {
            let mut prod = 1.0;
            for (d, &i) in idx.iter().enumerate() {
                prod *= mode[d][i];
            }
            out[f] += prod;
            // odometer increment, last dim fastest
            for d in (0..sizes.len()).rev() {
                idx[d] += 1;
                if idx[d] < sizes[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
    }
    out
}

/// Assemble and solve the full tensor-product Galerkin system densely.
/// Returns nodal values on the flattened grid (dimension 0 slowest),
/// including any lift contribution. Desk-scale only: the dense system has
/// (Π n_d)² entries.
pub fn dense_galerkin_solve(
    op: &SeparableOperator,
    src: &SeparableSource,
    dims: &[crate::field::DimensionSpec],
    bc: &DirichletSpec,
) -> Result<Vec<f64>> {
    let sizes: Vec<usize> = dims.iter().map(|d| d.mesh.num_nodes()).collect();
    let total: usize = sizes.iter().product();
    if total > 40_000 {
        return Err(Error::Oracle(format!(
            "dense oracle limited to 40000 DOFs, got {total}"
        )));
    }

    let mut a = DMatrix::<f64>::zeros(total, total);
    for term in &op.terms {
        let mut k = DMatrix::<f64>::from_element(1, 1, 1.0);
        for (d, kind) in dims.iter().zip(&term.kinds) {
            let b = assemble_matrix_with_quad(&d.mesh, &d.patch, kind, d.patch.weighted_quad_points())?;
            let n = b.size();
            let dense = DMatrix::from_fn(n, n, |i, j| b.get(i, j));
            k = k.kronecker(&dense);
        }
        a += k * term.coeff;
    }

    let mut rhs = DVector::<f64>::zeros(total);
    for term in &src.terms {
        let mut v = DVector::<f64>::from_element(1, 1.0);
        for (d, g) in dims.iter().zip(term) {
            let load = assemble_load(&d.mesh, &d.patch, g)?;
            let lv = DVector::from_column_slice(&load);
            v = v.kronecker(&lv);
        }
        rhs += v;
    }

    // lift: subtract operator action, add nodal values back afterwards
    let lift_flat = match &bc.lift {
        Some(lift) => field_nodal_values(lift),
        None => vec![0.0; total],
    };
    let lift_vec = DVector::from_column_slice(&lift_flat);
    rhs -= &a * &lift_vec;

    // symmetric elimination of constrained flattened DOFs
    let mut constrained_flat = vec![false; total];
    let mut idx = vec![0usize; sizes.len()];
    for f in 0..total {
        for (d, &i) in idx.iter().enumerate() {
            if bc.constrained[d].contains(&i) {
                constrained_flat[f] = true;
                break;
            }
        }
        for d in (0..sizes.len()).rev() {
            idx[d] += 1;
            if idx[d] < sizes[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    for f in 0..total {
        if constrained_flat[f] {
            for j in 0..total {
                a[(f, j)] = 0.0;
                a[(j, f)] = 0.0;
            }
            a[(f, f)] = 1.0;
            rhs[f] = 0.0;
        }
    }

    let sol = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Oracle("dense Galerkin system singular".into()))?;
    Ok(sol
        .iter()
        .zip(&lift_flat)
        .map(|(u, l)| u + l)
        .collect())
}

/// Point-wise relative L2 error: ratio of root-sum-squares.
pub fn rel_l2_pointwise(pred: &[f64], exact: &[f64]) -> Result<f64> {
    if pred.len() != exact.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} vs {}",
            pred.len(),
            exact.len()
        )));
    }
    let den: f64 = exact.iter().map(|e| e * e).sum();
    if den == 0.0 {
        return Err(Error::UndefinedMetric(
            "exact values identically zero".into(),
        ));
    }
    let num: f64 = pred
        .iter()
        .zip(exact)
        .map(|(p, e)| (p - e) * (p - e))
        .sum();
    Ok((num / den).sqrt())
}

/// Integral-form relative L2 error ‖f − g‖ / ‖g‖ via separable inner
/// products.
pub fn rel_l2_integral(f: &SeparableField, g: &SeparableField) -> Result<f64> {
    let gg = g.inner_product_l2(g)?;
    if gg <= 0.0 {
        return Err(Error::UndefinedMetric("reference field has zero norm".into()));
    }
    let ff = f.inner_product_l2(f)?;
    let fg = f.inner_product_l2(g)?;
    Ok(((ff - 2.0 * fg + gg).max(0.0) / gg).sqrt())
}

/// Relative L2 error of a field against a closed-form solution, sampled on a
/// uniform tensor grid with `n_per_dim + 1` points per dimension.
pub fn sample_rel_l2<F: Fn(&[f64]) -> f64>(
    field: &SeparableField,
    exact: F,
    n_per_dim: usize,
) -> Result<f64> {
    let ndim = field.num_dims();
    let domains: Vec<(f64, f64)> = field.dims().iter().map(|d| d.mesh.domain()).collect();
    let total = (n_per_dim + 1).pow(ndim as u32);
    let mut num = 0.0;
    let mut den = 0.0;
    let mut idx = vec![0usize; ndim];
    let mut point = vec![0.0; ndim];
    for _ in 0..total {
        for d in 0..ndim {
            let (lo, hi) = domains[d];
            point[d] = lo + (hi - lo) * idx[d] as f64 / n_per_dim as f64;
        }
        let e = exact(&point);
        let v = field.evaluate(&point)?;
        num += (v - e) * (v - e);
        den += e * e;
        for d in (0..ndim).rev() {
            idx[d] += 1;
            if idx[d] <= n_per_dim {
                break;
            }
            idx[d] = 0;
        }
    }
    if den == 0.0 {
        return Err(Error::UndefinedMetric(
            "exact values identically zero".into(),
        ));
    }
    Ok((num / den).sqrt())
}

/// 5-point Laplacian solve of u_xx + u_yy = f on the unit square with `n`
/// nodes per side; `g` supplies boundary values. Output is row-major with
/// the x index slowest.
pub fn fd_poisson_2d<F, G>(n: usize, f: F, g: G) -> Result<Vec<f64>>
where
    F: Fn(f64, f64) -> f64,
    G: Fn(f64, f64) -> f64,
{
    if n < 3 || n > 257 {
        return Err(Error::Oracle(format!("grid size {n} outside 3..=257")));
    }
    let h = 1.0 / (n - 1) as f64;
    let m = n - 2; // interior nodes per side
    let mut u = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i == 0 || j == 0 || i == n - 1 || j == n - 1 {
                u[i * n + j] = g(i as f64 * h, j as f64 * h);
            }
        }
    }

    let mut a = BandedMatrix::new(m * m, m);
    let mut rhs = vec![0.0; m * m];
    let ih2 = 1.0 / (h * h);
    for i in 0..m {
        for j in 0..m {
            let row = i * m + j;
            a.set(row, row, -4.0 * ih2);
            let (x, y) = ((i + 1) as f64 * h, (j + 1) as f64 * h);
            rhs[row] = f(x, y);
            // neighbors: interior ones enter the matrix, boundary ones the RHS
            let mut neighbor = |ii: usize, jj: usize, col: Option<usize>| {
                match col {
                    Some(c) => a.add(row, c, ih2),
                    None => rhs[row] -= ih2 * u[ii * n + jj],
                }
            };
            if i > 0 {
                neighbor(i, j + 1, Some(row - m));
            } else {
                neighbor(0, j + 1, None);
            }
            if i + 1 < m {
                neighbor(i + 2, j + 1, Some(row + m));
            } else {
                neighbor(n - 1, j + 1, None);
            }
            if j > 0 {
                neighbor(i + 1, j, Some(row - 1));
            } else {
                neighbor(i + 1, 0, None);
            }
            if j + 1 < m {
                neighbor(i + 1, j + 2, Some(row + 1));
            } else {
                neighbor(i + 1, n - 1, None);
            }
        }
    }
    let sol = BandedLu::factor(&a)
        .map_err(|e| Error::Oracle(format!("fd_poisson_2d: {e}")))?
        .solve(&rhs);
    for i in 0..m {
        for j in 0..m {
            u[(i + 1) * n + (j + 1)] = sol[i * m + j];
        }
    }
    Ok(u)
}

/// Standard 4×4 grid of Gaussian source centers on {0.2, 0.4, 0.6, 0.8}².
pub fn source_centers_4x4() -> Vec<(f64, f64)> {
    let c = [0.2, 0.4, 0.6, 0.8];
    let mut out = Vec::with_capacity(16);
    for &x in &c {
        for &y in &c {
            out.push((x, y));
        }
    }
    out
}

pub const SOURCE_R0: f64 = 0.05;

/// b(x, y; P) = Σ_i P exp(−2((x−x_i)² + (y−y_i)²)/r_0²) over the 16 standard
/// centers.
pub fn heat_source_2d(x: f64, y: f64, p: f64) -> f64 {
    let r2 = SOURCE_R0 * SOURCE_R0;
    source_centers_4x4()
        .iter()
        .map(|&(cx, cy)| p * (-2.0 * ((x - cx).powi(2) + (y - cy).powi(2)) / r2).exp())
        .sum()
}

/// Crank-Nicolson trajectory of a heat solve; frames include t = 0 and are
/// flattened row-major (x slowest).
#[derive(Debug, Clone)]
pub struct HeatTrajectory {
    pub n: usize,
    pub times: Vec<f64>,
    pub frames: Vec<Vec<f64>>,
}

impl HeatTrajectory {
    /// Bilinear interpolation in space at an exact stored time index.
    pub fn sample_frame(&self, step: usize, x: f64, y: f64) -> f64 {
        let n = self.n;
        let h = 1.0 / (n - 1) as f64;
        let fx = (x / h).clamp(0.0, (n - 1) as f64);
        let fy = (y / h).clamp(0.0, (n - 1) as f64);
        let (i0, j0) = (
            (fx.floor() as usize).min(n - 2),
            (fy.floor() as usize).min(n - 2),
        );
        let (tx, ty) = (fx - i0 as f64, fy - j0 as f64);
        let f = &self.frames[step];
        let v00 = f[i0 * n + j0];
        let v01 = f[i0 * n + j0 + 1];
        let v10 = f[(i0 + 1) * n + j0];
        let v11 = f[(i0 + 1) * n + j0 + 1];
        v00 * (1.0 - tx) * (1.0 - ty)
            + v01 * (1.0 - tx) * ty
            + v10 * tx * (1.0 - ty)
            + v11 * tx * ty
    }
}

/// u̇ − kΔu = b(x, y; P) on [0,1]² with homogeneous Dirichlet boundary and
/// zero initial condition, by Crank-Nicolson on an n×n grid.
pub fn fd_heat_2d_param(
    n: usize,
    n_steps: usize,
    t_end: f64,
    k: f64,
    p: f64,
) -> Result<HeatTrajectory> {
    if n < 3 || n > 257 || n_steps == 0 {
        return Err(Error::Oracle(format!(
            "fd_heat_2d_param: bad grid n={n}, steps={n_steps}"
        )));
    }
    let h = 1.0 / (n - 1) as f64;
    let dt = t_end / n_steps as f64;
    let m = n - 2;
    let nn = m * m;
    let ih2 = 1.0 / (h * h);

    // A± = I ∓ (dt k / 2) L with the 5-point interior Laplacian L
    let mut a_imp = BandedMatrix::new(nn, m);
    let c = 0.5 * dt * k * ih2;
    for i in 0..m {
        for j in 0..m {
            let row = i * m + j;
            a_imp.set(row, row, 1.0 + 4.0 * c);
            if i > 0 {
                a_imp.set(row, row - m, -c);
            }
            if i + 1 < m {
                a_imp.set(row, row + m, -c);
            }
            if j > 0 {
                a_imp.set(row, row - 1, -c);
            }
            if j + 1 < m {
                a_imp.set(row, row + 1, -c);
            }
        }
    }
    let lu = BandedLu::factor(&a_imp).map_err(|e| Error::Oracle(format!("heat CN: {e}")))?;

    let mut b = vec![0.0; nn];
    for i in 0..m {
        for j in 0..m {
            b[i * m + j] = heat_source_2d((i + 1) as f64 * h, (j + 1) as f64 * h, p);
        }
    }

    let mut u = vec![0.0; nn];
    let mut frames = vec![embed_frame(&u, n)];
    let mut times = vec![0.0];
    let lap = |u: &[f64], i: usize, j: usize| -> f64 {
        let row = i * m + j;
        let mut s = -4.0 * u[row];
        if i > 0 {
            s += u[row - m];
        }
        if i + 1 < m {
            s += u[row + m];
        }
        if j > 0 {
            s += u[row - 1];
        }
        if j + 1 < m {
            s += u[row + 1];
        }
        s * ih2
    };
    for step in 1..=n_steps {
        let mut rhs = vec![0.0; nn];
        for i in 0..m {
            for j in 0..m {
                let row = i * m + j;
                rhs[row] = u[row] + 0.5 * dt * k * lap(&u, i, j) + dt * b[row];
            }
        }
        u = lu.solve(&rhs);
        frames.push(embed_frame(&u, n));
        times.push(step as f64 * dt);
    }
    Ok(HeatTrajectory { n, times, frames })
}

fn embed_frame(interior: &[f64], n: usize) -> Vec<f64> {
    let m = n - 2;
    let mut full = vec![0.0; n * n];
    for i in 0..m {
        for j in 0..m {
            full[(i + 1) * n + (j + 1)] = interior[i * m + j];
        }
    }
    full
}

/// 3D variant with the depth-indicator source
/// b = heat_source_2d(x,y;P)·1_{z ≥ d0}; Crank-Nicolson with a
/// conjugate-gradient inner solve (the implicit matrix is SPD).
/// Frames are flattened with x slowest, then y, then z.
pub fn fd_heat_3d_param(
    n: usize,
    n_steps: usize,
    t_end: f64,
    k: f64,
    p: f64,
    d0: f64,
) -> Result<HeatTrajectory> {
    if n < 3 || n > 65 || n_steps == 0 {
        return Err(Error::Oracle(format!(
            "fd_heat_3d_param: bad grid n={n}, steps={n_steps}"
        )));
    }
    let h = 1.0 / (n - 1) as f64;
    let dt = t_end / n_steps as f64;
    let m = n - 2;
    let nn = m * m * m;
    let ih2 = 1.0 / (h * h);
    let c = 0.5 * dt * k * ih2;

    let idx = |i: usize, j: usize, l: usize| (i * m + j) * m + l;
    // implicit matvec: (I + c (6u - Σ neighbors))
    let apply = |u: &[f64], out: &mut [f64]| {
        for i in 0..m {
            for j in 0..m {
                for l in 0..m {
                    let row = idx(i, j, l);
                    let mut s = 6.0 * u[row];
                    if i > 0 {
                        s -= u[idx(i - 1, j, l)];
                    }
                    if i + 1 < m {
                        s -= u[idx(i + 1, j, l)];
                    }
                    if j > 0 {
                        s -= u[idx(i, j - 1, l)];
                    }
                    if j + 1 < m {
                        s -= u[idx(i, j + 1, l)];
                    }
                    if l > 0 {
                        s -= u[idx(i, j, l - 1)];
                    }
                    if l + 1 < m {
                        s -= u[idx(i, j, l + 1)];
                    }
                    out[row] = u[row] + c * s;
                }
            }
        }
    };

    let mut b = vec![0.0; nn];
    for i in 0..m {
        for j in 0..m {
            let sxy = heat_source_2d((i + 1) as f64 * h, (j + 1) as f64 * h, p);
            for l in 0..m {
                let z = (l + 1) as f64 * h;
                // weight the indicator by the covered fraction of the node's
                // dual cell [z-h/2, z+h/2]; pointwise sampling would shift
                // the effective interface to d0 - h/2 (an O(h) source bias)
                let w = (((z + 0.5 * h - d0) / h).min(1.0)).max(0.0);
                b[idx(i, j, l)] = w * sxy;
            }
        }
    }

    let mut u = vec![0.0; nn];
    let mut frames = vec![embed_frame_3d(&u, n)];
    let mut times = vec![0.0];
    let mut scratch = vec![0.0; nn];
    for step in 1..=n_steps {
        // rhs = (I - c L_neg) u + dt b, with L_neg the negated Laplacian
        apply(&u, &mut scratch);
        let rhs: Vec<f64> = (0..nn)
            .map(|r| 2.0 * u[r] - scratch[r] + dt * b[r])
            .collect();
        u = cg_solve(&apply, &rhs, &u, 1e-12, 500)?;
        frames.push(embed_frame_3d(&u, n));
        times.push(step as f64 * dt);
    }
    Ok(HeatTrajectory { n, times, frames })
}

fn embed_frame_3d(interior: &[f64], n: usize) -> Vec<f64> {
    let m = n - 2;
    let mut full = vec![0.0; n * n * n];
    for i in 0..m {
        for j in 0..m {
            for l in 0..m {
                full[((i + 1) * n + (j + 1)) * n + (l + 1)] = interior[(i * m + j) * m + l];
            }
        }
    }
    full
}

fn cg_solve<F: Fn(&[f64], &mut [f64])>(
    apply: &F,
    rhs: &[f64],
    x0: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<Vec<f64>> {
    let n = rhs.len();
    let mut x = x0.to_vec();
    let mut ax = vec![0.0; n];
    apply(&x, &mut ax);
    let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut p = r.clone();
    let rhs_norm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    for _ in 0..max_iters {
        if rr.sqrt() <= tol * rhs_norm {
            return Ok(x);
        }
        apply(&p, &mut ax);
        let pap: f64 = p.iter().zip(&ax).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            return Err(Error::Oracle("CG matrix not positive definite".into()));
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ax[i];
        }
        let rr_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    Err(Error::Oracle(format!(
        "CG failed to converge: residual {:.3e}",
        rr.sqrt() / rhs_norm
    )))
}

/// 1D conservative variable-conductivity heat solve
/// u̇ − (k(x) u')' = f(x) on [0,1] with homogeneous Dirichlet ends and zero
/// initial condition, Crank-Nicolson with face-centered conductivities.
pub fn fd_heat_1d_var_k<K, F>(
    n: usize,
    n_steps: usize,
    t_end: f64,
    k: K,
    f: F,
) -> Result<HeatTrajectory>
where
    K: Fn(f64) -> f64,
    F: Fn(f64) -> f64,
{
    if n < 3 || n_steps == 0 {
        return Err(Error::Oracle("fd_heat_1d_var_k: bad grid".into()));
    }
    let h = 1.0 / (n - 1) as f64;
    let dt = t_end / n_steps as f64;
    let m = n - 2;
    let ih2 = 1.0 / (h * h);

    // face conductivities k_{i+1/2} for faces between nodes i and i+1
    let kf: Vec<f64> = (0..n - 1).map(|i| k((i as f64 + 0.5) * h)).collect();
    if kf.iter().any(|v| !v.is_finite() || *v <= 0.0) {
        return Err(Error::Oracle(
            "conductivity must be positive and finite".into(),
        ));
    }

    let mut a_imp = BandedMatrix::new(m, 1);
    for i in 0..m {
        // interior node i+1 touches faces i and i+1
        let (kl, kr) = (kf[i], kf[i + 1]);
        a_imp.set(i, i, 1.0 + 0.5 * dt * ih2 * (kl + kr));
        if i > 0 {
            a_imp.set(i, i - 1, -0.5 * dt * ih2 * kl);
        }
        if i + 1 < m {
            a_imp.set(i, i + 1, -0.5 * dt * ih2 * kr);
        }
    }
    let lu = BandedLu::factor(&a_imp).map_err(|e| Error::Oracle(format!("var-k CN: {e}")))?;

    let src: Vec<f64> = (0..m).map(|i| f((i + 1) as f64 * h)).collect();
    let mut u = vec![0.0; m];
    let mut frames = vec![embed_frame_1d(&u, n)];
    let mut times = vec![0.0];
    for step in 1..=n_steps {
        let mut rhs = vec![0.0; m];
        for i in 0..m {
            let (kl, kr) = (kf[i], kf[i + 1]);
            let ul = if i > 0 { u[i - 1] } else { 0.0 };
            let ur = if i + 1 < m { u[i + 1] } else { 0.0 };
            let flux = ih2 * (kr * (ur - u[i]) - kl * (u[i] - ul));
            rhs[i] = u[i] + 0.5 * dt * flux + dt * src[i];
        }
        u = lu.solve(&rhs);
        frames.push(embed_frame_1d(&u, n));
        times.push(step as f64 * dt);
    }
    Ok(HeatTrajectory { n, times, frames })
}

fn embed_frame_1d(interior: &[f64], n: usize) -> Vec<f64> {
    let mut full = vec![0.0; n];
    full[1..n - 1].copy_from_slice(interior);
    full
}

/// Cyclic Jacobi eigensolve of a symmetric matrix. Returns (eigenvalues,
/// eigenvectors) sorted descending; eigenvector j is `vectors[j]`.
pub fn jacobi_eigh(a: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = a.len();
    if n == 0 || a.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidArgument("matrix must be square".into()));
    }
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let frob: f64 = m
        .iter()
        .flat_map(|r| r.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    let target = 1e-12 * frob;

    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum::<f64>()
            .sqrt();
        if off * std::f64::consts::SQRT_2 < target {
            let mut pairs: Vec<(f64, Vec<f64>)> = (0..n)
                .map(|j| (m[j][j], (0..n).map(|i| v[i][j]).collect()))
                .collect();
            pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
            let (vals, vecs) = pairs.into_iter().unzip();
            return Ok((vals, vecs));
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p][q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let cos = 1.0 / (t * t + 1.0).sqrt();
                let sin = t * cos;
                for i in 0..n {
                    let (mip, miq) = (m[i][p], m[i][q]);
                    m[i][p] = cos * mip - sin * miq;
                    m[i][q] = sin * mip + cos * miq;
                }
                for j in 0..n {
                    let (mpj, mqj) = (m[p][j], m[q][j]);
                    m[p][j] = cos * mpj - sin * mqj;
                    m[q][j] = sin * mpj + cos * mqj;
                }
                for i in 0..n {
                    let (vip, viq) = (v[i][p], v[i][q]);
                    v[i][p] = cos * vip - sin * viq;
                    v[i][q] = sin * vip + cos * viq;
                }
            }
        }
    }
    Err(Error::Oracle(
        "Jacobi eigensolve did not converge in 100 sweeps".into(),
    ))
}

/// Karhunen-Loeve expansion of a squared-exponential random conductivity
/// field over a nodal grid.
#[derive(Debug, Clone)]
pub struct KLExpansion {
    pub k_mu: f64,
    pub sigma: f64,
    pub ell: f64,
    pub nodes: Vec<f64>,
    /// descending
    pub lambdas: Vec<f64>,
    /// phis[j] is eigenvector j over the nodes
    pub phis: Vec<Vec<f64>>,
    pub n_e: usize,
}

pub fn kl_build(
    k_mu: f64,
    sigma: f64,
    ell: f64,
    nodes: &[f64],
    n_e: usize,
) -> Result<KLExpansion> {
    let n = nodes.len();
    if n_e == 0 || n_e > n {
        return Err(Error::InvalidArgument(format!(
            "retained modes {n_e} outside 1..={n}"
        )));
    }
    let cov: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let d = nodes[i] - nodes[j];
                    sigma * sigma * (-d * d / (2.0 * ell * ell)).exp()
                })
                .collect()
        })
        .collect();
    let (lambdas, phis) = jacobi_eigh(&cov)?;
    for (j, &l) in lambdas.iter().enumerate() {
        if l < -1e-10 * lambdas[0].max(1e-300) {
            return Err(Error::Oracle(format!(
                "covariance eigenvalue {j} significantly negative: {l:.3e}"
            )));
        }
    }
    Ok(KLExpansion {
        k_mu,
        sigma,
        ell,
        nodes: nodes.to_vec(),
        lambdas: lambdas[..n_e].to_vec(),
        phis: phis[..n_e].to_vec(),
        n_e,
    })
}

impl KLExpansion {
    /// Nodal conductivity values for one draw of the uncorrelated variables.
    pub fn nodal_k(&self, zeta: &[f64]) -> Result<Vec<f64>> {
        if zeta.len() != self.n_e {
            return Err(Error::InvalidArgument(format!(
                "zeta has {} entries, expansion retains {}",
                zeta.len(),
                self.n_e
            )));
        }
        let n = self.nodes.len();
        let mut k = vec![self.k_mu; n];
        for (j, &z) in zeta.iter().enumerate() {
            let sl = self.lambdas[j].max(0.0).sqrt();
            for i in 0..n {
                k[i] += sl * self.phis[j][i] * z;
            }
        }
        Ok(k)
    }

    /// √λ_J · φ_·J as a nodal vector, the x-factor of the J-th separable
    /// conductivity term.
    pub fn mode_nodal(&self, j: usize) -> Vec<f64> {
        let sl = self.lambdas[j].max(0.0).sqrt();
        self.phis[j].iter().map(|p| sl * p).collect()
    }
}

/// k(x, ζ) reconstructed through the interpolation basis on the expansion's
/// grid.
pub fn kl_sample(
    expansion: &KLExpansion,
    mesh: &Mesh1D,
    patch: &PatchConfig,
    zeta: &[f64],
    x: f64,
) -> Result<f64> {
    let nodal = expansion.nodal_k(zeta)?;
    if nodal.len() != mesh.num_nodes() {
        return Err(Error::InvalidArgument(
            "mesh does not match expansion grid".into(),
        ));
    }
    Ok(eval_basis(mesh, patch, x)?.dot(&nodal))
}
