use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::assembly::{
    assemble_load, assemble_matrix_with_quad, CoeffFn, SeparableOperator, SeparableSource,
};
use crate::banded::{BandedLu, BandedMatrix};
use crate::error::{Error, Result};
use crate::field::{DimKind, DimensionSpec, SeparableField};

/// Homogeneous Dirichlet constraints per dimension, plus an optional lift
/// field carrying nonhomogeneous boundary data.
#[derive(Debug, Clone)]
pub struct DirichletSpec {
    /// per dimension: node indices pinned to zero
    pub constrained: Vec<Vec<usize>>,
    pub lift: Option<SeparableField>,
}

impl DirichletSpec {
    pub fn none(num_dims: usize) -> Self {
        Self {
            constrained: vec![Vec::new(); num_dims],
            lift: None,
        }
    }

    /// Conventional constraints: SPACE dims pin both boundary nodes, TIME
    /// dims pin the initial node, PARAM dims are unconstrained.
    pub fn for_dims(dims: &[DimensionSpec]) -> Self {
        let constrained = dims
            .iter()
            .map(|d| match d.kind {
                DimKind::Space => vec![0, d.mesh.num_nodes() - 1],
                DimKind::Time => vec![0],
                DimKind::Param => Vec::new(),
            })
            .collect();
        Self {
            constrained,
            lift: None,
        }
    }

    pub fn with_lift(mut self, lift: SeparableField) -> Self {
        self.lift = Some(lift);
        self
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub max_modes: usize,
    pub max_subspace_iters: usize,
    /// relative mode-vector change below which the subspace iteration stops
    pub iter_tol: f64,
    /// relative L2 energy contribution below which boosting stops and the
    /// negligible mode is dropped
    pub mode_tol: f64,
    pub seed: u64,
}

impl SolverConfig {
    pub fn new(max_modes: usize) -> Self {
        Self {
            max_modes,
            max_subspace_iters: 5,
            iter_tol: 1e-6,
            mode_tol: 1e-10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub modes_used: usize,
    pub lift_modes: usize,
    pub iterations_per_mode: Vec<usize>,
    /// per mode, the max relative vector change after each sweep
    pub change_histories: Vec<Vec<f64>>,
    /// per mode, ‖mode‖_L2 / ‖field‖_L2 after adding it
    pub energy_increments: Vec<f64>,
    pub warnings: Vec<String>,
    pub wall_time_s: f64,
}

impl SolveReport {
    pub fn to_log(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "modes_used: {} (lift {})\nwall_time_s: {:.3}\n",
            self.modes_used, self.lift_modes, self.wall_time_s
        ));
        for (m, (it, inc)) in self
            .iterations_per_mode
            .iter()
            .zip(&self.energy_increments)
            .enumerate()
        {
            s.push_str(&format!(
                "mode {m}: iters {it}, energy increment {inc:.6e}, changes {:?}\n",
                self.change_histories[m]
            ));
        }
        for w in &self.warnings {
            s.push_str(&format!("warning: {w}\n"));
        }
        s
    }
}

/// Cached per-dimension matrices and load vectors for one (operator, source,
/// dims) triple.
pub struct SolveContext {
    dims: Vec<DimensionSpec>,
    op: SeparableOperator,
    /// mats[term][dim]
    mats: Vec<Vec<BandedMatrix>>,
    /// loads[source_term][dim]
    loads: Vec<Vec<Vec<f64>>>,
}

impl SolveContext {
    pub fn new(
        op: &SeparableOperator,
        src: &SeparableSource,
        dims: &[DimensionSpec],
    ) -> Result<Self> {
        if op.terms.is_empty() {
            return Err(Error::Configuration("operator has no terms".into()));
        }
        for t in &op.terms {
            if t.kinds.len() != dims.len() {
                return Err(Error::Configuration(format!(
                    "operator term has {} kinds, {} dimensions declared",
                    t.kinds.len(),
                    dims.len()
                )));
            }
        }
        for s in &src.terms {
            if s.len() != dims.len() {
                return Err(Error::Configuration(format!(
                    "source term has {} factors, {} dimensions declared",
                    s.len(),
                    dims.len()
                )));
            }
        }
        let mut mats = Vec::with_capacity(op.terms.len());
        for term in &op.terms {
            let mut per_dim = Vec::with_capacity(dims.len());
            for (d, kind) in dims.iter().zip(&term.kinds) {
                // quadrature raised above the basis default: the composite
                // basis is degree p+1 per element
                let g = d.patch.weighted_quad_points();
                per_dim.push(assemble_matrix_with_quad(&d.mesh, &d.patch, kind, g)?);
            }
            mats.push(per_dim);
        }
        let mut loads = Vec::with_capacity(src.terms.len());
        for term in &src.terms {
            let mut per_dim = Vec::with_capacity(dims.len());
            for (d, g) in dims.iter().zip(term) {
                per_dim.push(assemble_load(&d.mesh, &d.patch, g)?);
            }
            loads.push(per_dim);
        }
        Ok(Self {
            dims: dims.to_vec(),
            op: op.clone(),
            mats,
            loads,
        })
    }

    pub fn dims(&self) -> &[DimensionSpec] {
        &self.dims
    }

    /// Assemble the 1D system for dimension `d` with every other dimension's
    /// current-mode vector frozen:
    /// A_d = Σ_t coeff_t · M_t,d · Π_{d'≠d} (u_{d'}ᵀ M_t,d' u_{d'}),
    /// Q_d = source contractions − prior-mode operator action.
    pub fn build_dim_system(
        &self,
        field: &SeparableField,
        current: &[Vec<f64>],
        d: usize,
    ) -> (BandedMatrix, Vec<f64>) {
        let ndim = self.dims.len();
        let n = self.dims[d].mesh.num_nodes();
        let hb = (2 * self.dims[d].patch.s + 1).min(n - 1);
        let mut a = BandedMatrix::new(n, hb);
        for (t, term) in self.op.terms.iter().enumerate() {
            let mut c = term.coeff;
            for dd in 0..ndim {
                if dd != d {
                    c *= self.mats[t][dd].quadratic_form(&current[dd], &current[dd]);
                }
            }
            a.add_scaled(&self.mats[t][d], c);
        }

        let mut q = vec![0.0; n];
        for load in &self.loads {
            let mut c = 1.0;
            for dd in 0..ndim {
                if dd != d {
                    c *= dot(&current[dd], &load[dd]);
                }
            }
            for i in 0..n {
                q[i] += c * load[d][i];
            }
        }
        for mode in field.modes() {
            for (t, term) in self.op.terms.iter().enumerate() {
                let mut c = term.coeff;
                for dd in 0..ndim {
                    if dd != d {
                        c *= self.mats[t][dd].quadratic_form(&current[dd], &mode[dd]);
                    }
                }
                let av = self.mats[t][d].matvec(&mode[d]);
                for i in 0..n {
                    q[i] -= c * av[i];
                }
            }
        }
        (a, q)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Symmetric elimination of constrained DOFs: zero rows/columns, unit
/// diagonal, zero RHS.
pub fn apply_dirichlet(
    a: &mut BandedMatrix,
    q: &mut [f64],
    constrained: &[usize],
) -> Result<()> {
    let n = a.size();
    let mut distinct: Vec<usize> = constrained.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() >= n {
        return Err(Error::Configuration(
            "all DOFs constrained, nothing to solve".into(),
        ));
    }
    for &k in &distinct {
        if k >= n {
            return Err(Error::InvalidArgument(format!(
                "constrained index {k} out of range (n = {n})"
            )));
        }
        a.eliminate_dof(k);
        q[k] = 0.0;
    }
    Ok(())
}

/// Nodal interpolation of boundary/initial data given as Σ_r Π_d g_d^(r).
pub fn make_lift_for_separable_boundary(
    dims: &[DimensionSpec],
    terms: &[Vec<CoeffFn>],
) -> Result<SeparableField> {
    let mut field = SeparableField::new(dims.to_vec())?;
    for term in terms {
        if term.len() != dims.len() {
            return Err(Error::Unsupported(format!(
                "boundary term has {} factors, field has {} dimensions",
                term.len(),
                dims.len()
            )));
        }
        let vectors: Vec<Vec<f64>> = dims
            .iter()
            .zip(term)
            .map(|(d, g)| d.mesh.nodes().iter().map(|&x| g(x)).collect())
            .collect();
        field.add_mode(vectors)?;
    }
    Ok(field)
}

/// Grow a separable field mode by mode, linearizing each mode by subspace
/// iteration over the dimensions.
pub fn solve(
    op: &SeparableOperator,
    src: &SeparableSource,
    dims: &[DimensionSpec],
    bc: &DirichletSpec,
    cfg: &SolverConfig,
) -> Result<(SeparableField, SolveReport)> {
    let start = Instant::now();
    if bc.constrained.len() != dims.len() {
        return Err(Error::Configuration(format!(
            "constraint spec covers {} dimensions, field has {}",
            bc.constrained.len(),
            dims.len()
        )));
    }
    let ctx = SolveContext::new(op, src, dims)?;
    let mut field = SeparableField::new(dims.to_vec())?;
    if let Some(lift) = &bc.lift {
        field.extend_modes(lift)?;
    }
    let lift_modes = field.num_modes();

    let mass = field.mass_matrices()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = SolveReport {
        modes_used: lift_modes,
        lift_modes,
        iterations_per_mode: Vec::new(),
        change_histories: Vec::new(),
        energy_increments: Vec::new(),
        warnings: Vec::new(),
        wall_time_s: 0.0,
    };

    let ndim = dims.len();
    for m in 0..cfg.max_modes {
        // seeded random unit start, constrained entries zeroed
        let mut current: Vec<Vec<f64>> = Vec::with_capacity(ndim);
        for (d, spec) in dims.iter().enumerate() {
            let n = spec.mesh.num_nodes();
            let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            for &i in &bc.constrained[d] {
                v[i] = 0.0;
            }
            let nv = norm(&v);
            if nv == 0.0 {
                return Err(Error::Solver {
                    dim: d,
                    mode: m,
                    message: "empty free DOF set".into(),
                });
            }
            for x in &mut v {
                *x /= nv;
            }
            current.push(v);
        }

        let mut changes = Vec::new();
        let mut iters = 0;
        let mut null_mode = false;
        let mut exhausted = false;
        'sweeps: for _ in 0..cfg.max_subspace_iters {
            let prev = current.clone();
            for d in 0..ndim {
                let (mut a, mut q) = ctx.build_dim_system(&field, &current, d);
                // in high dimensions the frozen-dim contractions shrink the
                // whole system by orders of magnitude; rescale to O(1) so the
                // unit diagonals of the constrained rows stay comparable
                let scale = a.norm_inf();
                if scale > 0.0 && scale.is_finite() {
                    a.scale(1.0 / scale);
                    for x in q.iter_mut() {
                        *x /= scale;
                    }
                }
                apply_dirichlet(&mut a, &mut q, &bc.constrained[d])?;
                let lu = match BandedLu::factor(&a) {
                    Ok(lu) => lu,
                    // a singular system on a later mode means the residual
                    // has collapsed below round-off: the frozen-dim
                    // contractions underflowed against the constraint rows
                    Err(_) if m > 0 || report.lift_modes > 0 => {
                        exhausted = true;
                        break 'sweeps;
                    }
                    Err(e) => {
                        return Err(Error::Solver {
                            dim: d,
                            mode: m,
                            message: e.to_string(),
                        })
                    }
                };
                let u = lu.solve(&q);
                if norm(&u) == 0.0 {
                    // null update: the mode contributes nothing and further
                    // dimension systems would degenerate
                    current[d] = u;
                    null_mode = true;
                    break;
                }
                // magnitude lives in dimension 0; later dims stay unit
                if d > 0 {
                    let nu = norm(&u);
                    if nu > 0.0 {
                        current[d] = u.iter().map(|x| x / nu).collect();
                        for x in &mut current[0] {
                            *x *= nu;
                        }
                    } else {
                        null_mode = true;
                        current[d] = u;
                    }
                } else {
                    current[d] = u;
                }
            }
            iters += 1;
            let change = max_relative_change(&prev, &current);
            changes.push(change);
            if null_mode || change < cfg.iter_tol {
                break;
            }
        }
        if exhausted {
            report.warnings.push(format!(
                "mode {m}: residual exhausted (singular dimension system), \
                 boosting stopped"
            ));
            break;
        }
        if iters == cfg.max_subspace_iters
            && changes.last().copied().unwrap_or(0.0) >= cfg.iter_tol
        {
            report.warnings.push(format!(
                "mode {m}: subspace iteration not converged after {iters} sweeps \
                 (last change {:.3e})",
                changes.last().unwrap()
            ));
        }

        // relative energy contribution of the new mode
        let mut mode_field = SeparableField::new(dims.to_vec())?;
        mode_field.add_mode(current.clone())?;
        let mode_energy = mode_field
            .inner_product_l2_with(&mode_field, &mass)?
            .max(0.0)
            .sqrt();
        field.add_mode(current)?;
        let total_energy = field
            .inner_product_l2_with(&field, &mass)?
            .max(0.0)
            .sqrt();
        let increment = if total_energy > 0.0 {
            mode_energy / total_energy
        } else {
            0.0
        };

        report.iterations_per_mode.push(iters);
        report.change_histories.push(changes);
        report.energy_increments.push(increment);

        if increment < cfg.mode_tol {
            // negligible contribution: drop it and stop boosting
            field.truncate_modes(field.num_modes() - 1);
            break;
        }
        report.modes_used = field.num_modes();
    }

    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok((field, report))
}

/// Max over dimensions of the relative vector change, measured on unit
/// directions with sign alignment.
fn max_relative_change(prev: &[Vec<f64>], current: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for (p, c) in prev.iter().zip(current) {
        let (np, nc) = (norm(p), norm(c));
        if np == 0.0 || nc == 0.0 {
            continue;
        }
        let mut dplus = 0.0;
        let mut dminus = 0.0;
        for (a, b) in p.iter().zip(c) {
            let (ua, ub) = (a / np, b / nc);
            dplus += (ua - ub) * (ua - ub);
            dminus += (ua + ub) * (ua + ub);
        }
        worst = worst.max(dplus.min(dminus).sqrt());
    }
    worst
}
