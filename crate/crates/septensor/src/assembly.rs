use std::fmt;
use std::sync::Arc;

use crate::banded::BandedMatrix;
use crate::basis::{eval_basis, PatchConfig};
use crate::error::{Error, Result};
use crate::field::{DimKind, DimensionSpec};
use crate::mesh::Mesh1D;
use crate::quadrature::gauss_rule;

/// Scalar coefficient or source factor along one dimension.
pub type CoeffFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

pub fn coeff_fn<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> CoeffFn {
    Arc::new(f)
}

/// One-dimensional Galerkin matrix kinds.
#[derive(Clone)]
pub enum Op1DKind {
    /// ∫ Ñ_i Ñ_j dx
    Mass,
    /// ∫ Ñ'_i Ñ'_j dx
    Stiffness,
    /// ∫ Ñ_i Ñ'_j dx
    Convection,
    /// ∫ w(x) Ñ_i Ñ_j dx
    WeightedMass(CoeffFn),
    /// ∫ w(x) Ñ'_i Ñ'_j dx
    WeightedStiffness(CoeffFn),
}

impl fmt::Debug for Op1DKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Op1DKind::Mass => write!(f, "Mass"),
            Op1DKind::Stiffness => write!(f, "Stiffness"),
            Op1DKind::Convection => write!(f, "Convection"),
            Op1DKind::WeightedMass(_) => write!(f, "WeightedMass(..)"),
            Op1DKind::WeightedStiffness(_) => write!(f, "WeightedStiffness(..)"),
        }
    }
}

impl Op1DKind {
    fn is_weighted(&self) -> bool {
        matches!(
            self,
            Op1DKind::WeightedMass(_) | Op1DKind::WeightedStiffness(_)
        )
    }
}

/// coeff · (kinds[0] ⊗ kinds[1] ⊗ ... ⊗ kinds[D-1])
#[derive(Debug, Clone)]
pub struct SeparableOperatorTerm {
    pub coeff: f64,
    pub kinds: Vec<Op1DKind>,
}

/// Linear operator expressed as a sum of rank-1 tensor-product terms.
#[derive(Debug, Clone)]
pub struct SeparableOperator {
    pub terms: Vec<SeparableOperatorTerm>,
}

/// Source b(x) = Σ_r Π_d g_d^(r)(x_d).
#[derive(Clone, Default)]
pub struct SeparableSource {
    pub terms: Vec<Vec<CoeffFn>>,
}

impl fmt::Debug for SeparableSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SeparableSource({} terms)", self.terms.len())
    }
}

impl SeparableSource {
    pub fn new() -> Self {
        Self { terms: Vec::new() }
    }

    pub fn push_term(&mut self, factors: Vec<CoeffFn>) {
        self.terms.push(factors);
    }

    pub fn evaluate(&self, point: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| t.iter().zip(point).map(|(g, &x)| g(x)).product::<f64>())
            .sum()
    }
}

/// Galerkin matrix of `kind` with the default quadrature order for that kind.
pub fn assemble_matrix(mesh: &Mesh1D, cfg: &PatchConfig, kind: &Op1DKind) -> Result<BandedMatrix> {
    let g = if kind.is_weighted() {
        cfg.weighted_quad_points()
    } else {
        cfg.default_quad_points()
    };
    assemble_matrix_with_quad(mesh, cfg, kind, g)
}

/// Galerkin matrix with an explicit Gauss order (used by refinement checks).
pub fn assemble_matrix_with_quad(
    mesh: &Mesh1D,
    cfg: &PatchConfig,
    kind: &Op1DKind,
    g: usize,
) -> Result<BandedMatrix> {
    let n = mesh.num_nodes();
    let hb = (2 * cfg.s + 1).min(n - 1);
    let rule = gauss_rule(g)?;
    let mut a = BandedMatrix::new(n, hb);
    for e in 0..mesh.num_elements() {
        let xl = mesh.nodes()[e];
        let xr = mesh.nodes()[e + 1];
        let jac = 0.5 * (xr - xl);
        for (t, wq) in rule.points.iter().zip(&rule.weights) {
            let x = 0.5 * (xl + xr) + jac * t;
            let be = eval_basis(mesh, cfg, x)?;
            let wx = match kind {
                Op1DKind::WeightedMass(w) | Op1DKind::WeightedStiffness(w) => {
                    let v = w(x);
                    if !v.is_finite() {
                        return Err(Error::Assembly {
                            element: e,
                            message: format!("coefficient not finite at x = {x}"),
                        });
                    }
                    v
                }
                _ => 1.0,
            };
            let scale = wq * jac * wx;
            for (li, &i) in be.node_indices.iter().enumerate() {
                for (lj, &j) in be.node_indices.iter().enumerate() {
                    let contrib = match kind {
                        Op1DKind::Mass | Op1DKind::WeightedMass(_) => {
                            be.values[li] * be.values[lj]
                        }
                        Op1DKind::Stiffness | Op1DKind::WeightedStiffness(_) => {
                            be.derivs[li] * be.derivs[lj]
                        }
                        Op1DKind::Convection => be.values[li] * be.derivs[lj],
                    };
                    a.add(i, j, scale * contrib);
                }
            }
        }
    }
    Ok(a)
}

/// Load vector F_k = ∫ Ñ_k(x) g(x) dx.
pub fn assemble_load(mesh: &Mesh1D, cfg: &PatchConfig, g: &CoeffFn) -> Result<Vec<f64>> {
    assemble_load_with_quad(mesh, cfg, g, cfg.weighted_quad_points())
}

pub fn assemble_load_with_quad(
    mesh: &Mesh1D,
    cfg: &PatchConfig,
    g: &CoeffFn,
    gq: usize,
) -> Result<Vec<f64>> {
    let rule = gauss_rule(gq)?;
    let mut f = vec![0.0; mesh.num_nodes()];
    for e in 0..mesh.num_elements() {
        let xl = mesh.nodes()[e];
        let xr = mesh.nodes()[e + 1];
        let jac = 0.5 * (xr - xl);
        for (t, wq) in rule.points.iter().zip(&rule.weights) {
            let x = 0.5 * (xl + xr) + jac * t;
            let gx = g(x);
            if !gx.is_finite() {
                return Err(Error::Assembly {
                    element: e,
                    message: format!("source not finite at x = {x}"),
                });
            }
            let be = eval_basis(mesh, cfg, x)?;
            for (li, &i) in be.node_indices.iter().enumerate() {
                f[i] += wq * jac * gx * be.values[li];
            }
        }
    }
    Ok(f)
}

fn space_dims(dims: &[DimensionSpec]) -> Vec<usize> {
    dims.iter()
        .enumerate()
        .filter(|(_, d)| d.kind == DimKind::Space)
        .map(|(i, _)| i)
        .collect()
}

/// Galerkin form of the Laplacian: Σ_i (−1)·STIFFNESS_i ⊗ MASS elsewhere,
/// over the SPACE dimensions (parametric dimensions ride along with MASS).
pub fn make_poisson_operator(dims: &[DimensionSpec]) -> Result<SeparableOperator> {
    let sd = space_dims(dims);
    if sd.is_empty() {
        return Err(Error::Configuration(
            "poisson operator needs at least one SPACE dimension".into(),
        ));
    }
    if dims.iter().any(|d| d.kind == DimKind::Time) {
        return Err(Error::Configuration(
            "poisson operator does not take a TIME dimension".into(),
        ));
    }
    let mut terms = Vec::new();
    for &i in &sd {
        let kinds = dims
            .iter()
            .enumerate()
            .map(|(d, _)| {
                if d == i {
                    Op1DKind::Stiffness
                } else {
                    Op1DKind::Mass
                }
            })
            .collect();
        terms.push(SeparableOperatorTerm { coeff: -1.0, kinds });
    }
    Ok(SeparableOperator { terms })
}

/// Transient diffusion u̇ − kΔu = b in weak form:
/// CONVECTION_t ⊗ MASS elsewhere, plus for each space dim a
/// WEIGHTED_MASS(k↦k) ⊗ STIFFNESS ⊗ MASS term. The conductivity comes from
/// a PARAM dimension named "k" when present, otherwise it is the fixed
/// `k_fixed` value.
pub fn make_heat_operator(dims: &[DimensionSpec], k_fixed: f64) -> Result<SeparableOperator> {
    let sd = space_dims(dims);
    let td: Vec<usize> = dims
        .iter()
        .enumerate()
        .filter(|(_, d)| d.kind == DimKind::Time)
        .map(|(i, _)| i)
        .collect();
    if td.len() != 1 {
        return Err(Error::Configuration(format!(
            "heat operator needs exactly one TIME dimension, found {}",
            td.len()
        )));
    }
    if sd.is_empty() {
        return Err(Error::Configuration(
            "heat operator needs at least one SPACE dimension".into(),
        ));
    }
    let t = td[0];
    let k_dim = dims
        .iter()
        .position(|d| d.kind == DimKind::Param && d.name == "k");
    if k_dim.is_none() && !(k_fixed.is_finite() && k_fixed > 0.0) {
        return Err(Error::Configuration(format!(
            "fixed conductivity must be positive, got {k_fixed}"
        )));
    }

    let mut terms = Vec::new();
    // time term
    let kinds = dims
        .iter()
        .enumerate()
        .map(|(d, _)| {
            if d == t {
                Op1DKind::Convection
            } else {
                Op1DKind::Mass
            }
        })
        .collect();
    terms.push(SeparableOperatorTerm { coeff: 1.0, kinds });
    // conductivity terms, one per space dimension
    for &i in &sd {
        let kinds = dims
            .iter()
            .enumerate()
            .map(|(d, _)| {
                if d == i {
                    Op1DKind::Stiffness
                } else if Some(d) == k_dim {
                    Op1DKind::WeightedMass(coeff_fn(|k| k))
                } else {
                    Op1DKind::Mass
                }
            })
            .collect();
        terms.push(SeparableOperatorTerm {
            coeff: if k_dim.is_some() { 1.0 } else { k_fixed },
            kinds,
        });
    }
    Ok(SeparableOperator { terms })
}

/// Δu + k²u: Poisson terms plus k²·(MASS ⊗ ... ⊗ MASS).
pub fn make_helmholtz_operator(dims: &[DimensionSpec], k: f64) -> Result<SeparableOperator> {
    let mut op = make_poisson_operator(dims)?;
    op.terms.push(SeparableOperatorTerm {
        coeff: k * k,
        kinds: dims.iter().map(|_| Op1DKind::Mass).collect(),
    });
    Ok(op)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::Kernel;
    use crate::mesh::make_uniform_mesh;
    use approx::assert_abs_diff_eq;

    fn linear_cfg() -> PatchConfig {
        PatchConfig::linear()
    }

    fn dim(name: &str, kind: DimKind) -> DimensionSpec {
        DimensionSpec {
            name: name.into(),
            mesh: make_uniform_mesh(0.0, 1.0, 4).unwrap(),
            patch: linear_cfg(),
            kind,
        }
    }

    #[test]
    fn linear_mass_interior_row() {
        let mesh = make_uniform_mesh(0.0, 1.0, 8).unwrap();
        let h = 0.125;
        let m = assemble_matrix(&mesh, &linear_cfg(), &Op1DKind::Mass).unwrap();
        for i in 2..6 {
            assert_abs_diff_eq!(m.get(i, i - 1), h / 6.0, epsilon = 1e-14);
            assert_abs_diff_eq!(m.get(i, i), 4.0 * h / 6.0, epsilon = 1e-14);
            assert_abs_diff_eq!(m.get(i, i + 1), h / 6.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn linear_stiffness_interior_row() {
        let mesh = make_uniform_mesh(0.0, 1.0, 8).unwrap();
        let h = 0.125;
        let k = assemble_matrix(&mesh, &linear_cfg(), &Op1DKind::Stiffness).unwrap();
        for i in 2..6 {
            assert_abs_diff_eq!(k.get(i, i - 1), -1.0 / h, epsilon = 1e-12);
            assert_abs_diff_eq!(k.get(i, i), 2.0 / h, epsilon = 1e-12);
            assert_abs_diff_eq!(k.get(i, i + 1), -1.0 / h, epsilon = 1e-12);
        }
    }

    #[test]
    fn weighted_mass_with_unit_weight_equals_mass() {
        let mesh = make_uniform_mesh(0.0, 2.0, 7).unwrap();
        let cfg = PatchConfig::new(1, 2.0, 1, Kernel::Lagrange).unwrap();
        let m = assemble_matrix_with_quad(&mesh, &cfg, &Op1DKind::Mass, 4).unwrap();
        let wm =
            assemble_matrix_with_quad(&mesh, &cfg, &Op1DKind::WeightedMass(coeff_fn(|_| 1.0)), 4)
                .unwrap();
        for i in 0..mesh.num_nodes() {
            for j in 0..mesh.num_nodes() {
                assert_eq!(m.get(i, j), wm.get(i, j));
            }
        }
    }

    #[test]
    fn mass_total_equals_domain_length() {
        // row sums of the mass matrix are ∫Ñ_k; totals give the length
        for cfg in [
            linear_cfg(),
            PatchConfig::new(1, 2.0, 2, Kernel::Lagrange).unwrap(),
            PatchConfig::new(2, 2.0, 2, Kernel::InterpMls).unwrap(),
        ] {
            let mesh = make_uniform_mesh(0.0, 3.0, 12).unwrap();
            let m = assemble_matrix(&mesh, &cfg, &Op1DKind::Mass).unwrap();
            let total: f64 = (0..mesh.num_nodes())
                .map(|i| (0..mesh.num_nodes()).map(|j| m.get(i, j)).sum::<f64>())
                .sum();
            assert_abs_diff_eq!(total, 3.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn symmetry_and_stiffness_row_sums() {
        let mesh = make_uniform_mesh(0.0, 1.0, 10).unwrap();
        for cfg in [
            linear_cfg(),
            PatchConfig::new(2, 2.0, 2, Kernel::InterpMls).unwrap(),
        ] {
            for kind in [Op1DKind::Mass, Op1DKind::Stiffness] {
                let a = assemble_matrix(&mesh, &cfg, &kind).unwrap();
                for i in 0..mesh.num_nodes() {
                    for j in 0..mesh.num_nodes() {
                        assert!((a.get(i, j) - a.get(j, i)).abs() < 1e-12);
                    }
                }
            }
            let k = assemble_matrix(&mesh, &cfg, &Op1DKind::Stiffness).unwrap();
            for i in 0..mesh.num_nodes() {
                let rs: f64 = (0..mesh.num_nodes()).map(|j| k.get(i, j)).sum();
                assert!(rs.abs() < 1e-10, "row {i} sum {rs}");
            }
        }
    }

    #[test]
    fn mass_positive_definite_probe() {
        let mesh = make_uniform_mesh(0.0, 1.0, 6).unwrap();
        let m = assemble_matrix(&mesh, &linear_cfg(), &Op1DKind::Mass).unwrap();
        let n = mesh.num_nodes();
        let dense = nalgebra::DMatrix::from_fn(n, n, |i, j| m.get(i, j));
        let eig = dense.symmetric_eigenvalues();
        assert!(eig.iter().all(|&l| l > 0.0));
    }

    #[test]
    fn convection_antisymmetric_up_to_boundary() {
        let mesh = make_uniform_mesh(0.0, 1.0, 10).unwrap();
        let c = assemble_matrix(&mesh, &linear_cfg(), &Op1DKind::Convection).unwrap();
        let n = mesh.num_nodes();
        // C + C^T = boundary terms only: N_i N_j evaluated at the ends
        for i in 1..n - 1 {
            for j in 1..n - 1 {
                assert!((c.get(i, j) + c.get(j, i)).abs() < 1e-13);
            }
        }
        assert_abs_diff_eq!(c.get(0, 0) + c.get(0, 0), -1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(2.0 * c.get(n - 1, n - 1), 1.0, epsilon = 1e-13);
    }

    #[test]
    fn quadrature_refinement_stable() {
        let mesh = make_uniform_mesh(0.0, 1.0, 8).unwrap();
        let cfg = PatchConfig::new(1, 2.0, 2, Kernel::Lagrange).unwrap();
        // the composite basis is degree p+1 per element, so the mass
        // integrand is degree 2p+2 and g = p+2 integrates it exactly
        let a1 = assemble_matrix_with_quad(&mesh, &cfg, &Op1DKind::Mass, 4).unwrap();
        let a2 = assemble_matrix_with_quad(&mesh, &cfg, &Op1DKind::Mass, 8).unwrap();
        let n = mesh.num_nodes();
        let scale = a1.norm_inf();
        for i in 0..n {
            for j in 0..n {
                assert!((a1.get(i, j) - a2.get(i, j)).abs() < 1e-10 * scale);
            }
        }
    }

    #[test]
    fn load_constant_and_zero() {
        let mesh = make_uniform_mesh(0.0, 2.5, 10).unwrap();
        let f = assemble_load(&mesh, &linear_cfg(), &coeff_fn(|_| 1.0)).unwrap();
        assert_abs_diff_eq!(f.iter().sum::<f64>(), 2.5, epsilon = 1e-12);
        let z = assemble_load(&mesh, &linear_cfg(), &coeff_fn(|_| 0.0)).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn load_gaussian_source_integral() {
        // ∫ exp(-2 (x-c)^2 / r0^2) dx = r0 sqrt(pi/2) when the domain
        // captures the bump
        let r0 = 0.05f64;
        let mesh = make_uniform_mesh(0.0, 1.0, 400).unwrap();
        let g = coeff_fn(move |x: f64| (-2.0 * (x - 0.4f64).powi(2) / (r0 * r0)).exp());
        let f = assemble_load(&mesh, &linear_cfg(), &g).unwrap();
        let expect = r0 * (std::f64::consts::PI / 2.0).sqrt();
        assert_abs_diff_eq!(f.iter().sum::<f64>(), expect, epsilon = 1e-8);
    }

    #[test]
    fn load_rejects_non_finite_source() {
        let mesh = make_uniform_mesh(0.0, 1.0, 4).unwrap();
        let g = coeff_fn(|x: f64| 1.0 / (x - 0.5)); // hits a pole region
        let bad = coeff_fn(|_| f64::NAN);
        assert!(assemble_load(&mesh, &linear_cfg(), &bad).is_err());
        // finite at all Gauss points is accepted even if singular between them
        assert!(assemble_load(&mesh, &linear_cfg(), &g).is_ok());
    }

    #[test]
    fn operator_term_counts() {
        let d2 = vec![dim("x", DimKind::Space), dim("y", DimKind::Space)];
        assert_eq!(make_poisson_operator(&d2).unwrap().terms.len(), 2);

        let heat_dims = vec![
            dim("x", DimKind::Space),
            dim("y", DimKind::Space),
            dim("z", DimKind::Space),
            dim("k", DimKind::Param),
            dim("t", DimKind::Time),
        ];
        let heat = make_heat_operator(&heat_dims, 1.0).unwrap();
        assert_eq!(heat.terms.len(), 1 + 3);

        let helm = make_helmholtz_operator(&d2, 1.0).unwrap();
        assert_eq!(helm.terms.len(), 3);
    }

    #[test]
    fn operator_requires_dimension_tags() {
        let no_time = vec![dim("x", DimKind::Space)];
        assert!(make_heat_operator(&no_time, 1.0).is_err());
        let no_space = vec![dim("t", DimKind::Time)];
        assert!(make_poisson_operator(&no_space).is_err());
    }

    #[test]
    fn source_evaluates_as_sum_of_products() {
        let mut src = SeparableSource::new();
        src.push_term(vec![coeff_fn(|x| x), coeff_fn(|y| 2.0 * y)]);
        src.push_term(vec![coeff_fn(|_| 1.0), coeff_fn(|y| y * y)]);
        assert_abs_diff_eq!(src.evaluate(&[3.0, 0.5]), 3.0 + 0.25, epsilon = 1e-15);
    }
}
