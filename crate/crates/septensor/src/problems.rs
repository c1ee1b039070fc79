use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::assembly::{
    coeff_fn, make_heat_operator, make_helmholtz_operator, make_poisson_operator, CoeffFn,
    Op1DKind, SeparableOperator, SeparableOperatorTerm, SeparableSource,
};
use crate::basis::eval_basis;
use crate::error::{Error, Result};
use crate::field::{DimKind, DimensionSpec};
use crate::oracle::{kl_build, KLExpansion, SOURCE_R0};
use crate::solver::{make_lift_for_separable_boundary, DirichletSpec};

pub type ExactFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Everything needed to run the direct solver on one problem instance.
pub struct ProblemSetup {
    pub dims: Vec<DimensionSpec>,
    pub op: SeparableOperator,
    pub src: SeparableSource,
    pub bc: DirichletSpec,
    pub exact: Option<ExactFn>,
}

fn require_all_space(dims: &[DimensionSpec]) -> Result<()> {
    if dims.is_empty() || dims.iter().any(|d| d.kind != DimKind::Space) {
        return Err(Error::Configuration(
            "problem takes SPACE dimensions only".into(),
        ));
    }
    Ok(())
}

fn one() -> CoeffFn {
    coeff_fn(|_| 1.0)
}

/// Δu = f with u = Σ_d sin(πx_d/2); nonzero boundary handled by a lift.
pub fn poisson_case1(dims: Vec<DimensionSpec>) -> Result<ProblemSetup> {
    require_all_space(&dims)?;
    let ndim = dims.len();
    let op = make_poisson_operator(&dims)?;
    let mut src = SeparableSource::new();
    let mut lift_terms: Vec<Vec<CoeffFn>> = Vec::new();
    for d in 0..ndim {
        let mut factors: Vec<CoeffFn> = Vec::with_capacity(ndim);
        let mut lift: Vec<CoeffFn> = Vec::with_capacity(ndim);
        for dd in 0..ndim {
            if dd == d {
                factors.push(coeff_fn(|x| -(PI * PI / 4.0) * (PI * x / 2.0).sin()));
                lift.push(coeff_fn(|x| (PI * x / 2.0).sin()));
            } else {
                factors.push(one());
                lift.push(one());
            }
        }
        src.push_term(factors);
        lift_terms.push(lift);
    }
    let lift = make_lift_for_separable_boundary(&dims, &lift_terms)?;
    let bc = DirichletSpec::for_dims(&dims).with_lift(lift);
    let exact: ExactFn = Arc::new(|p: &[f64]| p.iter().map(|&x| (PI * x / 2.0).sin()).sum());
    Ok(ProblemSetup {
        dims,
        op,
        src,
        bc,
        exact: Some(exact),
    })
}

/// Δu = f with the rank-1 solution u = Π_d sin(πx_d); homogeneous Dirichlet
/// on integer-length boxes.
pub fn poisson_case2(dims: Vec<DimensionSpec>) -> Result<ProblemSetup> {
    require_all_space(&dims)?;
    let ndim = dims.len();
    let op = make_poisson_operator(&dims)?;
    let mut src = SeparableSource::new();
    let c = -(ndim as f64) * PI * PI;
    let factors: Vec<CoeffFn> = (0..ndim)
        .map(|d| {
            if d == 0 {
                coeff_fn(move |x| c * (PI * x).sin())
            } else {
                coeff_fn(|x| (PI * x).sin())
            }
        })
        .collect();
    src.push_term(factors);
    let bc = DirichletSpec::for_dims(&dims);
    let exact: ExactFn = Arc::new(|p: &[f64]| p.iter().map(|&x| (PI * x).sin()).product());
    Ok(ProblemSetup {
        dims,
        op,
        src,
        bc,
        exact: Some(exact),
    })
}

/// Δu + k²u = q with u = sin(a₁πx)sin(a₂πy) on [−1,1]².
pub fn helmholtz(dims: Vec<DimensionSpec>, a1: f64, a2: f64, k: f64) -> Result<ProblemSetup> {
    require_all_space(&dims)?;
    if dims.len() != 2 {
        return Err(Error::Configuration(format!(
            "helmholtz is a 2D problem, got {} dimensions",
            dims.len()
        )));
    }
    let op = make_helmholtz_operator(&dims, k)?;
    let c = k * k - (a1 * PI).powi(2) - (a2 * PI).powi(2);
    let mut src = SeparableSource::new();
    src.push_term(vec![
        coeff_fn(move |x| c * (a1 * PI * x).sin()),
        coeff_fn(move |y| (a2 * PI * y).sin()),
    ]);
    let bc = DirichletSpec::for_dims(&dims);
    let exact: ExactFn = Arc::new(move |p: &[f64]| (a1 * PI * p[0]).sin() * (a2 * PI * p[1]).sin());
    Ok(ProblemSetup {
        dims,
        op,
        src,
        bc,
        exact: Some(exact),
    })
}

// the two Gaussian bumps of the local-source interpretability example
const LOCAL_CENTERS: [(f64, f64); 2] = [(20.0, 25.0), (60.0, 75.0)];
const LOCAL_AMP: f64 = 10.0;
const LOCAL_VAR: f64 = 25.0;

fn local_bump(c: f64) -> CoeffFn {
    coeff_fn(move |x| (-(x - c) * (x - c) / LOCAL_VAR).exp())
}

/// second derivative of exp(−(x−c)²/25)
fn local_bump_dd(c: f64) -> CoeffFn {
    coeff_fn(move |x| {
        let d = x - c;
        (4.0 * d * d / (LOCAL_VAR * LOCAL_VAR) - 2.0 / LOCAL_VAR) * (-d * d / LOCAL_VAR).exp()
    })
}

/// Δu = f on [0,100]² with u a pair of localized Gaussian bumps; the source
/// is derived analytically from the exact solution and the boundary data is
/// carried by a two-mode lift.
pub fn poisson_local_source(dims: Vec<DimensionSpec>) -> Result<ProblemSetup> {
    require_all_space(&dims)?;
    if dims.len() != 2 {
        return Err(Error::Configuration(format!(
            "local-source problem is 2D, got {} dimensions",
            dims.len()
        )));
    }
    let op = make_poisson_operator(&dims)?;
    let mut src = SeparableSource::new();
    let mut lift_terms: Vec<Vec<CoeffFn>> = Vec::new();
    for &(cx, cy) in &LOCAL_CENTERS {
        let amp = coeff_fn(move |x| LOCAL_AMP * (-(x - cx) * (x - cx) / LOCAL_VAR).exp());
        let amp_dd = coeff_fn(move |x| {
            let d = x - cx;
            LOCAL_AMP
                * (4.0 * d * d / (LOCAL_VAR * LOCAL_VAR) - 2.0 / LOCAL_VAR)
                * (-d * d / LOCAL_VAR).exp()
        });
        src.push_term(vec![amp_dd, local_bump(cy)]);
        src.push_term(vec![amp.clone(), local_bump_dd(cy)]);
        lift_terms.push(vec![amp, local_bump(cy)]);
    }
    let lift = make_lift_for_separable_boundary(&dims, &lift_terms)?;
    let bc = DirichletSpec::for_dims(&dims).with_lift(lift);
    let exact: ExactFn = Arc::new(|p: &[f64]| {
        LOCAL_CENTERS
            .iter()
            .map(|&(cx, cy)| {
                LOCAL_AMP
                    * (-(p[0] - cx) * (p[0] - cx) / LOCAL_VAR).exp()
                    * (-(p[1] - cy) * (p[1] - cy) / LOCAL_VAR).exp()
            })
            .sum()
    });
    Ok(ProblemSetup {
        dims,
        op,
        src,
        bc,
        exact: Some(exact),
    })
}

/// exact moving-source solution u = (1 − e^{−15t})·e^{−y²−(x−100t−5)²}
pub fn moving_source_exact(x: f64, y: f64, t: f64) -> f64 {
    let w = 100.0 * t - x - 5.0;
    (1.0 - (-15.0 * t).exp()) * (-y * y - w * w).exp()
}

/// u̇ − Δu = b on [−10,10]³ × (0, t_end] with the moving heat source whose
/// exact solution is `moving_source_exact` (constant in z, natural BC there).
/// The (x,t)-coupled source factors are split into `rank` separable terms by
/// SVD sampling on an `n_samp`² grid.
pub fn heat_spacetime(
    dims: Vec<DimensionSpec>,
    rank: usize,
    n_samp: usize,
) -> Result<ProblemSetup> {
    let names: Vec<&str> = dims.iter().map(|d| d.name.as_str()).collect();
    if names != ["x", "y", "z", "t"] {
        return Err(Error::Configuration(format!(
            "moving-source problem needs dimensions [x, y, z, t], got {names:?}"
        )));
    }
    if dims[3].kind != DimKind::Time {
        return Err(Error::Configuration("dimension t must be TIME".into()));
    }
    let op = make_heat_operator(&dims, 1.0)?;

    // b = G1(y)·F1(x,t) + G2(y)·F2(x,t), derived from the exact solution:
    //   G1 = (1−2y²)e^{−y²},                       F1 = 2A e^{−w²}
    //   G2 = e^{−y²},   F2 = (2A(1−2w²) − 200Aw + 15e^{−15t}) e^{−w²}
    // with A = 1−e^{−15t}, w = 100t−x−5.
    let f1 = |x: f64, t: f64| {
        let w = 100.0 * t - x - 5.0;
        2.0 * (1.0 - (-15.0 * t).exp()) * (-w * w).exp()
    };
    let f2 = |x: f64, t: f64| {
        let w = 100.0 * t - x - 5.0;
        let a = 1.0 - (-15.0 * t).exp();
        (2.0 * a * (1.0 - 2.0 * w * w) - 200.0 * a * w + 15.0 * (-15.0 * t).exp())
            * (-w * w).exp()
    };
    let xr = dims[0].mesh.domain();
    let tr = dims[3].mesh.domain();
    let mut src = SeparableSource::new();
    for (fx, ft) in separate_bivariate(&f1, xr, tr, n_samp, rank, 1e-10)? {
        src.push_term(vec![
            fx,
            coeff_fn(|y| (1.0 - 2.0 * y * y) * (-y * y).exp()),
            one(),
            ft,
        ]);
    }
    for (fx, ft) in separate_bivariate(&f2, xr, tr, n_samp, rank, 1e-10)? {
        src.push_term(vec![fx, coeff_fn(|y| (-y * y).exp()), one(), ft]);
    }

    let mut bc = DirichletSpec::for_dims(&dims);
    // the solution is constant in z: natural boundary there
    bc.constrained[2].clear();
    let exact: ExactFn = Arc::new(|p: &[f64]| moving_source_exact(p[0], p[1], p[3]));
    Ok(ProblemSetup {
        dims,
        op,
        src,
        bc,
        exact: Some(exact),
    })
}

// fixed 4×4 grid of Gaussian heat-source centers
fn spt_centers() -> Vec<(f64, f64)> {
    crate::oracle::source_centers_4x4()
}

/// Parametric heat problem u̇ − kΔu = b(x, P) over a space–parameter–time
/// box: space dims, PARAM dims "k" (conductivity) and "P" (source power), one
/// TIME dim. With a "z" dimension the source carries the depth indicator
/// 𝟙_{z ≥ d0}; the z-mesh must place a node at d0.
pub fn heat_spt(dims: Vec<DimensionSpec>, d0: f64) -> Result<ProblemSetup> {
    let find = |name: &str| dims.iter().position(|d| d.name == name);
    let (xi, yi) = match (find("x"), find("y")) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::Configuration(
                "parametric heat problem needs x and y dimensions".into(),
            ))
        }
    };
    let zi = find("z");
    let pi_ = find("P").ok_or_else(|| {
        Error::Configuration("parametric heat problem needs a PARAM dimension P".into())
    })?;
    if dims[pi_].kind != DimKind::Param {
        return Err(Error::Configuration("dimension P must be PARAM".into()));
    }
    if let Some(z) = zi {
        let has_node = dims[z]
            .mesh
            .nodes()
            .iter()
            .any(|&n| (n - d0).abs() < 1e-9);
        if !has_node {
            return Err(Error::Configuration(format!(
                "z mesh needs a node at the source depth d0 = {d0}"
            )));
        }
    }
    let op = make_heat_operator(&dims, 1.0)?;
    let r0 = SOURCE_R0;
    let mut src = SeparableSource::new();
    for (cx, cy) in spt_centers() {
        let factors: Vec<CoeffFn> = dims
            .iter()
            .enumerate()
            .map(|(d, _)| {
                if d == xi {
                    coeff_fn(move |x| (-2.0 * (x - cx) * (x - cx) / (r0 * r0)).exp())
                } else if d == yi {
                    coeff_fn(move |y| (-2.0 * (y - cy) * (y - cy) / (r0 * r0)).exp())
                } else if Some(d) == zi {
                    coeff_fn(move |z| if z >= d0 - 1e-12 { 1.0 } else { 0.0 })
                } else if d == pi_ {
                    coeff_fn(|p| p)
                } else {
                    one()
                }
            })
            .collect();
        src.push_term(factors);
    }
    let bc = DirichletSpec::for_dims(&dims);
    Ok(ProblemSetup {
        dims,
        op,
        src,
        bc,
        exact: None,
    })
}

/// Variable-conductivity heat operator problem u̇ − ∂ₓ(k(x)uₓ) = f(x) with
/// k(x, ζ) given by a Karhunen–Loève expansion over the x-grid; one PARAM
/// dimension per retained eigenmode.
pub fn operator_kl(
    dims: Vec<DimensionSpec>,
    k_mu: f64,
    sigma: f64,
    ell: f64,
    f: CoeffFn,
) -> Result<(ProblemSetup, KLExpansion)> {
    let xi = dims
        .iter()
        .position(|d| d.kind == DimKind::Space)
        .ok_or_else(|| Error::Configuration("operator problem needs a SPACE dimension".into()))?;
    if dims.iter().filter(|d| d.kind == DimKind::Space).count() != 1 {
        return Err(Error::Configuration(
            "operator problem is 1D in space".into(),
        ));
    }
    let ti = dims
        .iter()
        .position(|d| d.kind == DimKind::Time)
        .ok_or_else(|| Error::Configuration("operator problem needs a TIME dimension".into()))?;
    let zeta: Vec<usize> = dims
        .iter()
        .enumerate()
        .filter(|(_, d)| d.kind == DimKind::Param)
        .map(|(i, _)| i)
        .collect();
    if zeta.is_empty() {
        return Err(Error::Configuration(
            "operator problem needs PARAM dimensions for the KL variables".into(),
        ));
    }
    let n_e = zeta.len();
    let kl = kl_build(k_mu, sigma, ell, dims[xi].mesh.nodes(), n_e)?;

    let mass_row = |except: usize| -> Vec<Op1DKind> {
        dims.iter()
            .enumerate()
            .map(|(d, _)| {
                if d == except {
                    Op1DKind::Convection
                } else {
                    Op1DKind::Mass
                }
            })
            .collect()
    };
    let mut terms = Vec::new();
    terms.push(SeparableOperatorTerm {
        coeff: 1.0,
        kinds: mass_row(ti),
    });
    // mean conductivity
    let kinds = dims
        .iter()
        .enumerate()
        .map(|(d, _)| {
            if d == xi {
                Op1DKind::Stiffness
            } else {
                Op1DKind::Mass
            }
        })
        .collect();
    terms.push(SeparableOperatorTerm {
        coeff: k_mu,
        kinds,
    });
    // one fluctuation term per retained eigenmode: √λ_J φ_J interpolated in x
    // times the linear weight ζ_J in its own dimension
    for (j, &zj) in zeta.iter().enumerate() {
        let nodal = kl.mode_nodal(j);
        let mesh = dims[xi].mesh.clone();
        let patch = dims[xi].patch.clone();
        let w: CoeffFn = coeff_fn(move |x| {
            eval_basis(&mesh, &patch, x)
                .map(|be| be.dot(&nodal))
                .unwrap_or(f64::NAN)
        });
        let kinds = dims
            .iter()
            .enumerate()
            .map(|(d, _)| {
                if d == xi {
                    Op1DKind::WeightedStiffness(w.clone())
                } else if d == zj {
                    Op1DKind::WeightedMass(coeff_fn(|z| z))
                } else {
                    Op1DKind::Mass
                }
            })
            .collect();
        terms.push(SeparableOperatorTerm { coeff: 1.0, kinds });
    }
    let op = SeparableOperator { terms };

    let mut src = SeparableSource::new();
    let factors: Vec<CoeffFn> = dims
        .iter()
        .enumerate()
        .map(|(d, _)| if d == xi { f.clone() } else { one() })
        .collect();
    src.push_term(factors);
    let bc = DirichletSpec::for_dims(&dims);
    Ok((
        ProblemSetup {
            dims,
            op,
            src,
            bc,
            exact: None,
        },
        kl,
    ))
}

/// Piecewise-linear interpolant over a uniform sample grid, used to turn SVD
/// factor columns back into evaluable functions.
fn linear_interp(lo: f64, hi: f64, vals: Vec<f64>) -> CoeffFn {
    let n = vals.len();
    coeff_fn(move |x| {
        let t = ((x - lo) / (hi - lo) * (n - 1) as f64).clamp(0.0, (n - 1) as f64);
        let i = (t as usize).min(n - 2);
        let frac = t - i as f64;
        vals[i] * (1.0 - frac) + vals[i + 1] * frac
    })
}

/// Split a bivariate function into ≤ `rank` separable products f ≈ Σ_r
/// g_r(x)·h_r(t) by sampling on an `n_samp`² grid and truncating its SVD;
/// singular values below `tol`·σ₁ are dropped.
pub fn separate_bivariate(
    f: &dyn Fn(f64, f64) -> f64,
    (x_lo, x_hi): (f64, f64),
    (t_lo, t_hi): (f64, f64),
    n_samp: usize,
    rank: usize,
    tol: f64,
) -> Result<Vec<(CoeffFn, CoeffFn)>> {
    if n_samp < 2 || rank == 0 {
        return Err(Error::InvalidArgument(
            "separation needs n_samp ≥ 2 and rank ≥ 1".into(),
        ));
    }
    let xs: Vec<f64> = (0..n_samp)
        .map(|i| x_lo + (x_hi - x_lo) * i as f64 / (n_samp - 1) as f64)
        .collect();
    let ts: Vec<f64> = (0..n_samp)
        .map(|i| t_lo + (t_hi - t_lo) * i as f64 / (n_samp - 1) as f64)
        .collect();
    let m = DMatrix::from_fn(n_samp, n_samp, |i, j| f(xs[i], ts[j]));
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "function not finite on the sample grid".into(),
        ));
    }
    let svd = m.svd(true, true);
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let vt = svd.v_t.as_ref().expect("right singular vectors requested");
    let s0 = svd.singular_values[0];
    let mut parts = Vec::new();
    if s0 == 0.0 {
        return Ok(parts);
    }
    for r in 0..rank.min(svd.singular_values.len()) {
        let s = svd.singular_values[r];
        if s < tol * s0 {
            break;
        }
        let sq = s.sqrt();
        let gx: Vec<f64> = (0..n_samp).map(|i| sq * u[(i, r)]).collect();
        let ht: Vec<f64> = (0..n_samp).map(|j| sq * vt[(r, j)]).collect();
        parts.push((
            linear_interp(x_lo, x_hi, gx),
            linear_interp(t_lo, t_hi, ht),
        ));
    }
    Ok(parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{Kernel, PatchConfig};
    use crate::mesh::make_uniform_mesh;
    use crate::oracle::sample_rel_l2;
    use crate::solver::{solve, SolverConfig};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn space_dims(names: &[&str], lo: f64, hi: f64, n: usize, patch: PatchConfig) -> Vec<DimensionSpec> {
        names
            .iter()
            .map(|&name| DimensionSpec {
                name: name.into(),
                mesh: make_uniform_mesh(lo, hi, n).unwrap(),
                patch: patch.clone(),
                kind: DimKind::Space,
            })
            .collect()
    }

    fn quad_patch() -> PatchConfig {
        PatchConfig::new(1, 20.0, 2, Kernel::InterpMls).unwrap()
    }

    #[test]
    fn separation_recovers_separable_function() {
        let f = |x: f64, t: f64| (x).sin() * (t).exp();
        let parts = separate_bivariate(&f, (0.0, 3.0), (0.0, 1.0), 101, 5, 1e-10).unwrap();
        assert_eq!(parts.len(), 1, "separable function should be rank 1");
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let x = rng.gen_range(0.0..3.0);
            let t = rng.gen_range(0.0..1.0);
            let approx: f64 = parts.iter().map(|(g, h)| g(x) * h(t)).sum();
            assert!((approx - f(x, t)).abs() < 1e-3, "at ({x}, {t})");
        }
    }

    #[test]
    fn separation_approximates_moving_source_factor() {
        // the coupled factor of the moving-source problem
        let f = |x: f64, t: f64| {
            let w = 100.0 * t - x - 5.0;
            2.0 * (1.0 - (-15.0 * t).exp()) * (-w * w).exp()
        };
        let parts = separate_bivariate(&f, (-10.0, 10.0), (0.0, 0.02), 401, 12, 1e-8).unwrap();
        assert!(parts.len() > 1);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst = 0.0f64;
        for _ in 0..200 {
            let x = rng.gen_range(-10.0..10.0);
            let t = rng.gen_range(0.0..0.02);
            let approx: f64 = parts.iter().map(|(g, h)| g(x) * h(t)).sum();
            worst = worst.max((approx - f(x, t)).abs());
        }
        assert!(worst < 2e-2, "worst pointwise gap {worst}");
    }

    #[test]
    fn case1_solves_to_small_error() {
        let setup = poisson_case1(space_dims(&["x1", "x2"], 0.0, 1.0, 16, quad_patch())).unwrap();
        let (field, _) = solve(
            &setup.op,
            &setup.src,
            &setup.dims,
            &setup.bc,
            &SolverConfig::new(4),
        )
        .unwrap();
        let exact = setup.exact.unwrap();
        let err = sample_rel_l2(&field, |p| exact(p), 50).unwrap();
        assert!(err < 1e-3, "relative L2 {err}");
    }

    #[test]
    fn case2_solves_rank_one() {
        let setup = poisson_case2(space_dims(&["x1", "x2"], 0.0, 1.0, 16, quad_patch())).unwrap();
        let (field, report) = solve(
            &setup.op,
            &setup.src,
            &setup.dims,
            &setup.bc,
            &SolverConfig::new(1),
        )
        .unwrap();
        assert_eq!(report.modes_used, 1);
        let exact = setup.exact.unwrap();
        let err = sample_rel_l2(&field, |p| exact(p), 50).unwrap();
        assert!(err < 1e-3, "relative L2 {err}");
    }

    #[test]
    fn helmholtz_solves_to_moderate_error() {
        let patch = PatchConfig::new(1, 20.0, 1, Kernel::InterpMls).unwrap();
        let setup =
            helmholtz(space_dims(&["x", "y"], -1.0, 1.0, 64, patch), 1.0, 4.0, 1.0).unwrap();
        let (field, _) = solve(
            &setup.op,
            &setup.src,
            &setup.dims,
            &setup.bc,
            &SolverConfig::new(2),
        )
        .unwrap();
        let exact = setup.exact.unwrap();
        let err = sample_rel_l2(&field, |p| exact(p), 50).unwrap();
        assert!(err < 5e-2, "relative L2 {err}");
    }

    #[test]
    fn local_source_with_graded_mesh() {
        use crate::mesh::make_graded_mesh;
        let mesh_x = make_graded_mesh(&[
            ((0.0, 10.0), 2),
            ((10.0, 30.0), 16),
            ((30.0, 50.0), 8),
            ((50.0, 70.0), 16),
            ((70.0, 100.0), 4),
        ])
        .unwrap();
        let mesh_y = make_graded_mesh(&[
            ((0.0, 15.0), 3),
            ((15.0, 35.0), 16),
            ((35.0, 65.0), 8),
            ((65.0, 85.0), 16),
            ((85.0, 100.0), 3),
        ])
        .unwrap();
        let patch = PatchConfig::new(2, 20.0, 3, Kernel::InterpMls).unwrap();
        let dims = vec![
            DimensionSpec {
                name: "x".into(),
                mesh: mesh_x,
                patch: patch.clone(),
                kind: DimKind::Space,
            },
            DimensionSpec {
                name: "y".into(),
                mesh: mesh_y,
                patch,
                kind: DimKind::Space,
            },
        ];
        let setup = poisson_local_source(dims).unwrap();
        let (field, _) = solve(
            &setup.op,
            &setup.src,
            &setup.dims,
            &setup.bc,
            &SolverConfig::new(4),
        )
        .unwrap();
        let exact = setup.exact.unwrap();
        let err = sample_rel_l2(&field, |p| exact(p), 50).unwrap();
        assert!(err < 1e-2, "relative L2 {err}");
    }

    #[test]
    fn moving_source_matches_pde_residual() {
        // finite-difference check that the separated source equals
        // u̇ − Δu for the exact solution
        let dims = vec![
            DimensionSpec {
                name: "x".into(),
                mesh: make_uniform_mesh(-10.0, 10.0, 8).unwrap(),
                patch: quad_patch(),
                kind: DimKind::Space,
            },
            DimensionSpec {
                name: "y".into(),
                mesh: make_uniform_mesh(-10.0, 10.0, 8).unwrap(),
                patch: quad_patch(),
                kind: DimKind::Space,
            },
            DimensionSpec {
                name: "z".into(),
                mesh: make_uniform_mesh(-10.0, 10.0, 8).unwrap(),
                patch: quad_patch(),
                kind: DimKind::Space,
            },
            DimensionSpec {
                name: "t".into(),
                mesh: make_uniform_mesh(0.0, 0.02, 8).unwrap(),
                patch: quad_patch(),
                kind: DimKind::Time,
            },
        ];
        let setup = heat_spacetime(dims, 24, 801).unwrap();
        let h = 1e-5;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..30 {
            let x = rng.gen_range(-9.0..-1.0);
            let y = rng.gen_range(-2.0..2.0);
            let t = rng.gen_range(0.002..0.018);
            let u = |x: f64, y: f64, t: f64| moving_source_exact(x, y, t);
            let ut = (u(x, y, t + h) - u(x, y, t - h)) / (2.0 * h);
            let uxx = (u(x + h, y, t) - 2.0 * u(x, y, t) + u(x - h, y, t)) / (h * h);
            let uyy = (u(x, y + h, t) - 2.0 * u(x, y, t) + u(x, y - h, t)) / (h * h);
            let b = setup.src.evaluate(&[x, y, 0.0, t]);
            let resid = (ut - uxx - uyy - b).abs();
            assert!(resid < 5e-2, "residual {resid} at ({x}, {y}, {t})");
        }
    }

    #[test]
    fn spt_source_matches_oracle_source() {
        let patch = quad_patch();
        let mk = |name: &str, lo: f64, hi: f64, kind: DimKind| DimensionSpec {
            name: name.into(),
            mesh: make_uniform_mesh(lo, hi, 8).unwrap(),
            patch: patch.clone(),
            kind,
        };
        let dims = vec![
            mk("x", 0.0, 1.0, DimKind::Space),
            mk("y", 0.0, 1.0, DimKind::Space),
            mk("k", 1.0, 4.0, DimKind::Param),
            mk("P", 100.0, 200.0, DimKind::Param),
            mk("t", 0.0, 0.04, DimKind::Time),
        ];
        let setup = heat_spt(dims, 0.5).unwrap();
        assert_eq!(setup.src.terms.len(), 16);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let x = rng.gen_range(0.0..1.0);
            let y = rng.gen_range(0.0..1.0);
            let p = rng.gen_range(100.0..200.0);
            let b = setup.src.evaluate(&[x, y, 2.0, p, 0.01]);
            let want = crate::oracle::heat_source_2d(x, y, p);
            assert!((b - want).abs() < 1e-12 * want.abs().max(1.0));
        }
    }

    #[test]
    fn spt_indicator_requires_mesh_node() {
        let patch = quad_patch();
        let mk = |name: &str, lo: f64, hi: f64, n: usize, kind: DimKind| DimensionSpec {
            name: name.into(),
            mesh: make_uniform_mesh(lo, hi, n).unwrap(),
            patch: patch.clone(),
            kind,
        };
        let dims = vec![
            mk("x", 0.0, 1.0, 8, DimKind::Space),
            mk("y", 0.0, 1.0, 8, DimKind::Space),
            mk("z", 0.0, 1.0, 7, DimKind::Space), // no node at 0.5
            mk("k", 1.0, 4.0, 8, DimKind::Param),
            mk("P", 100.0, 200.0, 8, DimKind::Param),
            mk("t", 0.0, 0.04, 8, DimKind::Time),
        ];
        assert!(matches!(
            heat_spt(dims, 0.5),
            Err(Error::Configuration(_))
        ));
    }

    #[test]
    fn operator_kl_shape_and_mean() {
        let patch = quad_patch();
        let mut dims = vec![DimensionSpec {
            name: "x".into(),
            mesh: make_uniform_mesh(0.0, 1.0, 16).unwrap(),
            patch: patch.clone(),
            kind: DimKind::Space,
        }];
        for j in 0..3 {
            dims.push(DimensionSpec {
                name: format!("zeta{}", j + 1),
                mesh: make_uniform_mesh(-5.0, 5.0, 8).unwrap(),
                patch: patch.clone(),
                kind: DimKind::Param,
            });
        }
        dims.push(DimensionSpec {
            name: "t".into(),
            mesh: make_uniform_mesh(0.0, 0.01, 8).unwrap(),
            patch,
            kind: DimKind::Time,
        });
        let (setup, kl) =
            operator_kl(dims, 5.0, 0.3, 0.3, coeff_fn(|x| (PI * x).sin())).unwrap();
        // time term + mean-k term + one fluctuation term per eigenmode
        assert_eq!(setup.op.terms.len(), 2 + 3);
        let k0 = kl.nodal_k(&[0.0, 0.0, 0.0]).unwrap();
        for v in k0 {
            assert!((v - 5.0).abs() < 1e-12);
        }
    }
}
