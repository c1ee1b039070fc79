use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::basis::{Kernel, PatchConfig};
use crate::error::{Error, Result};
use crate::field::{DimKind, DimensionSpec};
use crate::mesh::{make_graded_mesh, make_uniform_mesh, Mesh1D};

/// Which built-in problem (or custom declaration) a config describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    PoissonCase1,
    PoissonCase2,
    Helmholtz,
    HeatSpacetime,
    HeatSpt,
    PoissonLocalSource,
    OperatorKl,
    Custom,
}

/// One axis declaration: domain plus either a uniform element count or a
/// graded segment list, and the patch hyperparameters.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimConfig {
    pub name: String,
    pub kind: DimKind,
    pub domain: [f64; 2],
    pub elements: Option<usize>,
    /// graded segments [lo, hi, n_elem], contiguous over the domain
    pub graded: Option<Vec<(f64, f64, usize)>>,
    #[serde(default = "default_s")]
    pub s: usize,
    #[serde(default = "default_a")]
    pub a: f64,
    #[serde(default = "default_p")]
    pub p: usize,
    #[serde(default = "default_kernel")]
    pub kernel: Kernel,
}

fn default_s() -> usize {
    1
}
fn default_a() -> f64 {
    20.0
}
fn default_p() -> usize {
    2
}
fn default_kernel() -> Kernel {
    Kernel::InterpMls
}

impl DimConfig {
    pub fn build(&self) -> Result<DimensionSpec> {
        let mesh = self.build_mesh()?;
        let patch = PatchConfig::new(self.s, self.a, self.p, self.kernel)?;
        Ok(DimensionSpec {
            name: self.name.clone(),
            mesh,
            patch,
            kind: self.kind,
        })
    }

    fn build_mesh(&self) -> Result<Mesh1D> {
        match (&self.elements, &self.graded) {
            (Some(n), None) => make_uniform_mesh(self.domain[0], self.domain[1], *n),
            (None, Some(segs)) => {
                let spans: Vec<((f64, f64), usize)> =
                    segs.iter().map(|&(lo, hi, n)| ((lo, hi), n)).collect();
                let mesh = make_graded_mesh(&spans)?;
                let (lo, hi) = mesh.domain();
                if (lo - self.domain[0]).abs() > 1e-12 || (hi - self.domain[1]).abs() > 1e-12 {
                    return Err(Error::Configuration(format!(
                        "dims.{}: graded segments cover [{lo}, {hi}], domain is {:?}",
                        self.name, self.domain
                    )));
                }
                Ok(mesh)
            }
            _ => Err(Error::Configuration(format!(
                "dims.{}: exactly one of `elements` or `graded` is required",
                self.name
            ))),
        }
    }
}

/// Problem constants; unused entries are ignored by problems that do not
/// read them.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamsSection {
    /// Helmholtz mode numbers and wavenumber
    pub a1: f64,
    pub a2: f64,
    pub k: f64,
    /// depth of the indicator source in the 3D parametric heat problem
    pub d0: f64,
    /// KL expansion: mean conductivity, std dev, length scale
    pub k_mu: f64,
    pub sigma: f64,
    pub ell: f64,
    /// SVD separation of coupled source factors
    pub source_rank: usize,
    pub source_samples: usize,
}

impl Default for ParamsSection {
    fn default() -> Self {
        Self {
            a1: 1.0,
            a2: 4.0,
            k: 1.0,
            d0: 0.5,
            k_mu: 5.0,
            sigma: 0.3,
            ell: 0.3,
            source_rank: 24,
            source_samples: 801,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub max_modes: usize,
    pub max_subspace_iters: usize,
    pub iter_tol: f64,
    pub mode_tol: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            max_modes: 5,
            max_subspace_iters: 5,
            iter_tol: 1e-6,
            mode_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerSection {
    /// "boosting" or "all_at_once"
    #[serde(default = "default_scheme")]
    pub scheme: String,
    pub modes: usize,
    pub epochs_max: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_val_frac")]
    pub validation_fraction: f64,
    /// CSV dataset consumed by `septensor train`
    pub dataset: Option<PathBuf>,
}

fn default_scheme() -> String {
    "boosting".into()
}
fn default_batch() -> usize {
    128
}
fn default_lr() -> f64 {
    1e-4
}
fn default_patience() -> usize {
    10
}
fn default_val_frac() -> f64 {
    0.1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InverseSection {
    pub free_dims: Vec<String>,
    /// per free dim: [min, max]
    pub box_bounds: Vec<[f64; 2]>,
    #[serde(default = "default_inv_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_inv_steps")]
    pub max_steps: usize,
    #[serde(default = "default_inv_grad_tol")]
    pub grad_tol: f64,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    /// CSV of full-coordinate rows plus a value column
    pub target: Option<PathBuf>,
    /// saved field container; when absent the problem is solved first
    pub field: Option<PathBuf>,
}

fn default_inv_lr() -> f64 {
    0.1
}
fn default_inv_steps() -> usize {
    500
}
fn default_inv_grad_tol() -> f64 {
    1e-10
}
fn default_restarts() -> usize {
    8
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    pub elements: Vec<usize>,
    /// (s, p) pairs to sweep
    pub sp: Vec<(usize, usize)>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_a")]
    pub a: f64,
    #[serde(default = "default_kernel")]
    pub kernel: Kernel,
}

fn default_repeats() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    Poisson2d,
    Heat2d,
    Heat3d,
    Heat1dVarK,
}

/// Reference-data generation: grids, step counts, and parameter samples for
/// the FD oracles.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    pub kind: OracleKind,
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    /// number of uniformly spaced samples over [1,4] and [100,200]
    #[serde(default = "default_param_samples")]
    pub k_samples: usize,
    #[serde(default = "default_param_samples")]
    pub p_samples: usize,
    /// subsampling stride over grid axes and time steps
    #[serde(default = "default_stride")]
    pub stride: usize,
    /// fixed parameters for single-trajectory outputs (inverse targets)
    pub k_fixed: Option<f64>,
    pub p_fixed: Option<f64>,
    #[serde(default = "default_d0")]
    pub d0: f64,
}

fn default_grid() -> usize {
    33
}
fn default_steps() -> usize {
    50
}
fn default_t_end() -> f64 {
    0.04
}
fn default_param_samples() -> usize {
    5
}
fn default_stride() -> usize {
    1
}
fn default_d0() -> f64 {
    0.5
}

/// Operator/source declarations for `problem = "custom"`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomSection {
    pub operator: Vec<CustomTerm>,
    #[serde(default)]
    pub source: Vec<CustomSourceTerm>,
    /// per-dim override: "both", "left", "right", "initial", "none";
    /// defaults to the kind conventions when absent
    pub dirichlet: Option<Vec<String>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomTerm {
    pub coeff: f64,
    /// per dimension: "mass", "stiffness", or "convection"
    pub kinds: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomSourceTerm {
    pub factors: Vec<FunctionSpec>,
}

/// Closed-form 1D factor usable in declarative source terms.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionSpec {
    Constant {
        value: f64,
    },
    /// scale·sin(freq·x + phase)
    Sin {
        freq: f64,
        #[serde(default = "default_one")]
        scale: f64,
        #[serde(default)]
        phase: f64,
    },
    /// scale·exp(−((x−center)/width)²)
    Gaussian {
        center: f64,
        width: f64,
        #[serde(default = "default_one")]
        scale: f64,
    },
    /// coeffs[0] + coeffs[1]·x + …
    Poly {
        coeffs: Vec<f64>,
    },
}

fn default_one() -> f64 {
    1.0
}

impl FunctionSpec {
    pub fn build(&self) -> crate::assembly::CoeffFn {
        use crate::assembly::coeff_fn;
        match self.clone() {
            FunctionSpec::Constant { value } => coeff_fn(move |_| value),
            FunctionSpec::Sin { freq, scale, phase } => {
                coeff_fn(move |x| scale * (freq * x + phase).sin())
            }
            FunctionSpec::Gaussian {
                center,
                width,
                scale,
            } => coeff_fn(move |x| {
                let u = (x - center) / width;
                scale * (-u * u).exp()
            }),
            FunctionSpec::Poly { coeffs } => {
                coeff_fn(move |x| coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c))
            }
        }
    }
}

/// Top-level declarative run description.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub problem: ProblemKind,
    #[serde(default)]
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub dims: Vec<DimConfig>,
    #[serde(default)]
    pub params: ParamsSection,
    #[serde(default)]
    pub solver: SolverSection,
    pub trainer: Option<TrainerSection>,
    pub inverse: Option<InverseSection>,
    pub study: Option<StudySection>,
    pub oracle: Option<OracleSection>,
    pub custom: Option<CustomSection>,
}

impl ProblemConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Configuration(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Configuration(format!("config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn build_dims(&self) -> Result<Vec<DimensionSpec>> {
        if self.dims.is_empty() {
            return Err(Error::Configuration(
                "config declares no dimensions".into(),
            ));
        }
        self.dims.iter().map(|d| d.build()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
problem = "poisson_case2"
seed = 7

[[dims]]
name = "x1"
kind = "space"
domain = [0.0, 1.0]
elements = 32

[[dims]]
name = "x2"
kind = "space"
domain = [0.0, 1.0]
elements = 32
s = 2
p = 3

[solver]
max_modes = 1
"#;

    #[test]
    fn parses_minimal_config() {
        let cfg = ProblemConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.problem, ProblemKind::PoissonCase2);
        assert_eq!(cfg.seed, 7);
        let dims = cfg.build_dims().unwrap();
        assert_eq!(dims.len(), 2);
        assert_eq!(dims[0].patch.s, 1);
        assert_eq!(dims[1].patch.p, 3);
        assert_eq!(cfg.solver.max_modes, 1);
    }

    #[test]
    fn rejects_unknown_keys_with_path() {
        let bad = format!("{MINIMAL}\n[solver2]\nx = 1\n");
        let err = ProblemConfig::parse(&bad).unwrap_err();
        assert!(matches!(err, Error::Configuration(_)));
        let bad2 = MINIMAL.replace("max_modes", "max_nodes");
        let err2 = ProblemConfig::parse(&bad2).unwrap_err();
        assert!(err2.to_string().contains("max_nodes"), "{err2}");
    }

    #[test]
    fn graded_dim_builds_and_validates_cover() {
        let text = r#"
problem = "poisson_local_source"

[[dims]]
name = "x"
kind = "space"
domain = [0.0, 100.0]
graded = [[0.0, 30.0, 3], [30.0, 70.0, 20], [70.0, 100.0, 6]]

[[dims]]
name = "y"
kind = "space"
domain = [0.0, 100.0]
elements = 20
"#;
        let cfg = ProblemConfig::parse(text).unwrap();
        let dims = cfg.build_dims().unwrap();
        assert_eq!(dims[0].mesh.num_elements(), 29);

        let bad = text.replace("domain = [0.0, 100.0]\ngraded", "domain = [0.0, 90.0]\ngraded");
        let cfg = ProblemConfig::parse(&bad).unwrap();
        assert!(cfg.build_dims().is_err());
    }

    #[test]
    fn dim_requires_exactly_one_mesh_spec() {
        let text = r#"
problem = "poisson_case1"

[[dims]]
name = "x"
kind = "space"
domain = [0.0, 1.0]
"#;
        let cfg = ProblemConfig::parse(text).unwrap();
        assert!(cfg.build_dims().is_err());
    }

    #[test]
    fn function_specs_evaluate() {
        let f = FunctionSpec::Poly {
            coeffs: vec![1.0, 2.0, 3.0],
        }
        .build();
        assert!((f(2.0) - 17.0).abs() < 1e-12);
        let g = FunctionSpec::Gaussian {
            center: 1.0,
            width: 2.0,
            scale: 4.0,
        }
        .build();
        assert!((g(1.0) - 4.0).abs() < 1e-12);
        let s = FunctionSpec::Sin {
            freq: 2.0,
            scale: 3.0,
            phase: 0.5,
        }
        .build();
        assert!((s(0.25) - 3.0 * 1.0f64.sin()).abs() < 1e-12);
    }
}
