//! 1D C-HiDeNN shape functions: linear finite element hats composed with
//! convolution patch functions. The patch functions are built per-node over a
//! neighborhood of `s` node layers and reproduce polynomials up to order `p`,
//! which gives the composite basis the Kronecker delta and partition-of-unity
//! properties while keeping support local (at most `2(s+1)` nodes per point).

use crate::error::{Error, Result};
use crate::mesh::Mesh1D;
use serde::{Deserialize, Serialize};

/// Patch-function construction kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// Lagrange cardinal polynomials over a window of `p+1` patch nodes.
    /// The dilation parameter is unused.
    Lagrange,
    /// Constrained weighted least squares with singular (interpolating)
    /// Gaussian weights dilated by `a`.
    InterpMls,
}

/// Hyperparameters governing C-HiDeNN basis construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchConfig {
    /// Neighbor layers joined to each node's patch. `s = 0` reduces to
    /// standard linear FE hat functions regardless of the other fields.
    pub s: usize,
    /// Dilation of the Gaussian window (InterpMls only).
    pub a: f64,
    /// Reproducing polynomial order.
    pub p: usize,
    pub kernel: Kernel,
}

impl PatchConfig {
    pub fn new(s: usize, a: f64, p: usize, kernel: Kernel) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "dilation a must be positive, got {a}"
            )));
        }
        Ok(Self { s, a, p, kernel })
    }

    pub fn linear() -> Self {
        Self {
            s: 0,
            a: 1.0,
            p: 1,
            kernel: Kernel::Lagrange,
        }
    }

    /// Default Gauss point count per element for unweighted Galerkin terms.
    pub fn default_quad_points(&self) -> usize {
        (self.p + 1).max(2).min(crate::quadrature::MAX_GAUSS_POINTS)
    }

    /// Gauss point count for terms carrying a non-polynomial coefficient.
    pub fn weighted_quad_points(&self) -> usize {
        (self.p + 3).min(crate::quadrature::MAX_GAUSS_POINTS)
    }
}

/// Sparse evaluation of all shape functions supported at one coordinate.
#[derive(Debug, Clone)]
pub struct BasisEval {
    /// Global node indices of the elemental patch, contiguous and ascending.
    pub node_indices: Vec<usize>,
    pub values: Vec<f64>,
    pub derivs: Vec<f64>,
}

impl BasisEval {
    /// Contract against a full nodal vector: value of the interpolant.
    pub fn dot(&self, nodal: &[f64]) -> f64 {
        self.node_indices
            .iter()
            .zip(&self.values)
            .map(|(&k, v)| v * nodal[k])
            .sum()
    }

    /// Contract derivatives against a full nodal vector.
    pub fn dot_deriv(&self, nodal: &[f64]) -> f64 {
        self.node_indices
            .iter()
            .zip(&self.derivs)
            .map(|(&k, d)| d * nodal[k])
            .sum()
    }
}

/// Evaluate all C-HiDeNN shape functions (values and analytic first
/// derivatives) supported at `x`.
pub fn eval_basis(mesh: &Mesh1D, cfg: &PatchConfig, x: f64) -> Result<BasisEval> {
    let e = mesh.locate_element(x)?;
    let (dlo, dhi) = mesh.domain();
    let x = x.clamp(dlo, dhi);
    let nodes = mesh.nodes();
    let x0 = nodes[e];
    let x1 = nodes[e + 1];
    let h = x1 - x0;
    let hat_vals = [(x1 - x) / h, (x - x0) / h];
    let hat_ders = [-1.0 / h, 1.0 / h];

    if cfg.s == 0 {
        return Ok(BasisEval {
            node_indices: vec![e, e + 1],
            values: hat_vals.to_vec(),
            derivs: hat_ders.to_vec(),
        });
    }

    let last = nodes.len() - 1;
    let lo = e.saturating_sub(cfg.s);
    let hi = (e + 1 + cfg.s).min(last);
    let mut values = vec![0.0; hi - lo + 1];
    let mut derivs = vec![0.0; hi - lo + 1];

    for (slot, i) in [e, e + 1].into_iter().enumerate() {
        let plo = i.saturating_sub(cfg.s);
        let phi = (i + cfg.s).min(last);
        let patch = &nodes[plo..=phi];
        let interior = i >= cfg.s && i + cfg.s <= last;
        if interior && cfg.p > patch.len() - 1 {
            return Err(Error::Configuration(format!(
                "reproducing order p={} exceeds interior patch capacity {} (s={})",
                cfg.p,
                patch.len() - 1,
                cfg.s
            )));
        }
        let p_eff = cfg.p.min(patch.len() - 1);
        let (w, dw) = match cfg.kernel {
            Kernel::Lagrange => lagrange_patch(patch, i - plo, p_eff, x),
            Kernel::InterpMls => mls_patch(patch, p_eff, cfg.a, x)?,
        };
        for j in 0..patch.len() {
            let pos = plo + j - lo;
            values[pos] += hat_vals[slot] * w[j];
            derivs[pos] += hat_ders[slot] * w[j] + hat_vals[slot] * dw[j];
        }
    }

    Ok(BasisEval {
        node_indices: (lo..=hi).collect(),
        values,
        derivs,
    })
}

/// Lagrange cardinal patch functions: a contiguous window of `p+1` patch
/// nodes containing the patch owner node `i_loc`, centered on it where the
/// patch allows. Returns (values, derivatives) over the full patch; entries
/// outside the window are zero.
fn lagrange_patch(patch: &[f64], i_loc: usize, p: usize, x: f64) -> (Vec<f64>, Vec<f64>) {
    let n = patch.len();
    let start = i_loc
        .saturating_sub(p / 2)
        .min(n - 1 - p);
    let win = &patch[start..start + p + 1];
    let mut w = vec![0.0; n];
    let mut dw = vec![0.0; n];
    for j in 0..=p {
        let mut val = 1.0;
        for l in 0..=p {
            if l != j {
                val *= (x - win[l]) / (win[j] - win[l]);
            }
        }
        // L_j'(x) = sum_m 1/(x_j - x_m) * prod_{l != j,m} (x - x_l)/(x_j - x_l)
        let mut der = 0.0;
        for m in 0..=p {
            if m == j {
                continue;
            }
            let mut term = 1.0 / (win[j] - win[m]);
            for l in 0..=p {
                if l != j && l != m {
                    term *= (x - win[l]) / (win[j] - win[l]);
                }
            }
            der += term;
        }
        w[start + j] = val;
        dw[start + j] = der;
    }
    (w, dw)
}

/// Interpolating-MLS patch functions: minimize `sum W_j^2 / w_j(x)` subject
/// to reproducing monomials up to order `p`, with singular Gaussian weights
/// so the construction interpolates at patch nodes.
fn mls_patch(patch: &[f64], p: usize, a: f64, x: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = patch.len();
    let hbar = (patch[n - 1] - patch[0]) / (n as f64 - 1.0);

    // delta short-circuit at (numerically) nodal coordinates
    if let Some(j) = patch.iter().position(|&xj| (x - xj).abs() < 1e-12 * hbar) {
        let mut w = vec![0.0; n];
        w[j] = 1.0;
        // the analytic limit of dW at a node is taken numerically
        let eps = 1e-7 * hbar;
        let (wp, _) = mls_patch(patch, p, a, x + eps)?;
        let (wm, _) = mls_patch(patch, p, a, x - eps)?;
        let dw = wp
            .iter()
            .zip(&wm)
            .map(|(p_, m_)| (p_ - m_) / (2.0 * eps))
            .collect();
        return Ok((w, dw));
    }

    // local coordinates on [-1, 1] for the moment system
    let c = 0.5 * (patch[0] + patch[n - 1]);
    let hs = 0.5 * (patch[n - 1] - patch[0]);
    let xi: Vec<f64> = patch.iter().map(|&xj| (xj - c) / hs).collect();
    let xiq = (x - c) / hs;

    // singular interpolating weights, normalized by the largest one;
    // W is invariant under constant rescaling of the weights
    let mut wgt = vec![0.0; n];
    let mut dwgt = vec![0.0; n];
    for j in 0..n {
        let rho = (x - patch[j]) / hbar;
        let wj = (-(rho / a).powi(2)).exp() / (rho * rho);
        wgt[j] = wj;
        dwgt[j] = wj * (-2.0 * rho / (a * a) - 2.0 / rho) / hbar;
    }
    let wmax = wgt.iter().cloned().fold(f64::MIN, f64::max);
    for j in 0..n {
        wgt[j] /= wmax;
        dwgt[j] /= wmax;
    }

    let np = p + 1;
    let pows = |t: f64| -> Vec<f64> { (0..np).map(|q| t.powi(q as i32)).collect() };
    let dpows = |t: f64| -> Vec<f64> {
        (0..np)
            .map(|q| {
                if q == 0 {
                    0.0
                } else {
                    q as f64 * t.powi(q as i32 - 1)
                }
            })
            .collect()
    };
    let pj: Vec<Vec<f64>> = xi.iter().map(|&t| pows(t)).collect();
    let sqw: Vec<f64> = wgt.iter().map(|w| w.sqrt()).collect();

    // The constrained minimizer is W = D P^T (P D P^T)^{-1} b with
    // D = diag(w). Factor A = D^{1/2} P = QR once; then
    // D^{1/2} P^T M^{-1} c = Q R^{-T} c, which needs only one triangular
    // solve per contraction and stays accurate near nodes where the Gram
    // matrix itself is nearly singular.
    let mut amat = vec![0.0; n * np];
    for j in 0..n {
        for q in 0..np {
            amat[j * np + q] = sqw[j] * pj[j][q];
        }
    }
    let qr = HouseholderQr::factor(amat, n, np);
    let cond_est = qr.cond_estimate();
    if !cond_est.is_finite() || cond_est > 1e12 {
        return Err(Error::Conditioning(cond_est));
    }

    let b = pows(xiq);
    let db: Vec<f64> = dpows(xiq).iter().map(|d| d / hs).collect();

    // W_j = sqrt(w_j) * (Q R^{-T} b)_j
    let tb = qr.q_rinvt(&b);
    let mut w = vec![0.0; n];
    // p_j^T lambda, recovered without forming lambda explicitly
    let mut plam = vec![0.0; n];
    for j in 0..n {
        w[j] = sqw[j] * tb[j];
        plam[j] = if sqw[j] > 1e-150 { tb[j] / sqw[j] } else { 0.0 };
    }

    // dW_j = w_j' (p_j^T lambda) + w_j (p_j^T lambda'),
    // lambda' = M^{-1} (b' - M' lambda), M' = sum_j w_j' p_j p_j^T
    let mut c = db.clone();
    for j in 0..n {
        for q in 0..np {
            c[q] -= dwgt[j] * pj[j][q] * plam[j];
        }
    }
    let tc = qr.q_rinvt(&c);
    let mut dw = vec![0.0; n];
    for j in 0..n {
        dw[j] = dwgt[j] * plam[j] + sqw[j] * tc[j];
    }
    Ok((w, dw))
}

/// Householder QR of a tall row-major `n x m` matrix, retaining the
/// reflectors so `Q R^{-T} c` can be applied directly.
struct HouseholderQr {
    a: Vec<f64>,
    vs: Vec<Vec<f64>>,
    n: usize,
    m: usize,
}

impl HouseholderQr {
    fn factor(mut a: Vec<f64>, n: usize, m: usize) -> Self {
        let mut vs = Vec::with_capacity(m);
        for k in 0..m {
            let mut norm = 0.0;
            for i in k..n {
                norm += a[i * m + k] * a[i * m + k];
            }
            let norm = norm.sqrt();
            let alpha = if a[k * m + k] >= 0.0 { -norm } else { norm };
            let mut v = vec![0.0; n - k];
            v[0] = a[k * m + k] - alpha;
            for i in k + 1..n {
                v[i - k] = a[i * m + k];
            }
            let vtv: f64 = v.iter().map(|x| x * x).sum();
            if vtv > 0.0 {
                for col in k..m {
                    let dot: f64 = (k..n).map(|i| v[i - k] * a[i * m + col]).sum();
                    let f = 2.0 * dot / vtv;
                    for i in k..n {
                        a[i * m + col] -= f * v[i - k];
                    }
                }
                a[k * m + k] = alpha;
            }
            vs.push(v);
        }
        Self { a, vs, n, m }
    }

    fn cond_estimate(&self) -> f64 {
        let mut dmin = f64::MAX;
        let mut dmax: f64 = 0.0;
        for q in 0..self.m {
            let d = self.a[q * self.m + q].abs();
            dmin = dmin.min(d);
            dmax = dmax.max(d);
        }
        dmax / dmin.max(f64::MIN_POSITIVE)
    }

    /// Apply `Q R^{-T}` to a length-`m` vector.
    fn q_rinvt(&self, c: &[f64]) -> Vec<f64> {
        let (n, m) = (self.n, self.m);
        // forward substitution with R^T (lower triangular)
        let mut y = c.to_vec();
        for q in 0..m {
            for l in 0..q {
                y[q] -= self.a[l * m + q] * y[l];
            }
            y[q] /= self.a[q * m + q];
        }
        // z = Q [y; 0] by applying reflectors in reverse order
        let mut z = vec![0.0; n];
        z[..m].copy_from_slice(&y);
        for k in (0..m).rev() {
            let v = &self.vs[k];
            let vtv: f64 = v.iter().map(|x| x * x).sum();
            if vtv == 0.0 {
                continue;
            }
            let dot: f64 = (k..n).map(|i| v[i - k] * z[i]).sum();
            let f = 2.0 * dot / vtv;
            for i in k..n {
                z[i] -= f * v[i - k];
            }
        }
        z
    }
}
