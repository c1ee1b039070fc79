use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// 1D mesh: strictly increasing node coordinates. Element `e` is the interval
/// `[nodes[e], nodes[e+1]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh1D {
    nodes: Vec<f64>,
}

impl Mesh1D {
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidArgument(
                "mesh needs at least 2 nodes".into(),
            ));
        }
        if nodes.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("non-finite mesh node".into()));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "mesh nodes must be strictly increasing".into(),
            ));
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_elements(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.nodes[0], *self.nodes.last().unwrap())
    }

    pub fn length(&self) -> f64 {
        let (lo, hi) = self.domain();
        hi - lo
    }

    pub fn element_length(&self, e: usize) -> f64 {
        self.nodes[e + 1] - self.nodes[e]
    }

    /// Locate the element containing `x` by binary search. Boundary
    /// coordinates map to the adjacent interior element; points outside the
    /// domain by more than `1e-12 * length` are rejected.
    pub fn locate_element(&self, x: f64) -> Result<usize> {
        let (lo, hi) = self.domain();
        let tol = 1e-12 * self.length();
        if !x.is_finite() || x < lo - tol || x > hi + tol {
            return Err(Error::OutOfDomain { x, lo, hi });
        }
        let xc = x.clamp(lo, hi);
        let idx = self.nodes.partition_point(|&n| n <= xc);
        Ok(idx.saturating_sub(1).min(self.num_elements() - 1))
    }

    /// Clamp `x` into the domain, within the out-of-domain tolerance.
    pub fn clamp(&self, x: f64) -> Result<f64> {
        self.locate_element(x)?;
        let (lo, hi) = self.domain();
        Ok(x.clamp(lo, hi))
    }
}

/// Uniform mesh with `n_elem` equal elements on `[x_min, x_max]`.
pub fn make_uniform_mesh(x_min: f64, x_max: f64, n_elem: usize) -> Result<Mesh1D> {
    if !x_min.is_finite() || !x_max.is_finite() {
        return Err(Error::InvalidArgument("non-finite mesh bounds".into()));
    }
    if n_elem == 0 {
        return Err(Error::InvalidArgument("n_elem must be positive".into()));
    }
    if x_min >= x_max {
        return Err(Error::InvalidArgument(format!(
            "x_min ({x_min}) must be below x_max ({x_max})"
        )));
    }
    let h = (x_max - x_min) / n_elem as f64;
    let mut nodes: Vec<f64> = (0..=n_elem).map(|i| x_min + h * i as f64).collect();
    // pin the last node exactly
    *nodes.last_mut().unwrap() = x_max;
    Mesh1D::new(nodes)
}

/// Graded mesh from contiguous `((lo, hi), n_elem)` intervals. Duplicate
/// nodes at interval joints are merged.
pub fn make_graded_mesh(breakpoints: &[((f64, f64), usize)]) -> Result<Mesh1D> {
    if breakpoints.is_empty() {
        return Err(Error::InvalidArgument("no intervals given".into()));
    }
    let mut nodes = Vec::new();
    let mut prev_hi: Option<f64> = None;
    for &((lo, hi), n) in breakpoints {
        if n == 0 {
            return Err(Error::InvalidArgument(
                "each interval needs n_elem >= 1".into(),
            ));
        }
        if let Some(p) = prev_hi {
            if (lo - p).abs() > 1e-12 * (hi - lo).abs().max(1.0) {
                return Err(Error::InvalidArgument(format!(
                    "intervals not contiguous: previous ends at {p}, next starts at {lo}"
                )));
            }
        }
        let seg = make_uniform_mesh(lo, hi, n)?;
        let start = if prev_hi.is_some() { 1 } else { 0 };
        nodes.extend_from_slice(&seg.nodes()[start..]);
        prev_hi = Some(hi);
    }
    Mesh1D::new(nodes)
}
