use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_matrix, Op1DKind};
use crate::banded::BandedMatrix;
use crate::basis::{eval_basis, PatchConfig};
use crate::error::{Error, Result};
use crate::mesh::Mesh1D;

const MAGIC: &[u8; 6] = b"INNTD1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimKind {
    Space,
    Time,
    Param,
}

/// One axis of the tensor-product approximation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DimensionSpec {
    pub name: String,
    pub mesh: Mesh1D,
    pub patch: PatchConfig,
    pub kind: DimKind,
}

/// Rank-M separable approximation Ju(x) = Σ_m Π_d Ñ_d(x_d)·u_d^(m).
#[derive(Debug, Clone)]
pub struct SeparableField {
    dims: Vec<DimensionSpec>,
    /// modes[m][d] is the nodal vector for mode m along dimension d
    modes: Vec<Vec<Vec<f64>>>,
}

impl SeparableField {
    pub fn new(dims: Vec<DimensionSpec>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidArgument("field needs >= 1 dimension".into()));
        }
        for i in 0..dims.len() {
            for j in i + 1..dims.len() {
                if dims[i].name == dims[j].name {
                    return Err(Error::InvalidArgument(format!(
                        "duplicate dimension name {:?}",
                        dims[i].name
                    )));
                }
            }
        }
        Ok(Self {
            dims,
            modes: Vec::new(),
        })
    }

    pub fn dims(&self) -> &[DimensionSpec] {
        &self.dims
    }

    pub fn num_dims(&self) -> usize {
        self.dims.len()
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn mode(&self, m: usize) -> &[Vec<f64>] {
        &self.modes[m]
    }

    pub fn mode_mut(&mut self, m: usize) -> &mut Vec<Vec<f64>> {
        &mut self.modes[m]
    }

    pub fn modes(&self) -> &[Vec<Vec<f64>>] {
        &self.modes
    }

    pub fn add_mode(&mut self, vectors: Vec<Vec<f64>>) -> Result<()> {
        if vectors.len() != self.dims.len() {
            return Err(Error::InvalidArgument(format!(
                "mode has {} vectors, field has {} dimensions",
                vectors.len(),
                self.dims.len()
            )));
        }
        for (v, d) in vectors.iter().zip(&self.dims) {
            if v.len() != d.mesh.num_nodes() {
                return Err(Error::InvalidArgument(format!(
                    "dimension {:?}: vector length {} != {} nodes",
                    d.name,
                    v.len(),
                    d.mesh.num_nodes()
                )));
            }
        }
        self.modes.push(vectors);
        Ok(())
    }

    pub fn truncate_modes(&mut self, m: usize) {
        self.modes.truncate(m);
    }

    /// Append every mode of `other` (same dims assumed by caller).
    pub fn extend_modes(&mut self, other: &SeparableField) -> Result<()> {
        for m in &other.modes {
            self.add_mode(m.clone())?;
        }
        Ok(())
    }

    pub fn evaluate(&self, point: &[f64]) -> Result<f64> {
        if point.len() != self.dims.len() {
            return Err(Error::InvalidArgument(format!(
                "point has {} coordinates, field has {} dimensions",
                point.len(),
                self.dims.len()
            )));
        }
        let mut acc = 0.0;
        let mut per_dim = Vec::with_capacity(self.dims.len());
        for (d, &x) in self.dims.iter().zip(point) {
            per_dim.push(eval_basis(&d.mesh, &d.patch, x)?);
        }
        for mode in &self.modes {
            let mut prod = 1.0;
            for (be, v) in per_dim.iter().zip(mode) {
                prod *= be.dot(v);
            }
            acc += prod;
        }
        Ok(acc)
    }

    /// Value and gradient with respect to each coordinate.
    pub fn evaluate_with_gradient(&self, point: &[f64]) -> Result<(f64, Vec<f64>)> {
        if point.len() != self.dims.len() {
            return Err(Error::InvalidArgument(format!(
                "point has {} coordinates, field has {} dimensions",
                point.len(),
                self.dims.len()
            )));
        }
        let ndim = self.dims.len();
        let mut per_dim = Vec::with_capacity(ndim);
        for (d, &x) in self.dims.iter().zip(point) {
            per_dim.push(eval_basis(&d.mesh, &d.patch, x)?);
        }
        let mut value = 0.0;
        let mut grad = vec![0.0; ndim];
        for mode in &self.modes {
            let vals: Vec<f64> = per_dim
                .iter()
                .zip(mode)
                .map(|(be, v)| be.dot(v))
                .collect();
            let prod: f64 = vals.iter().product();
            value += prod;
            for d in 0..ndim {
                let mut g = per_dim[d].dot_deriv(&mode[d]);
                for (dd, &v) in vals.iter().enumerate() {
                    if dd != d {
                        g *= v;
                    }
                }
                grad[d] += g;
            }
        }
        Ok((value, grad))
    }

    pub fn evaluate_batch(&self, points: &[Vec<f64>]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(points.len());
        let mut failures = Vec::new();
        for (i, p) in points.iter().enumerate() {
            match self.evaluate(p) {
                Ok(v) => out.push(v),
                Err(e) => failures.push((i, Box::new(e))),
            }
        }
        if failures.is_empty() {
            Ok(out)
        } else {
            Err(Error::Indexed(failures))
        }
    }

    /// Per-dimension mass matrices for L2 inner products.
    pub fn mass_matrices(&self) -> Result<Vec<BandedMatrix>> {
        self.dims
            .iter()
            .map(|d| assemble_matrix(&d.mesh, &d.patch, &Op1DKind::Mass))
            .collect()
    }

    pub fn inner_product_l2(&self, other: &SeparableField) -> Result<f64> {
        self.inner_product_l2_with(other, &self.check_same_dims(other)?)
    }

    fn check_same_dims(&self, other: &SeparableField) -> Result<Vec<BandedMatrix>> {
        if self.dims.len() != other.dims.len()
            || self
                .dims
                .iter()
                .zip(&other.dims)
                .any(|(a, b)| a.name != b.name || a.mesh != b.mesh)
        {
            return Err(Error::InvalidArgument(
                "inner product requires identical dimensions".into(),
            ));
        }
        self.mass_matrices()
    }

    /// Inner product with caller-provided mass matrices (avoids reassembly in
    /// inner loops).
    pub fn inner_product_l2_with(
        &self,
        other: &SeparableField,
        mass: &[BandedMatrix],
    ) -> Result<f64> {
        let mut acc = 0.0;
        for mu in &self.modes {
            for mv in &other.modes {
                let mut prod = 1.0;
                for d in 0..self.dims.len() {
                    prod *= mass[d].quadratic_form(&mu[d], &mv[d]);
                }
                acc += prod;
            }
        }
        Ok(acc)
    }

    pub fn norm_l2(&self) -> Result<f64> {
        Ok(self.inner_product_l2(self)?.max(0.0).sqrt())
    }

    /// Rescale each mode so every vector except dimension 0's has unit
    /// Euclidean norm; the magnitude folds into dimension 0.
    pub fn normalize_modes(&mut self) {
        for mode in &mut self.modes {
            let mut scale = 1.0;
            for v in mode.iter_mut().skip(1) {
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if n > 0.0 {
                    for x in v.iter_mut() {
                        *x /= n;
                    }
                    scale *= n;
                }
            }
            for x in mode[0].iter_mut() {
                *x *= scale;
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = FieldHeader {
            version: 1,
            num_modes: self.modes.len(),
            dims: self.dims.clone(),
        };
        let header_json = serde_json::to_vec(&header)
            .map_err(|e| Error::Format(format!("header encode: {e}")))?;

        let mut payload = Vec::new();
        for mode in &self.modes {
            for v in mode {
                for &x in v {
                    payload.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        let crc = crc32fast::hash(&payload);

        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&(header_json.len() as u32).to_le_bytes())?;
        w.write_all(&header_json)?;
        w.write_all(&payload)?;
        w.write_all(&crc.to_le_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let header = read_header_from(&mut r)?;
        let n_per_mode: usize = header.dims.iter().map(|d| d.mesh.num_nodes()).sum();
        let total = header.num_modes * n_per_mode;
        let mut payload = vec![0u8; total * 8];
        r.read_exact(&mut payload)
            .map_err(|_| Error::Format("truncated coefficient payload".into()))?;
        let mut crc_bytes = [0u8; 4];
        r.read_exact(&mut crc_bytes)
            .map_err(|_| Error::Format("missing checksum".into()))?;
        let crc = u32::from_le_bytes(crc_bytes);
        if crc != crc32fast::hash(&payload) {
            return Err(Error::Format("checksum mismatch".into()));
        }

        let mut field = SeparableField::new(header.dims)?;
        let mut off = 0;
        for _ in 0..header.num_modes {
            let mut mode = Vec::with_capacity(field.dims.len());
            for d in 0..field.dims.len() {
                let n = field.dims[d].mesh.num_nodes();
                let mut v = Vec::with_capacity(n);
                for _ in 0..n {
                    let b: [u8; 8] = payload[off..off + 8].try_into().unwrap();
                    v.push(f64::from_le_bytes(b));
                    off += 8;
                }
                mode.push(v);
            }
            field.modes.push(mode);
        }
        Ok(field)
    }
}

/// Container metadata, readable without touching the coefficient blocks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldHeader {
    pub version: u32,
    pub num_modes: usize,
    pub dims: Vec<DimensionSpec>,
}

pub fn read_header(path: &Path) -> Result<FieldHeader> {
    let mut r = BufReader::new(File::open(path)?);
    read_header_from(&mut r)
}

fn read_header_from<R: Read>(r: &mut R) -> Result<FieldHeader> {
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("file too short for magic".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic, not a field container".into()));
    }
    let mut len_bytes = [0u8; 4];
    r.read_exact(&mut len_bytes)
        .map_err(|_| Error::Format("missing header length".into()))?;
    let len = u32::from_le_bytes(len_bytes) as usize;
    let mut header_json = vec![0u8; len];
    r.read_exact(&mut header_json)
        .map_err(|_| Error::Format("truncated header".into()))?;
    let header: FieldHeader = serde_json::from_slice(&header_json)
        .map_err(|e| Error::Format(format!("header decode: {e}")))?;
    if header.version != 1 {
        return Err(Error::Format(format!(
            "unsupported container version {}",
            header.version
        )));
    }
    Ok(header)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::Kernel;
    use crate::mesh::make_uniform_mesh;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn dim(name: &str, n_elem: usize) -> DimensionSpec {
        DimensionSpec {
            name: name.into(),
            mesh: make_uniform_mesh(0.0, 1.0, n_elem).unwrap(),
            patch: PatchConfig::linear(),
            kind: DimKind::Space,
        }
    }

    fn random_field(rng: &mut impl Rng, n_modes: usize) -> SeparableField {
        let mut f = SeparableField::new(vec![dim("x", 5), dim("y", 7)]).unwrap();
        for _ in 0..n_modes {
            let vx: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let vy: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
            f.add_mode(vec![vx, vy]).unwrap();
        }
        f
    }

    #[test]
    fn constant_one_field() {
        let mut f = SeparableField::new(vec![dim("x", 4), dim("y", 4)]).unwrap();
        f.add_mode(vec![vec![1.0; 5], vec![1.0; 5]]).unwrap();
        assert_abs_diff_eq!(f.evaluate(&[0.37, 0.81]).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.inner_product_l2(&f).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_mode_field_is_zero() {
        let f = SeparableField::new(vec![dim("x", 4)]).unwrap();
        assert_eq!(f.evaluate(&[0.5]).unwrap(), 0.0);
    }

    #[test]
    fn nodal_sin_product() {
        let n = 200;
        let mut f = SeparableField::new(vec![dim("x", n), dim("y", n)]).unwrap();
        let mesh = make_uniform_mesh(0.0, 1.0, n).unwrap();
        let s: Vec<f64> = mesh
            .nodes()
            .iter()
            .map(|&x| (std::f64::consts::PI * x).sin())
            .collect();
        f.add_mode(vec![s.clone(), s]).unwrap();
        assert_abs_diff_eq!(f.evaluate(&[0.5, 0.5]).unwrap(), 1.0, epsilon = 1e-3);
        // ∫ sin^2 = 1/2 per dimension
        assert_abs_diff_eq!(f.inner_product_l2(&f).unwrap(), 0.25, epsilon = 1e-3);
    }

    #[test]
    fn superposition_over_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_field(&mut rng, 4);
        let pt = [0.3, 0.6];
        let total = f.evaluate(&pt).unwrap();
        let mut sum = 0.0;
        for m in 0..f.num_modes() {
            let mut single = SeparableField::new(f.dims.to_vec()).unwrap();
            single.add_mode(f.mode(m).to_vec()).unwrap();
            sum += single.evaluate(&pt).unwrap();
        }
        assert_abs_diff_eq!(total, sum, epsilon = 1e-12 * total.abs().max(1.0));
    }

    #[test]
    fn batch_matches_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = random_field(&mut rng, 3);
        let pts: Vec<Vec<f64>> = (0..500)
            .map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)])
            .collect();
        let batch = f.evaluate_batch(&pts).unwrap();
        for (p, &b) in pts.iter().zip(&batch) {
            assert_eq!(f.evaluate(p).unwrap(), b);
        }
        assert!(f.evaluate_batch(&[]).unwrap().is_empty());
    }

    #[test]
    fn batch_reports_indexed_failures() {
        let f = SeparableField::new(vec![dim("x", 4)]).unwrap();
        let pts = vec![vec![0.5], vec![2.0], vec![0.1], vec![-3.0]];
        match f.evaluate_batch(&pts) {
            Err(Error::Indexed(fails)) => {
                let idx: Vec<usize> = fails.iter().map(|(i, _)| *i).collect();
                assert_eq!(idx, vec![1, 3]);
            }
            other => panic!("expected indexed error, got {other:?}"),
        }
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = random_field(&mut rng, 3);
        let p = [0.312, 0.644];
        let (_, grad) = f.evaluate_with_gradient(&p).unwrap();
        let h = 1e-6;
        for d in 0..2 {
            let mut pp = p.to_vec();
            let mut pm = p.to_vec();
            pp[d] += h;
            pm[d] -= h;
            let fd = (f.evaluate(&pp).unwrap() - f.evaluate(&pm).unwrap()) / (2.0 * h);
            assert_abs_diff_eq!(grad[d], fd, epsilon = 1e-6 * grad[d].abs().max(1.0));
        }
    }

    #[test]
    fn normalize_preserves_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut f = random_field(&mut rng, 3);
        let pt = [0.25, 0.75];
        let before = f.evaluate(&pt).unwrap();
        f.normalize_modes();
        assert_abs_diff_eq!(
            f.evaluate(&pt).unwrap(),
            before,
            epsilon = 1e-12 * before.abs().max(1.0)
        );
        for m in 0..f.num_modes() {
            let n: f64 = f.mode(m)[1].iter().map(|x| x * x).sum::<f64>().sqrt();
            assert_abs_diff_eq!(n, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn inner_product_matches_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = random_field(&mut rng, 2);
        let analytic = f.inner_product_l2(&f).unwrap();
        // dense tensor-grid Gauss quadrature of evaluate^2
        let rule = crate::quadrature::gauss_rule(6).unwrap();
        let mut total = 0.0;
        for ex in 0..5 {
            for ey in 0..7 {
                let mx = &f.dims[0].mesh;
                let my = &f.dims[1].mesh;
                let (xl, xr) = (mx.nodes()[ex], mx.nodes()[ex + 1]);
                let (yl, yr) = (my.nodes()[ey], my.nodes()[ey + 1]);
                for (tx, wx) in rule.points.iter().zip(&rule.weights) {
                    for (ty, wy) in rule.points.iter().zip(&rule.weights) {
                        let x = 0.5 * (xl + xr) + 0.5 * (xr - xl) * tx;
                        let y = 0.5 * (yl + yr) + 0.5 * (yr - yl) * ty;
                        let v = f.evaluate(&[x, y]).unwrap();
                        total += wx * wy * 0.25 * (xr - xl) * (yr - yl) * v * v;
                    }
                }
            }
        }
        assert_abs_diff_eq!(analytic, total, epsilon = 1e-9 * total.abs());
    }

    #[test]
    fn rejects_bad_modes_and_dims() {
        let mut f = SeparableField::new(vec![dim("x", 4), dim("y", 4)]).unwrap();
        assert!(f.add_mode(vec![vec![1.0; 5]]).is_err());
        assert!(f.add_mode(vec![vec![1.0; 5], vec![1.0; 99]]).is_err());
        assert!(SeparableField::new(vec![dim("x", 4), dim("x", 4)]).is_err());
    }

    #[test]
    fn container_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut f = random_field(&mut rng, 4);
        f.dims[1].patch = PatchConfig::new(2, 8.0, 2, Kernel::InterpMls).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("field.inntd");
        f.save(&path).unwrap();

        let header = read_header(&path).unwrap();
        assert_eq!(header.num_modes, 4);
        assert_eq!(header.dims.len(), 2);
        assert_eq!(header.dims[1].patch.s, 2);

        let g = SeparableField::load(&path).unwrap();
        let pt = [0.4, 0.9];
        assert_eq!(f.evaluate(&pt).unwrap(), g.evaluate(&pt).unwrap());
    }

    #[test]
    fn container_detects_corruption() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = random_field(&mut rng, 2);
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("field.inntd");
        f.save(&path).unwrap();

        // truncation
        let bytes = std::fs::read(&path).unwrap();
        let cut = path.with_extension("cut");
        std::fs::write(&cut, &bytes[..bytes.len() - 10]).unwrap();
        assert!(matches!(
            SeparableField::load(&cut),
            Err(Error::Format(_))
        ));

        // payload bit flip
        let mut flipped = bytes.clone();
        let mid = flipped.len() - 20;
        flipped[mid] ^= 0xff;
        let bad = path.with_extension("bad");
        std::fs::write(&bad, &flipped).unwrap();
        assert!(matches!(
            SeparableField::load(&bad),
            Err(Error::Format(_))
        ));

        // wrong magic
        let mut nomagic = bytes;
        nomagic[0] = b'X';
        let nm = path.with_extension("nm");
        std::fs::write(&nm, &nomagic).unwrap();
        assert!(matches!(SeparableField::load(&nm), Err(Error::Format(_))));
    }
}
