use crate::error::{Error, Result};

pub const MAX_GAUSS_POINTS: usize = 10;

/// Gauss-Legendre rule on the reference interval [-1, 1].
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Gauss-Legendre rule with `g` points, exact for polynomials of degree
/// `2g - 1`. Nodes are found by Newton iteration on the Legendre polynomial.
pub fn gauss_rule(g: usize) -> Result<QuadratureRule> {
    if g == 0 || g > MAX_GAUSS_POINTS {
        return Err(Error::InvalidArgument(format!(
            "gauss rule order {g} outside 1..={MAX_GAUSS_POINTS}"
        )));
    }
    let mut points = vec![0.0; g];
    let mut weights = vec![0.0; g];
    for i in 0..g {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (g as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(g, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(g, x);
        // roots come out in descending order
        points[g - 1 - i] = x;
        weights[g - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    if g % 2 == 1 {
        points[g / 2] = 0.0;
    }
    Ok(QuadratureRule { points, weights })
}

/// Value and derivative of the Legendre polynomial P_n at x.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}
