//! Parametric space-parameter-time solve: the heat equation on [0,1]² with
//! conductivity k and source magnitude P as extra separated dimensions.
//! One solve yields the solution for every (k, P) at once; a finite-difference
//! run at a single parameter point checks one slice of it.

use septensor::basis::{Kernel, PatchConfig};
use septensor::field::{DimKind, DimensionSpec};
use septensor::mesh::make_uniform_mesh;
use septensor::oracle::fd_heat_2d_param;
use septensor::problems::heat_spt;
use septensor::solver::{solve, SolverConfig};

fn main() {
    let patch = PatchConfig::new(2, 20.0, 3, Kernel::InterpMls).unwrap();
    let spec = |name: &str, lo: f64, hi: f64, n: usize, kind| DimensionSpec {
        name: name.to_string(),
        mesh: make_uniform_mesh(lo, hi, n).unwrap(),
        patch: patch.clone(),
        kind,
    };
    let dims = vec![
        spec("x", 0.0, 1.0, 24, DimKind::Space),
        spec("y", 0.0, 1.0, 24, DimKind::Space),
        spec("k", 1.0, 4.0, 12, DimKind::Param),
        spec("P", 100.0, 200.0, 12, DimKind::Param),
        spec("t", 0.0, 0.04, 24, DimKind::Time),
    ];
    let setup = heat_spt(dims, 0.5).unwrap();
    let t0 = std::time::Instant::now();
    let (field, report) = solve(
        &setup.op,
        &setup.src,
        &setup.dims,
        &setup.bc,
        &SolverConfig::new(20),
    )
    .unwrap();
    println!(
        "parametric heat: {} modes in {:.1} s",
        report.modes_used,
        t0.elapsed().as_secs_f64()
    );

    // compare a (k, P) slice at the final time against finite differences
    let (k, p) = (2.5, 150.0);
    let traj = fd_heat_2d_param(65, 400, 0.04, k, p).unwrap();
    let last = traj.times.len() - 1;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 1..20 {
        for j in 1..20 {
            let (x, y) = (i as f64 / 20.0, j as f64 / 20.0);
            let u = field.evaluate(&[x, y, k, p, 0.04]).unwrap();
            let v = traj.sample_frame(last, x, y);
            num += (u - v) * (u - v);
            den += v * v;
        }
    }
    println!(
        "slice k={k}, P={p}, t=0.04: relative L2 error vs finite differences {:.3e}",
        (num / den).sqrt()
    );
}
