//! High-dimensional Poisson solve with the additive sine solution
//! u = Σ_d sin(πx_d/2): boundary data rides on a lift field, the correction
//! is grown mode by mode.

use septensor::basis::{Kernel, PatchConfig};
use septensor::field::{DimKind, DimensionSpec};
use septensor::mesh::make_uniform_mesh;
use septensor::oracle::sample_rel_l2;
use septensor::problems::poisson_case1;
use septensor::solver::{solve, SolverConfig};

fn run(d: usize, modes: usize) {
    let patch = PatchConfig::new(2, 20.0, 3, Kernel::InterpMls).unwrap();
    let dims: Vec<DimensionSpec> = (0..d)
        .map(|i| DimensionSpec {
            name: format!("x{}", i + 1),
            mesh: make_uniform_mesh(0.0, 1.0, 32).unwrap(),
            patch: patch.clone(),
            kind: DimKind::Space,
        })
        .collect();
    let setup = poisson_case1(dims).unwrap();
    let exact = setup.exact.clone().unwrap();
    let t0 = std::time::Instant::now();
    let (field, report) = solve(
        &setup.op,
        &setup.src,
        &setup.dims,
        &setup.bc,
        &SolverConfig::new(modes),
    )
    .unwrap();
    let grid = if d <= 2 { 50 } else { 9 };
    let err = sample_rel_l2(&field, |p| exact(p), grid).unwrap();
    println!(
        "D = {d:2}: {} modes ({} lift), relative L2 error {err:.3e}, {:.2} s",
        report.modes_used,
        report.lift_modes,
        t0.elapsed().as_secs_f64()
    );
}

fn main() {
    run(2, 4);
    run(5, 10);
}
