use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::assembly::{coeff_fn, Op1DKind, SeparableOperator, SeparableOperatorTerm, SeparableSource};
use crate::basis::PatchConfig;
use crate::config::{CustomSection, OracleKind, ProblemConfig, ProblemKind};
use crate::error::{Error, Result};
use crate::field::{DimensionSpec, SeparableField};
use crate::inverse::{invert, InverseConfig, TargetField};
use crate::mesh::make_uniform_mesh;
use crate::oracle::{
    fd_heat_1d_var_k, fd_heat_2d_param, fd_heat_3d_param, fd_poisson_2d, sample_rel_l2,
};
use crate::problems::{
    heat_spacetime, heat_spt, helmholtz, operator_kl, poisson_case1, poisson_case2,
    poisson_local_source, ProblemSetup,
};
use crate::solver::{solve, DirichletSpec, SolverConfig};
use crate::trainer::{train_all_at_once, train_boosting, Dataset, TrainConfig, TrainScheme};

#[derive(Parser, Debug)]
#[command(name = "septensor", version, about = "Separable tensor-decomposition PDE toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Direct PDE solve into a separable field
    Solve(RunArgs),
    /// Fit a separable field to a CSV dataset
    Train(RunArgs),
    /// Recover parametric coordinates from target samples
    Invert(RunArgs),
    /// Convergence sweep over mesh sizes and (s, p) pairs
    Study(RunArgs),
    /// Generate reference data with the finite-difference oracles
    Oracle(RunArgs),
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// TOML problem description
    #[arg(long)]
    pub config: PathBuf,
    /// output directory (default: config's `out_dir`, then ./out)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// RNG seed override
    #[arg(long)]
    pub seed: Option<u64>,
}

/// exit code 2: configuration problems; 3: numerical failures
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Configuration(_) | Error::InvalidArgument(_) | Error::Format(_) => 2,
        _ => 3,
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let (name, args) = match &cli.command {
        Command::Solve(a) => ("solve", a),
        Command::Train(a) => ("train", a),
        Command::Invert(a) => ("invert", a),
        Command::Study(a) => ("study", a),
        Command::Oracle(a) => ("oracle", a),
    };
    match execute(name, args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("septensor {name}: {e}");
            exit_code(&e)
        }
    }
}

fn execute(name: &str, args: &RunArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| Error::Configuration(format!("config {}: {e}", args.config.display())))?;
    let cfg = ProblemConfig::parse(&text)?;
    let seed = args.seed.unwrap_or(cfg.seed);
    let out = args
        .out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let base = args
        .config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let run = RunContext {
        cfg,
        config_text: text,
        config_dir: base,
        out,
        seed,
        command: name.to_string(),
    };
    match name {
        "solve" => cmd_solve(&run),
        "train" => cmd_train(&run),
        "invert" => cmd_invert(&run),
        "study" => cmd_study(&run),
        "oracle" => cmd_oracle(&run),
        _ => unreachable!(),
    }
}

pub struct RunContext {
    pub cfg: ProblemConfig,
    pub config_text: String,
    pub config_dir: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    pub command: String,
}

impl RunContext {
    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.config_dir.join(p)
        }
    }

    fn ensure_out(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out)?;
        Ok(())
    }

    fn write_manifest(&self) -> Result<()> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            command: &'a str,
            config_sha256: String,
            seed: u64,
            version: &'a str,
        }
        let digest = Sha256::digest(self.config_text.as_bytes());
        let hex: String = digest.iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        });
        let m = Manifest {
            command: &self.command,
            config_sha256: hex,
            seed: self.seed,
            version: env!("CARGO_PKG_VERSION"),
        };
        let text = serde_json::to_string_pretty(&m).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(self.out.join("manifest.json"), text)?;
        Ok(())
    }

    fn write_text(&self, file: &str, text: &str) -> Result<()> {
        std::fs::write(self.out.join(file), text)?;
        Ok(())
    }
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Instantiate the configured problem on the given dimensions.
pub fn build_problem(cfg: &ProblemConfig, dims: Vec<DimensionSpec>) -> Result<ProblemSetup> {
    let p = &cfg.params;
    match cfg.problem {
        ProblemKind::PoissonCase1 => poisson_case1(dims),
        ProblemKind::PoissonCase2 => poisson_case2(dims),
        ProblemKind::Helmholtz => helmholtz(dims, p.a1, p.a2, p.k),
        ProblemKind::PoissonLocalSource => poisson_local_source(dims),
        ProblemKind::HeatSpacetime => heat_spacetime(dims, p.source_rank, p.source_samples),
        ProblemKind::HeatSpt => heat_spt(dims, p.d0),
        ProblemKind::OperatorKl => {
            // declarative x-source override when present, else sin(πx)
            let f = cfg
                .custom
                .as_ref()
                .and_then(|c| c.source.first())
                .and_then(|t| t.factors.first())
                .map(|s| s.build())
                .unwrap_or_else(|| coeff_fn(|x| (PI * x).sin()));
            operator_kl(dims, p.k_mu, p.sigma, p.ell, f).map(|(setup, _)| setup)
        }
        ProblemKind::Custom => {
            let section = cfg.custom.as_ref().ok_or_else(|| {
                Error::Configuration("problem = \"custom\" needs a [custom] section".into())
            })?;
            build_custom(section, dims)
        }
    }
}

fn build_custom(section: &CustomSection, dims: Vec<DimensionSpec>) -> Result<ProblemSetup> {
    if section.operator.is_empty() {
        return Err(Error::Configuration("custom operator has no terms".into()));
    }
    let mut terms = Vec::new();
    for (i, t) in section.operator.iter().enumerate() {
        if t.kinds.len() != dims.len() {
            return Err(Error::Configuration(format!(
                "custom.operator[{i}]: {} kinds for {} dimensions",
                t.kinds.len(),
                dims.len()
            )));
        }
        let kinds: Result<Vec<Op1DKind>> = t
            .kinds
            .iter()
            .map(|k| match k.as_str() {
                "mass" => Ok(Op1DKind::Mass),
                "stiffness" => Ok(Op1DKind::Stiffness),
                "convection" => Ok(Op1DKind::Convection),
                other => Err(Error::Configuration(format!(
                    "custom.operator[{i}]: unknown kind {other:?}"
                ))),
            })
            .collect();
        terms.push(SeparableOperatorTerm {
            coeff: t.coeff,
            kinds: kinds?,
        });
    }
    let op = SeparableOperator { terms };
    let mut src = SeparableSource::new();
    for (i, t) in section.source.iter().enumerate() {
        if t.factors.len() != dims.len() {
            return Err(Error::Configuration(format!(
                "custom.source[{i}]: {} factors for {} dimensions",
                t.factors.len(),
                dims.len()
            )));
        }
        src.push_term(t.factors.iter().map(|f| f.build()).collect());
    }
    let mut bc = DirichletSpec::for_dims(&dims);
    if let Some(spec) = &section.dirichlet {
        if spec.len() != dims.len() {
            return Err(Error::Configuration(format!(
                "custom.dirichlet: {} entries for {} dimensions",
                spec.len(),
                dims.len()
            )));
        }
        for (d, s) in spec.iter().enumerate() {
            let n = dims[d].mesh.num_nodes();
            bc.constrained[d] = match s.as_str() {
                "both" => vec![0, n - 1],
                "left" | "initial" => vec![0],
                "right" => vec![n - 1],
                "none" => vec![],
                other => {
                    return Err(Error::Configuration(format!(
                        "custom.dirichlet[{d}]: unknown spec {other:?}"
                    )))
                }
            };
        }
    }
    Ok(ProblemSetup {
        dims,
        op,
        src,
        bc,
        exact: None,
    })
}

fn solver_config(cfg: &ProblemConfig, seed: u64) -> SolverConfig {
    let mut sc = SolverConfig::new(cfg.solver.max_modes);
    sc.max_subspace_iters = cfg.solver.max_subspace_iters;
    sc.iter_tol = cfg.solver.iter_tol;
    sc.mode_tol = cfg.solver.mode_tol;
    sc.seed = seed;
    sc
}

/// tensor-grid resolution for error sampling, bounded by dimensionality
fn err_grid(ndim: usize) -> usize {
    match ndim {
        1 => 200,
        2 => 50,
        3 => 24,
        4 => 12,
        5 => 9,
        6 => 6,
        _ => 4,
    }
}

fn cmd_solve(run: &RunContext) -> Result<()> {
    let dims = run.cfg.build_dims()?;
    let setup = build_problem(&run.cfg, dims)?;
    let (field, report) = solve(
        &setup.op,
        &setup.src,
        &setup.dims,
        &setup.bc,
        &solver_config(&run.cfg, run.seed),
    )?;
    let errors = match &setup.exact {
        Some(exact) => {
            let e = sample_rel_l2(&field, |p| exact(p), err_grid(setup.dims.len()))?;
            Some(format!("metric,value\nsample_rel_l2,{}\n", fmt17(e)))
        }
        None => None,
    };
    run.ensure_out()?;
    field.save(&run.out.join("field.inntd"))?;
    run.write_text("solve_report.txt", &report.to_log())?;
    if let Some(csv) = errors {
        run.write_text("errors.csv", &csv)?;
    }
    run.write_manifest()
}

fn cmd_study(run: &RunContext) -> Result<()> {
    let study = run
        .cfg
        .study
        .as_ref()
        .ok_or_else(|| Error::Configuration("study command needs a [study] section".into()))?;
    if study.repeats == 0 {
        return Err(Error::Configuration("study.repeats must be ≥ 1".into()));
    }
    if run.cfg.dims.is_empty() {
        return Err(Error::Configuration("config declares no dimensions".into()));
    }
    let mut csv = String::from("elems,s,p,params,mean_error,std_error,mean_wall_time_s\n");
    for &elems in &study.elements {
        for &(s, p) in &study.sp {
            let mut errors = Vec::new();
            let mut times = Vec::new();
            let mut params = 0usize;
            for r in 0..study.repeats {
                let patch = PatchConfig::new(s, study.a, p, study.kernel)?;
                let dims: Result<Vec<DimensionSpec>> = run
                    .cfg
                    .dims
                    .iter()
                    .map(|d| {
                        Ok(DimensionSpec {
                            name: d.name.clone(),
                            mesh: make_uniform_mesh(d.domain[0], d.domain[1], elems)?,
                            patch: patch.clone(),
                            kind: d.kind,
                        })
                    })
                    .collect();
                let setup = build_problem(&run.cfg, dims?)?;
                let exact = setup.exact.clone().ok_or_else(|| {
                    Error::Configuration(
                        "study needs a problem with a closed-form solution".into(),
                    )
                })?;
                let t0 = Instant::now();
                let (field, report) = solve(
                    &setup.op,
                    &setup.src,
                    &setup.dims,
                    &setup.bc,
                    &solver_config(&run.cfg, run.seed + r as u64),
                )?;
                times.push(t0.elapsed().as_secs_f64());
                errors.push(sample_rel_l2(
                    &field,
                    |pt| exact(pt),
                    err_grid(setup.dims.len()),
                )?);
                if r == 0 {
                    let nodes: usize =
                        setup.dims.iter().map(|d| d.mesh.num_nodes()).sum();
                    params = report.modes_used * nodes;
                }
            }
            let n = errors.len() as f64;
            let mean = errors.iter().sum::<f64>() / n;
            let var = errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n;
            let tmean = times.iter().sum::<f64>() / n;
            let _ = writeln!(
                csv,
                "{elems},{s},{p},{params},{},{},{}",
                fmt17(mean),
                fmt17(var.sqrt()),
                fmt17(tmean)
            );
        }
    }
    run.ensure_out()?;
    run.write_text("study.csv", &csv)?;
    run.write_manifest()
}

fn cmd_train(run: &RunContext) -> Result<()> {
    let section = run
        .cfg
        .trainer
        .as_ref()
        .ok_or_else(|| Error::Configuration("train command needs a [trainer] section".into()))?;
    let dataset_path = section
        .dataset
        .as_ref()
        .ok_or_else(|| Error::Configuration("trainer.dataset is required".into()))?;
    let scheme = match section.scheme.as_str() {
        "boosting" => TrainScheme::Boosting,
        "all_at_once" => TrainScheme::AllAtOnce,
        other => {
            return Err(Error::Configuration(format!(
                "trainer.scheme must be \"boosting\" or \"all_at_once\", got {other:?}"
            )))
        }
    };
    let dims = run.cfg.build_dims()?;
    let dataset = Dataset::from_csv(&run.resolve(dataset_path), &dims)?;
    let mut tc = TrainConfig::new(scheme, section.modes, section.epochs_max);
    tc.batch_size = section.batch_size;
    tc.learning_rate = section.learning_rate;
    tc.early_stop_patience = section.patience;
    tc.validation_fraction = section.validation_fraction;
    tc.seed = run.seed;
    let (field, report) = match scheme {
        TrainScheme::Boosting => train_boosting(&dims, &dataset, &tc)?,
        TrainScheme::AllAtOnce => train_all_at_once(&dims, &dataset, &tc)?,
    };

    let mut curve = String::from("epoch,train_mse,validation_mse\n");
    for (i, (t, v)) in report
        .train_mse
        .iter()
        .zip(&report.validation_mse)
        .enumerate()
    {
        let _ = writeln!(curve, "{i},{},{}", fmt17(*t), fmt17(*v));
    }
    let summary = format!(
        "modes: {}\nparam_count: {}\nstop_reason: {}\nfinal_train_mse: {}\nfinal_validation_mse: {}\n",
        field.num_modes(),
        report.param_count,
        report.stop_reason,
        report.train_mse.last().map(|v| fmt17(*v)).unwrap_or_default(),
        report
            .validation_mse
            .last()
            .map(|v| fmt17(*v))
            .unwrap_or_default(),
    );
    run.ensure_out()?;
    field.save(&run.out.join("field.inntd"))?;
    run.write_text("train_curve.csv", &curve)?;
    run.write_text("train_report.txt", &summary)?;
    run.write_manifest()
}

fn cmd_invert(run: &RunContext) -> Result<()> {
    let section = run
        .cfg
        .inverse
        .as_ref()
        .ok_or_else(|| Error::Configuration("invert command needs an [inverse] section".into()))?;
    let target_path = section
        .target
        .as_ref()
        .ok_or_else(|| Error::Configuration("inverse.target is required".into()))?;
    let dims = run.cfg.build_dims()?;
    let field = match &section.field {
        Some(path) => SeparableField::load(&run.resolve(path))?,
        None => {
            let setup = build_problem(&run.cfg, dims.clone())?;
            solve(
                &setup.op,
                &setup.src,
                &setup.dims,
                &setup.bc,
                &solver_config(&run.cfg, run.seed),
            )?
            .0
        }
    };
    let target_ds = Dataset::from_csv(&run.resolve(target_path), field.dims())?;
    let target = TargetField {
        points: target_ds.inputs.clone(),
        values: target_ds.targets.clone(),
    };
    let mut ic = InverseConfig::new(
        section.free_dims.clone(),
        section.box_bounds.iter().map(|b| (b[0], b[1])).collect(),
    );
    ic.learning_rate = section.learning_rate;
    ic.max_steps = section.max_steps;
    ic.grad_tol = section.grad_tol;
    ic.n_restarts = section.restarts;
    ic.seed = run.seed;
    let res = invert(&field, &target, &ic)?;

    let mut estimate = String::new();
    let _ = writeln!(
        estimate,
        "{},loss,converged",
        section.free_dims.join(",")
    );
    let vals: Vec<String> = res.estimate.iter().map(|v| fmt17(*v)).collect();
    let _ = writeln!(
        estimate,
        "{},{},{}",
        vals.join(","),
        fmt17(res.best_loss),
        res.converged
    );
    let mut restarts = String::from("restart,steps,best_loss\n");
    for (r, trace) in res.traces.iter().enumerate() {
        let best = trace.iter().cloned().fold(f64::INFINITY, f64::min);
        let _ = writeln!(restarts, "{r},{},{}", trace.len(), fmt17(best));
    }
    for (name, v) in section.free_dims.iter().zip(&res.estimate) {
        println!("{name} = {v:.8}");
    }
    run.ensure_out()?;
    run.write_text("estimate.csv", &estimate)?;
    run.write_text("restarts.csv", &restarts)?;
    run.write_manifest()
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

fn cmd_oracle(run: &RunContext) -> Result<()> {
    let section = run
        .cfg
        .oracle
        .as_ref()
        .ok_or_else(|| Error::Configuration("oracle command needs an [oracle] section".into()))?;
    let n = section.grid;
    let stride = section.stride.max(1);
    let mut csv = String::new();
    match section.kind {
        OracleKind::Poisson2d => {
            let f = |x: f64, y: f64| {
                -(PI * PI / 4.0) * ((PI * x / 2.0).sin() + (PI * y / 2.0).sin())
            };
            let g = |x: f64, y: f64| (PI * x / 2.0).sin() + (PI * y / 2.0).sin();
            let u = fd_poisson_2d(n, f, g)?;
            csv.push_str("x,y,u\n");
            let h = 1.0 / (n - 1) as f64;
            for i in (0..n).step_by(stride) {
                for j in (0..n).step_by(stride) {
                    let _ = writeln!(
                        csv,
                        "{},{},{}",
                        fmt17(i as f64 * h),
                        fmt17(j as f64 * h),
                        fmt17(u[i * n + j])
                    );
                }
            }
        }
        OracleKind::Heat2d => {
            let ks = match section.k_fixed {
                Some(k) => vec![k],
                None => linspace(1.0, 4.0, section.k_samples),
            };
            let ps = match section.p_fixed {
                Some(p) => vec![p],
                None => linspace(100.0, 200.0, section.p_samples),
            };
            csv.push_str("x,y,k,P,t,u\n");
            let h = 1.0 / (n - 1) as f64;
            for &k in &ks {
                for &p in &ps {
                    let traj = fd_heat_2d_param(n, section.steps, section.t_end, k, p)?;
                    for step in (stride..traj.times.len()).step_by(stride) {
                        for i in (0..n).step_by(stride) {
                            for j in (0..n).step_by(stride) {
                                let _ = writeln!(
                                    csv,
                                    "{},{},{},{},{},{}",
                                    fmt17(i as f64 * h),
                                    fmt17(j as f64 * h),
                                    fmt17(k),
                                    fmt17(p),
                                    fmt17(traj.times[step]),
                                    fmt17(traj.frames[step][i * n + j])
                                );
                            }
                        }
                    }
                }
            }
        }
        OracleKind::Heat3d => {
            let ks = match section.k_fixed {
                Some(k) => vec![k],
                None => linspace(1.0, 4.0, section.k_samples),
            };
            let ps = match section.p_fixed {
                Some(p) => vec![p],
                None => linspace(100.0, 200.0, section.p_samples),
            };
            csv.push_str("x,y,z,k,P,t,u\n");
            let h = 1.0 / (n - 1) as f64;
            for &k in &ks {
                for &p in &ps {
                    let traj =
                        fd_heat_3d_param(n, section.steps, section.t_end, k, p, section.d0)?;
                    for step in (stride..traj.times.len()).step_by(stride) {
                        for i in (0..n).step_by(stride) {
                            for j in (0..n).step_by(stride) {
                                for l in (0..n).step_by(stride) {
                                    let _ = writeln!(
                                        csv,
                                        "{},{},{},{},{},{},{}",
                                        fmt17(i as f64 * h),
                                        fmt17(j as f64 * h),
                                        fmt17(l as f64 * h),
                                        fmt17(k),
                                        fmt17(p),
                                        fmt17(traj.times[step]),
                                        fmt17(traj.frames[step][(i * n + j) * n + l])
                                    );
                                }
                            }
                        }
                    }
                }
            }
        }
        OracleKind::Heat1dVarK => {
            let k_mu = run.cfg.params.k_mu;
            let traj = fd_heat_1d_var_k(
                n,
                section.steps,
                section.t_end,
                |_| k_mu,
                |x| (PI * x).sin(),
            )?;
            csv.push_str("x,t,u\n");
            let h = 1.0 / (n - 1) as f64;
            for step in (stride..traj.times.len()).step_by(stride) {
                for i in (0..n).step_by(stride) {
                    let _ = writeln!(
                        csv,
                        "{},{},{}",
                        fmt17(i as f64 * h),
                        fmt17(traj.times[step]),
                        fmt17(traj.frames[step][i])
                    );
                }
            }
        }
    }
    run.ensure_out()?;
    run.write_text("oracle.csv", &csv)?;
    run.write_manifest()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_exit_codes() {
        assert_eq!(exit_code(&Error::Configuration("x".into())), 2);
        assert_eq!(exit_code(&Error::Format("x".into())), 2);
        assert_eq!(
            exit_code(&Error::Solver {
                dim: 0,
                mode: 0,
                message: "x".into()
            }),
            3
        );
    }

    #[test]
    fn custom_problem_builds_and_solves() {
        use crate::oracle::sample_rel_l2;
        let text = r#"
problem = "custom"

[[dims]]
name = "x"
kind = "space"
domain = [0.0, 1.0]
elements = 16

[[dims]]
name = "y"
kind = "space"
domain = [0.0, 1.0]
elements = 16

[[custom.operator]]
coeff = -1.0
kinds = ["stiffness", "mass"]

[[custom.operator]]
coeff = -1.0
kinds = ["mass", "stiffness"]

[[custom.source]]
factors = [
  { kind = "sin", freq = 3.141592653589793, scale = -19.739208802178716 },
  { kind = "sin", freq = 3.141592653589793 },
]
"#;
        let cfg = ProblemConfig::parse(text).unwrap();
        let dims = cfg.build_dims().unwrap();
        let setup = build_problem(&cfg, dims).unwrap();
        let (field, _) = solve(
            &setup.op,
            &setup.src,
            &setup.dims,
            &setup.bc,
            &SolverConfig::new(1),
        )
        .unwrap();
        let err = sample_rel_l2(
            &field,
            |p| (PI * p[0]).sin() * (PI * p[1]).sin(),
            50,
        )
        .unwrap();
        assert!(err < 1e-3, "relative L2 {err}");
    }

    #[test]
    fn custom_rejects_bad_kind() {
        let text = r#"
problem = "custom"

[[dims]]
name = "x"
kind = "space"
domain = [0.0, 1.0]
elements = 4

[[custom.operator]]
coeff = 1.0
kinds = ["laplacian"]
"#;
        let cfg = ProblemConfig::parse(text).unwrap();
        let dims = cfg.build_dims().unwrap();
        assert!(matches!(
            build_custom(cfg.custom.as_ref().unwrap(), dims),
            Err(Error::Configuration(_))
        ));
    }
}
