use std::fs::File;
use std::io::BufReader;

use doaopt::generator::assemble;
use doaopt::io::{format_value, read_field, read_generator};
use doaopt::mjp::{estimate, JumpChain};
use doaopt::optimize::{optimize, StopReason};
use doaopt::oracle::oracle_fields;
use doaopt::solve::{
    absorption_probabilities, absorption_times, conditioned_times, kruzkov_values,
    termination_times, AbsorptionProblem, CellField,
};
use doaopt::Generator;
use log::warn;
use rand::{Rng, SeedableRng};

use crate::config::{ConfigError, Loaded, Setup};
use crate::output::{OutputDir, OutputError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Which {
    P,
    T,
    A,
    H,
    Astar,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(doaopt::Error),
    Output(OutputError),
    Mismatch(String),
}

impl From<doaopt::Error> for CliError {
    fn from(e: doaopt::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

impl From<OutputError> for CliError {
    fn from(e: OutputError) -> Self {
        CliError::Output(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Output(e) => write!(f, "{e}"),
            CliError::Mismatch(m) => write!(f, "round trip mismatch: {m}"),
        }
    }
}

impl CliError {
    /// 2 config, 3 linear solver, 4 constraint violation, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        use doaopt::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e {
                E::InvalidGrid(_)
                | E::DimensionMismatch { .. }
                | E::ParamIndex { .. }
                | E::EmptyTarget
                | E::NotAffine
                | E::Parse { .. } => 2,
                E::SingularSystem { .. } | E::Residual { .. } | E::NonFinite { .. } => 3,
                E::ConstraintViolated { .. } => 4,
                E::StaleWorkspace | E::Io(_) => 1,
            },
            CliError::Output(_) | CliError::Mismatch(_) => 1,
        }
    }
}

pub struct Ctx<'a> {
    pub loaded: &'a Loaded,
    pub setup: &'a Setup,
    pub out: &'a OutputDir,
    pub seed: Option<u64>,
}

fn summary(name: &str, f: &CellField) {
    let finite: Vec<f64> = f.values.iter().copied().filter(|v| v.is_finite()).collect();
    let inf = f.values.len() - finite.len();
    if finite.is_empty() {
        println!("{name}: all {} values infinite", f.values.len());
        return;
    }
    let min = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let max = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = finite.iter().sum::<f64>() / finite.len() as f64;
    println!(
        "{name}: min {min:.6} max {max:.6} mean {mean:.6} over {} cells ({inf} infinite)",
        finite.len()
    );
}

fn problem(s: &Setup, g: Generator) -> Result<AbsorptionProblem, CliError> {
    Ok(AbsorptionProblem::new(g, s.target.clone())?)
}

fn sq_norm(b: &[f64]) -> f64 {
    b.iter().map(|v| v * v).sum()
}

pub fn assemble_cmd(cx: &Ctx) -> Result<(), CliError> {
    let s = cx.setup;
    let g = assemble(&s.grid, s.field.as_ref(), &s.b0, &s.opt.quadrature)?;
    let path = cx.out.write_generator("generator.gen", &g)?;
    let max_leak = g.leak().iter().copied().fold(0.0, f64::max);
    println!("n {} nnz {} max leak rate {}", g.n(), g.nnz(), max_leak);
    println!("wrote {}", path.display());
    Ok(())
}

pub fn solve_cmd(cx: &Ctx, which: Which) -> Result<(), CliError> {
    let s = cx.setup;
    let g = assemble(&s.grid, s.field.as_ref(), &s.b0, &s.opt.quadrature)?;
    let prob = problem(s, g)?;
    let vol = s.grid.cell_volume();
    let (name, field) = match which {
        Which::P => {
            let p = absorption_probabilities(&prob)?;
            let mass = p.integrate(vol, None);
            println!(
                "sum m p {mass:.6}, objective {:.6}",
                mass - s.opt.alpha * sq_norm(&s.b0)
            );
            ("p", p)
        }
        Which::T => ("t", termination_times(&prob)?),
        Which::A => {
            let p = absorption_probabilities(&prob)?;
            let a = absorption_times(&prob, &p, s.opt.sure_epsilon)?;
            let finite_off = (0..a.len())
                .filter(|&i| !s.target.contains(i) && a.values[i].is_finite())
                .count();
            if finite_off == 0 {
                warn!("every off-target cell has a = inf: the discretization leaks everywhere; t or astar are informative here");
            }
            ("a", a)
        }
        Which::H => ("h", kruzkov_values(&prob)?),
        Which::Astar => {
            let p = absorption_probabilities(&prob)?;
            ("astar", conditioned_times(&prob, &p, s.condition_floor)?)
        }
    };
    summary(name, &field);
    let path = cx
        .out
        .write_field(&format!("{name}.field"), &s.grid, &field)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn matrix_text(b: &[f64], cols: usize) -> String {
    b.chunks(cols.max(1))
        .map(|row| {
            row.iter()
                .map(|v| format_value(*v))
                .collect::<Vec<_>>()
                .join(" ")
                + "\n"
        })
        .collect()
}

pub fn optimize_cmd(cx: &Ctx) -> Result<(), CliError> {
    let s = cx.setup;
    let out = optimize(
        &s.grid,
        s.field.as_ref(),
        &s.target,
        s.d0.as_ref(),
        &s.opt,
        &s.b0,
    )?;
    let trace = cx.out.write_text("trace.csv", &out.trace.to_csv())?;
    println!("wrote {}", trace.display());
    let params = cx.out.write_text(
        "params.txt",
        &matrix_text(&out.params, cx.loaded.param_columns()),
    )?;
    println!("wrote {}", params.display());
    if let Some(p) = &out.probabilities {
        println!(
            "wrote {}",
            cx.out.write_field("p.field", &s.grid, p)?.display()
        );
    }
    if let Some(t) = &out.times {
        println!(
            "wrote {}",
            cx.out.write_field("t.field", &s.grid, t)?.display()
        );
    }
    if let (Some(first), Some(last)) = (out.trace.first(), out.trace.last()) {
        println!(
            "f(b0) {:.6} -> f(b{}) {:.6}, |Df| {:.3e}, assemblies {}",
            first.objective, last.k, last.objective, last.grad_norm, out.assemblies
        );
    }
    match out.stop {
        StopReason::Converged => println!("stopped: converged"),
        StopReason::MaxIters => println!("stopped: iteration limit"),
        StopReason::Failed(e) => return Err(e.into()),
    }
    Ok(())
}

pub fn oracle_cmd(cx: &Ctx) -> Result<(), CliError> {
    let s = cx.setup;
    let o = oracle_fields(&s.grid, s.field.as_ref(), &s.b0, &s.sim)?;
    println!(
        "oracle DOA volume {:.6}, {} timeouts, {} non-finite",
        o.indicator.integrate(s.grid.cell_volume(), None),
        o.timeouts,
        o.non_finite
    );
    println!(
        "wrote {}",
        cx.out
            .write_field("indicator.field", &s.grid, &o.indicator)?
            .display()
    );
    println!(
        "wrote {}",
        cx.out.write_field("tau.field", &s.grid, &o.time)?.display()
    );
    Ok(())
}

fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

pub fn roundtrip_cmd(cx: &Ctx) -> Result<(), CliError> {
    let s = cx.setup;
    let g = assemble(&s.grid, s.field.as_ref(), &s.b0, &s.opt.quadrature)?;
    let gen_path = cx.out.write_generator("generator.gen", &g)?;
    let g_disk = read_generator(BufReader::new(File::open(&gen_path)?))?;
    if g_disk != g {
        return Err(CliError::Mismatch(
            "generator file differs from the assembled generator".into(),
        ));
    }
    let mem = problem(s, g.clone())?;
    let disk = problem(s, g_disk)?;
    let p = absorption_probabilities(&mem)?;
    let t = termination_times(&mem)?;
    if !same_bits(&p.values, &absorption_probabilities(&disk)?.values) {
        return Err(CliError::Mismatch(
            "p differs between in-memory and re-read generator".into(),
        ));
    }
    if !same_bits(&t.values, &termination_times(&disk)?.values) {
        return Err(CliError::Mismatch(
            "t differs between in-memory and re-read generator".into(),
        ));
    }
    let field_path = cx.out.write_field("p.field", &s.grid, &p)?;
    let (grid2, p2) = read_field(BufReader::new(File::open(&field_path)?))?;
    if grid2 != s.grid || !same_bits(&p2.values, &p.values) {
        return Err(CliError::Mismatch(
            "p field file does not read back bit-identically".into(),
        ));
    }
    println!(
        "round trip ok: generator, p and t are bit-identical ({} cells)",
        g.n()
    );
    if let Some(seed) = cx.seed {
        spot_check(s, &g, &mem, &p, &t, seed)?;
    }
    Ok(())
}

/// Monte-Carlo comparison at a few random free cells, for information.
fn spot_check(
    s: &Setup,
    g: &Generator,
    prob: &AbsorptionProblem,
    p: &CellField,
    t: &CellField,
    seed: u64,
) -> Result<(), CliError> {
    const CELLS: usize = 3;
    const PATHS: usize = 2000;
    let chain = JumpChain::new(g)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let free = prob.free_cells();
    for _ in 0..CELLS.min(free.len()) {
        let c = free[rng.gen_range(0..free.len())];
        let e = estimate(&chain, c, &s.target, PATHS, f64::INFINITY, &mut rng);
        let z_p = if e.p_se > 0.0 {
            (e.p - p.values[c]) / e.p_se
        } else {
            0.0
        };
        let z_t = if e.t_se > 0.0 {
            (e.t - t.values[c]) / e.t_se
        } else {
            0.0
        };
        println!(
            "cell {c}: p {:.4} vs mc {:.4} (z {z_p:+.2}), t {:.4} vs mc {:.4} (z {z_t:+.2}), {PATHS} paths",
            p.values[c], e.p, t.values[c], e.t
        );
    }
    Ok(())
}
