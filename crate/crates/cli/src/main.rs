//! `absdyn`: experiment runner for the random map `x ↦ |x − θ|`.
//!
//! Every subcommand writes one CSV (plus, for some, a JSON artifact) into
//! `--out`, echoing its configuration as `# key=value` lines above the
//! header row. Failures print a JSON record on stderr and exit with
//! 3 (I/O), 4 (invalid measure), 5 (tolerance), 6 (caps/numerical) or 1.

mod fail;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use absdyn_core::drift::{drift_profile, verify_drift_condition};
use absdyn_core::measures::{Measure, Measure1D};
use absdyn_core::metric::{abc_check, decrease_experiment, wasserstein_p, AbcOutcome};
use absdyn_core::orbits::{epsilon_cover, lattice_test, on_lattice, random_orbit, reach_set};
use absdyn_core::selfmap::{
    boundary_modulus_check, circle_samples, find_fixed_points, geometric_family, scan, self_iterate, FixedPointSearch,
    LatticePMF,
};
use absdyn_core::transfer::{iterate_push, PushOptions};
use clap::{Args, Parser, Subcommand};

use fail::{Failure, Kind, Outcome};
use io::{load_measure, load_pmf, num, write_atomic, GridSpec, Table};

#[derive(Parser, Debug)]
#[command(name = "absdyn", version, about = "Experiments with the random map x -> |x - theta|")]
struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Reject lossy representation conversions.
    #[arg(long, global = true)]
    strict: bool,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Upper end of the grid used by `exp:`/`unif:` shorthands.
    #[arg(long, global = true, default_value_t = 30.0)]
    grid_max: f64,
    /// Cells of the grid used by `exp:`/`unif:` shorthands.
    #[arg(long, global = true, default_value_t = 4096)]
    grid_n: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Simulate one trajectory.
    Orbit(OrbitArgs),
    /// Lattice test for a finite set of translations plus its reach set.
    Lattice(LatticeArgs),
    /// Sample the drift function U.
    Drift(DriftArgs),
    /// Iterate the averaged pushforward.
    Iterate(IterateArgs),
    /// W_p between two measures.
    Wasserstein(WassersteinArgs),
    /// W_p between the iterates of two starting measures.
    Contract(ContractArgs),
    /// Probe the (A,B,C) interval condition.
    Abc(AbcArgs),
    /// Iterate the self-map, or search for lattice fixed points.
    Selfmap(SelfmapArgs),
    /// Sample g = 2f - 1 on the unit circle.
    Genfun(GenfunArgs),
    /// Scan finite Blaschke products for fixed points.
    Scan(ScanArgs),
}

/// Measure arguments accept a JSON file or `exp:RATE`, `unif:A:B`,
/// `dirac:X`, `atoms:X@W,X@W,...`.
#[derive(Args, Debug)]
struct OrbitArgs {
    #[arg(long)]
    mu: String,
    #[arg(long, default_value_t = 0.0)]
    x0: f64,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
}

#[derive(Args, Debug)]
struct LatticeArgs {
    /// Comma-separated translations.
    #[arg(long, value_delimiter = ',', required = true)]
    thetas: Vec<f64>,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 0.0)]
    x0: f64,
    #[arg(long, default_value_t = 20)]
    depth: usize,
    /// Also report whether the reach set ε-covers [0, max θ).
    #[arg(long)]
    eps: Option<f64>,
}

#[derive(Args, Debug)]
struct DriftArgs {
    #[arg(long)]
    mu: String,
    #[arg(long, default_value_t = 6.0)]
    ymax: f64,
    #[arg(long, default_value_t = 512)]
    n: usize,
    /// Verify U(y) <= y - eps outside [0, c-hi]; failure exits with 5.
    #[arg(long, requires = "c_hi")]
    verify_eps: Option<f64>,
    #[arg(long)]
    c_hi: Option<f64>,
}

#[derive(Args, Debug)]
struct IterateArgs {
    #[arg(long)]
    pi: String,
    #[arg(long)]
    mu: String,
    #[arg(long, default_value_t = 10)]
    steps: usize,
    /// Spread excess grid tail mass instead of failing.
    #[arg(long)]
    renormalize_tail: bool,
}

#[derive(Args, Debug)]
struct WassersteinArgs {
    #[arg(long)]
    a: String,
    #[arg(long)]
    b: String,
    #[arg(long, default_value_t = 1.0)]
    p: f64,
}

#[derive(Args, Debug)]
struct ContractArgs {
    #[arg(long)]
    mu: String,
    #[arg(long)]
    rho: String,
    #[arg(long)]
    pi: String,
    #[arg(long, default_value_t = 10)]
    steps: usize,
    #[arg(long, default_value_t = 1.0)]
    p: f64,
}

#[derive(Args, Debug)]
struct AbcArgs {
    #[arg(long)]
    mu: String,
    #[arg(long)]
    a: f64,
    #[arg(long)]
    b: f64,
    #[arg(long)]
    c: f64,
    #[arg(long, default_value_t = 1000)]
    probes: usize,
    /// Also try the candidate L = x + shift on wide intervals.
    #[arg(long)]
    shift: Option<f64>,
}

#[derive(Args, Debug)]
struct SelfmapArgs {
    /// Starting measure (co-rational atoms or a grid); omit with --search.
    #[arg(long, required_unless_present = "search")]
    mu: Option<String>,
    #[arg(long, default_value_t = 10)]
    steps: usize,
    /// Search for fixed points of the lattice self-map instead.
    #[arg(long)]
    search: bool,
    #[arg(long, default_value_t = 8)]
    support: usize,
    #[arg(long, default_value_t = 64)]
    starts: usize,
    #[arg(long, default_value_t = 1.0)]
    damping: f64,
}

#[derive(Args, Debug)]
struct GenfunArgs {
    /// PMF file `{"probs": [...]}`.
    #[arg(long, conflicts_with = "geometric", required_unless_present = "geometric")]
    pmf: Option<PathBuf>,
    /// Use the geometric fixed point with this q.
    #[arg(long)]
    geometric: Option<f64>,
    #[arg(long, default_value_t = 200)]
    cutoff: usize,
    #[arg(long, default_value_t = 256)]
    m: usize,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

#[derive(Args, Debug)]
struct ScanArgs {
    #[arg(long, default_value_t = 1)]
    factors: usize,
    #[arg(long, default_value_t = 8)]
    grid: usize,
    #[arg(long, default_value_t = 64)]
    len: usize,
}

struct Ctx {
    seed: u64,
    strict: bool,
    out: PathBuf,
    grid: GridSpec,
}

impl Ctx {
    fn measure(&self, arg: &str) -> Outcome<Measure> {
        load_measure(arg, self.grid)
    }

    fn push_opts(&self) -> PushOptions {
        PushOptions { strict: self.strict, ..Default::default() }
    }

    fn table(&self, name: &str, cmd: &str, columns: &[&'static str]) -> Table {
        let mut t = Table::new(name, columns);
        t.meta("command", cmd).meta("seed", self.seed).meta("strict", self.strict);
        t
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("{}", serde_json::to_string(&f).unwrap_or_else(|_| f.message.clone()));
            ExitCode::from(f.code as u8)
        }
    }
}

fn run(cli: Cli) -> Outcome<Vec<PathBuf>> {
    set_threads(cli.threads)?;
    let ctx =
        Ctx { seed: cli.seed, strict: cli.strict, out: cli.out, grid: GridSpec { x_max: cli.grid_max, n: cli.grid_n } };
    match cli.cmd {
        Cmd::Orbit(a) => orbit(&ctx, a),
        Cmd::Lattice(a) => lattice(&ctx, a),
        Cmd::Drift(a) => drift(&ctx, a),
        Cmd::Iterate(a) => iterate(&ctx, a),
        Cmd::Wasserstein(a) => wasserstein(&ctx, a),
        Cmd::Contract(a) => contract(&ctx, a),
        Cmd::Abc(a) => abc(&ctx, a),
        Cmd::Selfmap(a) => selfmap(&ctx, a),
        Cmd::Genfun(a) => genfun(&ctx, a),
        Cmd::Scan(a) => scan_cmd(&ctx, a),
    }
}

#[cfg(feature = "parallel")]
fn set_threads(n: usize) -> Outcome<()> {
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::new(Kind::Other, format!("thread pool: {e}")))?;
    }
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn set_threads(n: usize) -> Outcome<()> {
    if n > 1 {
        log::warn!("built without the parallel feature; --threads {n} ignored");
    }
    Ok(())
}

fn orbit(ctx: &Ctx, a: OrbitArgs) -> Outcome<Vec<PathBuf>> {
    let mu = ctx.measure(&a.mu)?;
    let rec = random_orbit(a.x0, &mu, a.steps, ctx.seed)?;
    let mut t = ctx.table("orbit", "orbit", &["step", "x", "theta"]);
    t.meta("mu", &a.mu).meta("x0", a.x0).meta("steps", a.steps);
    for (k, x) in rec.points.iter().enumerate() {
        let theta = if k == 0 { String::new() } else { num(rec.theta_draws[k - 1]) };
        t.row(vec![k.to_string(), num(*x), theta]);
    }
    Ok(vec![t.write(&ctx.out)?])
}

fn lattice(ctx: &Ctx, a: LatticeArgs) -> Outcome<Vec<PathBuf>> {
    let res = lattice_test(&a.thetas, a.tol)?;
    let pts = reach_set(a.x0, &a.thetas, a.depth, a.tol)?;
    let list = a.thetas.iter().map(|v| num(*v)).collect::<Vec<_>>().join(" ");
    let mut t = ctx.table("lattice", "lattice", &["index", "x", "on_lattice"]);
    t.meta("thetas", list).meta("tol", a.tol).meta("x0", a.x0).meta("depth", a.depth);
    t.meta("is_lattice", res.is_lattice).meta("step", res.step.map(num).unwrap_or_default());
    if let Some(eps) = a.eps {
        let hi = a.thetas.iter().copied().fold(0.0, f64::max);
        t.meta("eps", eps).meta("covers", epsilon_cover(&pts, 0.0, hi, eps)?);
    }
    for (i, &x) in pts.iter().enumerate() {
        let on = res.step.map(|w| on_lattice(&[x], a.x0, w, a.tol));
        t.row(vec![i.to_string(), num(x), on.map(|b| b.to_string()).unwrap_or_default()]);
    }
    Ok(vec![t.write(&ctx.out)?])
}

fn drift(ctx: &Ctx, a: DriftArgs) -> Outcome<Vec<PathBuf>> {
    let mu = ctx.measure(&a.mu)?;
    let prof = drift_profile(&mu, a.ymax, a.n)?;
    let mut t = ctx.table("drift", "drift", &["y", "U", "y_minus_E", "identity"]);
    t.meta("mu", &a.mu).meta("ymax", a.ymax).meta("n", a.n);
    t.meta("mean", num(prof.mean)).meta("median", num(prof.median)).meta("y0", num(prof.y0));
    t.meta("alpha_star", num(prof.alpha_star)).meta("y_star", num(prof.y_star));
    if let (Some(eps), Some(c_hi)) = (a.verify_eps, a.c_hi) {
        let rep = verify_drift_condition(&mu, eps, c_hi)?;
        if !rep.passed {
            let at = rep.violation.map(num).unwrap_or_else(|| "none".into());
            return Err(Failure::new(
                Kind::Tolerance,
                format!("drift condition fails for eps={eps}, C=[0,{c_hi}]: first violation at y={at}, b={}", rep.b),
            ));
        }
        t.meta("eps", eps).meta("c_hi", c_hi).meta("b", num(rep.b));
    }
    for (y, u) in prof.grid.iter().zip(&prof.u_values) {
        t.row(vec![num(*y), num(*u), num(y - prof.mean), num(*y)]);
    }
    Ok(vec![t.write(&ctx.out)?])
}

fn iterate(ctx: &Ctx, a: IterateArgs) -> Outcome<Vec<PathBuf>> {
    let (pi, mu) = (ctx.measure(&a.pi)?, ctx.measure(&a.mu)?);
    let opts = PushOptions { renormalize_tail: a.renormalize_tail, ..ctx.push_opts() };
    let seq = iterate_push(&pi, &mu, a.steps, &opts)?;
    let mut t = ctx.table("iterate", "iterate", &["k", "mean", "median", "W1_to_mu"]);
    t.meta("pi", &a.pi).meta("mu", &a.mu).meta("steps", a.steps).meta("renormalize_tail", a.renormalize_tail);
    for (k, m) in seq.iter().enumerate() {
        let prof = m.moments()?;
        t.row(vec![k.to_string(), num(prof.mean), num(prof.median), num(wasserstein_p(m, &mu, 1.0)?)]);
    }
    let last = seq.last().expect("iterate_push returns the start measure");
    let json = serde_json::to_vec_pretty(last).map_err(|e| Failure::new(Kind::Other, e.to_string()))?;
    Ok(vec![t.write(&ctx.out)?, write_atomic(&ctx.out, "iterate_final.json", &json)?])
}

fn wasserstein(ctx: &Ctx, a: WassersteinArgs) -> Outcome<Vec<PathBuf>> {
    let w = wasserstein_p(&ctx.measure(&a.a)?, &ctx.measure(&a.b)?, a.p)?;
    let mut t = ctx.table("wasserstein", "wasserstein", &["p", "Wp"]);
    t.meta("a", &a.a).meta("b", &a.b);
    t.row(vec![num(a.p), num(w)]);
    Ok(vec![t.write(&ctx.out)?])
}

/// Least-squares slope of `ln W_k` on `ln k` over `k = 1..`, for positive terms.
fn loglog_slope(seq: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        seq.iter().enumerate().skip(1).filter(|(_, &w)| w > 0.0).map(|(k, &w)| ((k as f64).ln(), w.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

fn contract(ctx: &Ctx, a: ContractArgs) -> Outcome<Vec<PathBuf>> {
    let (mu, rho, pi) = (ctx.measure(&a.mu)?, ctx.measure(&a.rho)?, ctx.measure(&a.pi)?);
    let seq = decrease_experiment(&rho, &pi, &mu, a.p, a.steps, &ctx.push_opts())?;
    let mut t = ctx.table("rates", "contract", &["k", "Wp", "slope_so_far"]);
    t.meta("mu", &a.mu).meta("rho", &a.rho).meta("pi", &a.pi).meta("steps", a.steps).meta("p", a.p);
    for (k, w) in seq.iter().enumerate() {
        let slope = loglog_slope(&seq[..=k]).map(num).unwrap_or_default();
        t.row(vec![k.to_string(), num(*w), slope]);
    }
    Ok(vec![t.write(&ctx.out)?])
}

fn abc(ctx: &Ctx, a: AbcArgs) -> Outcome<Vec<PathBuf>> {
    let mu = ctx.measure(&a.mu)?;
    let witness = match abc_check(&mu, a.a, a.b, a.c, a.probes, ctx.seed, a.shift)? {
        AbcOutcome::Witness(w) => w,
        AbcOutcome::Violated { probe, index } => {
            return Err(Failure::new(
                Kind::Tolerance,
                format!(
                    "(A,B,C) condition fails at probe {index}: interval ({}, {}), geometric margin {}, mass margin {}",
                    probe.x, probe.y, probe.margin_geom, probe.margin_mass
                ),
            ))
        }
    };
    let mut t = ctx.table("abc", "abc", &["x", "y", "L", "U", "margin_geom", "margin_mass"]);
    t.meta("mu", &a.mu).meta("A", a.a).meta("B", a.b).meta("C", a.c).meta("probes", a.probes);
    t.meta("shift", a.shift.map(num).unwrap_or_default()).meta("kappa", num(witness.kappa));
    for p in &witness.interval_probe {
        t.row(vec![num(p.x), num(p.y), num(p.l), num(p.u), num(p.margin_geom), num(p.margin_mass)]);
    }
    Ok(vec![t.write(&ctx.out)?])
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(";")
}

fn selfmap(ctx: &Ctx, a: SelfmapArgs) -> Outcome<Vec<PathBuf>> {
    if a.search {
        let cfg = FixedPointSearch {
            starts: a.starts,
            support: a.support,
            damping: a.damping,
            seed: ctx.seed,
            ..Default::default()
        };
        let found = find_fixed_points(&cfg)?;
        let mut t = ctx.table("fixed_points", "selfmap --search", &["index", "residual", "iterations", "probs"]);
        t.meta("support", a.support).meta("starts", a.starts).meta("damping", a.damping);
        for (i, fp) in found.iter().enumerate() {
            t.row(vec![i.to_string(), num(fp.residual), fp.iterations.to_string(), join(fp.pmf.probs())]);
        }
        return Ok(vec![t.write(&ctx.out)?]);
    }
    let arg = a.mu.as_deref().expect("clap enforces --mu without --search");
    let mu = ctx.measure(arg)?;
    let steps = self_iterate(&mu, a.steps, &ctx.push_opts())?;
    let mut t = ctx.table("selfmap", "selfmap", &["k", "mean", "w1_to_family", "family_param"]);
    t.meta("mu", arg).meta("steps", a.steps);
    for (k, s) in steps.iter().enumerate() {
        t.row(vec![k.to_string(), num(s.measure.mean()?), num(s.w1_to_family), num(s.family_param)]);
    }
    Ok(vec![t.write(&ctx.out)?])
}

fn genfun(ctx: &Ctx, a: GenfunArgs) -> Outcome<Vec<PathBuf>> {
    let (pmf, source): (LatticePMF, String) = match (&a.pmf, a.geometric) {
        (Some(path), _) => (load_pmf(path)?, path.display().to_string()),
        (None, Some(q)) => (geometric_family(q, a.cutoff)?, format!("geometric:{q}")),
        (None, None) => unreachable!("clap requires --pmf or --geometric"),
    };
    let check = boundary_modulus_check(&pmf, a.m, a.tol)?;
    let mut t = ctx.table("genfun", "genfun", &["phi", "abs_g", "re_g", "im_g"]);
    t.meta("pmf", source).meta("cutoff", a.cutoff).meta("m", a.m).meta("tol", a.tol);
    t.meta("max_deviation", num(check.max_deviation)).meta("budget", num(check.budget)).meta("passed", check.passed);
    for (phi, g) in circle_samples(&pmf, a.m) {
        t.row(vec![num(phi), num(g.norm()), num(g.re), num(g.im)]);
    }
    Ok(vec![t.write(&ctx.out)?])
}

fn scan_cmd(ctx: &Ctx, a: ScanArgs) -> Outcome<Vec<PathBuf>> {
    let recs = scan(a.factors, a.grid, a.len)?;
    let mut t = ctx.table("scan", "scan", &["zeros", "min_coeff", "nonnegative", "hat_residual", "truncated_mass"]);
    t.meta("factors", a.factors).meta("grid", a.grid).meta("len", a.len);
    for r in &recs {
        let zeros = r.zeros.iter().map(|(re, im)| format!("{}{:+}i", num(*re), im)).collect::<Vec<_>>().join(";");
        t.row(vec![zeros, num(r.min_coeff), r.nonnegative.to_string(), num(r.hat_residual), num(r.truncated_mass)]);
    }
    log::info!(
        "{} of {} candidates have nonnegative coefficients",
        recs.iter().filter(|r| r.nonnegative).count(),
        t.len()
    );
    Ok(vec![t.write(&ctx.out)?])
}
