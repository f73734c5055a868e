use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde_json::{json, Map, Value};

use riesz_equilibrium::ball_riesz::{critical_charges, solve_ball, BallRegime};
use riesz_equilibrium::coulomb_ball::{gamma_tilde, solve_coulomb, CoulombRegime};
use riesz_equilibrium::discrete_oracle::{empirical_support, minimize, OracleOpts};
use riesz_equilibrium::geometry::{read_csv, write_csv, CsvMeta, MeasureDensity};
use riesz_equilibrium::iterated_balayage::{solve_segment_riesz, IterationOpts, IterationTrace};
use riesz_equilibrium::log_segment;
use riesz_equilibrium::potentials::{conductor_grid, frostman_check_with, SurfaceLayer};
use riesz_equilibrium::problem::{EquilibriumResult, KernelFamily, ProblemSpec};
use riesz_equilibrium::RieszParams;

use crate::args::{
    Cli, Command, DiscreteArgs, Format, Geometry, KernelArg, NumericArgs, ProblemArgs, SolveArgs, SweepArgs, VerifyArgs,
};
use crate::error::{CliError, CliResult};

/// What the command prints on stdout.
pub type Report = Value;

pub fn run(cli: Cli) -> CliResult<Report> {
    match cli.command {
        Command::Solve(a) => with_jobs(a.numeric.jobs, || cmd_solve(&a)),
        Command::Critical(a) => cmd_critical(&a),
        Command::Sweep(a) => with_jobs(a.solve.numeric.jobs, || cmd_sweep(&a)),
        Command::Verify(a) => with_jobs(a.numeric.jobs, || cmd_verify(&a)),
        Command::Discrete(a) => with_jobs(a.numeric.jobs, || cmd_discrete(&a)),
    }
}

fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> CliResult<T> + Send) -> CliResult<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(f)
}

fn family_name(f: KernelFamily) -> &'static str {
    match f {
        KernelFamily::Riesz(_) => "riesz",
        KernelFamily::Coulomb => "coulomb",
        KernelFamily::Log => "log",
    }
}

/// Problem description with the charge possibly still unknown.
fn spec_for(a: &ProblemArgs, gamma: f64) -> CliResult<ProblemSpec> {
    let need_s = || a.s.ok_or_else(|| CliError::Config("--s is required for the Riesz kernel".into()));
    let (d, family) = match a.geometry {
        Geometry::Segment => {
            if a.d.is_some_and(|d| d != 1) {
                return Err(CliError::Config("the segment has d = 1".into()));
            }
            match a.kernel {
                Some(KernelArg::Log) => (1, KernelFamily::Log),
                Some(KernelArg::Coulomb) => return Err(CliError::Config("use --kernel log on the segment".into())),
                _ => (1, KernelFamily::Riesz(need_s()?)),
            }
        }
        Geometry::Ball => {
            let d = a.d.ok_or_else(|| CliError::Config("--d is required".into()))?;
            match a.kernel {
                Some(KernelArg::Coulomb) => (d, KernelFamily::Coulomb),
                Some(KernelArg::Log) if d == 1 => (1, KernelFamily::Log),
                Some(KernelArg::Log) => {
                    return Err(CliError::Config("the log kernel on the ball is the Coulomb case d = 2".into()))
                }
                _ => (d, KernelFamily::Riesz(need_s()?)),
            }
        }
        Geometry::Coulomb => {
            let d = a.d.ok_or_else(|| CliError::Config("--d is required".into()))?;
            if a.s.is_some() {
                return Err(CliError::Config("the Coulomb exponent is fixed by d".into()));
            }
            (d, KernelFamily::Coulomb)
        }
    };
    Ok(ProblemSpec::new(d, family, gamma, a.height)?)
}

fn gamma_of(a: &ProblemArgs) -> CliResult<f64> {
    a.gamma.ok_or_else(|| CliError::Config("--gamma is required".into()))
}

fn iteration_opts(n: &NumericArgs) -> IterationOpts {
    let mut o = IterationOpts::default();
    if let Some(t) = n.tol {
        o.tol_r = t;
    }
    if let Some(m) = n.max_iter {
        o.max_iter = m;
    }
    if let Some(k) = n.nodes {
        o.collocation.degree = k;
    }
    o
}

/// A solved problem in the shape the outputs need.
pub struct Solved {
    pub spec: ProblemSpec,
    pub regime: String,
    pub equilibrium: Option<EquilibriumResult>,
    pub constants: Map<String, Value>,
    pub trace: Option<IterationTrace>,
}

fn put(m: &mut Map<String, Value>, k: &str, v: impl Into<Value>) {
    m.insert(k.into(), v.into());
}

fn snake<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

pub fn solve(spec: ProblemSpec, iterate: bool, num: &NumericArgs) -> CliResult<Solved> {
    let mut c = Map::new();
    let (g, h) = (spec.gamma, spec.height);
    let (regime, equilibrium, trace) = match spec.family {
        KernelFamily::Coulomb => {
            let r = solve_coulomb(spec.d, g, h)?;
            put(&mut c, "gamma_tilde", r.gamma_tilde);
            put(&mut c, "surface_mass", r.surface_mass);
            if let Some(r0) = r.r0 {
                put(&mut c, "r0", r0);
            }
            let name = match r.regime {
                CoulombRegime::I => "i",
                CoulombRegime::II => "ii",
                CoulombRegime::III => "iii",
            };
            (name.to_string(), Some(r.equilibrium), None)
        }
        KernelFamily::Log => {
            let closed = log_segment::solve_log_segment(g, h)?;
            put(&mut c, "gamma_minus", closed.gamma_minus);
            put(&mut c, "gamma_plus", closed.gamma_plus);
            for (k, v) in
                [("r_star", closed.r_star), ("support_radius", closed.support_radius), ("r_tilde", closed.r_tilde)]
            {
                if let Some(v) = v {
                    put(&mut c, k, v);
                }
            }
            if iterate && g >= 0.0 {
                let seg = solve_segment_riesz(0.0, g, h, &iteration_opts(num))?;
                put(&mut c, "iterated_r_star", seg.trace.r_star);
                put(&mut c, "edge_ratio", seg.edge_ratio);
                (snake(&closed.regime), Some(seg.equilibrium), Some(seg.trace))
            } else {
                (snake(&closed.regime), Some(closed.equilibrium), None)
            }
        }
        KernelFamily::Riesz(s) => {
            let p = RieszParams::robin(spec.d, s)?;
            let (gm, gp) = critical_charges(&p, h)?;
            put(&mut c, "gamma_minus", gm);
            put(&mut c, "gamma_plus", gp);
            if spec.d == 1 && (iterate || g > gp) {
                let seg = solve_segment_riesz(s, g, h, &iteration_opts(num))?;
                put(&mut c, "r_star", seg.trace.r_star);
                put(&mut c, "edge_ratio", seg.edge_ratio);
                if let Some(m) = seg.bal_mass {
                    put(&mut c, "bal_mass", m);
                }
                let regime = if seg.trace.r_star > 0.0 { "repulsive_two_cut" } else { "repulsive_full" };
                (regime.to_string(), Some(seg.equilibrium), Some(seg.trace))
            } else {
                let r = solve_ball(&p, &spec.field())?;
                put(&mut c, "eta_at_origin", r.eta_at_origin);
                if let Some(rg) = r.r_gamma {
                    put(&mut c, "r_gamma", rg);
                }
                let eq =
                    if r.regime == BallRegime::RepulsiveShellConjectured && spec.d > 1 { None } else { r.equilibrium };
                (snake(&r.regime), eq, None)
            }
        }
    };
    Ok(Solved { spec, regime, equilibrium, constants: c, trace })
}

fn problem_json(spec: &ProblemSpec) -> Value {
    let mut v = json!({ "d": spec.d, "family": family_name(spec.family), "gamma": spec.gamma, "height": spec.height });
    if let KernelFamily::Riesz(s) = spec.family {
        v["s"] = json!(s);
    }
    v
}

fn density_json(mu: &MeasureDensity) -> Value {
    let nodes: Vec<[f64; 2]> = mu.nodal().into_iter().map(|(x, v)| [x, v]).collect();
    json!({ "support": mu.support().describe(), "exponents": mu.exponents(), "nodes": nodes })
}

fn result_json(s: &Solved, geometry: Geometry, embed: bool) -> Value {
    let mut v = json!({
        "geometry": geometry_name(geometry),
        "problem": problem_json(&s.spec),
        "regime": s.regime,
        "certified": s.equilibrium.is_some(),
        "constants": s.constants,
    });
    if let Some(eq) = &s.equilibrium {
        v["equilibrium"] = serde_json::to_value(eq.summary()).unwrap_or(Value::Null);
        if embed {
            v["density"] = density_json(&eq.measure);
        }
    }
    if let Some(t) = &s.trace {
        v["trace"] = json!({
            "steps": t.states.len(),
            "converged": t.converged,
            "r_star": t.r_star,
            "c_star": t.c_star,
            "robin_constant": t.robin_constant,
        });
    }
    v
}

fn geometry_name(g: Geometry) -> &'static str {
    match g {
        Geometry::Ball => "ball",
        Geometry::Segment => "segment",
        Geometry::Coulomb => "coulomb",
    }
}

fn csv_meta(s: &Solved, geometry: Geometry, eq: &EquilibriumResult) -> CsvMeta {
    let mut m = CsvMeta::new();
    m.insert("geometry".into(), geometry_name(geometry).into());
    m.insert("d".into(), s.spec.d.to_string());
    m.insert("family".into(), family_name(s.spec.family).into());
    if let KernelFamily::Riesz(x) = s.spec.family {
        m.insert("s".into(), format!("{x}"));
    }
    m.insert("gamma".into(), format!("{}", s.spec.gamma));
    m.insert("height".into(), format!("{}", s.spec.height));
    m.insert("regime".into(), s.regime.clone());
    m.insert("f_q".into(), format!("{:.17e}", eq.f_q));
    if eq.surface_mass > 0.0 {
        m.insert("surface_mass".into(), format!("{:.17e}", eq.surface_mass));
    }
    m
}

fn write_density(path: &Path, s: &Solved, geometry: Geometry, eq: &EquilibriumResult) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_csv(&eq.measure, &csv_meta(s, geometry, eq), &mut w)?;
    w.flush()?;
    Ok(())
}

fn write_json(path: &Path, v: &Value) -> CliResult<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| CliError::Config(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn cmd_solve(a: &SolveArgs) -> CliResult<Report> {
    let spec = spec_for(&a.problem, gamma_of(&a.problem)?)?;
    let solved = solve(spec, a.iterate, &a.numeric)?;
    let out = &a.output.out;
    fs::create_dir_all(out)?;
    let embed = a.output.format == Format::Json;
    let report = result_json(&solved, a.problem.geometry, embed);
    if let (Some(eq), Format::Csv) = (&solved.equilibrium, a.output.format) {
        write_density(&out.join("density.csv"), &solved, a.problem.geometry, eq)?;
    }
    if let Some(t) = &solved.trace {
        let mut w = BufWriter::new(File::create(out.join("trace.jsonl"))?);
        t.write_jsonl(&mut w)?;
        w.flush()?;
    }
    write_json(&out.join("result.json"), &report)?;
    Ok(report)
}

fn critical_json(a: &ProblemArgs) -> CliResult<Map<String, Value>> {
    let spec = spec_for(a, 0.0)?;
    let mut m = Map::new();
    match spec.family {
        KernelFamily::Coulomb => put(&mut m, "gamma_tilde", gamma_tilde(spec.d, spec.height)),
        KernelFamily::Log => {
            put(&mut m, "gamma_minus", log_segment::gamma_minus(spec.height));
            put(&mut m, "gamma_plus", log_segment::gamma_plus(spec.height));
        }
        KernelFamily::Riesz(s) => {
            let (gm, gp) = critical_charges(&RieszParams::robin(spec.d, s)?, spec.height)?;
            put(&mut m, "gamma_minus", gm);
            put(&mut m, "gamma_plus", gp);
        }
    }
    Ok(m)
}

fn cmd_critical(a: &ProblemArgs) -> CliResult<Report> {
    Ok(Value::Object(critical_json(a)?))
}

fn sweep_gammas(a: &SweepArgs) -> CliResult<Vec<f64>> {
    let mut out = Vec::new();
    let named = critical_json(&a.solve.problem)?;
    for tok in a.gammas.iter().map(|t| t.trim()).filter(|t| !t.is_empty()) {
        let g = match named.get(tok).and_then(Value::as_f64) {
            Some(v) => v,
            None => tok.parse().map_err(|_| CliError::Config(format!("bad charge {tok:?}")))?,
        };
        out.push(g);
    }
    match (a.from, a.to, a.steps) {
        (_, _, 0) => {}
        (Some(lo), Some(hi), 1) if lo == hi => out.push(lo),
        (Some(_), Some(_), 1) => return Err(CliError::Config("a range needs at least 2 steps".into())),
        (Some(lo), Some(hi), n) => out.extend((0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)),
        _ => return Err(CliError::Config("--steps needs --from and --to".into())),
    }
    Ok(out)
}

fn cmd_sweep(a: &SweepArgs) -> CliResult<Report> {
    let gammas = sweep_gammas(a)?;
    let geometry = a.solve.problem.geometry;
    let out = &a.solve.output.out;
    fs::create_dir_all(out)?;
    let rows: Vec<(f64, CliResult<(String, Option<EquilibriumResult>, String)>)> = gammas
        .par_iter()
        .enumerate()
        .map(|(k, &g)| {
            let job = || -> CliResult<(String, Option<EquilibriumResult>, String)> {
                let solved = solve(spec_for(&a.solve.problem, g)?, a.solve.iterate, &a.solve.numeric)?;
                let mut file = String::new();
                if let Some(eq) = &solved.equilibrium {
                    file = format!("density_{k:03}.csv");
                    write_density(&out.join(&file), &solved, geometry, eq)?;
                }
                Ok((solved.regime.clone(), solved.equilibrium, file))
            };
            let r = job();
            if let Err(e) = &r {
                log::warn!("charge {g}: {e}");
            }
            (g, r)
        })
        .collect();
    let mut w = BufWriter::new(File::create(out.join("index.csv"))?);
    writeln!(w, "gamma,regime,status,endpoints,f_q,file")?;
    let mut failed = Vec::new();
    for (g, r) in &rows {
        match r {
            Ok((regime, eq, file)) => {
                let (ends, f) = match eq {
                    Some(e) => {
                        let ends: Vec<String> = e.support.endpoints().iter().map(|x| format!("{x:.17e}")).collect();
                        (ends.join(" "), format!("{:.17e}", e.f_q))
                    }
                    None => (String::new(), String::new()),
                };
                writeln!(w, "{g:.17e},{regime},ok,{ends},{f},{file}")?;
            }
            Err(e) => {
                let msg = e.to_string().replace([',', '\n'], ";");
                writeln!(w, "{g:.17e},,failed: {msg},,,")?;
                failed.push(json!({ "gamma": g, "error": e.to_json() }));
            }
        }
    }
    w.flush()?;
    let report = json!({ "count": rows.len(), "failed": failed, "index": out.join("index.csv").display().to_string() });
    if failed.is_empty() {
        Ok(report)
    } else {
        Err(CliError::Solver(riesz_equilibrium::Error::NonConvergence(format!(
            "{} of {} charges failed",
            failed.len(),
            rows.len()
        ))))
    }
}

fn cmd_verify(a: &VerifyArgs) -> CliResult<Report> {
    let spec = spec_for(&a.problem, gamma_of(&a.problem)?)?;
    let tol = a.numeric.tol.unwrap_or(1e-6);
    let (mu, meta) = read_csv(BufReader::new(File::open(&a.input)?))?;
    let surface: f64 = match meta.get("surface_mass") {
        Some(v) => v.parse().map_err(|_| CliError::Config(format!("bad surface_mass {v:?}")))?,
        None => 0.0,
    };
    let expected_d = mu.support().dim;
    if expected_d != spec.d {
        return Err(CliError::Config(format!("file has d = {expected_d}, problem has d = {}", spec.d)));
    }
    let mass = mu.mass() + surface;
    let min_density = mu.nodal().iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let mut grid = conductor_grid(&mu, a.numeric.nodes.unwrap_or(128));
    if surface > 0.0 {
        grid.push(1.0);
    }
    let layers = [SurfaceLayer { radius: 1.0, mass: surface }];
    let frostman = frostman_check_with(&mu, &layers, &spec.field(), &grid);
    let pass = (mass - 1.0).abs() <= tol && !(min_density < -tol) && frostman.passes(tol);
    let report = json!({
        "pass": pass,
        "tol": tol,
        "mass": mass,
        "mass_error": mass - 1.0,
        "min_density": if min_density.is_finite() { json!(min_density) } else { Value::Null },
        "frostman": frostman,
    });
    if pass {
        Ok(report)
    } else {
        Err(CliError::Verification(report))
    }
}

fn cmd_discrete(a: &DiscreteArgs) -> CliResult<Report> {
    let spec = spec_for(&a.problem, gamma_of(&a.problem)?)?;
    let mut opts = OracleOpts { restarts: a.restarts, ..OracleOpts::default() };
    if let Some(m) = a.numeric.max_iter {
        opts.max_iter = m;
    }
    if let Some(t) = a.numeric.tol {
        opts.tol = t;
    }
    let config = minimize(&spec, a.n, a.numeric.seed, &opts)?;
    let est = empirical_support(&config, opts.bootstrap, a.numeric.seed);
    let out = &a.output.out;
    fs::create_dir_all(out)?;
    let mut w = BufWriter::new(File::create(out.join("points.csv"))?);
    config.write_csv(&mut w)?;
    w.flush()?;
    let report = json!({
        "problem": problem_json(&spec),
        "n": config.len(),
        "energy": config.energy,
        "iterations": config.iterations,
        "converged": config.converged,
        "max_projected_force": config.max_projected_force,
        "seed": config.seed,
        "support": est,
    });
    write_json(&out.join("result.json"), &report)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Parser;

    fn problem(args: &[&str]) -> ProblemArgs {
        let mut v = vec!["riesz-eq", "critical"];
        v.extend_from_slice(args);
        match Cli::parse_from(v).command {
            Command::Critical(p) => p,
            _ => unreachable!(),
        }
    }

    #[test]
    fn spec_mapping() {
        let s = spec_for(&problem(&["segment", "--kernel", "log"]), 1.0).unwrap();
        assert_eq!((s.d, s.family), (1, KernelFamily::Log));
        let s = spec_for(&problem(&["ball", "--d", "3", "--s", "2"]), -1.0).unwrap();
        assert_eq!(s.family, KernelFamily::Riesz(2.0));
        let s = spec_for(&problem(&["coulomb", "--d", "2"]), 0.0).unwrap();
        assert_eq!(s.family, KernelFamily::Coulomb);
        assert!(spec_for(&problem(&["ball", "--d", "3", "--s", "1"]), 0.0).is_err());
        assert!(spec_for(&problem(&["ball", "--s", "1"]), 0.0).is_err());
        assert!(spec_for(&problem(&["segment", "--d", "2", "--s", "0.5"]), 0.0).is_err());
        assert!(spec_for(&problem(&["segment"]), 0.0).is_err());
    }

    #[test]
    fn validation_errors_exit_two() {
        let e = spec_for(&problem(&["ball", "--d", "3", "--s", "5"]), 0.0).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let e = spec_for(&problem(&["ball", "--d", "3", "--s", "2", "--height", "-1"]), 0.0).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn named_charges_in_sweeps() {
        let cli = Cli::parse_from(["riesz-eq", "sweep", "segment", "--kernel", "log", "--gammas", "0,gamma_plus,5"]);
        let Command::Sweep(a) = cli.command else { unreachable!() };
        let g = sweep_gammas(&a).unwrap();
        assert_eq!(g.len(), 3);
        assert!((g[1] - (1.0 + 2f64.sqrt())).abs() < 1e-14);
        let cli =
            Cli::parse_from(["riesz-eq", "sweep", "coulomb", "--d", "2", "--from", "-3", "--to", "1", "--steps", "5"]);
        let Command::Sweep(a) = cli.command else { unreachable!() };
        assert_eq!(sweep_gammas(&a).unwrap(), vec![-3.0, -2.0, -1.0, 0.0, 1.0]);
    }
}
