use serde_json::{json, Value};
use youngflow::builtin::{field_by_name, map_by_name};
use youngflow::characteristics::{eval_grid, hamiltonian_by_name};
use youngflow::driver::GENERATOR_VERSION;
use youngflow::io::{load_operator, load_path, save_path};
use youngflow::symmetry::InfinitesimalOptions;
use youngflow::{
    assemble_solution, build_char_field, certified_young_integral, chain_rule_residual, check_conserved_algebraic,
    check_conserved_trajectory, check_infinitesimal_symmetry, check_symmetry_map, check_symmetry_trajectory,
    compose_flows, gen_deterministic, gen_fbm, indefinite_integral, ito_kunita_residual, p_variation, p_variation_over,
    pde_residual, solve_flow, solve_yde, substitution_residual, sup_image_norm, young_integral, CharField,
    DeterministicKind, DeterministicSpec, FbmSpec, FieldSpec, HamiltonianSpec, ResidualReport, SampleDomain,
    SampledPath, ScalarObservable, SeedGrid, SolveConfig, TagRule, TimeDependentMap,
};

use crate::args::*;
use crate::config::{broadcast, parse_list, Config};
use crate::output::{create_dir, emit, print_line, write_json, write_slice};
use crate::CliError;

struct Ctx {
    cfg: Config,
    seed: u64,
    levels: usize,
    tol: Option<f64>,
}

impl Ctx {
    fn new(common: &Common) -> Result<Self, CliError> {
        let cfg = match &common.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        let seed = cfg.pick("seed", common.seed, Some(0))?;
        let levels = cfg.pick("levels", common.levels, Some(4))?;
        let tol = cfg.pick_opt("tol", common.tol)?;
        if levels == 0 {
            return Err(CliError::Usage("--levels must be at least 1, got 0".into()));
        }
        if let Some(t) = tol {
            if !(t > 0.0 && t.is_finite()) {
                return Err(CliError::Usage(format!("--tol must be positive and finite, got {t}")));
            }
        }
        Ok(Self { cfg, seed, levels, tol })
    }

    fn list(&self, key: &str, flag: Option<String>, default: Option<&str>) -> Result<Vec<f64>, CliError> {
        let raw: String = self.cfg.pick(key, flag, default.map(str::to_owned))?;
        parse_list(key, &raw)
    }

    fn solve_config(&self, substeps: Option<usize>) -> Result<SolveConfig, CliError> {
        let cfg = SolveConfig::with_substeps(self.cfg.pick("substeps", substeps, Some(1))?);
        cfg.validate()?;
        Ok(cfg)
    }

    fn field(&self, a: &FieldArgs) -> Result<FieldSpec, CliError> {
        let name: String = self.cfg.pick("field", a.field.clone(), None)?;
        let d = self.cfg.pick("dim", a.dim, Some(1))?;
        Ok(field_by_name(
            &name,
            d,
            self.cfg.pick("field-param", a.field_param, Some(1.0))?,
        )?)
    }

    fn map(&self, key: &str, name: Option<String>, param: Option<f64>, d: usize) -> Result<ScalarObservable, CliError> {
        let name: String = self.cfg.pick(key, name, None)?;
        Ok(map_by_name(&name, d, self.cfg.pick("map-param", param, Some(1.0))?)?)
    }

    fn domain(&self, a: &DomainArgs, d: usize) -> Result<SampleDomain, CliError> {
        let lower = broadcast("lower", self.list("lower", a.lower.clone(), Some("-1"))?, d)?;
        let upper = broadcast("upper", self.list("upper", a.upper.clone(), Some("1"))?, d)?;
        let count = self.cfg.pick("count", a.count, Some(256))?;
        Ok(SampleDomain::new(lower, upper, count, self.seed)?)
    }

    /// Ladder checks pass when converged and, if `--tol` is set, the finest residual is within it.
    fn ladder_pass(&self, r: &ResidualReport) -> bool {
        r.converged && self.tol.is_none_or(|t| r.finest() <= t)
    }
}

fn tag(ctx: &Ctx, flag: Option<TagRule>) -> Result<TagRule, CliError> {
    ctx.cfg.pick("tag", flag, Some(TagRule::Left))
}

fn finish(command: &str, body: Value, pass: bool, what: impl FnOnce() -> String) -> Result<(), CliError> {
    emit(command, body)?;
    if pass {
        Ok(())
    } else {
        Err(CliError::CheckFailed(what()))
    }
}

fn ladder_json(r: &ResidualReport) -> Value {
    serde_json::to_value(r).expect("reports serialize")
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let ctx = Ctx::new(&cli.common)?;
    match cli.command {
        Command::Gen(a) => generate(&ctx, a),
        Command::Pvar(a) => pvar(&ctx, a),
        Command::Integrate(a) => integrate(&ctx, a),
        Command::Solve(a) => solve(&ctx, a),
        Command::Flow(a) => flow(&ctx, a),
        Command::Check(c) => match c {
            CheckCommand::Ito(a) => check_ito(&ctx, a),
            CheckCommand::Chain(a) => check_chain(&ctx, a),
            CheckCommand::Substitution(a) => check_substitution(&ctx, a),
            CheckCommand::Conserved(a) => check_conserved(&ctx, a),
            CheckCommand::Symmetry(a) => check_symmetry(&ctx, a),
            CheckCommand::Infinitesimal(a) => check_infinitesimal(&ctx, a),
        },
        Command::Compose(a) => compose(&ctx, a),
        Command::Pde(c) => match c {
            PdeCommand::Solve(a) => pde_solve(&ctx, a),
            PdeCommand::Residual(a) => pde_check_residual(&ctx, a),
            PdeCommand::Caustic(a) => pde_caustic(&ctx, a),
        },
    }
}

fn parse_vertices(raw: &str) -> Result<Vec<(f64, f64)>, CliError> {
    raw.split(',')
        .map(|pair| {
            let (t, v) = pair
                .split_once(':')
                .ok_or_else(|| CliError::Usage(format!("--vertices: expected t:v, got '{pair}'")))?;
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::Usage(format!("--vertices: cannot parse '{s}' as a number")))
            };
            Ok((num(t)?, num(v)?))
        })
        .collect()
}

fn generate(ctx: &Ctx, a: GenArgs) -> Result<(), CliError> {
    let c = &ctx.cfg;
    let n = c.pick("n", a.n, Some(1024))?;
    let horizon = c.pick("horizon", a.horizon, Some(1.0))?;
    let (path, spec, version) = match a.kind {
        GenKind::Fbm => {
            let spec = FbmSpec::new(c.pick("hurst", a.hurst, None)?, n, horizon, ctx.seed);
            (gen_fbm(&spec)?, json!(spec), GENERATOR_VERSION.to_owned())
        }
        kind => {
            let kind = match kind {
                GenKind::Linear => DeterministicKind::Linear,
                GenKind::Power => DeterministicKind::Power {
                    exponent: c.pick("exponent", a.exponent, None)?,
                },
                GenKind::Sine => DeterministicKind::Sine {
                    frequency: c.pick("frequency", a.frequency, Some(1.0))?,
                    amplitude: c.pick("amplitude", a.amplitude, Some(1.0))?,
                },
                _ => DeterministicKind::Polygonal {
                    vertices: parse_vertices(&c.pick::<String>("vertices", a.vertices.clone(), None)?)?,
                },
            };
            let spec = DeterministicSpec::new(kind, n, horizon);
            let version = format!("youngflow-deterministic/{}", env!("CARGO_PKG_VERSION"));
            (gen_deterministic(&spec)?, json!(spec), version)
        }
    };
    save_path(&a.output, &path)?;
    let sidecar = json!({ "spec": spec, "generator_version": version, "rows": path.len() });
    write_json(&a.output.with_extension("json"), &sidecar)?;
    emit("gen", sidecar)
}

fn pvar(ctx: &Ctx, a: PvarArgs) -> Result<(), CliError> {
    let path = load_path(&a.path)?;
    let p = ctx.cfg.pick("p", a.p, None)?;
    let s = ctx.cfg.pick("s", a.s, Some(path.start_time()))?;
    let t = ctx.cfg.pick("t", a.t, Some(path.end_time()))?;
    let r = if (s, t) == (path.start_time(), path.end_time()) {
        p_variation(&path, p)?
    } else {
        p_variation_over(&path, p, s, t)?
    };
    if !a.json {
        return print_line(&format!("{:?}", r.value));
    }
    emit(
        "pvar",
        json!({
            "p": p,
            "interval": [s, t],
            "value": r.value,
            "optimal_partition": r.optimal_partition.indices,
            "partition_times": r.optimal_partition.times(&path),
        }),
    )
}

fn integrate(ctx: &Ctx, a: IntegrateArgs) -> Result<(), CliError> {
    let z = load_operator(&a.z)?;
    let x = load_path(&a.x)?;
    let s = ctx.cfg.pick("s", a.s, Some(x.start_time()))?;
    let t = ctx.cfg.pick("t", a.t, Some(x.end_time()))?;
    let tag = tag(ctx, a.tag)?;
    let p = ctx.cfg.pick_opt("p", a.p)?;
    let q = ctx.cfg.pick_opt("q", a.q)?;
    let result = match (p, q) {
        (Some(p), Some(q)) => certified_young_integral(&z, &x, s, t, tag, p, q)?,
        (None, None) => young_integral(&z, &x, s, t, tag)?,
        _ => return Err(CliError::Usage("the certificate needs both --p and --q".into())),
    };
    if let Some(out) = &a.output {
        save_path(out, &indefinite_integral(&z, &x, tag)?)?;
    }
    let mut body = serde_json::to_value(&result).expect("results serialize");
    body["interval"] = json!([s, t]);
    body["tag"] = json!(tag);
    emit("integrate", body)
}

fn solve(ctx: &Ctx, a: SolveArgs) -> Result<(), CliError> {
    let f = ctx.field(&a.field)?;
    let x = load_path(&a.path)?;
    let y0 = broadcast("y0", ctx.list("y0", a.y0, Some("1"))?, f.state_dim())?;
    let cfg = ctx.solve_config(a.substeps)?;
    let y = solve_yde(&f, &x, &y0, &cfg)?;
    if let Some(out) = &a.output {
        save_path(out, &y)?;
    }
    emit(
        "solve",
        json!({
            "y0": y0,
            "final_time": y.end_time(),
            "final_state": y.last(),
            "points": y.len(),
            "substeps_per_interval": cfg.substeps_per_interval,
        }),
    )
}

fn parse_points(raw: &str, d: usize) -> Result<Vec<Vec<f64>>, CliError> {
    raw.split(';')
        .map(|p| broadcast("points", parse_list("points", p)?, d))
        .collect()
}

fn flow(ctx: &Ctx, a: FlowArgs) -> Result<(), CliError> {
    let f = ctx.field(&a.field)?;
    let x = load_path(&a.path)?;
    let raw: String = ctx.cfg.pick("points", a.points, None)?;
    let points = parse_points(&raw, f.state_dim())?;
    let cfg = ctx.solve_config(a.substeps)?;
    let map = solve_flow(&f, &x, &points, &cfg)?;
    create_dir(&a.output)?;
    let mut files = Vec::new();
    for (k, tr) in map.trajectories.iter().enumerate() {
        let name = format!("point_{k:03}.csv");
        save_path(a.output.join(&name), tr)?;
        files.push(name);
    }
    let jacobians: Vec<Vec<Vec<f64>>> = map
        .jacobians
        .iter()
        .map(|js| {
            let j = js.last().expect("jacobian per grid point");
            j.row_iter().map(|r| r.iter().copied().collect()).collect()
        })
        .collect();
    let index = json!({
        "points": points,
        "files": files,
        "alive_until": map.alive_until,
        "final_jacobians": jacobians,
        "substeps_per_interval": cfg.substeps_per_interval,
    });
    write_json(&a.output.join("index.json"), &index)?;
    emit("flow", index)
}

fn ladder_result(ctx: &Ctx, command: &str, r: &ResidualReport, extra: Value) -> Result<(), CliError> {
    let pass = ctx.ladder_pass(r);
    let mut body = json!({ "report": ladder_json(r), "pass": pass, "tol": ctx.tol });
    if let Value::Object(m) = extra {
        body.as_object_mut().expect("object").extend(m);
    }
    finish(command, body, pass, || {
        format!("finest residual {:e}, converged = {}", r.finest(), r.converged)
    })
}

fn check_ito(ctx: &Ctx, a: ItoArgs) -> Result<(), CliError> {
    let z = load_path(&a.z)?;
    let x = load_path(&a.x)?;
    let d = ctx.cfg.pick("dim", a.dim, Some(x.dim()))?;
    let g0 = ctx.map("g", a.g, a.map_param, d)?;
    let g = match ctx.cfg.pick_opt::<String>("rate", a.rate)? {
        Some(name) => {
            let h = field_by_name(&name, d, ctx.cfg.pick("rate-param", a.rate_param, Some(1.0))?)?;
            TimeDependentMap::new(g0, h)?
        }
        None => TimeDependentMap::time_independent(g0),
    };
    let r = ito_kunita_residual(&g, &z, &x, ctx.levels, tag(ctx, a.tag)?)?;
    ladder_result(ctx, "check ito", &r, json!({}))
}

fn check_chain(ctx: &Ctx, a: ChainArgs) -> Result<(), CliError> {
    let z = load_path(&a.path)?;
    let g = ctx.map("g", a.g, a.map_param, z.dim())?;
    let r = chain_rule_residual(&g, &z, ctx.levels, tag(ctx, a.tag)?)?;
    let scale = sup_image_norm(&g, &z);
    let relative = if scale > 0.0 { r.finest() / scale } else { r.finest() };
    ladder_result(ctx, "check chain", &r, json!({ "relative_finest": relative }))
}

fn check_substitution(ctx: &Ctx, a: SubstitutionArgs) -> Result<(), CliError> {
    let g = load_operator(&a.g)?;
    let f = load_operator(&a.f)?;
    let z = load_path(&a.z)?;
    let s = ctx.cfg.pick("s", a.s, Some(z.start_time()))?;
    let t = ctx.cfg.pick("t", a.t, Some(z.end_time()))?;
    let r = substitution_residual(&g, &f, &z, s, t, ctx.levels, tag(ctx, a.tag)?)?;
    ladder_result(ctx, "check substitution", &r, json!({ "interval": [s, t] }))
}

fn sample_result(command: &str, report: youngflow::CheckReport) -> Result<(), CliError> {
    let pass = report.pass;
    let what = format!(
        "max residual {:e} at {:?} exceeds {:e}",
        report.max_residual, report.arg_max_point, report.tol
    );
    let body = json!({ "report": report, "pass": pass });
    finish(command, body, pass, || what)
}

fn trajectory_inputs(
    ctx: &Ctx,
    t: TrajectoryArgs,
    d: usize,
) -> Result<Option<(SampledPath, Vec<f64>, SolveConfig)>, CliError> {
    let Some(path) = ctx.cfg.pick_opt("path", t.path)? else {
        return Ok(None);
    };
    let x = load_path(&path)?;
    let y0 = broadcast("y0", ctx.list("y0", t.y0, Some("1"))?, d)?;
    Ok(Some((x, y0, ctx.solve_config(t.substeps)?)))
}

fn check_conserved(ctx: &Ctx, a: ConservedArgs) -> Result<(), CliError> {
    let f = ctx.field(&a.field)?;
    let d = f.state_dim();
    let obs = ctx.map("obs", a.obs, a.map_param, d)?;
    match trajectory_inputs(ctx, a.trajectory, d)? {
        Some((x, y0, cfg)) => {
            let r = check_conserved_trajectory(&obs, &f, &x, &y0, &cfg, ctx.levels)?;
            ladder_result(ctx, "check conserved", &r, json!({ "mode": "trajectory" }))
        }
        None => sample_result(
            "check conserved",
            check_conserved_algebraic(&obs, &f, &ctx.domain(&a.domain, d)?, ctx.tol)?,
        ),
    }
}

fn check_symmetry(ctx: &Ctx, a: SymmetryArgs) -> Result<(), CliError> {
    let f = ctx.field(&a.field)?;
    let d = f.state_dim();
    let phi = ctx.map("map", a.map, a.map_param, d)?;
    match trajectory_inputs(ctx, a.trajectory, d)? {
        Some((x, y0, cfg)) => {
            let r = check_symmetry_trajectory(&phi, &f, &x, &y0, &cfg, ctx.levels)?;
            ladder_result(ctx, "check symmetry", &r, json!({ "mode": "trajectory" }))
        }
        None => sample_result(
            "check symmetry",
            check_symmetry_map(&phi, &f, &ctx.domain(&a.domain, d)?, ctx.tol)?,
        ),
    }
}

fn check_infinitesimal(ctx: &Ctx, a: InfinitesimalArgs) -> Result<(), CliError> {
    let f = ctx.field(&a.field)?;
    let d = f.state_dim();
    let g_name: String = ctx.cfg.pick("g", a.g, None)?;
    let g = field_by_name(&g_name, d, ctx.cfg.pick("g-param", a.g_param, Some(1.0))?)?;
    let times = ctx.list("flow-times", a.flow_times, Some("0.5"))?;
    let defaults = InfinitesimalOptions::default();
    let opts = InfinitesimalOptions {
        algebraic_tol: ctx.tol,
        flow_tol: ctx.cfg.pick("flow-tol", a.flow_tol, Some(defaults.flow_tol))?,
        flow_steps: ctx.cfg.pick("flow-steps", a.flow_steps, Some(defaults.flow_steps))?,
    };
    let report = check_infinitesimal_symmetry(&g, &f, &ctx.domain(&a.domain, d)?, &times, &opts)?;
    sample_result("check infinitesimal", report)
}

fn compose(ctx: &Ctx, a: ComposeArgs) -> Result<(), CliError> {
    let u = load_path(&a.u)?;
    let x = load_path(&a.x)?;
    let d = ctx.cfg.pick("dim", a.dim, Some(1))?;
    let f_name: String = ctx.cfg.pick("f", a.f, None)?;
    let g_name: String = ctx.cfg.pick("g", a.g, None)?;
    let f = field_by_name(&f_name, d, ctx.cfg.pick("f-param", a.f_param, Some(1.0))?)?;
    let g = field_by_name(&g_name, d, ctx.cfg.pick("g-param", a.g_param, Some(1.0))?)?;
    let y0 = broadcast("y0", ctx.list("y0", a.y0, Some("1"))?, d)?;
    let cfg = ctx.solve_config(a.substeps)?;
    let c = compose_flows(&f, &u, &g, &x, &y0, &cfg, ctx.levels)?;
    if let Some(dir) = &a.output {
        create_dir(dir)?;
        save_path(dir.join("z_comp.csv"), &c.z_comp)?;
        save_path(dir.join("z_dir.csv"), &c.z_dir)?;
    }
    let extra = json!({ "final_comp": c.z_comp.last(), "final_dir": c.z_dir.last() });
    ladder_result(ctx, "compose", &c.report, extra)
}

struct PdeSetup {
    h: HamiltonianSpec,
    phi: ScalarObservable,
    x: SampledPath,
    field: CharField,
    points: Vec<Vec<f64>>,
}

fn pde_setup(ctx: &Ctx, a: PdeArgs) -> Result<PdeSetup, CliError> {
    let c = &ctx.cfg;
    let x = load_path(&a.path)?;
    let d = c.pick("dim", a.dim, Some(1))?;
    let name: String = c.pick("hamiltonian", a.hamiltonian, None)?;
    let h = hamiltonian_by_name(&name, d, c.pick("k", a.k, Some(1.0))?)?;
    let phi_name: String = c.pick("phi", a.phi, Some("sine".into()))?;
    let phi = map_by_name(&phi_name, d, c.pick("phi-param", a.phi_param, Some(1.0))?)?;
    let seeds = SeedGrid::new(
        broadcast("seed-lower", ctx.list("seed-lower", a.seed_lower, Some("-4"))?, d)?,
        broadcast("seed-upper", ctx.list("seed-upper", a.seed_upper, Some("4"))?, d)?,
        vec![c.pick("seed-count", a.seed_count, Some(101))?; d],
    )?;
    let lower = broadcast("eval-lower", ctx.list("eval-lower", a.eval_lower, Some("-1"))?, d)?;
    let upper = broadcast("eval-upper", ctx.list("eval-upper", a.eval_upper, Some("1"))?, d)?;
    let points = eval_grid(&lower, &upper, &vec![c.pick("eval-count", a.eval_count, Some(21))?; d])?;
    let cfg = ctx.solve_config(a.substeps)?;
    let field = build_char_field(&h, &x, &phi, &seeds, &cfg)?;
    Ok(PdeSetup {
        h,
        phi,
        x,
        field,
        points,
    })
}

fn tau_map(field: &CharField) -> Value {
    let seeds = field.seeds.points();
    Value::Array(
        seeds
            .iter()
            .zip(field.tau.iter().zip(&field.terminated))
            .map(|(s, (t, term))| json!({ "seed": s, "tau": t, "terminated": term }))
            .collect(),
    )
}

fn pde_solve(ctx: &Ctx, a: PdeSolveArgs) -> Result<(), CliError> {
    let every = ctx.cfg.pick("every", a.every, Some(1))?;
    let setup = pde_setup(ctx, a.pde)?;
    let sol = assemble_solution(&setup.field, &setup.points, every)?;
    create_dir(&a.output)?;
    let mut files = Vec::new();
    for k in 0..sol.times.len() {
        let name = format!("slice_{k:05}.csv");
        write_slice(&a.output.join(&name), &sol, k)?;
        files.push(name);
    }
    let sigma: Vec<Value> = sol
        .points
        .iter()
        .zip(&sol.valid_until)
        .map(|(p, v)| json!({ "point": p, "valid_until": v }))
        .collect();
    let index = json!({
        "times": sol.times,
        "files": files,
        "tau_map": tau_map(&setup.field),
        "sigma_proxy": sigma,
    });
    write_json(&a.output.join("index.json"), &index)?;
    emit("pde solve", index)
}

fn pde_check_residual(ctx: &Ctx, a: PdeArgs) -> Result<(), CliError> {
    let setup = pde_setup(ctx, a)?;
    let sol = assemble_solution(&setup.field, &setup.points, 1)?;
    let r = pde_residual(&sol, &setup.h, &setup.x, &setup.phi, ctx.levels)?;
    ladder_result(ctx, "pde residual", &r, json!({}))
}

fn pde_caustic(ctx: &Ctx, a: PdeArgs) -> Result<(), CliError> {
    let setup = pde_setup(ctx, a)?;
    let horizon = setup.x.end_time();
    let first = setup.field.tau.iter().copied().fold(horizon, f64::min);
    emit(
        "pde caustic",
        json!({ "horizon": horizon, "earliest_tau": first, "tau_map": tau_map(&setup.field) }),
    )
}
