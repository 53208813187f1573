use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use binlatent::baselines::{als, oracle_ls, AlsConfig};
use binlatent::datagen::{self, HiddenLaw, InstanceSpec, Observation, WeightLaw};
use binlatent::eval::aligned_error;
use binlatent::io::{read_matrix, read_tensor, write_csv_matrix, write_matrix};
use binlatent::learn::{
    algorithm1, algorithm2, check_conditions, wls_refine, ModelEstimate, MomentRepair, NoiselessConfig, NoisyConfig,
    SelectionRule,
};
use binlatent::moments::{empirical_moments, estimate_d_sigma, latent_population_moments, BinaryDistribution, DSigmaOptions};
use binlatent::{enumerate_eigenpairs, SolveMode, SolverConfig};
use clap::ValueEnum;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde_json::json;

use crate::config::config_hash;
use crate::{
    ConditionsArgs, EstimatorArgs, EvalArgs, Format, GenerateArgs, HiddenKind, InstanceArgs, LearnArgs, Method,
    ObservationKind, Repair, Selection, SolverArgs, SolverKind, SweepArgs, TensorEigArgs, UsageError, WeightKind,
};

/// Some sweep rows failed; the table was still written.
#[derive(Debug)]
pub struct SweepFailure {
    pub failed: usize,
    pub exit: u8,
}

impl fmt::Display for SweepFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} sweep runs failed", self.failed)
    }
}

impl std::error::Error for SweepFailure {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn enum_name<T: ValueEnum>(v: &T) -> String {
    v.to_possible_value().map(|p| p.get_name().to_string()).unwrap_or_default()
}

fn hidden_law(a: &InstanceArgs) -> Result<HiddenLaw> {
    let d = a.d;
    Ok(match a.hidden {
        HiddenKind::Gaussian => {
            let rho = a.hidden_corr;
            let r = (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { rho }).collect()).collect();
            HiddenLaw::GaussianRound { a: vec![a.hidden_mean; d], r }
        }
        HiddenKind::Mixture => {
            let atoms = (0..d).map(|i| (0..d).map(|j| (i == j) as u8).collect()).collect();
            HiddenLaw::Atoms(BinaryDistribution::uniform(d, atoms)?)
        }
        HiddenKind::Fixation => HiddenLaw::Fixation { a: a.fix_a, b: a.fix_b },
    })
}

fn instance_spec(a: &InstanceArgs, n: usize, sigma: f64, seed: u64) -> Result<InstanceSpec> {
    let spec = InstanceSpec {
        d: a.d,
        m: a.m,
        n,
        sigma,
        hidden: hidden_law(a)?,
        weights: match a.weights {
            WeightKind::Sphere => WeightLaw::Sphere,
            WeightKind::Dirichlet => WeightLaw::Dirichlet { alpha: a.alpha },
        },
        observation: match a.observation {
            ObservationKind::Gaussian => Observation::Gaussian,
            ObservationKind::Binomial => Observation::Binomial,
        },
        rigid_block: a.rigid_block,
        seed,
    };
    if spec.d == 0 || spec.m < spec.d {
        return Err(usage(format!("need 1 ≤ d ≤ m, got d = {}, m = {}", spec.d, spec.m)));
    }
    spec.validate()?;
    Ok(spec)
}

fn instance_pairs(a: &InstanceArgs) -> Vec<(&'static str, String)> {
    vec![
        ("d", a.d.to_string()),
        ("m", a.m.to_string()),
        ("hidden", enum_name(&a.hidden)),
        ("hidden-mean", a.hidden_mean.to_string()),
        ("hidden-corr", a.hidden_corr.to_string()),
        ("fix-a", a.fix_a.to_string()),
        ("fix-b", a.fix_b.to_string()),
        ("weights", enum_name(&a.weights)),
        ("alpha", a.alpha.to_string()),
        ("observation", enum_name(&a.observation)),
        ("rigid-block", a.rigid_block.to_string()),
    ]
}

fn solver_pairs(s: &SolverArgs) -> Vec<(&'static str, String)> {
    vec![
        ("n-init", s.n_init.map(|v| v.to_string()).unwrap_or_default()),
        ("solver", enum_name(&s.solver)),
        ("tol", s.tol.to_string()),
    ]
}

fn estimator_pairs(e: &EstimatorArgs) -> Vec<(&'static str, String)> {
    let mut v = vec![
        ("lambda-thresh", e.lambda_thresh.map(|v| v.to_string()).unwrap_or_default()),
        ("selection", enum_name(&e.selection)),
        ("repair", enum_name(&e.repair)),
        ("k-top", e.k_top.to_string()),
        ("als-max-iter", e.als_max_iter.to_string()),
    ];
    v.extend(solver_pairs(&e.solver));
    v
}

fn solver_config(s: &SolverArgs, seed: u64, shift: Option<f64>) -> SolverConfig {
    SolverConfig {
        n_init: s.n_init,
        tol: s.tol,
        mode: match s.solver {
            SolverKind::Newton => SolveMode::Newton,
            SolverKind::Power => SolveMode::Power,
            SolverKind::Both => SolveMode::Both,
        },
        shift,
        seed,
        ..SolverConfig::default()
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn generate(a: &GenerateArgs) -> Result<()> {
    let spec = instance_spec(&a.instance, a.n, a.instance.sigma, a.seed)?;
    let inst = datagen::generate(&spec)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let x_name = match a.format {
        Format::Csv => "X.csv",
        Format::Bin => "X.bin",
    };
    write_matrix(&a.out.join(x_name), &inst.x)?;
    write_csv_matrix(&a.out.join("W.csv"), &inst.w)?;
    write_csv_matrix(&a.out.join("H.csv"), &inst.h)?;
    let mut pairs = instance_pairs(&a.instance);
    pairs.extend([("n", a.n.to_string()), ("sigma", a.instance.sigma.to_string()), ("seed", a.seed.to_string())]);
    let sidecar = json!({
        "config_hash": config_hash(&pairs),
        "spec": serde_json::to_value(&spec)?,
        "files": { "x": x_name, "w": "W.csv", "h": "H.csv" },
        "shapes": { "x": [inst.x.nrows(), inst.x.ncols()], "w": [inst.w.nrows(), inst.w.ncols()], "h": [inst.h.nrows(), inst.h.ncols()] },
    });
    write_text(&a.out.join("spec.json"), &(serde_json::to_string_pretty(&sidecar)? + "\n"))?;
    println!("wrote {} ({}x{}), W.csv, H.csv, spec.json to {}", x_name, inst.x.nrows(), inst.x.ncols(), a.out.display());
    Ok(())
}

/// Output of one estimator run.
struct Fit {
    w_hat: DMatrix<f64>,
    spectral: Option<ModelEstimate>,
    als_trace: Option<Vec<binlatent::baselines::AlsTraceRow>>,
}

fn spectral_fit(x: &DMatrix<f64>, d: usize, sigma: f64, e: &EstimatorArgs, seed: u64) -> Result<ModelEstimate> {
    let solver = solver_config(&e.solver, seed, None);
    let noiseless = sigma == 0.0 && e.selection == Selection::Ks && e.repair == Repair::Gaussian;
    if noiseless {
        return Ok(algorithm1(x, &NoiselessConfig { d: Some(d), solver })?);
    }
    let cfg = NoisyConfig {
        d,
        sigma,
        lambda_thresh: e.lambda_thresh,
        solver,
        repair: match e.repair {
            Repair::Gaussian => MomentRepair::Gaussian,
            Repair::Raw => MomentRepair::Raw,
            Repair::Denoise => MomentRepair::denoise(),
        },
        selection: match e.selection {
            Selection::Ks => SelectionRule::Ks,
            Selection::Likelihood => SelectionRule::Likelihood,
        },
    };
    Ok(algorithm2(x, &cfg)?)
}

fn run_method(
    method: Method,
    x: &DMatrix<f64>,
    h: Option<&DMatrix<f64>>,
    d: usize,
    sigma: f64,
    e: &EstimatorArgs,
    seed: u64,
    cached: Option<&ModelEstimate>,
) -> Result<Fit> {
    match method {
        Method::Spectral | Method::SpectralWls => {
            let est = match cached {
                Some(c) => c.clone(),
                None => spectral_fit(x, d, sigma, e, seed)?,
            };
            let w_hat = if method == Method::SpectralWls {
                if !(sigma > 0.0) {
                    return Err(usage("spectral+wls needs sigma > 0"));
                }
                wls_refine(x, &est.w_hat, sigma, e.k_top)?
            } else {
                est.w_hat.clone()
            };
            Ok(Fit { w_hat, spectral: Some(est), als_trace: None })
        }
        Method::Als => {
            let st = als(x, d, &AlsConfig { max_iter: e.als_max_iter, seed, ..AlsConfig::default() })?;
            Ok(Fit { w_hat: st.w, spectral: None, als_trace: Some(st.trace) })
        }
        Method::Oracle => {
            let h = h.ok_or_else(|| usage("oracle method needs the true hidden matrix (--h)"))?;
            Ok(Fit { w_hat: oracle_ls(x, h)?, spectral: None, als_trace: None })
        }
    }
}

fn estimate_json(est: &ModelEstimate) -> serde_json::Value {
    let cands: Vec<serde_json::Value> = est
        .candidates
        .iter()
        .enumerate()
        .map(|(i, c)| {
            json!({
                "lambda": c.lambda,
                "score": c.score,
                "stability": c.source.stability.as_str(),
                "residual": c.source.residual,
                "selected": est.selected.contains(&i),
            })
        })
        .collect();
    json!({
        "d": est.d,
        "sigma": est.sigma,
        "lambda_thresh": est.lambda_thresh,
        "eigenvalues": est.eigenpairs.pairs.iter().map(|p| p.lambda).collect::<Vec<_>>(),
        "stabilities": est.eigenpairs.pairs.iter().map(|p| p.stability.as_str()).collect::<Vec<_>>(),
        "eigenpair_count": est.eigenpairs.len(),
        "newton_stable_count": est.newton_stable_count,
        "init_count": est.eigenpairs.init_count,
        "converged_count": est.eigenpairs.converged_count,
        "candidates": cands,
        "selected": est.selected,
        "split": est.split.map(|(a, b)| vec![a, b]),
    })
}

pub fn learn(a: &LearnArgs) -> Result<()> {
    let x = read_matrix(&a.x).with_context(|| format!("reading {}", a.x.display()))?;
    let (d, sigma) = match (a.d, a.sigma) {
        (Some(d), Some(s)) => (d, s),
        _ => {
            let moms = empirical_moments(&x)?;
            let (d_est, s2) = estimate_d_sigma(&moms.m, DSigmaOptions::for_sample(x.nrows(), x.ncols()))?;
            (a.d.unwrap_or(d_est), a.sigma.unwrap_or(s2.sqrt()))
        }
    };
    if !(sigma >= 0.0) {
        return Err(usage(format!("sigma must be ≥ 0, got {sigma}")));
    }
    let h = match &a.h {
        Some(p) => Some(read_matrix(p).with_context(|| format!("reading {}", p.display()))?),
        None => None,
    };
    let fit = run_method(a.method, &x, h.as_ref(), d, sigma, &a.estimator, a.seed, None)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_csv_matrix(&a.out.join("W_hat.csv"), &fit.w_hat)?;
    let mut pairs = estimator_pairs(&a.estimator);
    pairs.extend([
        ("x", a.x.display().to_string()),
        ("method", a.method.name().to_string()),
        ("d", d.to_string()),
        ("sigma", sigma.to_string()),
        ("seed", a.seed.to_string()),
    ]);
    let mut meta = json!({
        "method": a.method.name(),
        "config_hash": config_hash(&pairs),
        "d": d,
        "sigma": sigma,
        "seed": a.seed,
        "m": x.nrows(),
        "n": x.ncols(),
    });
    if let Some(est) = &fit.spectral {
        meta["spectral"] = estimate_json(est);
    }
    if let Some(trace) = &fit.als_trace {
        let mut s = String::from("iteration,before_w,after_w,after_h\n");
        for r in trace {
            s.push_str(&format!("{},{},{},{}\n", r.iteration, r.before_w, r.after_w, r.after_h));
        }
        write_text(&a.out.join("als_trace.csv"), &s)?;
        meta["als_iterations"] = json!(trace.len());
    }
    write_text(&a.out.join("estimate.json"), &(serde_json::to_string_pretty(&meta)? + "\n"))?;
    println!("method={} d={} sigma={} wrote W_hat.csv, estimate.json to {}", a.method.name(), d, sigma, a.out.display());
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let w_hat = read_matrix(&a.w_hat).with_context(|| format!("reading {}", a.w_hat.display()))?;
    let w_true = read_matrix(&a.w_true).with_context(|| format!("reading {}", a.w_true.display()))?;
    let al = aligned_error(&w_hat, &w_true)?;
    println!("{}", json!({ "error": al.error, "permutation": al.permutation, "row_errors": al.row_errors }));
    Ok(())
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    let v: Vec<T> = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| usage(format!("bad {what} value {t:?}"))))
        .collect::<Result<_>>()?;
    if v.is_empty() {
        return Err(usage(format!("{what} grid is empty")));
    }
    Ok(v)
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let seeds: Vec<u64> = match s.split_once("..") {
        Some((a, b)) => {
            let a: u64 = a.trim().parse().map_err(|_| usage(format!("bad seed range {s:?}")))?;
            let b: u64 = b.trim().parse().map_err(|_| usage(format!("bad seed range {s:?}")))?;
            (a..b).collect()
        }
        None => parse_list(s, "seed")?,
    };
    if seeds.is_empty() {
        return Err(usage("seed list is empty"));
    }
    let mut sorted = seeds.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != seeds.len() {
        return Err(usage("seeds must be distinct"));
    }
    Ok(seeds)
}

fn parse_methods(s: &str) -> Result<Vec<Method>> {
    let v: Vec<Method> = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| Method::from_str(t, false).map_err(|_| usage(format!("unknown method {t:?}"))))
        .collect::<Result<_>>()?;
    if v.is_empty() {
        return Err(usage("method list is empty"));
    }
    Ok(v)
}

struct Row {
    n: usize,
    sigma: f64,
    seed: u64,
    method: Method,
    error: Option<f64>,
    wall: f64,
    eigenpairs: Option<usize>,
    candidates: Option<usize>,
    status: String,
    kind: u8,
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn failure_code(e: &anyhow::Error) -> (String, u8) {
    if let Some(c) = e.downcast_ref::<binlatent::Error>() {
        let k = match c.kind() {
            binlatent::ErrorKind::Usage => 2,
            binlatent::ErrorKind::Data => 3,
            binlatent::ErrorKind::Numerical => 4,
        };
        (c.code().to_string(), k)
    } else if e.downcast_ref::<UsageError>().is_some() {
        ("usage".into(), 2)
    } else {
        ("error".into(), 3)
    }
}

fn sweep_point(a: &SweepArgs, methods: &[Method], n: usize, sigma: f64, seed: u64) -> Vec<Row> {
    let row = |method, res: Result<(f64, Option<&ModelEstimate>)>, wall: f64| match res {
        Ok((err, est)) => Row {
            n,
            sigma,
            seed,
            method,
            error: Some(err),
            wall,
            eigenpairs: est.map(|e| e.eigenpairs.len()),
            candidates: est.map(|e| e.candidates.len()),
            status: "ok".into(),
            kind: 0,
        },
        Err(e) => {
            let (status, kind) = failure_code(&e);
            Row { n, sigma, seed, method, error: None, wall, eigenpairs: None, candidates: None, status, kind }
        }
    };
    let inst = match instance_spec(&a.instance, n, sigma, seed).and_then(|s| Ok(datagen::generate(&s)?)) {
        Ok(i) => i,
        Err(e) => return methods.iter().map(|&m| row(m, Err(anyhow::anyhow!("{e:#}").context(failure_code(&e).0)), 0.0)).collect(),
    };
    let d = a.instance.d;
    let mut cached: Option<ModelEstimate> = None;
    let mut cached_wall = 0.0;
    let mut out = Vec::new();
    for &method in methods {
        let start = Instant::now();
        let reuse = matches!(method, Method::Spectral | Method::SpectralWls) && cached.is_some();
        let res = run_method(method, &inst.x, Some(&inst.h), d, sigma, &a.estimator, seed, cached.as_ref());
        let mut wall = start.elapsed().as_secs_f64();
        if reuse {
            wall += cached_wall;
        }
        match res {
            Ok(fit) => {
                if cached.is_none() && fit.spectral.is_some() {
                    cached = fit.spectral.clone();
                    cached_wall = wall;
                }
                let err = aligned_error(&fit.w_hat, &inst.w).map(|al| al.error).map_err(anyhow::Error::from);
                out.push(row(method, err.map(|e| (e, fit.spectral.as_ref())), wall));
            }
            Err(e) => out.push(row(method, Err(e), wall)),
        }
    }
    out
}

pub fn sweep(a: &SweepArgs) -> Result<()> {
    let ns: Vec<usize> = parse_list(&a.n_grid, "n")?;
    let sigmas: Vec<f64> = match &a.sigma_grid {
        Some(s) => parse_list(s, "sigma")?,
        None => vec![a.instance.sigma],
    };
    if sigmas.iter().any(|s| !(*s >= 0.0)) {
        return Err(usage("noise levels must be ≥ 0"));
    }
    let seeds = parse_seeds(&a.seeds)?;
    let methods = parse_methods(&a.methods)?;
    if a.instance.d == 0 || a.instance.m < a.instance.d {
        return Err(usage(format!("need 1 ≤ d ≤ m, got d = {}, m = {}", a.instance.d, a.instance.m)));
    }
    let mut pairs = instance_pairs(&a.instance);
    pairs.extend(estimator_pairs(&a.estimator));
    let hash = config_hash(&pairs);

    let mut points: Vec<(usize, f64, u64)> = Vec::new();
    for &n in &ns {
        for &s in &sigmas {
            points.extend(seeds.iter().map(|&seed| (n, s, seed)));
        }
    }
    let rows: Vec<Vec<Row>> = points.par_iter().map(|&(n, s, seed)| sweep_point(a, &methods, n, s, seed)).collect();

    let mut csv = String::from("n,sigma,seed,method,error,wall_time,eigenpair_count,candidate_count,status,config_hash\n");
    let mut failed = 0;
    let mut worst = 0u8;
    for r in rows.iter().flatten() {
        if r.kind != 0 {
            failed += 1;
            worst = worst.max(r.kind);
        }
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.n,
            r.sigma,
            r.seed,
            r.method.name(),
            opt(r.error),
            r.wall,
            opt(r.eigenpairs),
            opt(r.candidates),
            r.status,
            hash
        ));
    }
    match &a.out {
        Some(p) => write_text(p, &csv)?,
        None => std::io::stdout().write_all(csv.as_bytes())?,
    }
    if failed > 0 {
        return Err(SweepFailure { failed, exit: worst }.into());
    }
    Ok(())
}

fn parse_atoms(text: &str) -> Result<BinaryDistribution> {
    let mut atoms = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (bits, p) = line
            .split_once(',')
            .ok_or_else(|| binlatent::Error::Parse(format!("atoms line {}: expected bits,probability", i + 1)))?;
        let h = bits
            .trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(0u8),
                '1' => Ok(1u8),
                _ => Err(binlatent::Error::Parse(format!("atoms line {}: bad bit {c:?}", i + 1))),
            })
            .collect::<std::result::Result<Vec<u8>, _>>()?;
        let p: f64 = p.trim().parse().map_err(|_| binlatent::Error::Parse(format!("atoms line {}: bad probability", i + 1)))?;
        atoms.push((h, p));
    }
    let d = atoms.first().map(|a| a.0.len()).ok_or_else(|| binlatent::Error::Parse("no atoms".into()))?;
    Ok(BinaryDistribution::new(d, atoms)?)
}

pub fn conditions(a: &ConditionsArgs) -> Result<()> {
    let (dist, source) = if let Some(p) = &a.atoms {
        (parse_atoms(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?, "atoms")
    } else if let Some(p) = &a.h {
        (BinaryDistribution::empirical(&read_matrix(p)?)?, "empirical")
    } else {
        match a.instance.hidden {
            HiddenKind::Mixture => match hidden_law(&a.instance)? {
                HiddenLaw::Atoms(d) => (d, "exact"),
                _ => unreachable!(),
            },
            HiddenKind::Gaussian => {
                let h = datagen::gen_h(&hidden_law(&a.instance)?, a.instance.d, a.samples, a.seed)?;
                (BinaryDistribution::empirical(&h)?, "sampled")
            }
            HiddenKind::Fixation => return Err(usage("fixation frequencies are not binary; conditions do not apply")),
        }
    };
    let lm = latent_population_moments(&dist);
    let rep = check_conditions(&lm, &dist, a.probes, a.seed);
    let out = json!({
        "source": source,
        "report": serde_json::to_value(&rep)?,
        "sigma_full_rank": rep.sigma_full_rank(),
        "units_full_rank": rep.units_full_rank(),
        "power_condition": rep.power_condition(),
        "rigidity_ok": rep.rigidity_ok(),
        "all_ok": rep.all_ok(),
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

pub fn tensor_eig(a: &TensorEigArgs) -> Result<()> {
    let t = read_tensor(&a.tensor).with_context(|| format!("reading {}", a.tensor.display()))?;
    let cfg = solver_config(&a.solver, a.seed, a.shift);
    let set = enumerate_eigenpairs(&t, &cfg)?;
    let d = t.dim();
    let mut csv = String::from("index,lambda,stability,residual");
    for i in 0..d {
        csv.push_str(&format!(",u{}", i + 1));
    }
    csv.push('\n');
    for (i, p) in set.pairs.iter().enumerate() {
        csv.push_str(&format!("{},{},{},{}", i, p.lambda, p.stability.as_str(), p.residual));
        for v in p.u.iter() {
            csv.push_str(&format!(",{v}"));
        }
        csv.push('\n');
    }
    match &a.out {
        Some(p) => write_text(p, &csv)?,
        None => std::io::stdout().write_all(csv.as_bytes())?,
    }
    Ok(())
}
