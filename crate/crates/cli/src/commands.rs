use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use procnoise::attack::{
    attack_input_specific, attack_universal, evaluate_perturbation_set, perturbation_set, AttackError, AttackOptions,
    AttackReport,
};
use procnoise::dataset::LabeledDataset;
use procnoise::image_ops::{render_perturbation, save_png};
use procnoise::metrics::{
    average_sensitivity, column, correlation_matrix, histogram, input_specific_evasion, mean, percentile,
    universal_evasion_rate, EvaluationGrid,
};
use procnoise::noise::{generate, to_perturbation};
use procnoise::oracle::wire::{ClassifyRequest, ClassifyResponse};
use procnoise::oracle::{from_uri, with_median_defence, HttpOracle, Oracle, ToyOracle, ToyOracleSpec};
use procnoise::params::{GaborParams, PerlinParams};
use procnoise::{AttackMode, AttackSpec, Image, NoiseKind, ProceduralParams, QueryLedger};
use serde::Serialize;
use serde_json::{json, Value};

use crate::failure::Failure;
use crate::{svg, AnalyzeArgs, AttackArgs, Command, DefendArgs, EvalGridArgs, GenCorpusArgs, GenNoiseArgs, ReportArgs};

pub const TOKEN_ENV: &str = "PROCNOISE_ORACLE_TOKEN";
const BIN_WIDTH: f64 = 0.05;

pub fn run(cmd: &Command, jobs: usize) -> Result<(), Failure> {
    match cmd {
        Command::GenNoise(a) => gen_noise(cmd, a),
        Command::Attack(a) => attack(cmd, a, jobs),
        Command::EvalGrid(a) => eval_grid(cmd, a),
        Command::Analyze(a) => analyze(cmd, a),
        Command::Defend(a) => defend(cmd, a),
        Command::Report(a) => report(a),
        Command::OracleStdio(a) => oracle_stdio(&a.oracle),
        Command::GenCorpus(a) => gen_corpus(a),
    }
}

fn echo(cmd: &Command) -> Value {
    serde_json::to_value(cmd).expect("command serializes")
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    write_file(path, text)
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::data(dir.display(), e))?;
    }
    fs::write(path, contents).map_err(|e| Failure::data(path.display(), e))
}

/// Opens an oracle; HTTP oracles are health-checked so their side is known up front.
fn open_oracle(uri: &str) -> Result<Arc<dyn Oracle>, Failure> {
    let token = std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty());
    if uri.starts_with("http://") || uri.starts_with("https://") {
        let mut o = HttpOracle::new(uri, token);
        o.health()?;
        return Ok(Arc::new(o));
    }
    Ok(Arc::from(from_uri(uri, token)?))
}

fn defended(oracle: Arc<dyn Oracle>, window: Option<usize>) -> Result<Arc<dyn Oracle>, Failure> {
    match window {
        Some(w) => Ok(Arc::new(with_median_defence(oracle, w)?)),
        None => Ok(oracle),
    }
}

fn load(path: &Path) -> Result<LabeledDataset, Failure> {
    Ok(LabeledDataset::from_manifest(path)?)
}

fn check_side(oracle: &dyn Oracle, data: &LabeledDataset) -> Result<usize, Failure> {
    match oracle.side() {
        Some(s) if s != data.side() => Err(Failure::Data(format!(
            "oracle expects {s}x{s} images but `{}` holds {}x{}",
            data.name,
            data.side(),
            data.side()
        ))),
        Some(s) => Ok(s),
        None => Ok(data.side()),
    }
}

fn required<T: Copy>(v: Option<T>, flag: &str, kind: NoiseKind) -> Result<T, Failure> {
    v.ok_or_else(|| Failure::Usage(format!("--{flag} is required for {kind} noise")))
}

fn gen_noise(cmd: &Command, a: &GenNoiseArgs) -> Result<(), Failure> {
    if a.side == 0 {
        return Err(Failure::Usage("--side must be positive".into()));
    }
    if !(a.eps >= 0.0 && a.eps.is_finite()) {
        return Err(Failure::Usage(format!("--eps must be non-negative, got {}", a.eps)));
    }
    let params = match a.kind {
        NoiseKind::Gabor => Some(ProceduralParams::Gabor(GaborParams {
            sigma: required(a.sigma, "sigma", a.kind)?,
            lambda: required(a.lambda, "lambda", a.kind)?,
            omega: required(a.omega, "omega", a.kind)?,
            xi: required(a.xi, "xi", a.kind)?,
        })),
        NoiseKind::Perlin => Some(ProceduralParams::Perlin(PerlinParams {
            lambda_x: required(a.lx, "lx", a.kind)?,
            lambda_y: required(a.ly, "ly", a.kind)?,
            phi_sine: required(a.phi, "phi", a.kind)?,
            octaves: required(a.octaves, "octaves", a.kind)?,
        })),
        NoiseKind::Random => None,
    };
    if let Some(p) = &params {
        p.validate(a.side)?;
    }
    let field = generate(params.as_ref(), a.side, a.seed);
    let noise = Image::from_fn(a.side, |x, y, c| (field.at(x, y, c) + 1.0) * 127.5);
    let perturbation = render_perturbation(&to_perturbation(&field, a.eps));
    fs::create_dir_all(&a.out).map_err(|e| Failure::data(a.out.display(), e))?;
    let (noise_path, pert_path) = (a.out.join("noise.png"), a.out.join("perturbation.png"));
    save_png(&noise, &noise_path)?;
    save_png(&perturbation, &pert_path)?;
    let record = json!({
        "config": echo(cmd),
        "kind": a.kind,
        "params": params,
        "seed": a.seed,
        "side": a.side,
        "eps": a.eps,
        "noise": noise_path,
        "perturbation": pert_path,
    });
    println!("{}", serde_json::to_string_pretty(&record).expect("record serializes"));
    Ok(())
}

fn attack(cmd: &Command, a: &AttackArgs, jobs: usize) -> Result<(), Failure> {
    let spec = AttackSpec {
        mode: a.mode,
        noise_kind: a.kind,
        method: a.method,
        eps: a.eps,
        budget: a.budget,
        seed: a.seed,
        top_k: a.top_k,
    };
    spec.validate()?;
    let sets = match a.mode {
        AttackMode::Universal => match (&a.train, &a.val) {
            (Some(t), Some(v)) => (load(t)?, Some(load(v)?)),
            _ => return Err(Failure::Usage("universal mode needs --train and --val".into())),
        },
        AttackMode::InputSpecific => match &a.data {
            Some(d) => (load(d)?, None),
            None => return Err(Failure::Usage("specific mode needs --data".into())),
        },
    };
    let oracle = defended(open_oracle(&a.oracle)?, a.defence)?;
    check_side(oracle.as_ref(), &sets.0)?;
    let opts = AttackOptions {
        jobs,
        ..Default::default()
    };
    let result = match &sets {
        (train, Some(val)) => attack_universal(&spec, &opts, train, val, &oracle),
        (data, None) => attack_input_specific(&spec, &opts, data, &oracle),
    };
    let (mut report, failure) = match result {
        Ok(r) => {
            let failure = r.error.clone().map(Failure::Transport);
            (r, failure)
        }
        Err(AttackError::Aborted { report, source }) => (*report, Some(Failure::Transport(source.to_string()))),
        Err(e) => return Err(e.into()),
    };
    report.config = Some(echo(cmd));
    write_json(&a.out, &report)?;
    eprintln!("{}", summary(&report));
    failure.map_or(Ok(()), Err)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

fn summary(r: &AttackReport) -> String {
    match r.spec.mode {
        AttackMode::Universal => format!(
            "universal {} {:?}: train {} val {} after {} budget units ({} classifications)",
            r.spec.noise_kind,
            r.spec.method,
            fmt_opt(r.train_metric),
            fmt_opt(r.val_metric),
            r.queries_spent,
            r.raw_classifications
        ),
        AttackMode::InputSpecific => format!(
            "specific {} {:?}: success {} avg queries {} over {} inputs",
            r.spec.noise_kind,
            r.spec.method,
            fmt_opt(r.success_rate),
            fmt_opt(r.average_queries),
            r.per_input.len()
        ),
    }
}

fn config_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".config.json");
    PathBuf::from(s)
}

fn eval_grid(cmd: &Command, a: &EvalGridArgs) -> Result<(), Failure> {
    if a.count == 0 {
        return Err(Failure::Usage("--count must be positive".into()));
    }
    let data = load(&a.data)?;
    let oracle = defended(open_oracle(&a.oracle)?, a.defence)?;
    let side = check_side(oracle.as_ref(), &data)?;
    let mut grid = if a.resume && a.out.exists() {
        EvaluationGrid::load(&a.out)?
    } else {
        let ids = data.items.iter().map(|it| it.id.clone()).collect();
        EvaluationGrid::pending(ids, &perturbation_set(a.kind, side, a.count, a.seed))
    };
    let before = grid.cursor();
    let ledger = QueryLedger::unlimited();
    let result = evaluate_perturbation_set(&mut grid, &data, &oracle, a.eps, a.top_k, &ledger);
    grid.save(&a.out)?;
    write_json(&config_path(&a.out), &echo(cmd))?;
    eprintln!(
        "evaluated {} cells, {} of {} done",
        grid.cursor() - before,
        grid.cursor(),
        grid.cells()
    );
    result.map_err(Failure::from)
}

fn analyze(cmd: &Command, a: &AnalyzeArgs) -> Result<(), Failure> {
    let grid = EvaluationGrid::load(&a.grid)?;
    let outcomes = grid.outcomes()?;
    let rates = outcomes.iter().map(|r| universal_evasion_rate(r)).collect::<Result<Vec<_>, _>>()?;
    let sens = (0..grid.item_ids.len())
        .map(|j| average_sensitivity(&column(&outcomes, j)))
        .collect::<Result<Vec<_>, _>>()?;
    let quantiles = |v: &[f64]| {
        json!({
            "min": percentile(v, 0.0),
            "p25": percentile(v, 25.0),
            "median": percentile(v, 50.0),
            "p75": percentile(v, 75.0),
            "max": percentile(v, 100.0),
        })
    };
    fs::create_dir_all(&a.out).map_err(|e| Failure::data(a.out.display(), e))?;

    let mut correlations = Vec::new();
    for kind in [NoiseKind::Gabor, NoiseKind::Perlin] {
        let rows: Vec<usize> = (0..grid.rows.len())
            .filter(|&i| grid.rows[i].params.is_some_and(|p| p.kind() == kind))
            .collect();
        if rows.len() < 3 {
            continue;
        }
        let mut cols: Vec<Vec<f64>> = (0..4)
            .map(|k| rows.iter().map(|&i| grid.rows[i].params.unwrap().to_array()[k]).collect())
            .collect();
        cols.push(rows.iter().map(|&i| rates[i]).collect());
        let m = correlation_matrix(&cols)?;
        let mut names: Vec<&str> = ProceduralParams::names(kind).to_vec();
        names.push("universal_evasion");
        let path = a.out.join(format!("correlation_{kind}.csv"));
        write_csv(&path, &correlation_records(&names, &m))?;
        correlations.push(path);
    }

    let uni_hist = histogram(&rates, BIN_WIDTH);
    let sens_hist = histogram(&sens, BIN_WIDTH);
    write_file(&a.out.join("universal_evasion.svg"), svg::histogram("universal evasion rate", &uni_hist))?;
    write_file(&a.out.join("average_sensitivity.svg"), svg::histogram("average sensitivity", &sens_hist))?;

    let metrics = json!({
        "config": echo(cmd),
        "perturbations": rates.len(),
        "inputs": sens.len(),
        "universal_evasion": mean(&rates),
        "universal_evasion_quantiles": quantiles(&rates),
        "average_sensitivity": mean(&sens),
        "average_sensitivity_quantiles": quantiles(&sens),
        "input_specific_evasion": input_specific_evasion(&outcomes)?,
        "per_perturbation": grid.rows.iter().zip(&rates).map(|(r, rate)| json!({
            "kind": r.kind,
            "seed": r.seed,
            "params": r.params,
            "universal_evasion": rate,
        })).collect::<Vec<_>>(),
        "per_input": grid.item_ids.iter().zip(&sens).map(|(id, s)| json!({
            "id": id,
            "average_sensitivity": s,
        })).collect::<Vec<_>>(),
        "histograms": {
            "bin_width": BIN_WIDTH,
            "universal_evasion": uni_hist,
            "average_sensitivity": sens_hist,
        },
        "correlations": correlations,
    });
    write_json(&a.out.join("metrics.json"), &metrics)
}

/// Header row then one row per variable; undefined entries are written as `null`.
fn correlation_records(names: &[&str], m: &[Vec<Option<f64>>]) -> Vec<Vec<String>> {
    let mut out = vec![std::iter::once(String::new()).chain(names.iter().map(|s| s.to_string())).collect()];
    for (name, row) in names.iter().zip(m) {
        let mut rec = vec![name.to_string()];
        rec.extend(row.iter().map(|v| v.map_or_else(|| "null".into(), |x| x.to_string())));
        out.push(rec);
    }
    out
}

fn write_csv(path: &Path, records: &[Vec<String>]) -> Result<(), Failure> {
    let err = |e: csv::Error| Failure::data(path.display(), e);
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for r in records {
        w.write_record(r).map_err(err)?;
    }
    w.flush().map_err(|e| Failure::data(path.display(), e))
}

#[derive(Serialize)]
struct DefenceRow {
    eps: f64,
    raw_mean: f64,
    raw_median: f64,
    defended_mean: f64,
    defended_median: f64,
    mean_reduction: f64,
    clean_error_raw: f64,
    clean_error_defended: f64,
    clean_error_delta: f64,
}

fn grid_rates(
    data: &LabeledDataset,
    oracle: &dyn Oracle,
    perts: &[(NoiseKind, u64, Option<ProceduralParams>)],
    eps: f64,
    top_k: usize,
) -> Result<Vec<f64>, Failure> {
    let ids = data.items.iter().map(|it| it.id.clone()).collect();
    let mut grid = EvaluationGrid::pending(ids, perts);
    evaluate_perturbation_set(&mut grid, data, oracle, eps, top_k, &QueryLedger::unlimited())?;
    let rates = grid.outcomes()?.iter().map(|r| universal_evasion_rate(r)).collect::<Result<Vec<_>, _>>()?;
    Ok(rates)
}

fn defend(cmd: &Command, a: &DefendArgs) -> Result<(), Failure> {
    if a.count == 0 || a.eps.is_empty() {
        return Err(Failure::Usage("--count and --eps must be non-empty".into()));
    }
    if let Some(e) = a.eps.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(Failure::Usage(format!("eps values must be positive, got {e}")));
    }
    let data = load(&a.data)?;
    let raw = open_oracle(&a.oracle)?;
    let side = check_side(raw.as_ref(), &data)?;
    let filtered = defended(raw.clone(), Some(a.window))?;
    // zero perturbation: the clean error of each oracle
    let control = [(NoiseKind::Random, 0, None)];
    let clean_raw = grid_rates(&data, raw.as_ref(), &control, 0.0, a.top_k)?[0];
    let clean_def = grid_rates(&data, filtered.as_ref(), &control, 0.0, a.top_k)?[0];
    let perts = perturbation_set(a.kind, side, a.count, a.seed);
    let mut rows = Vec::new();
    for &eps in &a.eps {
        let r = grid_rates(&data, raw.as_ref(), &perts, eps, a.top_k)?;
        let d = grid_rates(&data, filtered.as_ref(), &perts, eps, a.top_k)?;
        let (rm, dm) = (mean(&r).unwrap(), mean(&d).unwrap());
        rows.push(DefenceRow {
            eps,
            raw_mean: rm,
            raw_median: percentile(&r, 50.0).unwrap(),
            defended_mean: dm,
            defended_median: percentile(&d, 50.0).unwrap(),
            mean_reduction: rm - dm,
            clean_error_raw: clean_raw,
            clean_error_defended: clean_def,
            clean_error_delta: clean_def - clean_raw,
        });
        eprintln!("eps {eps}: mean universal evasion {rm:.4} raw, {dm:.4} defended");
    }
    let out = json!({
        "config": echo(cmd),
        "window": a.window,
        "kind": a.kind,
        "perturbations": a.count,
        "inputs": data.len(),
        "rows": rows,
    });
    write_json(&a.out, &out)
}

fn report(a: &ReportArgs) -> Result<(), Failure> {
    let header = [
        "report",
        "mode",
        "kind",
        "method",
        "budget",
        "eps",
        "seed",
        "queries_spent",
        "raw_classifications",
        "train_metric",
        "val_metric",
        "success_rate",
        "average_queries",
        "convergence_query",
    ];
    let mut records = vec![header.iter().map(|s| s.to_string()).collect::<Vec<_>>()];
    for path in &a.reports {
        let text = fs::read_to_string(path).map_err(|e| Failure::data(path.display(), e))?;
        let r: AttackReport = serde_json::from_str(&text).map_err(|e| Failure::data(path.display(), e))?;
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        let mode = match r.spec.mode {
            AttackMode::Universal => "universal",
            AttackMode::InputSpecific => "specific",
        };
        let method = serde_json::to_value(r.spec.method).expect("method serializes");
        records.push(vec![
            path.display().to_string(),
            mode.into(),
            r.spec.noise_kind.to_string(),
            method.as_str().unwrap_or_default().to_string(),
            r.spec.budget.to_string(),
            r.spec.eps.to_string(),
            r.spec.seed.to_string(),
            r.queries_spent.to_string(),
            r.raw_classifications.to_string(),
            opt(r.train_metric),
            opt(r.val_metric),
            opt(r.success_rate),
            opt(r.average_queries),
            r.convergence_query.map_or_else(String::new, |q| q.to_string()),
        ]);
    }
    write_csv(&a.out, &records)?;
    for (i, r) in records.iter().enumerate() {
        println!("| {} |", r.join(" | "));
        if i == 0 {
            println!("|{}", " --- |".repeat(r.len()));
        }
    }
    Ok(())
}

fn oracle_stdio(uri: &str) -> Result<(), Failure> {
    let oracle = open_oracle(uri)?;
    let mut out = io::stdout().lock();
    let broken = |e: io::Error| Failure::Transport(format!("stdio: {e}"));
    for line in io::stdin().lock().lines() {
        let line = line.map_err(broken)?;
        if line.trim().is_empty() {
            continue;
        }
        let req: ClassifyRequest = serde_json::from_str(&line).map_err(|e| Failure::data("request", e))?;
        let verdict = oracle.query(&req.image()?, req.top_k)?;
        let reply = ClassifyResponse::from_verdict(req.id, &verdict);
        writeln!(out, "{}", serde_json::to_string(&reply).expect("reply serializes")).map_err(broken)?;
        out.flush().map_err(broken)?;
    }
    Ok(())
}

fn gen_corpus(a: &GenCorpusArgs) -> Result<(), Failure> {
    let toy = ToyOracle::new(ToyOracleSpec::from_uri(&a.oracle)?)?;
    if a.count == 0 || a.val > a.count {
        return Err(Failure::Usage(format!("need 0 < --count and --val ≤ --count, got {} and {}", a.count, a.val)));
    }
    let dir = a.out.join("images");
    fs::create_dir_all(&dir).map_err(|e| Failure::data(dir.display(), e))?;
    let mut rows = Vec::new();
    for (i, (img, label)) in toy.corpus(a.count, a.seed).into_iter().enumerate() {
        let name = format!("images/{i:05}.png");
        save_png(&img, a.out.join(&name))?;
        rows.push(vec![name, label.to_string()]);
    }
    let header = vec!["path".to_string(), "label".to_string()];
    let with_header = |rows: &[Vec<String>]| std::iter::once(header.clone()).chain(rows.iter().cloned()).collect::<Vec<_>>();
    write_csv(&a.out.join("manifest.csv"), &with_header(&rows))?;
    if a.val > 0 {
        let split = a.count - a.val;
        write_csv(&a.out.join("train.csv"), &with_header(&rows[..split]))?;
        write_csv(&a.out.join("val.csv"), &with_header(&rows[split..]))?;
    }
    eprintln!("wrote {} images to {}", a.count, a.out.display());
    Ok(())
}
