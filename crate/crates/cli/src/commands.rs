use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use tergm_core::degeneracy::{
    degeneracy_bounds, entropy_bruteforce, entropy_edgecount, entropy_grid, BoundOptions,
    InitialDistribution,
};
use tergm_core::estimator::{fit_exact, fit_sampled, FitConfig, FitResult};
use tergm_core::evaluation::{
    crossval_assess, recovery_experiment, CrossValConfig, RecoveryConfig,
};
use tergm_core::inference::{
    likelihood_ratio_test, mcgem_classify, GAConfig, HypothesisSpec, McgemConfig,
};
use tergm_core::ingest::{
    parse_labels_csv, parse_series, series_to_dense_json, LoadOptions, SeriesFormat,
};
use tergm_core::sampler::{sample_initial, simulate_chain, InitialLaw, SamplerConfig};
use tergm_core::{
    NetworkSeries, NodeAttributes, ParameterVector, StatisticSet, TergmError, TransitionModel,
};

use crate::args::*;
use crate::manifest::Run;

/// Outcome classes, each with its own exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Core(TergmError),
    /// The computation finished and its report was written, but did not converge.
    NotConverged {
        message: String,
        diagnostics: Value,
    },
}

impl From<TergmError> for Failure {
    fn from(e: TergmError) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Core(e) if e.is_data_error() => 2,
            Failure::Core(e) if e.is_numerical() => 3,
            Failure::Core(_) => 1,
            Failure::NotConverged { .. } => 3,
        }
    }

    pub fn to_json(&self) -> Value {
        let kind = match self.exit_code() {
            1 => "usage",
            2 => "data",
            _ => "numerical",
        };
        match self {
            Failure::Usage(m) => json!({ "status": "error", "kind": kind, "message": m }),
            Failure::Core(e) => {
                json!({ "status": "error", "kind": kind, "message": e.to_string() })
            }
            Failure::NotConverged {
                message,
                diagnostics,
            } => {
                json!({ "status": "error", "kind": kind, "message": message, "diagnostics": diagnostics })
            }
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

fn usage(message: impl Into<String>) -> Failure {
    Failure::Usage(message.into())
}

/// Inline JSON (starting with `{`) or a path to a JSON file.
fn load_config<T: DeserializeOwned + Default + Serialize>(
    run: &mut Run,
    source: Option<&str>,
) -> std::result::Result<(T, Value), Failure> {
    let raw: Value = match source {
        None => json!({}),
        Some(s) if s.trim_start().starts_with('{') => {
            serde_json::from_str(s).map_err(|e| usage(format!("bad inline config: {e}")))?
        }
        Some(path) => {
            let text = run.read(Path::new(path))?;
            serde_json::from_str(&text)
                .map_err(|e| usage(format!("bad config file {path}: {e}")))?
        }
    };
    let parsed: T = serde_json::from_value(raw.clone())
        .map_err(|e| usage(format!("invalid configuration: {e}")))?;
    Ok((parsed, raw))
}

/// The explicit seed, else the config's, else a fresh one announced on stderr.
fn resolve_seed(explicit: Option<u64>, raw_config: &Value) -> u64 {
    if let Some(s) = explicit.or_else(|| raw_config.get("seed").and_then(Value::as_u64)) {
        return s;
    }
    use std::hash::{BuildHasher, Hasher};
    let mut h = std::collections::hash_map::RandomState::new().build_hasher();
    h.write_u128(
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos())
            .unwrap_or(0),
    );
    let seed = h.finish();
    eprintln!("seed: {seed}");
    seed
}

fn parse_vector(text: &str) -> std::result::Result<Vec<f64>, Failure> {
    text.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| usage(format!("`{v}` is not a number")))
        })
        .collect()
}

fn parse_stats(text: &str) -> std::result::Result<StatisticSet, Failure> {
    StatisticSet::parse(text).map_err(|e| usage(e.to_string()))
}

fn read_labels(
    run: &mut Run,
    path: &Path,
    n: usize,
    names: Option<&[String]>,
) -> std::result::Result<NodeAttributes, Failure> {
    let text = run.read(path)?;
    Ok(parse_labels_csv(&text, n, names)?)
}

fn load_input(run: &mut Run, input: &SeriesInput) -> std::result::Result<NetworkSeries, Failure> {
    let format: SeriesFormat = input
        .format
        .parse()
        .map_err(|e: TergmError| usage(e.to_string()))?;
    let text = run.read(&input.series)?;
    let mut series = parse_series(&text, format, &LoadOptions::default())?;
    if let Some(path) = &input.labels {
        let attrs = read_labels(run, path, series.n(), series.node_names())?;
        series = series.with_attributes(attrs)?;
    }
    if input.drop_prefix > 0 {
        series = series.drop_prefix(input.drop_prefix)?;
    }
    Ok(series)
}

fn write_series(run: &Run, path: &Path, series: &NetworkSeries) -> Outcome {
    let doc: Value =
        serde_json::from_str(&series_to_dense_json(series)?).map_err(TergmError::from)?;
    run.write_json(path, &doc)?;
    Ok(())
}

fn fit_outcome(result: &FitResult) -> Outcome {
    if result.converged {
        return Ok(());
    }
    Err(Failure::NotConverged {
        message: "fit did not converge; the report was written".into(),
        diagnostics: serde_json::to_value(&result.diagnostics).unwrap_or(Value::Null),
    })
}

pub fn ingest(args: &IngestArgs) -> Outcome {
    let mut run = Run::new("ingest");
    let options = LoadOptions {
        n: args.n,
        window: args.window,
        step: args.step,
    };
    let (path, format) = match (&args.events, &args.edges) {
        (Some(p), _) => (p, SeriesFormat::EventLog),
        (None, Some(p)) => (p, SeriesFormat::EdgeList),
        (None, None) => return Err(usage("need --events or --edges")),
    };
    run.config = json!({ "format": format, "window": args.window, "step": args.step, "n": args.n });
    let text = run.read(path)?;
    let mut series = parse_series(&text, format, &options)?;
    if let Some(labels) = &args.labels {
        let attrs = read_labels(&mut run, labels, series.n(), series.node_names())?;
        series = series.with_attributes(attrs)?;
    }
    write_series(&run, &args.out, &series)?;
    eprintln!("{} networks on {} nodes", series.len(), series.n());
    Ok(())
}

pub fn simulate(args: &SimulateArgs) -> Outcome {
    let mut run = Run::new("simulate");
    let stats = parse_stats(&args.stats)?;
    let theta = parse_vector(&args.theta)?;
    let law: InitialLaw = args
        .init
        .parse()
        .map_err(|e: TergmError| usage(e.to_string()))?;
    if args.length == 0 || args.n < 2 {
        return Err(usage("need --n >= 2 and --T >= 1"));
    }
    let attrs = match &args.labels {
        Some(p) => Some(read_labels(&mut run, p, args.n, None)?),
        None => None,
    };
    let labels = match &attrs {
        Some(a) => Some(a.complete_labels()?),
        None => None,
    };
    let seed = resolve_seed(args.seed, &Value::Null);
    run.seed = Some(seed);
    let sampler = SamplerConfig {
        burn_in: args.burn_in,
        initial_burn_in: args.initial_burn_in,
        ..SamplerConfig::with_seed(seed)
    };
    run.config = json!({
        "statistics": stats.names(), "theta": theta, "n": args.n, "length": args.length,
        "init": law, "burn_in": args.burn_in, "initial_burn_in": args.initial_burn_in,
    });
    let model = TransitionModel::new(
        stats.clone(),
        ParameterVector(theta.clone()),
        labels.clone(),
    )?;
    let first = sample_initial(&stats, &theta, args.n, labels.as_deref(), &sampler, law)?;
    if law == InitialLaw::SelfErgm && (first.edge_count() == 0 || first.density() >= 1.0) {
        eprintln!("warning: first network has density {}; the self-ERGM may be degenerate at this parameter", first.density());
    }
    let mut series = simulate_chain(&model, &first, args.length, &sampler)?;
    if let Some(a) = attrs {
        series = series.with_attributes(a)?;
    }
    write_series(&run, &args.out, &series)
}

pub fn estimate(args: &EstimateArgs) -> Outcome {
    let mut run = Run::new("estimate");
    let stats = parse_stats(&args.stats)?;
    let (mut config, raw): (FitConfig, Value) = load_config(&mut run, args.config.as_deref())?;
    let series = load_input(&mut run, &args.input)?;
    if args.method == Method::Sampled {
        config.seed = resolve_seed(args.seed, &raw);
        run.seed = Some(config.seed);
    }
    run.config = json!({ "statistics": stats.names(), "method": format!("{:?}", args.method).to_lowercase(), "drop_prefix": args.input.drop_prefix, "fit": config });
    let result = match args.method {
        Method::Exact => fit_exact(&stats, &series, &config)?,
        Method::Sampled => fit_sampled(&stats, &series, &config)?,
    };
    run.write_json(&args.out, &result)?;
    fit_outcome(&result)
}

fn parse_grid(text: &str) -> std::result::Result<(f64, f64, usize), Failure> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || usage(format!("grid `{text}` is not lo:hi:steps"));
    if parts.len() != 3 {
        return Err(bad());
    }
    Ok((
        parts[0].parse().map_err(|_| bad())?,
        parts[1].parse().map_err(|_| bad())?,
        parts[2].parse().map_err(|_| bad())?,
    ))
}

pub fn entropy(args: &EntropyArgs) -> Outcome {
    let mut run = Run::new("entropy");
    let stats = parse_stats(&args.stats)?;
    let q = match args
        .init
        .parse::<InitialLaw>()
        .map_err(|e| usage(e.to_string()))?
    {
        InitialLaw::Bernoulli(q) => q,
        InitialLaw::SelfErgm => return Err(usage("entropy needs a Bernoulli first network")),
    };
    if let Some(grid) = &args.theta_grid {
        let (lo, hi, steps) = parse_grid(grid)?;
        let names = stats.names();
        if names != ["D", "S"] {
            return Err(usage("--theta-grid needs --stats D,S"));
        }
        run.config =
            json!({ "statistics": names, "n": args.n, "q": q, "lo": lo, "hi": hi, "steps": steps });
        let cells = entropy_grid(args.n, q, lo, hi, steps)?;
        let mut csv = String::from("theta_d,theta_s,entropy\n");
        for c in cells {
            csv.push_str(&format!("{},{},{}\n", c.theta_d, c.theta_s, c.entropy));
        }
        run.write_csv(&args.out, &csv)?;
        return Ok(());
    }
    let theta = parse_vector(args.theta.as_deref().unwrap_or_default())?;
    run.config = json!({ "statistics": stats.names(), "theta": theta, "n": args.n, "q": q });
    let bounds = degeneracy_bounds(&stats, &theta, args.n, BoundOptions::default())?;
    let names = stats.names();
    let ds_only = names.iter().all(|s| s == "D" || s == "S");
    let (exact, method) = if args.n <= tergm_core::degeneracy::MAX_ENUMERATION_NODES
        && !stats.requires_labels()
    {
        let model = TransitionModel::new(stats.clone(), ParameterVector(theta.clone()), None)?;
        (
            Some(entropy_bruteforce(&model, &InitialDistribution::Bernoulli(q), args.n)?.entropy),
            Some("enumeration"),
        )
    } else if ds_only && args.n <= tergm_core::degeneracy::MAX_EDGECOUNT_NODES {
        (
            Some(entropy_edgecount(&stats, &theta, args.n, q)?),
            Some("edge-count classes"),
        )
    } else {
        (None, None)
    };
    run.write_json(
        &args.out,
        &json!({ "bounds": bounds, "entropy": exact, "entropy_method": method }),
    )?;
    Ok(())
}

pub fn test(args: &TestArgs) -> Outcome {
    let mut run = Run::new("test");
    let hypothesis = HypothesisSpec::parse(&args.null_stats, &args.alt_stats)
        .map_err(|e| usage(e.to_string()))?;
    let (mut ga, raw): (GAConfig, Value) = load_config(&mut run, args.ga_config.as_deref())?;
    let (fit, _): (FitConfig, Value) = load_config(&mut run, args.config.as_deref())?;
    let series = load_input(&mut run, &args.input)?;
    ga.seed = resolve_seed(args.seed, &raw);
    run.seed = Some(ga.seed);
    run.config = json!({ "null_statistics": hypothesis.null_stats.names(), "alt_statistics": hypothesis.alt_stats.names(), "ga": ga, "fit": fit, "drop_prefix": args.input.drop_prefix });
    let result = likelihood_ratio_test(&hypothesis, &series, &ga, &fit)?;
    run.write_json(&args.out, &result)?;
    Ok(())
}

pub fn classify(args: &ClassifyArgs) -> Outcome {
    let mut run = Run::new("classify");
    let stats = parse_stats(&args.stats)?;
    let (mut config, raw): (McgemConfig, Value) = load_config(&mut run, args.config.as_deref())?;
    let series = load_input(&mut run, &args.input)?;
    let known = series
        .attributes()
        .cloned()
        .ok_or_else(|| usage("classification needs labels (--labels or labels in the series)"))?;
    let truth = match &args.truth {
        None => None,
        Some(p) => {
            let t = read_labels(&mut run, p, series.n(), series.node_names())?;
            let mut indices = Vec::with_capacity(series.n());
            for (i, l) in t.labels().iter().enumerate() {
                let name = l
                    .map(|v| t.label_name(v))
                    .ok_or_else(|| usage(format!("truth file has no label for node {i}")))?;
                let idx = known
                    .alphabet()
                    .iter()
                    .position(|a| a == name)
                    .ok_or_else(|| {
                        usage(format!("truth label `{name}` is not in the label alphabet"))
                    })?;
                indices.push(idx);
            }
            Some(indices)
        }
    };
    let fit_raw = raw.get("fit").cloned().unwrap_or(Value::Null);
    config.fit.seed = resolve_seed(args.seed, &fit_raw);
    run.seed = Some(config.fit.seed);
    run.config = json!({ "statistics": stats.names(), "mcgem": config, "drop_prefix": args.input.drop_prefix });
    let result = mcgem_classify(&stats, &series, &known, &config, truth.as_deref())?;
    run.write_json(&args.out, &result)?;
    if result.converged {
        Ok(())
    } else {
        Err(Failure::NotConverged {
            message: "label inference did not converge; the report was written".into(),
            diagnostics: json!(result.diagnostics),
        })
    }
}

pub fn assess(args: &AssessArgs) -> Outcome {
    let mut run = Run::new("assess");
    let stats = parse_stats(&args.stats)?;
    let (fit, _): (FitConfig, Value) = load_config(&mut run, args.config.as_deref())?;
    let series = load_input(&mut run, &args.input)?;
    let seed = resolve_seed(args.seed, &Value::Null);
    run.seed = Some(seed);
    let config = CrossValConfig {
        fit,
        samples: args.samples,
        seed,
        ..CrossValConfig::default()
    };
    run.config = json!({ "statistics": stats.names(), "crossval": config, "drop_prefix": args.input.drop_prefix });
    let assessment = crossval_assess(&stats, &series, &config)?;
    if let Some(w) = &assessment.warning {
        eprintln!("warning: {w}");
    }
    run.write_json(&args.out, &assessment)?;
    if let Some(csv) = &args.csv {
        run.write_csv(csv, &assessment.to_csv()?)?;
    }
    Ok(())
}

pub fn recover(args: &RecoverArgs) -> Outcome {
    let mut run = Run::new("recover");
    let (mut config, raw): (RecoveryConfig, Value) = load_config(&mut run, args.config.as_deref())?;
    config.n = args.n.unwrap_or(config.n);
    config.transitions = args.transitions.unwrap_or(config.transitions);
    config.seeds = args.seeds.unwrap_or(config.seeds);
    config.seed = resolve_seed(args.seed, &raw);
    run.seed = Some(config.seed);
    run.config = json!({ "recovery": config, "note": "series length is an assumption of this experiment; see transitions" });
    let report = recovery_experiment(&config)?;
    run.write_json(&args.out, &report)?;
    if let Some(csv) = &args.csv {
        run.write_csv(csv, &report.to_csv()?)?;
    }
    Ok(())
}
