use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use iaqsim::engine::{run_resolved, EngineError, RunOutput};
use iaqsim::log::{JsonlWriter, NullSink};
use iaqsim::metrics::{write_csv, write_json as write_metrics_json};
use iaqsim::rng::derive_seed;
use iaqsim::scenario::{preset, ResolvedScenario, PRESETS};
use iaqsim::{Scenario, ScenarioError};
use rayon::prelude::*;
use serde::Serialize;

use crate::output::{io_err, prepare_dir, sha256_hex, write_atomic, write_json, Manifest, SweepInfo};
use crate::{CliError, Format, OutputArgs, ScenarioArg};

struct Loaded {
    scenario: Scenario,
    source: String,
}

fn load(arg: &ScenarioArg) -> Result<Loaded, CliError> {
    if let Some(s) = preset(&arg.scenario) {
        return Ok(Loaded { scenario: s, source: format!("preset:{}", arg.scenario) });
    }
    let path = Path::new(&arg.scenario);
    let text = fs::read_to_string(path).map_err(|e| {
        let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
        CliError::Io(format!(
            "cannot read scenario {}: {e} (built-in scenarios: {})",
            path.display(),
            names.join(", ")
        ))
    })?;
    let scenario = Scenario::from_toml(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    Ok(Loaded { scenario, source: path.display().to_string() })
}

fn invalid(e: ScenarioError) -> CliError {
    match e {
        ScenarioError::UnknownParameter { .. } => CliError::Usage(e.to_string()),
        _ => CliError::Invalid(e.to_string()),
    }
}

fn engine_err(e: EngineError) -> CliError {
    match e {
        EngineError::Scenario(e) => invalid(e),
        EngineError::Sink(e) => CliError::Io(format!("writing the event log: {e}")),
        other => CliError::Internal(other.to_string()),
    }
}

pub fn validate(arg: &ScenarioArg) -> Result<(), CliError> {
    let loaded = load(arg)?;
    match loaded.scenario.validate() {
        Ok(r) => {
            println!("ok: {} ({} nodes, {} days)", r.name, r.nodes.len(), r.days());
            Ok(())
        }
        Err(ScenarioError::Invalid(violations)) => {
            for v in &violations {
                println!("{v}");
            }
            Err(CliError::Invalid(format!("{}: {} violation(s)", loaded.source, violations.len())))
        }
        Err(e) => Err(invalid(e)),
    }
}

#[derive(Debug, Serialize)]
struct Summary {
    scenario: String,
    seed: u64,
    days: u64,
    generated: u64,
    delivered: u64,
    throughput: Option<f64>,
    lost_on_link: u64,
    lost_asleep: u64,
    forwarder: Option<String>,
    energy_j: BTreeMap<String, f64>,
}

impl Summary {
    fn new(r: &ResolvedScenario, out: &RunOutput) -> Self {
        let m = &out.metrics;
        Summary {
            scenario: r.name.clone(),
            seed: r.master_seed,
            days: r.days(),
            generated: m.generated,
            delivered: m.delivered,
            throughput: m.throughput,
            lost_on_link: m.lost_on_link,
            lost_asleep: m.lost_asleep,
            forwarder: m.forwarder().map(|n| n.node.clone()),
            energy_j: m.nodes.iter().map(|n| (n.node.clone(), n.energy_j)).collect(),
        }
    }
}

fn out_dir(output: &OutputArgs, default_name: String) -> PathBuf {
    output.out.clone().unwrap_or_else(|| output.out_root.join(default_name))
}

pub fn run(arg: &ScenarioArg, seed: Option<u64>, output: &OutputArgs) -> Result<(), CliError> {
    let Loaded { mut scenario, source } = load(arg)?;
    if let Some(seed) = seed {
        scenario.master_seed = seed;
    }
    let resolved = scenario.validate().map_err(invalid)?;
    let dir = out_dir(output, format!("{}-seed{}", scenario.name, scenario.master_seed));
    prepare_dir(&dir)?;

    let started = Instant::now();
    let text = scenario.to_toml();
    write_atomic(&dir.join("scenario.toml"), text.as_bytes())?;
    let events = dir.join("events.jsonl");
    let file = fs::File::create(&events).map_err(|e| io_err("cannot write", &events, e))?;
    let mut sink = JsonlWriter::new(BufWriter::new(file));
    let out = run_resolved(&resolved, &mut sink).map_err(engine_err)?;

    let mut files = vec!["scenario.toml".to_string(), "events.jsonl".to_string()];
    let metric_files = match output.format {
        Format::Csv => write_csv(&dir, &out.metrics, &out.context),
        Format::Json => write_metrics_json(&dir, &out.metrics),
    }
    .map_err(|e| CliError::Io(format!("writing metrics to {}: {e}", dir.display())))?;
    files.extend(metric_files);
    let summary = Summary::new(&resolved, &out);
    write_json(&dir.join("summary.json"), &summary)?;
    files.push("summary.json".into());
    files.push("manifest.json".into());

    let manifest = Manifest {
        command: format!("iaqsim run --scenario scenario.toml --seed {}", scenario.master_seed),
        scenario_source: source,
        scenario_file: "scenario.toml".into(),
        scenario_sha256: sha256_hex(text.as_bytes()),
        seed: scenario.master_seed,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        output_dir: dir.clone(),
        files,
        wall_clock_s: started.elapsed().as_secs_f64(),
        sweep: None,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;

    println!("scenario {}, seed {}, {} days", summary.scenario, summary.seed, summary.days);
    match summary.throughput {
        Some(t) => println!("throughput {t:.4} ({} of {} delivered)", summary.delivered, summary.generated),
        None => println!("throughput n/a (nothing generated)"),
    }
    println!("energy (J):");
    for n in &out.metrics.nodes {
        println!("  {:<14} {:>14.3}", n.node, n.energy_j);
    }
    println!("outputs in {}", dir.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct SweepRow {
    value: f64,
    replica: u32,
    seed: u64,
    throughput: Option<f64>,
    generated: u64,
    delivered: u64,
    energy_j: BTreeMap<String, f64>,
    gas_sensor_j: BTreeMap<String, f64>,
}

pub fn sweep(
    arg: &ScenarioArg,
    param: &str,
    values: &[f64],
    replicas: u32,
    seed: Option<u64>,
    jobs: usize,
    output: &OutputArgs,
) -> Result<(), CliError> {
    let Loaded { mut scenario, source } = load(arg)?;
    if replicas == 0 {
        return Err(CliError::Usage("--replicas must be at least 1".into()));
    }
    let base_seed = seed.unwrap_or(scenario.master_seed);
    scenario.master_seed = base_seed;
    scenario.validate().map_err(invalid)?;
    scenario.clone().set_parameter(param, values[0]).map_err(invalid)?;
    let dir = out_dir(output, format!("{}-sweep-{}", scenario.name, param));
    prepare_dir(&dir)?;

    let started = Instant::now();
    let replica_seeds: Vec<u64> = (0..replicas).map(|r| derive_seed(base_seed, "replica", &r.to_string())).collect();
    let cases: Vec<(f64, u32, u64)> = values
        .iter()
        .flat_map(|&v| replica_seeds.iter().enumerate().map(move |(r, &s)| (v, r as u32, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Internal(e.to_string()))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        cases
            .par_iter()
            .map(|&(value, replica, seed)| {
                let mut s = scenario.clone();
                s.set_parameter(param, value).map_err(invalid)?;
                s.master_seed = seed;
                let r = s
                    .validate()
                    .map_err(|e| CliError::Invalid(format!("{param} = {value}: {e}")))?;
                let out = run_resolved(&r, &mut NullSink).map_err(engine_err)?;
                let m = &out.metrics;
                Ok(SweepRow {
                    value,
                    replica,
                    seed,
                    throughput: m.throughput,
                    generated: m.generated,
                    delivered: m.delivered,
                    energy_j: m.nodes.iter().map(|n| (n.node.clone(), n.energy_j)).collect(),
                    gas_sensor_j: m
                        .nodes
                        .iter()
                        .map(|n| (n.node.clone(), n.energy_by_component_j["gas_sensor"]))
                        .collect(),
                })
            })
            .collect::<Result<Vec<_>, CliError>>()
    })?;

    let text = scenario.to_toml();
    write_atomic(&dir.join("scenario.toml"), text.as_bytes())?;
    let table = match output.format {
        Format::Csv => {
            write_sweep_csv(&dir.join("sweep.csv"), param, &rows)?;
            "sweep.csv"
        }
        Format::Json => {
            write_json(&dir.join("sweep.json"), &rows)?;
            "sweep.json"
        }
    };
    let values_arg: Vec<String> = values.iter().map(|v| v.to_string()).collect();
    let manifest = Manifest {
        command: format!(
            "iaqsim sweep --scenario scenario.toml --param {param} --values {} --replicas {replicas} --seed {base_seed}",
            values_arg.join(",")
        ),
        scenario_source: source,
        scenario_file: "scenario.toml".into(),
        scenario_sha256: sha256_hex(text.as_bytes()),
        seed: base_seed,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        output_dir: dir.clone(),
        files: vec!["scenario.toml".into(), table.into(), "manifest.json".into()],
        wall_clock_s: started.elapsed().as_secs_f64(),
        sweep: Some(SweepInfo { parameter: param.into(), values: values.to_vec(), replicas, replica_seeds }),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;

    println!("{param:>24}  mean throughput");
    for &v in values {
        let tp: Vec<f64> = rows.iter().filter(|r| r.value == v).filter_map(|r| r.throughput).collect();
        let mean = tp.iter().sum::<f64>() / tp.len().max(1) as f64;
        println!("{v:>24}  {mean:.4}");
    }
    println!("outputs in {}", dir.display());
    Ok(())
}

fn write_sweep_csv(path: &Path, param: &str, rows: &[SweepRow]) -> Result<(), CliError> {
    let err = |e: csv::Error| io_err("cannot write", path, e);
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    let nodes: Vec<&String> = rows.first().map(|r| r.energy_j.keys().collect()).unwrap_or_default();
    let mut header = vec!["parameter".to_string(), "value".into(), "replica".into(), "seed".into()];
    header.extend(["throughput".into(), "generated".into(), "delivered".into()]);
    header.extend(nodes.iter().map(|n| format!("energy_{n}_j")));
    header.extend(nodes.iter().map(|n| format!("gas_sensor_{n}_j")));
    w.write_record(&header).map_err(err)?;
    for r in rows {
        let mut rec = vec![
            param.to_string(),
            r.value.to_string(),
            r.replica.to_string(),
            r.seed.to_string(),
            r.throughput.map_or_else(String::new, |t| t.to_string()),
            r.generated.to_string(),
            r.delivered.to_string(),
        ];
        rec.extend(nodes.iter().map(|n| r.energy_j[*n].to_string()));
        rec.extend(nodes.iter().map(|n| r.gas_sensor_j[*n].to_string()));
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| io_err("cannot write", path, e))
}
