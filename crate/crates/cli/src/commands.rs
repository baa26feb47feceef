use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use portune::dataset::{
    build_slowdown_matrix, ingest_clblast_db_with, ingest_csv, ClblastOptions, ClblastStats,
    CsvSchema, KernelInput, PenaltyPolicy, PerformanceDataset, SlowdownMatrix, SyntheticSpec,
};
use portune::error::{Error, Result};
use portune::evaluation::{
    divergence_sweep, evaluate, fleet_experiment, holdout_generalization, write_cdf_csv,
    write_fleet_csv, write_sweep_csv, HoldoutPlan, JobTemplate,
};
use portune::objectives::{FleetSpec, Objective};
use portune::selectors::{run_selection, Method, SelectionJob, SelectionResult};

use crate::{
    DatasetArgs, FleetArgs, Format, GenerateArgs, HoldoutArgs, IngestArgs, ObjectiveKind,
    ReportArgs, ScopeArgs, SweepArgs, TuneArgs,
};

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn load_dataset(args: &DatasetArgs) -> Result<(PerformanceDataset, Option<ClblastStats>)> {
    let reader = open(&args.dataset)?;
    match args.format {
        Format::Csv => {
            let schema = match &args.schema {
                Some(path) => serde_json::from_reader(open(path)?)?,
                None => CsvSchema::default(),
            };
            Ok((ingest_csv(reader, &schema)?, None))
        }
        Format::Clblast => {
            let options = ClblastOptions {
                kernel_family: Some(args.family.clone()),
                precision: Some(args.precision.clone()),
            };
            let (ds, stats) = ingest_clblast_db_with(reader, &options)?;
            Ok((ds, Some(stats)))
        }
        Format::Canonical => Ok((PerformanceDataset::read_canonical(reader)?, None)),
    }
}

fn parse_inputs(inputs: &[String]) -> Result<BTreeSet<KernelInput>> {
    inputs
        .iter()
        .map(|s| {
            KernelInput::parse_key(s)
                .ok_or_else(|| Error::InvalidJob(format!("bad input key {s:?}, expected MxNxK")))
        })
        .collect()
}

fn resolve_scope(sm: &SlowdownMatrix, scope: &ScopeArgs) -> Result<Vec<usize>> {
    let devices: Option<BTreeSet<String>> =
        scope.devices.as_ref().map(|d| d.iter().cloned().collect());
    let inputs = match &scope.inputs {
        Some(keys) => Some(parse_inputs(keys)?),
        None => None,
    };
    let rows = sm.scope_filter(devices.as_ref(), inputs.as_ref());
    if rows.is_empty() {
        return Err(Error::EmptyScope);
    }
    Ok(rows)
}

fn print_summary(ds: &PerformanceDataset, stats: Option<&ClblastStats>) {
    println!("records:      {}", ds.records().len());
    println!("environments: {}", ds.environments().len());
    println!("variants:     {}", ds.variants().len());
    println!("param arity:  {}", ds.param_arity());
    println!("timing:       {}", ds.timing());
    if let Some(stats) = stats {
        println!("pruned (no driver): {}", stats.pruned_missing_driver);
        println!("warnings:     {}", stats.warnings());
    }
}

pub fn ingest(args: IngestArgs) -> Result<()> {
    let (ds, stats) = load_dataset(&DatasetArgs {
        dataset: args.dataset,
        format: args.format,
        schema: args.schema,
        family: args.family,
        precision: args.precision,
    })?;
    ds.write_canonical(create(&args.out)?)?;
    print_summary(&ds, stats.as_ref());
    println!("wrote {}", args.out.display());
    Ok(())
}

pub fn generate(args: GenerateArgs) -> Result<()> {
    let inputs = match &args.inputs {
        Some(keys) => parse_inputs(keys)?.into_iter().collect(),
        None => {
            let mut grid = Vec::new();
            for &m in &args.grid {
                for &n in &args.grid {
                    for &k in &args.grid {
                        grid.push(KernelInput { m, n, k });
                    }
                }
            }
            grid
        }
    };
    let spec = SyntheticSpec {
        devices: args.devices,
        inputs,
        variants: args.variants,
        specialists: args.specialists,
        gap: args.gap,
        gap_spread: args.gap_spread,
        param_arity: args.param_arity,
    };
    let planted = spec.generate(args.seed)?;
    planted.dataset.write_canonical(create(&args.out)?)?;
    if let Some(path) = &args.plant_out {
        let mut out = create(path)?;
        serde_json::to_writer_pretty(&mut out, &planted.specialists)?;
        out.write_all(b"\n")?;
    }
    print_summary(&planted.dataset, None);
    println!("wrote {}", args.out.display());
    Ok(())
}

fn load_fleet(path: &Path) -> Result<FleetSpec> {
    Ok(serde_json::from_reader(open(path)?)?)
}

pub fn tune(args: TuneArgs) -> Result<()> {
    let (ds, _) = load_dataset(&args.dataset)?;
    let sm = build_slowdown_matrix(&ds, PenaltyPolicy::DatasetMax)?;
    let scope = resolve_scope(&sm, &args.scope)?;
    let objective = match args.objective {
        ObjectiveKind::Library => Objective::LibraryGeomean,
        ObjectiveKind::Fleet => {
            let path = args.fleet.as_ref().ok_or_else(|| {
                Error::InvalidJob("--objective fleet requires --fleet <spec.json>".into())
            })?;
            Objective::FleetRate {
                fleet: load_fleet(path)?,
            }
        }
    };
    let job = SelectionJob {
        scope,
        objective,
        kappa: args.kappa,
        budget_ms: args.budget_ms,
        seed: args.seed,
        method: args.method.parse::<Method>()?,
        enum_cap: args.enum_cap,
    };
    let mut outcome = run_selection(&job, &sm)?;
    if args.no_timestamp {
        outcome.result.strip_timing();
    }

    std::fs::create_dir_all(&args.out)?;
    let result_path = args.out.join("result.json");
    let mut out = create(&result_path)?;
    serde_json::to_writer_pretty(&mut out, &outcome.result)?;
    out.write_all(b"\n")?;
    outcome
        .log
        .write_csv(create(&args.out.join("iterations.csv"))?, !args.no_timestamp)?;

    println!(
        "method:      {}\nkappa:       {} (chosen {})\ncost:        {}\nevaluations: {}",
        outcome.result.method,
        outcome.result.kappa,
        outcome.result.chosen.len(),
        outcome.result.cost,
        outcome.result.evaluations,
    );
    println!("wrote {}", result_path.display());
    Ok(())
}

/// Re-anchors a stored result to the current matrix: every chosen
/// configuration must still exist; indices are rewritten if the variant
/// union shifted.
fn reanchor(result: &mut SelectionResult, sm: &SlowdownMatrix) -> Result<()> {
    let mut old_to_new = std::collections::HashMap::new();
    let mut new_indices = Vec::with_capacity(result.chosen.len());
    for (slot, config) in result.chosen_configs.iter().enumerate() {
        let new = sm
            .variants()
            .iter()
            .position(|v| v == config)
            .ok_or_else(|| {
                Error::ResultMismatch(format!(
                    "chosen configuration {config} is not in the dataset"
                ))
            })?;
        old_to_new.insert(result.chosen.indices()[slot], new);
        new_indices.push(new);
    }
    result.chosen = portune::objectives::CandidateSet::new(new_indices, sm.n_variants())?;
    for w in &mut result.winners {
        w.variant = *old_to_new.get(&w.variant).ok_or_else(|| {
            Error::ResultMismatch("winner references a variant outside the chosen set".into())
        })?;
    }
    Ok(())
}

pub fn report(args: ReportArgs) -> Result<()> {
    let (ds, _) = load_dataset(&args.dataset)?;
    let sm = build_slowdown_matrix(&ds, PenaltyPolicy::DatasetMax)?;
    let mut result: SelectionResult = serde_json::from_reader(open(&args.result)?)?;
    reanchor(&mut result, &sm)?;
    let scope = resolve_scope(&sm, &args.scope)?;
    let fleet = match &args.fleet {
        Some(path) => Some(load_fleet(path)?),
        None => None,
    };
    let report = evaluate(&result, &sm, &scope, fleet.as_ref())?;

    std::fs::create_dir_all(&args.out)?;
    let mut out = create(&args.out.join("report.json"))?;
    serde_json::to_writer_pretty(&mut out, &report)?;
    out.write_all(b"\n")?;
    write_cdf_csv(&report, create(&args.out.join("cdf.csv"))?)?;

    println!(
        "environments: {}\ngeomean:      {}\nmedian:       {}",
        report.per_env.len(),
        report.geomean,
        report.median
    );
    if let Some(rate) = report.fleet_rate {
        println!("fleet rate:   {rate} tasks/ms");
    }
    Ok(())
}

fn workers_or_default(workers: Option<usize>) -> usize {
    workers.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    })
}

pub fn sweep(args: SweepArgs) -> Result<()> {
    let (ds, _) = load_dataset(&args.dataset)?;
    let sm = build_slowdown_matrix(&ds, PenaltyPolicy::DatasetMax)?;
    let scope = resolve_scope(&sm, &args.scope)?;
    let template = JobTemplate {
        method: args.method.parse::<Method>()?,
        objective: Objective::LibraryGeomean,
        kappa: args.kappas[0],
        budget_ms: args.budget_ms,
        seed: args.seed,
        enum_cap: args.enum_cap,
    };
    let reports = divergence_sweep(
        &sm,
        &template,
        &scope,
        &args.kappas,
        args.runs,
        workers_or_default(args.workers),
    )?;

    std::fs::create_dir_all(&args.out)?;
    let mut out = create(&args.out.join("sweep.json"))?;
    serde_json::to_writer_pretty(&mut out, &reports)?;
    out.write_all(b"\n")?;
    write_sweep_csv(&reports, create(&args.out.join("sweep.csv"))?)?;

    for r in &reports {
        println!(
            "kappa {:>3}: geomean {} (mean of {} runs {})",
            r.kappa,
            r.geomean,
            r.runs,
            r.geomean_mean_of_runs.unwrap_or(r.geomean)
        );
    }
    Ok(())
}

pub fn holdout(args: HoldoutArgs) -> Result<()> {
    let (ds, _) = load_dataset(&args.dataset)?;
    let eval_set: BTreeSet<&str> = args.eval_devices.iter().map(|s| s.as_str()).collect();
    let eval_environments = ds
        .environments()
        .into_iter()
        .filter(|e| eval_set.contains(e.device.name.as_str()))
        .collect::<Vec<_>>();
    let plan = HoldoutPlan {
        train_devices: args.train_devices.iter().cloned().collect(),
        eval_environments,
        repetitions: args.runs,
        unseen: args.unseen,
    };
    let template = JobTemplate {
        method: args.method.parse::<Method>()?,
        objective: Objective::LibraryGeomean,
        kappa: args.kappa,
        budget_ms: args.budget_ms,
        seed: args.seed,
        enum_cap: args.enum_cap,
    };
    let outcome = holdout_generalization(&ds, &plan, &template)?;

    std::fs::create_dir_all(&args.out)?;
    let mut out = create(&args.out.join("holdout.json"))?;
    serde_json::to_writer_pretty(&mut out, &outcome)?;
    out.write_all(b"\n")?;
    write_cdf_csv(&outcome.unseen, create(&args.out.join("unseen_cdf.csv"))?)?;
    write_cdf_csv(&outcome.baseline, create(&args.out.join("baseline_cdf.csv"))?)?;

    println!(
        "unseen geomean:   {} (median of {} runs)\nbaseline geomean: {}\neval-row reads during selection: {}",
        outcome.unseen.geomean,
        outcome.unseen.runs,
        outcome.baseline.geomean,
        outcome.eval_row_reads_during_selection
    );
    Ok(())
}

pub fn fleet(args: FleetArgs) -> Result<()> {
    let (ds, _) = load_dataset(&args.dataset)?;
    let sm = build_slowdown_matrix(&ds, PenaltyPolicy::DatasetMax)?;
    let scope = resolve_scope(&sm, &args.scope)?;
    let fleet = load_fleet(&args.fleet)?;
    let methods = args
        .methods
        .iter()
        .map(|m| m.parse::<Method>())
        .collect::<Result<Vec<_>>>()?;
    let report = fleet_experiment(
        &sm,
        &scope,
        &fleet,
        &methods,
        args.kappa,
        args.runs,
        args.seed,
        args.budget_ms,
        workers_or_default(args.workers),
    )?;

    std::fs::create_dir_all(&args.out)?;
    let mut out = create(&args.out.join("fleet.json"))?;
    serde_json::to_writer_pretty(&mut out, &report)?;
    out.write_all(b"\n")?;
    write_fleet_csv(&report, create(&args.out.join("fleet.csv"))?)?;

    for entry in &report.entries {
        println!("{:<20} median rate {} tasks/ms", entry.label, entry.median_rate);
    }
    Ok(())
}
