//! The per-stage experiment implementations.
//!
//! Every stage derives its randomness from `(seed, stage tag)`, so `all`
//! reproduces exactly what the individual subcommands produce, and every
//! parallel loop collects by trial index, so reports never depend on the
//! thread count.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Value};

use ldlearn::boost::{run_boost, BoostError, BoostOutcome};
use ldlearn::core::{BitRow, Hypothesis, RandomSource};
use ldlearn::info::{
    bound_theorem1, bound_theorem2, entropy_estimate_from_counts, exact_mutual_information,
    exact_output_distribution, failure_and_lemma_bounds, proposition_affine_bound, BoundReport,
    ExactBoost, InfoError, OutputAtom, SoaOnSample, Theorem1Bound,
};
use ldlearn::littlestone::{ldim_via_bruteforce, worst_case_mistakes, LittlestoneError, Soa};
use ldlearn::stable::{empirical_stability, globally_stable_learn, StabilityReport};

use crate::config::Experiment;
use crate::report::{csv_float, emit_report};
use crate::{CliError, Command, Format};

const STREAM_STABILITY: u64 = 1;
const STREAM_BOOST: u64 = 2;
const STREAM_MI: u64 = 3;
const STREAM_AFFINE: u64 = 4;

/// Stability pre-pass size used by stages that need an empirical eta.
const ETA_HAT_TRIALS: usize = 1_000;

type Learner<'a> = Box<dyn Fn(RandomSource) -> Result<Hypothesis, String> + Sync + 'a>;

fn gs_learner<'a>(exp: &'a Experiment, soa: &'a Soa) -> Learner<'a> {
    match &exp.affine {
        Some(setup) => Box::new(move |src| {
            ldlearn::affine::stable_affine_learn(&setup.params, &setup.dist, &exp.tournament, &src)
                .map_err(|e| e.to_string())
                .and_then(|r| {
                    r.predictor
                        .indicator_hypothesis()
                        .map_err(|e| e.to_string())
                })
        }),
        None => Box::new(move |src| {
            globally_stable_learn(soa, &exp.class, &exp.dist, &exp.tournament, &src)
                .map(|r| r.output)
                .map_err(|e| e.to_string())
        }),
    }
}

fn meta_record(exp: &Experiment, subcommand: &str) -> Value {
    json!({
        "record": "meta",
        "schema": crate::config::SCHEMA,
        "subcommand": subcommand,
        "config_hash": exp.config_hash,
        "seed": exp.seed,
        "artifact_version": env!("CARGO_PKG_VERSION"),
        "regime": exp.config.regime.name(),
        "domain_size": exp.class.domain_size(),
        "class_size": exp.class.len(),
        "ldim": exp.ldim,
        "k": exp.boost.k,
        "eta": exp.boost.eta,
        "n1": exp.tournament.n1,
        "leaf_size": exp.tournament.leaf_size,
    })
}

fn map_littlestone(e: LittlestoneError) -> CliError {
    match e {
        LittlestoneError::ResourceGuard { .. } | LittlestoneError::HorizonTooLarge { .. } => {
            CliError::Resource(e.to_string())
        }
        other => CliError::Config(other.to_string()),
    }
}

fn map_info(e: InfoError) -> CliError {
    match e {
        InfoError::EnumerationGuard { .. } => CliError::Resource(e.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

type Stage = (Vec<Value>, Vec<&'static str>, Vec<Vec<String>>);

pub fn dispatch(
    command: Command,
    exp: &Experiment,
    out_dir: &Path,
    format: Format,
) -> Result<Vec<PathBuf>, CliError> {
    let stages: Vec<Command> = match command {
        Command::All => {
            let mut stages = vec![
                Command::Ldim,
                Command::Soa,
                Command::Stability,
                Command::Boost,
                Command::Mi,
                Command::Bounds,
            ];
            if exp.affine.is_some() {
                stages.push(Command::Affine);
            }
            stages
        }
        single => vec![single],
    };
    let mut written: Vec<PathBuf> = Vec::new();
    for stage in stages {
        let emitted = run_stage(stage, exp).and_then(|(records, header, rows)| {
            emit_report(out_dir, stage.name(), &records, &header, &rows, format)
        });
        match emitted {
            Ok(paths) => written.extend(paths),
            Err(e) => {
                // no partial report sets: a failed stage takes the earlier
                // stages' files of this invocation with it
                for path in &written {
                    let _ = std::fs::remove_file(path);
                }
                return Err(e);
            }
        }
    }
    Ok(written)
}

fn run_stage(stage: Command, exp: &Experiment) -> Result<Stage, CliError> {
    match stage {
        Command::Ldim => cmd_ldim(exp),
        Command::Soa => cmd_soa(exp),
        Command::Stability => cmd_stability(exp),
        Command::Boost => cmd_boost(exp),
        Command::Mi => cmd_mi(exp),
        Command::Bounds => cmd_bounds(exp),
        Command::Affine => cmd_affine(exp),
        Command::All => unreachable!("dispatch expands `all`"),
    }
}

fn cmd_ldim(exp: &Experiment) -> Result<Stage, CliError> {
    let mut record = json!({
        "record": "ldim",
        "ldim": exp.ldim,
        "domain_size": exp.class.domain_size(),
        "class_size": exp.class.len(),
    });
    if exp.class.domain_size() <= 5 && exp.class.len() <= 16 {
        let oracle = ldim_via_bruteforce(&exp.class).map_err(map_littlestone)?;
        record["bruteforce_ldim"] = json!(oracle);
        record["oracle_agrees"] = json!(oracle == exp.ldim);
    }
    let rows = vec![vec![
        exp.class.domain_size().to_string(),
        exp.class.len().to_string(),
        exp.ldim.to_string(),
    ]];
    Ok((
        vec![meta_record(exp, "ldim"), record],
        vec!["domain_size", "class_size", "ldim"],
        rows,
    ))
}

fn cmd_soa(exp: &Experiment) -> Result<Stage, CliError> {
    let horizon = ((exp.ldim + 2) as usize).min(6);
    let soa = Soa::new();
    let worst = worst_case_mistakes(&soa, &exp.class, horizon).map_err(map_littlestone)?;
    let record = json!({
        "record": "soa_game",
        "ldim": exp.ldim,
        "horizon": horizon,
        "worst_case_mistakes": worst,
        "soa_optimal": worst as u32 == exp.ldim,
    });
    let rows = vec![vec![
        exp.ldim.to_string(),
        horizon.to_string(),
        worst.to_string(),
        (worst as u32 == exp.ldim).to_string(),
    ]];
    Ok((
        vec![meta_record(exp, "soa"), record],
        vec!["ldim", "horizon", "worst_case_mistakes", "soa_optimal"],
        rows,
    ))
}

fn stability_records(exp: &Experiment, report: &StabilityReport) -> Result<Vec<Value>, CliError> {
    let mut records = Vec::new();
    for entry in &report.entries {
        records.push(json!({
            "record": "hypothesis",
            "id": entry.id,
            "labels": entry.labels,
            "count": entry.count,
            "freq": entry.freq,
        }));
    }
    // heavy outputs must obey the consistency-prefix loss bound
    let eta = exp.boost.eta;
    let n1 = exp.tournament.n1 as u64;
    let loss_bound = (4.0 / eta).log2() / n1 as f64;
    for entry in report.entries.iter().filter(|e| e.freq > eta / 4.0) {
        let labels: BitRow = entry
            .labels
            .parse()
            .map_err(|e: ldlearn::core::CoreError| CliError::Config(e.to_string()))?;
        let loss = exp
            .dist
            .true_error(&Hypothesis::from_labels(labels))
            .map_err(|e| CliError::Config(e.to_string()))?;
        records.push(json!({
            "record": "heavy_output",
            "id": entry.id,
            "freq": entry.freq,
            "true_error": loss,
            "loss_bound": loss_bound,
            "within_bound": loss <= loss_bound,
        }));
    }
    records.push(json!({
        "record": "summary",
        "trials": report.trials,
        "failed_trials": report.failed_trials,
        "support": report.entries.len(),
        "eta_hat": report.eta_hat,
        "wilson_lower_99": report.wilson_lower_99,
        "wilson_radius_99": report.wilson_radius_99,
        "heaviest_id": report.heaviest.as_ref().map(|e| e.id),
        "regime": exp.config.regime.name(),
    }));
    Ok(records)
}

fn cmd_stability(exp: &Experiment) -> Result<Stage, CliError> {
    let soa = Soa::new();
    let learner = gs_learner(exp, &soa);
    let master = RandomSource::new(exp.seed).derive(STREAM_STABILITY);
    let report = empirical_stability(&learner, exp.config.trials, &master);
    let mut records = vec![meta_record(exp, "stability")];
    records.extend(stability_records(exp, &report)?);
    let rows = vec![vec![
        report.trials.to_string(),
        report.failed_trials.to_string(),
        report.entries.len().to_string(),
        csv_float(report.eta_hat),
        csv_float(report.wilson_lower_99),
        csv_float(exp.boost.eta),
        exp.tournament.n1.to_string(),
        exp.boost.k.to_string(),
        exp.config.regime.name().to_string(),
        exp.seed.to_string(),
    ]];
    Ok((
        records,
        vec![
            "trials",
            "failed_trials",
            "support",
            "eta_hat",
            "wilson_lower_99",
            "eta",
            "n1",
            "k",
            "regime",
            "seed",
        ],
        rows,
    ))
}

struct BoostSweep {
    per_run: Vec<Value>,
    failures: usize,
    errored: usize,
    counts: std::collections::BTreeMap<OutputAtom, u64>,
    ok_runs: usize,
}

fn boost_sweep(exp: &Experiment, learner: &Learner, master: &RandomSource) -> BoostSweep {
    let runs = exp.config.trials;
    let outcomes: Vec<Result<BoostOutcome, BoostError>> = (0..runs)
        .into_par_iter()
        .map(|i| run_boost(learner, &exp.boost, &master.derive(i as u64)))
        .collect();
    let mut sweep = BoostSweep {
        per_run: Vec::with_capacity(runs),
        failures: 0,
        errored: 0,
        counts: Default::default(),
        ok_runs: 0,
    };
    for (i, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(out) => {
                sweep.ok_runs += 1;
                let atom = match out.function() {
                    Some(h) => OutputAtom::Function(h.function_key().expect("domain <= 63")),
                    None => OutputAtom::Failure,
                };
                if out.is_failure() {
                    sweep.failures += 1;
                }
                *sweep.counts.entry(atom).or_insert(0) += 1;
                let mut record = out.to_json();
                record["record"] = json!("boost_run");
                record["run"] = json!(i);
                sweep.per_run.push(record);
            }
            Err(e) => {
                sweep.errored += 1;
                sweep.per_run.push(json!({
                    "record": "boost_run",
                    "run": i,
                    "outcome": "error",
                    "message": e.to_string(),
                }));
            }
        }
    }
    sweep
}

fn cmd_boost(exp: &Experiment) -> Result<Stage, CliError> {
    let soa = Soa::new();
    let learner = gs_learner(exp, &soa);
    let master = RandomSource::new(exp.seed).derive(STREAM_BOOST);
    let stability = empirical_stability(
        &learner,
        ETA_HAT_TRIALS.min(exp.config.trials.max(100)),
        &master.derive(0),
    );
    let sweep = boost_sweep(exp, &learner, &master.derive(1));

    let runs = exp.config.trials;
    let p_hat = sweep.failures as f64 / runs as f64;
    let slack = 3.0 * (p_hat * (1.0 - p_hat) / runs as f64).sqrt();
    let bound_eta = (-(exp.boost.k as f64) * exp.boost.eta * exp.boost.eta / 2.0).exp();
    let eta_hat = stability.eta_hat;
    let bound_eta_hat = (-(exp.boost.k as f64) * eta_hat * eta_hat / 2.0).exp();

    let mut records = vec![meta_record(exp, "boost")];
    records.extend(sweep.per_run);
    records.push(json!({
        "record": "summary",
        "boost_runs": runs,
        "failures": sweep.failures,
        "errored_runs": sweep.errored,
        "failure_rate": p_hat,
        "eta_hat": eta_hat,
        "failure_bound_at_eta": bound_eta,
        "failure_bound_at_eta_hat": bound_eta_hat,
        "binomial_slack_3sigma": slack,
        "within_bound": p_hat <= bound_eta_hat + slack,
        "threshold": exp.boost.threshold(),
    }));
    let rows = vec![vec![
        runs.to_string(),
        sweep.failures.to_string(),
        sweep.errored.to_string(),
        csv_float(p_hat),
        csv_float(bound_eta_hat),
        csv_float(slack),
        (p_hat <= bound_eta_hat + slack).to_string(),
        exp.boost.k.to_string(),
        csv_float(exp.boost.eta),
        csv_float(eta_hat),
        exp.seed.to_string(),
    ]];
    Ok((
        records,
        vec![
            "boost_runs",
            "failures",
            "errored_runs",
            "failure_rate",
            "failure_bound_at_eta_hat",
            "binomial_slack_3sigma",
            "within_bound",
            "k",
            "eta",
            "eta_hat",
            "seed",
        ],
        rows,
    ))
}

fn cmd_mi(exp: &Experiment) -> Result<Stage, CliError> {
    let soa = Soa::new();
    let learner = gs_learner(exp, &soa);
    let master = RandomSource::new(exp.seed).derive(STREAM_MI);
    let stability = empirical_stability(
        &learner,
        ETA_HAT_TRIALS.min(exp.config.trials.max(100)),
        &master.derive(0),
    );
    let sweep = boost_sweep(exp, &learner, &master.derive(1));

    let counts: Vec<u64> = sweep.counts.values().copied().collect();
    let estimate = entropy_estimate_from_counts(&counts, sweep.ok_runs.max(1));
    let measured =
        estimate.value_bits + estimate.bias_correction_bits + 3.0 * estimate.std_error_bits;

    let t1_eta = bound_theorem1(exp.boost.k, exp.boost.eta).map_err(map_info)?;
    let t1_eta_hat: Option<Theorem1Bound> = bound_theorem1(exp.boost.k, stability.eta_hat).ok();
    let theorem2 = bound_theorem2(exp.ldim);

    let mut records = vec![meta_record(exp, "mi")];
    records.extend(sweep.per_run);

    let mut mi_exact: Option<f64> = None;
    if let Some(oracle) = &exp.config.exact_oracle {
        let inner = SoaOnSample {
            soa: &soa,
            class: &exp.class,
        };
        let threshold = (exp.boost.eta * oracle.k as f64 / 2.0).ceil() as usize;
        let boost = ExactBoost {
            learner: &inner,
            threshold,
        };
        let exact_dist =
            exact_output_distribution(&boost, &exp.dist, oracle.n, oracle.k).map_err(map_info)?;
        let exact_mi =
            exact_mutual_information(&boost, &exp.dist, oracle.n, oracle.k).map_err(map_info)?;
        mi_exact = Some(exact_mi.value_bits);
        records.push(json!({
            "record": "exact_oracle",
            "n": oracle.n,
            "k": oracle.k,
            "threshold": threshold,
            "support": exact_dist.support,
            "marginal_entropy_bits": exact_dist.entropy_bits(),
            "mi_exact_bits": exact_mi.value_bits,
        }));
    }

    records.push(json!({
        "record": "summary",
        "boost_runs": exp.config.trials,
        "ok_runs": sweep.ok_runs,
        "errored_runs": sweep.errored,
        "entropy_hat_bits": estimate.value_bits,
        "miller_madow_bits": estimate.bias_correction_bits,
        "std_error_bits": estimate.std_error_bits,
        "measured_plus_radius_bits": measured,
        "eta_hat": stability.eta_hat,
        "theorem1_rhs_at_eta": t1_eta.total,
        "theorem1_rhs_at_eta_hat": t1_eta_hat.map(|b| b.total),
        "eta_k_margin": t1_eta.eta_k_margin,
        "within_bound_at_eta": measured <= t1_eta.total,
        "mi_exact_bits": mi_exact,
    }));

    let fl = failure_and_lemma_bounds(exp.boost.k, exp.boost.eta, exp.tournament.n1 as u64)
        .map_err(map_info)?;
    let rows = vec![vec![
        exp.ldim.to_string(),
        exp.boost.k.to_string(),
        csv_float(exp.boost.eta),
        exp.tournament.n1.to_string(),
        csv_float(t1_eta.total),
        csv_float(theorem2),
        csv_float(fl.failure_bound),
        csv_float(estimate.value_bits),
        mi_exact.map(csv_float).unwrap_or_default(),
        exp.config.trials.to_string(),
        exp.seed.to_string(),
    ]];
    Ok((records, MI_CSV_HEADER.to_vec(), rows))
}

const MI_CSV_HEADER: [&str; 11] = [
    "d",
    "k",
    "eta",
    "n1",
    "theorem1_rhs",
    "theorem2_rhs",
    "failure_bound",
    "entropy_hat",
    "mi_exact",
    "trials",
    "seed",
];

fn cmd_bounds(exp: &Experiment) -> Result<Stage, CliError> {
    let report =
        BoundReport::assemble(exp.ldim, exp.config.epsilon, exp.config.delta).map_err(map_info)?;
    let mut record = serde_json::to_value(&report).map_err(|e| CliError::Io(e.to_string()))?;
    record["record"] = json!("bounds");
    record["regime"] = json!(exp.config.regime.name());
    let rows = vec![vec![
        report.d.to_string(),
        report.k.to_string(),
        csv_float(report.eta),
        report.n1.to_string(),
        csv_float(report.theorem1_rhs),
        csv_float(report.theorem2_rhs),
        csv_float(report.failure_bound),
        String::new(),
        String::new(),
        exp.config.trials.to_string(),
        exp.seed.to_string(),
    ]];
    Ok((
        vec![meta_record(exp, "bounds"), record],
        MI_CSV_HEADER.to_vec(),
        rows,
    ))
}

fn cmd_affine(exp: &Experiment) -> Result<Stage, CliError> {
    let setup = exp
        .affine
        .as_ref()
        .ok_or_else(|| CliError::Config("the affine stage needs an affine class".into()))?;
    let soa = Soa::new();
    let learner = gs_learner(exp, &soa);
    let master = RandomSource::new(exp.seed).derive(STREAM_AFFINE);

    let stability = empirical_stability(&learner, exp.config.trials, &master.derive(0));
    let sweep = boost_sweep(exp, &learner, &master.derive(1));
    let counts: Vec<u64> = sweep.counts.values().copied().collect();
    let estimate = entropy_estimate_from_counts(&counts, sweep.ok_runs.max(1));
    let measured =
        estimate.value_bits + estimate.bias_correction_bits + 3.0 * estimate.std_error_bits;
    let proposition = proposition_affine_bound(setup.params.d);

    let mut records = vec![meta_record(exp, "affine")];
    records.push(json!({
        "record": "class_check",
        "q": setup.params.q,
        "l": setup.params.l,
        "d": setup.params.d,
        "ldim": exp.ldim,
        "ldim_matches_d_plus_1": exp.ldim == setup.params.d + 1,
    }));
    records.extend(stability_records(exp, &stability)?);
    records.push(json!({
        "record": "boosted_entropy",
        "boost_runs": exp.config.trials,
        "errored_runs": sweep.errored,
        "failures": sweep.failures,
        "entropy_hat_bits": estimate.value_bits,
        "miller_madow_bits": estimate.bias_correction_bits,
        "std_error_bits": estimate.std_error_bits,
        "measured_plus_radius_bits": measured,
        "proposition_rhs": proposition,
        "within_bound": measured <= proposition,
    }));
    let rows = vec![vec![
        setup.params.q.to_string(),
        setup.params.l.to_string(),
        setup.params.d.to_string(),
        exp.ldim.to_string(),
        exp.config.trials.to_string(),
        csv_float(stability.eta_hat),
        csv_float(estimate.value_bits),
        csv_float(proposition),
        (measured <= proposition).to_string(),
        exp.seed.to_string(),
    ]];
    Ok((
        records,
        vec![
            "q",
            "l",
            "d",
            "ldim",
            "trials",
            "eta_hat",
            "boosted_entropy",
            "proposition_rhs",
            "within_bound",
            "seed",
        ],
        rows,
    ))
}
