//! The `verify`, `solve` and `decay` subcommands.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use leraylab::lab::{self, classify_decay, decay_fit, DecayFit, DecayModel};
use leraylab::lp::DyadicFamily;
use leraylab::picard::{picard_profile_solve, PicardOptions};
use leraylab::report::VerificationReport;
use leraylab::semigroup::{kernel_annulus_decay_probe, scaled_probe_times, DuhamelQuadrature};
use leraylab::solver::{
    evolve_from_sigma, make_initial_data, profile_extract, profile_residual, self_similarity_residual,
    EvolveOptions, HistoryRecord, SigmaSpec, TimeStepper,
};
use leraylab::spectral::leray_project;
use leraylab::{Grid, Rank, SpectralField};
use serde::Serialize;

use crate::config::{ModelChoice, Mode, RunConfig, Suite};
use crate::snapshot::{read_snapshot, write_snapshot, SnapshotError};
use crate::{write_jsonl, write_summary, CliError, Outcome};

fn config_err(e: leraylab::Error) -> CliError {
    CliError::Config(e.to_string())
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Config(format!("{name} must be positive, got {v}")))
    }
}

fn require_alpha(c: &RunConfig, what: &str) -> Result<f64, CliError> {
    let a = c.alpha.ok_or_else(|| CliError::Config(format!("{what} requires --alpha")))?;
    if !(a > 0.0 && a <= 1.0) {
        return Err(CliError::Config(format!("alpha must lie in (0, 1], got {a}")));
    }
    Ok(a)
}

fn make_out(c: &RunConfig) -> Result<PathBuf, CliError> {
    let out = c.out_dir();
    fs::create_dir_all(&out).map_err(|e| CliError::Output(format!("cannot create {}: {e}", out.display())))?;
    Ok(out)
}

// ---------------------------------------------------------------- verify

struct VerifyPlan {
    suite: Suite,
    grid: Grid,
    seed: u64,
    trials: usize,
    qs: Vec<i32>,
}

fn verify_plan(c: &RunConfig) -> Result<VerifyPlan, CliError> {
    let suite = c.suite.ok_or_else(|| CliError::Config("verify requires --suite".into()))?;
    let (n0, l0) = match suite {
        Suite::CommutatorX => (32, 2.0 * std::f64::consts::PI),
        Suite::Bernstein | Suite::NewBernstein | Suite::KernelDecay => (64, std::f64::consts::PI),
        _ => (64, 2.0 * std::f64::consts::PI),
    };
    let grid = Grid::new(c.dim.unwrap_or(2), c.n.unwrap_or(n0), c.box_or(l0)?).map_err(config_err)?;
    let fam = DyadicFamily::new(&grid);
    let (lo, hi) = (fam.q_min(), fam.q_max_interior());
    let qs = match &c.q {
        Some(q) => {
            if let Some(bad) = q.iter().find(|&&q| q < lo || q > hi) {
                return Err(CliError::Config(format!("q = {bad} outside the representable range [{lo}, {hi}]")));
            }
            q.clone()
        }
        None if suite == Suite::KernelDecay => (lo.max(2)..=hi.min(4)).collect(),
        None => (lo.max(1)..=hi.min(4)).collect(),
    };
    if qs.is_empty() && suite != Suite::Compactness {
        return Err(CliError::Config(format!("no dyadic index available in [{lo}, {hi}] for this grid")));
    }
    let trials = c.trials.unwrap_or(match suite {
        Suite::CommutatorX => 50,
        Suite::WeightedCommutator | Suite::RieszWeight => 4,
        _ => 20,
    });
    if trials == 0 {
        return Err(CliError::Config("trials must be at least 1".into()));
    }
    Ok(VerifyPlan {
        suite,
        grid,
        seed: c.seed.unwrap_or(crate::DEFAULT_SEED),
        trials,
        qs,
    })
}

fn compactness_report(grid: &Grid, p: f64, seed: u64) -> Result<VerificationReport, leraylab::Error> {
    let u = leray_project(&SpectralField::random(grid, Rank::Vector, seed))?;
    let v = SpectralField::random(grid, Rank::Vector, seed.wrapping_add(1));
    let fam = DyadicFamily::new(grid);
    let mut rep = VerificationReport::new("compactness", "high_tail nonincreasing in N; observed kappa finite")
        .param("p", p)
        .param("seed", seed as f64);
    let mut last = f64::INFINITY;
    let mut worst_increase = 0.0f64;
    for n in fam.q_min()..=fam.q_max() {
        let s = lab::compactness_split(&u, &v, n, p)?;
        rep.set_param(&format!("high_tail_N{n}"), s.high_tail);
        rep.set_param(&format!("kappa_N{n}"), s.kappa);
        rep.measure(format!("kappa_N{n}"), s.kappa, 0.0, f64::MAX);
        worst_increase = worst_increase.max(s.high_tail - last);
        last = s.high_tail;
    }
    rep.measure("high_tail_increase", worst_increase.max(0.0), 0.0, 0.0);
    rep.note("the constant C_eps of the splitting is not explicit; kappa is reported, not bounded");
    Ok(rep)
}

pub fn cmd_verify(c: &RunConfig) -> Result<Outcome, CliError> {
    let plan = verify_plan(c)?;
    let alpha = match plan.suite {
        Suite::NewBernstein | Suite::KernelDecay => Some(require_alpha(c, plan.suite.name())?),
        _ => None,
    };
    let p = c.p.unwrap_or(2.0);
    let s = c.s.unwrap_or(match plan.suite {
        Suite::WeightedCommutator => 0.5,
        _ => 1.0,
    });
    let beta = c.beta.unwrap_or(match plan.suite {
        Suite::WeightedCommutator => 0.25,
        _ => 1.0,
    });
    let tol = c.tol.unwrap_or(1e-9);
    let out = make_out(c)?;
    let g = &plan.grid;
    let started = Instant::now();
    let reports: Vec<VerificationReport> = match plan.suite {
        Suite::Bernstein => vec![lab::verify_bernstein(g, s, p, &plan.qs, plan.trials, plan.seed)],
        Suite::NewBernstein => vec![lab::verify_new_bernstein(g, alpha.unwrap(), p, &plan.qs, plan.trials, plan.seed)],
        Suite::CommutatorX => vec![lab::verify_commutator_x(g, &plan.qs, plan.trials, plan.seed, tol)],
        Suite::WeightedCommutator => vec![lab::verify_weighted_commutator(g, s, beta, plan.trials, plan.seed)],
        Suite::RieszWeight => vec![lab::verify_riesz_weight_equiv(g, beta, plan.trials, plan.seed)],
        Suite::Compactness => vec![compactness_report(g, p, plan.seed)],
        Suite::KernelDecay => {
            let a = alpha.unwrap();
            plan.qs.iter().map(|&q| kernel_annulus_decay_probe(g, q, a, &scaled_probe_times(q, a), p, plan.seed)).collect()
        }
    }
    .into_iter()
    .collect::<Result<_, _>>()
    .map_err(config_err)?;
    let reports: Vec<VerificationReport> = reports
        .into_iter()
        .map(|r| {
            r.param("grid_n", g.n() as f64)
                .param("grid_dim", g.dim() as f64)
                .param("box_length", g.box_length())
                .param("seed", plan.seed as f64)
        })
        .collect();
    let stem = format!("verify_{}", plan.suite.name());
    write_jsonl(&out.join(format!("{stem}.jsonl")), &reports)?;
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let worst = r.failures().next().map_or("-".to_string(), |m| format!("{} = {:.3e} not in [{:.3e}, {:.3e}]", m.id, m.value, m.lo, m.hi));
            vec![r.name.clone(), r.verdict.to_string(), r.measured.len().to_string(), worst]
        })
        .collect();
    let passed = reports.iter().all(VerificationReport::passed);
    write_summary(
        &out.join(format!("{stem}_summary.txt")),
        &format!("verify {} seed {} ({:.1} s)", plan.suite.name(), plan.seed, started.elapsed().as_secs_f64()),
        &["check", "verdict", "measurements", "first failure"],
        &rows,
    )?;
    Ok(Outcome { passed, message: format!("{} report(s), {}", reports.len(), if passed { "all pass" } else { "failures" }) })
}

// ---------------------------------------------------------------- solve

#[derive(Serialize)]
struct SolveSummary<'a> {
    mode: &'a str,
    alpha: f64,
    amplitude: f64,
    dim: usize,
    n: usize,
    box_length: f64,
    seed: u64,
    status: &'a str,
    reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    self_similarity_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    profile_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    duhamel_tail_relative: Option<f64>,
    records: usize,
    files: Vec<String>,
}

fn write_history(path: &Path, history: &[HistoryRecord]) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(|e| CliError::Output(e.to_string()))?;
    w.write_record(["iter_or_step", "time", "l2_update", "div_residual", "max_velocity"]).map_err(|e| CliError::Output(e.to_string()))?;
    for h in history {
        w.serialize(h).map_err(|e| CliError::Output(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Output(e.to_string()))
}

fn snap(path: &Path, f: &SpectralField, alpha: f64, t: f64, files: &mut Vec<String>) -> Result<(), CliError> {
    write_snapshot(path, f, alpha, t).map_err(|e| CliError::Output(e.to_string()))?;
    files.push(path.file_name().unwrap().to_string_lossy().into_owned());
    Ok(())
}

pub fn cmd_solve(c: &RunConfig) -> Result<Outcome, CliError> {
    let mode = c.mode.unwrap_or(Mode::Evolve);
    let alpha = c.alpha.unwrap_or(1.0);
    if !(5.0 / 6.0 - 1e-3..=1.0).contains(&alpha) {
        return Err(CliError::Config(format!("alpha must lie in [5/6, 1], got {alpha}")));
    }
    let amp = c.amp.unwrap_or(0.1);
    if !amp.is_finite() {
        return Err(CliError::Config("amplitude must be finite".into()));
    }
    let grid = Grid::new(c.dim.unwrap_or(3), c.n.unwrap_or(64), c.box_or(16.0 * std::f64::consts::PI)?).map_err(config_err)?;
    if grid.dim() < 2 {
        return Err(CliError::Config("solve needs dim 2 or 3".into()));
    }
    let t_end = positive("t_end", c.t_end.unwrap_or(1.0))?;
    let ts = TimeStepper { dt: c.dt.unwrap_or(2e-3), ..TimeStepper::default() };
    ts.validate().map_err(config_err)?;
    let quad = DuhamelQuadrature { s_min: c.s_min.unwrap_or(1e-2), ..DuhamelQuadrature::default() };
    let popts = PicardOptions {
        tol: c.tol.unwrap_or(1e-6),
        max_iter: c.max_iter.unwrap_or(40),
        damping: c.damping.unwrap_or(1.0),
        quad,
    };
    popts.validate().map_err(config_err)?;
    let mut times = c.snapshot_times.clone().unwrap_or_else(|| vec![0.25, 0.5, 1.0]);
    times.retain(|&t| t <= t_end);
    if times.iter().any(|&t| !(t > 0.0)) {
        return Err(CliError::Config("snapshot times must be positive".into()));
    }
    let seed = c.seed.unwrap_or(crate::DEFAULT_SEED);
    let out = make_out(c)?;
    let sigma = SigmaSpec::canonical(amp);
    let mut files = Vec::new();
    let mut summary = SolveSummary {
        mode: match mode {
            Mode::Evolve => "evolve",
            Mode::Picard => "picard",
        },
        alpha,
        amplitude: amp,
        dim: grid.dim(),
        n: grid.n(),
        box_length: grid.box_length(),
        seed,
        status: "ok",
        reason: None,
        self_similarity_residual: None,
        profile_residual: None,
        duhamel_tail_relative: None,
        records: 0,
        files: Vec::new(),
    };
    let started = Instant::now();
    let result: Result<Vec<HistoryRecord>, CliError> = (|| match mode {
        Mode::Evolve => {
            let opts = EvolveOptions { snapshot_times: times.clone(), nonlinear: true };
            let (init, run) = evolve_from_sigma(&sigma, alpha, &grid, t_end, &ts, &opts)?;
            for s in &run.snapshots {
                snap(&out.join(format!("snapshot_t{:.4}.bin", s.time)), &s.velocity, alpha, s.time, &mut files)?;
            }
            if run.snapshot(1.0).is_ok() {
                let p = profile_extract(&run)?;
                summary.profile_residual = Some(profile_residual(&p.v, &p.pressure, &init.u0, alpha, None)?);
                snap(&out.join("profile_v.bin"), &p.v, alpha, 1.0, &mut files)?;
                snap(&out.join("profile_p.bin"), &p.pressure, alpha, 1.0, &mut files)?;
                if run.snapshot(0.5).is_ok() {
                    summary.self_similarity_residual = Some(self_similarity_residual(&run, 0.5, 1.0, alpha)?);
                }
            }
            Ok(run.history)
        }
        Mode::Picard => {
            let init = make_initial_data(&sigma, alpha, &grid)?;
            let r = picard_profile_solve(&init.data, None, alpha, &popts)?;
            summary.profile_residual = Some(profile_residual(&r.v, &r.pressure, &init.u0, alpha, None)?);
            summary.duhamel_tail_relative = Some(r.tail_relative);
            snap(&out.join("profile_v.bin"), &r.v, alpha, 1.0, &mut files)?;
            snap(&out.join("profile_p.bin"), &r.pressure, alpha, 1.0, &mut files)?;
            Ok(r.history)
        }
    })();
    let (history, outcome) = match result {
        Ok(h) => (h, None),
        Err(CliError::Solver(e)) => {
            let hist = match &e {
                leraylab::Error::AmplitudeTooLarge { history } | leraylab::Error::NotConverged { history, .. } => history
                    .iter()
                    .enumerate()
                    .map(|(i, &u)| HistoryRecord { iter_or_step: i + 1, time: 1.0, l2_update: u, div_residual: f64::NAN, max_velocity: f64::NAN })
                    .collect(),
                _ => Vec::new(),
            };
            summary.status = "aborted";
            summary.reason = Some(e.to_string());
            (hist, Some(e))
        }
        Err(other) => return Err(other),
    };
    write_history(&out.join("residual.csv"), &history)?;
    files.push("residual.csv".into());
    summary.records = history.len();
    summary.files = files;
    write_jsonl(&out.join("solve_summary.jsonl"), std::slice::from_ref(&summary))?;
    let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4e}"));
    write_summary(
        &out.join("solve_summary.txt"),
        &format!("solve {} alpha {alpha} amp {amp} n {} ({:.1} s)", summary.mode, grid.n(), started.elapsed().as_secs_f64()),
        &["status", "records", "self-similarity", "profile residual", "reason"],
        &[vec![
            summary.status.to_string(),
            summary.records.to_string(),
            fmt(summary.self_similarity_residual),
            fmt(summary.profile_residual),
            summary.reason.clone().unwrap_or_else(|| "-".into()),
        ]],
    )?;
    match outcome {
        None => Ok(Outcome { passed: true, message: format!("{} finished", summary.mode) }),
        Some(e) => Err(CliError::Solver(e)),
    }
}

// ---------------------------------------------------------------- decay

#[derive(Serialize)]
struct DecayRecord<'a> {
    file: String,
    time: f64,
    #[serde(flatten)]
    fit: &'a DecayFit,
    #[serde(skip_serializing_if = "Option::is_none")]
    log_loss: Option<bool>,
}

pub fn cmd_decay(c: &RunConfig) -> Result<Outcome, CliError> {
    let inputs = c.inputs.clone().filter(|v| !v.is_empty()).ok_or_else(|| CliError::Config("decay requires at least one --input".into()))?;
    let annulus = match c.annulus.as_deref() {
        None => (0.1, 0.3),
        Some([lo, hi]) => (*lo, *hi),
        Some(_) => return Err(CliError::Config("annulus takes exactly two values lo,hi".into())),
    };
    if !(annulus.0 >= 0.0 && annulus.1 > annulus.0) {
        return Err(CliError::Config(format!("empty annulus [{}, {}]", annulus.0, annulus.1)));
    }
    let model = c.model.unwrap_or(ModelChoice::Pure);
    let mut fields = Vec::new();
    for path in &inputs {
        let (h, f) = read_snapshot(path).map_err(|e| match e {
            SnapshotError::Io(io) => CliError::Input(format!("{}: {io}", path.display())),
            SnapshotError::Corrupt(m) => CliError::Input(format!("{}: {m}", path.display())),
        })?;
        fields.push((path.clone(), h, f));
    }
    let out = make_out(c)?;
    let mut records = Vec::new();
    let mut fits = Vec::new();
    let mut rows = Vec::new();
    for (path, h, f) in &fields {
        let alpha = c.alpha.or(Some(h.alpha).filter(|a| a.is_finite() && *a > 0.0));
        let name = path.file_stem().unwrap().to_string_lossy().into_owned();
        let list: Vec<(DecayFit, Option<bool>)> = match model {
            ModelChoice::Pure => vec![(decay_fit(f, annulus, DecayModel::PurePower, alpha).map_err(config_err)?, None)],
            ModelChoice::Log => vec![(decay_fit(f, annulus, DecayModel::LogCorrected, alpha).map_err(config_err)?, None)],
            ModelChoice::Both => {
                let (p, l, loss) = classify_decay(f, annulus, alpha).map_err(config_err)?;
                vec![(p, Some(loss)), (l, Some(loss))]
            }
        };
        let mut w = csv::Writer::from_path(out.join(format!("decay_{name}.csv"))).map_err(|e| CliError::Output(e.to_string()))?;
        w.write_record(["r", "shell_max", "shell_mean", "r_at_max"]).map_err(|e| CliError::Output(e.to_string()))?;
        for b in &list[0].0.bins {
            w.write_record(&[b.r_mean.to_string(), b.shell_max.to_string(), b.shell_mean.to_string(), b.r_at_max.to_string()])
                .map_err(|e| CliError::Output(e.to_string()))?;
        }
        w.flush().map_err(|e| CliError::Output(e.to_string()))?;
        for (fit, loss) in list {
            rows.push(vec![
                name.clone(),
                format!("{:?}", fit.model),
                format!("{:.4}", fit.exponent),
                fit.expected.map_or("-".into(), |e| format!("{e:.4}")),
                format!("{:.3e}", fit.rms_residual),
            ]);
            fits.push((name.clone(), h.time, fit, loss));
        }
    }
    for (file, time, fit, log_loss) in &fits {
        records.push(DecayRecord { file: file.clone(), time: *time, fit, log_loss: *log_loss });
    }
    write_jsonl(&out.join("decay.jsonl"), &records)?;
    write_summary(
        &out.join("decay_summary.txt"),
        &format!("decay annulus [{}, {}] L", annulus.0, annulus.1),
        &["field", "model", "exponent", "expected", "rms"],
        &rows,
    )?;
    Ok(Outcome { passed: true, message: format!("{} fit(s)", records.len()) })
}

