//! The command verbs, independent of argument parsing.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::cost::sample_gradient;
use crate::error::{Error, Result};
use crate::io::{event_rows, trajectory_rows, write_csv_file, write_json_file, CsvStream, Stamp};
use crate::optimizer::optimize_with;
use crate::patient::ingest_patient_csv;
use crate::scenario::derive_seeds;
use crate::sim::SamplePath;
use crate::validation::{fd_report, unbiasedness_check};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verb {
    Simulate,
    Gradient,
    Optimize,
    Validate,
    Ingest,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_PARSE: i32 = 3;
pub const EXIT_INVALID: i32 = 4;
pub const EXIT_RUNTIME: i32 = 5;

/// Exit code for an error that aborted a verb.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse { .. } | Error::Json(_) => EXIT_PARSE,
        Error::Validation { .. } | Error::InvalidArgument { .. } | Error::Row { .. } => {
            EXIT_INVALID
        }
        _ => EXIT_RUNTIME,
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    /// Overrides `noise.seed`.
    pub seed: Option<u64>,
    pub timestamp: bool,
    /// Input file for `ingest`; falls back to `ingest.csv`.
    pub input: Option<PathBuf>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    /// False when `validate` found a failing check.
    pub passed: bool,
    /// Human-readable lines for stdout.
    pub summary: Vec<String>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            EXIT_OK
        } else {
            EXIT_CHECK_FAILED
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimumReport {
    pub theta_star: [f64; 2],
    pub converged: bool,
    pub iterations: usize,
    #[serde(rename = "L_last")]
    pub l_last: f64,
    pub master_seed: u64,
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    out: &'a Path,
    stamp: Stamp,
    seed: u64,
    outcome: RunOutcome,
}

impl Ctx<'_> {
    fn file(&mut self, name: &str) -> PathBuf {
        let p = self.out.join(name);
        self.outcome.files.push(p.clone());
        p
    }

    fn say(&mut self, line: String) {
        self.outcome.summary.push(line);
    }

    fn write_path(&mut self, path: &SamplePath) -> Result<()> {
        let stride = self.cfg.output.trajectory_stride;
        let f = self.file("trajectory.csv");
        write_csv_file(&f, &trajectory_rows(path, stride), self.stamp)?;
        let f = self.file("events.csv");
        write_csv_file(&f, &event_rows(path), self.stamp)
    }
}

/// Runs one verb and writes its artifacts into `opts.out`.
pub fn run(verb: Verb, cfg: &RunConfig, opts: &RunOptions) -> Result<RunOutcome> {
    cfg.validate()?;
    std::fs::create_dir_all(&opts.out)?;
    let mut ctx = Ctx {
        cfg,
        out: &opts.out,
        stamp: if opts.timestamp {
            Stamp::now()
        } else {
            Stamp::None
        },
        seed: opts.seed.unwrap_or(cfg.noise.seed),
        outcome: RunOutcome {
            passed: true,
            ..RunOutcome::default()
        },
    };
    let sc = cfg.scenario();
    let th = &cfg.thresholds;
    match verb {
        Verb::Simulate => {
            let path = sc.path(th, &sc.trace(ctx.seed)?)?;
            ctx.write_path(&path)?;
            ctx.say(format!(
                "simulated {} days: {} events, {} complete cycles",
                cfg.sim.horizon,
                path.events.len(),
                path.m_t()
            ));
        }
        Verb::Gradient => {
            let path = sc.path(th, &sc.trace(ctx.seed)?)?;
            let g = sample_gradient(&path, &sc.cost_config())?;
            let f = ctx.file("gradient.json");
            write_json_file(&f, &g)?;
            ctx.write_path(&path)?;
            ctx.say(format!(
                "L = {:.9} dL/dtheta = ({:+.6e}, {:+.6e}) K_T = {}",
                g.l, g.dl_dtheta1, g.dl_dtheta2, g.k_t
            ));
        }
        Verb::Optimize => {
            let f = ctx.file("opt_trace.csv");
            let mut stream = CsvStream::new(BufWriter::new(File::create(&f)?), ctx.stamp)?;
            let mut write_err = None;
            let outcome = optimize_with(&sc, th, &cfg.optimizer, ctx.seed, |row, _| {
                if write_err.is_none() {
                    write_err = stream.push(row).err();
                }
            })?;
            if let Some(e) = write_err {
                return Err(e);
            }
            let last = outcome.rows.last().map_or(f64::NAN, |r| r.l_mean);
            let report = OptimumReport {
                theta_star: outcome.theta_star,
                converged: outcome.converged,
                iterations: outcome.iterations(),
                l_last: last,
                master_seed: ctx.seed,
            };
            let f = ctx.file("theta_star.json");
            write_json_file(&f, &report)?;
            ctx.say(format!(
                "theta* = ({:.6}, {:.6}) after {} iterations ({})",
                report.theta_star[0],
                report.theta_star[1],
                report.iterations,
                if report.converged {
                    "converged"
                } else {
                    "iteration cap"
                }
            ));
        }
        Verb::Validate => {
            let noise = sc.trace(ctx.seed)?;
            let fd = fd_report(&sc, th, &noise, &cfg.validation.fd)?;
            let f = ctx.file("fd_report.json");
            write_json_file(&f, &fd)?;
            for i in 0..2 {
                let rel =
                    fd.rel_error[i].map_or("n/a (K_T changed)".to_string(), |r| format!("{r:.3e}"));
                ctx.say(format!(
                    "fd theta{}: ipa {:+.6e} fd {:+.6e} rel {rel} retries {}",
                    i + 1,
                    fd.dl_ipa[i],
                    fd.dl_fd[i],
                    fd.retries[i]
                ));
            }
            ctx.say(format!(
                "fd check: {}",
                if fd.pass { "PASS" } else { "FAIL" }
            ));
            ctx.outcome.passed &= fd.pass;
            let n = cfg.validation.n_paths;
            if n > 0 {
                let seeds = derive_seeds(ctx.seed, n);
                let ub = unbiasedness_check(&sc, th, &seeds, &cfg.validation.fd)?;
                let f = ctx.file("unbiasedness.json");
                write_json_file(&f, &ub)?;
                for i in 0..2 {
                    ctx.say(format!(
                        "mean theta{}: ipa {:+.6e} fd {:+.6e} diff {:+.3e} pooled se {:.3e}",
                        i + 1,
                        ub.ipa_mean[i],
                        ub.fd_mean[i],
                        ub.mean_diff[i],
                        ub.pooled_se[i]
                    ));
                }
                let ok = ub.passed();
                ctx.say(format!(
                    "unbiasedness over {} paths: {}",
                    ub.n_paths,
                    if ok { "PASS" } else { "FAIL" }
                ));
                ctx.outcome.passed &= ok;
            }
        }
        Verb::Ingest => {
            let input = opts
                .input
                .clone()
                .or_else(|| cfg.ingest.csv.clone())
                .ok_or_else(|| Error::InvalidArgument {
                    name: "input",
                    reason: "no patient CSV given (argument or ingest.csv)".into(),
                })?;
            let series = ingest_patient_csv(&input)?;
            let summary = series.summary();
            let f = ctx.file("patient_summary.json");
            write_json_file(&f, &summary)?;
            ctx.say(format!(
                "patient {}: {} rows, PSA {}..{}, PSA_init {}, {} cycles",
                summary.patient_id,
                summary.rows,
                summary.psa_min,
                summary.psa_max,
                summary.psa_init,
                summary.cycles
            ));
        }
    }
    Ok(ctx.outcome)
}
