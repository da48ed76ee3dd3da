//! Command line: one trajectory (`run`), the convergence checks and `inspect`.
//!
//! Exit codes: 0 success, 1 a check failed, 2 bad input or IO, 3 solver failure.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use znd_core::front_tracking::approximate_initial_data;
use znd_core::functionals::{lyapunov_phi, EventTag, PhiContext};
use znd_core::reaction_scheme::evolve;
use znd_core::{FrontSolution, FunctionalReport, SchemeConfig};

use crate::analysis::{self, with_epsilon, ScalingFit};
use crate::config::{scale_about_left, LocalKind, RunConfig};
use crate::io::{self, Snapshot, Summary};
use crate::Error;

#[derive(Debug, Parser)]
#[command(
    name = "znd",
    version,
    about = "Front tracking with a reaction step for the Lagrangian reacting Euler equations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (JSON, schema version 1).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads for independent runs.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// Seed of randomised perturbations; overrides `experiment.seed`.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Print nothing but errors.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evolve the initial data and write snapshots and functionals at the sample times.
    Run,
    /// Paired runs: Lyapunov growth and the L1 stability bound.
    Stability,
    /// Commutator of the gas and reaction steps against t.
    Commute,
    /// Semigroup gap against eps.
    Semigroup,
    /// Cauchy distances between runs at decreasing eps.
    Converge,
    /// Local comparison with the Riemann or linearised transport solution.
    Localchar,
    /// Pretty-print a snapshot file.
    Inspect {
        #[arg(value_name = "SNAPSHOT")]
        path: PathBuf,
    },
}

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(Outcome::Pass) => 0,
        Ok(Outcome::Fail) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<Outcome, Error> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(Error::Validation("--jobs must be at least 1".into()));
        }
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    if let Command::Inspect { path } = &cli.command {
        return inspect(path, cli.quiet);
    }
    let path = cli.config.as_ref().ok_or_else(|| Error::Validation("--config PATH is required".into()))?;
    let cfg = RunConfig::load(path)?;
    let ctx = Context::new(cli, cfg)?;
    let summary = match cli.command {
        Command::Run => ctx.run()?,
        Command::Stability => ctx.stability()?,
        Command::Commute => ctx.commute()?,
        Command::Semigroup => ctx.semigroup()?,
        Command::Converge => ctx.converge()?,
        Command::Localchar => ctx.localchar()?,
        Command::Inspect { .. } => unreachable!(),
    };
    if ctx.config.output.wants("json") {
        io::write_text(&ctx.file(&format!("{}.summary.json", summary.check)), &summary.to_json())?;
    }
    if !cli.quiet {
        println!("{}: {}", summary.check, if summary.pass { "PASS" } else { "FAIL" });
    }
    Ok(if summary.pass { Outcome::Pass } else { Outcome::Fail })
}

fn inspect(path: &Path, quiet: bool) -> Result<Outcome, Error> {
    let snap = Snapshot::read(path)?;
    let sol = snap.to_solution()?;
    if !quiet {
        print!("{}", snap.to_json());
        let mut counts = std::collections::BTreeMap::new();
        for f in &sol.fronts {
            *counts.entry(io::family_label(f.family)).or_insert(0usize) += 1;
        }
        let counts: Vec<String> = counts.iter().map(|(k, v)| format!("{k}: {v}")).collect();
        println!("time {} fronts {} ({})", sol.time, sol.fronts.len(), counts.join(", "));
    }
    Ok(Outcome::Pass)
}

struct Context {
    config: RunConfig,
    scheme: SchemeConfig,
    out: PathBuf,
    seed: u64,
}

impl Context {
    fn new(cli: &Cli, config: RunConfig) -> Result<Self, Error> {
        let scheme = config.scheme_config()?;
        let out = cli.out.clone().or_else(|| config.output.dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
        std::fs::create_dir_all(&out).map_err(|e| Error::Io { path: out.display().to_string(), source: e })?;
        let seed = cli.seed.unwrap_or(config.experiment.seed);
        Ok(Self { config, scheme, out, seed })
    }

    fn file(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn epsilons(&self) -> Vec<f64> {
        if self.config.experiment.epsilons.is_empty() {
            vec![self.scheme.epsilon]
        } else {
            self.config.experiment.epsilons.clone()
        }
    }

    fn write_csv(&self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<(), Error> {
        if self.config.output.wants("csv") {
            io::write_with(&self.file(name), |buf| io::write_table(buf, header, rows))?;
        }
        Ok(())
    }

    fn write_reports(&self, name: &str, reports: &[FunctionalReport]) -> Result<(), Error> {
        if self.config.output.wants("csv") {
            io::write_with(&self.file(name), |buf| io::write_reports(buf, reports))?;
        }
        Ok(())
    }

    fn run(&self) -> Result<Summary, Error> {
        let cfg = &self.scheme;
        let u0 = approximate_initial_data(&self.config.initial_profile()?, cfg.epsilon, cfg)?;
        let v0 = approximate_initial_data(&self.config.perturbed_profile(self.seed)?, cfg.epsilon, cfg)?;
        let times = if self.config.output.sample_times.is_empty() {
            vec![self.config.experiment.horizon]
        } else {
            self.config.output.sample_times.clone()
        };
        let phi_ctx = PhiContext::new(u0.y_sup(), v0.y_sup()).at(EventTag::Free);
        let samples = times
            .par_iter()
            .map(|&t| {
                let u = evolve(&u0, t, cfg)?;
                let v = evolve(&v0, t, cfg)?;
                let (_, report) = lyapunov_phi(&u, &v, cfg, &phi_ctx)?;
                Ok((u, report))
            })
            .collect::<Result<Vec<(FrontSolution, FunctionalReport)>, Error>>()?;
        if self.config.output.wants("json") {
            for (k, (u, _)) in samples.iter().enumerate() {
                io::write_text(&self.file(&format!("snapshot_{k:03}.json")), &Snapshot::of(u).to_json())?;
            }
        }
        let reports: Vec<FunctionalReport> = samples.iter().map(|s| s.1).collect();
        self.write_reports("run.csv", &reports)?;
        let mut s = Summary::new("run");
        if let Some((last, r)) = samples.last() {
            s.constant("fronts", last.fronts.len() as f64).residual("phi", r.phi).residual("l1", r.l1);
        }
        Ok(s)
    }

    fn stability(&self) -> Result<Summary, Error> {
        let u0 = self.config.initial_profile()?;
        let v0 = self.config.perturbed_profile(self.seed)?;
        let t = self.config.experiment.horizon;
        let tol = &self.config.experiment.tolerances;
        let eps = self.epsilons();
        let runs = eps
            .par_iter()
            .map(|&e| analysis::stability_experiment(&u0, &v0, t, &with_epsilon(&self.scheme, e)))
            .collect::<Result<Vec<_>, Error>>()?;
        let mut s = Summary::new("stability");
        let mut rows = Vec::new();
        for (k, (rep, run)) in runs.iter().enumerate() {
            self.write_reports(&format!("stability_{k}.csv"), &run.reports)?;
            rows.push(vec![
                rep.epsilon,
                rep.growth_rate,
                rep.c1,
                rep.c2,
                rep.reaction_increases as f64,
                rep.l1_initial,
                rep.l1_max,
            ]);
            s.require(rep.c1 <= tol.c1_max).require(rep.reaction_increases == 0).require(rep.l1_bound_holds);
        }
        self.write_csv(
            "stability.csv",
            &["epsilon", "growth_rate", "C1", "C2", "reaction_increases", "L1_initial", "L1_max"],
            &rows,
        )?;
        let c1 = runs.iter().map(|r| r.0.c1).fold(1.0, f64::max);
        let c2 = runs.iter().map(|r| r.0.c2).fold(0.0, f64::max);
        s.constant("C1", c1).constant("C2", c2);
        for (k, w) in runs.windows(2).enumerate() {
            let (a, b) = (w[0].0.growth_rate, w[1].0.growth_rate);
            if a > 0.0 || b > 0.0 {
                let expected = w[1].0.epsilon / w[0].0.epsilon;
                let ratio = if a > 0.0 { b / a } else { f64::INFINITY };
                s.slope(&format!("rate_ratio_{k}"), ratio).require((ratio / expected - 1.0).abs() <= tol.halving);
            }
        }
        Ok(s)
    }

    fn commute(&self) -> Result<Summary, Error> {
        let cfg = &self.scheme;
        let tol = &self.config.experiment.tolerances;
        let ts = &self.config.experiment.times;
        let u = approximate_initial_data(&self.config.initial_profile()?, cfg.epsilon, cfg)?;
        let (errs, fit) = analysis::commutation_check(&u, ts, cfg)?;
        let rows: Vec<Vec<f64>> = ts.iter().zip(&errs).map(|(t, e)| vec![*t, *e]).collect();
        self.write_csv("commute.csv", &["t", "commutator_L1"], &rows)?;
        let mut s = Summary::new("commute");
        match fit {
            Some(f) => {
                record_fit(&mut s, "t", &f);
                s.require(f.slope >= tol.slope_min && f.slope <= tol.slope_max);
            }
            None => {
                s.require(errs.iter().all(|e| *e == 0.0));
            }
        }
        Ok(s)
    }

    fn semigroup(&self) -> Result<Summary, Error> {
        let e = &self.config.experiment;
        let eps = self.epsilons();
        let gaps = analysis::semigroup_study(&self.config.initial_profile()?, e.t1, e.t2, &eps, &self.scheme)?;
        let rows: Vec<Vec<f64>> = eps.iter().zip(&gaps).map(|(a, g)| vec![*a, *g]).collect();
        self.write_csv("semigroup.csv", &["epsilon", "gap_L1"], &rows)?;
        let mut s = Summary::new("semigroup");
        let c = eps.iter().zip(&gaps).map(|(a, g)| g / a).fold(0.0, f64::max);
        s.constant("C", c);
        if gaps.iter().all(|g| *g > 0.0) && gaps.len() >= 2 {
            let points: Vec<(f64, f64)> = eps.iter().copied().zip(gaps.iter().copied()).collect();
            let f = ScalingFit::fit(&points)?;
            record_fit(&mut s, "epsilon", &f);
            s.require((f.slope - 1.0).abs() <= e.tolerances.halving);
        } else {
            s.require(gaps.iter().all(|g| *g <= 1e-12));
        }
        Ok(s)
    }

    fn converge(&self) -> Result<Summary, Error> {
        let e = &self.config.experiment;
        let rep = analysis::convergence_study(&self.config.initial_profile()?, &e.epsilons, e.horizon, &self.scheme)?;
        let rows: Vec<Vec<f64>> =
            rep.epsilons.windows(2).zip(&rep.distances).map(|(w, d)| vec![w[0], w[1], *d]).collect();
        self.write_csv("converge.csv", &["epsilon_coarse", "epsilon_fine", "distance_L1"], &rows)?;
        let mut s = Summary::new("converge");
        for (k, r) in rep.ratios.iter().enumerate() {
            s.slope(&format!("cauchy_ratio_{k}"), *r).require(*r <= e.tolerances.ratio_max);
        }
        if let Some(f) = &rep.fit {
            record_fit(&mut s, "epsilon", f);
        }
        Ok(s)
    }

    fn localchar(&self) -> Result<Summary, Error> {
        match self.config.experiment.local.kind {
            LocalKind::Riemann => self.local_riemann(),
            LocalKind::Transport => self.local_transport(),
        }
    }

    fn local_riemann(&self) -> Result<Summary, Error> {
        let cfg = &self.scheme;
        let l = &self.config.experiment.local;
        let u0 = approximate_initial_data(&self.config.initial_profile()?, cfg.epsilon, cfg)?;
        let sol = evolve(&u0, l.s, cfg)?;
        let xi = match l.xi {
            Some(x) => x,
            None => analysis::strongest_shock(&sol).ok_or_else(|| {
                Error::Validation("no shock to centre the Riemann comparison on; set experiment.local.xi".into())
            })?,
        };
        let avgs = analysis::local_char_riemann(&sol, xi, &l.thetas, cfg)?;
        let rows: Vec<Vec<f64>> = l.thetas.iter().zip(&avgs).map(|(t, a)| vec![*t, *a]).collect();
        self.write_csv("localchar.csv", &["theta", "average_L1"], &rows)?;
        let mut s = Summary::new("localchar");
        s.constant("xi", xi);
        let (first, last) = (avgs.first().copied().unwrap_or(0.0), avgs.last().copied().unwrap_or(0.0));
        s.residual("final_over_first", if first > 0.0 { last / first } else { 0.0 });
        s.require(last <= self.config.experiment.tolerances.final_fraction * first);
        if avgs.iter().all(|a| *a > 0.0) && avgs.len() >= 2 {
            let points: Vec<(f64, f64)> = l.thetas.iter().copied().zip(avgs.iter().copied()).collect();
            record_fit(&mut s, "theta", &ScalingFit::fit(&points)?);
        }
        Ok(s)
    }

    fn local_transport(&self) -> Result<Summary, Error> {
        let cfg = &self.scheme;
        let l = &self.config.experiment.local;
        let tol = &self.config.experiment.tolerances;
        let interval = l
            .interval
            .ok_or_else(|| Error::Validation("transport comparison needs experiment.local.interval".into()))?;
        let xi = l.xi.unwrap_or(0.5 * (interval.0 + interval.1));
        let base = self.config.initial_profile()?;
        let mut rows = Vec::new();
        let mut c0s = Vec::new();
        let mut tvs = Vec::new();
        for &scale in &l.scales {
            let p = scale_about_left(&base, scale);
            let u0 = approximate_initial_data(&p, cfg.epsilon, cfg)?;
            let sol = evolve(&u0, l.s, cfg)?;
            let avgs = analysis::local_char_transport(&sol, interval, xi, &l.thetas, l.refine, cfg)?;
            let c0 = analysis::extrapolate_to_zero(&l.thetas, &avgs);
            let tv = analysis::total_variation_on(&sol, interval.0, interval.1);
            for (t, a) in l.thetas.iter().zip(&avgs) {
                rows.push(vec![scale, tv, *t, *a]);
            }
            c0s.push(c0);
            tvs.push(tv);
        }
        self.write_csv("localchar.csv", &["scale", "total_variation", "theta", "average_L1"], &rows)?;
        let mut s = Summary::new("localchar");
        let c0_fit = c0s.iter().zip(&tvs).filter(|(_, tv)| **tv > 0.0).map(|(c, tv)| c / (tv * tv)).fold(0.0, f64::max);
        s.constant("C0", c0_fit);
        for (k, (w, sc)) in c0s.windows(2).zip(l.scales.windows(2)).enumerate() {
            let ratio = if w[1] > 0.0 { w[0] / w[1] } else { f64::INFINITY };
            // Bands are set for halving; other scale steps are rescaled to it.
            let halvings = (sc[0] / sc[1]).log2();
            let per_halving = ratio.powf(1.0 / halvings);
            s.slope(&format!("c0_ratio_{k}"), per_halving);
            s.require(per_halving >= tol.transport_min && per_halving <= tol.transport_max);
        }
        Ok(s)
    }
}

fn record_fit(s: &mut Summary, name: &str, f: &ScalingFit) {
    s.slope(name, f.slope).residual(name, f.residual).constant(&format!("prefactor_{name}"), f.intercept.exp());
}
