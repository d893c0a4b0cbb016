//! Command-line front end: runs scenarios and their experiments and writes
//! `norms.csv`, `estimates.csv`, `duality.csv`, snapshots and `report.txt`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand};

use crate::duality::{self, DualityReport};
use crate::error::{Error, Result};
use crate::estimates::{self, FamilyReport, L2UniformityReport, NormReport};
use crate::network::{certify, quasi_positivity_probe, ReactionNetwork};
use crate::presets;
use crate::scenario::{L2UniformitySpec, Scenario};
use crate::solver::{self, Trajectory};
use crate::verification;

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_VERDICT: u8 = 2;

/// Samples per quasi-positivity probe.
const PROBE_SAMPLES: usize = 1000;
const NONNEG_FLOOR: f64 = -1e-12;
const DRIFT_LIMIT: f64 = 1e-8;

#[derive(Debug, Parser)]
#[command(name = "rdalab", version, about = "Reaction-advection-diffusion laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario and every experiment it enables.
    Run(RunArgs),
    /// Compute the triangular certificate of a network file.
    Certify {
        #[arg(long)]
        network: PathBuf,
    },
    /// Print a preset as TOML, or list the presets.
    Preset { name: Option<String> },
}

#[derive(Debug, Clone, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["config", "preset"])))]
pub struct RunArgs {
    /// Scenario file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in scenario name.
    #[arg(long)]
    pub preset: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Halve the mesh width and initial step this many times.
    #[arg(long, default_value_t = 0)]
    pub refine: u32,
    /// Rate factors for the k-uniformity sweep, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub k_sweep: Option<Vec<f64>>,
    /// Seed for the run and the duality ensemble.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

/// Everything a run produced, before it is written to disk.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub scenario: Scenario,
    pub trajectory: Trajectory,
    pub verdicts: Vec<Verdict>,
    pub notes: Vec<String>,
    pub norms: NormReport,
    pub l2: Option<L2UniformityReport>,
    pub family: Option<FamilyReport>,
    pub duality: Option<DualityReport>,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn report(&self) -> String {
        let mut out = format!("scenario {}\n", self.scenario.name);
        for n in &self.notes {
            let _ = writeln!(out, "{n}");
        }
        for v in &self.verdicts {
            let _ = writeln!(out, "{}", v.line());
        }
        let _ = writeln!(out, "overall {}", if self.passed() { "PASS" } else { "FAIL" });
        out
    }

    pub fn estimates_csv(&self) -> String {
        let mut out = String::from(
            "experiment,member,parameter,ratio,norm_1,norm_n1n,norm_2,norm_inf,init_l1,init_l2,init_linf,extra\n",
        );
        let mut row = |exp: &str, member: usize, param: f64, ratio: f64, n: &NormReport, extra: f64| {
            let sum = |v: &[f64]| v.iter().sum::<f64>();
            let _ = writeln!(
                out,
                "{exp},{member},{param:e},{ratio:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{extra:e}",
                n.aggregate[0],
                n.aggregate[1],
                n.aggregate[2],
                n.aggregate[3],
                sum(&n.initial_l1),
                sum(&n.initial_l2),
                sum(&n.initial_linf),
            );
        };
        let n = &self.norms;
        let base_ratio = n.aggregate[2] / (1.0 + n.initial_l2.iter().sum::<f64>());
        row("norms", 0, 0.0, base_ratio, n, n.drift);
        if let Some(r) = &self.l2 {
            for (i, m) in r.rows.iter().enumerate() {
                row("l2_uniformity", i, m.k, m.ratio, &m.norms, m.rate_defect);
            }
        }
        if let Some(r) = &self.family {
            for (i, m) in r.rows.iter().enumerate() {
                row("l_n1_over_n", i, m.factor, m.ratio, &m.norms, m.l2_ratio);
            }
        }
        out
    }

    pub fn duality_csv(&self) -> String {
        let mut out = String::from("level,set,member,ratio,lhs,rhs,defect\n");
        if let Some(r) = &self.duality {
            for l in &r.levels {
                for m in &l.members {
                    let _ = writeln!(
                        out,
                        "{},{},{},{:e},{:e},{:e},{:e}",
                        l.cells,
                        if m.held_out { "held_out" } else { "train" },
                        m.index,
                        m.ratio,
                        m.pairing.lhs,
                        m.pairing.rhs,
                        m.pairing.defect
                    );
                }
            }
        }
        out
    }

    /// Writes all output files into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("norms.csv"), self.trajectory.norms_csv())?;
        std::fs::write(dir.join("estimates.csv"), self.estimates_csv())?;
        std::fs::write(dir.join("duality.csv"), self.duality_csv())?;
        for (k, t) in self.trajectory.times.iter().enumerate() {
            let text: String = self.trajectory.snapshot_files(k).iter().map(|s| s.to_text()).collect();
            std::fs::write(dir.join(format!("snapshot_{t}.txt")), text)?;
        }
        std::fs::write(dir.join("report.txt"), self.report())?;
        Ok(())
    }
}

/// Applies `--refine`, `--k-sweep` and `--seed` to a scenario.
pub fn apply_options(mut scenario: Scenario, args: &RunArgs) -> Result<Scenario> {
    if args.refine > 0 {
        let f = 1usize << args.refine;
        let cells: Vec<usize> = scenario.grid.cells().iter().map(|c| c * f).collect();
        let dt = scenario.time.dt_init / f as f64;
        scenario = scenario.with_resolution(&cells, dt)?;
    }
    if let Some(k) = &args.k_sweep {
        scenario.experiments.l2_uniformity = Some(L2UniformitySpec { k_list: k.clone() });
    }
    if let Some(seed) = args.seed {
        scenario.time.seed = seed;
        if let Some(d) = scenario.experiments.duality.as_mut() {
            d.seed = seed;
        }
    }
    Ok(scenario)
}

pub fn load_scenario(args: &RunArgs) -> Result<Scenario> {
    let s = match (&args.config, &args.preset) {
        (Some(path), _) => Scenario::load(path)?,
        (None, Some(name)) => presets::preset(name)?,
        (None, None) => return Err(Error::Config("either --config or --preset is required".into())),
    };
    apply_options(s, args)
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.4e}")).collect::<Vec<_>>().join(" ")
}

/// Runs a scenario and its enabled experiments. Configuration and solver
/// errors propagate; failed checks become FAIL verdicts.
pub fn run_scenario(scenario: &Scenario) -> Result<RunOutcome> {
    let built = scenario.build()?;
    let mut notes: Vec<String> = built.warnings.iter().map(|w| format!("warning: {w}")).collect();
    let mut verdicts = Vec::new();
    let exps = &scenario.experiments;

    if let Some(c) = &built.certificate {
        notes.push(format!(
            "certificate: e = {:?}, b0 = {}",
            c.e_f64(),
            crate::network::format_rational(&c.b0)
        ));
    }
    let probe = quasi_positivity_probe(built.problem.kinetics.as_ref(), PROBE_SAMPLES, scenario.time.seed);
    verdicts.push(Verdict::new(
        "quasi_positivity",
        probe.passed(),
        format!(
            "{} samples, {} violations, worst margin {:.3e}",
            probe.samples, probe.violations, probe.worst_margin
        ),
    ));

    let traj = solver::run(&built.problem, &built.config)?;
    let norms = NormReport::from_trajectory(&traj)?;
    if exps.norms {
        let min = traj.min_value();
        let drift_ok = built.problem.conservation.is_none() || norms.drift <= DRIFT_LIMIT;
        verdicts.push(Verdict::new(
            "norms",
            min >= NONNEG_FLOOR && drift_ok && norms.holder_consistent() && norms.monotone_in_p() && norms.nonnegative(),
            format!(
                "steps {}, min {:.3e}, drift {:.3e}, aggregate L^p (p = {}) = {}",
                traj.steps(),
                min,
                norms.drift,
                fmt_list(&norms.exponents),
                fmt_list(&norms.aggregate)
            ),
        ));
    }

    if let Some(spec) = &exps.exact_error {
        let r = verification::exact_error_check(scenario, spec)?;
        verdicts.push(Verdict::new(
            "exact_error",
            r.passed,
            format!(
                "max error {:.3e} (tolerance {:.1e}), {} steps in {:.2} s",
                r.max_error, spec.tolerance, r.steps, r.seconds
            ),
        ));
    }
    if let Some(spec) = &exps.convergence {
        let r = verification::convergence_study(scenario, spec)?;
        let errors: Vec<f64> = r.levels.iter().map(|l| l.value).collect();
        verdicts.push(Verdict::new(
            "convergence",
            r.passed,
            format!(
                "L2 errors {} orders {} (minimum {})",
                fmt_list(&errors),
                fmt_list(&r.orders),
                spec.min_order
            ),
        ));
    }
    if let Some(spec) = &exps.weak_residual {
        let r = verification::weak_residual_study(scenario, spec)?;
        let res: Vec<f64> = r.levels.iter().map(|l| l.value).collect();
        verdicts.push(Verdict::new(
            "weak_residual",
            r.passed,
            format!("residuals {} ratios {} (limit {})", fmt_list(&res), fmt_list(&r.ratios), spec.max_ratio),
        ));
    }

    let mut l2 = None;
    if let Some(spec) = &exps.l2_uniformity {
        let r = estimates::l2_uniformity_experiment(scenario, &spec.k_list)?;
        let ratios: Vec<f64> = r.rows.iter().map(|m| m.ratio).collect();
        let defects: Vec<f64> = r.rows.iter().map(|m| m.rate_defect).collect();
        verdicts.push(Verdict::new(
            "l2_uniformity",
            r.passed,
            format!(
                "ratios {} spread {:.3e} max/first {:.3} rate defects {} decreasing {}",
                fmt_list(&ratios),
                r.spread,
                r.max_over_first,
                fmt_list(&defects),
                r.defect_decreasing
            ),
        ));
        l2 = Some(r);
    }
    let mut family = None;
    if let Some(spec) = &exps.l_n1_over_n {
        let r = estimates::l_n1_over_n_experiment(scenario, &spec.factors)?;
        let ratios: Vec<f64> = r.rows.iter().map(|m| m.ratio).collect();
        let l2_ratios: Vec<f64> = r.rows.iter().map(|m| m.l2_ratio).collect();
        verdicts.push(Verdict::new(
            "l_n1_over_n",
            r.passed,
            format!(
                "L^{} ratios {} baseline {:.4e}",
                r.exponent,
                fmt_list(&ratios),
                r.baseline
            ),
        ));
        notes.push(format!("l_n1_over_n: L2 ratios (no verdict) {}", fmt_list(&l2_ratios)));
        family = Some(r);
    }
    if let Some(spec) = &exps.collapse {
        let d = &built.problem.diffusion;
        let u = &built.problem.advection;
        let r = if spec.anisotropic {
            estimates::collapse_anisotropic(&traj, d, u)
        } else {
            estimates::collapse_scalar(&traj, d, u)
        };
        verdicts.push(match r {
            Ok(r) => {
                let a_min = r.snapshots.iter().map(|s| s.a_min).fold(f64::INFINITY, f64::min);
                let a_max = r.snapshots.iter().map(|s| s.a_max).fold(0.0, f64::max);
                Verdict::new(
                    "collapse",
                    true,
                    format!(
                        "{} snapshots, A in [{a_min:.4}, {a_max:.4}] within [{:.4}, {:.4}]",
                        r.snapshots.len(),
                        r.lower,
                        r.upper
                    ),
                )
            }
            Err(e @ Error::CollapseBoundViolation { .. }) => Verdict::new("collapse", false, e.to_string()),
            Err(e) => return Err(e),
        });
    }
    let mut dual = None;
    if let Some(spec) = &exps.duality {
        let r = duality::verify_duality(spec)?;
        let c: Vec<f64> = r.levels.iter().map(|l| l.c_emp).collect();
        let h: Vec<f64> = r.levels.iter().map(|l| l.max_held_out).collect();
        let d: Vec<f64> = r.defect_levels.iter().map(|l| l.defect).collect();
        verdicts.push(Verdict::new(
            "duality",
            r.passed,
            format!(
                "C_emp {} held-out max {} change {:.3e}; pairing holds {}; defects {} ratios {}",
                fmt_list(&c),
                fmt_list(&h),
                r.c_emp_change,
                r.pairing_holds,
                fmt_list(&d),
                fmt_list(&r.defect_ratios)
            ),
        ));
        dual = Some(r);
    }
    if let Some(spec) = &exps.continuity {
        let r = verification::continuity_experiment(scenario, spec)?;
        let ratios: Vec<f64> = r.rows.iter().map(|m| m.ratio).collect();
        verdicts.push(Verdict::new(
            "continuity",
            r.passed,
            format!("ratios {} spread {:.3e} (limit {})", fmt_list(&ratios), r.spread, spec.max_spread),
        ));
    }

    Ok(RunOutcome {
        scenario: scenario.clone(),
        trajectory: traj,
        verdicts,
        notes,
        norms,
        l2,
        family,
        duality: dual,
    })
}

fn certify_file(path: &Path) -> Result<(String, bool)> {
    let net = ReactionNetwork::load(path)?;
    let kin = crate::network::MassActionKinetics::new(&net);
    let probe = quasi_positivity_probe(&kin, PROBE_SAMPLES, 0);
    let probe_line = format!(
        "quasi-positivity: {} samples, {} violations\n",
        probe.samples, probe.violations
    );
    Ok(match certify(&net) {
        Ok(c) => {
            let ok = c.verify(&net).is_ok() && probe.passed();
            (format!("{}{probe_line}", c.to_report()), ok)
        }
        Err(e) => (format!("certification failed: {e}\n{probe_line}"), false),
    })
}

fn execute(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Run(args) => {
            let scenario = load_scenario(&args)?;
            let outcome = run_scenario(&scenario)?;
            outcome.write(&args.out)?;
            print!("{}", outcome.report());
            Ok(if outcome.passed() { EXIT_OK } else { EXIT_VERDICT })
        }
        Command::Certify { network } => {
            let (text, ok) = certify_file(&network)?;
            print!("{text}");
            Ok(if ok { EXIT_OK } else { EXIT_VERDICT })
        }
        Command::Preset { name: None } => {
            for n in presets::names() {
                println!("{n}");
            }
            Ok(EXIT_OK)
        }
        Command::Preset { name: Some(n) } => {
            print!("{}", presets::source(&n)?);
            Ok(EXIT_OK)
        }
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(v: &[&str]) -> Vec<String> {
        std::iter::once("rdalab").chain(v.iter().copied()).map(String::from).collect()
    }

    #[test]
    fn missing_out_is_a_usage_error() {
        assert_eq!(main_with_args(args(&["run", "--preset", "heat1d"])), EXIT_ERROR);
    }

    #[test]
    fn missing_source_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        assert_eq!(main_with_args(args(&["run", "--out", out])), EXIT_ERROR);
        assert_eq!(main_with_args(args(&["run", "--preset", "nope", "--out", out])), EXIT_ERROR);
    }

    #[test]
    fn options_are_applied() {
        let a = Cli::try_parse_from(args(&[
            "run", "--preset", "abc", "--out", "x", "--refine", "1", "--k-sweep", "1,10", "--seed", "5",
        ]))
        .unwrap();
        let Command::Run(a) = a.command else { panic!("run expected") };
        let s = load_scenario(&a).unwrap();
        assert_eq!(s.grid.cells(), &[64]);
        assert_eq!(s.time.dt_init, 0.005);
        assert_eq!(s.experiments.l2_uniformity.unwrap().k_list, vec![1.0, 10.0]);
        assert_eq!(s.experiments.duality.unwrap().seed, 5);
    }

    #[test]
    fn heat_run_writes_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run1");
        let code = main_with_args(args(&["run", "--preset", "heat1d", "--out", out.to_str().unwrap()]));
        assert_eq!(code, EXIT_OK);
        let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
        assert!(report.contains("PASS exact_error"));
        assert!(report.contains("overall PASS"));
        for f in ["norms.csv", "estimates.csv", "duality.csv", "snapshot_0.txt", "snapshot_0.05.txt", "snapshot_0.1.txt"] {
            assert!(out.join(f).exists(), "{f}");
        }
        let snaps = crate::grid::Snapshot::parse_all(&std::fs::read_to_string(out.join("snapshot_0.1.txt")).unwrap()).unwrap();
        assert_eq!(snaps.len(), 1);
        assert_eq!(snaps[0].values.len(), 128);
    }
}
