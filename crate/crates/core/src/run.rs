//! Configuration-driven runs: parse a [`RunConfig`], dispatch to a solver and
//! render the output artifacts in memory so that nothing is written unless
//! the whole run succeeds.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::backward::{BackwardSolution, DEFAULT_PICARD_ITERS};
use crate::bsde_full::backward_solve_2bsde;
use crate::bsde_semilinear::backward_solve_semilinear;
use crate::error::{Error, Result};
use crate::hjb::extract_control;
use crate::linear_fk::feynman_kac_estimate;
use crate::model::{
    catalog_get_with_horizon, validate_assumptions, Domain, ProblemDocument, ProblemSpec, CATALOG,
};
use crate::numeric;
use crate::paths::{euler_simulate, exit_time_stats, PathBatch, TimeGrid};
use crate::regress::BasisSpec;
use crate::verify::{fd_solve_1d, twobsde_residuals, FdGrid};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const GIT_DESCRIBE: &str = env!("PARABOLICA_GIT_DESCRIBE");

const MAX_STORAGE: usize = 200_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Simulate,
    Linear,
    Semilinear,
    #[serde(rename = "full_2bsde")]
    Full2bsde,
    Hjb,
    Verify,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Simulate => "simulate",
            Scheme::Linear => "linear",
            Scheme::Semilinear => "semilinear",
            Scheme::Full2bsde => "full_2bsde",
            Scheme::Hjb => "hjb",
            Scheme::Verify => "verify",
        }
    }
}

/// A catalog name or an inline problem document.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ProblemRef {
    Name(String),
    Inline(Box<ProblemDocument>),
}

impl<'de> Deserialize<'de> for ProblemRef {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        match Value::deserialize(deserializer)? {
            Value::String(name) => Ok(ProblemRef::Name(name)),
            doc @ Value::Object(_) => serde_json::from_value(doc)
                .map(|d| ProblemRef::Inline(Box::new(d)))
                .map_err(|e| D::Error::custom(format!("problem document: {e}"))),
            _ => Err(D::Error::custom(
                "problem must be a catalog name or a problem document",
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputOptions {
    /// Also write the simulated paths as `paths.bin`.
    #[serde(default)]
    pub dump_paths: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyOptions {
    /// Space nodes of the finite-difference oracle.
    #[serde(default = "default_fd_nodes")]
    pub fd_nodes: usize,
    /// Sample points for the equation-residual and assumption checks.
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_fd_nodes() -> usize {
    201
}

fn default_samples() -> usize {
    1000
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            fd_nodes: default_fd_nodes(),
            samples: default_samples(),
        }
    }
}

fn default_steps() -> usize {
    64
}

fn default_paths() -> usize {
    10_000
}

fn default_picard() -> usize {
    DEFAULT_PICARD_ITERS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemRef,
    /// Must agree with the subcommand when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<Scheme>,
    /// Overrides the problem's horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub t0: f64,
    /// Defaults to the origin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(rename = "N", default = "default_steps")]
    pub steps: usize,
    #[serde(rename = "J", default = "default_paths")]
    pub paths: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub basis: BasisSpec,
    #[serde(default = "default_picard")]
    pub picard_iters: usize,
    #[serde(default)]
    pub output: OutputOptions,
    #[serde(default)]
    pub verify: VerifyOptions,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn for_problem(name: &str) -> Self {
        RunConfig {
            problem: ProblemRef::Name(name.into()),
            scheme: None,
            horizon: None,
            t0: 0.0,
            x0: None,
            steps: default_steps(),
            paths: default_paths(),
            seed: 0,
            basis: BasisSpec::default(),
            picard_iters: default_picard(),
            output: OutputOptions::default(),
            verify: VerifyOptions::default(),
        }
    }

    pub fn build_spec(&self) -> Result<ProblemSpec> {
        match &self.problem {
            ProblemRef::Name(name) => {
                if !CATALOG.contains(&name.as_str()) {
                    return Err(Error::UnknownProblem(name.clone()));
                }
                catalog_get_with_horizon(name, self.horizon.unwrap_or(1.0))
            }
            ProblemRef::Inline(doc) => {
                let spec = doc.to_spec()?;
                match self.horizon {
                    Some(h) => spec.with_horizon(h),
                    None => Ok(spec),
                }
            }
        }
    }

    /// Checks ranges and returns the problem together with the start point.
    pub fn validate(&self) -> Result<(ProblemSpec, Vec<f64>)> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.steps == 0 || self.steps > 100_000 {
            return bad(format!("N = {} must be in [1, 100000]", self.steps));
        }
        if self.paths == 0 || self.paths > 10_000_000 {
            return bad(format!("J = {} must be in [1, 10000000]", self.paths));
        }
        if self.picard_iters > 100 {
            return bad(format!(
                "picard_iters = {} must be <= 100",
                self.picard_iters
            ));
        }
        if self.verify.fd_nodes < 3 || self.verify.samples == 0 {
            return bad("verify.fd_nodes must be >= 3 and verify.samples >= 1".into());
        }
        self.basis.validate()?;
        let spec = self.build_spec()?;
        let d = spec.dim();
        let x0 = self.x0.clone().unwrap_or_else(|| vec![0.0; d]);
        if x0.len() != d {
            return bad(format!(
                "x0 has {} entries, problem dimension is {d}",
                x0.len()
            ));
        }
        if x0.iter().any(|v| !v.is_finite()) || !self.t0.is_finite() {
            return bad("t0 and x0 must be finite".into());
        }
        if !(self.t0 < spec.horizon()) {
            return bad(format!(
                "t0 = {} must be below the horizon {}",
                self.t0,
                spec.horizon()
            ));
        }
        if self
            .paths
            .saturating_mul(self.steps + 1)
            .saturating_mul(d * d.max(1))
            > MAX_STORAGE
        {
            return bad("J·(N+1)·d² exceeds the storage limit".into());
        }
        Ok((spec, x0))
    }
}

/// A rendered output file.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    /// Summary document without host information.
    pub summary: Value,
    pub artifacts: Vec<Artifact>,
    /// Some verification check failed.
    pub checks_failed: bool,
}

/// Exit status for an error: 2 for numeric failures, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_numeric() {
        2
    } else {
        1
    }
}

/// Stable identifier of an error variant for diagnostics.
pub fn error_kind(err: &Error) -> &'static str {
    match err {
        Error::NonFinite(_) => "non_finite",
        Error::SingularSigma { .. } => "singular_sigma",
        Error::UnknownProblem(_) => "unknown_problem",
        Error::Syntax { .. } => "syntax",
        Error::IndexOutOfRange { .. } => "index_out_of_range",
        Error::MissingBinding(_) => "missing_binding",
        Error::RankDeficient { .. } => "rank_deficient",
        Error::RegressionFailure(_) => "regression_failure",
        Error::DimensionMismatch { .. } => "dimension_mismatch",
        Error::GammaDependence { .. } => "gamma_dependence",
        Error::MissingGamma => "missing_gamma",
        Error::MissingAnalyticV => "missing_analytic_v",
        Error::CflViolation { .. } => "cfl_violation",
        Error::DegenerateInput(_) => "degenerate_input",
        Error::DomainIsWholeSpace => "domain_is_whole_space",
        Error::InvalidSpec(_) => "invalid_spec",
        Error::InvalidConfig(_) => "invalid_config",
        Error::Io(_) => "io",
    }
}

/// 17 significant digits, enough to round-trip an `f64`.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn run(config: &RunConfig, scheme: Scheme) -> Result<RunOutput> {
    if let Some(s) = config.scheme {
        if s != scheme {
            return Err(Error::InvalidConfig(format!(
                "config scheme '{}' does not match subcommand '{}'",
                s.name(),
                scheme.name()
            )));
        }
    }
    let (spec, x0) = config.validate()?;
    let mut echo = config.clone();
    echo.scheme = Some(scheme);
    let grid = TimeGrid::new(config.t0, spec.horizon(), config.steps)?;
    if scheme == Scheme::Verify {
        return run_verify(config, &spec, &x0, &grid, echo);
    }
    match scheme {
        Scheme::Linear if spec.linear().is_none() => {
            return Err(Error::InvalidConfig(format!(
                "problem '{}' has no linear coefficients",
                spec.name()
            )))
        }
        Scheme::Hjb if spec.control().is_none() => {
            return Err(Error::InvalidConfig(format!(
                "problem '{}' has no control problem",
                spec.name()
            )))
        }
        _ => {}
    }

    let batch = euler_simulate(&spec, &grid, &x0, config.paths, config.seed)?;
    let mut artifacts = Vec::new();
    let mut summary = json!({
        "scheme": scheme.name(),
        "problem": spec.name(),
        "paths": config.paths,
        "steps": config.steps,
        "version": VERSION,
        "git_describe": GIT_DESCRIBE,
        "config": serde_json::to_value(&echo).map_err(|e| Error::InvalidConfig(e.to_string()))?,
    });
    let analytic_root = spec.analytic().map(|v| (v.value)(config.t0, &x0));

    match scheme {
        Scheme::Simulate => {
            let finals: Vec<f64> = (0..batch.paths)
                .map(|j| batch.state(j, batch.steps())[0])
                .collect();
            let (mean, std) = numeric::mean_std(&finals);
            summary["value"] = json!(mean);
            summary["stderr"] = json!(if finals.len() > 1 {
                std / (finals.len() as f64).sqrt()
            } else {
                0.0
            });
            summary["checksum"] = json!(format!("{:016x}", batch.checksum()));
            if !matches!(spec.domain(), Domain::WholeSpace) {
                summary["exit"] = serde_json::to_value(exit_time_stats(&spec, &batch)?)
                    .map_err(|e| Error::InvalidConfig(e.to_string()))?;
            }
            artifacts.push(Artifact {
                name: "steps.csv".into(),
                contents: state_csv(&batch).into_bytes(),
            });
        }
        Scheme::Linear => {
            let coeffs = spec.linear().expect("checked above");
            let est = feynman_kac_estimate(&spec, coeffs, &batch)?;
            summary["value"] = json!(est.value);
            summary["stderr"] = json!(est.stderr);
            if let Some(v) = analytic_root {
                summary["analytic_value"] = json!(v);
            }
            artifacts.push(Artifact {
                name: "steps.csv".into(),
                contents: state_csv(&batch).into_bytes(),
            });
        }
        Scheme::Semilinear | Scheme::Full2bsde | Scheme::Hjb => {
            let sol = if scheme == Scheme::Semilinear {
                backward_solve_semilinear(&spec, &batch, &config.basis, config.picard_iters)?
            } else {
                backward_solve_2bsde(&spec, &batch, &config.basis, config.picard_iters)?
            };
            summary["value"] = json!(sol.root_value.value);
            summary["stderr"] = json!(sol.root_value.stderr);
            if let Some(v) = analytic_root {
                summary["analytic_value"] = json!(v);
            }
            summary["rank_fallback_steps"] = json!(sol
                .steps
                .iter()
                .filter(|s| s.fit.rank_fallback || s.moment_fit.rank_fallback)
                .count());
            summary["kinked_terminal_paths"] = json!(sol.kinked_terminal.len());
            artifacts.push(Artifact {
                name: "steps.csv".into(),
                contents: solution_csv(&spec, &batch, &sol).into_bytes(),
            });
            if scheme == Scheme::Hjb {
                let cp = spec.control().expect("checked above");
                let field = extract_control(cp, &sol, &batch)?;
                let k = field.control_dim;
                let mut csv = String::from("n,t");
                for i in 0..k {
                    let _ = write!(csv, ",mean_u_{i},min_u_{i},max_u_{i}");
                }
                csv.push('\n');
                for n in 0..=field.steps {
                    let _ = write!(csv, "{n},{}", num(batch.grid.node(n)));
                    for i in 0..k {
                        let col: Vec<f64> =
                            (0..field.paths).map(|j| field.control(n, j)[i]).collect();
                        let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                        let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let _ =
                            write!(csv, ",{},{},{}", num(numeric::mean(&col)), num(lo), num(hi));
                    }
                    csv.push('\n');
                }
                artifacts.push(Artifact {
                    name: "control.csv".into(),
                    contents: csv.into_bytes(),
                });
            }
        }
        Scheme::Verify => unreachable!(),
    }

    if config.output.dump_paths {
        let mut buf = Vec::new();
        batch.write_to(&mut buf)?;
        artifacts.push(Artifact {
            name: "paths.bin".into(),
            contents: buf,
        });
    }
    Ok(RunOutput {
        summary,
        artifacts,
        checks_failed: false,
    })
}

fn state_csv(batch: &PathBatch) -> String {
    let d = batch.dim;
    let mut csv = String::from("n,t");
    for i in 0..d {
        let _ = write!(csv, ",mean_X_{i}");
    }
    csv.push_str(",active_fraction\n");
    for n in 0..=batch.steps() {
        let _ = write!(csv, "{n},{}", num(batch.grid.node(n)));
        for i in 0..d {
            let col: Vec<f64> = (0..batch.paths).map(|j| batch.state(j, n)[i]).collect();
            let _ = write!(csv, ",{}", num(numeric::mean(&col)));
        }
        let active = (0..batch.paths)
            .filter(|&j| n < batch.stop_index(j))
            .count();
        let _ = writeln!(csv, ",{}", num(active as f64 / batch.paths as f64));
    }
    csv
}

fn solution_csv(spec: &ProblemSpec, batch: &PathBatch, sol: &BackwardSolution) -> String {
    let d = sol.dim;
    let analytic = spec.analytic();
    let mut csv = String::from("n,t,mean_Y");
    if analytic.is_some() {
        csv.push_str(",rms_Y_err");
    }
    for i in 0..d {
        let _ = write!(csv, ",mean_Z_{i}");
    }
    if sol.has_gamma() {
        for i in 0..d {
            for k in 0..d {
                let _ = write!(csv, ",mean_Gamma_{i}{k}");
            }
        }
    }
    csv.push('\n');
    for n in 0..=sol.grid.steps {
        let t = sol.grid.node(n);
        let _ = write!(
            csv,
            "{n},{},{}",
            num(t),
            num(numeric::mean(sol.y_section(n)))
        );
        if let Some(v) = analytic {
            let errs: Vec<f64> = (0..sol.paths)
                .map(|j| sol.y(n, j) - (v.value)(t, batch.state(j, n)))
                .collect();
            let _ = write!(csv, ",{}", num(numeric::rms(&errs)));
        }
        let zs = sol.z_section(n);
        for i in 0..d {
            let col: Vec<f64> = (0..sol.paths).map(|j| zs[j * d + i]).collect();
            let _ = write!(csv, ",{}", num(numeric::mean(&col)));
        }
        if let Some(gs) = sol.gamma_section(n) {
            for e in 0..d * d {
                let col: Vec<f64> = (0..sol.paths).map(|j| gs[j * d * d + e]).collect();
                let _ = write!(csv, ",{}", num(numeric::mean(&col)));
            }
        }
        csv.push('\n');
    }
    csv
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub metric: f64,
    pub threshold: f64,
    pub pass: bool,
}

fn check(name: &str, metric: f64, threshold: f64, pass: bool) -> Check {
    Check {
        name: name.into(),
        metric,
        threshold,
        pass,
    }
}

/// Deterministic points of `[t0, T) × region` on a low-discrepancy lattice.
fn probe_points(spec: &ProblemSpec, t0: f64, x0: &[f64], count: usize) -> Vec<(f64, Vec<f64>)> {
    let d = spec.dim();
    let (lo, hi): (Vec<f64>, Vec<f64>) = match spec.domain() {
        Domain::WholeSpace => (
            x0.iter().map(|v| v - 2.0).collect(),
            x0.iter().map(|v| v + 2.0).collect(),
        ),
        Domain::Box { lower, upper } => (lower.clone(), upper.clone()),
    };
    let golden = 0.618_033_988_749_895;
    (0..count)
        .map(|i| {
            let s = (i as f64 + 0.5) / count as f64;
            let t = t0 + s * (spec.horizon() - t0);
            let x = (0..d)
                .map(|k| {
                    let u = ((i + 1) as f64 * (golden + k as f64 * 0.414_213_562_373)).fract();
                    lo[k] + (0.02 + 0.96 * u) * (hi[k] - lo[k])
                })
                .collect();
            (t, x)
        })
        .collect()
}

fn run_verify(
    config: &RunConfig,
    spec: &ProblemSpec,
    x0: &[f64],
    grid: &TimeGrid,
    echo: RunConfig,
) -> Result<RunOutput> {
    let mut checks = Vec::new();
    let report = validate_assumptions(spec, spec.growth(), config.verify.samples, config.seed)?;
    let a4 = report.check("a4_monotone_gamma").expect("always reported");
    checks.push(check("a4_monotone_gamma", a4.metric, -1e-12, a4.pass));

    if let Some(v) = spec.analytic() {
        let mut worst: f64 = 0.0;
        for (t, x) in probe_points(spec, config.t0, x0, config.verify.samples) {
            worst = worst.max(spec.pde_residual(t, &x)?.abs());
        }
        checks.push(check("pde_residual", worst, 1e-8, worst <= 1e-8));

        let exact = (v.value)(config.t0, x0);
        if spec.dim() == 1 {
            let (lo, hi, inner) = match spec.domain() {
                Domain::Box { lower, upper } => (lower[0], upper[0], (lower[0], upper[0])),
                Domain::WholeSpace => (x0[0] - 6.0, x0[0] + 6.0, (x0[0] - 3.0, x0[0] + 3.0)),
            };
            let fd_grid = FdGrid::new(spec, config.t0, lo, hi, config.verify.fd_nodes, None)?;
            let fd = fd_solve_1d(spec, &fd_grid)?;
            let mut worst: f64 = 0.0;
            let mut scale: f64 = 1.0;
            for (m, &x) in fd.xs.iter().enumerate() {
                if x >= inner.0 && x <= inner.1 {
                    let e = (v.value)(config.t0, &[x]);
                    worst = worst.max((fd.row(0)[m] - e).abs());
                    scale = scale.max(e.abs());
                }
            }
            let rel = worst / scale;
            checks.push(check("fd_oracle", rel, 1e-2, rel <= 1e-2));
        }

        let fine = TimeGrid::new(config.t0, spec.horizon(), 2 * config.steps)?;
        let coarse_batch = euler_simulate(spec, grid, x0, config.paths, config.seed)?;
        let fine_batch = euler_simulate(spec, &fine, x0, config.paths, config.seed)?;
        let coarse = twobsde_residuals(spec, &coarse_batch)?;
        let fine_r = twobsde_residuals(spec, &fine_batch)?;
        let ratio = if fine_r.mean_rms_value > 0.0 {
            coarse.mean_rms_value / fine_r.mean_rms_value
        } else {
            f64::INFINITY
        };
        checks.push(check(
            "value_residual_halving",
            ratio,
            1.8,
            ratio >= 1.8 || coarse.mean_rms_value < 1e-12,
        ));
        let gap = coarse.terminal_gap.max(fine_r.terminal_gap);
        checks.push(check("terminal_identity", gap, 1e-10, gap <= 1e-10));

        let sol = backward_solve_2bsde(spec, &coarse_batch, &config.basis, config.picard_iters)?;
        let err = (sol.root_value.value - exact).abs();
        let tol = 3.0 * sol.root_value.stderr + 0.02 * (1.0 + exact.abs());
        checks.push(check("backward_representation", err, tol, err <= tol));

        if let Some(coeffs) = spec.linear() {
            let est = feynman_kac_estimate(spec, coeffs, &coarse_batch)?;
            let err = (est.value - exact).abs();
            let tol = 3.0 * est.stderr + 0.01 * (1.0 + exact.abs());
            checks.push(check("feynman_kac", err, tol, err <= tol));
        }
    }

    let all_pass = checks.iter().all(|c| c.pass);
    let report = json!({ "checks": checks, "all_pass": all_pass });
    let summary = json!({
        "scheme": Scheme::Verify.name(),
        "problem": spec.name(),
        "all_pass": all_pass,
        "version": VERSION,
        "git_describe": GIT_DESCRIBE,
        "config": serde_json::to_value(&echo).map_err(|e| Error::InvalidConfig(e.to_string()))?,
    });
    let mut text = serde_json::to_string_pretty(&report).expect("serializable");
    text.push('\n');
    Ok(RunOutput {
        summary,
        artifacts: vec![Artifact {
            name: "report.json".into(),
            contents: text.into_bytes(),
        }],
        checks_failed: !all_pass,
    })
}

/// Writes `summary.json` (with `host` merged in) and every artifact into
/// `dir`, creating it if needed.
pub fn write_outputs(dir: &Path, output: &RunOutput, host: Value) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut summary = output.summary.clone();
    summary["host"] = host;
    let mut text = serde_json::to_string_pretty(&summary).expect("serializable");
    text.push('\n');
    for a in &output.artifacts {
        std::fs::write(dir.join(&a.name), &a.contents)?;
    }
    std::fs::write(dir.join("summary.json"), text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_echo() {
        let cfg =
            RunConfig::from_json(r#"{"problem": "heat", "J": 10, "N": 4, "seed": 1}"#).unwrap();
        assert_eq!(cfg.steps, 4);
        assert_eq!(cfg.paths, 10);
        assert_eq!(cfg.picard_iters, 2);
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn rejects_out_of_range() {
        for text in [
            r#"{"problem": "heat", "N": 0}"#,
            r#"{"problem": "heat", "J": 0}"#,
            r#"{"problem": "heat", "x0": [1, 2]}"#,
            r#"{"problem": "heat", "t0": 1.0}"#,
            r#"{"problem": "nope"}"#,
        ] {
            let cfg = RunConfig::from_json(text).unwrap();
            assert!(cfg.validate().is_err(), "{text}");
        }
        assert!(RunConfig::from_json(r#"{"problem": "heat", "bogus": 1}"#).is_err());
    }

    #[test]
    fn scheme_must_match() {
        let cfg =
            RunConfig::from_json(r#"{"problem": "heat", "scheme": "linear", "J": 5, "N": 2}"#)
                .unwrap();
        assert!(run(&cfg, Scheme::Semilinear).is_err());
        assert!(run(&cfg, Scheme::Linear).is_ok());
    }

    #[test]
    fn csv_header_for_full_scheme() {
        let cfg = RunConfig::from_json(r#"{"problem": "heat", "J": 50, "N": 4}"#).unwrap();
        let out = run(&cfg, Scheme::Full2bsde).unwrap();
        let csv = String::from_utf8(out.artifacts[0].contents.clone()).unwrap();
        assert!(csv.starts_with("n,t,mean_Y,rms_Y_err,mean_Z_0,mean_Gamma_00\n"));
        assert_eq!(csv.lines().count(), 6);
    }
}
