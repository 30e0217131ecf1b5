//! Config parsing and the experiment commands behind the binary.
//!
//! Config files are `key = value` lines with `#` comments and the sections
//! `[solver]`, `[coefficient]`, `[data]` and `[audits]`; `output` sits above
//! the first section.

use crate::coefficients::{validate_conditions, CoefficientSpec};
use crate::diagnostics::{
    antiderivative_audit, decay_fit, energy_audit, gronwall_bound, growth_audit,
    local_energy_audit, morawetz_identity_audit, morawetz_residual, support_audit, virial_audit,
    weighted_energy_audit, AuditEntry, AuditReport, BoundInputs, DecayFit, DiagnosticsError,
    EnergyRecord,
};
use crate::field::{FieldError, Grid2D};
use crate::initial_data::{make_dataset, DataError, DataSpec, Preset};
use crate::potential::{
    certify_far_gradient, certify_gradient_energy_growth, certify_near_bounds, far_field_points,
    newtonian_potential, PotentialError,
};
use crate::solver::{run_with_sink, RunOutput, SimulationConfig, SolverError, DEFAULT_MAX_NODES};
use rayon::prelude::*;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Audit groups that can be switched off under `[audits]`.
pub const AUDIT_GROUPS: [&str; 10] = [
    "energy",
    "support",
    "morawetz",
    "weighted",
    "antiderivative",
    "growth",
    "virial",
    "local_energy",
    "gronwall",
    "potential",
];

pub const SERIES_COLUMNS: [&str; 9] = [
    "t",
    "E_total",
    "E_loc",
    "E_ext",
    "l2_norm",
    "weighted_ext",
    "support_radius",
    "morawetz_residual",
    "K_integral",
];

pub const AUDIT_COLUMNS: [&str; 6] = ["name", "paper_anchor", "lhs", "rhs", "margin", "pass"];

/// Required observed order of the refinement study.
pub const REFINEMENT_ORDER: f64 = 1.5;

const DEFAULT_R0: f64 = 2.0;
const DEFAULT_GAMMA0: f64 = 0.5;
const DEFAULT_K_PEAK: f64 = 2.0;
const DEFAULT_WIGGLE: f64 = 0.05;

/// Every accepted `(section, key)`; the top level is `""`.
const KEYS: [(&str, &str); 19] = [
    ("", "output"),
    ("solver", "T_max"),
    ("solver", "dx"),
    ("solver", "cfl"),
    ("solver", "stride"),
    ("solver", "R"),
    ("solver", "max_nodes"),
    ("solver", "refinement"),
    ("coefficient", "family"),
    ("coefficient", "k0"),
    ("coefficient", "gamma0"),
    ("coefficient", "r0"),
    ("coefficient", "k_peak"),
    ("coefficient", "amplitude"),
    ("data", "preset"),
    ("data", "L"),
    ("data", "amplitude"),
    ("audits", "decay_window"),
    ("audits", "gronwall_t0"),
];

fn is_known(section: &str, key: &str) -> bool {
    KEYS.contains(&(section, key)) || (section == "audits" && AUDIT_GROUPS.contains(&key))
}

/// Config problems; `line` is 1-based, 0 when the key was never written.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key `{key}` in [{section}]")]
    UnknownKey {
        line: usize,
        section: String,
        key: String,
    },
    #[error("line {line}: `{key}` expects {expected}, got `{value}`")]
    Type {
        line: usize,
        key: String,
        expected: &'static str,
        value: String,
    },
    #[error("line {line}: `{key}`: {reason}")]
    Invalid {
        line: usize,
        key: String,
        reason: String,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{0}")]
    Usage(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> CliError + '_ {
    move |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub simulation: SimulationConfig,
    pub output: PathBuf,
    /// Indexed like `AUDIT_GROUPS`.
    pub audits: [bool; AUDIT_GROUPS.len()],
    /// Also run at `dx/2` and `dx/4` and audit the identity's convergence.
    pub refinement: bool,
    pub decay_window: Option<(f64, f64)>,
    pub gronwall_t0: Option<f64>,
}

impl RunConfig {
    pub fn audit_enabled(&self, group: &str) -> bool {
        AUDIT_GROUPS
            .iter()
            .position(|g| *g == group)
            .is_some_and(|i| self.audits[i])
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::parse_with_overrides(text, &[])
    }

    /// Parses `text`, then replaces (or adds) the given keys. A key may be
    /// written `section.key`, or bare when only one section has it.
    pub fn parse_with_overrides(
        text: &str,
        overrides: &[(&str, &str)],
    ) -> Result<Self, ConfigError> {
        let mut entries = read_entries(text)?;
        for (name, value) in overrides {
            let (section, key) = resolve_key(name)?;
            match entries
                .iter_mut()
                .find(|e| e.section == section && e.key == key)
            {
                Some(e) => e.value = value.to_string(),
                None => entries.push(Entry {
                    section: section.to_string(),
                    key: key.to_string(),
                    value: value.to_string(),
                    line: 0,
                }),
            }
        }
        Self::from_entries(&entries)
    }

    fn from_entries(entries: &[Entry]) -> Result<Self, ConfigError> {
        let table = Table::new(entries)?;

        let output = table.str("", "output").unwrap_or("wavedecay-out").into();
        let t_max = table.f64("solver", "T_max")?.unwrap_or(50.0);
        let dx = table.f64("solver", "dx")?.unwrap_or(0.05);
        let cfl = table.f64("solver", "cfl")?.unwrap_or(0.5);
        let stride = table.usize("solver", "stride")?.unwrap_or(10);
        let max_nodes = table
            .usize("solver", "max_nodes")?
            .unwrap_or(DEFAULT_MAX_NODES);
        let refinement = table.bool("solver", "refinement")?.unwrap_or(false);

        let coefficient = table.coefficient()?;
        let preset = match table.str("data", "preset") {
            None => Preset::BumpVelocity,
            Some(p) => p.parse().map_err(|_| ConfigError::Type {
                line: table.line("data", "preset"),
                key: "preset".into(),
                expected: "bump-velocity, bump-displacement, dipole-velocity or zero",
                value: p.into(),
            })?,
        };
        let data = DataSpec {
            preset,
            support: table.f64("data", "L")?.unwrap_or(1.0),
            amplitude: table.f64("data", "amplitude")?.unwrap_or(1.0),
        };
        let radius = table.f64("solver", "R")?.unwrap_or(2.0 * coefficient.r0());

        let mut audits = [true; AUDIT_GROUPS.len()];
        for (i, g) in AUDIT_GROUPS.iter().enumerate() {
            if let Some(on) = table.bool("audits", g)? {
                audits[i] = on;
            }
        }
        let decay_window = match table.str("audits", "decay_window") {
            None => None,
            Some(v) => Some(parse_window(v).ok_or_else(|| ConfigError::Type {
                line: table.line("audits", "decay_window"),
                key: "decay_window".into(),
                expected: "two times `a, b` with 1 < a < b",
                value: v.into(),
            })?),
        };
        let gronwall_t0 = table.f64("audits", "gronwall_t0")?;

        let mut simulation = SimulationConfig::new(data, coefficient, t_max);
        simulation.radius = radius;
        simulation.dx = dx;
        simulation.cfl = cfl;
        simulation.sample_stride = stride;
        simulation.max_nodes = max_nodes;
        if let Err(e) = simulation.validate() {
            let SolverError::InvalidConfig { key, reason } = e else {
                unreachable!("validate only reports invalid keys")
            };
            let section = if key == "L" { "data" } else { "solver" };
            return Err(ConfigError::Invalid {
                line: table.line(section, key),
                key: key.into(),
                reason: if key == "R" {
                    format!("{reason}; the localized-energy radius needs R > r0")
                } else {
                    reason
                },
            });
        }
        if !(data.amplitude.is_finite()) {
            return Err(ConfigError::Invalid {
                line: table.line("data", "amplitude"),
                key: "amplitude".into(),
                reason: "must be finite".into(),
            });
        }
        Ok(Self {
            simulation,
            output,
            audits,
            refinement,
            decay_window,
            gronwall_t0,
        })
    }

    /// Canonical text form; `parse(to_text())` gives back the same config.
    pub fn to_text(&self) -> String {
        let s = &self.simulation;
        let mut out = String::new();
        let _ = writeln!(out, "output = {}", self.output.display());
        let _ = writeln!(out, "\n[solver]");
        let _ = writeln!(out, "T_max = {}", s.t_max);
        let _ = writeln!(out, "dx = {}", s.dx);
        let _ = writeln!(out, "cfl = {}", s.cfl);
        let _ = writeln!(out, "stride = {}", s.sample_stride);
        let _ = writeln!(out, "R = {}", s.radius);
        let _ = writeln!(out, "max_nodes = {}", s.max_nodes);
        let _ = writeln!(out, "refinement = {}", self.refinement);
        let _ = writeln!(out, "\n[coefficient]");
        let _ = writeln!(out, "family = {}", s.coefficient.family());
        match s.coefficient {
            CoefficientSpec::Constant { k0 } => {
                let _ = writeln!(out, "k0 = {k0}");
            }
            CoefficientSpec::Remark42 { gamma0, r0 } => {
                let _ = writeln!(out, "gamma0 = {gamma0}\nr0 = {r0}");
            }
            CoefficientSpec::RadialDecreasing { k_peak, k0, r0 } => {
                let _ = writeln!(out, "k_peak = {k_peak}\nk0 = {k0}\nr0 = {r0}");
            }
            CoefficientSpec::Lipschitz { k0, amplitude, r0 } => {
                let _ = writeln!(out, "k0 = {k0}\namplitude = {amplitude}\nr0 = {r0}");
            }
        }
        let _ = writeln!(out, "\n[data]");
        let _ = writeln!(out, "preset = {}", s.data.preset);
        let _ = writeln!(out, "L = {}", s.data.support);
        let _ = writeln!(out, "amplitude = {}", s.data.amplitude);
        let _ = writeln!(out, "\n[audits]");
        for (g, on) in AUDIT_GROUPS.iter().zip(self.audits) {
            let _ = writeln!(out, "{g} = {on}");
        }
        if let Some((a, b)) = self.decay_window {
            let _ = writeln!(out, "decay_window = {a}, {b}");
        }
        if let Some(t0) = self.gronwall_t0 {
            let _ = writeln!(out, "gronwall_t0 = {t0}");
        }
        out
    }

    /// `γ0` for remark42, `η0` for lipschitz, zero otherwise.
    fn rate_parameter(&self, out: &RunOutput) -> f64 {
        match self.simulation.coefficient {
            CoefficientSpec::Remark42 { gamma0, .. } => gamma0,
            CoefficientSpec::Lipschitz { .. } => out.coefficient.eta0().unwrap_or(0.0),
            _ => 0.0,
        }
    }
}

fn parse_window(v: &str) -> Option<(f64, f64)> {
    let (a, b) = v.split_once(',')?;
    let (a, b) = (a.trim().parse::<f64>().ok()?, b.trim().parse::<f64>().ok()?);
    (a > 1.0 && b > a && b.is_finite()).then_some((a, b))
}

fn resolve_key(name: &str) -> Result<(&'static str, &'static str), ConfigError> {
    let all = KEYS
        .iter()
        .copied()
        .chain(AUDIT_GROUPS.iter().map(|g| ("audits", *g)));
    let hits: Vec<(&str, &str)> = match name.split_once('.') {
        Some((s, k)) => all.filter(|(a, b)| *a == s && *b == k).collect(),
        None => all.filter(|(_, b)| *b == name).collect(),
    };
    match hits.as_slice() {
        [one] => Ok(*one),
        [] => Err(ConfigError::UnknownKey {
            line: 0,
            section: name.split_once('.').map_or("", |p| p.0).into(),
            key: name.into(),
        }),
        _ => Err(ConfigError::Invalid {
            line: 0,
            key: name.into(),
            reason: "ambiguous; write it as section.key".into(),
        }),
    }
}

#[derive(Debug, Clone)]
struct Entry {
    section: String,
    key: String,
    value: String,
    line: usize,
}

fn read_entries(text: &str) -> Result<Vec<Entry>, ConfigError> {
    let mut section = String::new();
    let mut entries: Vec<Entry> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = strip_comment(raw).trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                line,
                message: format!("unterminated section header `{content}`"),
            })?;
            let name = name.trim();
            if !["solver", "coefficient", "data", "audits"].contains(&name) {
                return Err(ConfigError::Syntax {
                    line,
                    message: format!("unknown section [{name}]"),
                });
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line,
            message: format!("expected `key = value`, got `{content}`"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if !is_known(&section, key) {
            return Err(ConfigError::UnknownKey {
                line,
                section: section.clone(),
                key: key.into(),
            });
        }
        if let Some(prev) = entries
            .iter()
            .find(|e| e.section == section && e.key == key)
        {
            return Err(ConfigError::Invalid {
                line,
                key: key.into(),
                reason: format!("already set on line {}", prev.line),
            });
        }
        entries.push(Entry {
            section: section.clone(),
            key: key.into(),
            value: value.into(),
            line,
        });
    }
    Ok(entries)
}

/// Drops a `#` comment that starts the line or follows whitespace.
fn strip_comment(line: &str) -> &str {
    let bytes = line.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if b == b'#' && (i == 0 || bytes[i - 1].is_ascii_whitespace()) {
            return &line[..i];
        }
    }
    line
}

struct Table<'a> {
    map: HashMap<(&'a str, &'a str), &'a Entry>,
}

impl<'a> Table<'a> {
    fn new(entries: &'a [Entry]) -> Result<Self, ConfigError> {
        let mut map = HashMap::new();
        for e in entries {
            map.insert((e.section.as_str(), e.key.as_str()), e);
        }
        Ok(Self { map })
    }

    fn line(&self, section: &str, key: &str) -> usize {
        self.map.get(&(section, key)).map_or(0, |e| e.line)
    }

    fn str(&self, section: &str, key: &str) -> Option<&'a str> {
        self.map.get(&(section, key)).map(|e| e.value.as_str())
    }

    fn typed<T: std::str::FromStr>(
        &self,
        section: &str,
        key: &str,
        expected: &'static str,
    ) -> Result<Option<T>, ConfigError> {
        match self.map.get(&(section, key)) {
            None => Ok(None),
            Some(e) => e.value.parse().map(Some).map_err(|_| ConfigError::Type {
                line: e.line,
                key: key.into(),
                expected,
                value: e.value.clone(),
            }),
        }
    }

    fn f64(&self, section: &str, key: &str) -> Result<Option<f64>, ConfigError> {
        let v: Option<f64> = self.typed(section, key, "a number")?;
        match v {
            Some(x) if !x.is_finite() => Err(ConfigError::Type {
                line: self.line(section, key),
                key: key.into(),
                expected: "a finite number",
                value: self.str(section, key).unwrap_or_default().into(),
            }),
            _ => Ok(v),
        }
    }

    fn usize(&self, section: &str, key: &str) -> Result<Option<usize>, ConfigError> {
        self.typed(section, key, "a non-negative integer")
    }

    fn bool(&self, section: &str, key: &str) -> Result<Option<bool>, ConfigError> {
        self.typed(section, key, "`true` or `false`")
    }

    fn coefficient(&self) -> Result<CoefficientSpec, ConfigError> {
        const S: &str = "coefficient";
        let family = self.str(S, "family").unwrap_or("constant");
        let allowed: &[&str] = match family {
            "constant" => &["k0"],
            "remark42" => &["gamma0", "r0"],
            "radial-decreasing" => &["k_peak", "k0", "r0"],
            "lipschitz" => &["k0", "amplitude", "r0"],
            other => {
                return Err(ConfigError::Type {
                    line: self.line(S, "family"),
                    key: "family".into(),
                    expected: "constant, remark42, radial-decreasing or lipschitz",
                    value: other.into(),
                })
            }
        };
        for ((section, key), e) in &self.map {
            if *section == S && *key != "family" && !allowed.contains(key) {
                return Err(ConfigError::Invalid {
                    line: e.line,
                    key: key.to_string(),
                    reason: format!("not a parameter of family {family}"),
                });
            }
        }
        let invalid = |key: &str, reason: String| ConfigError::Invalid {
            line: self.line(S, key),
            key: key.into(),
            reason,
        };
        let k0 = self.f64(S, "k0")?.unwrap_or(1.0);
        if !(k0 > 0.0) {
            return Err(invalid("k0", format!("{k0} is not positive")));
        }
        let r0 = self.f64(S, "r0")?.unwrap_or(DEFAULT_R0);
        if family != "constant" && !(r0 > 0.0) {
            return Err(invalid("r0", format!("{r0} is not positive")));
        }
        Ok(match family {
            "constant" => CoefficientSpec::Constant { k0 },
            "remark42" => {
                let gamma0 = self.f64(S, "gamma0")?.unwrap_or(DEFAULT_GAMMA0);
                if !(0.0..1.0).contains(&gamma0) {
                    return Err(invalid("gamma0", format!("{gamma0} is outside [0, 1)")));
                }
                CoefficientSpec::Remark42 { gamma0, r0 }
            }
            "radial-decreasing" => {
                let k_peak = self.f64(S, "k_peak")?.unwrap_or(DEFAULT_K_PEAK.max(k0));
                if k_peak < k0 {
                    return Err(invalid(
                        "k_peak",
                        format!("{k_peak} is below k0 = {k0}, so K would increase outward"),
                    ));
                }
                CoefficientSpec::RadialDecreasing { k_peak, k0, r0 }
            }
            _ => CoefficientSpec::Lipschitz {
                k0,
                amplitude: self.f64(S, "amplitude")?.unwrap_or(DEFAULT_WIGGLE),
                r0,
            },
        })
    }
}

/// An audit that was enabled but could not be evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct Skipped {
    pub group: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub output: RunOutput,
    pub report: AuditReport,
    pub skipped: Vec<Skipped>,
    /// Final-record identity residuals at `dx`, `dx/2`, `dx/4`.
    pub refinement: Option<[f64; 3]>,
}

fn fmt_num(x: f64) -> String {
    format!("{x:e}")
}

/// Runs the simulation, streaming `series.csv`, then audits it and writes
/// `audits.csv` and `report.txt` into the output directory.
pub fn cmd_run(config: &RunConfig) -> Result<RunSummary, CliError> {
    let dir = &config.output;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let series_path = dir.join("series.csv");
    let mut writer = csv::Writer::from_path(&series_path).map_err(csv_err(&series_path))?;
    writer
        .write_record(SERIES_COLUMNS)
        .map_err(csv_err(&series_path))?;
    let mut e0 = None;
    let mut failure = None;
    let output = run_with_sink(&config.simulation, |r, l| {
        if failure.is_some() {
            return;
        }
        let e0 = *e0.get_or_insert(r.e_total);
        let row = [
            r.t,
            r.e_total,
            r.e_loc,
            r.e_ext,
            r.l2_norm,
            r.weighted_ext,
            r.support_radius,
            morawetz_residual(l, r, e0),
            l.k_integral,
        ];
        if let Err(e) = writer.write_record(row.iter().map(|x| fmt_num(*x))) {
            failure = Some(e);
        }
    })?;
    if let Some(e) = failure {
        return Err(csv_err(&series_path)(e));
    }
    writer.flush().map_err(|e| CliError::Io {
        path: series_path.clone(),
        source: e,
    })?;

    let (mut report, skipped) = audit_run(config, &output)?;
    let refinement = if config.refinement {
        let levels = refinement_residuals(config, &output)?;
        report.push(refinement_entry(&levels));
        Some(levels)
    } else {
        None
    };
    write_audits(&dir.join("audits.csv"), &report.entries)?;
    let text = render_report(config, &output, &report, &skipped, refinement);
    let report_path = dir.join("report.txt");
    fs::write(&report_path, text).map_err(io_err(&report_path))?;
    Ok(RunSummary {
        output,
        report,
        skipped,
        refinement,
    })
}

/// Every enabled audit on a finished run, plus the ones that had to be
/// skipped and why.
pub fn audit_run(
    config: &RunConfig,
    out: &RunOutput,
) -> Result<(AuditReport, Vec<Skipped>), CliError> {
    let sim = &config.simulation;
    let mut report = AuditReport::default();
    let mut skipped = Vec::new();
    let mut skip = |group: &str, reason: String| {
        skipped.push(Skipped {
            group: group.into(),
            reason,
        })
    };
    let records = &out.records;
    let e0 = records[0].e_total;
    let j0 = out.ledger[0].j0;
    let k = &out.coefficient;
    let inputs = BoundInputs::new(&out.data, k, j0, e0);
    let rate = config.rate_parameter(out);
    let on = |g: &str| config.audit_enabled(g);

    if on("energy") {
        report.push(energy_audit(records));
    }
    if on("support") {
        report.push(support_audit(records, sim.data.support, k.k1(), sim.dx));
    }
    if on("morawetz") {
        report.push(morawetz_identity_audit(records, &out.ledger));
    }
    if on("weighted") {
        report.push(weighted_energy_audit(records, &inputs));
    }
    let potential = if on("antiderivative") || on("potential") {
        Some(newtonian_potential(
            &out.data.u1,
            &far_field_points(sim.data.support),
            sim.data.support,
        )?)
    } else {
        None
    };
    if let (true, Some(pf)) = (on("antiderivative"), &potential) {
        for e in antiderivative_audit(&out.antiderivative, &inputs, pf) {
            report.push(e);
        }
    }
    if on("growth") {
        match growth_audit(records, &inputs) {
            Ok((entry, fit)) => {
                report.push(entry);
                report.growth = Some(fit);
            }
            Err(e) => skip("growth", e.to_string()),
        }
    }
    if on("virial") {
        if validate_conditions(k).k2.pass {
            report.push(virial_audit(records, &out.ledger));
        } else {
            skip("virial", "coefficient fails x·∇K ≤ 0".into());
        }
    }
    if on("local_energy") {
        report.push(local_energy_audit(records, &inputs, rate, sim.radius));
    }
    if on("gronwall") {
        match gronwall_bound(records, &inputs, rate, sim.radius, config.gronwall_t0) {
            Ok(g) => {
                report.push(g.audit);
                report.gronwall_prefactor = Some(g.prefactor);
            }
            Err(e) => skip("gronwall", e.to_string()),
        }
    }
    if let (true, Some(pf)) = (on("potential"), &potential) {
        let times: Vec<f64> = records.iter().map(|r| r.t).collect();
        report.push(certify_far_gradient(pf, &out.data));
        report.push(certify_gradient_energy_growth(
            pf,
            &out.data,
            k.k1(),
            &times,
        ));
        report.push(certify_near_bounds(pf, &out.data));
    }

    let window = config.decay_window.unwrap_or((20.0, sim.t_max.max(20.0)));
    match decay_fit(records, window, rate) {
        Ok(fit) => report.decay = Some(fit),
        Err(e) if config.decay_window.is_some() => skip("decay_fit", e.to_string()),
        Err(_) => {}
    }
    Ok((report, skipped))
}

fn refinement_residuals(config: &RunConfig, base: &RunOutput) -> Result<[f64; 3], CliError> {
    let last = |out: &RunOutput| {
        let (l, r) = (out.ledger.last().unwrap(), out.records.last().unwrap());
        morawetz_residual(l, r, out.records[0].e_total).abs()
    };
    let mut levels = [last(base), 0.0, 0.0];
    for (m, slot) in [2usize, 4].into_iter().zip(levels.iter_mut().skip(1)) {
        let mut sim = config.simulation.clone();
        sim.dx /= m as f64;
        sim.sample_stride *= m;
        *slot = last(&crate::solver::run(&sim)?);
    }
    Ok(levels)
}

/// Observed order `log2(r_coarse / r_fine)`, worst of the two halvings.
pub fn refinement_order(levels: &[f64; 3]) -> f64 {
    let order = |a: f64, b: f64| {
        if a == 0.0 && b == 0.0 {
            f64::INFINITY
        } else {
            (a / b).log2()
        }
    };
    order(levels[0], levels[1]).min(order(levels[1], levels[2]))
}

fn refinement_entry(levels: &[f64; 3]) -> AuditEntry {
    AuditEntry::new(
        "morawetz_refinement_order",
        "observed order of the multiplier-identity residual over dx, dx/2, dx/4 ≥ 1.5",
        REFINEMENT_ORDER,
        refinement_order(levels),
        0.0,
    )
    .with_detail(format!(
        "residuals {:.3e}, {:.3e}, {:.3e}",
        levels[0], levels[1], levels[2]
    ))
}

pub fn write_audits(path: &Path, entries: &[AuditEntry]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(AUDIT_COLUMNS).map_err(csv_err(path))?;
    for e in entries {
        w.write_record([
            e.name.clone(),
            e.anchor.clone(),
            fmt_num(e.lhs),
            fmt_num(e.rhs),
            fmt_num(e.margin),
            e.pass.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn render_entry(out: &mut String, e: &AuditEntry) {
    let _ = writeln!(
        out,
        "{}  {}\n      {}\n      lhs {:.6e}  rhs {:.6e}  slack {}  margin {:.6e}{}",
        if e.pass { "PASS" } else { "FAIL" },
        e.name,
        e.anchor,
        e.lhs,
        e.rhs,
        e.slack,
        e.margin,
        if e.detail.is_empty() {
            String::new()
        } else {
            format!("\n      {}", e.detail)
        }
    );
}

fn render_decay(out: &mut String, fit: &DecayFit) {
    let _ = writeln!(
        out,
        "decay fit on [{}, {}] ({} samples, {} excluded)",
        fit.window.0, fit.window.1, fit.used, fit.excluded
    );
    let _ = writeln!(out, "  log-log slope {:.4}", fit.slope);
    for m in &fit.models {
        let _ = writeln!(
            out,
            "  {:<26} prefactor {:.4e}  residual {:.4e}",
            m.model.name(),
            m.prefactor,
            m.residual
        );
    }
    let _ = writeln!(out, "  best model {}", fit.best.name());
    let _ = writeln!(
        out,
        "  E_loc t^(1-gamma)/sqrt(log t) in [{:.4e}, {:.4e}], ratio {:.3}",
        fit.bound_min,
        fit.bound_max,
        fit.bound_ratio()
    );
}

fn render_report(
    config: &RunConfig,
    out: &RunOutput,
    report: &AuditReport,
    skipped: &[Skipped],
    refinement: Option<[f64; 3]>,
) -> String {
    let sim = &config.simulation;
    let k = &out.coefficient;
    let hyp = validate_conditions(k).hypotheses().as_array();
    let mut s = String::new();
    let _ = writeln!(s, "wavedecay run report\n");
    let _ = writeln!(
        s,
        "coefficient {} (k_m {:.6}, k0 {:.6}, k1 {:.6}, r0 {})",
        sim.coefficient.family(),
        k.k_m(),
        k.k0(),
        k.k1(),
        k.r0()
    );
    if let Some(g) = k.gamma0() {
        let _ = writeln!(s, "gamma0 {g}");
    }
    if let Some(e) = k.eta0() {
        let _ = writeln!(s, "eta0 {e:.6}");
    }
    let flags: Vec<String> = hyp
        .iter()
        .enumerate()
        .map(|(i, h)| format!("K-{} {}", i + 1, if *h { "yes" } else { "no" }))
        .collect();
    let _ = writeln!(s, "conditions {}", flags.join(", "));
    let _ = writeln!(
        s,
        "data {} (L {}, amplitude {})",
        sim.data.preset, sim.data.support, sim.data.amplitude
    );
    let grid = k.grid();
    let _ = writeln!(
        s,
        "grid {}² nodes, dx {}, half-width {:.4}; dt {:.6e}, {} steps to T_max {}; R {}",
        grid.nodes_per_side(),
        sim.dx,
        grid.half_width(),
        out.dt,
        out.steps,
        sim.t_max,
        sim.radius
    );
    let _ = writeln!(
        s,
        "{} records, stride {}\n",
        out.records.len(),
        sim.sample_stride
    );

    let _ = writeln!(s, "audits");
    for e in &report.entries {
        render_entry(&mut s, e);
    }
    for sk in skipped {
        let _ = writeln!(s, "SKIP  {}\n      {}", sk.group, sk.reason);
    }
    let _ = writeln!(s);
    if let Some(levels) = refinement {
        let _ = writeln!(
            s,
            "refinement residuals {:.3e}, {:.3e}, {:.3e}; order {:.3}",
            levels[0],
            levels[1],
            levels[2],
            refinement_order(&levels)
        );
    }
    if let Some(g) = &report.growth {
        let _ = writeln!(
            s,
            "growth fit ‖u‖² ≈ a + b log t on t ≥ 10: a {:.5e}, b {:.5e}, R² {:.4} ({} samples)",
            g.a, g.b, g.r_squared, g.samples
        );
    }
    if let Some(c) = report.gronwall_prefactor {
        let _ = writeln!(s, "certified prefactor C* {c:.5e}");
    }
    if let Some(fit) = &report.decay {
        render_decay(&mut s, fit);
    }
    let failed = report.entries.iter().filter(|e| !e.pass).count();
    let _ = writeln!(
        s,
        "\n{}",
        if failed == 0 {
            "all audits pass".to_string()
        } else {
            format!("{failed} of {} audits fail", report.entries.len())
        }
    );
    s
}

/// One row of `sweep_summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: String,
    /// `None` when the run itself failed; the error text is in `error`.
    pub all_pass: Option<bool>,
    pub error: String,
    pub slope: Option<f64>,
    pub prefactor: Option<f64>,
    pub morawetz_final: Option<f64>,
    pub growth_b: Option<f64>,
}

pub const SWEEP_COLUMNS: [&str; 8] = [
    "param",
    "value",
    "status",
    "all_pass",
    "decay_slope",
    "c_star",
    "morawetz_final",
    "growth_b",
];

/// Thread count for sweeps: `WAVEDECAY_THREADS` if set, else rayon's default.
pub fn sweep_threads() -> Option<usize> {
    std::env::var("WAVEDECAY_THREADS")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n| n > 0)
}

/// Runs `config` once per value of `param`, each into
/// `<output>/<param>=<value>`, and writes `<output>/sweep_summary.csv`.
pub fn cmd_sweep(text: &str, param: &str, values: &[String]) -> Result<Vec<SweepRow>, CliError> {
    let base = RunConfig::parse(text)?;
    resolve_key(param)?;
    if values.is_empty() {
        return Err(CliError::Usage("--values needs at least one value".into()));
    }
    let configs: Vec<RunConfig> = values
        .iter()
        .map(|v| {
            let mut c = RunConfig::parse_with_overrides(text, &[(param, v)])?;
            c.output = base.output.join(format!("{param}={v}"));
            Ok(c)
        })
        .collect::<Result<_, ConfigError>>()?;

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = sweep_threads() {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        configs
            .par_iter()
            .zip(values)
            .map(|(c, v)| match cmd_run(c) {
                Ok(sum) => SweepRow {
                    value: v.clone(),
                    all_pass: Some(sum.report.all_pass()),
                    error: String::new(),
                    slope: sum.report.decay.as_ref().map(|d| d.slope),
                    prefactor: sum.report.gronwall_prefactor,
                    morawetz_final: {
                        let o = &sum.output;
                        Some(morawetz_residual(
                            o.ledger.last().unwrap(),
                            o.records.last().unwrap(),
                            o.records[0].e_total,
                        ))
                    },
                    growth_b: sum.report.growth.map(|g| g.b),
                },
                Err(e) => SweepRow {
                    value: v.clone(),
                    all_pass: None,
                    error: e.to_string(),
                    slope: None,
                    prefactor: None,
                    morawetz_final: None,
                    growth_b: None,
                },
            })
            .collect()
    });

    fs::create_dir_all(&base.output).map_err(io_err(&base.output))?;
    let path = base.output.join("sweep_summary.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(SWEEP_COLUMNS).map_err(csv_err(&path))?;
    let opt = |x: Option<f64>| x.map(fmt_num).unwrap_or_default();
    for r in &rows {
        let status = if r.all_pass.is_some() {
            "ok".to_string()
        } else {
            format!("error: {}", r.error)
        };
        w.write_record([
            param.to_string(),
            r.value.clone(),
            status,
            r.all_pass.map(|p| p.to_string()).unwrap_or_default(),
            opt(r.slope),
            opt(r.prefactor),
            opt(r.morawetz_final),
            opt(r.growth_b),
        ])
        .map_err(csv_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;
    Ok(rows)
}

/// The three potential certificates for the configured data, without a
/// simulation. Writes `audits.csv` to the output directory.
pub fn cmd_certify_potential(config: &RunConfig) -> Result<Vec<AuditEntry>, CliError> {
    let sim = &config.simulation;
    let l = sim.data.support;
    let grid = Grid2D::covering(l + 2.0 * sim.dx, sim.dx)?;
    let data = make_dataset(&sim.data, grid)?;
    let probe = Grid2D::covering(sim.coefficient.r0() + 4.0 * sim.dx, sim.dx)?;
    let k1 = sim
        .coefficient
        .build(probe)
        .map_err(SolverError::from)?
        .k1();
    let pf = newtonian_potential(&data.u1, &far_field_points(l), l)?;
    let times: Vec<f64> = (0..=20).map(|i| sim.t_max * i as f64 / 20.0).collect();
    let entries = vec![
        certify_far_gradient(&pf, &data),
        certify_gradient_energy_growth(&pf, &data, k1, &times),
        certify_near_bounds(&pf, &data),
    ];
    fs::create_dir_all(&config.output).map_err(io_err(&config.output))?;
    write_audits(&config.output.join("audits.csv"), &entries)?;
    Ok(entries)
}

pub fn render_entries(entries: &[AuditEntry]) -> String {
    let mut s = String::new();
    for e in entries {
        render_entry(&mut s, e);
    }
    s
}

/// Reads the records back from a `series.csv`.
pub fn read_series(path: &Path) -> Result<Vec<EnergyRecord>, CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let headers = rdr.headers().map_err(csv_err(path))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (t, e_loc) = match (col("t"), col("E_loc")) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(CliError::Usage(format!(
                "{}: needs `t` and `E_loc` columns",
                path.display()
            )))
        }
    };
    let optional = [
        col("E_total"),
        col("E_ext"),
        col("l2_norm"),
        col("weighted_ext"),
        col("support_radius"),
    ];
    let mut out = Vec::new();
    for (n, row) in rdr.records().enumerate() {
        let row = row.map_err(csv_err(path))?;
        let get = |c: usize| -> Result<f64, CliError> {
            row.get(c)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| {
                    CliError::Usage(format!(
                        "{}: row {}: column {} is not a number",
                        path.display(),
                        n + 2,
                        headers.get(c).unwrap_or("?")
                    ))
                })
        };
        let opt = |c: Option<usize>| c.map(get).transpose().map(|v| v.unwrap_or(0.0));
        out.push(EnergyRecord {
            t: get(t)?,
            e_loc: get(e_loc)?,
            e_total: opt(optional[0])?,
            e_ext: opt(optional[1])?,
            l2_norm: opt(optional[2])?,
            weighted_ext: opt(optional[3])?,
            support_radius: opt(optional[4])?,
        });
    }
    Ok(out)
}

/// Decay fit of a recorded series over `window`.
pub fn cmd_fit(path: &Path, window: (f64, f64), gamma: f64) -> Result<String, CliError> {
    let records = read_series(path)?;
    let fit = decay_fit(&records, window, gamma)?;
    let mut s = String::new();
    render_decay(&mut s, &fit);
    Ok(s)
}

/// Parses `a,b` for `--window`.
pub fn parse_window_arg(v: &str) -> Result<(f64, f64), CliError> {
    parse_window(v)
        .ok_or_else(|| CliError::Usage(format!("--window expects `a,b` with 1 < a < b, got `{v}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_round_trip() {
        let c = RunConfig::parse("[coefficient]\nfamily = constant\nk0 = 1\n").unwrap();
        assert_eq!(c.simulation.cfl, 0.5);
        assert_eq!(c.simulation.dx, 0.05);
        assert_eq!(c.simulation.sample_stride, 10);
        assert_eq!(c.simulation.radius, 2.0);
        let text = c.to_text();
        let again = RunConfig::parse(&text).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.to_text(), text);
    }

    #[test]
    fn rejects_with_line_numbers() {
        let e = RunConfig::parse("[coefficient]\nfamily = remark42\ngamma0 = 1.0\n").unwrap_err();
        assert!(matches!(e, ConfigError::Invalid { line: 3, ref key, .. } if key == "gamma0"));
        let e = RunConfig::parse("[solver]\nR = 1\n[coefficient]\nfamily = remark42\nr0 = 2\n")
            .unwrap_err();
        assert!(matches!(e, ConfigError::Invalid { line: 2, ref key, .. } if key == "R"));
        assert!(e.to_string().contains("R > r0"));
        let e = RunConfig::parse("# hi\n[solver]\nspeed = 3\n").unwrap_err();
        assert!(matches!(e, ConfigError::UnknownKey { line: 3, .. }));
        let e = RunConfig::parse("[solver]\ndx = fine\n").unwrap_err();
        assert!(matches!(e, ConfigError::Type { line: 2, .. }));
        let e = RunConfig::parse("[coefficient]\nfamily = constant\ngamma0 = 0.2\n").unwrap_err();
        assert!(matches!(e, ConfigError::Invalid { line: 3, .. }));
    }

    #[test]
    fn overrides() {
        let text = "[coefficient]\nfamily = remark42\ngamma0 = 0.25\n";
        let c = RunConfig::parse_with_overrides(text, &[("gamma0", "0.5"), ("solver.dx", "0.1")])
            .unwrap();
        assert_eq!(
            c.simulation.coefficient,
            CoefficientSpec::Remark42 {
                gamma0: 0.5,
                r0: DEFAULT_R0
            }
        );
        assert_eq!(c.simulation.dx, 0.1);
        assert!(RunConfig::parse_with_overrides(text, &[("amplitude", "1")]).is_err());
        assert!(RunConfig::parse_with_overrides(text, &[("data.amplitude", "2")]).is_ok());
    }

    #[test]
    fn comments_and_windows() {
        assert_eq!(strip_comment("a = 1 # note"), "a = 1 ");
        assert_eq!(strip_comment("output = run#3"), "output = run#3");
        assert_eq!(parse_window("20, 200"), Some((20.0, 200.0)));
        assert_eq!(parse_window("0.5, 200"), None);
    }

    #[test]
    fn refinement_orders() {
        assert!((refinement_order(&[4e-3, 1e-3, 2.5e-4]) - 2.0).abs() < 1e-12);
        assert_eq!(refinement_order(&[0.0, 0.0, 0.0]), f64::INFINITY);
    }
}
