//! Plain-text configuration parsing and serialization.
//!
//! The format is a flat key-value file with bracketed section headers:
//!
//! ```text
//! # comment lines start with '#'
//! [link]
//! fiber_length_km = 20
//! eta_det = 0.83
//!
//! [channels.1]
//! symbol_rate_hz = 10000000
//! if_freq_hz = 64000000
//! mod_variance_snu = 5.8
//! basis = amplitude
//!
//! [noise]
//! detector_ratio = 0:0.074 100000000:0.076
//! excess_noise_floor_snu = 0.0125
//!
//! [finite_size]
//! n_total = 10000000
//! m_pe = 1250000
//! ```
//!
//! Sections are `[link]`, `[channels.k]` (k = 1, 2, …), `[pilots.j]`,
//! `[noise]` and `[finite_size]`. Every key is optional except the three
//! required per-channel keys; omitted keys fall back to the defaults of the
//! corresponding model type. Unknown sections or keys are hard errors that
//! name the offending token and line, so a typo can never silently become a
//! default. Numbers are decimal only (scientific notation is accepted;
//! hexadecimal, `inf` and `nan` are not), and piecewise-linear tables are
//! whitespace-separated `frequency:value` pairs.
//!
//! Serialization via [`SimConfig::to_text`] is canonical: fixed section and
//! key order, floats printed in Rust's shortest-round-trip decimal form.
//! Parsing that text reproduces every `f64` bit-exactly, which makes the
//! SHA-256 of the canonical text ([`SimConfig::sha256_hex`]) a stable
//! fingerprint of the fully resolved configuration.
//!
//! Overlays are partial configs merged over a base at the individual-key
//! level: [`parse_fragment`] each file, then [`resolve_fragments`] with the
//! base first. Calibration results are written as such an overlay
//! ([`calibration_overlay_text`]) so the input file is never mutated.

use crate::error::Error;
use crate::model::{
    Basis, ChannelPlan, ChannelSettings, FiniteSizeParams, LinkParams, NoiseProfile,
    PilotTone, PiecewiseLinear,
};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// A fully resolved run configuration: channel layout, fiber link, receiver
/// noise description and finite-size block bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub plan: ChannelPlan,
    pub link: LinkParams,
    pub noise: NoiseProfile,
    pub finite: FiniteSizeParams,
}

impl Default for SimConfig {
    /// The published four-channel layout: 10-Mbaud channels on a 40-MHz
    /// grid starting at 64 MHz, 5.8 SNU modulation, amplitude basis.
    fn default() -> Self {
        let channels = (0..4)
            .map(|i| ChannelSettings {
                index: i + 1,
                symbol_rate_hz: 10e6,
                if_freq_hz: 64e6 + 40e6 * i as f64,
                mod_variance_snu: 5.8,
                basis: Basis::Amplitude,
            })
            .collect();
        SimConfig {
            plan: ChannelPlan::new(channels, vec![]).expect("default plan is valid"),
            link: LinkParams::default(),
            noise: NoiseProfile::default(),
            finite: FiniteSizeParams::default(),
        }
    }
}

impl SimConfig {
    /// Canonical text form: fixed section and key order, shortest
    /// round-trip decimal floats. [`parse_config`] of this text returns an
    /// equal `SimConfig` (bit-exact fields).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let l = &self.link;
        writeln!(s, "[link]").unwrap();
        writeln!(s, "fiber_length_km = {}", l.fiber_length_km).unwrap();
        writeln!(s, "fiber_loss_db_per_km = {}", l.fiber_loss_db_per_km).unwrap();
        writeln!(s, "eta_det = {}", l.eta_det).unwrap();
        writeln!(s, "beta = {}", l.beta).unwrap();
        writeln!(s, "trusted_devices = {}", l.trusted_devices).unwrap();
        writeln!(s, "f_sym_hz = {}", l.f_sym_hz).unwrap();
        for ch in &self.plan.channels {
            writeln!(s).unwrap();
            writeln!(s, "[channels.{}]", ch.index).unwrap();
            writeln!(s, "symbol_rate_hz = {}", ch.symbol_rate_hz).unwrap();
            writeln!(s, "if_freq_hz = {}", ch.if_freq_hz).unwrap();
            writeln!(s, "mod_variance_snu = {}", ch.mod_variance_snu).unwrap();
            writeln!(s, "basis = {}", ch.basis.as_str()).unwrap();
        }
        for (j, p) in self.plan.pilot_tones.iter().enumerate() {
            writeln!(s).unwrap();
            writeln!(s, "[pilots.{}]", j + 1).unwrap();
            writeln!(s, "freq_hz = {}", p.freq_hz).unwrap();
            writeln!(s, "relative_amplitude = {}", p.relative_amplitude).unwrap();
        }
        writeln!(s).unwrap();
        writeln!(s, "[noise]").unwrap();
        writeln!(s, "detector_ratio = {}", table_text(&self.noise.detector_ratio)).unwrap();
        writeln!(s, "carrier_noise = {}", table_text(&self.noise.carrier_noise)).unwrap();
        writeln!(s, "excess_noise_floor_snu = {}", self.noise.excess_noise_floor_snu).unwrap();
        writeln!(s, "nu_scale = {}", self.noise.nu_scale).unwrap();
        let f = &self.finite;
        writeln!(s).unwrap();
        writeln!(s, "[finite_size]").unwrap();
        writeln!(s, "n_total = {}", f.n_total).unwrap();
        writeln!(s, "m_pe = {}", f.m_pe).unwrap();
        writeln!(s, "eps_bar = {}", f.eps_bar).unwrap();
        writeln!(s, "eps_pe = {}", f.eps_pe).unwrap();
        s
    }

    /// SHA-256 of the canonical text, lowercase hex. Two configurations
    /// share a hash exactly when every resolved field is bit-identical.
    pub fn sha256_hex(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            write!(s, "{b:02x}").unwrap();
            s
        })
    }
}

fn table_text(map: &PiecewiseLinear) -> String {
    map.points()
        .iter()
        .map(|&(f, v)| format!("{f}:{v}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Overlay written by calibration: the two fitted noise parameters, merged
/// over any base configuration without touching its other keys.
pub fn calibration_overlay_text(excess_noise_floor_snu: f64, nu_scale: f64) -> String {
    format!(
        "[noise]\nexcess_noise_floor_snu = {excess_noise_floor_snu}\nnu_scale = {nu_scale}\n"
    )
}

/// One configuration file after lexing and schema checking: every entry is
/// typed and line-attributed, but cross-key validation has not happened yet.
/// A fragment may be a complete config or a partial overlay.
#[derive(Debug, Clone)]
pub struct ConfigFragment {
    entries: Vec<Entry>,
}

#[derive(Debug, Clone)]
struct Entry {
    section: Section,
    key: String,
    value: Value,
    line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Section {
    Link,
    Channel(usize),
    Pilot(usize),
    Noise,
    FiniteSize,
}

impl Section {
    fn name(&self) -> String {
        match self {
            Section::Link => "link".into(),
            Section::Channel(k) => format!("channels.{k}"),
            Section::Pilot(j) => format!("pilots.{j}"),
            Section::Noise => "noise".into(),
            Section::FiniteSize => "finite_size".into(),
        }
    }
}

#[derive(Debug, Clone)]
enum Value {
    Float(f64),
    UInt(u64),
    Bool(bool),
    BasisName(Basis),
    Table(PiecewiseLinear),
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Float,
    UInt,
    Bool,
    BasisName,
    Table,
}

/// The key schema: which keys exist in a section and what they parse as.
fn key_kind(section: &Section, key: &str) -> Option<Kind> {
    let table: &[(&str, Kind)] = match section {
        Section::Link => &[
            ("fiber_length_km", Kind::Float),
            ("fiber_loss_db_per_km", Kind::Float),
            ("eta_det", Kind::Float),
            ("beta", Kind::Float),
            ("trusted_devices", Kind::Bool),
            ("f_sym_hz", Kind::Float),
        ],
        Section::Channel(_) => &[
            ("symbol_rate_hz", Kind::Float),
            ("if_freq_hz", Kind::Float),
            ("mod_variance_snu", Kind::Float),
            ("basis", Kind::BasisName),
        ],
        Section::Pilot(_) => &[
            ("freq_hz", Kind::Float),
            ("relative_amplitude", Kind::Float),
        ],
        Section::Noise => &[
            ("detector_ratio", Kind::Table),
            ("carrier_noise", Kind::Table),
            ("excess_noise_floor_snu", Kind::Float),
            ("nu_scale", Kind::Float),
        ],
        Section::FiniteSize => &[
            ("n_total", Kind::UInt),
            ("m_pe", Kind::UInt),
            ("eps_bar", Kind::Float),
            ("eps_pe", Kind::Float),
        ],
    };
    table.iter().find(|(k, _)| *k == key).map(|&(_, kind)| kind)
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn parse_section_header(inner: &str, line: usize) -> Result<Section, Error> {
    match inner {
        "link" => return Ok(Section::Link),
        "noise" => return Ok(Section::Noise),
        "finite_size" => return Ok(Section::FiniteSize),
        _ => {}
    }
    for (prefix, make) in [
        ("channels.", Section::Channel as fn(usize) -> Section),
        ("pilots.", Section::Pilot as fn(usize) -> Section),
    ] {
        if let Some(num) = inner.strip_prefix(prefix) {
            let k: usize = num.parse().map_err(|_| {
                cfg_err(format!(
                    "line {line}: section \"[{inner}]\" needs a positive integer index"
                ))
            })?;
            if k == 0 {
                return Err(cfg_err(format!(
                    "line {line}: section \"[{inner}]\" indices start at 1"
                )));
            }
            return Ok(make(k));
        }
    }
    Err(cfg_err(format!("line {line}: unknown section \"[{inner}]\"")))
}

fn parse_float(raw: &str, key: &str, line: usize) -> Result<f64, Error> {
    let x: f64 = raw.parse().map_err(|_| {
        cfg_err(format!("line {line}: \"{raw}\" is not a decimal number for key \"{key}\""))
    })?;
    if !x.is_finite() {
        return Err(cfg_err(format!(
            "line {line}: key \"{key}\" must be a finite decimal number, got \"{raw}\""
        )));
    }
    Ok(x)
}

fn parse_value(kind: Kind, raw: &str, key: &str, line: usize) -> Result<Value, Error> {
    match kind {
        Kind::Float => Ok(Value::Float(parse_float(raw, key, line)?)),
        Kind::UInt => raw.parse::<u64>().map(Value::UInt).map_err(|_| {
            cfg_err(format!(
                "line {line}: \"{raw}\" is not an unsigned integer for key \"{key}\""
            ))
        }),
        Kind::Bool => match raw {
            "true" => Ok(Value::Bool(true)),
            "false" => Ok(Value::Bool(false)),
            _ => Err(cfg_err(format!(
                "line {line}: key \"{key}\" must be \"true\" or \"false\", got \"{raw}\""
            ))),
        },
        Kind::BasisName => raw.parse::<Basis>().map(Value::BasisName).map_err(|_| {
            cfg_err(format!(
                "line {line}: key \"{key}\" must be \"amplitude\" or \"phase\", got \"{raw}\""
            ))
        }),
        Kind::Table => {
            let mut pts = Vec::new();
            for tok in raw.split_whitespace() {
                let (f, v) = tok.split_once(':').ok_or_else(|| {
                    cfg_err(format!(
                        "line {line}: table entry \"{tok}\" in key \"{key}\" must be \
                         \"frequency:value\""
                    ))
                })?;
                pts.push((parse_float(f, key, line)?, parse_float(v, key, line)?));
            }
            let map = PiecewiseLinear::new(pts).map_err(|e| {
                cfg_err(format!("line {line}: key \"{key}\": {}", bare_message(e)))
            })?;
            Ok(Value::Table(map))
        }
    }
}

fn bare_message(e: Error) -> String {
    match e {
        Error::Domain(m) | Error::Config(m) | Error::Numerical(m) => m,
        Error::Io(e) => e.to_string(),
    }
}

/// Lexes and schema-checks one file's text. Every returned entry has a
/// known section, a known key and a value of the right type; duplicate keys
/// within the same file are rejected here.
pub fn parse_fragment(text: &str) -> Result<ConfigFragment, Error> {
    let mut entries: Vec<Entry> = Vec::new();
    let mut section: Option<Section> = None;
    for (i, raw_line) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw_line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if let Some(inner) = trimmed.strip_prefix('[') {
            let inner = inner.strip_suffix(']').ok_or_else(|| {
                cfg_err(format!("line {line}: section header \"{trimmed}\" is missing \"]\""))
            })?;
            section = Some(parse_section_header(inner.trim(), line)?);
            continue;
        }
        let (key, value) = trimmed.split_once('=').ok_or_else(|| {
            cfg_err(format!("line {line}: expected \"key = value\", got \"{trimmed}\""))
        })?;
        let (key, raw_value) = (key.trim(), value.trim());
        let section = section.clone().ok_or_else(|| {
            cfg_err(format!(
                "line {line}: key \"{key}\" appears before any [section] header"
            ))
        })?;
        let kind = key_kind(&section, key).ok_or_else(|| {
            cfg_err(format!(
                "line {line}: unknown key \"{key}\" in [{}]",
                section.name()
            ))
        })?;
        if let Some(prev) = entries.iter().find(|e| e.section == section && e.key == key) {
            return Err(cfg_err(format!(
                "line {line}: duplicate key \"{key}\" in [{}] (first set on line {})",
                section.name(),
                prev.line
            )));
        }
        let value = parse_value(kind, raw_value, key, line)?;
        entries.push(Entry { section, key: key.to_string(), value, line });
    }
    Ok(ConfigFragment { entries })
}

/// Merges fragments (base first, overlays after — later fragments win per
/// key) and assembles the run configuration, filling unset keys from the
/// model defaults and running all cross-field validation.
pub fn resolve_fragments(fragments: &[ConfigFragment]) -> Result<SimConfig, Error> {
    let mut merged: Vec<Entry> = Vec::new();
    for frag in fragments {
        for e in &frag.entries {
            match merged
                .iter_mut()
                .find(|m| m.section == e.section && m.key == e.key)
            {
                Some(slot) => *slot = e.clone(),
                None => merged.push(e.clone()),
            }
        }
    }

    let mut link = LinkParams::default();
    let mut noise = NoiseProfile::default();
    let fin_defaults = FiniteSizeParams::default();
    let (mut n_total, mut m_pe) = (fin_defaults.n_total, fin_defaults.m_pe);
    let (mut eps_bar, mut eps_pe) = (fin_defaults.eps_bar, fin_defaults.eps_pe);
    let mut channels: BTreeMap<usize, (Option<f64>, Option<f64>, Option<f64>, Basis)> =
        BTreeMap::new();
    let mut pilots: BTreeMap<usize, (Option<f64>, Option<f64>)> = BTreeMap::new();

    for e in &merged {
        match (&e.section, e.key.as_str(), &e.value) {
            (Section::Link, "fiber_length_km", Value::Float(x)) => link.fiber_length_km = *x,
            (Section::Link, "fiber_loss_db_per_km", Value::Float(x)) => {
                link.fiber_loss_db_per_km = *x
            }
            (Section::Link, "eta_det", Value::Float(x)) => link.eta_det = *x,
            (Section::Link, "beta", Value::Float(x)) => link.beta = *x,
            (Section::Link, "trusted_devices", Value::Bool(b)) => link.trusted_devices = *b,
            (Section::Link, "f_sym_hz", Value::Float(x)) => link.f_sym_hz = *x,
            (Section::Noise, "detector_ratio", Value::Table(t)) => {
                noise.detector_ratio = t.clone()
            }
            (Section::Noise, "carrier_noise", Value::Table(t)) => noise.carrier_noise = t.clone(),
            (Section::Noise, "excess_noise_floor_snu", Value::Float(x)) => {
                noise.excess_noise_floor_snu = *x
            }
            (Section::Noise, "nu_scale", Value::Float(x)) => noise.nu_scale = *x,
            (Section::FiniteSize, "n_total", Value::UInt(n)) => n_total = *n,
            (Section::FiniteSize, "m_pe", Value::UInt(n)) => m_pe = *n,
            (Section::FiniteSize, "eps_bar", Value::Float(x)) => eps_bar = *x,
            (Section::FiniteSize, "eps_pe", Value::Float(x)) => eps_pe = *x,
            (Section::Channel(k), key, value) => {
                let slot = channels.entry(*k).or_insert((None, None, None, Basis::Amplitude));
                match (key, value) {
                    ("symbol_rate_hz", Value::Float(x)) => slot.0 = Some(*x),
                    ("if_freq_hz", Value::Float(x)) => slot.1 = Some(*x),
                    ("mod_variance_snu", Value::Float(x)) => slot.2 = Some(*x),
                    ("basis", Value::BasisName(b)) => slot.3 = *b,
                    _ => unreachable!("schema admits no other channel keys"),
                }
            }
            (Section::Pilot(j), key, value) => {
                let slot = pilots.entry(*j).or_insert((None, None));
                match (key, value) {
                    ("freq_hz", Value::Float(x)) => slot.0 = Some(*x),
                    ("relative_amplitude", Value::Float(x)) => slot.1 = Some(*x),
                    _ => unreachable!("schema admits no other pilot keys"),
                }
            }
            _ => unreachable!("schema and assembly tables disagree"),
        }
    }

    if channels.is_empty() {
        return Err(cfg_err(
            "config defines no channels; at least [channels.1] is required",
        ));
    }
    for (pos, k) in channels.keys().enumerate() {
        if *k != pos + 1 {
            return Err(cfg_err(format!(
                "channel sections must be numbered 1..{} contiguously, found [channels.{k}]",
                channels.len()
            )));
        }
    }
    for (pos, j) in pilots.keys().enumerate() {
        if *j != pos + 1 {
            return Err(cfg_err(format!(
                "pilot sections must be numbered 1..{} contiguously, found [pilots.{j}]",
                pilots.len()
            )));
        }
    }

    let mut settings = Vec::with_capacity(channels.len());
    for (k, (sr, f_if, v, basis)) in &channels {
        let section = format!("[channels.{k}]");
        settings.push(ChannelSettings {
            index: *k,
            symbol_rate_hz: sr
                .ok_or_else(|| cfg_err(format!("{section}: missing required key \"symbol_rate_hz\"")))?,
            if_freq_hz: f_if
                .ok_or_else(|| cfg_err(format!("{section}: missing required key \"if_freq_hz\"")))?,
            mod_variance_snu: v
                .ok_or_else(|| cfg_err(format!("{section}: missing required key \"mod_variance_snu\"")))?,
            basis: *basis,
        });
    }
    let mut tones = Vec::with_capacity(pilots.len());
    for (j, (f, a)) in &pilots {
        let section = format!("[pilots.{j}]");
        tones.push(PilotTone {
            freq_hz: f
                .ok_or_else(|| cfg_err(format!("{section}: missing required key \"freq_hz\"")))?,
            relative_amplitude: a.ok_or_else(|| {
                cfg_err(format!("{section}: missing required key \"relative_amplitude\""))
            })?,
        });
    }

    let plan = ChannelPlan::new(settings, tones)
        .map_err(|e| cfg_err(format!("channel plan: {}", bare_message(e))))?;
    link.validate()
        .map_err(|e| cfg_err(format!("[link]: {}", bare_message(e))))?;
    noise
        .validate()
        .map_err(|e| cfg_err(format!("[noise]: {}", bare_message(e))))?;
    let finite = FiniteSizeParams::new(n_total, m_pe, eps_bar, eps_pe)
        .map_err(|e| cfg_err(format!("[finite_size]: {}", bare_message(e))))?;

    Ok(SimConfig { plan, link, noise, finite })
}

/// Parses one complete configuration text.
pub fn parse_config(text: &str) -> Result<SimConfig, Error> {
    resolve_fragments(&[parse_fragment(text)?])
}
