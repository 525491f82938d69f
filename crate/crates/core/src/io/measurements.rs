//! Measurement batch wire format.
//!
//! The line format is a `key: value` header followed by a comma-separated
//! sample table:
//!
//! ```text
//! # free-form comment
//! schema_version: 1
//! device: V100
//! provenance: emulator
//! param.seed: 7
//! experiment: id=fwd type=fusion_arm group=launch launches=5 wait_units=1
//! experiment: id=mir type=fusion_arm group=launch launches=1 wait_units=5
//!
//! experiment_id,clock_domain,run_index,value_ns
//! fwd,cpu_ns,0,55405
//! mir,cpu_ns,0,51081
//! ```
//!
//! The value column is `value_ns` or `value_cycles` when every sample shares a
//! clock domain, and plain `value` otherwise. The same schema is accepted as a
//! JSON object (any input whose first non-blank character is `{`).

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{ClockDomain, Reducer, TimingSample};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

const SAMPLE_HEADER_PREFIX: &str = "experiment_id,clock_domain,run_index,";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Hardware,
    Emulator,
    Fixture,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Hardware => "hardware",
            Provenance::Emulator => "emulator",
            Provenance::Fixture => "fixture",
        }
    }

    fn parse(s: &str) -> Option<Provenance> {
        match s {
            "hardware" => Some(Provenance::Hardware),
            "emulator" => Some(Provenance::Emulator),
            "fixture" => Some(Provenance::Fixture),
            _ => None,
        }
    }
}

/// What one experiment arm measured.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ExperimentKind {
    /// `launches` kernel launches, each running `wait_units` wait units.
    FusionArm { launches: u32, wait_units: u32 },
    /// A kernel repeating the instruction under test `repeats` times.
    RepeatArm {
        repeats: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
}

impl ExperimentKind {
    pub fn type_name(&self) -> &'static str {
        match self {
            ExperimentKind::FusionArm { .. } => "fusion_arm",
            ExperimentKind::RepeatArm { .. } => "repeat_arm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentDescriptor {
    pub id: String,
    /// Arms sharing a group are analysed together.
    pub group: String,
    #[serde(flatten)]
    pub kind: ExperimentKind,
    #[serde(default)]
    pub reducer: Reducer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub descriptor: ExperimentDescriptor,
    pub samples: Vec<TimingSample>,
}

impl Experiment {
    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.value).collect()
    }
}

/// A validated set of timing observations from one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementBatch {
    pub schema_version: u32,
    pub device_name: String,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, String>,
    pub experiments: Vec<Experiment>,
}

impl MeasurementBatch {
    pub fn new(device_name: impl Into<String>, provenance: Provenance) -> Self {
        MeasurementBatch {
            schema_version: SCHEMA_VERSION,
            device_name: device_name.into(),
            provenance,
            params: BTreeMap::new(),
            experiments: Vec::new(),
        }
    }

    pub fn experiment(&self, id: &str) -> Option<&Experiment> {
        self.experiments.iter().find(|e| e.descriptor.id == id)
    }

    pub fn sample_count(&self) -> usize {
        self.experiments.iter().map(|e| e.samples.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::UnsupportedSchema(self.schema_version));
        }
        check_token("device", &self.device_name, true)?;
        for (key, value) in &self.params {
            check_token("param name", key, false)?;
            check_token("param value", value, true)?;
        }
        let mut seen = HashMap::new();
        for exp in &self.experiments {
            let d = &exp.descriptor;
            check_token("experiment id", &d.id, false)?;
            check_token("experiment group", &d.group, false)?;
            if let ExperimentKind::RepeatArm { label: Some(label), .. } = &d.kind {
                check_token("label", label, false)?;
            }
            match d.kind {
                ExperimentKind::FusionArm { launches, wait_units } if launches == 0 || wait_units == 0 => {
                    return Err(Error::validation(format!(
                        "experiment `{}`: launches and wait_units must be positive",
                        d.id
                    )));
                }
                ExperimentKind::RepeatArm { repeats: 0, .. } => {
                    return Err(Error::validation(format!(
                        "experiment `{}`: repeats must be positive",
                        d.id
                    )));
                }
                _ => {}
            }
            if seen.insert(d.id.as_str(), ()).is_some() {
                return Err(Error::validation(format!("duplicate experiment id `{}`", d.id)));
            }
            let mut domain = None;
            for sample in &exp.samples {
                if !(sample.value.is_finite() && sample.value >= 0.0) {
                    return Err(Error::validation(format!(
                        "experiment `{}` run {}: sample value {} is not a non-negative number",
                        d.id, sample.run_index, sample.value
                    )));
                }
                match domain {
                    None => domain = Some(sample.clock_domain),
                    Some(prev) if prev != sample.clock_domain => {
                        return Err(Error::UnitMismatch(format!(
                            "experiment `{}` mixes {} and {} samples",
                            d.id, prev, sample.clock_domain
                        )));
                    }
                    Some(_) => {}
                }
            }
        }
        Ok(())
    }

    /// Line-oriented encoding; `parse_measurements` reads it back bit-exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# syncperf measurements\n");
        let _ = writeln!(out, "schema_version: {}", self.schema_version);
        let _ = writeln!(out, "device: {}", self.device_name);
        let _ = writeln!(out, "provenance: {}", self.provenance.as_str());
        for (key, value) in &self.params {
            let _ = writeln!(out, "param.{key}: {value}");
        }
        for exp in &self.experiments {
            let d = &exp.descriptor;
            let _ = write!(out, "experiment: id={} type={} group={}", d.id, d.kind.type_name(), d.group);
            match &d.kind {
                ExperimentKind::FusionArm { launches, wait_units } => {
                    let _ = write!(out, " launches={launches} wait_units={wait_units}");
                }
                ExperimentKind::RepeatArm { repeats, label } => {
                    let _ = write!(out, " repeats={repeats}");
                    if let Some(label) = label {
                        let _ = write!(out, " label={label}");
                    }
                }
            }
            if d.reducer != Reducer::Mean {
                let _ = write!(out, " reducer={}", d.reducer.as_str());
            }
            out.push('\n');
        }
        out.push('\n');

        let mut domains = self.experiments.iter().flat_map(|e| e.samples.iter().map(|s| s.clock_domain));
        let column = match domains.next() {
            Some(first) if domains.all(|d| d == first) => first.value_column(),
            _ => "value",
        };
        let _ = writeln!(out, "{SAMPLE_HEADER_PREFIX}{column}");
        for exp in &self.experiments {
            for s in &exp.samples {
                let _ = writeln!(
                    out,
                    "{},{},{},{}",
                    exp.descriptor.id, s.clock_domain, s.run_index, s.value
                );
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("batch serializes");
        s.push('\n');
        s
    }
}

fn check_token(what: &str, value: &str, allow_spaces: bool) -> Result<()> {
    let bad = value.is_empty()
        || value != value.trim()
        || value
            .chars()
            .any(|c| c == ',' || c == '=' || c.is_control() || (!allow_spaces && c.is_whitespace()));
    if bad {
        return Err(Error::validation(format!("{what} `{value}` is empty or contains reserved characters")));
    }
    Ok(())
}

pub fn load_measurements(path: impl AsRef<Path>) -> Result<MeasurementBatch> {
    let text = std::fs::read_to_string(path)?;
    parse_measurements(&text)
}

pub fn save_measurements(batch: &MeasurementBatch, path: impl AsRef<Path>, structured: bool) -> Result<()> {
    let text = if structured { batch.to_json() } else { batch.to_text() };
    std::fs::write(path, text)?;
    Ok(())
}

/// Parses either encoding and validates the result.
pub fn parse_measurements(text: &str) -> Result<MeasurementBatch> {
    let batch = if text.trim_start().starts_with('{') {
        serde_json::from_str(text)?
    } else {
        parse_text(text)?
    };
    batch.validate()?;
    Ok(batch)
}

fn parse_text(text: &str) -> Result<MeasurementBatch> {
    let mut schema_version = None;
    let mut device = None;
    let mut provenance = None;
    let mut params = BTreeMap::new();
    let mut experiments: Vec<Experiment> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();

    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)));
    let mut value_domain: Option<Option<ClockDomain>> = None;
    let mut header_line = 0;

    for (line_no, line) in lines.by_ref() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if let Some(column) = line.strip_prefix(SAMPLE_HEADER_PREFIX) {
            let domain = match column {
                "value" => None,
                "value_ns" => Some(ClockDomain::CpuNs),
                "value_cycles" => Some(ClockDomain::GpuCycles),
                other => {
                    return Err(Error::parse(
                        line_no,
                        SAMPLE_HEADER_PREFIX.len() + 1,
                        format!("unknown value column `{other}`"),
                    ))
                }
            };
            value_domain = Some(domain);
            header_line = line_no;
            break;
        }
        let Some(colon) = line.find(':') else {
            return Err(Error::parse(line_no, 1, "expected `key: value` header line"));
        };
        let key = line[..colon].trim();
        let rest = &line[colon + 1..];
        let value_col = colon + 2 + (rest.len() - rest.trim_start().len());
        let value = rest.trim();
        match key {
            "schema_version" => {
                let v = value
                    .parse::<u32>()
                    .map_err(|_| Error::parse(line_no, value_col, format!("bad schema_version `{value}`")))?;
                set_once(&mut schema_version, v, line_no, key)?;
            }
            "device" => set_once(&mut device, value.to_string(), line_no, key)?,
            "provenance" => {
                let p = Provenance::parse(value)
                    .ok_or_else(|| Error::parse(line_no, value_col, format!("unknown provenance `{value}`")))?;
                set_once(&mut provenance, p, line_no, key)?;
            }
            "experiment" => {
                let descriptor = parse_descriptor(value, line_no, value_col)?;
                if index.insert(descriptor.id.clone(), experiments.len()).is_some() {
                    return Err(Error::parse(
                        line_no,
                        value_col,
                        format!("duplicate experiment id `{}`", descriptor.id),
                    ));
                }
                experiments.push(Experiment {
                    descriptor,
                    samples: Vec::new(),
                });
            }
            other => match other.strip_prefix("param.") {
                Some(name) if !name.is_empty() => {
                    if params.insert(name.to_string(), value.to_string()).is_some() {
                        return Err(Error::parse(line_no, 1, format!("duplicate parameter `{name}`")));
                    }
                }
                _ => return Err(Error::parse(line_no, 1, format!("unknown header key `{other}`"))),
            },
        }
    }

    let Some(value_domain) = value_domain else {
        let last = text.lines().count().max(1);
        return Err(Error::parse(last, 1, "missing sample table header"));
    };
    let schema_version =
        schema_version.ok_or_else(|| Error::parse(header_line, 1, "missing `schema_version` header"))?;
    if schema_version != SCHEMA_VERSION {
        return Err(Error::UnsupportedSchema(schema_version));
    }
    let device_name = device.ok_or_else(|| Error::parse(header_line, 1, "missing `device` header"))?;
    let provenance = provenance.ok_or_else(|| Error::parse(header_line, 1, "missing `provenance` header"))?;

    for (line_no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::parse(line_no, 1, format!("expected 4 fields, found {}", fields.len())));
        }
        let col = |i: usize| 1 + fields[..i].iter().map(|f| f.len() + 1).sum::<usize>();
        let Some(&slot) = index.get(fields[0]) else {
            return Err(Error::InvalidRow {
                line: line_no,
                message: format!("sample references undeclared experiment `{}`", fields[0]),
            });
        };
        let clock_domain = ClockDomain::parse(fields[1])
            .ok_or_else(|| Error::parse(line_no, col(1), format!("unknown clock domain `{}`", fields[1])))?;
        if let Some(expected) = value_domain {
            if expected != clock_domain {
                return Err(Error::UnitMismatch(format!(
                    "line {line_no}: {clock_domain} sample in a {} column",
                    expected.value_column()
                )));
            }
        }
        let run_index = fields[2]
            .parse::<u32>()
            .map_err(|_| Error::parse(line_no, col(2), format!("bad run index `{}`", fields[2])))?;
        let value = fields[3]
            .parse::<f64>()
            .map_err(|_| Error::parse(line_no, col(3), format!("bad sample value `{}`", fields[3])))?;
        if !(value.is_finite() && value >= 0.0) {
            return Err(Error::InvalidRow {
                line: line_no,
                message: format!("sample value {value} must be a non-negative number"),
            });
        }
        let exp = &mut experiments[slot];
        if let Some(first) = exp.samples.first() {
            if first.clock_domain != clock_domain {
                return Err(Error::UnitMismatch(format!(
                    "line {line_no}: experiment `{}` mixes {} and {clock_domain}",
                    exp.descriptor.id, first.clock_domain
                )));
            }
        }
        exp.samples.push(TimingSample {
            clock_domain,
            run_index,
            value,
        });
    }

    Ok(MeasurementBatch {
        schema_version,
        device_name,
        provenance,
        params,
        experiments,
    })
}

fn set_once<T>(slot: &mut Option<T>, value: T, line: usize, key: &str) -> Result<()> {
    if slot.replace(value).is_some() {
        return Err(Error::parse(line, 1, format!("duplicate `{key}` header")));
    }
    Ok(())
}

fn parse_descriptor(spec: &str, line: usize, base_col: usize) -> Result<ExperimentDescriptor> {
    let mut fields: BTreeMap<&str, (&str, usize)> = BTreeMap::new();
    let mut offset = 0;
    for token in spec.split(' ') {
        let col = base_col + offset;
        offset += token.len() + 1;
        if token.is_empty() {
            continue;
        }
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| Error::parse(line, col, format!("expected key=value, found `{token}`")))?;
        if fields.insert(key, (value, col)).is_some() {
            return Err(Error::parse(line, col, format!("duplicate descriptor key `{key}`")));
        }
    }

    let mut take = |key: &str| fields.remove(key);
    fn required<'a>(entry: Option<(&'a str, usize)>, key: &str, line: usize, col: usize) -> Result<(&'a str, usize)> {
        entry.ok_or_else(|| Error::parse(line, col, format!("experiment descriptor lacks `{key}`")))
    }
    let number = |(value, col): (&str, usize), key: &str| {
        value
            .parse::<u32>()
            .map_err(|_| Error::parse(line, col, format!("`{key}` must be a non-negative integer")))
    };

    let id = required(take("id"), "id", line, base_col)?.0.to_string();
    let (kind_name, _) = required(take("type"), "type", line, base_col)?;
    let group = take("group").map(|(g, _)| g.to_string()).unwrap_or_else(|| id.clone());
    let reducer = match take("reducer") {
        None => Reducer::Mean,
        Some((value, col)) => Reducer::parse(value)
            .ok_or_else(|| Error::parse(line, col, format!("unknown reducer `{value}`")))?,
    };
    let kind = match kind_name {
        "fusion_arm" => ExperimentKind::FusionArm {
            launches: number(required(take("launches"), "launches", line, base_col)?, "launches")?,
            wait_units: number(required(take("wait_units"), "wait_units", line, base_col)?, "wait_units")?,
        },
        "repeat_arm" => ExperimentKind::RepeatArm {
            repeats: number(required(take("repeats"), "repeats", line, base_col)?, "repeats")?,
            label: take("label").map(|(l, _)| l.to_string()),
        },
        other => return Err(Error::UnknownExperimentType(other.to_string())),
    };
    if let Some((key, (_, col))) = fields.into_iter().next() {
        return Err(Error::parse(line, col, format!("unknown descriptor key `{key}`")));
    }
    Ok(ExperimentDescriptor {
        id,
        group,
        kind,
        reducer,
    })
}
