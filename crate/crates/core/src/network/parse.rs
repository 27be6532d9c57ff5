//! Case file readers: the native JSON schema and a MATPOWER table subset.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use super::{default_injection_std, Branch, Bus, NetworkCase};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseFormat {
    Json,
    /// `baseMVA`, `bus`, `gen` and `branch` tables of a MATPOWER `.m` case.
    MatpowerSubset,
}

impl FromStr for CaseFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Self::Json),
            "matpower" | "matpower_subset" | "m" => Ok(Self::MatpowerSubset),
            other => Err(Error::InvalidConfig(format!("unknown case format '{other}'"))),
        }
    }
}

impl CaseFormat {
    /// Guess from a file extension: `.json` or `.m`.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "json" => Some(Self::Json),
            "m" => Some(Self::MatpowerSubset),
            _ => None,
        }
    }
}

pub fn parse_case(source: &str, format: CaseFormat) -> Result<NetworkCase> {
    match format {
        CaseFormat::Json => parse_json(source),
        CaseFormat::MatpowerSubset => parse_matpower(source),
    }
}

/// Reads a case file; the format is inferred from the extension when not given.
pub fn load_case(path: &Path, format: Option<CaseFormat>) -> Result<NetworkCase> {
    let format = format
        .or_else(|| CaseFormat::from_path(path))
        .ok_or_else(|| Error::InvalidConfig(format!("cannot infer case format of {}", path.display())))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidConfig(format!("reading {}: {e}", path.display())))?;
    parse_case(&text, format)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonCase {
    base_mva: f64,
    slack: u32,
    buses: Vec<JsonBus>,
    branches: Vec<JsonBranch>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonBus {
    id: u32,
    p_inj_mw: f64,
    p_std_mw: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonBranch {
    from: u32,
    to: u32,
    x_pu: f64,
}

fn parse_json(source: &str) -> Result<NetworkCase> {
    let raw: JsonCase = serde_json::from_str(source).map_err(|e| Error::MalformedCase(e.to_string()))?;
    let base = raw.base_mva;
    let buses = raw
        .buses
        .iter()
        .map(|b| {
            let mean = b.p_inj_mw / base;
            Bus {
                id: b.id,
                injection_mean: mean,
                injection_std: b.p_std_mw.map_or_else(|| default_injection_std(mean), |s| s / base),
            }
        })
        .collect();
    let branches = raw
        .branches
        .iter()
        .map(|b| Branch {
            from: b.from,
            to: b.to,
            reactance: b.x_pu,
        })
        .collect();
    NetworkCase::new(base, buses, branches, raw.slack)
}

// MATPOWER column indices (zero based).
const BUS_I: usize = 0;
const BUS_TYPE: usize = 1;
const PD: usize = 2;
const GEN_BUS: usize = 0;
const PG: usize = 1;
const F_BUS: usize = 0;
const T_BUS: usize = 1;
const BR_X: usize = 3;
const REF_BUS_TYPE: f64 = 3.0;

enum Value {
    Scalar(f64),
    Table(Vec<Vec<f64>>),
}

fn parse_matpower(source: &str) -> Result<NetworkCase> {
    let fields = matpower_fields(source)?;
    let scalar = |name: &str| match fields.get(name) {
        Some(Value::Scalar(v)) => Ok(*v),
        Some(Value::Table(_)) => Err(Error::MalformedCase(format!("{name} must be a scalar"))),
        None => Err(Error::MalformedCase(format!("missing {name}"))),
    };
    let table = |name: &str, min_cols: usize| -> Result<Vec<Vec<f64>>> {
        let rows = match fields.get(name) {
            Some(Value::Table(rows)) => rows.clone(),
            Some(Value::Scalar(_)) => return Err(Error::MalformedCase(format!("{name} must be a table"))),
            None => return Err(Error::MalformedCase(format!("missing {name} table"))),
        };
        for (k, row) in rows.iter().enumerate() {
            if row.len() < min_cols {
                return Err(Error::MalformedCase(format!(
                    "{name} row {}: expected at least {min_cols} columns, found {}",
                    k + 1,
                    row.len()
                )));
            }
        }
        Ok(rows)
    };

    let base = scalar("baseMVA")?;
    let bus_rows = table("bus", PD + 1)?;
    let gen_rows = match fields.get("gen") {
        Some(_) => table("gen", PG + 1)?,
        None => Vec::new(),
    };
    let branch_rows = table("branch", BR_X + 1)?;

    let to_id = |v: f64, what: &str| -> Result<u32> {
        if v.fract() == 0.0 && v >= 0.0 && v <= u32::MAX as f64 {
            Ok(v as u32)
        } else {
            Err(Error::MalformedCase(format!("{what}: invalid bus id {v}")))
        }
    };

    let mut net_mw: BTreeMap<u32, f64> = BTreeMap::new();
    let mut order = Vec::with_capacity(bus_rows.len());
    let mut slack = None;
    for (k, row) in bus_rows.iter().enumerate() {
        let id = to_id(row[BUS_I], &format!("bus row {}", k + 1))?;
        if net_mw.insert(id, -row[PD]).is_some() {
            return Err(Error::DuplicateBusId(id));
        }
        order.push(id);
        if row[BUS_TYPE] == REF_BUS_TYPE {
            if let Some(prev) = slack {
                return Err(Error::MalformedCase(format!(
                    "bus row {}: second reference bus {id} (first was {prev})",
                    k + 1
                )));
            }
            slack = Some(id);
        }
    }
    for (k, row) in gen_rows.iter().enumerate() {
        let id = to_id(row[GEN_BUS], &format!("gen row {}", k + 1))?;
        *net_mw
            .get_mut(&id)
            .ok_or_else(|| Error::MalformedCase(format!("gen row {}: unknown bus {id}", k + 1)))? += row[PG];
    }
    let slack = slack.ok_or(Error::MissingSlack)?;

    let buses = order
        .iter()
        .map(|&id| {
            let mean = net_mw[&id] / base;
            Bus {
                id,
                injection_mean: mean,
                injection_std: default_injection_std(mean),
            }
        })
        .collect();
    let branches = branch_rows
        .iter()
        .enumerate()
        .map(|(k, row)| {
            Ok(Branch {
                from: to_id(row[F_BUS], &format!("branch row {}", k + 1))?,
                to: to_id(row[T_BUS], &format!("branch row {}", k + 1))?,
                reactance: row[BR_X],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    NetworkCase::new(base, buses, branches, slack)
}

/// Pulls `<ident>.<field> = value;` assignments out of a MATPOWER case file.
fn matpower_fields(source: &str) -> Result<BTreeMap<String, Value>> {
    let text: String = source
        .lines()
        .map(|line| match line.find('%') {
            Some(pos) => &line[..pos],
            None => line,
        })
        .collect::<Vec<_>>()
        .join("\n");

    let mut fields = BTreeMap::new();
    let mut rest = text.as_str();
    while let Some(dot) = rest.find('.') {
        let after = &rest[dot + 1..];
        let name_len = after
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(after.len());
        let name = &after[..name_len];
        let tail = after[name_len..].trim_start();
        if name.is_empty() || !tail.starts_with('=') || tail.starts_with("==") {
            rest = after;
            continue;
        }
        let value_text = tail[1..].trim_start();
        if let Some(body) = value_text.strip_prefix('[') {
            let end = body
                .find(']')
                .ok_or_else(|| Error::MalformedCase(format!("unterminated table {name}")))?;
            if matches!(name, "bus" | "gen" | "branch") {
                fields.insert(name.to_string(), Value::Table(parse_table(name, &body[..end])?));
            }
            rest = &body[end + 1..];
        } else {
            let end = value_text.find([';', '\n']).unwrap_or(value_text.len());
            if name == "baseMVA" {
                let v = value_text[..end]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::MalformedCase(format!("baseMVA: {e}")))?;
                fields.insert(name.to_string(), Value::Scalar(v));
            }
            rest = &value_text[end..];
        }
    }
    Ok(fields)
}

fn parse_table(name: &str, body: &str) -> Result<Vec<Vec<f64>>> {
    body.split([';', '\n'])
        .map(str::trim)
        .filter(|r| !r.is_empty())
        .enumerate()
        .map(|(k, row)| {
            row.split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|e| Error::MalformedCase(format!("{name} row {}: '{t}': {e}", k + 1)))
                })
                .collect()
        })
        .collect()
}
