//! Deterministic artifact emission.
//!
//! Every numeric leaves the program as a 17-significant-digit decimal, which
//! is enough to reproduce the original f64 bit pattern on reload. JSON
//! documents are built from an ordered tree (no hash-map key order) so a
//! rerun with the same inputs emits identical bytes.

use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::Path;

/// 17 significant digits: `format!("{:.16e}")`. Round-trips bit-exactly
/// through `str::parse::<f64>()`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Ordered JSON document tree.
#[derive(Debug, Clone)]
pub enum Json {
    Null,
    Bool(bool),
    Int(i64),
    UInt(u64),
    Num(f64),
    Str(String),
    Arr(Vec<Json>),
    Obj(Vec<(String, Json)>),
}

impl Json {
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.write(&mut out);
        out
    }

    fn write(&self, out: &mut String) {
        match self {
            Json::Null => out.push_str("null"),
            Json::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            Json::Int(v) => {
                write!(out, "{v}").unwrap();
            }
            Json::UInt(v) => {
                write!(out, "{v}").unwrap();
            }
            // JSON has no representation for non-finite numbers.
            Json::Num(v) if v.is_finite() => out.push_str(&fmt_f64(*v)),
            Json::Num(_) => out.push_str("null"),
            Json::Str(s) => write_json_string(out, s),
            Json::Arr(items) => {
                out.push('[');
                for (k, item) in items.iter().enumerate() {
                    if k > 0 {
                        out.push(',');
                    }
                    item.write(out);
                }
                out.push(']');
            }
            Json::Obj(fields) => {
                out.push('{');
                for (k, (key, value)) in fields.iter().enumerate() {
                    if k > 0 {
                        out.push(',');
                    }
                    write_json_string(out, key);
                    out.push(':');
                    value.write(out);
                }
                out.push('}');
            }
        }
    }

    pub fn num_array(values: &[f64]) -> Json {
        Json::Arr(values.iter().map(|&v| Json::Num(v)).collect())
    }

    /// Object with a fixed field list.
    pub fn obj<const N: usize>(fields: [(&str, Json); N]) -> Json {
        Json::Obj(fields.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
    }
}

fn write_json_string(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => {
                write!(out, "\\u{:04x}", c as u32).unwrap();
            }
            c => out.push(c),
        }
    }
    out.push('"');
}

/// Render a CSV table with the given header; all cells already formatted.
pub fn csv_table(header: &str, rows: &[Vec<String>]) -> String {
    let mut out = String::with_capacity(rows.len() * 64 + header.len() + 1);
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

// ------------------------------------------------------------------
// Report documents
// ------------------------------------------------------------------

use crate::analysis::Certificate;
use crate::experiments::{EnsembleReport, EpsStudyReport, HysteresisReport, PinningReport};
use crate::solver::{Outcome, State, TorusGrid, TrajectoryRow};

/// `{ok, worst_node_index, worst_margin, tol}`.
pub fn certificate_json(c: &Certificate) -> Json {
    Json::obj([
        ("ok", Json::Bool(c.ok)),
        ("worst_node_index", Json::UInt(c.worst_node as u64)),
        ("worst_margin", Json::Num(c.worst_margin)),
        ("tol", Json::Num(c.tol)),
    ])
}

/// `{grid:{n,m}, t, u:[...]}`.
pub fn snapshot_json(grid: &TorusGrid, state: &State) -> String {
    Json::obj([
        (
            "grid",
            Json::obj([
                ("n", Json::UInt(grid.dimension() as u64)),
                ("m", Json::UInt(grid.points_per_axis() as u64)),
            ]),
        ),
        ("t", Json::Num(state.t)),
        ("u", Json::num_array(&state.u)),
    ])
    .render()
}

/// Parse a snapshot document back into a state.
pub fn snapshot_from_json(text: &str) -> crate::Result<(usize, usize, State)> {
    #[derive(serde::Deserialize)]
    struct GridDoc {
        n: usize,
        m: usize,
    }
    #[derive(serde::Deserialize)]
    struct SnapshotDoc {
        grid: GridDoc,
        t: f64,
        u: Vec<f64>,
    }
    let doc: SnapshotDoc = serde_json::from_str(text)?;
    Ok((doc.grid.n, doc.grid.m, State { u: doc.u, t: doc.t }))
}

pub const TRAJECTORY_HEADER: &str = "t,mean_u,min_u,max_u,max_excess,energy";

pub fn trajectory_csv(rows: &[TrajectoryRow]) -> String {
    csv_table(
        TRAJECTORY_HEADER,
        &rows
            .iter()
            .map(|r| {
                vec![
                    fmt_f64(r.t),
                    fmt_f64(r.mean_u),
                    fmt_f64(r.min_u),
                    fmt_f64(r.max_u),
                    fmt_f64(r.max_excess),
                    fmt_f64(r.energy),
                ]
            })
            .collect::<Vec<_>>(),
    )
}

pub fn hysteresis_csv(samples: &[crate::experiments::HysteresisSample]) -> String {
    csv_table(
        "t,f,mean_u",
        &samples
            .iter()
            .map(|s| vec![fmt_f64(s.t), fmt_f64(s.f), fmt_f64(s.mean_u)])
            .collect::<Vec<_>>(),
    )
}

fn outcome_str(outcome: Outcome) -> Json {
    Json::Str(outcome.as_str().to_string())
}

pub fn pinning_report_json(r: &PinningReport) -> String {
    Json::obj([
        ("field_seed", Json::UInt(r.field_seed)),
        ("f_lo", Json::Num(r.f_lo)),
        ("f_hi", Json::Num(r.f_hi)),
        ("bisection_steps", Json::UInt(r.bisection_steps as u64)),
        ("doublings", Json::UInt(r.doublings as u64)),
        ("resolved", Json::Bool(r.resolved)),
        ("supersolution", certificate_json(&r.supersolution)),
        ("subsolution", certificate_json(&r.subsolution)),
        (
            "probes",
            Json::Arr(
                r.probes
                    .iter()
                    .map(|p| {
                        Json::obj([
                            ("force", Json::Num(p.force)),
                            ("outcome", outcome_str(p.outcome)),
                            ("t_end", Json::Num(p.t_end)),
                            ("retried", Json::Bool(p.retried)),
                        ])
                    })
                    .collect(),
            ),
        ),
        ("pinned_profile", Json::num_array(&r.pinned_profile)),
    ])
    .render()
}

pub fn hysteresis_report_json(r: &HysteresisReport) -> String {
    Json::obj([
        ("amplitude", Json::Num(r.amplitude)),
        ("period", Json::Num(r.period)),
        ("companion_period", Json::Num(r.companion_period)),
        ("cycles", Json::UInt(r.cycles as u64)),
        ("relaxation_time", Json::Num(r.relaxation_time)),
        ("loop_area", Json::Num(r.loop_area)),
        ("sup_distance", Json::Num(r.sup_distance)),
        ("closure_gap", Json::Num(r.closure_gap)),
        ("depinned", Json::Bool(r.depinned)),
        ("samples", Json::UInt(r.samples.len() as u64)),
    ])
    .render()
}

pub fn eps_report_json(r: &EpsStudyReport) -> String {
    Json::obj([
        ("eps", Json::num_array(&r.eps)),
        ("gaps", Json::num_array(&r.gaps)),
        ("monotone", Json::Bool(r.monotone)),
        ("force", Json::Num(r.force)),
        ("t_study", Json::Num(r.t_study)),
    ])
    .render()
}

pub fn ensemble_report_json(r: &EnsembleReport) -> String {
    Json::obj([
        (
            "members",
            Json::Arr(
                r.members
                    .iter()
                    .map(|m| {
                        let bracket = match m.bracket {
                            Some((lo, hi)) => {
                                Json::Arr(vec![Json::Num(lo), Json::Num(hi)])
                            }
                            None => Json::Null,
                        };
                        Json::obj([("seed", Json::UInt(m.seed)), ("bracket", bracket)])
                    })
                    .collect(),
            ),
        ),
        ("mean", Json::Num(r.mean)),
        ("variance", Json::Num(r.variance)),
        ("unresolved", Json::UInt(r.unresolved as u64)),
    ])
    .render()
}

/// Run manifest: normalized config, seed, generator, artifact checksums.
pub fn manifest_json(
    subcommand: &str,
    seed: u64,
    config_dump: &str,
    artifacts: &[(String, String)],
) -> String {
    Json::obj([
        ("tool", Json::Str("pinsim".into())),
        ("subcommand", Json::Str(subcommand.into())),
        ("seed", Json::UInt(seed)),
        ("rng", Json::Str(crate::RNG_NAME.into())),
        ("config", Json::Str(config_dump.into())),
        (
            "artifacts",
            Json::Obj(
                artifacts
                    .iter()
                    .map(|(name, sha)| (name.clone(), Json::Str(sha.clone())))
                    .collect(),
            ),
        ),
    ])
    .render()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        write!(out, "{b:02x}").unwrap();
    }
    out
}

/// Write a file and return `(name, sha256)` for the run manifest.
pub fn write_artifact(dir: &Path, name: &str, contents: &str) -> crate::Result<(String, String)> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), contents)?;
    Ok((name.to_string(), sha256_hex(contents.as_bytes())))
}
