//! TabJSON: the interchange format for tabs.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "title": "Etude",
//!   "source_id": "etude-01",
//!   "tuning": "standard",
//!   "bars": [
//!     {
//!       "notes": [
//!         { "pos": 0, "pitch": 40, "dur_32nds": 8, "vel": 20, "string": 6, "fret": 0 }
//!       ],
//!       "techniques": [ { "pos": 4, "kind": "hit_top" } ]
//!     }
//!   ]
//! }
//! ```
//!
//! `pos` is measured in 16th notes from the start of the bar and
//! `dur_32nds` in 32nd notes; both may be fractional on input and are
//! snapped to the grid. `vel` is optional. A note may carry a `technique`,
//! which is attached to its position.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::tab::{
    Bar, NoteEvent, Tab, TabMetadata, Technique, TechniqueEvent, DEFAULT_VELOCITY, MAX_DURATION,
    POSITIONS_PER_BAR, VELOCITY_LEVELS,
};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const STANDARD_TUNING: &str = "standard";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TabDocument {
    #[serde(default = "default_version")]
    schema_version: u32,
    #[serde(default)]
    title: String,
    #[serde(default)]
    source_id: String,
    #[serde(default = "default_tuning")]
    tuning: String,
    bars: Vec<BarDocument>,
}

fn default_version() -> u32 {
    SCHEMA_VERSION
}

fn default_tuning() -> String {
    STANDARD_TUNING.to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BarDocument {
    #[serde(default)]
    notes: Vec<NoteDocument>,
    #[serde(default)]
    techniques: Vec<TechniqueDocument>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NoteDocument {
    pos: f64,
    pitch: u8,
    dur_32nds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vel: Option<f64>,
    string: u8,
    fret: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    technique: Option<Technique>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TechniqueDocument {
    pos: f64,
    kind: Technique,
}

/// One adjustment made while snapping a document onto the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizationEntry {
    pub bar: usize,
    /// Index within the bar's note list, or `None` for a technique mark.
    pub note: Option<usize>,
    pub field: &'static str,
    pub from: f64,
    pub to: f64,
}

impl std::fmt::Display for QuantizationEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.note {
            Some(n) => write!(f, "bar {} note {}: {} {} -> {}", self.bar, n, self.field, self.from, self.to),
            None => write!(f, "bar {} technique: {} {} -> {}", self.bar, self.field, self.from, self.to),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestReport {
    pub quantization: Vec<QuantizationEntry>,
    /// Unknown fields tolerated in lenient mode.
    pub warnings: Vec<String>,
}

const TOP_FIELDS: &[&str] = &["schema_version", "title", "source_id", "tuning", "bars"];
const BAR_FIELDS: &[&str] = &["notes", "techniques"];
const NOTE_FIELDS: &[&str] = &["pos", "pitch", "dur_32nds", "vel", "string", "fret", "technique"];
const TECHNIQUE_FIELDS: &[&str] = &["pos", "kind"];

fn unknown_fields(value: &Value) -> Vec<String> {
    fn check(v: &Value, allowed: &[&str], path: &str, out: &mut Vec<String>) {
        if let Some(obj) = v.as_object() {
            for key in obj.keys() {
                if !allowed.contains(&key.as_str()) {
                    out.push(format!("{path}.{key}"));
                }
            }
        }
    }
    let mut out = Vec::new();
    check(value, TOP_FIELDS, "$", &mut out);
    for (b, bar) in value.get("bars").and_then(Value::as_array).into_iter().flatten().enumerate() {
        let path = format!("$.bars[{b}]");
        check(bar, BAR_FIELDS, &path, &mut out);
        for (n, note) in bar.get("notes").and_then(Value::as_array).into_iter().flatten().enumerate() {
            check(note, NOTE_FIELDS, &format!("{path}.notes[{n}]"), &mut out);
        }
        for (t, tech) in bar
            .get("techniques")
            .and_then(Value::as_array)
            .into_iter()
            .flatten()
            .enumerate()
        {
            check(tech, TECHNIQUE_FIELDS, &format!("{path}.techniques[{t}]"), &mut out);
        }
    }
    out
}

/// Nearest integer, halves rounding down.
fn snap(x: f64) -> f64 {
    (x - 0.5).ceil()
}

fn json_error(origin: &str, e: serde_json::Error) -> Error {
    Error::Parse {
        location: format!("{origin} line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    }
}

pub fn parse_tab_json(text: &str, strict: bool, origin: &str) -> Result<(Tab, IngestReport)> {
    let value: Value = serde_json::from_str(text).map_err(|e| json_error(origin, e))?;
    let mut report = IngestReport::default();
    let unknown = unknown_fields(&value);
    if !unknown.is_empty() {
        if strict {
            return Err(Error::Parse {
                location: origin.to_string(),
                message: format!("unknown fields: {}", unknown.join(", ")),
            });
        }
        for field in unknown {
            log::warn!("{origin}: ignoring unknown field {field}");
            report.warnings.push(format!("unknown field {field}"));
        }
    }
    let doc: TabDocument = serde_json::from_value(value).map_err(|e| Error::Parse {
        location: origin.to_string(),
        message: e.to_string(),
    })?;
    if doc.tuning != STANDARD_TUNING {
        return Err(Error::Rejected(format!(
            "tuning `{}` is not standard; only standard-tuning tabs are accepted",
            doc.tuning
        )));
    }
    if doc.schema_version != SCHEMA_VERSION {
        return Err(Error::Parse {
            location: origin.to_string(),
            message: format!("unsupported schema_version {}", doc.schema_version),
        });
    }

    let mut bars = Vec::with_capacity(doc.bars.len());
    for (b, bar_doc) in doc.bars.iter().enumerate() {
        let mut bar = Bar::new();
        let mut note_techniques = Vec::new();
        for (n, note) in bar_doc.notes.iter().enumerate() {
            let mut adjust = |field: &'static str, from: f64, to: f64| {
                if from != to {
                    report.quantization.push(QuantizationEntry {
                        bar: b,
                        note: Some(n),
                        field,
                        from,
                        to,
                    });
                }
            };
            let pos = snap(note.pos).clamp(0.0, f64::from(POSITIONS_PER_BAR - 1));
            adjust("pos", note.pos, pos);
            let dur = snap(note.dur_32nds).clamp(1.0, f64::from(MAX_DURATION));
            adjust("dur_32nds", note.dur_32nds, dur);
            let vel = match note.vel {
                Some(v) => {
                    let q = snap(v).clamp(1.0, f64::from(VELOCITY_LEVELS));
                    adjust("vel", v, q);
                    q
                }
                None => f64::from(DEFAULT_VELOCITY),
            };
            bar.notes.push(NoteEvent {
                position: pos as u8,
                pitch: note.pitch,
                duration: dur as u8,
                velocity: vel as u8,
                string: note.string,
                fret: note.fret,
            });
            if let Some(kind) = note.technique {
                note_techniques.push(TechniqueEvent {
                    position: pos as u8,
                    kind,
                });
            }
        }
        for tech in &bar_doc.techniques {
            let pos = snap(tech.pos).clamp(0.0, f64::from(POSITIONS_PER_BAR - 1));
            if pos != tech.pos {
                report.quantization.push(QuantizationEntry {
                    bar: b,
                    note: None,
                    field: "pos",
                    from: tech.pos,
                    to: pos,
                });
            }
            bar.techniques.push(TechniqueEvent {
                position: pos as u8,
                kind: tech.kind,
            });
        }
        for t in note_techniques {
            if !bar.techniques.contains(&t) {
                bar.techniques.push(t);
            }
        }
        bar.normalize();
        bars.push(bar);
    }

    let tab = Tab {
        bars,
        metadata: TabMetadata {
            title: doc.title,
            source_id: doc.source_id,
            slice: None,
        },
    };
    tab.ensure_valid()?;
    Ok((tab, report))
}

pub fn ingest(path: &Path, strict: bool) -> Result<(Tab, IngestReport)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tab_json(&text, strict, &path.display().to_string())
}

/// Canonical serialization: fixed field order, integer grid values,
/// techniques listed per bar, two-space indentation, trailing newline.
pub fn to_tab_json(tab: &Tab) -> String {
    let doc = TabDocument {
        schema_version: SCHEMA_VERSION,
        title: tab.metadata.title.clone(),
        source_id: tab.metadata.source_id.clone(),
        tuning: STANDARD_TUNING.to_string(),
        bars: tab
            .bars
            .iter()
            .map(|bar| BarDocument {
                notes: bar
                    .notes
                    .iter()
                    .map(|n| NoteDocument {
                        pos: f64::from(n.position),
                        pitch: n.pitch,
                        dur_32nds: f64::from(n.duration),
                        vel: Some(f64::from(n.velocity)),
                        string: n.string,
                        fret: n.fret,
                        technique: None,
                    })
                    .collect(),
                techniques: bar
                    .techniques
                    .iter()
                    .map(|t| TechniqueDocument {
                        pos: f64::from(t.position),
                        kind: t.kind,
                    })
                    .collect(),
            })
            .collect(),
    };
    // Grid values are whole numbers; print them without a fractional part.
    let value = serde_json::to_value(&doc).expect("document serializes");
    let mut text = serde_json::to_string_pretty(&integralize(value)).expect("value serializes");
    text.push('\n');
    text
}

fn integralize(value: Value) -> Value {
    match value {
        Value::Number(n) => match n.as_f64() {
            Some(f) if f.fract() == 0.0 && f.abs() < 1e15 => Value::from(f as i64),
            _ => Value::Number(n),
        },
        Value::Array(items) => Value::Array(items.into_iter().map(integralize).collect()),
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, integralize(v))).collect()),
        other => other,
    }
}

pub fn write_tab_json(tab: &Tab, path: &Path) -> Result<()> {
    std::fs::write(path, to_tab_json(tab)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
      "title": "t",
      "bars": [
        { "notes": [
            { "pos": 0, "pitch": 40, "dur_32nds": 8, "vel": 20, "string": 6, "fret": 0 },
            { "pos": 2.5, "pitch": 64, "dur_32nds": 70, "string": 1, "fret": 0, "technique": "slap" }
          ],
          "techniques": [ { "pos": 8, "kind": "hit_top" } ] }
      ]
    }"#;

    #[test]
    fn quantizes_and_reports() {
        let (tab, report) = parse_tab_json(SAMPLE, true, "sample").unwrap();
        let notes = &tab.bars[0].notes;
        assert_eq!(notes[1].position, 2);
        assert_eq!(notes[1].duration, 64);
        assert_eq!(notes[1].velocity, DEFAULT_VELOCITY);
        assert_eq!(report.quantization.len(), 2);
        assert_eq!(tab.bars[0].techniques.len(), 2);
        assert_eq!(tab.bars[0].techniques[0].kind, Technique::Slap);
    }

    #[test]
    fn canonical_is_fixpoint() {
        let (tab, _) = parse_tab_json(SAMPLE, true, "sample").unwrap();
        let text = to_tab_json(&tab);
        let (again, report) = parse_tab_json(&text, true, "canonical").unwrap();
        assert_eq!(again, tab);
        assert!(report.quantization.is_empty());
        assert_eq!(to_tab_json(&again), text);
        assert!(text.contains("\"pos\": 2,"));
    }

    #[test]
    fn rejects_other_tunings() {
        let text = r#"{"tuning": "drop-D", "bars": []}"#;
        match parse_tab_json(text, true, "x") {
            Err(Error::Rejected(msg)) => assert!(msg.contains("standard")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_fields_strict_vs_lenient() {
        let text = r#"{"bars": [{"notes": [], "tempo": 90}], "composer": "x"}"#;
        assert!(parse_tab_json(text, true, "x").is_err());
        let (_, report) = parse_tab_json(text, false, "x").unwrap();
        assert_eq!(report.warnings.len(), 2);
    }

    #[test]
    fn malformed_json_located() {
        let err = parse_tab_json("{\n  \"bars\": [,]\n}", true, "f.json").unwrap_err();
        let text = err.to_string();
        assert!(text.contains("f.json line 2"), "{text}");
    }

    #[test]
    fn invalid_fingering_rejected() {
        let text = r#"{"bars": [{"notes": [{"pos": 0, "pitch": 42, "dur_32nds": 4, "string": 5, "fret": 0}]}]}"#;
        assert!(matches!(parse_tab_json(text, true, "x"), Err(Error::InvalidTab(_))));
    }

    #[test]
    fn snapping_ties_round_down() {
        assert_eq!(snap(2.5), 2.0);
        assert_eq!(snap(2.51), 3.0);
        assert_eq!(snap(2.49), 2.0);
        assert_eq!(snap(3.0), 3.0);
    }
}
