//! Objective evaluation of generated tabs: groove coherence between a prompt
//! and its continuation, and how plausibly notes were assigned to strings.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::codec::{decode, Token};
use crate::fretboard::{self, NUM_STRINGS};
use crate::groove::{hard_groove, soft_groove};
use crate::tab::Tab;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HardAggregate {
    Mean,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SoftAggregate {
    Mean,
    Min,
}

fn check_shapes(x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<usize> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::domain("groove sets must be non-empty"));
    }
    let dim = x[0].len();
    for v in x.iter().chain(y) {
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: v.len(),
            });
        }
    }
    if dim == 0 {
        return Err(Error::domain("groove vectors must have at least one component"));
    }
    Ok(dim)
}

/// Fraction of matching components between each prompt pattern and every
/// continuation pattern, aggregated over the prompt patterns.
pub fn hard_accuracy(x: &[Vec<f64>], y: &[Vec<f64>], agg: HardAggregate) -> Result<f64> {
    let dim = check_shapes(x, y)?;
    if x.iter().chain(y).flatten().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::domain("hard accuracy needs binary vectors"));
    }
    let per_prompt = x.iter().map(|xi| {
        let agree: usize = y
            .iter()
            .map(|yj| xi.iter().zip(yj).filter(|(a, b)| a == b).count())
            .sum();
        agree as f64 / (y.len() * dim) as f64
    });
    Ok(match agg {
        HardAggregate::Mean => per_prompt.sum::<f64>() / x.len() as f64,
        HardAggregate::Max => per_prompt.fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Mean squared Euclidean distance from each prompt pattern to the
/// continuation patterns, aggregated over the prompt patterns.
pub fn soft_distance(x: &[Vec<f64>], y: &[Vec<f64>], agg: SoftAggregate) -> Result<f64> {
    check_shapes(x, y)?;
    let per_prompt = x.iter().map(|xi| {
        let total: f64 = y
            .iter()
            .map(|yj| xi.iter().zip(yj).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            .sum();
        total / y.len() as f64
    });
    Ok(match agg {
        SoftAggregate::Mean => per_prompt.sum::<f64>() / x.len() as f64,
        SoftAggregate::Min => per_prompt.fold(f64::INFINITY, f64::min),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrooveCoherenceReport {
    pub hard_accuracy_mean: f64,
    pub hard_accuracy_max: f64,
    pub soft_distance_mean: f64,
    pub soft_distance_min: f64,
    /// Number of prompt/continuation pairs behind these scores.
    pub samples: usize,
}

impl GrooveCoherenceReport {
    /// Unweighted mean of per-pair reports.
    pub fn average(reports: &[GrooveCoherenceReport]) -> Option<GrooveCoherenceReport> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        let mean = |f: fn(&GrooveCoherenceReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        Some(GrooveCoherenceReport {
            hard_accuracy_mean: mean(|r| r.hard_accuracy_mean),
            hard_accuracy_max: mean(|r| r.hard_accuracy_max),
            soft_distance_mean: mean(|r| r.soft_distance_mean),
            soft_distance_min: mean(|r| r.soft_distance_min),
            samples: reports.iter().map(|r| r.samples).sum(),
        })
    }

    pub fn to_kv(&self, prefix: &str) -> Vec<(String, String)> {
        vec![
            (format!("{prefix}.hard_accuracy_mean"), format!("{}", self.hard_accuracy_mean)),
            (format!("{prefix}.hard_accuracy_max"), format!("{}", self.hard_accuracy_max)),
            (format!("{prefix}.soft_distance_mean"), format!("{}", self.soft_distance_mean)),
            (format!("{prefix}.soft_distance_min"), format!("{}", self.soft_distance_min)),
            (format!("{prefix}.samples"), self.samples.to_string()),
        ]
    }

    pub fn from_kv(record: &BTreeMap<String, String>, prefix: &str) -> Result<GrooveCoherenceReport> {
        let get = |key: &str| -> Result<&String> {
            record
                .get(&format!("{prefix}.{key}"))
                .ok_or_else(|| Error::domain(format!("missing key {prefix}.{key}")))
        };
        let float = |key: &str| -> Result<f64> {
            get(key)?.parse().map_err(|_| Error::domain(format!("bad float for {prefix}.{key}")))
        };
        Ok(GrooveCoherenceReport {
            hard_accuracy_mean: float("hard_accuracy_mean")?,
            hard_accuracy_max: float("hard_accuracy_max")?,
            soft_distance_mean: float("soft_distance_mean")?,
            soft_distance_min: float("soft_distance_min")?,
            samples: get("samples")?
                .parse()
                .map_err(|_| Error::domain(format!("bad count for {prefix}.samples")))?,
        })
    }
}

/// Scores a continuation against its prompt on hard and soft grooves.
pub fn continuation_eval(prompt: &Tab, continuation: &Tab) -> Result<GrooveCoherenceReport> {
    if prompt.is_empty() || continuation.is_empty() {
        return Err(Error::domain("prompt and continuation need at least one bar each"));
    }
    let hard = |t: &Tab| -> Vec<Vec<f64>> { t.bars.iter().map(|b| hard_groove(b).values).collect() };
    let soft = |t: &Tab| -> Vec<Vec<f64>> { t.bars.iter().map(|b| soft_groove(b).values).collect() };
    let (hx, hy) = (hard(prompt), hard(continuation));
    let (sx, sy) = (soft(prompt), soft(continuation));
    Ok(GrooveCoherenceReport {
        hard_accuracy_mean: hard_accuracy(&hx, &hy, HardAggregate::Mean)?,
        hard_accuracy_max: hard_accuracy(&hx, &hy, HardAggregate::Max)?,
        soft_distance_mean: soft_distance(&sx, &sy, SoftAggregate::Mean)?,
        soft_distance_min: soft_distance(&sx, &sy, SoftAggregate::Min)?,
        samples: 1,
    })
}

/// Note-to-string association statistics, grouped by the emitted string.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StringAssociationReport {
    /// Correct tuples per emitted string (index 0 = string 1).
    pub correct_by_string: [usize; 6],
    pub total_by_string: [usize; 6],
    /// Per pitch: how often it was emitted on each string.
    pub pitch_string_counts: BTreeMap<u8, [usize; 6]>,
    pub errors_by_pitch: BTreeMap<u8, usize>,
    /// Tuples whose string could play the pitch but whose FRET disagrees.
    pub fret_mismatches: usize,
}

impl StringAssociationReport {
    pub fn total(&self) -> usize {
        self.total_by_string.iter().sum()
    }

    pub fn correct(&self) -> usize {
        self.correct_by_string.iter().sum()
    }

    pub fn accuracy(&self) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| self.correct() as f64 / total as f64)
    }

    /// Accuracy per emitted string; `None` where the string never occurred.
    pub fn per_string_accuracy(&self) -> [Option<f64>; 6] {
        std::array::from_fn(|i| {
            let total = self.total_by_string[i];
            (total > 0).then(|| self.correct_by_string[i] as f64 / total as f64)
        })
    }

    pub fn per_pitch_error_rate(&self) -> BTreeMap<u8, f64> {
        self.pitch_string_counts
            .iter()
            .map(|(&pitch, counts)| {
                let total: usize = counts.iter().sum();
                let errors = self.errors_by_pitch.get(&pitch).copied().unwrap_or(0);
                (pitch, errors as f64 / total as f64)
            })
            .collect()
    }

    pub fn per_pitch_string_distribution(&self) -> BTreeMap<u8, [f64; 6]> {
        self.pitch_string_counts
            .iter()
            .map(|(&pitch, counts)| {
                let total: usize = counts.iter().sum();
                (pitch, counts.map(|c| c as f64 / total as f64))
            })
            .collect()
    }

    fn record(&mut self, pitch: u8, string: u8, fret: u8) {
        if !(1..=NUM_STRINGS).contains(&string) {
            return;
        }
        let slot = usize::from(string - 1);
        let playable = fretboard::fret_for(pitch, string).ok().flatten();
        let correct = playable == Some(fret);
        if playable.is_some() && !correct {
            self.fret_mismatches += 1;
        }
        self.total_by_string[slot] += 1;
        self.pitch_string_counts.entry(pitch).or_insert([0; 6])[slot] += 1;
        if correct {
            self.correct_by_string[slot] += 1;
        } else {
            *self.errors_by_pitch.entry(pitch).or_insert(0) += 1;
        }
    }

    /// Sums counts; the result is independent of merge order.
    pub fn merge(&mut self, other: &StringAssociationReport) {
        for i in 0..6 {
            self.correct_by_string[i] += other.correct_by_string[i];
            self.total_by_string[i] += other.total_by_string[i];
        }
        for (&pitch, counts) in &other.pitch_string_counts {
            let mine = self.pitch_string_counts.entry(pitch).or_insert([0; 6]);
            for (m, c) in mine.iter_mut().zip(counts) {
                *m += c;
            }
        }
        for (&pitch, &errors) in &other.errors_by_pitch {
            *self.errors_by_pitch.entry(pitch).or_insert(0) += errors;
        }
        self.fret_mismatches += other.fret_mismatches;
    }

    pub fn to_kv(&self, prefix: &str) -> Vec<(String, String)> {
        let mut out = vec![
            (format!("{prefix}.tuples"), self.total().to_string()),
            (format!("{prefix}.correct"), self.correct().to_string()),
            (format!("{prefix}.fret_mismatches"), self.fret_mismatches.to_string()),
        ];
        for (i, acc) in self.per_string_accuracy().iter().enumerate() {
            let value = acc.map_or("n/a".to_string(), |a| a.to_string());
            out.push((format!("{prefix}.string{}.accuracy", i + 1), value));
            out.push((
                format!("{prefix}.string{}.count", i + 1),
                self.total_by_string[i].to_string(),
            ));
        }
        for (pitch, rate) in self.per_pitch_error_rate() {
            out.push((format!("{prefix}.pitch{pitch}.error_rate"), rate.to_string()));
        }
        out
    }
}

/// Association statistics over every note of a (possibly decoded) tab,
/// including notes whose fingering is inconsistent.
pub fn string_association(tab: &Tab) -> Result<StringAssociationReport> {
    let mut report = StringAssociationReport::default();
    for note in tab.bars.iter().flat_map(|b| &b.notes) {
        report.record(note.pitch, note.string, note.fret);
    }
    if report.total() == 0 {
        return Err(Error::domain("no complete note tuples to evaluate"));
    }
    Ok(report)
}

pub fn string_association_tokens(tokens: &[Token]) -> Result<StringAssociationReport> {
    string_association(&decode(tokens).tab)
}

/// Serializes key/value pairs as `key=value` lines.
pub fn format_kv(pairs: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in pairs {
        let _ = writeln!(out, "{k}={v}");
    }
    out
}

pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            location: format!("line {}", n + 1),
            message: "expected key=value".into(),
        })?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// Fixed-width table: one row per model or baseline, hard accuracy as
/// percentages and soft distances as raw values.
pub fn format_groove_table(rows: &[(String, GrooveCoherenceReport)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(12);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$} | {:>9} {:>9} | {:>9} {:>9}",
        "", "hard acc", "", "soft dist", ""
    );
    let _ = writeln!(
        out,
        "{:<width$} | {:>9} {:>9} | {:>9} {:>9}",
        "", "mean", "max", "mean", "min"
    );
    let _ = writeln!(out, "{}", "-".repeat(width + 45));
    for (name, r) in rows {
        let _ = writeln!(
            out,
            "{:<width$} | {:>8.1}% {:>8.1}% | {:>9.3} {:>9.3}",
            name,
            r.hard_accuracy_mean * 100.0,
            r.hard_accuracy_max * 100.0,
            r.soft_distance_mean,
            r.soft_distance_min
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{encode, EncodeMode};
    use crate::tab::{Bar, NoteEvent};

    fn beats() -> Vec<f64> {
        (0..16).map(|i| if i % 4 == 0 { 1.0 } else { 0.0 }).collect()
    }

    #[test]
    fn hard_accuracy_cases() {
        let b = vec![beats()];
        assert_eq!(hard_accuracy(&b, &b, HardAggregate::Mean).unwrap(), 1.0);
        let mut x = vec![0.0; 16];
        x[0] = 1.0;
        let zeros = vec![0.0; 16];
        assert_eq!(
            hard_accuracy(&[x.clone()], &[zeros], HardAggregate::Mean).unwrap(),
            0.9375
        );
        let complement: Vec<f64> = x.iter().map(|v| 1.0 - v).collect();
        let y = vec![x.clone(), complement];
        assert_eq!(hard_accuracy(&[x.clone()], &y, HardAggregate::Mean).unwrap(), 0.5);
        assert_eq!(hard_accuracy(&[x], &y, HardAggregate::Max).unwrap(), 0.5);
    }

    #[test]
    fn hard_accuracy_rejects_soft_input() {
        let x = vec![vec![0.5; 16]];
        assert!(hard_accuracy(&x, &x, HardAggregate::Mean).is_err());
        assert!(hard_accuracy(&[], &x, HardAggregate::Mean).is_err());
        assert!(hard_accuracy(&[vec![0.0; 4]], &[vec![0.0; 16]], HardAggregate::Mean).is_err());
    }

    #[test]
    fn soft_distance_cases() {
        let v = vec![vec![0.3; 16]];
        assert_eq!(soft_distance(&v, &v, SoftAggregate::Mean).unwrap(), 0.0);
        let ones = vec![1.0; 16];
        let zeros = vec![0.0; 16];
        assert_eq!(
            soft_distance(&[ones.clone()], &[zeros.clone()], SoftAggregate::Mean).unwrap(),
            16.0
        );
        let y = vec![ones.clone(), zeros];
        assert_eq!(soft_distance(&[ones.clone()], &y, SoftAggregate::Mean).unwrap(), 8.0);
        assert_eq!(soft_distance(&[ones], &y, SoftAggregate::Min).unwrap(), 8.0);
    }

    fn bar_with(positions: &[u8]) -> Bar {
        Bar {
            notes: positions
                .iter()
                .map(|&p| NoteEvent::fingered(p, 6, 0, 4, 20).unwrap())
                .collect(),
            techniques: vec![],
        }
    }

    #[test]
    fn repeated_prompt_is_perfect() {
        let prompt = Tab::new(vec![
            bar_with(&[0, 4, 8, 12]),
            bar_with(&[0, 6, 8]),
            bar_with(&[0, 2, 4, 6, 8]),
            bar_with(&[3]),
        ]);
        let cont = prompt.concat(&prompt).concat(&prompt).concat(&prompt);
        let r = continuation_eval(&prompt, &cont).unwrap();
        assert!(r.hard_accuracy_mean < 1.0);
        // Identical grooves only when every bar matches every bar.
        let flat = Tab::new(vec![bar_with(&[0, 4, 8, 12]); 4]);
        let r = continuation_eval(&flat, &flat.concat(&flat).concat(&flat).concat(&flat)).unwrap();
        assert_eq!(r.hard_accuracy_mean, 1.0);
        assert_eq!(r.hard_accuracy_max, 1.0);
        assert_eq!(r.soft_distance_mean, 0.0);
        assert_eq!(r.soft_distance_min, 0.0);
        assert!(continuation_eval(&Tab::default(), &flat).is_err());
    }

    #[test]
    fn association_single_bad_tuple() {
        let tokens = [
            Token::Bar,
            Token::Position(1),
            Token::NoteVelocity(20),
            Token::NoteOn(42),
            Token::NoteDuration(4),
            Token::String(5),
            Token::Fret(2),
        ];
        let r = string_association_tokens(&tokens).unwrap();
        assert_eq!(r.per_string_accuracy()[4], Some(0.0));
        assert_eq!(r.per_pitch_error_rate()[&42], 1.0);
        assert_eq!(r.per_pitch_string_distribution()[&42], [0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(r.fret_mismatches, 0);
    }

    #[test]
    fn association_valid_tab() {
        let tab = Tab::new(vec![bar_with(&[0, 4]), bar_with(&[8])]);
        let tokens = encode(&tab, EncodeMode::NoGrooving).unwrap();
        let r = string_association_tokens(&tokens).unwrap();
        assert_eq!(r.per_string_accuracy()[5], Some(1.0));
        assert_eq!(r.accuracy(), Some(1.0));
        assert!(string_association(&Tab::new(vec![Bar::new()])).is_err());
    }

    #[test]
    fn fret_mismatch_counted_separately() {
        let tokens = [
            Token::Bar,
            Token::Position(1),
            Token::NoteVelocity(20),
            Token::NoteOn(45),
            Token::NoteDuration(4),
            Token::String(6),
            Token::Fret(4),
        ];
        let r = string_association_tokens(&tokens).unwrap();
        assert_eq!(r.fret_mismatches, 1);
        assert_eq!(r.correct(), 0);
    }

    #[test]
    fn kv_round_trip() {
        let r = GrooveCoherenceReport {
            hard_accuracy_mean: 0.8125,
            hard_accuracy_max: 0.9,
            soft_distance_mean: 1.0 / 3.0,
            soft_distance_min: 0.1,
            samples: 3,
        };
        let text = format_kv(&r.to_kv("real"));
        let back = GrooveCoherenceReport::from_kv(&parse_kv(&text).unwrap(), "real").unwrap();
        assert_eq!(back, r);
    }
}
