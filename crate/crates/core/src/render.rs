//! Plain ASCII six-line tablature, one column per 16th note.

use crate::tab::{Tab, Technique, POSITIONS_PER_BAR};

const STRING_NAMES: [char; 6] = ['e', 'B', 'G', 'D', 'A', 'E'];
const CELL: usize = 3;

fn technique_mark(t: Technique) -> char {
    match t {
        Technique::Slap => 'S',
        Technique::Press => 'P',
        Technique::Upstroke => 'U',
        Technique::Downstroke => 'D',
        Technique::HitTop => 'H',
    }
}

/// Renders `bars_per_line` bars per system. A technique row is printed above
/// a system only when one of its bars carries techniques.
pub fn render_ascii(tab: &Tab, bars_per_line: usize) -> String {
    let bars_per_line = bars_per_line.max(1);
    let mut out = String::new();
    if !tab.metadata.title.is_empty() {
        out.push_str(&tab.metadata.title);
        out.push('\n');
    }
    for (system, chunk) in tab.bars.chunks(bars_per_line).enumerate() {
        if system > 0 {
            out.push('\n');
        }
        let has_techniques = chunk.iter().any(|b| !b.techniques.is_empty());
        if has_techniques {
            let mut row = String::from("  ");
            for bar in chunk {
                for p in 0..POSITIONS_PER_BAR {
                    let mark = bar.technique_at(p).map_or(' ', technique_mark);
                    row.push(mark);
                    row.push_str(&" ".repeat(CELL - 1));
                }
                row.push(' ');
            }
            out.push_str(row.trim_end());
            out.push('\n');
        }
        for (i, name) in STRING_NAMES.iter().enumerate() {
            let string = i as u8 + 1;
            let mut row = format!("{name}|");
            for bar in chunk {
                for p in 0..POSITIONS_PER_BAR {
                    let cell = bar
                        .notes_at(p)
                        .find(|n| n.string == string)
                        .map_or_else(String::new, |n| n.fret.to_string());
                    row.push_str(&cell);
                    row.push_str(&"-".repeat(CELL - cell.len()));
                }
                row.push('|');
            }
            out.push_str(&row);
            out.push('\n');
        }
    }
    out
}
