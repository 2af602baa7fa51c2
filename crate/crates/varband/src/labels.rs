//! Parser for the telemetry label catalog, a CSV with one row per channel:
//! channel id, spacecraft, a bracketed list of inclusive anomaly spans over
//! the test split, and the test split's length. Column order comes from the
//! header row, fields may be double-quoted (the span list always is, it
//! contains commas), and line endings may be CRLF.

use varband_core::Segment;

/// Sum of `num_values` over all SMAP rows of the reference catalog.
pub const SMAP_TOTAL_VALUES: usize = 562_800;
/// Sum of `num_values` over all MSL rows of the reference catalog.
pub const MSL_TOTAL_VALUES: usize = 132_046;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Spacecraft {
    Smap,
    Msl,
}

impl Spacecraft {
    pub fn name(&self) -> &'static str {
        match self {
            Spacecraft::Smap => "SMAP",
            Spacecraft::Msl => "MSL",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelEntry {
    pub channel_id: String,
    pub spacecraft: Spacecraft,
    /// Inclusive anomaly spans, indexed over the channel's test split.
    pub segments: Vec<Segment>,
    /// Test split length the spans were validated against.
    pub num_values: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabelTable {
    pub entries: Vec<LabelEntry>,
}

impl LabelTable {
    pub fn lookup(&self, channel_id: &str) -> Option<&LabelEntry> {
        self.entries.iter().find(|e| e.channel_id == channel_id)
    }

    /// Total test points per spacecraft, for checking a download against
    /// [`SMAP_TOTAL_VALUES`] and [`MSL_TOTAL_VALUES`].
    pub fn totals(&self) -> (usize, usize) {
        let mut smap = 0;
        let mut msl = 0;
        for e in &self.entries {
            match e.spacecraft {
                Spacecraft::Smap => smap += e.num_values,
                Spacecraft::Msl => msl += e.num_values,
            }
        }
        (smap, msl)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LabelsError {
    #[error("labels line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("labels line {line}: segment [{start}, {end}] does not fit in {num_values} values")]
    SegmentOutOfRange {
        line: usize,
        start: usize,
        end: usize,
        num_values: usize,
    },
    #[error("labels line {line}: unknown spacecraft {name:?}")]
    UnknownSpacecraft { line: usize, name: String },
}

fn row_error(line: usize, reason: impl Into<String>) -> LabelsError {
    LabelsError::MalformedRow {
        line,
        reason: reason.into(),
    }
}

/// Splits one CSV line into fields, honoring double quotes. Quotes
/// delimit fields; the catalog never embeds literal quote characters.
fn split_row(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut current = String::new();
    let mut in_quotes = false;
    for ch in line.chars() {
        match ch {
            '"' => in_quotes = !in_quotes,
            ',' if !in_quotes => fields.push(std::mem::take(&mut current)),
            _ => current.push(ch),
        }
    }
    fields.push(current);
    fields
}

/// Parses a span list like `[[100, 200], [300, 305]]` or `[]`.
struct SpanCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    line: usize,
}

impl<'a> SpanCursor<'a> {
    fn skip_spaces(&mut self) {
        while self.bytes.get(self.pos) == Some(&b' ') {
            self.pos += 1;
        }
    }

    fn eat(&mut self, expected: u8) -> Result<(), LabelsError> {
        self.skip_spaces();
        if self.bytes.get(self.pos) == Some(&expected) {
            self.pos += 1;
            Ok(())
        } else {
            Err(row_error(
                self.line,
                format!(
                    "expected {:?} at offset {} of the span list",
                    expected as char, self.pos
                ),
            ))
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_spaces();
        self.bytes.get(self.pos).copied()
    }

    fn number(&mut self) -> Result<usize, LabelsError> {
        self.skip_spaces();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(|b| b.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(row_error(self.line, "expected a number in the span list"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| row_error(self.line, "span index out of range"))
    }
}

fn parse_spans(text: &str, line: usize, num_values: usize) -> Result<Vec<Segment>, LabelsError> {
    let mut cur = SpanCursor {
        bytes: text.trim().as_bytes(),
        pos: 0,
        line,
    };
    let mut spans = Vec::new();
    cur.eat(b'[')?;
    loop {
        match cur.peek() {
            Some(b']') => {
                cur.pos += 1;
                break;
            }
            Some(b'[') => {
                cur.pos += 1;
                let start = cur.number()?;
                cur.eat(b',')?;
                let end = cur.number()?;
                cur.eat(b']')?;
                if start > end || end >= num_values {
                    return Err(LabelsError::SegmentOutOfRange {
                        line,
                        start,
                        end,
                        num_values,
                    });
                }
                spans.push(Segment { start, end });
                if cur.peek() == Some(b',') {
                    cur.pos += 1;
                }
            }
            _ => return Err(row_error(line, "unterminated span list")),
        }
    }
    cur.skip_spaces();
    if cur.pos != cur.bytes.len() {
        return Err(row_error(line, "unexpected text after the span list"));
    }
    spans.sort_by_key(|s| s.start);
    Ok(spans)
}

pub fn parse_labels_csv(text: &str) -> Result<LabelTable, LabelsError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    let (header_line, header) = lines
        .by_ref()
        .find(|(_, l)| !l.trim().is_empty())
        .ok_or_else(|| row_error(1, "empty file"))?;

    let columns = split_row(header);
    let column = |name: &str| -> Result<usize, LabelsError> {
        columns
            .iter()
            .position(|c| c.trim() == name)
            .ok_or_else(|| row_error(header_line, format!("missing column {name:?}")))
    };
    let id_col = column("chan_id")?;
    let craft_col = column("spacecraft")?;
    let spans_col = column("anomaly_sequences")?;
    let count_col = column("num_values")?;

    let mut table = LabelTable::default();
    for (line, raw) in lines {
        if raw.trim().is_empty() {
            continue;
        }
        let fields = split_row(raw);
        if fields.len() != columns.len() {
            return Err(row_error(
                line,
                format!("expected {} fields, got {}", columns.len(), fields.len()),
            ));
        }
        let channel_id = fields[id_col].trim().to_string();
        if channel_id.is_empty() {
            return Err(row_error(line, "empty channel id"));
        }
        let craft_name = fields[craft_col].trim();
        let spacecraft = match craft_name {
            "SMAP" => Spacecraft::Smap,
            "MSL" => Spacecraft::Msl,
            other => {
                return Err(LabelsError::UnknownSpacecraft {
                    line,
                    name: other.to_string(),
                })
            }
        };
        let num_values: usize = fields[count_col]
            .trim()
            .parse()
            .map_err(|_| row_error(line, format!("bad num_values {:?}", fields[count_col])))?;
        let segments = parse_spans(&fields[spans_col], line, num_values)?;
        if table
            .entries
            .iter()
            .any(|e| e.channel_id == channel_id && e.spacecraft == spacecraft)
        {
            return Err(row_error(line, format!("duplicate channel {channel_id:?}")));
        }
        table.entries.push(LabelEntry {
            channel_id,
            spacecraft,
            segments,
            num_values,
        });
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "chan_id,spacecraft,anomaly_sequences,num_values\n";

    #[test]
    fn parses_a_single_span_row() {
        let text = format!("{HEADER}A-2,SMAP,\"[[4690, 4774]]\",8505\n");
        let table = parse_labels_csv(&text).unwrap();
        assert_eq!(table.entries.len(), 1);
        let e = &table.entries[0];
        assert_eq!(e.channel_id, "A-2");
        assert_eq!(e.spacecraft, Spacecraft::Smap);
        assert_eq!(
            e.segments,
            vec![Segment {
                start: 4690,
                end: 4774
            }]
        );
        assert_eq!(e.num_values, 8505);
    }

    #[test]
    fn parses_multiple_spans_and_sorts_them() {
        let text = format!("{HEADER}M-6,MSL,\"[[1200, 1250], [100, 200]]\",2049\n");
        let table = parse_labels_csv(&text).unwrap();
        assert_eq!(
            table.entries[0].segments,
            vec![
                Segment {
                    start: 100,
                    end: 200
                },
                Segment {
                    start: 1200,
                    end: 1250
                }
            ]
        );
    }

    #[test]
    fn accepts_empty_span_lists_and_crlf() {
        let text = format!("{}P-1,SMAP,\"[]\",500\r\n", HEADER.replace('\n', "\r\n"));
        let table = parse_labels_csv(&text).unwrap();
        assert!(table.entries[0].segments.is_empty());
    }

    #[test]
    fn header_order_does_not_matter() {
        let text = "num_values,chan_id,anomaly_sequences,spacecraft\n\
                    300,E-1,\"[[10, 20]]\",SMAP\n";
        let table = parse_labels_csv(text).unwrap();
        assert_eq!(table.entries[0].channel_id, "E-1");
        assert_eq!(table.entries[0].num_values, 300);
    }

    #[test]
    fn span_past_the_series_end_is_out_of_range() {
        let text = format!("{HEADER}A-1,SMAP,\"[[100, 500]]\",500\n");
        assert_eq!(
            parse_labels_csv(&text),
            Err(LabelsError::SegmentOutOfRange {
                line: 2,
                start: 100,
                end: 500,
                num_values: 500
            })
        );
    }

    #[test]
    fn inverted_spans_are_out_of_range() {
        let text = format!("{HEADER}A-1,SMAP,\"[[300, 200]]\",500\n");
        assert!(matches!(
            parse_labels_csv(&text),
            Err(LabelsError::SegmentOutOfRange { .. })
        ));
    }

    #[test]
    fn unknown_spacecraft_is_reported_with_its_name() {
        let text = format!("{HEADER}X-1,VOYAGER,\"[]\",100\n");
        assert_eq!(
            parse_labels_csv(&text),
            Err(LabelsError::UnknownSpacecraft {
                line: 2,
                name: "VOYAGER".to_string()
            })
        );
    }

    #[test]
    fn malformed_rows_are_rejected() {
        for (row, why) in [
            ("A-1,SMAP,\"[]\"", "missing field"),
            ("A-1,SMAP,\"[[1, 2]\",100", "unterminated list"),
            ("A-1,SMAP,\"[[1; 2]]\",100", "bad separator"),
            ("A-1,SMAP,\"[]\",many", "bad count"),
            (",SMAP,\"[]\",100", "empty id"),
            ("A-1,SMAP,\"[] trailing\",100", "trailing text"),
        ] {
            let text = format!("{HEADER}{row}\n");
            assert!(
                matches!(
                    parse_labels_csv(&text),
                    Err(LabelsError::MalformedRow { line: 2, .. })
                ),
                "case {why:?} should be malformed"
            );
        }
    }

    #[test]
    fn missing_header_column_is_line_one() {
        let text = "chan_id,spacecraft,num_values\nA-1,SMAP,100\n";
        assert!(matches!(
            parse_labels_csv(text),
            Err(LabelsError::MalformedRow { line: 1, .. })
        ));
    }

    #[test]
    fn duplicate_channels_on_one_spacecraft_are_rejected() {
        let text = format!("{HEADER}A-1,SMAP,\"[]\",100\nA-1,SMAP,\"[]\",100\n");
        assert!(matches!(
            parse_labels_csv(&text),
            Err(LabelsError::MalformedRow { line: 3, .. })
        ));
    }

    #[test]
    fn totals_sum_per_spacecraft() {
        let text = format!("{HEADER}A-1,SMAP,\"[]\",100\nA-2,SMAP,\"[]\",250\nM-1,MSL,\"[]\",40\n");
        let table = parse_labels_csv(&text).unwrap();
        assert_eq!(table.totals(), (350, 40));
        assert!(table.lookup("M-1").is_some());
        assert!(table.lookup("Z-9").is_none());
    }
}
