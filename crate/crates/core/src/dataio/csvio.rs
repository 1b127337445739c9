use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Dataset, Label, SampleRecord, SEQ_LEN, VOCAB_SIZE};
use crate::error::{Error, Result};

/// Canonical header: `hash,t_0,…,t_99,malware`.
pub fn header() -> Vec<String> {
    let mut cols = Vec::with_capacity(SEQ_LEN + 2);
    cols.push("hash".to_string());
    cols.extend((0..SEQ_LEN).map(|i| format!("t_{i}")));
    cols.push("malware".to_string());
    cols
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(BufReader::new(file), path.display().to_string())
}

/// Parses and validates a dataset. Row numbers in diagnostics are 1-based
/// data rows (the header is not counted).
pub fn read_csv(reader: impl Read, source: impl Into<String>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let expected = header();
    let got: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if got != expected {
        let column = got
            .iter()
            .zip(&expected)
            .position(|(a, b)| a != b)
            .unwrap_or(got.len().min(expected.len()));
        return Err(Error::Record {
            row: 0,
            column: expected.get(column).cloned().unwrap_or_default(),
            value: got.get(column).cloned().unwrap_or_default(),
            message: "header does not match hash,t_0..t_99,malware".into(),
        });
    }

    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = row?;
        if row.len() != expected.len() {
            return Err(Error::Record {
                row: row_no,
                column: "*".into(),
                value: row.len().to_string(),
                message: format!("expected {} columns", expected.len()),
            });
        }
        let hash = &row[0];
        if !super::is_valid_hash(hash) {
            return Err(Error::Record {
                row: row_no,
                column: "hash".into(),
                value: hash.into(),
                message: "hash must be 32 lowercase hex characters".into(),
            });
        }
        let mut calls = Vec::with_capacity(SEQ_LEN);
        for t in 0..SEQ_LEN {
            let raw = &row[t + 1];
            match raw.parse::<u16>() {
                Ok(v) if (v as usize) < VOCAB_SIZE => calls.push(v),
                _ => {
                    return Err(Error::Record {
                        row: row_no,
                        column: format!("t_{t}"),
                        value: raw.into(),
                        message: format!("call index must be an integer in [0, {}]", VOCAB_SIZE - 1),
                    })
                }
            }
        }
        let raw_label = &row[SEQ_LEN + 1];
        let label = raw_label
            .parse::<u8>()
            .ok()
            .and_then(Label::from_u8)
            .ok_or_else(|| Error::Record {
                row: row_no,
                column: "malware".into(),
                value: raw_label.into(),
                message: "label must be 0 or 1".into(),
            })?;
        records.push(SampleRecord::new(hash, calls, label)?);
    }
    Ok(Dataset::new(records, source))
}

pub fn save_csv(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_csv(d, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Canonical form: UTF-8, LF line endings, no quoting.
pub fn write_csv(d: &Dataset, w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "{}", header().join(","))?;
    let mut line = String::with_capacity(512);
    for r in d.records() {
        line.clear();
        line.push_str(r.hash());
        for c in r.calls() {
            line.push(',');
            line.push_str(&c.to_string());
        }
        line.push(',');
        line.push_str(&r.label().as_u8().to_string());
        writeln!(w, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(hash: &str, calls: &[&str], label: &str) -> String {
        let mut s = hash.to_string();
        for c in calls {
            s.push(',');
            s.push_str(c);
        }
        s.push(',');
        s.push_str(label);
        s
    }

    fn file_with(rows: &[String]) -> String {
        let mut s = header().join(",");
        s.push('\n');
        for r in rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }

    #[test]
    fn header_only_is_empty_dataset() {
        let d = read_csv(file_with(&[]).as_bytes(), "mem").unwrap();
        assert!(d.is_empty());
    }

    #[test]
    fn out_of_range_index_cites_row_and_column() {
        let good = row(&"a".repeat(32), &["5"; SEQ_LEN], "1");
        let mut calls = vec!["0"; SEQ_LEN];
        calls[42] = "307";
        let bad = row(&"b".repeat(32), &calls, "0");
        match read_csv(file_with(&[good, bad]).as_bytes(), "mem") {
            Err(Error::Record { row, column, value, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "t_42");
                assert_eq!(value, "307");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_column_count_and_bad_label() {
        let short = format!("{},1,2", "a".repeat(32));
        assert!(matches!(
            read_csv(file_with(&[short]).as_bytes(), "mem"),
            Err(Error::Record { row: 1, .. })
        ));
        let bad_label = row(&"a".repeat(32), &["1"; SEQ_LEN], "2");
        match read_csv(file_with(&[bad_label]).as_bytes(), "mem") {
            Err(Error::Record { column, .. }) => assert_eq!(column, "malware"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_header_rejected() {
        assert!(read_csv("hash,x\n".as_bytes(), "mem").is_err());
    }

    #[test]
    fn write_then_read_is_identity() {
        let text = file_with(&[
            row(&"a".repeat(32), &["306"; SEQ_LEN], "1"),
            row(&"0".repeat(32), &["0"; SEQ_LEN], "0"),
        ]);
        let d = read_csv(text.as_bytes(), "mem").unwrap();
        let mut out = Vec::new();
        write_csv(&d, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
    }
}
