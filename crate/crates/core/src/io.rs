//! Readers for raw segmented lifetimes and per-segment summaries.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One segment's raw observations plus any descriptive labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub segment_id: String,
    /// (column, value) pairs in input column order.
    pub labels: Vec<(String, String)>,
    pub samples: Vec<f64>,
}

/// A precomputed per-segment result: sample size, p-value and effect estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub segment: i64,
    pub n: u32,
    pub pval: f64,
    pub del: f64,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Load long-format lifetimes: header `segment_id,value[,label...]`, comma
/// or tab delimited (decided from the header line).
pub fn load_segments(path: &Path) -> Result<Vec<SegmentRecord>> {
    let text = read_text(path)?;
    let header_line = text
        .lines()
        .next()
        .ok_or_else(|| parse_err(path, 1, "file is empty"))?;
    let delimiter = if header_line.contains('\t') {
        b'\t'
    } else {
        b','
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    let col = |names: &[&str]| headers.iter().position(|h| names.contains(&h));
    let id_col = col(&["segment_id", "segment"])
        .ok_or_else(|| parse_err(path, 1, "missing column 'segment_id'"))?;
    let value_col = col(&["value"]).ok_or_else(|| parse_err(path, 1, "missing column 'value'"))?;
    let label_cols: Vec<usize> = (0..headers.len())
        .filter(|&c| c != id_col && c != value_col)
        .collect();

    let mut records: Vec<SegmentRecord> = Vec::new();
    let mut index: std::collections::HashMap<String, usize> = Default::default();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(path, line, format!("malformed row: {e}"))
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let id = row[id_col].to_string();
        if id.is_empty() {
            return Err(parse_err(path, line, "empty segment id"));
        }
        let raw = &row[value_col];
        let value: f64 = raw
            .parse()
            .map_err(|_| parse_err(path, line, format!("value '{raw}' is not a number")))?;
        if !(value > 0.0 && value.is_finite()) {
            return Err(parse_err(
                path,
                line,
                format!("value {value} for segment '{id}' must be positive"),
            ));
        }
        let labels: Vec<(String, String)> = label_cols
            .iter()
            .map(|&c| (headers[c].to_string(), row[c].to_string()))
            .collect();
        match index.get(&id) {
            Some(&k) => {
                if records[k].labels != labels {
                    return Err(parse_err(
                        path,
                        line,
                        format!("labels for segment '{id}' differ from its earlier rows"),
                    ));
                }
                records[k].samples.push(value);
            }
            None => {
                index.insert(id.clone(), records.len());
                records.push(SegmentRecord {
                    segment_id: id,
                    labels,
                    samples: vec![value],
                });
            }
        }
    }
    if records.is_empty() {
        return Err(parse_err(path, 2, "no observations"));
    }
    Ok(records)
}

fn split_fields(line: &str) -> Vec<&str> {
    if line.contains(',') {
        line.split(',').map(str::trim).collect()
    } else {
        line.split_whitespace().collect()
    }
}

/// Load a summary file with header `segment n pval del` (whitespace or comma
/// separated, columns in any order).
pub fn load_summary(path: &Path) -> Result<Vec<SummaryRecord>> {
    let text = read_text(path)?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "file is empty"))?;
    let header: Vec<String> = split_fields(header)
        .into_iter()
        .map(|h| h.trim_matches('"').to_ascii_lowercase())
        .collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(path, 1, format!("missing column '{name}'")))
    };
    let (c_seg, c_n, c_p, c_d) = (col("segment")?, col("n")?, col("pval")?, col("del")?);

    let mut out = Vec::new();
    for (line, text) in lines {
        let f = split_fields(text);
        if f.len() != header.len() {
            return Err(parse_err(
                path,
                line,
                format!("expected {} fields, found {}", header.len(), f.len()),
            ));
        }
        let field = |c: usize| f[c].trim_matches('"');
        let bad =
            |what: &str, c: usize| parse_err(path, line, format!("bad {what} '{}'", field(c)));
        let segment: i64 = field(c_seg).parse().map_err(|_| bad("segment", c_seg))?;
        let n: u32 = field(c_n).parse().map_err(|_| bad("n", c_n))?;
        let pval: f64 = field(c_p).parse().map_err(|_| bad("pval", c_p))?;
        let del: f64 = field(c_d).parse().map_err(|_| bad("del", c_d))?;
        if n == 0 {
            return Err(parse_err(path, line, "n must be positive"));
        }
        if !(pval > 0.0 && pval < 1.0) {
            return Err(parse_err(path, line, format!("pval {pval} outside (0, 1)")));
        }
        if !(del > 0.0 && del.is_finite()) {
            return Err(parse_err(path, line, format!("del {del} must be positive")));
        }
        out.push(SummaryRecord {
            segment,
            n,
            pval,
            del,
        });
    }
    if out.is_empty() {
        return Err(parse_err(path, 2, "no summary rows"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn segments_grouped_in_order() {
        let f = file("segment_id,value\na,1.5\nb,2\na,0.5\nb,3\na,4\nb,1\n");
        let r = load_segments(f.path()).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r[0].segment_id, "a");
        assert_eq!(r[0].samples, vec![1.5, 0.5, 4.0]);
        assert_eq!(r[1].samples, vec![2.0, 3.0, 1.0]);
        assert!(r[0].labels.is_empty());
    }

    #[test]
    fn tab_delimited_with_labels() {
        let f = file("segment_id\tvalue\tzone\tmonth\n7\t120\t2\tAPR\n7\t80\t2\tAPR\n");
        let r = load_segments(f.path()).unwrap();
        assert_eq!(
            r[0].labels,
            vec![("zone".into(), "2".into()), ("month".into(), "APR".into())]
        );
    }

    #[test]
    fn segment_errors_name_the_line() {
        let f = file("segment_id,value\na,1\na,0\n");
        match load_segments(f.path()).unwrap_err() {
            Error::Parse { line, msg, .. } => {
                assert_eq!(line, 3);
                assert!(msg.contains("positive"));
            }
            e => panic!("{e}"),
        }
        let f = file("segment_id,value\na,1\na,x\n");
        assert!(matches!(
            load_segments(f.path()),
            Err(Error::Parse { line: 3, .. })
        ));
        let f = file("segment_id,value\na,1\na,2,3\n");
        assert!(matches!(load_segments(f.path()), Err(Error::Parse { .. })));
        let f = file("id,value\na,1\n");
        assert!(load_segments(f.path()).is_err());
        let f = file("segment_id,value\n");
        assert!(load_segments(f.path()).is_err());
        let f = file("segment_id,value,zone\na,1,1\na,2,2\n");
        assert!(load_segments(f.path()).is_err());
        assert!(matches!(
            load_segments(Path::new("/nonexistent/x.csv")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn summary_parsing() {
        let f = file("segment n pval del\n16 34 0.002 1.44\n3   40  0.5 0.97\n");
        let r = load_summary(f.path()).unwrap();
        assert_eq!(
            r[0],
            SummaryRecord {
                segment: 16,
                n: 34,
                pval: 0.002,
                del: 1.44
            }
        );
        assert_eq!(r.len(), 2);
        let f = file("\"segment\",\"n\",\"pval\",\"del\"\n1,10,0.3,0.9\n");
        assert_eq!(load_summary(f.path()).unwrap()[0].n, 10);
        let f = file("del,pval,n,segment\n0.9,0.3,10,1\n");
        assert_eq!(load_summary(f.path()).unwrap()[0].segment, 1);
    }

    #[test]
    fn summary_errors() {
        assert!(load_summary(file("segment n pval\n1 2 0.3\n").path()).is_err());
        assert!(load_summary(file("segment n pval del\n1 2 1.0 1\n").path()).is_err());
        assert!(load_summary(file("segment n pval del\n1 2 0.5 0\n").path()).is_err());
        assert!(load_summary(file("segment n pval del\n1 2 0.5\n").path()).is_err());
        assert!(load_summary(file("segment n pval del\n").path()).is_err());
        assert!(matches!(
            load_summary(file("segment n pval del\n1 2 0.5 1\nx 2 0.5 1\n").path()),
            Err(Error::Parse { line: 3, .. })
        ));
    }
}
