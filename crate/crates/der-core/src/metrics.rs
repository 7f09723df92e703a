//! Training metrics as CSV: one row per logged training update, with an
//! optional evaluation return attached to rows where the evaluation
//! cadence fired. Floats are written with shortest-round-trip formatting,
//! so identical runs produce byte-identical files.

use std::io::{BufRead, Write};
use thiserror::Error;

pub const METRICS_HEADER: &str =
    "t_step,L_tot,L_ind,mean_abs_delta,eta,epsilon,selected_count,eval_return";

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("metrics io: {0}")]
    Io(#[from] std::io::Error),
    #[error("metrics line {line}: {msg}")]
    Format { line: usize, msg: String },
}

/// One logged update. `eval_return` is present only on rows where an
/// evaluation ran; it serializes as an empty trailing field otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub t_step: u64,
    pub l_tot: f64,
    pub l_ind: f64,
    pub mean_abs_delta: f64,
    pub eta: f64,
    pub epsilon: f64,
    pub selected_count: usize,
    pub eval_return: Option<f64>,
}

impl MetricsRow {
    fn to_csv(&self) -> String {
        let eval = match self.eval_return {
            Some(v) => v.to_string(),
            None => String::new(),
        };
        format!(
            "{},{},{},{},{},{},{},{}",
            self.t_step,
            self.l_tot,
            self.l_ind,
            self.mean_abs_delta,
            self.eta,
            self.epsilon,
            self.selected_count,
            eval
        )
    }
}

/// Streaming writer that pins the header and enforces strictly
/// increasing step counters.
pub struct MetricsWriter<W: Write> {
    out: W,
    last_t: Option<u64>,
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(mut out: W) -> Result<Self, MetricsError> {
        writeln!(out, "{METRICS_HEADER}")?;
        Ok(Self { out, last_t: None })
    }

    pub fn write_row(&mut self, row: &MetricsRow) -> Result<(), MetricsError> {
        if let Some(last) = self.last_t {
            if row.t_step <= last {
                return Err(MetricsError::Format {
                    line: 0,
                    msg: format!("t_step {} does not increase past {}", row.t_step, last),
                });
            }
        }
        self.last_t = Some(row.t_step);
        writeln!(self.out, "{}", row.to_csv())?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, MetricsError> {
        self.out.flush()?;
        Ok(self.out)
    }
}

fn parse_field<T: std::str::FromStr>(
    line: usize,
    name: &str,
    raw: &str,
) -> Result<T, MetricsError> {
    raw.parse().map_err(|_| MetricsError::Format {
        line,
        msg: format!("bad {name}: '{raw}'"),
    })
}

/// Parse a full metrics file, validating the header, the field count, and
/// strictly increasing step counters. Errors carry 1-based line numbers.
pub fn read_metrics<R: BufRead>(r: R) -> Result<Vec<MetricsRow>, MetricsError> {
    let mut rows = Vec::new();
    let mut last_t: Option<u64> = None;
    for (idx, line) in r.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line_no == 1 {
            if line != METRICS_HEADER {
                return Err(MetricsError::Format {
                    line: 1,
                    msg: format!("expected header '{METRICS_HEADER}', got '{line}'"),
                });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(MetricsError::Format {
                line: line_no,
                msg: format!("expected 8 fields, got {}", fields.len()),
            });
        }
        let row = MetricsRow {
            t_step: parse_field(line_no, "t_step", fields[0])?,
            l_tot: parse_field(line_no, "L_tot", fields[1])?,
            l_ind: parse_field(line_no, "L_ind", fields[2])?,
            mean_abs_delta: parse_field(line_no, "mean_abs_delta", fields[3])?,
            eta: parse_field(line_no, "eta", fields[4])?,
            epsilon: parse_field(line_no, "epsilon", fields[5])?,
            selected_count: parse_field(line_no, "selected_count", fields[6])?,
            eval_return: if fields[7].is_empty() {
                None
            } else {
                Some(parse_field(line_no, "eval_return", fields[7])?)
            },
        };
        if let Some(last) = last_t {
            if row.t_step <= last {
                return Err(MetricsError::Format {
                    line: line_no,
                    msg: format!("t_step {} does not increase past {}", row.t_step, last),
                });
            }
        }
        last_t = Some(row.t_step);
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_rows() -> Vec<MetricsRow> {
        vec![
            MetricsRow {
                t_step: 32,
                l_tot: 1.5,
                l_ind: 12.25,
                mean_abs_delta: 0.75,
                eta: 0.8,
                epsilon: 1.0,
                selected_count: 51,
                eval_return: None,
            },
            MetricsRow {
                t_step: 33,
                l_tot: 1.25,
                l_ind: 11.0,
                mean_abs_delta: 0.5,
                eta: 0.80005,
                epsilon: 0.99,
                selected_count: 52,
                eval_return: Some(4.0),
            },
        ]
    }

    fn write_all(rows: &[MetricsRow]) -> Vec<u8> {
        let mut w = MetricsWriter::new(Vec::new()).unwrap();
        for r in rows {
            w.write_row(r).unwrap();
        }
        w.finish().unwrap()
    }

    #[test]
    fn round_trip_preserves_rows() {
        let rows = sample_rows();
        let buf = write_all(&rows);
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(METRICS_HEADER));
        assert!(text.lines().nth(1).unwrap().ends_with(",51,"));
        let back = read_metrics(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn writer_rejects_non_increasing_steps() {
        let mut w = MetricsWriter::new(Vec::new()).unwrap();
        let rows = sample_rows();
        w.write_row(&rows[1]).unwrap();
        assert!(w.write_row(&rows[0]).is_err());
    }

    #[test]
    fn reader_rejects_bad_header() {
        let text = "t_step,nope\n1,2\n";
        let err = read_metrics(std::io::Cursor::new(text)).unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn reader_rejects_short_rows_with_line_number() {
        let text = format!("{METRICS_HEADER}\n1,2,3\n");
        let err = read_metrics(std::io::Cursor::new(text)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2") && msg.contains("8 fields"), "{msg}");
    }

    #[test]
    fn reader_rejects_bad_floats_and_backward_steps() {
        let good = "5,1,1,1,0.8,1,4,";
        let text = format!("{METRICS_HEADER}\n{good}\n5,1,1,1,0.8,1,4,\n");
        let err = read_metrics(std::io::Cursor::new(text)).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");

        let text = format!("{METRICS_HEADER}\n1,x,1,1,0.8,1,4,\n");
        let err = read_metrics(std::io::Cursor::new(text)).unwrap_err();
        assert!(err.to_string().contains("bad L_tot"), "{err}");
    }

    #[test]
    fn identical_row_streams_serialize_identically() {
        let a = write_all(&sample_rows());
        let b = write_all(&sample_rows());
        assert_eq!(a, b);
    }
}
