use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::HarnessError;

/// Sentinel written for undefined values.
pub const NA: &str = "NA";

/// Writes a header row and data rows as RFC 4180 CSV.
pub fn write_csv<P, I>(path: P, header: &[String], rows: I) -> Result<(), HarnessError>
where
    P: AsRef<Path>,
    I: IntoIterator<Item = Vec<String>>,
{
    let file = File::create(path.as_ref())?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(BufWriter::new(file));
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Shortest representation that parses back to the same value.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_else(|| NA.to_string())
}

pub fn parse_opt(field: &str) -> Option<f64> {
    if field == NA {
        None
    } else {
        field.parse().ok()
    }
}
