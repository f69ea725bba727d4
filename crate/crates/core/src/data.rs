//! CSV datasets with header `x1,...,xp,y` and coordinates in `[0, 1]`.

use std::path::Path;

use crate::design::Design;
use crate::error::{Error, Result};

fn parse_error(location: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Parse { location: location.into(), message: message.into() }
}

/// Reads a dataset from any CSV source; `source` labels error locations.
pub fn read_dataset<R: std::io::Read>(reader: R, source: &str) -> Result<(Design, Vec<f64>)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| parse_error(format!("{source}: header"), e.to_string()))?.clone();
    let names: Vec<&str> = header.iter().collect();
    if names.is_empty() || names.iter().all(|h| h.is_empty()) {
        return Err(parse_error(source, "no data rows"));
    }
    let p = names.len().saturating_sub(1);
    if p == 0 {
        return Err(parse_error(format!("{source}: header"), "need at least one x column before y"));
    }
    for (j, name) in names[..p].iter().enumerate() {
        if *name != format!("x{}", j + 1) {
            return Err(parse_error(format!("{source}: header column {}", j + 1), format!("expected x{}, found {name:?}", j + 1)));
        }
    }
    if names[p] != "y" {
        return Err(parse_error(format!("{source}: header column {}", p + 1), format!("expected y, found {:?}", names[p])));
    }

    let mut values = Vec::new();
    let mut y = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| parse_error(format!("{source}: row {row}"), e.to_string()))?;
        if record.len() != p + 1 {
            return Err(parse_error(
                format!("{source}: row {row}"),
                format!("expected {} fields, found {}", p + 1, record.len()),
            ));
        }
        for (j, cell) in record.iter().enumerate() {
            let column = names[j];
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_error(format!("{source}: row {row}, column {column}"), format!("not a number: {cell:?}")))?;
            if !v.is_finite() {
                return Err(parse_error(format!("{source}: row {row}, column {column}"), "value is not finite"));
            }
            if j < p {
                if !(0.0..=1.0).contains(&v) {
                    return Err(parse_error(format!("{source}: row {row}, column {column}"), format!("{v} is outside [0, 1]")));
                }
                values.push(v);
            } else {
                y.push(v);
            }
        }
    }
    if y.is_empty() {
        return Err(parse_error(source, "no data rows"));
    }
    Ok((Design::new(y.len(), p, values)?, y))
}

/// Loads a dataset from a CSV file.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<(Design, Vec<f64>)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    read_dataset(file, &path.display().to_string())
}

/// Writes a dataset in the format [`load_dataset`] reads.
pub fn write_dataset<W: std::io::Write>(design: &Design, y: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=design.p()).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    w.write_record(&header)?;
    for (i, yi) in y.iter().enumerate() {
        let mut row: Vec<String> = design.row(i).iter().map(f64::to_string).collect();
        row.push(yi.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
