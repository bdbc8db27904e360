//! Trial CSV files: `stage,center_id,arm,y,a_1..a_P,z_1..z_Q`.

use std::fmt;
use std::path::Path;

use lago_core::{Arm, LagoError, ObservationRow, TrialDataset};

#[derive(Debug, Clone, PartialEq)]
pub struct CsvError {
    /// 1-based line in the file (the header is line 1); 0 when not tied to a line.
    pub line: usize,
    pub column: Option<String>,
    pub message: String,
}

impl fmt::Display for CsvError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.column, self.line) {
            (Some(c), l) if l > 0 => write!(f, "line {l}, column `{c}`: {}", self.message),
            (None, l) if l > 0 => write!(f, "line {l}: {}", self.message),
            (Some(c), _) => write!(f, "column `{c}`: {}", self.message),
            (None, _) => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for CsvError {}

fn err(line: usize, column: Option<&str>, message: impl Into<String>) -> CsvError {
    CsvError {
        line,
        column: column.map(str::to_owned),
        message: message.into(),
    }
}

/// Counts `a_1..a_P` and `z_1..z_Q` in a header, requiring the fixed column order.
pub fn header_dims(header: &[&str]) -> Result<(usize, usize), CsvError> {
    let fixed = ["stage", "center_id", "arm", "y"];
    for (i, name) in fixed.iter().enumerate() {
        match header.get(i) {
            Some(h) if h == name => {}
            Some(h) => return Err(err(1, Some(name), format!("expected `{name}` in position {}, found `{h}`", i + 1))),
            None => return Err(err(1, Some(name), "missing column")),
        }
    }
    let rest = &header[fixed.len()..];
    let p = rest.iter().take_while(|h| h.starts_with("a_")).count();
    let q = rest.len() - p;
    for (k, h) in rest[..p].iter().enumerate() {
        if *h != format!("a_{}", k + 1) {
            return Err(err(1, Some(h), format!("expected `a_{}`", k + 1)));
        }
    }
    for (k, h) in rest[p..].iter().enumerate() {
        if *h != format!("z_{}", k + 1) {
            return Err(err(1, Some(h), format!("expected `z_{}`", k + 1)));
        }
    }
    Ok((p, q))
}

fn number(line: usize, column: &str, field: &str) -> Result<f64, CsvError> {
    if field.is_empty() {
        return Err(err(line, Some(column), "missing value"));
    }
    let v: f64 = field
        .parse()
        .map_err(|_| err(line, Some(column), format!("`{field}` is not a number")))?;
    if !v.is_finite() {
        return Err(err(line, Some(column), format!("`{field}` is not finite")));
    }
    Ok(v)
}

/// Parses CSV text into rows, with the component and covariate counts from the header.
pub fn parse_rows(text: &str) -> Result<(usize, usize, Vec<ObservationRow>), CsvError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| err(1, None, e.to_string()))?
        .iter()
        .map(|h| h.trim().to_owned())
        .collect();
    let names: Vec<&str> = header.iter().map(String::as_str).collect();
    let (p, q) = header_dims(&names)?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| err(line, None, e.to_string()))?;
        if rec.len() != header.len() {
            return Err(err(line, None, format!("expected {} fields, found {}", header.len(), rec.len())));
        }
        let f = |k: usize| rec[k].trim();
        let stage: u32 = f(0)
            .parse()
            .map_err(|_| err(line, Some("stage"), format!("`{}` is not a positive integer", f(0))))?;
        if f(1).is_empty() {
            return Err(err(line, Some("center_id"), "missing value"));
        }
        let arm: Arm = f(2)
            .parse()
            .map_err(|_| err(line, Some("arm"), format!("`{}` is not `intervention` or `control`", f(2))))?;
        let y = number(line, "y", f(3))?;
        let a = (0..p)
            .map(|k| number(line, &header[4 + k], f(4 + k)))
            .collect::<Result<Vec<_>, _>>()?;
        let z = (0..q)
            .map(|k| number(line, &header[4 + p + k], f(4 + p + k)))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(ObservationRow {
            stage,
            center_id: f(1).to_owned(),
            arm,
            y,
            a,
            z,
        });
    }
    Ok((p, q, rows))
}

/// Parses and validates a trial file.
pub fn parse_trial_csv(text: &str) -> Result<TrialDataset, CsvError> {
    let (p, q, rows) = parse_rows(text)?;
    TrialDataset::from_rows(p, q, rows).map_err(|e| match e {
        LagoError::InvalidData { row, message } => err(row + 2, None, message),
        other => err(0, None, other.to_string()),
    })
}

pub fn load_trial_csv(path: &Path) -> Result<TrialDataset, CsvError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| err(0, None, format!("cannot read {}: {e}", path.display())))?;
    parse_trial_csv(&text)
}

pub fn write_trial_csv<W: std::io::Write>(data: &TrialDataset, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["stage".to_owned(), "center_id".into(), "arm".into(), "y".into()];
    header.extend((1..=data.p()).map(|k| format!("a_{k}")));
    header.extend((1..=data.q()).map(|k| format!("z_{k}")));
    w.write_record(&header)?;
    for r in data.rows() {
        let mut rec = vec![r.stage.to_string(), r.center_id.clone(), r.arm.to_string(), r.y.to_string()];
        rec.extend(r.a.iter().chain(&r.z).map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_is_one_center() {
        let text = "stage,center_id,arm,y,a_1,z_1\n1,c1,intervention,0.5,1,0.2\n1,c1,intervention,0.7,1,0.2\n1,c1,intervention,0.6,1,0.2\n";
        let d = parse_trial_csv(text).unwrap();
        assert_eq!((d.p(), d.q(), d.num_stages(), d.num_centers()), (1, 1, 1, 1));
        assert_eq!(d.n_total(), 3);
    }

    #[test]
    fn inconsistent_package_names_the_center() {
        let text = "stage,center_id,arm,y,a_1\n1,alpha,intervention,0.5,1\n1,alpha,intervention,0.5,2\n";
        let e = parse_trial_csv(text).unwrap_err();
        assert_eq!(e.line, 3);
        assert!(e.message.contains("alpha"), "{e}");
    }

    #[test]
    fn bad_number_reports_line_and_column() {
        let text = "stage,center_id,arm,y,a_1\n1,c,intervention,0.5,1\n1,c,intervention,abc,1\n";
        let e = parse_trial_csv(text).unwrap_err();
        assert_eq!((e.line, e.column.as_deref()), (3, Some("y")));
        let e = parse_trial_csv("stage,center_id,arm,y,a_1\n1,c,intervention,,1\n").unwrap_err();
        assert!(e.message.contains("missing"));
    }

    #[test]
    fn header_must_follow_the_schema() {
        assert!(parse_trial_csv("stage,center,arm,y\n").is_err());
        assert!(parse_trial_csv("stage,center_id,arm,y,a_2\n").is_err());
        assert_eq!(header_dims(&["stage", "center_id", "arm", "y", "a_1", "a_2", "z_1"]).unwrap(), (2, 1));
    }

    #[test]
    fn write_then_read_round_trips() {
        let text = "stage,center_id,arm,y,a_1,z_1\n1,c1,intervention,0.5,1.5,0.25\n1,c2,control,0.25,0,-1\n2,c1,intervention,0.125,2,0.25\n";
        let d = parse_trial_csv(text).unwrap();
        let mut buf = Vec::new();
        write_trial_csv(&d, &mut buf).unwrap();
        let back = parse_trial_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(d, back);
    }
}
