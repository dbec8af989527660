//! File formats: raw and privatized CSV, the manifest sidecar and JSON
//! reports.
//!
//! Floats are written with Rust's shortest round-trip representation, so
//! every value read back is bit-identical to the one written.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use ldp_pate::mechanisms::{CustomARecord, CustomBRecord, JointRecord};
use ldp_pate::{PrivacyBudget, RawRecord, Scenario};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const FORMAT_VERSION: u32 = 1;

/// Sidecar describing how a privatized file was produced. The variance
/// formulas need the exact budgets and `p` used at release time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub scenario: Scenario,
    pub eps_total: f64,
    /// Budget components in the scenario's canonical order.
    pub eps_split: Vec<f64>,
    pub seed: u64,
    pub n: usize,
    pub p: Option<f64>,
    /// Covariate dimension of a release with covariates.
    pub d: Option<usize>,
}

impl Manifest {
    pub fn path_for(data: &Path) -> PathBuf {
        let mut s = data.as_os_str().to_owned();
        s.push(".manifest.json");
        PathBuf::from(s)
    }

    pub fn budget(&self) -> Result<PrivacyBudget, CliError> {
        Ok(PrivacyBudget::new(self.scenario, &self.eps_split)?)
    }

    pub fn read(data: &Path) -> Result<Self, CliError> {
        let path = Self::path_for(data);
        let file = File::open(&path).map_err(|e| CliError::io(&path, e))?;
        let m: Manifest = serde_json::from_reader(io::BufReader::new(file))
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        if m.format_version != FORMAT_VERSION {
            return Err(CliError::Input(format!(
                "{}: unsupported format version {} (expected {FORMAT_VERSION})",
                path.display(),
                m.format_version
            )));
        }
        Ok(m)
    }

    pub fn write(&self, data: &Path) -> Result<(), CliError> {
        write_json(Some(&Self::path_for(data)), self)
    }
}

/// A privatized file of any scenario.
#[derive(Clone, Debug, PartialEq)]
pub enum Release {
    Joint(Vec<JointRecord>),
    CustomA(Vec<CustomARecord>),
    CustomB(Vec<CustomBRecord>),
}

impl Release {
    pub fn len(&self) -> usize {
        match self {
            Release::Joint(r) => r.len(),
            Release::CustomA(r) => r.len(),
            Release::CustomB(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

fn fmt_bool(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn parse_f64(s: &str, path: &Path, row: usize, col: &str) -> Result<f64, CliError> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| CliError::Input(format!("{}: row {row}: {col} = '{s}' is not a finite number", path.display())))
}

fn parse_bool(s: &str, path: &Path, row: usize, col: &str) -> Result<bool, CliError> {
    match s.trim() {
        "1" => Ok(true),
        "0" => Ok(false),
        other => Err(CliError::Input(format!(
            "{}: row {row}: {col} = '{other}' must be 0 or 1",
            path.display()
        ))),
    }
}

fn reader(path: &Path) -> Result<csv::Reader<File>, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn headers(rdr: &mut csv::Reader<File>, path: &Path) -> Result<Vec<String>, CliError> {
    Ok(rdr
        .headers()
        .map_err(|e| CliError::csv(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect())
}

/// Reads a raw experiment file with header `w,y[,x1,...,xd]`. Rows are
/// numbered from 1, not counting the header.
pub fn read_raw(path: &Path) -> Result<Vec<RawRecord>, CliError> {
    let mut rdr = reader(path)?;
    let hdr = headers(&mut rdr, path)?;
    if hdr.len() < 2 || hdr[0] != "w" || hdr[1] != "y" {
        return Err(CliError::Input(format!(
            "{}: header must start with 'w,y', found '{}'",
            path.display(),
            hdr.join(",")
        )));
    }
    for (j, h) in hdr.iter().enumerate().skip(2) {
        if *h != format!("x{}", j - 1) {
            return Err(CliError::Input(format!(
                "{}: covariate column {} must be named 'x{}', found '{h}'",
                path.display(),
                j - 1,
                j - 1
            )));
        }
    }
    let d = hdr.len() - 2;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| CliError::csv(path, e))?;
        let w = parse_bool(&rec[0], path, row, "w")?;
        let y = parse_f64(&rec[1], path, row, "y")?;
        if !(0.0..=1.0).contains(&y) {
            return Err(CliError::Input(format!("{}: row {row}: y = {y} is outside [0, 1]", path.display())));
        }
        if d == 0 {
            out.push(RawRecord::new(w, y));
            continue;
        }
        let mut x = Vec::with_capacity(d);
        for j in 0..d {
            let col = format!("x{}", j + 1);
            let v = parse_f64(&rec[j + 2], path, row, &col)?;
            if !(0.0..=1.0).contains(&v) {
                return Err(CliError::Input(format!(
                    "{}: row {row}: {col} = {v} is outside [0, 1]",
                    path.display()
                )));
            }
            x.push(v);
        }
        out.push(RawRecord::with_covariates(w, y, x));
    }
    Ok(out)
}

pub fn write_raw(path: &Path, records: &[RawRecord]) -> Result<(), CliError> {
    let d = records.first().and_then(|r| r.x.as_ref()).map_or(0, Vec::len);
    let mut header = vec!["w".to_string(), "y".to_string()];
    header.extend((1..=d).map(|j| format!("x{j}")));
    let rows = records.iter().map(|r| {
        let mut row = vec![fmt_bool(r.w).to_string(), fmt_f64(r.y)];
        if let Some(x) = &r.x {
            row.extend(x.iter().map(|&v| fmt_f64(v)));
        }
        row
    });
    write_csv(Some(path), &header, rows)
}

/// Column names of a privatized file.
pub fn release_header(scenario: Scenario, d: Option<usize>) -> Vec<String> {
    match scenario {
        Scenario::Joint | Scenario::JointWithCovariates => {
            let mut h = vec!["y_tilde".to_string(), "w_tilde".to_string()];
            h.extend((1..=d.unwrap_or(0)).map(|j| format!("x_tilde_{j}")));
            h
        }
        Scenario::CustomA => vec!["a_tilde".to_string()],
        Scenario::CustomB => vec!["b1".to_string(), "b2".to_string(), "b3".to_string()],
    }
}

pub fn read_release(path: &Path, scenario: Scenario, d: Option<usize>) -> Result<Release, CliError> {
    let mut rdr = reader(path)?;
    let hdr = headers(&mut rdr, path)?;
    let expected = release_header(scenario, d);
    if hdr != expected {
        return Err(CliError::Input(format!(
            "{}: header '{}' does not match a {scenario} release (expected '{}')",
            path.display(),
            hdr.join(","),
            expected.join(",")
        )));
    }
    let mut joint = Vec::new();
    let mut custom_a = Vec::new();
    let mut custom_b = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| CliError::csv(path, e))?;
        let num = |j: usize| parse_f64(&rec[j], path, row, &expected[j]);
        match scenario {
            Scenario::Joint | Scenario::JointWithCovariates => {
                let x_tilde = match d {
                    Some(d) if d > 0 => Some((0..d).map(|j| num(j + 2)).collect::<Result<Vec<_>, _>>()?),
                    _ => None,
                };
                joint.push(JointRecord {
                    y_tilde: num(0)?,
                    w_tilde: parse_bool(&rec[1], path, row, "w_tilde")?,
                    x_tilde,
                });
            }
            Scenario::CustomA => custom_a.push(CustomARecord { a_tilde: num(0)? }),
            Scenario::CustomB => custom_b.push(CustomBRecord::new(num(0)?, num(1)?, num(2)?)),
        }
    }
    Ok(match scenario {
        Scenario::Joint | Scenario::JointWithCovariates => Release::Joint(joint),
        Scenario::CustomA => Release::CustomA(custom_a),
        Scenario::CustomB => Release::CustomB(custom_b),
    })
}

pub fn write_release(path: &Path, scenario: Scenario, d: Option<usize>, release: &Release) -> Result<(), CliError> {
    let header = release_header(scenario, d);
    let rows: Vec<Vec<String>> = match release {
        Release::Joint(recs) => recs
            .iter()
            .map(|r| {
                let mut row = vec![fmt_f64(r.y_tilde), fmt_bool(r.w_tilde).to_string()];
                if let Some(x) = &r.x_tilde {
                    row.extend(x.iter().map(|&v| fmt_f64(v)));
                }
                row
            })
            .collect(),
        Release::CustomA(recs) => recs.iter().map(|r| vec![fmt_f64(r.a_tilde)]).collect(),
        Release::CustomB(recs) => recs
            .iter()
            .map(|r| vec![fmt_f64(r.b1), fmt_f64(r.b2), fmt_f64(r.b3)])
            .collect(),
    };
    write_csv(Some(path), &header, rows)
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| CliError::io(p, e))?)),
        None => Box::new(io::stdout().lock()),
    })
}

/// Writes a CSV table to `path`, or to stdout when `path` is `None`.
pub fn write_csv<I>(path: Option<&Path>, header: &[String], rows: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let shown = path.map_or_else(|| PathBuf::from("<stdout>"), Path::to_path_buf);
    let mut w = csv::Writer::from_writer(sink(path)?);
    w.write_record(header).map_err(|e| CliError::csv(&shown, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| CliError::csv(&shown, e))?;
    }
    w.flush().map_err(|e| CliError::io(&shown, e))
}

/// Pretty-printed JSON with a trailing newline; field order follows the
/// struct declaration.
pub fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<(), CliError> {
    let shown = path.map_or_else(|| PathBuf::from("<stdout>"), Path::to_path_buf);
    let mut out = sink(path)?;
    let text = serde_json::to_string_pretty(value).expect("report types always serialize");
    writeln!(out, "{text}").map_err(|e| CliError::io(&shown, e))?;
    out.flush().map_err(|e| CliError::io(&shown, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 123456789.125, f64::MIN_POSITIVE, -0.0] {
            let back: f64 = fmt_f64(x).parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{x}");
        }
    }

    #[test]
    fn manifest_path_appends_suffix() {
        assert_eq!(
            Manifest::path_for(Path::new("out/priv.csv")),
            PathBuf::from("out/priv.csv.manifest.json")
        );
    }

    #[test]
    fn headers_per_scenario() {
        assert_eq!(release_header(Scenario::CustomB, None), ["b1", "b2", "b3"]);
        assert_eq!(
            release_header(Scenario::JointWithCovariates, Some(2)),
            ["y_tilde", "w_tilde", "x_tilde_1", "x_tilde_2"]
        );
    }
}
