//! File formats: CSV datasets and point lists, JSON bundles and models.
//!
//! Datasets are CSV with header `x1,...,xd,y`. A bundle manifest is a JSON
//! document `{"levels": [{"label": ..., "path": ...}, ...]}` listing one
//! dataset per fidelity level, lowest first; relative paths resolve against
//! the manifest's directory.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kriging::{Dataset, DesignPoint, Prediction};
use crate::multifidelity::{FidelityLevel, MultiFidelityDataset, MultiFidelityModel};

pub const BUNDLE_MANIFEST: &str = "bundle.json";

fn coord_header(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("x{i}")).collect()
}

fn parse_field(s: &str, line: usize) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::Format(format!("line {line}: `{s}` is not a number")))?;
    if !v.is_finite() {
        return Err(Error::Format(format!("line {line}: non-finite value `{s}`")));
    }
    Ok(v)
}

/// Checks that `header` is `x1..xd` optionally followed by `trailing`.
fn coord_columns(header: &csv::StringRecord, trailing: &[&str]) -> Result<usize> {
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let d = names
        .iter()
        .take_while(|n| !trailing.contains(n))
        .count();
    let expected: Vec<String> = coord_header(d)
        .into_iter()
        .chain(trailing.iter().map(|s| s.to_string()))
        .collect();
    if d == 0 || names != expected {
        return Err(Error::Format(format!(
            "expected header `{}`, got `{}`",
            expected.join(","),
            names.join(",")
        )));
    }
    Ok(d)
}

fn read_rows<R: Read>(reader: R, trailing: &[&str]) -> Result<(usize, Vec<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let d = coord_columns(rdr.headers()?, trailing)?;
    let width = d + trailing.len();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != width {
            return Err(Error::Format(format!(
                "line {line}: expected {width} fields, got {}",
                rec.len()
            )));
        }
        rows.push(rec.iter().map(|s| parse_field(s, line)).collect::<Result<Vec<_>>>()?);
    }
    Ok((d, rows))
}

pub fn read_dataset<R: Read>(reader: R) -> Result<Dataset> {
    let (d, rows) = read_rows(reader, &["y"])?;
    let mut points = Vec::with_capacity(rows.len());
    let mut y = Vec::with_capacity(rows.len());
    for mut row in rows {
        y.push(row.pop().expect("row has d + 1 fields"));
        debug_assert_eq!(row.len(), d);
        points.push(DesignPoint::new(row)?);
    }
    Dataset::new(points, y)
}

pub fn read_dataset_file(path: impl AsRef<Path>) -> Result<Dataset> {
    read_dataset(fs::File::open(path)?)
}

pub fn write_dataset<W: Write>(writer: W, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = coord_header(data.dim());
    header.push("y".into());
    w.write_record(&header)?;
    for (x, y) in data.iter() {
        w.write_record(x.iter().chain(std::iter::once(&y)).map(f64::to_string))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset_file(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    write_dataset(fs::File::create(path)?, data)
}

/// Points from a CSV with header `x1..xd`; a trailing `y` column is ignored.
pub fn read_points<R: Read>(reader: R) -> Result<Vec<DesignPoint>> {
    let mut buf = String::new();
    let mut reader = reader;
    reader.read_to_string(&mut buf)?;
    let first = buf.lines().next().unwrap_or_default();
    let trailing: &[&str] = if first.split(',').last().map(str::trim) == Some("y") {
        &["y"]
    } else {
        &[]
    };
    let (_, rows) = read_rows(buf.as_bytes(), trailing)?;
    if rows.is_empty() {
        return Err(Error::invalid("point file has no rows"));
    }
    rows.into_iter()
        .map(|mut r| {
            r.truncate(r.len() - trailing.len());
            DesignPoint::new(r)
        })
        .collect()
}

pub fn read_points_file(path: impl AsRef<Path>) -> Result<Vec<DesignPoint>> {
    read_points(fs::File::open(path)?)
}

pub fn write_points<W: Write>(writer: W, points: &[DesignPoint]) -> Result<()> {
    let d = points.first().map_or(0, |p| p.dim());
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(coord_header(d))?;
    for p in points {
        w.write_record(p.iter().map(f64::to_string))?;
    }
    w.flush()?;
    Ok(())
}

/// Rows `x1..xd,mean,variance`.
pub fn write_predictions<W: Write>(
    writer: W,
    points: &[DesignPoint],
    predictions: &[Prediction],
) -> Result<()> {
    if points.len() != predictions.len() {
        return Err(Error::invalid("one prediction per point required"));
    }
    let d = points.first().map_or(0, |p| p.dim());
    let mut w = csv::Writer::from_writer(writer);
    let mut header = coord_header(d);
    header.extend(["mean".to_string(), "variance".to_string()]);
    w.write_record(&header)?;
    for (p, pred) in points.iter().zip(predictions) {
        w.write_record(
            p.iter()
                .chain([&pred.mean, &pred.variance])
                .map(f64::to_string),
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a predictions CSV back into `(points, predictions)`.
pub fn read_predictions<R: Read>(reader: R) -> Result<(Vec<DesignPoint>, Vec<Prediction>)> {
    let (_, rows) = read_rows(reader, &["mean", "variance"])?;
    let mut points = Vec::with_capacity(rows.len());
    let mut preds = Vec::with_capacity(rows.len());
    for mut row in rows {
        let variance = row.pop().expect("variance column");
        let mean = row.pop().expect("mean column");
        points.push(DesignPoint::new(row)?);
        preds.push(Prediction { mean, variance });
    }
    Ok((points, preds))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleEntry {
    pub label: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub levels: Vec<BundleEntry>,
}

fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(BUNDLE_MANIFEST)
    } else {
        path.to_path_buf()
    }
}

/// Loads a bundle from a manifest file or a directory holding `bundle.json`.
pub fn read_bundle(path: impl AsRef<Path>) -> Result<MultiFidelityDataset> {
    let manifest = manifest_path(path.as_ref());
    let doc: BundleManifest = read_json(&manifest)?;
    if doc.levels.is_empty() {
        return Err(Error::invalid("bundle lists no levels"));
    }
    let base = manifest.parent().unwrap_or_else(|| Path::new("."));
    let levels = doc
        .levels
        .into_iter()
        .map(|e| {
            let file = base.join(&e.path);
            let data = read_dataset_file(&file).map_err(|err| match err {
                Error::Io(io) => Error::Io(std::io::Error::new(
                    io.kind(),
                    format!("{}: {io}", file.display()),
                )),
                other => other,
            })?;
            Ok(FidelityLevel { label: e.label, data })
        })
        .collect::<Result<Vec<_>>>()?;
    MultiFidelityDataset::new(levels)
}

/// Writes `level{t}.csv` files and `bundle.json` into `dir`.
pub fn write_bundle(dir: impl AsRef<Path>, data: &MultiFidelityDataset) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(data.top());
    for (i, level) in data.levels().iter().enumerate() {
        let name = PathBuf::from(format!("level{}.csv", i + 1));
        write_dataset_file(dir.join(&name), &level.data)?;
        entries.push(BundleEntry {
            label: level.label.clone(),
            path: name,
        });
    }
    let manifest = dir.join(BUNDLE_MANIFEST);
    write_json(&manifest, &BundleManifest { levels: entries })?;
    Ok(manifest)
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?;
    Ok(serde_json::from_str(&text)?)
}

/// Pretty JSON with a trailing newline.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    fs::write(path, to_json_string(value)?)?;
    Ok(())
}

pub fn save_model(path: impl AsRef<Path>, model: &MultiFidelityModel) -> Result<()> {
    write_json(path, model)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MultiFidelityModel> {
    read_json(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_csv_round_trip_is_exact() {
        let data = Dataset::new(
            vec![
                DesignPoint::new(vec![0.1, -3.0]).unwrap(),
                DesignPoint::new(vec![1.0 / 3.0, 2e-17]).unwrap(),
            ],
            vec![std::f64::consts::PI, -0.0],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &data).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("x1,x2,y\n"));
        assert_eq!(read_dataset(buf.as_slice()).unwrap(), data);
    }

    #[test]
    fn bad_headers() {
        for text in ["a,y\n1,2\n", "x1,x3,y\n1,2,3\n", "x1\n1\n", "y\n1\n"] {
            assert!(matches!(read_dataset(text.as_bytes()), Err(Error::Format(_))), "{text}");
        }
    }

    #[test]
    fn bad_fields() {
        assert!(matches!(read_dataset("x1,y\n1,abc\n".as_bytes()), Err(Error::Format(_))));
        assert!(matches!(read_dataset("x1,y\n1,NaN\n".as_bytes()), Err(Error::Format(_))));
        assert!(read_dataset("x1,y\n1,2,3\n".as_bytes()).is_err());
    }

    #[test]
    fn duplicate_rows_rejected() {
        assert!(matches!(
            read_dataset("x1,y\n1,2\n1,3\n".as_bytes()),
            Err(Error::DuplicatePoint { row: 1, earlier: 0 })
        ));
    }

    #[test]
    fn points_with_or_without_y() {
        let a = read_points("x1,x2\n1,2\n3,4\n".as_bytes()).unwrap();
        let b = read_points("x1,x2,y\n1,2,9\n3,4,9\n".as_bytes()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        assert!(read_points("x1\n".as_bytes()).is_err());
    }

    #[test]
    fn predictions_round_trip() {
        let pts = vec![DesignPoint::scalar(0.5), DesignPoint::scalar(-1.25)];
        let preds = vec![
            Prediction { mean: 1.0 / 7.0, variance: 0.0 },
            Prediction { mean: -2.0, variance: 1e-300 },
        ];
        let mut buf = Vec::new();
        write_predictions(&mut buf, &pts, &preds).unwrap();
        let (p2, q2) = read_predictions(buf.as_slice()).unwrap();
        assert_eq!(p2, pts);
        assert_eq!(q2, preds);
    }

    #[test]
    fn bundle_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let data = crate::scenarios::design_1d().unwrap();
        let manifest = write_bundle(dir.path(), &data).unwrap();
        assert_eq!(read_bundle(dir.path()).unwrap(), data);
        assert_eq!(read_bundle(&manifest).unwrap(), data);
    }

    #[test]
    fn missing_level_file_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join(BUNDLE_MANIFEST),
            r#"{"levels": [{"label": "a", "path": "nope.csv"}]}"#,
        )
        .unwrap();
        let err = read_bundle(dir.path()).unwrap_err();
        assert!(err.to_string().contains("nope.csv"));
    }
}
