//! File formats: JSON reports and configs, CSV time series.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{MonitorRow, StepCertificate};

/// Column order of the trajectory CSV.
pub const TRAJECTORY_COLUMNS: [&str; 9] = [
    "step",
    "t",
    "tau_used",
    "energy",
    "w_xnorm",
    "u_xnorm_sigma",
    "u_linf",
    "dual_norm_ut",
    "cert_defect",
];

/// Serde adapter storing a `DVector<f64>` as a plain JSON array.
pub mod dvec {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

/// Same as [`dvec`] for a list of vectors.
pub mod dvec_list {
    use nalgebra::DVector;
    use serde::ser::SerializeSeq;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[DVector<f64>], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for x in v {
            seq.serialize_element(x.as_slice())?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<DVector<f64>>, D::Error> {
        let raw = Vec::<Vec<f64>>::deserialize(d)?;
        Ok(raw.into_iter().map(DVector::from_vec).collect())
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| missing(path, e))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

fn missing(path: &Path, e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::NotFound {
        Error::MissingInput(path.display().to_string())
    } else {
        Error::Io(e)
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("csv: {other:?}")),
    }
}

/// Streams monitor rows to disk, flushing after each row.
pub struct TrajectoryWriter {
    inner: csv::Writer<File>,
}

impl TrajectoryWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let inner = csv::WriterBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(csv_err)?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, row: &MonitorRow) -> Result<()> {
        self.inner.serialize(row).map_err(csv_err)?;
        self.inner.flush()?;
        Ok(())
    }
}

pub fn write_trajectory_csv(path: &Path, rows: &[MonitorRow]) -> Result<()> {
    let mut w = TrajectoryWriter::create(path)?;
    for row in rows {
        w.write(row)?;
    }
    Ok(())
}

pub fn read_trajectory_csv(path: &Path) -> Result<Vec<MonitorRow>> {
    let file = File::open(path).map_err(|e| missing(path, e))?;
    let mut rdr = csv::Reader::from_reader(BufReader::new(file));
    let headers = rdr.headers().map_err(csv_err)?.clone();
    if headers.iter().ne(TRAJECTORY_COLUMNS.iter().copied()) {
        return Err(Error::Config(format!(
            "{}: unexpected trajectory columns {:?}",
            path.display(),
            headers.iter().collect::<Vec<_>>()
        )));
    }
    rdr.deserialize().map(|r| r.map_err(csv_err)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateRow {
    pub step: usize,
    pub tau: f64,
    pub e_before: f64,
    pub e_after: f64,
    pub w_normsq: f64,
    pub du_msq: f64,
    pub lambda_half_du: f64,
    pub defect: f64,
    pub tol: f64,
    pub satisfied: bool,
}

impl CertificateRow {
    pub fn new(step: usize, c: &StepCertificate) -> Self {
        Self {
            step,
            tau: c.tau,
            e_before: c.e_before,
            e_after: c.e_after,
            w_normsq: c.w_normsq,
            du_msq: c.du_msq,
            lambda_half_du: c.lambda_half_du,
            defect: c.defect,
            tol: c.tol,
            satisfied: c.satisfied,
        }
    }
}

pub struct CertificateWriter {
    inner: csv::Writer<File>,
}

impl CertificateWriter {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(Self {
            inner: csv::Writer::from_path(path).map_err(csv_err)?,
        })
    }

    pub fn write(&mut self, step: usize, cert: &StepCertificate) -> Result<()> {
        self.inner
            .serialize(CertificateRow::new(step, cert))
            .map_err(csv_err)?;
        self.inner.flush()?;
        Ok(())
    }
}

/// Writes `header` then one row per record; every record must match the
/// header width.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::Dimension {
                expected: header.len(),
                got: row.len(),
            });
        }
        w.write_record(row.iter().map(|x| format!("{x:e}")))
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
