//! File formats: model JSON, dataset CSV with a JSON sidecar, and JSON-lines
//! certificates and attack results. Every writer goes through
//! [`write_atomic`], so a failed run never leaves a partial file behind.
//!
//! Floats are written in Rust's shortest round-trip form, so every value
//! reads back bit for bit.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vsensor_core::{AttackResult, BoundPair, Certificate, Dataset, DenseNet, Generator, Method, Mode, Status};

use crate::error::{format_err, io_err, Error, Result};

/// Writes to a temporary sibling and renames it over `path` on success.
pub fn write_atomic(path: &Path, write: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let name = path
        .file_name()
        .ok_or_else(|| format_err(path, "not a file path"))?
        .to_string_lossy();
    let tmp = dir.join(format!(".{name}.tmp"));
    let result = (|| {
        let mut out = BufWriter::new(File::create(&tmp)?);
        write(&mut out)?;
        out.into_inner().map_err(|e| e.into_error())?.sync_all()
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::Io {
            path: path.to_path_buf(),
            source: e,
        });
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")
    })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_to_string(path)?).map_err(|e| format_err(path, e))
}

pub(crate) mod mode_name {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};
    use vsensor_core::Mode;

    pub fn serialize<S: Serializer>(mode: &Mode, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(mode.as_str())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mode, D::Error> {
        let s = String::deserialize(d)?;
        Mode::parse(&s).ok_or_else(|| D::Error::custom(format!("unknown training mode `{s}`")))
    }
}

/// Training provenance stored next to the weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    #[serde(with = "mode_name")]
    pub mode: Mode,
    pub seed: u64,
    pub eps_series: f64,
    pub eps_scalar: f64,
    pub lambda: f64,
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    input_dim: usize,
    hidden_dim: usize,
    #[serde(rename = "W1")]
    w1: Vec<Vec<f64>>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: f64,
    meta: ModelMeta,
}

pub fn save_model(path: &Path, net: &DenseNet, meta: &ModelMeta) -> Result<()> {
    let doc = ModelDoc {
        input_dim: net.input_dim(),
        hidden_dim: net.hidden_dim(),
        w1: (0..net.hidden_dim()).map(|j| net.row(j).to_vec()).collect(),
        b1: net.b1.clone(),
        w2: net.w2.clone(),
        b2: net.b2,
        meta: *meta,
    };
    write_json(path, &doc)
}

pub fn load_model(path: &Path) -> Result<(DenseNet, ModelMeta)> {
    let doc: ModelDoc = read_json(path)?;
    if doc.w1.len() != doc.hidden_dim || doc.w1.iter().any(|r| r.len() != doc.input_dim) {
        return Err(format_err(path, "W1 does not have shape hidden_dim x input_dim"));
    }
    let w1 = doc.w1.concat();
    let net = DenseNet::from_parts(doc.input_dim, doc.hidden_dim, w1, doc.b1, doc.w2, doc.b2)
        .map_err(|e| format_err(path, e))?;
    Ok((net, doc.meta))
}

/// Column names for a dataset with `k` features.
pub fn dataset_header(k: usize) -> Vec<String> {
    (0..k - 1)
        .map(|t| format!("s_{t}"))
        .chain(["p".to_string(), "y".to_string()])
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSidecar {
    #[serde(rename = "K")]
    pub k: usize,
    pub n: usize,
    pub seed: Option<u64>,
    pub generator_version: Option<u32>,
    pub y_min: Option<f64>,
    pub noise_sigma: Option<f64>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Writes the CSV and its sidecar. `generator` records the parameters when
/// the data is synthetic.
pub fn save_dataset(path: &Path, ds: &Dataset, generator: Option<&Generator>) -> Result<()> {
    let k = ds.input_dim();
    write_atomic(path, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(dataset_header(k))?;
        let mut fields = Vec::with_capacity(k + 1);
        for ex in ds.examples() {
            fields.clear();
            fields.extend(ex.x.iter().chain([&ex.y]).map(|v| v.to_string()));
            out.write_record(&fields)?;
        }
        out.flush()
    })?;
    let sidecar = DatasetSidecar {
        k,
        n: ds.len(),
        seed: ds.meta.seed,
        generator_version: ds.meta.generator_version,
        y_min: generator.map(|g| g.y_min),
        noise_sigma: generator.map(|g| g.noise_sigma),
    };
    write_json(&sidecar_path(path), &sidecar)
}

/// Reads a dataset CSV; the sidecar is optional.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let header = reader.headers().map_err(|e| format_err(path, e))?.clone();
    let k = header.len().saturating_sub(1);
    if k < 2 || header.iter().collect::<Vec<_>>() != dataset_header(k) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            row: 1,
            msg: "header must be s_0,...,s_{K-2},p,y".into(),
        });
    }
    let mut x = Vec::new();
    let mut y = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| format_err(path, e))?;
        let row = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            row,
            msg,
        };
        if rec.len() != k + 1 {
            return Err(bad(format!("expected {} columns, found {}", k + 1, rec.len())));
        }
        for (i, field) in rec.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| bad(format!("column {} is not a number: `{field}`", &header[i])))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(bad(format!("column {} = {v} outside [0, 1]", &header[i])));
            }
            if i < k {
                x.push(v);
            } else {
                y.push(v);
            }
        }
    }
    let mut ds = Dataset::new(k, x, y).map_err(|e| format_err(path, e))?;
    let side = sidecar_path(path);
    if side.exists() {
        let meta: DatasetSidecar = read_json(&side)?;
        if meta.k != k || meta.n != ds.len() {
            return Err(format_err(&side, "sidecar does not match the CSV shape"));
        }
        ds.meta.seed = meta.seed;
        ds.meta.generator_version = meta.generator_version;
    }
    Ok(ds)
}

#[derive(Serialize, Deserialize)]
struct CertLine {
    example_id: usize,
    method: String,
    lower: f64,
    upper: f64,
    witness_max: Option<Vec<f64>>,
    witness_min: Option<Vec<f64>>,
    node_count: usize,
    status: String,
}

fn write_lines<T: Serialize>(path: &Path, items: impl Iterator<Item = T>) -> Result<()> {
    write_atomic(path, |w| {
        for item in items {
            serde_json::to_writer(&mut *w, &item)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            row: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn save_certificates(path: &Path, certs: &[Certificate]) -> Result<()> {
    write_lines(
        path,
        certs.iter().map(|c| CertLine {
            example_id: c.example_id,
            method: c.method.as_str().into(),
            lower: c.bounds.lower,
            upper: c.bounds.upper,
            witness_max: c.witness_max.clone(),
            witness_min: c.witness_min.clone(),
            node_count: c.node_count,
            status: c.status.as_str().into(),
        }),
    )
}

pub fn load_certificates(path: &Path) -> Result<Vec<Certificate>> {
    read_lines::<CertLine>(path)?
        .into_iter()
        .enumerate()
        .map(|(i, l)| {
            let bad = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                row: i + 1,
                msg,
            };
            Ok(Certificate {
                example_id: l.example_id,
                method: Method::parse(&l.method).ok_or_else(|| bad(format!("unknown method `{}`", l.method)))?,
                bounds: BoundPair {
                    lower: l.lower,
                    upper: l.upper,
                },
                witness_max: l.witness_max,
                witness_min: l.witness_min,
                node_count: l.node_count,
                status: Status::parse(&l.status).ok_or_else(|| bad(format!("unknown status `{}`", l.status)))?,
            })
        })
        .collect()
}

/// One PGD outcome as stored by the `attack` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRecord {
    pub example_id: usize,
    pub y: f64,
    pub clean_output: f64,
    pub output: f64,
    pub relative_error: f64,
    pub input: Vec<f64>,
}

impl AttackRecord {
    pub fn new(example_id: usize, y: f64, clean_output: f64, r: AttackResult) -> Self {
        Self {
            example_id,
            y,
            clean_output,
            output: r.output,
            relative_error: r.relative_error,
            input: r.input,
        }
    }
}

pub fn save_attacks(path: &Path, records: &[AttackRecord]) -> Result<()> {
    write_lines(path, records.iter())
}

pub fn load_attacks(path: &Path) -> Result<Vec<AttackRecord>> {
    read_lines(path)
}
