//! Tensor JSON documents: `{"p", "q", "matrices": [[q·q row-major], ...], "labels"?}`.
//! Entries may be JSON numbers or decimal strings.

use std::fmt;
use std::path::Path;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::tensor::StructureTensor;

struct Entry(f64);

impl<'de> Deserialize<'de> for Entry {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Entry;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or a decimal string")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Entry, E> {
                Ok(Entry(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Entry, E> {
                Ok(Entry(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Entry, E> {
                Ok(Entry(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Entry, E> {
                match v.trim().parse::<f64>() {
                    Ok(x) if x.is_finite() => Ok(Entry(x)),
                    _ => Err(E::custom(format!("`{v}` is not a finite decimal"))),
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorDoc {
    p: usize,
    q: usize,
    matrices: Vec<Vec<Entry>>,
    #[serde(default)]
    labels: Option<serde_json::Value>,
}

#[derive(Serialize)]
struct TensorOut<'a> {
    p: usize,
    q: usize,
    matrices: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    labels: Option<&'a serde_json::Value>,
}

/// Parses a tensor document. Syntax and type errors carry line and column;
/// shape errors name the offending field.
pub fn parse_tensor(text: &str) -> Result<StructureTensor> {
    let doc: TensorDoc = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    if doc.matrices.len() != doc.p {
        return Err(Error::Format(format!(
            "field `matrices` has {} entries, expected p = {}",
            doc.matrices.len(),
            doc.p
        )));
    }
    for (i, m) in doc.matrices.iter().enumerate() {
        if m.len() != doc.q * doc.q {
            return Err(Error::Format(format!(
                "field `matrices[{i}]` has {} entries, expected q*q = {}",
                m.len(),
                doc.q * doc.q
            )));
        }
    }
    let data: Vec<Vec<f64>> = doc.matrices.into_iter().map(|m| m.into_iter().map(|e| e.0).collect()).collect();
    Ok(StructureTensor::from_row_major(doc.p, doc.q, &data)?.with_labels(doc.labels))
}

fn tensor_out(c: &StructureTensor) -> TensorOut<'_> {
    TensorOut {
        p: c.p(),
        q: c.q(),
        matrices: c.to_row_major(),
        labels: c.labels(),
    }
}

pub fn tensor_json(c: &StructureTensor) -> String {
    serde_json::to_string_pretty(&tensor_out(c)).expect("tensor serialization cannot fail")
}

/// The tensor document as a JSON value, for embedding in larger outputs.
pub fn tensor_value(c: &StructureTensor) -> serde_json::Value {
    serde_json::to_value(tensor_out(c)).expect("tensor serialization cannot fail")
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

pub fn read_tensor(path: &Path) -> Result<StructureTensor> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_tensor(&text).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn write_tensor(path: &Path, c: &StructureTensor) -> Result<()> {
    write_text(path, &(tensor_json(c) + "\n"))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}
