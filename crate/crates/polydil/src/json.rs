//! Shared JSON formats: operator tuples and residual ledgers.
//!
//! Tuple files are objects with fields `dim` (integer), `n` (integer), and
//! `ops` (list of `n` matrices; each matrix a list of `dim` rows; each row a
//! list of `dim` `[re, im]` pairs). Values are 64-bit floats; bit-exact
//! round-trips of decimal literals are not required.

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::tuple::{OperatorTuple, ValidationReport};
use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};

#[derive(Debug, Serialize, Deserialize)]
struct TupleJson {
    dim: usize,
    n: usize,
    ops: Vec<Vec<Vec<[f64; 2]>>>,
}

/// Parse a tuple file, validating shape, contractivity and commutativity.
pub fn tuple_from_json(s: &str, tol: &Tolerances) -> Result<(OperatorTuple, ValidationReport)> {
    let raw: TupleJson =
        serde_json::from_str(s).map_err(|e| Error::Parse(format!("tuple JSON: {e}")))?;
    if raw.ops.len() != raw.n {
        return Err(Error::Parse(format!(
            "tuple JSON: `n` is {} but `ops` holds {} matrices",
            raw.n,
            raw.ops.len()
        )));
    }
    let mut ops = Vec::with_capacity(raw.n);
    for (j, m) in raw.ops.iter().enumerate() {
        if m.len() != raw.dim || m.iter().any(|row| row.len() != raw.dim) {
            return Err(Error::Parse(format!(
                "tuple JSON: matrix {} is not {dim} x {dim}",
                j + 1,
                dim = raw.dim
            )));
        }
        ops.push(CMatrix::from_fn(raw.dim, raw.dim, |i, k| {
            C::new(m[i][k][0], m[i][k][1])
        }));
    }
    OperatorTuple::validated(ops, tol)
}

/// Serialize a tuple to the shared JSON format (pretty-printed).
pub fn tuple_to_json(t: &OperatorTuple) -> String {
    let ops = (1..=t.n())
        .map(|j| {
            let m = t.op(j);
            (0..t.dim)
                .map(|i| (0..t.dim).map(|k| [m.at(i, k).re, m.at(i, k).im]).collect())
                .collect()
        })
        .collect();
    let raw = TupleJson {
        dim: t.dim,
        n: t.n() as usize,
        ops,
    };
    serde_json::to_string_pretty(&raw).expect("tuple serialization cannot fail")
}

/// Read and validate a tuple file from disk.
pub fn read_tuple_file(
    path: &std::path::Path,
    tol: &Tolerances,
) -> Result<(OperatorTuple, ValidationReport)> {
    let s = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    tuple_from_json(&s, tol)
}

/// Write a tuple file to disk.
pub fn write_tuple_file(path: &std::path::Path, t: &OperatorTuple) -> Result<()> {
    std::fs::write(path, tuple_to_json(t))
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Serialize any ledger-like report (pretty-printed JSON).
pub fn to_json_pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serialization cannot fail")
}
