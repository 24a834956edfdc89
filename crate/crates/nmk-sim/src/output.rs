//! Artifact writers. Every file is written to a temporary sibling and renamed
//! into place, and no output carries wall-clock data.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use nmk_core::dynamics::Trajectory;
use nmk_core::fock::SparseOperator;
use nmk_core::linalg::CMat;

/// 17 significant digits: round-trips every `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(io::Error::other)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> io::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| io::Error::other(e.to_string()))
}

/// `t`, then `Re/Im ρ_ij` for `i ≤ j`, then `μ^(1)`, `μ^(2)` per bath, then
/// the state norm.
pub fn trajectory_csv(traj: &Trajectory) -> io::Result<Vec<u8>> {
    let n = traj.rho.first().map_or(0, CMat::dim);
    let baths = traj.moments.first().map_or(0, Vec::len);
    let mut header = vec!["t".to_string()];
    for i in 0..n {
        for j in i..n {
            header.push(format!("rho_{i}_{j}_re"));
            header.push(format!("rho_{i}_{j}_im"));
        }
    }
    for b in 0..baths {
        header.push(format!("mu1_bath{b}"));
        header.push(format!("mu2_bath{b}"));
    }
    header.push("norm".into());
    let rows: Vec<Vec<String>> = (0..traj.times.len())
        .map(|k| {
            let mut row = vec![fmt_f64(traj.times[k])];
            for i in 0..n {
                for j in i..n {
                    let z = traj.rho[k].get(i, j);
                    row.push(fmt_f64(z.re));
                    row.push(fmt_f64(z.im));
                }
            }
            for &(m1, m2) in &traj.moments[k] {
                row.push(fmt_f64(m1));
                row.push(fmt_f64(m2));
            }
            row.push(fmt_f64(traj.norms[k]));
            row
        })
        .collect();
    csv_bytes(&header, &rows)
}

/// `t`, `trace_distance`, then chain and oracle populations per level.
pub fn comparison_csv(times: &[f64], chain: &[CMat], oracle: &[CMat], distances: &[f64]) -> io::Result<Vec<u8>> {
    let n = chain.first().map_or(0, CMat::dim);
    let mut header = vec!["t".to_string(), "trace_distance".to_string()];
    header.extend((0..n).map(|i| format!("chain_p{i}")));
    header.extend((0..n).map(|i| format!("oracle_p{i}")));
    let rows: Vec<Vec<String>> = (0..times.len())
        .map(|k| {
            let mut row = vec![fmt_f64(times[k]), fmt_f64(distances[k])];
            row.extend((0..n).map(|i| fmt_f64(chain[k].get(i, i).re)));
            row.extend((0..n).map(|i| fmt_f64(oracle[k].get(i, i).re)));
            row
        })
        .collect();
    csv_bytes(&header, &rows)
}

pub fn table_csv(header: &[&str], rows: &[Vec<String>]) -> io::Result<Vec<u8>> {
    let header: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    csv_bytes(&header, rows)
}

/// Matrix Market coordinate format, one-based indices, rows in order.
pub fn matrix_market(op: &SparseOperator) -> Vec<u8> {
    let mut s = String::from("%%MatrixMarket matrix coordinate complex general\n");
    s.push_str(&format!("{} {} {}\n", op.dim(), op.dim(), op.nnz()));
    for (i, j, z) in op.entries() {
        s.push_str(&format!("{} {} {} {}\n", i + 1, j + 1, fmt_f64(z.re), fmt_f64(z.im)));
    }
    s.into_bytes()
}
