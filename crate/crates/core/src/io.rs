//! Plain-text file formats.
//!
//! * Matrices: headerless CSV, one row per line, 17 significant digits, LF.
//! * Graphs: `#nodes=p` followed by `i<TAB>j<TAB>weight` lines for `i < j`.
//! * Solver logs and benchmark reports: CSV with a header row.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::ExperimentReport;
use crate::graph::{Adjacency, Matrix};
use crate::graph_update::OuterRecord;
use crate::lowrank::IterationRecord;

pub const REPORT_HEADER: &str = "method,lowrank_error,graph_error,rank,seed,wall_time_s";
pub const DIAGNOSTICS_HEADER: &str = "outer_iter,iteration,objective,primal_residual,dual_residual,rho";
pub const OUTER_HEADER: &str = "outer_iter,eq4_objective,lowrank_rel_change,graph_rel_change";

/// Shortest round-trippable form is not enough digits for the format, so
/// print 17 significant digits in scientific notation.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn matrix_to_csv(m: &Matrix) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|&v| format_float(v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn matrix_from_csv(text: &str, path: &Path) -> Result<Matrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            msg,
        };
        let row = line
            .split(',')
            .map(|field| {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(format!("cannot parse '{}' as a number", field.trim())))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(parse_err(format!("non-finite value '{}'", field.trim())))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(format!("expected {} columns, found {}", first.len(), row.len())));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: "no data rows".into(),
        });
    }
    let cols = rows[0].len();
    Ok(Matrix::from_row_iterator(rows.len(), cols, rows.into_iter().flatten()))
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    matrix_from_csv(&text, path)
}

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    write_text(path, &matrix_to_csv(m))
}

pub fn edge_list_to_string(w: &Adjacency) -> String {
    let mut out = format!("#nodes={}\n", w.nodes());
    for (i, j, v) in w.edges() {
        let _ = writeln!(out, "{i}\t{j}\t{}", format_float(v));
    }
    out
}

pub fn edge_list_from_str(text: &str, path: &Path) -> Result<Adjacency> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty graph file".into()))?;
    let p: usize = header
        .trim()
        .strip_prefix("#nodes=")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| parse_err(1, format!("expected '#nodes=<p>' header, found '{}'", header.trim())))?;
    let mut edges = Vec::new();
    for (idx, line) in lines {
        let fields: Vec<&str> = line.trim_end_matches('\r').split('\t').collect();
        if fields.len() != 3 {
            return Err(parse_err(idx + 1, format!("expected 3 tab-separated fields, found {}", fields.len())));
        }
        let i: usize = fields[0].trim().parse().map_err(|_| parse_err(idx + 1, "bad node index".into()))?;
        let j: usize = fields[1].trim().parse().map_err(|_| parse_err(idx + 1, "bad node index".into()))?;
        let w: f64 = fields[2].trim().parse().map_err(|_| parse_err(idx + 1, "bad weight".into()))?;
        if i >= j {
            return Err(parse_err(idx + 1, format!("edge ({i}, {j}) must have i < j")));
        }
        edges.push((i, j, w));
    }
    Adjacency::from_edges(p, edges)
}

pub fn read_edge_list(path: &Path) -> Result<Adjacency> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    edge_list_from_str(&text, path)
}

pub fn write_edge_list(path: &Path, w: &Adjacency) -> Result<()> {
    write_text(path, &edge_list_to_string(w))
}

pub fn diagnostics_to_csv(steps: &[(usize, &[IterationRecord])]) -> String {
    let mut out = format!("{DIAGNOSTICS_HEADER}\n");
    for (outer, records) in steps {
        for r in records.iter() {
            let _ = writeln!(
                out,
                "{outer},{},{},{},{},{}",
                r.iteration,
                format_float(r.objective),
                format_float(r.primal_residual),
                format_float(r.dual_residual),
                format_float(r.rho)
            );
        }
    }
    out
}

pub fn outer_log_to_csv(records: &[OuterRecord]) -> String {
    let mut out = format!("{OUTER_HEADER}\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.outer_iter,
            format_float(r.objective),
            format_float(r.lowrank_rel_change),
            format_float(r.graph_rel_change)
        );
    }
    out
}

pub fn reports_to_csv(reports: &[ExperimentReport]) -> String {
    let mut out = format!("{REPORT_HEADER}\n");
    for r in reports {
        let graph = r.graph_error.map(format_float).unwrap_or_default();
        let lowrank = if r.succeeded() {
            format_float(r.lowrank_error)
        } else {
            "failed".to_string()
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.6}",
            r.method, lowrank, graph, r.rank, r.seed, r.wall_time
        );
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::Method;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn matrix_csv_round_trips(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let m = Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1e6..1e6) * 10f64.powi(rng.random_range(-20..20)));
            let back = matrix_from_csv(&matrix_to_csv(&m), Path::new("mem")).unwrap();
            prop_assert_eq!(back, m);
        }

        #[test]
        fn edge_list_round_trips(p in 2usize..8, seed in any::<u64>()) {
            let w = crate::synth::gen_er_graph(p, 0.5, seed).unwrap();
            let back = edge_list_from_str(&edge_list_to_string(&w), Path::new("mem")).unwrap();
            prop_assert_eq!(back, w);
        }
    }

    #[test]
    fn csv_format_details() {
        let m = Matrix::from_row_slice(2, 2, &[0.1, -2.0, 3.5e-9, 0.0]);
        let text = matrix_to_csv(&m);
        assert_eq!(text.lines().count(), 2);
        assert!(text.ends_with('\n') && !text.contains('\r'));
        let first = text.lines().next().unwrap().split(',').next().unwrap();
        let mantissa = first.split('e').next().unwrap().replace(['.', '-'], "");
        assert!(mantissa.len() >= 15);
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        match matrix_from_csv("1,2\n3\n", Path::new("x.csv")) {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(matrix_from_csv("1,nan\n", Path::new("x.csv")).is_err());
        assert!(matrix_from_csv("\n", Path::new("x.csv")).is_err());
    }

    #[test]
    fn edge_list_layout() {
        let w = Adjacency::from_edges(3, [(0, 2, 0.5)]).unwrap();
        let text = edge_list_to_string(&w);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("#nodes=3"));
        assert_eq!(lines.next(), Some("0\t2\t5.0000000000000000e-1"));
        assert!(edge_list_from_str("#nodes=2\n1\t0\t1.0\n", Path::new("g")).is_err());
        assert!(edge_list_from_str("0\t1\t1.0\n", Path::new("g")).is_err());
    }

    #[test]
    fn report_csv_layout() {
        let r = ExperimentReport {
            method: Method::Rpca,
            lowrank_error: 0.5,
            graph_error: None,
            rank: 3,
            seed: 7,
            wall_time: 0.25,
            failure: None,
        };
        let text = reports_to_csv(&[r]);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(REPORT_HEADER));
        assert_eq!(lines.next(), Some("rpca,5.0000000000000000e-1,,3,7,0.250000"));
    }
}
