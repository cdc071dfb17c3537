//! Artifact writers. Every file carries the digest of the configuration that
//! produced it: CSV files in a leading `# config_digest:` comment, JSON files
//! in a `config_digest` key.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;

use crate::dynamics::Trajectory;
use crate::spatial::Grid1D;

/// Long format: one row per `(t, x)` with columns `t,x,u,v`.
pub fn trajectory_csv(traj: &Trajectory, grid: &Grid1D) -> String {
    let n = grid.n_interior();
    let mut out = String::with_capacity(traj.states.len() * n * 48);
    let _ = writeln!(out, "# config_digest: {}", traj.config_digest);
    out.push_str("t,x,u,v\n");
    for s in &traj.states {
        for i in 0..n {
            let _ = writeln!(out, "{},{},{},{}", s.t, grid.x(i), s.u[i], s.v[i]);
        }
    }
    out
}

pub fn write_trajectory_csv(path: &Path, traj: &Trajectory, grid: &Grid1D) -> io::Result<()> {
    fs::write(path, trajectory_csv(traj, grid))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    s.push('\n');
    fs::write(path, s)
}

/// Run manifest: what was run, on which configuration, and what was written.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_digest: String,
    pub model: serde_json::Value,
    pub seed: u64,
    pub files: Vec<String>,
    pub warnings: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, config_digest: &str, model: serde_json::Value, seed: u64) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            config_digest: config_digest.into(),
            model,
            seed,
            files: Vec::new(),
            warnings: Vec::new(),
        }
    }
}

/// A table with a header row, written as CSV after the digest comment.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Table {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self, config_digest: &str) -> String {
        let mut out = format!("# config_digest: {config_digest}\n");
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|c| escape(c)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

fn escape(cell: &str) -> String {
    if cell.contains([',', '"', '\n']) {
        format!("\"{}\"", cell.replace('"', "\"\""))
    } else {
        cell.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::SystemState;
    use crate::spatial::Field;

    #[test]
    fn csv_layout() {
        let grid = Grid1D::new(1.0, 3).unwrap();
        let traj = Trajectory {
            states: vec![
                SystemState::zero(&grid),
                SystemState {
                    t: 0.5,
                    u: Field::from_vec(vec![1.0, 2.0, 3.0]),
                    v: Field::from_vec(vec![-1.0, 0.0, 0.25]),
                },
            ],
            dt: 0.5,
            config_digest: "abcd".into(),
        };
        let csv = trajectory_csv(&traj, &grid);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "# config_digest: abcd");
        assert_eq!(lines[1], "t,x,u,v");
        assert_eq!(lines.len(), 2 + 6);
        assert_eq!(lines[2], "0,0.25,0,0");
        assert_eq!(lines[7], "0.5,0.75,3,0.25");
    }

    #[test]
    fn table_escapes_cells() {
        let mut t = Table::new(["a", "b"]);
        t.push(vec!["1".into(), "x, \"y\"".into()]);
        assert_eq!(t.to_csv("d"), "# config_digest: d\na,b\n1,\"x, \"\"y\"\"\"\n");
    }
}
