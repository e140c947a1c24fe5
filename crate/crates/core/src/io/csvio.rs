//! CSV persistence for trajectories, derived observables, and loss
//! histories. Column names derive deterministically from the feature
//! layouts; floats render with Rust's shortest round-trip formatting so
//! identical runs produce byte-identical files.

use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::models::SystemSpec;
use crate::oracle::{TimeGrid, Trajectory};
use crate::training::{coherence_l1, concurrence, expectation, fidelity, LossBreakdown};

/// Prefix operator feature labels: `re_12` → `re_O12`.
pub fn operator_columns(spec: &SystemSpec, which: char) -> Vec<String> {
    let layout = if which == 'O' { &spec.o_layout } else { &spec.q_layout };
    layout
        .labels()
        .into_iter()
        .map(|l| {
            let (kind, idx) = l.split_once('_').expect("label shape");
            format!("{kind}_{which}{idx}")
        })
        .collect()
}

pub fn density_columns(spec: &SystemSpec) -> Vec<String> {
    spec.rho_layout.labels()
}

fn write_rows(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        let mut first = true;
        for v in row {
            if !first {
                out.push(',');
            }
            out.push_str(&format!("{v}"));
            first = false;
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Write an operator trajectory as `t` plus its named feature columns.
pub fn write_operator_csv(
    path: &Path,
    traj: &Trajectory,
    spec: &SystemSpec,
    which: char,
) -> Result<()> {
    let layout = if which == 'O' { &spec.o_layout } else { &spec.q_layout };
    let mut header = vec!["t".to_string()];
    header.extend(operator_columns(spec, which));
    let rows = traj.grid.times().iter().zip(&traj.values).map(|(t, m)| {
        let mut row = vec![*t];
        row.extend(layout.to_features(m).expect("trajectory matches layout"));
        row
    });
    write_rows(path, &header, rows)
}

/// Write a density trajectory as `t` plus its canonical feature columns.
pub fn write_density_csv(path: &Path, traj: &Trajectory, spec: &SystemSpec) -> Result<()> {
    let mut header = vec!["t".to_string()];
    header.extend(density_columns(spec));
    let rows = traj.grid.times().iter().zip(&traj.values).map(|(t, m)| {
        let mut row = vec![*t];
        row.extend(spec.rho_layout.to_features(m).expect("trajectory matches layout"));
        row
    });
    write_rows(path, &header, rows)
}

/// Derived scalars along a density trajectory: ⟨σ_z⟩ for two-level systems,
/// coherence and concurrence for two qubits, plus fidelity against an
/// optional reference trajectory.
pub fn write_observables_csv(
    path: &Path,
    traj: &Trajectory,
    spec: &SystemSpec,
    reference: Option<&Trajectory>,
) -> Result<()> {
    let mut header = vec!["t".to_string()];
    if spec.dim == 2 {
        header.push("sigma_z".into());
    }
    header.push("coherence".into());
    if spec.dim == 4 {
        header.push("concurrence".into());
    }
    if reference.is_some() {
        header.push("fidelity_vs_ref".into());
    }
    let sz = ComplexMatrix::pauli_z();
    let mut rows = Vec::with_capacity(traj.len());
    for (i, (t, m)) in traj.grid.times().iter().zip(&traj.values).enumerate() {
        let mut row = vec![*t];
        if spec.dim == 2 {
            row.push(expectation(m, &sz)?);
        }
        row.push(coherence_l1(m));
        if spec.dim == 4 {
            row.push(concurrence(m)?);
        }
        if let Some(r) = reference {
            row.push(fidelity(m, &r.values[i])?);
        }
        rows.push(row);
    }
    write_rows(path, &header, rows.into_iter())
}

/// Loss-history CSV: `epoch, lr, l_tot` then per-head mod/ini/er columns.
pub fn write_loss_csv(path: &Path, history: &[LossBreakdown], heads: &[&str]) -> Result<()> {
    let mut header = vec!["epoch".to_string(), "lr".to_string(), "l_tot".to_string()];
    for h in heads {
        header.push(format!("l_mod_{h}"));
    }
    for h in heads {
        header.push(format!("l_ini_{h}"));
    }
    for h in heads {
        header.push(format!("l_er_{h}"));
    }
    let rows = history.iter().map(|b| {
        let mut row = vec![b.epoch as f64, b.lr, b.total];
        row.extend(&b.mod_terms);
        row.extend(&b.ini_terms);
        row.extend(&b.er_terms);
        row
    });
    write_rows(path, &header, rows)
}

/// A parsed CSV: header names and numeric rows. Lines starting with `#`
/// are comments.
#[derive(Debug, Clone)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| Error::InvalidConfig("empty CSV".into()))?
            .split(',')
            .map(|s| s.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for line in lines {
            let row: std::result::Result<Vec<f64>, _> =
                line.split(',').map(|s| s.trim().parse::<f64>()).collect();
            rows.push(row.map_err(|e| Error::InvalidConfig(format!("bad CSV row: {e}")))?);
        }
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self.header.iter().position(|h| h == name).ok_or_else(|| Error::MissingColumn {
            name: name.to_string(),
            available: self.header.join(", "),
        })?;
        Ok(self.rows.iter().map(|r| r[idx]).collect())
    }
}

/// Rebuild an operator trajectory from a CSV produced by
/// [`write_operator_csv`].
pub fn read_operator_csv(path: &Path, spec: &SystemSpec, which: char) -> Result<Trajectory> {
    let table = CsvTable::read(path)?;
    let layout = if which == 'O' { &spec.o_layout } else { &spec.q_layout };
    let expected: Vec<String> =
        std::iter::once("t".to_string()).chain(operator_columns(spec, which)).collect();
    if table.header != expected {
        return Err(Error::InvalidConfig(format!(
            "unexpected columns {:?}; expected {:?}",
            table.header, expected
        )));
    }
    let n = table.rows.len();
    if n == 0 {
        return Err(Error::TrajectoryTooShort { need: 1, got: 0 });
    }
    let t_total = table.rows.last().expect("nonempty")[0];
    let grid = if n == 1 { TimeGrid::new(1, 1.0)? } else { TimeGrid::new(n, t_total)? };
    let values: Result<Vec<ComplexMatrix>> =
        table.rows.iter().map(|row| layout.to_matrix(&row[1..])).collect();
    Trajectory::new(grid, values?)
}

/// Rebuild a density trajectory from a CSV produced by
/// [`write_density_csv`].
pub fn read_density_csv(path: &Path, spec: &SystemSpec) -> Result<Trajectory> {
    let table = CsvTable::read(path)?;
    let n = table.rows.len();
    if n == 0 {
        return Err(Error::TrajectoryTooShort { need: 1, got: 0 });
    }
    let t_total = table.rows.last().expect("nonempty")[0];
    let grid = if n == 1 { TimeGrid::new(1, 1.0)? } else { TimeGrid::new(n, t_total)? };
    let values: Result<Vec<ComplexMatrix>> =
        table.rows.iter().map(|row| spec.rho_layout.to_matrix(&row[1..])).collect();
    Trajectory::new(grid, values?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{spin_boson_spec, BathParams};
    use crate::oracle::integrate_system;

    fn fig2() -> (SystemSpec, Trajectory, Trajectory, Trajectory) {
        let spec = spin_boson_spec(BathParams::new(0.1, 0.3, 20.0).unwrap());
        let grid = TimeGrid::new(21, 6.0).unwrap();
        let rho0 = ComplexMatrix::diag(&[1.0, 0.0]);
        let (o, q, rho) = integrate_system(&spec, &rho0, &grid, 4).unwrap();
        (spec, o, q, rho)
    }

    #[test]
    fn operator_csv_round_trips() {
        let (spec, o, _, _) = fig2();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("o.csv");
        write_operator_csv(&path, &o, &spec, 'O').unwrap();
        let back = read_operator_csv(&path, &spec, 'O').unwrap();
        for (a, b) in o.values.iter().zip(&back.values) {
            assert!(a.sub(b).unwrap().frobenius_norm() < 1e-14);
        }
    }

    #[test]
    fn column_names_are_deterministic() {
        let (spec, _, _, _) = fig2();
        assert_eq!(operator_columns(&spec, 'O'), vec!["re_O12", "im_O12", "re_O21", "im_O21"]);
        assert_eq!(operator_columns(&spec, 'Q'), vec!["re_Q12", "im_Q12", "re_Q21", "im_Q21"]);
        assert_eq!(density_columns(&spec), vec!["rho11", "re_rho12", "im_rho12"]);
    }

    #[test]
    fn csv_output_is_byte_identical_across_runs() {
        let (spec, o, _, _) = fig2();
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
        write_operator_csv(&p1, &o, &spec, 'O').unwrap();
        write_operator_csv(&p2, &o, &spec, 'O').unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn observables_csv_has_expected_columns() {
        let (spec, _, _, rho) = fig2();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("obs.csv");
        write_observables_csv(&path, &rho, &spec, Some(&rho)).unwrap();
        let table = CsvTable::read(&path).unwrap();
        assert_eq!(table.header, vec!["t", "sigma_z", "coherence", "fidelity_vs_ref"]);
        // Fidelity against itself is one.
        let fid = table.column("fidelity_vs_ref").unwrap();
        assert!(fid.iter().all(|&f| (f - 1.0).abs() < 1e-8));
        assert!(table.column("missing").is_err());
    }
}
