//! File formats: trajectory CSV, matrix rows for JSON, and JSON helpers.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 {
        return Err(Error::input("matrix must be non-empty"));
    }
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::input("matrix rows have unequal lengths"));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Shortest decimal that parses back to the same `f64`.
fn fmt_num(v: f64) -> String {
    format!("{v:?}")
}

/// Writes `t,x1,…,xn` with one row per sample and `t = k·dt`.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=traj.dim()).map(|i| format!("x{i}")));
    w.write_record(&header).map_err(csv_err)?;
    for (k, s) in traj.states().iter().enumerate() {
        let mut row = vec![fmt_num(k as f64 * traj.dt())];
        row.extend(s.iter().map(|v| fmt_num(*v)));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Long-format CSV `traj,t,x1,…,xn` holding several trajectories.
pub fn write_phase_portrait_csv<W: Write>(trajs: &[Trajectory], out: W) -> Result<()> {
    let dim = trajs.first().map_or(0, Trajectory::dim);
    if trajs.iter().any(|t| t.dim() != dim) {
        return Err(Error::input("phase portrait trajectories differ in dimension"));
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["traj".to_string(), "t".to_string()];
    header.extend((1..=dim).map(|i| format!("x{i}")));
    w.write_record(&header).map_err(csv_err)?;
    for (id, traj) in trajs.iter().enumerate() {
        for (k, s) in traj.states().iter().enumerate() {
            let mut row = vec![id.to_string(), fmt_num(k as f64 * traj.dt())];
            row.extend(s.iter().map(|v| fmt_num(*v)));
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            line: 0,
            message: format!("{other:?}"),
        },
    }
}

/// Reads a trajectory CSV; `dt` is taken from the first two time stamps.
pub fn read_trajectory_csv<R: Read>(input: R) -> Result<Trajectory> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = rdr.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if header.len() < 2 || &header[0] != "t" {
        return Err(Error::Parse {
            line: 1,
            message: "header must be t,x1,...,xn".into(),
        });
    }
    let dim = header.len() - 1;
    let mut times = Vec::new();
    let mut states = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(line, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        if rec.len() != dim + 1 {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", dim + 1, rec.len()),
            });
        }
        let vals = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        line,
                        message: format!("'{f}' is not a finite number"),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        times.push(vals[0]);
        states.push(DVector::from_vec(vals[1..].to_vec()));
    }
    if states.len() < 2 {
        return Err(Error::Parse {
            line: states.len() + 2,
            message: format!("need at least 2 data rows, found {}", states.len()),
        });
    }
    let dt = times[1] - times[0];
    if !(dt > 0.0) {
        return Err(Error::Parse {
            line: 3,
            message: "time column must be increasing".into(),
        });
    }
    Trajectory::new(dim, dt, states)
}

pub fn save_trajectory(traj: &Trajectory, path: &Path) -> Result<()> {
    let f = fs::File::create(path)?;
    write_trajectory_csv(traj, std::io::BufWriter::new(f))
}

pub fn load_trajectory(path: &Path) -> Result<Trajectory> {
    read_trajectory_csv(fs::File::open(path)?)
}

pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn save_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    fs::write(path, to_json_string(value)?)?;
    Ok(())
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::SystemDef;
    use nalgebra::dvector;
    use proptest::prelude::*;

    #[test]
    fn csv_layout() {
        let traj = Trajectory::new(2, 0.5, vec![dvector![1.0, 2.0], dvector![0.1, -3.0]]).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&traj, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,x1,x2");
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[2], "0.5,0.1,-3.0");
        assert_eq!(read_trajectory_csv(text.as_bytes()).unwrap(), traj);
    }

    #[test]
    fn one_row_is_parse_error() {
        let err = read_trajectory_csv("t,x1\n0,1.0\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn bad_number_names_line() {
        let err = read_trajectory_csv("t,x1\n0,1.0\n0.1,abc\n".as_bytes()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let err = read_trajectory_csv("t,x1\n0,1.0\n0.1,2.0,3.0\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn bad_header() {
        assert!(matches!(read_trajectory_csv("a,b\n0,1\n1,2\n".as_bytes()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn simulated_lorenz_roundtrips() {
        let traj = SystemDef::lorenz().simulate(&dvector![1.0, 1.0, 1.0], 0.01, 30, 0).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&traj, &mut buf).unwrap();
        let back = read_trajectory_csv(buf.as_slice()).unwrap();
        assert_eq!(back.states(), traj.states());
    }

    proptest! {
        #[test]
        fn csv_numbers_are_lossless(vals in proptest::collection::vec(-1e300f64..1e300, 2..20)) {
            let states = vals.iter().map(|v| dvector![*v]).collect();
            let traj = Trajectory::new(1, 0.001, states).unwrap();
            let mut buf = Vec::new();
            write_trajectory_csv(&traj, &mut buf).unwrap();
            let back = read_trajectory_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(back.states(), traj.states());
        }
    }
}
