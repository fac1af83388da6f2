//! CSV formats.
//!
//! * values: header `timestamp,<id1>,...,<idN>`, one row per step, empty cell = missing.
//! * mask: same header and timestamps, cells `0` or `1`.
//! * coords: header `id,lat,lon`, one row per variable.
//! * matrix: header `node,<id1>,...,<idN>`, then one row per node.
//!
//! UTF-8, `.` decimal separator, `,` field separator, LF line endings.
//! Floats are written in shortest round-trip form, so write → load → write is
//! byte-identical. Lines starting with `#` are comments and skipped on read.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::dataset::TimeSeriesDataset;
use crate::error::{Error, Result};
use crate::numerics::Tensor2;

struct Table {
    header: Vec<String>,
    header_line: usize,
    rows: Vec<(usize, Vec<String>)>,
}

fn read_table(path: &Path) -> Result<Table> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(file);
    let name = path.display().to_string();
    let mut header: Option<(usize, Vec<String>)> = None;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(&name, line, 0, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let fields: Vec<String> = rec.iter().map(|f| f.trim().to_string()).collect();
        match &header {
            None => header = Some((line, fields)),
            Some((_, h)) => {
                if fields.len() != h.len() {
                    return Err(Error::parse(
                        &name,
                        line,
                        fields.len().min(h.len()) + 1,
                        format!("expected {} fields, found {}", h.len(), fields.len()),
                    ));
                }
                rows.push((line, fields));
            }
        }
    }
    let (header_line, header) =
        header.ok_or_else(|| Error::parse(&name, 1, 1, "file has no header"))?;
    Ok(Table {
        header,
        header_line,
        rows,
    })
}

fn parse_number(path: &str, line: usize, column: usize, cell: &str) -> Result<f64> {
    let v: f64 = cell
        .parse()
        .map_err(|_| Error::parse(path, line, column, format!("`{cell}` is not a number")))?;
    if !v.is_finite() {
        return Err(Error::parse(path, line, column, format!("`{cell}` is not finite")));
    }
    Ok(v)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(BufWriter::new(f))
}

fn check_field(s: &str) -> Result<()> {
    if s.contains([',', '"', '\n', '\r']) || s.starts_with('#') {
        return Err(Error::Data(format!("identifier `{s}` cannot be written to CSV")));
    }
    Ok(())
}

/// Parsed values file: ids, timestamps, and `steps x nodes` cells (`None` = empty).
pub struct ValuesTable {
    pub ids: Vec<String>,
    pub timestamps: Vec<String>,
    pub cells: Vec<Option<f64>>,
}

pub fn read_values_csv(path: &Path) -> Result<ValuesTable> {
    let name = path.display().to_string();
    let table = read_table(path)?;
    let hl = table.header_line;
    if table.header.first().map(String::as_str) != Some("timestamp") {
        return Err(Error::parse(&name, hl, 1, "first header field must be `timestamp`"));
    }
    let ids: Vec<String> = table.header[1..].to_vec();
    if ids.is_empty() {
        return Err(Error::parse(&name, hl, 2, "no variable columns"));
    }
    let mut positions = HashMap::new();
    for (j, id) in ids.iter().enumerate() {
        if id.is_empty() {
            return Err(Error::parse(&name, hl, j + 2, "empty variable id"));
        }
        if let Some(prev) = positions.insert(id.as_str(), j) {
            return Err(Error::parse(
                &name,
                hl,
                j + 2,
                format!("duplicate variable id `{id}` (also column {})", prev + 2),
            ));
        }
    }
    let mut timestamps = Vec::with_capacity(table.rows.len());
    let mut seen = HashMap::new();
    let mut cells = Vec::with_capacity(table.rows.len() * ids.len());
    for (line, row) in &table.rows {
        let ts = row[0].clone();
        if let Some(prev) = seen.insert(ts.clone(), *line) {
            return Err(Error::parse(
                &name,
                *line,
                1,
                format!("duplicate timestamp `{ts}` (first on line {prev})"),
            ));
        }
        timestamps.push(ts);
        for (j, cell) in row[1..].iter().enumerate() {
            if cell.is_empty() {
                cells.push(None);
            } else {
                cells.push(Some(parse_number(&name, *line, j + 2, cell)?));
            }
        }
    }
    Ok(ValuesTable {
        ids,
        timestamps,
        cells,
    })
}

/// Reads a `0/1` mask file whose header and timestamps must match `ids`/`timestamps`.
pub fn read_mask_csv(path: &Path, ids: &[String], timestamps: &[String]) -> Result<Vec<bool>> {
    let name = path.display().to_string();
    let table = read_table(path)?;
    if table.header.first().map(String::as_str) != Some("timestamp") || table.header[1..] != *ids {
        return Err(Error::parse(
            &name,
            table.header_line,
            1,
            "mask header must match the values header",
        ));
    }
    if table.rows.len() != timestamps.len() {
        return Err(Error::parse(
            &name,
            table.header_line,
            1,
            format!("{} mask rows for {} steps", table.rows.len(), timestamps.len()),
        ));
    }
    let mut out = Vec::with_capacity(ids.len() * timestamps.len());
    for ((line, row), ts) in table.rows.iter().zip(timestamps) {
        if &row[0] != ts {
            return Err(Error::parse(
                &name,
                *line,
                1,
                format!("timestamp `{}` does not match values timestamp `{ts}`", row[0]),
            ));
        }
        for (j, cell) in row[1..].iter().enumerate() {
            out.push(match cell.as_str() {
                "1" => true,
                "0" => false,
                other => {
                    return Err(Error::parse(&name, *line, j + 2, format!("mask cell `{other}` is not 0 or 1")))
                }
            });
        }
    }
    Ok(out)
}

/// Reads `id,lat,lon` and returns coordinates in the order of `ids`.
pub fn read_coords_csv(path: &Path, ids: &[String]) -> Result<Vec<[f64; 2]>> {
    let name = path.display().to_string();
    let table = read_table(path)?;
    if table.header != ["id", "lat", "lon"] {
        return Err(Error::parse(&name, table.header_line, 1, "coords header must be `id,lat,lon`"));
    }
    let mut by_id: HashMap<String, [f64; 2]> = HashMap::new();
    for (line, row) in &table.rows {
        let lat = parse_number(&name, *line, 2, &row[1])?;
        let lon = parse_number(&name, *line, 3, &row[2])?;
        if !ids.contains(&row[0]) {
            return Err(Error::parse(&name, *line, 1, format!("unknown id `{}`", row[0])));
        }
        if by_id.insert(row[0].clone(), [lat, lon]).is_some() {
            return Err(Error::parse(&name, *line, 1, format!("duplicate id `{}`", row[0])));
        }
    }
    ids.iter()
        .map(|id| {
            by_id
                .get(id)
                .copied()
                .ok_or_else(|| Error::Data(format!("{name}: no coordinates for id `{id}`")))
        })
        .collect()
}

/// Loads a dataset. Without `mask_path`, empty cells define the observed mask.
pub fn load_csv(
    values_path: &Path,
    coords_path: Option<&Path>,
    mask_path: Option<&Path>,
) -> Result<TimeSeriesDataset> {
    let table = read_values_csv(values_path)?;
    let mut observed: Vec<bool> = table.cells.iter().map(Option::is_some).collect();
    if let Some(mp) = mask_path {
        let mask = read_mask_csv(mp, &table.ids, &table.timestamps)?;
        for (k, (&m, cell)) in mask.iter().zip(&table.cells).enumerate() {
            if m && cell.is_none() {
                let n = table.ids.len();
                return Err(Error::Data(format!(
                    "{}: mask marks empty cell observed (row {}, variable `{}`)",
                    mp.display(),
                    k / n + 1,
                    table.ids[k % n]
                )));
            }
        }
        observed = mask;
    }
    let values = table.cells.iter().map(|c| c.unwrap_or(0.0)).collect();
    let coords = coords_path
        .map(|p| read_coords_csv(p, &table.ids))
        .transpose()?;
    TimeSeriesDataset::new(table.ids, table.timestamps, values, observed, coords)
}

/// Writes a values file from raw rows; `observed[k] == false` produces an empty cell.
pub fn write_values_table(
    path: &Path,
    ids: &[String],
    timestamps: &[String],
    values: &[f64],
    observed: &[bool],
) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    write!(w, "timestamp").map_err(io)?;
    for id in ids {
        check_field(id)?;
        write!(w, ",{id}").map_err(io)?;
    }
    writeln!(w).map_err(io)?;
    let n = ids.len();
    for (t, ts) in timestamps.iter().enumerate() {
        check_field(ts)?;
        write!(w, "{ts}").map_err(io)?;
        for i in 0..n {
            let k = t * n + i;
            if observed[k] {
                write!(w, ",{}", values[k]).map_err(io)?;
            } else {
                write!(w, ",").map_err(io)?;
            }
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_csv(path: &Path, ds: &TimeSeriesDataset) -> Result<()> {
    write_values_table(path, ds.ids(), ds.timestamps(), ds.values(), ds.observed_mask())
}

pub fn write_mask_csv(path: &Path, ids: &[String], timestamps: &[String], mask: &[bool]) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    write!(w, "timestamp").map_err(io)?;
    for id in ids {
        check_field(id)?;
        write!(w, ",{id}").map_err(io)?;
    }
    writeln!(w).map_err(io)?;
    let n = ids.len();
    for (t, ts) in timestamps.iter().enumerate() {
        write!(w, "{ts}").map_err(io)?;
        for i in 0..n {
            write!(w, ",{}", u8::from(mask[t * n + i])).map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_coords_csv(path: &Path, ids: &[String], coords: &[[f64; 2]]) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "id,lat,lon").map_err(io)?;
    for (id, c) in ids.iter().zip(coords) {
        check_field(id)?;
        writeln!(w, "{id},{},{}", c[0], c[1]).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Writes an `N x N` matrix with node ids on both axes, preceded by `# key=value` comments.
pub fn write_matrix_csv(
    path: &Path,
    ids: &[String],
    matrix: &Tensor2,
    comments: &[(String, String)],
) -> Result<()> {
    if matrix.rows() != ids.len() || matrix.cols() != ids.len() {
        return Err(Error::Data(format!(
            "matrix {}x{} does not match {} ids",
            matrix.rows(),
            matrix.cols(),
            ids.len()
        )));
    }
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    write_comments(&mut w, comments).map_err(io)?;
    write!(w, "node").map_err(io)?;
    for id in ids {
        check_field(id)?;
        write!(w, ",{id}").map_err(io)?;
    }
    writeln!(w).map_err(io)?;
    for (i, id) in ids.iter().enumerate() {
        write!(w, "{id}").map_err(io)?;
        for v in matrix.row(i) {
            write!(w, ",{v}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads a matrix written by [`write_matrix_csv`], reordered to match `ids`.
pub fn read_matrix_csv(path: &Path, ids: &[String]) -> Result<Tensor2> {
    let name = path.display().to_string();
    let table = read_table(path)?;
    if table.header.first().map(String::as_str) != Some("node") {
        return Err(Error::parse(&name, table.header_line, 1, "first header field must be `node`"));
    }
    let cols = &table.header[1..];
    let col_of = |id: &str| cols.iter().position(|c| c == id);
    let n = ids.len();
    if cols.len() != n || table.rows.len() != n {
        return Err(Error::parse(
            &name,
            table.header_line,
            1,
            format!("matrix must be {n}x{n} to match the dataset"),
        ));
    }
    let mut data = vec![0.0; n * n];
    let mut filled = vec![false; n];
    for (line, row) in &table.rows {
        let i = ids
            .iter()
            .position(|id| *id == row[0])
            .ok_or_else(|| Error::parse(&name, *line, 1, format!("unknown node `{}`", row[0])))?;
        if filled[i] {
            return Err(Error::parse(&name, *line, 1, format!("duplicate node `{}`", row[0])));
        }
        filled[i] = true;
        for (j, id) in ids.iter().enumerate() {
            let c = col_of(id).ok_or_else(|| {
                Error::parse(&name, table.header_line, 1, format!("missing column `{id}`"))
            })?;
            data[i * n + j] = parse_number(&name, *line, c + 2, &row[c + 1])?;
        }
    }
    Tensor2::new(n, n, data)
}

pub fn write_comments(w: &mut impl Write, comments: &[(String, String)]) -> std::io::Result<()> {
    for (k, v) in comments {
        for line in v.lines() {
            writeln!(w, "# {k}={line}")?;
        }
    }
    Ok(())
}

/// Writes a table of string cells preceded by `# key=value` comment lines.
pub fn write_table_csv(
    path: &Path,
    comments: &[(String, String)],
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    write_comments(&mut w, comments).map_err(io)?;
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for row in rows {
        writeln!(w, "{}", row.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn empty_cell_is_missing() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "v.csv", "timestamp,A,B,C\n0,1,2,3\n1,4,5,6\n2,7,,9\n3,1,1,1\n");
        let ds = load_csv(&p, None, None).unwrap();
        assert!(!ds.is_observed(2, 1));
        assert!(ds.is_observed(2, 0));
        assert_eq!(ds.value(2, 1), 0.0);
    }

    #[test]
    fn duplicate_header_id_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "v.csv", "timestamp,A,A\n0,1,2\n");
        let err = load_csv(&p, None, None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, column: 3, .. }), "{err}");
    }

    #[test]
    fn ragged_and_non_numeric_rows_report_location() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "v.csv", "timestamp,A,B\n0,1,2\n1,3\n");
        assert!(matches!(load_csv(&p, None, None), Err(Error::Parse { line: 3, .. })));
        let p = write(dir.path(), "w.csv", "timestamp,A,B\n0,1,2\n1,3,x\n");
        assert!(matches!(
            load_csv(&p, None, None),
            Err(Error::Parse { line: 3, column: 3, .. })
        ));
        let p = write(dir.path(), "d.csv", "timestamp,A\n0,1\n0,2\n");
        assert!(matches!(load_csv(&p, None, None), Err(Error::Parse { line: 3, column: 1, .. })));
    }

    #[test]
    fn coords_must_match_header_ids() {
        let dir = tempfile::tempdir().unwrap();
        let v = write(dir.path(), "v.csv", "timestamp,A,B\n0,1,2\n1,3,4\n");
        let c = write(dir.path(), "c.csv", "id,lat,lon\nA,0,0\nZ,1,1\n");
        assert!(load_csv(&v, Some(&c), None).is_err());
        let c = write(dir.path(), "c2.csv", "id,lat,lon\nB,1,1\nA,0,0.5\n");
        let ds = load_csv(&v, Some(&c), None).unwrap();
        assert_eq!(ds.coords().unwrap(), &[[0.0, 0.5], [1.0, 1.0]]);
    }

    #[test]
    fn mask_file_overrides_empty_cells() {
        let dir = tempfile::tempdir().unwrap();
        let v = write(dir.path(), "v.csv", "timestamp,A,B\n0,1,2\n1,3,4\n2,5,6\n");
        let m = write(dir.path(), "m.csv", "timestamp,A,B\n0,1,1\n1,0,1\n2,1,1\n");
        let ds = load_csv(&v, None, Some(&m)).unwrap();
        assert!(!ds.is_observed(1, 0));
        let bad = write(dir.path(), "b.csv", "timestamp,A,B\n0,1,2\n1,0,1\n2,1,1\n");
        assert!(load_csv(&v, None, Some(&bad)).is_err());
    }

    #[test]
    fn random_file_round_trips_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = SeededRng::new(17);
        let ids: Vec<String> = (0..5).map(|i| format!("s{i}")).collect();
        let ts: Vec<String> = (0..100).map(|t| format!("2024-01-01T{t:04}")).collect();
        let values: Vec<f64> = (0..500).map(|_| rng.normal() * 37.0).collect();
        let observed: Vec<bool> = (0..500).map(|k| k < 5 || rng.uniform() > 0.1).collect();
        let first = dir.path().join("first.csv");
        write_values_table(&first, &ids, &ts, &values, &observed).unwrap();
        let ds = load_csv(&first, None, None).unwrap();
        let second = dir.path().join("second.csv");
        write_csv(&second, &ds).unwrap();
        assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());
    }

    #[test]
    fn matrix_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ids: Vec<String> = vec!["x".into(), "y".into()];
        let m = Tensor2::from_rows(&[&[1.0, 0.25], &[0.0, 1.0]]);
        let p = dir.path().join("m.csv");
        write_matrix_csv(&p, &ids, &m, &[("seed".into(), "3".into())]).unwrap();
        assert_eq!(read_matrix_csv(&p, &ids).unwrap(), m);
    }
}
