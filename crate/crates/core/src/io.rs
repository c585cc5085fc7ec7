//! Text formats: grid functions, bases, lag covariances, trajectories,
//! innovations states and spectral tables.
//!
//! Numbers in CSV output use `{:.16e}` (17 significant digits); the state dump
//! uses the shortest representation that round-trips.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};

use crate::covariance::{LagCovSet, Provenance, SpectralDensity};
use crate::error::{Error, Result};
use crate::hilbert::{BasisKind, CoordVector, Grid, GridFunction, OrthonormalBasis};
use crate::innovations::InnovationsState;

/// Fixed-width scientific notation with 17 significant digits.
pub fn fmt_value(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_value(s: &str, context: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("{context}: `{}` is not a number", s.trim())))
}

fn parse_row(line: &str, context: &str) -> Result<Vec<f64>> {
    line.split(',').map(|s| parse_value(s, context)).collect()
}

fn join(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(fmt_value).collect::<Vec<_>>().join(",")
}

/// Parses `key=value` pairs from a `# <tag> k=v ...` header line.
fn header_fields<'a>(line: &'a str, tag: &str) -> Result<Vec<(&'a str, &'a str)>> {
    let rest = line
        .strip_prefix('#')
        .map(str::trim_start)
        .and_then(|l| l.strip_prefix(tag))
        .ok_or_else(|| Error::Parse(format!("expected `# {tag} ...` header, found `{line}`")))?;
    rest.split_whitespace()
        .map(|kv| {
            kv.split_once('=')
                .ok_or_else(|| Error::Parse(format!("malformed header field `{kv}`")))
        })
        .collect()
}

fn header_usize(fields: &[(&str, &str)], key: &str) -> Result<usize> {
    let value = fields
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| Error::Parse(format!("header lacks `{key}`")))?;
    value
        .parse()
        .map_err(|_| Error::Parse(format!("header field {key}=`{value}` is not an integer")))
}

fn data_lines<R: BufRead>(reader: R) -> impl Iterator<Item = std::io::Result<String>> {
    reader
        .lines()
        .filter(|l| l.as_ref().map(|s| !s.trim().is_empty()).unwrap_or(true))
}

pub fn grid_function_row(f: &GridFunction) -> String {
    join(f.values().iter().copied())
}

pub fn parse_grid_function_row(line: &str, grid: Grid) -> Result<GridFunction> {
    GridFunction::new(grid, parse_row(line, "grid function")?)
}

pub fn write_basis<W: Write>(mut w: W, basis: &OrthonormalBasis) -> Result<()> {
    writeln!(
        w,
        "# basis kind={} D={} resolution={}",
        basis.kind().tag(),
        basis.dim(),
        basis.grid().resolution()
    )?;
    for f in basis.functions() {
        writeln!(w, "{}", grid_function_row(f))?;
    }
    Ok(())
}

/// Reads a basis file and re-orthonormalizes the functions.
pub fn read_basis<R: BufRead>(reader: R) -> Result<OrthonormalBasis> {
    let mut lines = data_lines(reader);
    let header = lines.next().ok_or_else(|| Error::Parse("empty basis file".into()))??;
    let fields = header_fields(&header, "basis")?;
    let kind = fields
        .iter()
        .find(|(k, _)| *k == "kind")
        .map(|(_, v)| BasisKind::from_tag(v))
        .unwrap_or(Ok(BasisKind::UserSupplied))?;
    let dim = header_usize(&fields, "D")?;
    let grid = Grid::new(header_usize(&fields, "resolution")?)?;
    let functions = lines
        .map(|l| parse_grid_function_row(&l?, grid))
        .collect::<Result<Vec<_>>>()?;
    if functions.len() != dim {
        return Err(Error::Parse(format!(
            "basis header declares D={dim} but {} functions follow",
            functions.len()
        )));
    }
    OrthonormalBasis::orthonormalized(functions, kind)
}

/// `# lagcov D=<D> H=<H>`, then for each lag a `# lag <h>` line and `D` rows.
pub fn write_lagcov<W: Write>(mut w: W, set: &LagCovSet) -> Result<()> {
    writeln!(w, "# lagcov D={} H={}", set.dim(), set.max_lag())?;
    for (h, c) in set.lags().iter().enumerate() {
        writeln!(w, "# lag {h}")?;
        for row in c.row_iter() {
            writeln!(w, "{}", join(row.iter().copied()))?;
        }
    }
    Ok(())
}

/// Reads a lag covariance file; the result is treated as non-exhaustive.
pub fn read_lagcov<R: BufRead>(reader: R, provenance: Provenance) -> Result<LagCovSet> {
    let mut lines = data_lines(reader);
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty lag covariance file".into()))??;
    let fields = header_fields(&header, "lagcov")?;
    let d = header_usize(&fields, "D")?;
    let h_max = header_usize(&fields, "H")?;
    let mut rows = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim_start().starts_with('#') {
            continue;
        }
        let row = parse_row(&line, "lag covariance")?;
        if row.len() != d {
            return Err(Error::Parse(format!(
                "lag covariance row has {} entries, expected {d}",
                row.len()
            )));
        }
        rows.push(row);
    }
    if rows.len() != d * (h_max + 1) {
        return Err(Error::Parse(format!(
            "expected {} rows for D={d} H={h_max}, found {}",
            d * (h_max + 1),
            rows.len()
        )));
    }
    let lags = rows
        .chunks(d)
        .map(|block| DMatrix::from_row_iterator(d, d, block.iter().flatten().copied()))
        .collect();
    LagCovSet::new(lags, false, provenance)
}

/// Trajectory CSV with header `c1,...,cD`; one row per time.
pub fn write_trajectory<W: Write>(w: W, rows: &[CoordVector], prefix: &str) -> Result<()> {
    let width = rows.first().map(|r| r.len()).unwrap_or(0);
    let mut out = csv::Writer::from_writer(w);
    out.write_record((1..=width).map(|i| format!("{prefix}{i}")))
        .map_err(csv_error)?;
    for r in rows {
        out.write_record(r.iter().map(|v| fmt_value(*v))).map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trajectory<R: std::io::Read>(r: R) -> Result<Vec<CoordVector>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(r);
    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let values = record
            .iter()
            .map(|s| parse_value(s, &format!("trajectory row {}", idx + 1)))
            .collect::<Result<Vec<_>>>()?;
        rows.push(DVector::from_vec(values));
    }
    Ok(rows)
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("csv: {other:?}")),
    }
}

/// Plain-text dump of every `V_n` and `theta_{n,k}`.
pub fn write_state<W: Write>(mut w: W, state: &InnovationsState) -> Result<()> {
    let dims: Vec<String> = state.dims().iter().map(|d| d.to_string()).collect();
    writeln!(w, "# innovations n_max={} dims={}", state.n_max(), dims.join(","))?;
    let write_block = |w: &mut W, label: String, m: &DMatrix<f64>| -> Result<()> {
        writeln!(w, "{label} {}x{}", m.nrows(), m.ncols())?;
        for row in m.row_iter() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{}", cells.join(" "))?;
        }
        Ok(())
    };
    for n in 0..=state.n_max() {
        write_block(&mut w, format!("V {n}"), state.v(n))?;
    }
    for n in 1..=state.n_max() {
        for (k, theta) in state.stored_row(n).iter().enumerate() {
            write_block(&mut w, format!("theta {n} {}", k + 1), theta)?;
        }
    }
    Ok(())
}

/// CSV of `omega, eig1, ..., eigD` with eigenvalues nonincreasing.
pub fn write_spectral<W: Write>(w: W, spectral: &SpectralDensity) -> Result<()> {
    let width = spectral.eigenvalues.first().map(|e| e.len()).unwrap_or(0);
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["omega".to_string()];
    header.extend((1..=width).map(|i| format!("eig{i}")));
    out.write_record(&header).map_err(csv_error)?;
    for (omega, eigs) in spectral.omegas.iter().zip(&spectral.eigenvalues) {
        let mut row = vec![fmt_value(*omega)];
        row.extend(eigs.iter().map(|v| fmt_value(*v)));
        out.write_record(&row).map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}
