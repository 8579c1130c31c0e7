//! Plain-text file formats: stencil matrices, vectors, recycle-space
//! checkpoints, and sequence directories. All floats are written with 17
//! significant digits so every value round-trips exactly.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::GridShape;
use crate::linalg::SmallMat;
use crate::problems::{SequenceMeta, SystemSequence};
use crate::recycle::RecycleSpace;
use crate::stencil::StencilMatrix;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(s: &str, what: &'static str, path: &Path, line: usize) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|e| Error::parse(what, path, line, format!("bad float '{s}': {e}")))
}

fn parse_usize(s: &str, what: &'static str, path: &Path, line: usize) -> Result<usize> {
    s.parse::<usize>()
        .map_err(|e| Error::parse(what, path, line, format!("bad integer '{s}': {e}")))
}

/// `stencil nx ny nz num_offsets`, one `dx dy dz` line per offset, then one
/// line of per-band coefficients for each row.
pub fn write_matrix(path: &Path, a: &StencilMatrix) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    let s = a.shape();
    writeln!(out, "stencil {} {} {} {}", s.nx, s.ny, s.nz, a.offsets().len())?;
    for off in a.offsets() {
        writeln!(out, "{} {} {}", off.0, off.1, off.2)?;
    }
    for row in 0..a.n() {
        let line: Vec<String> = (0..a.offsets().len())
            .map(|d| fmt_f64(a.band(d)[row]))
            .collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<StencilMatrix> {
    const WHAT: &str = "stencil matrix";
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (ln, header) = lines
        .next()
        .ok_or_else(|| Error::parse(WHAT, path, 1, "empty file"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != "stencil" {
        return Err(Error::parse(WHAT, path, ln + 1, "expected 'stencil nx ny nz num_offsets'"));
    }
    let nx = parse_usize(fields[1], WHAT, path, ln + 1)?;
    let ny = parse_usize(fields[2], WHAT, path, ln + 1)?;
    let nz = parse_usize(fields[3], WHAT, path, ln + 1)?;
    let num_offsets = parse_usize(fields[4], WHAT, path, ln + 1)?;
    let shape = GridShape::new(nx, ny, nz)?;

    let mut offsets = Vec::with_capacity(num_offsets);
    for _ in 0..num_offsets {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| Error::parse(WHAT, path, 0, "missing offset lines"))?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 3 {
            return Err(Error::parse(WHAT, path, ln + 1, "expected 'dx dy dz'"));
        }
        let parse_i = |s: &str| -> Result<i32> {
            s.parse::<i32>()
                .map_err(|e| Error::parse(WHAT, path, ln + 1, format!("bad offset '{s}': {e}")))
        };
        offsets.push((parse_i(f[0])?, parse_i(f[1])?, parse_i(f[2])?));
    }

    let n = shape.n();
    let mut bands = vec![vec![0.0; n]; num_offsets];
    for row in 0..n {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| Error::parse(WHAT, path, 0, format!("missing row {row}")))?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != num_offsets {
            return Err(Error::parse(
                WHAT,
                path,
                ln + 1,
                format!("expected {num_offsets} coefficients, got {}", f.len()),
            ));
        }
        for (d, s) in f.iter().enumerate() {
            bands[d][row] = parse_f64(s, WHAT, path, ln + 1)?;
        }
    }
    StencilMatrix::new(shape, offsets, bands)
}

/// `vec n` followed by one value per line.
pub fn write_vector(path: &Path, v: &[f64]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "vec {}", v.len())?;
    for x in v {
        writeln!(out, "{}", fmt_f64(*x))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    const WHAT: &str = "vector";
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (ln, header) = lines
        .next()
        .ok_or_else(|| Error::parse(WHAT, path, 1, "empty file"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 2 || fields[0] != "vec" {
        return Err(Error::parse(WHAT, path, ln + 1, "expected 'vec n'"));
    }
    let n = parse_usize(fields[1], WHAT, path, ln + 1)?;
    let mut v = Vec::with_capacity(n);
    for _ in 0..n {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| Error::parse(WHAT, path, 0, "missing vector entries"))?;
        v.push(parse_f64(line.trim(), WHAT, path, ln + 1)?);
    }
    Ok(v)
}

/// `recycle n k k_max`, the k x k triangular factor row by row, then U and C
/// row by row (k values per line).
pub fn write_recycle_space(path: &Path, space: &RecycleSpace) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    let (n, k) = (space.n(), space.k());
    writeln!(out, "recycle {} {} {}", n, k, space.k_max())?;
    for i in 0..k {
        let line: Vec<String> = (0..k).map(|j| fmt_f64(space.r_factor().get(i, j))).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    for block in [space.u_cols(), space.c_cols()] {
        for row in 0..n {
            let line: Vec<String> = (0..k).map(|j| fmt_f64(block[j][row])).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_recycle_space(path: &Path) -> Result<RecycleSpace> {
    const WHAT: &str = "recycle space";
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (ln, header) = lines
        .next()
        .ok_or_else(|| Error::parse(WHAT, path, 1, "empty file"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 || fields[0] != "recycle" {
        return Err(Error::parse(WHAT, path, ln + 1, "expected 'recycle n k k_max'"));
    }
    let n = parse_usize(fields[1], WHAT, path, ln + 1)?;
    let k = parse_usize(fields[2], WHAT, path, ln + 1)?;
    let k_max = parse_usize(fields[3], WHAT, path, ln + 1)?;

    let mut read_block = |rows: usize, cols: usize, what_block: &str| -> Result<Vec<Vec<f64>>> {
        let mut block = vec![vec![0.0; rows]; cols];
        for row in 0..rows {
            let (ln, line) = lines.next().ok_or_else(|| {
                Error::parse(WHAT, path, 0, format!("missing {what_block} row {row}"))
            })?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != cols {
                return Err(Error::parse(
                    WHAT,
                    path,
                    ln + 1,
                    format!("expected {cols} values, got {}", f.len()),
                ));
            }
            for (j, s) in f.iter().enumerate() {
                block[j][row] = parse_f64(s, WHAT, path, ln + 1)?;
            }
        }
        Ok(block)
    };

    let r_cols = read_block(k, k, "R")?;
    let mut r = SmallMat::zeros(k, k);
    for (j, col) in r_cols.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            r.set(i, j, v);
        }
    }
    let u = read_block(n, k, "U")?;
    let c = read_block(n, k, "C")?;
    RecycleSpace::from_parts(n, k_max, u, c, r)
}

const META_FILE: &str = "meta";
const MATRIX_FILE: &str = "matrix.stencil";

pub fn rhs_file_name(t: usize) -> String {
    format!("b_{t:04}.vec")
}

/// Directory layout: `matrix.stencil`, `b_0000.vec` ..., and a `meta`
/// key = value file.
pub fn write_sequence_dir(dir: &Path, seq: &SystemSequence) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_matrix(&dir.join(MATRIX_FILE), &seq.matrix)?;
    for (t, b) in seq.rhs.iter().enumerate() {
        write_vector(&dir.join(rhs_file_name(t)), b)?;
    }
    let mut out = BufWriter::new(fs::File::create(dir.join(META_FILE))?);
    writeln!(out, "generator = {}", seq.meta.generator)?;
    writeln!(out, "seed = {}", seq.meta.seed)?;
    writeln!(out, "matrix_epoch = {}", seq.matrix_epoch)?;
    writeln!(out, "systems = {}", seq.rhs.len())?;
    for (k, v) in &seq.meta.entries {
        writeln!(out, "{k} = {v}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_sequence_dir(dir: &Path) -> Result<SystemSequence> {
    const WHAT: &str = "sequence meta";
    let meta_path = dir.join(META_FILE);
    let text = fs::read_to_string(&meta_path)?;
    let mut meta = SequenceMeta::default();
    let mut matrix_epoch = 0u64;
    let mut systems = None;
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(WHAT, &meta_path, ln + 1, "expected 'key = value'"))?;
        let (k, v) = (k.trim(), v.trim());
        match k {
            "generator" => meta.generator = v.to_string(),
            "seed" => {
                meta.seed = v
                    .parse()
                    .map_err(|e| Error::parse(WHAT, &meta_path, ln + 1, format!("bad seed: {e}")))?
            }
            "matrix_epoch" => {
                matrix_epoch = v.parse().map_err(|e| {
                    Error::parse(WHAT, &meta_path, ln + 1, format!("bad matrix_epoch: {e}"))
                })?
            }
            "systems" => {
                systems = Some(parse_usize(v, WHAT, &meta_path, ln + 1)?);
            }
            _ => meta.entries.push((k.to_string(), v.to_string())),
        }
    }
    let count = systems
        .ok_or_else(|| Error::parse(WHAT, &meta_path, 0, "missing 'systems' entry"))?;
    let matrix = read_matrix(&dir.join(MATRIX_FILE))?;
    let mut rhs = Vec::with_capacity(count);
    for t in 0..count {
        let b = read_vector(&dir.join(rhs_file_name(t)))?;
        if b.len() != matrix.n() {
            return Err(Error::DimensionMismatch {
                expected: matrix.n(),
                got: b.len(),
            });
        }
        rhs.push(b);
    }
    Ok(SystemSequence {
        matrix,
        rhs,
        matrix_epoch,
        meta,
    })
}

/// Resolve a path that may be a sequence directory.
pub fn sequence_dir_exists(dir: &Path) -> bool {
    dir.join(META_FILE).is_file() && dir.join(MATRIX_FILE).is_file()
}

pub fn matrix_file_in(dir: &Path) -> PathBuf {
    dir.join(MATRIX_FILE)
}
