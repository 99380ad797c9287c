//! Matrix Market reading and writing.
//!
//! Supernodes are stored as dense `array` files with an extra
//! `%%supernode n p` comment; systems use `coordinate` files (symmetric or
//! general, the latter checked for symmetry) or dense `array` files.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::supernode::SupernodeMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Array,
    Coordinate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
}

struct Header {
    format: Format,
    symmetry: Symmetry,
    supernode: Option<(usize, usize)>,
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    /// Next non-empty, non-comment line with its 1-based number.
    fn data(&mut self) -> Option<(usize, &'a str)> {
        self.inner
            .by_ref()
            .map(|(i, l)| (i + 1, l.trim()))
            .find(|(_, l)| !l.is_empty() && !l.starts_with('%'))
    }
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize) -> Result<T> {
    tok.parse().map_err(|_| Error::Parse { line, msg: format!("cannot parse '{tok}'") })
}

fn read_header(text: &str) -> Result<(Header, Lines<'_>)> {
    let mut lines = text.lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| Error::MalformedHeader("empty file".into()))?;
    let toks: Vec<String> = first.split_whitespace().map(str::to_ascii_lowercase).collect();
    if toks.len() != 5 || toks[0] != "%%matrixmarket" || toks[1] != "matrix" {
        return Err(Error::MalformedHeader(format!("unrecognised banner '{}'", first.trim())));
    }
    let format = match toks[2].as_str() {
        "array" => Format::Array,
        "coordinate" => Format::Coordinate,
        other => return Err(Error::MalformedHeader(format!("unsupported format '{other}'"))),
    };
    if toks[3] != "real" && toks[3] != "integer" {
        return Err(Error::MalformedHeader(format!("unsupported field '{}'", toks[3])));
    }
    let symmetry = match toks[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        other => return Err(Error::MalformedHeader(format!("unsupported symmetry '{other}'"))),
    };
    // look ahead through the comment block for the supernode marker
    let mut supernode = None;
    for (i, l) in text.lines().enumerate().skip(1) {
        let l = l.trim();
        if !l.starts_with('%') {
            break;
        }
        let t: Vec<&str> = l.split_whitespace().collect();
        if t.first().is_some_and(|s| s.eq_ignore_ascii_case("%%supernode")) {
            if t.len() != 3 {
                return Err(Error::MalformedHeader(format!("bad supernode line {}", i + 1)));
            }
            supernode = Some((parse_num(t[1], i + 1)?, parse_num(t[2], i + 1)?));
        }
    }
    Ok((Header { format, symmetry, supernode }, Lines { inner: lines }))
}

fn size_line(lines: &mut Lines<'_>, want: usize) -> Result<Vec<usize>> {
    let (ln, l) = lines.data().ok_or_else(|| Error::MalformedHeader("missing size line".into()))?;
    let v: Vec<usize> = l.split_whitespace().map(|t| parse_num(t, ln)).collect::<Result<_>>()?;
    if v.len() != want {
        return Err(Error::MalformedHeader(format!("size line {ln} needs {want} integers")));
    }
    Ok(v)
}

fn read_array_values(lines: &mut Lines<'_>, count: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let (ln, l) = lines
            .data()
            .ok_or_else(|| Error::DimensionMismatch(format!("expected {count} values, found {}", out.len())))?;
        for t in l.split_whitespace() {
            out.push(parse_num(t, ln)?);
        }
    }
    if out.len() > count || lines.data().is_some() {
        return Err(Error::DimensionMismatch(format!("more than {count} values")));
    }
    Ok(out)
}

/// Parses a supernode array file.
pub fn parse_supernode(text: &str) -> Result<SupernodeMatrix> {
    let (h, mut lines) = read_header(text)?;
    if h.format != Format::Array || h.symmetry != Symmetry::General {
        return Err(Error::MalformedHeader("supernodes are stored as 'array real general'".into()));
    }
    let (n, p) = h.supernode.ok_or_else(|| Error::MalformedHeader("missing %%supernode n p line".into()))?;
    let dims = size_line(&mut lines, 2)?;
    if dims != [n, p] {
        return Err(Error::DimensionMismatch(format!("size line {dims:?} disagrees with supernode {n} x {p}")));
    }
    let values = read_array_values(&mut lines, n * p)?;
    SupernodeMatrix::from_col_major(n, p, values)
}

pub fn format_supernode(m: &SupernodeMatrix) -> String {
    let (n, p) = (m.n(), m.p());
    let mut s = format!("%%MatrixMarket matrix array real general\n%%supernode {n} {p}\n{n} {p}\n");
    for v in m.values().as_slice() {
        writeln!(s, "{v:e}").unwrap();
    }
    s
}

/// Parses a square symmetric system from a coordinate or array file.
pub fn parse_system(text: &str) -> Result<DenseMatrix> {
    let (h, mut lines) = read_header(text)?;
    match h.format {
        Format::Array => {
            let dims = size_line(&mut lines, 2)?;
            let (r, c) = (dims[0], dims[1]);
            if r != c {
                return Err(Error::DimensionMismatch(format!("system must be square, got {r} x {c}")));
            }
            let a = if h.symmetry == Symmetry::Symmetric {
                // packed lower triangle, column by column
                let vals = read_array_values(&mut lines, r * (r + 1) / 2)?;
                let mut a = DenseMatrix::zeros(r, r);
                let mut it = vals.into_iter();
                for j in 0..r {
                    for i in j..r {
                        let v = it.next().unwrap();
                        a[(i, j)] = v;
                        a[(j, i)] = v;
                    }
                }
                a
            } else {
                DenseMatrix::from_col_major(r, r, read_array_values(&mut lines, r * r)?)
            };
            if let Some((i, j)) = first_asymmetry(&a) {
                return Err(Error::NonSymmetric(i, j));
            }
            Ok(a)
        }
        Format::Coordinate => {
            let dims = size_line(&mut lines, 3)?;
            let (r, c, nnz) = (dims[0], dims[1], dims[2]);
            if r != c {
                return Err(Error::DimensionMismatch(format!("system must be square, got {r} x {c}")));
            }
            let mut seen: HashMap<(usize, usize), f64> = HashMap::with_capacity(nnz);
            for _ in 0..nnz {
                let (ln, l) = lines
                    .data()
                    .ok_or_else(|| Error::DimensionMismatch(format!("expected {nnz} entries")))?;
                let t: Vec<&str> = l.split_whitespace().collect();
                if t.len() != 3 {
                    return Err(Error::Parse { line: ln, msg: "entry needs 'row col value'".into() });
                }
                let (i, j): (usize, usize) = (parse_num(t[0], ln)?, parse_num(t[1], ln)?);
                let v: f64 = parse_num(t[2], ln)?;
                if i == 0 || j == 0 || i > r || j > r {
                    return Err(Error::IndexOutOfRange { index: i.max(j), bound: r });
                }
                if seen.insert((i - 1, j - 1), v).is_some() {
                    return Err(Error::Parse { line: ln, msg: format!("duplicate entry ({i}, {j})") });
                }
            }
            if lines.data().is_some() {
                return Err(Error::DimensionMismatch(format!("more than {nnz} entries")));
            }
            let mut a = DenseMatrix::zeros(r, r);
            for (&(i, j), &v) in &seen {
                match seen.get(&(j, i)) {
                    Some(&w) if w != v => return Err(Error::NonSymmetric(i.max(j), i.min(j))),
                    None if h.symmetry == Symmetry::General && i != j && v != 0.0 => {
                        return Err(Error::NonSymmetric(i, j))
                    }
                    _ => {}
                }
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
            Ok(a)
        }
    }
}

fn first_asymmetry(a: &DenseMatrix) -> Option<(usize, usize)> {
    let n = a.nrows();
    (0..n).flat_map(|j| (j + 1..n).map(move |i| (i, j))).find(|&(i, j)| a[(i, j)] != a[(j, i)])
}

/// Writes the lower-triangle nonzeros as a symmetric coordinate file.
pub fn format_system(a: &DenseMatrix) -> String {
    let n = a.nrows();
    let entries: Vec<(usize, usize, f64)> = (0..n)
        .flat_map(|j| (j..n).map(move |i| (i, j)))
        .map(|(i, j)| (i, j, a[(i, j)]))
        .filter(|e| e.2 != 0.0)
        .collect();
    let mut s = format!("%%MatrixMarket matrix coordinate real symmetric\n{n} {n} {}\n", entries.len());
    for (i, j, v) in entries {
        writeln!(s, "{} {} {v:e}", i + 1, j + 1).unwrap();
    }
    s
}

/// Parses a right-hand side: a Matrix Market `n x 1` array, or bare numbers.
pub fn parse_vector(text: &str) -> Result<Vec<f64>> {
    if text.trim_start().starts_with("%%") {
        let (h, mut lines) = read_header(text)?;
        if h.format != Format::Array {
            return Err(Error::MalformedHeader("vectors are stored as arrays".into()));
        }
        let dims = size_line(&mut lines, 2)?;
        if dims[1] != 1 {
            return Err(Error::DimensionMismatch(format!("vector file has {} columns", dims[1])));
        }
        return read_array_values(&mut lines, dims[0]);
    }
    let mut out = Vec::new();
    for (ln, l) in text.lines().enumerate() {
        for t in l.split_whitespace() {
            out.push(parse_num(t, ln + 1)?);
        }
    }
    Ok(out)
}

pub fn format_vector(v: &[f64]) -> String {
    let mut s = format!("%%MatrixMarket matrix array real general\n{} 1\n", v.len());
    for x in v {
        writeln!(s, "{x:e}").unwrap();
    }
    s
}

pub fn read_supernode(path: impl AsRef<Path>) -> Result<SupernodeMatrix> {
    parse_supernode(&std::fs::read_to_string(path)?)
}

pub fn write_supernode(path: impl AsRef<Path>, m: &SupernodeMatrix) -> Result<()> {
    Ok(std::fs::write(path, format_supernode(m))?)
}

pub fn read_system(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    parse_system(&std::fs::read_to_string(path)?)
}

pub fn write_system(path: impl AsRef<Path>, a: &DenseMatrix) -> Result<()> {
    Ok(std::fs::write(path, format_system(a))?)
}

pub fn read_vector(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    parse_vector(&std::fs::read_to_string(path)?)
}

pub fn write_vector(path: impl AsRef<Path>, v: &[f64]) -> Result<()> {
    Ok(std::fs::write(path, format_vector(v))?)
}
