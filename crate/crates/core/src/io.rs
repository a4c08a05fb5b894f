//! Plain-text persistence for generators and cell fields.
//!
//! Values are written with the shortest decimal representation that parses
//! back to the same `f64`, so both formats round-trip bit-exactly. Lines
//! starting with `#` are comments.
//!
//! ```text
//! GEN d n nnz
//! i j value        (nnz lines, column-major, 0-based)
//! LEAK j value     (n lines)
//!
//! FIELD d res_1 .. res_d lo_1 hi_1 .. lo_d hi_d TAG
//! value            (n lines, row-major, `inf` for +infinity)
//! ```

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::grid::{AxisBox, Grid};
use crate::solve::{CellField, FieldTag};
use crate::sparse::CscMatrix;

/// Shortest round-trip decimal form; exponent notation for very large or
/// very small magnitudes.
pub fn format_value(v: f64) -> String {
    format!("{v:?}")
}

fn parse_value(s: &str, line: usize) -> Result<f64> {
    s.parse::<f64>().map_err(|_| Error::Parse {
        line,
        msg: format!("'{s}' is not a number"),
    })
}

fn parse_index(s: &str, line: usize, what: &str) -> Result<usize> {
    s.parse::<usize>().map_err(|_| Error::Parse {
        line,
        msg: format!("{what} '{s}' is not a non-negative integer"),
    })
}

fn write_comment<W: Write>(w: &mut W, comment: Option<&str>) -> Result<()> {
    if let Some(c) = comment {
        for l in c.lines() {
            writeln!(w, "# {l}")?;
        }
    }
    Ok(())
}

/// Non-comment, non-blank lines with their 1-based line numbers.
struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn new(r: R) -> Self {
        Self {
            inner: r.lines(),
            line: 0,
        }
    }

    fn next_line(&mut self) -> Result<Option<(usize, String)>> {
        for l in self.inner.by_ref() {
            self.line += 1;
            let l = l?;
            let t = l.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            return Ok(Some((self.line, t.to_string())));
        }
        Ok(None)
    }

    fn expect_line(&mut self, what: &str) -> Result<(usize, String)> {
        self.next_line()?.ok_or_else(|| Error::Parse {
            line: self.line + 1,
            msg: format!("unexpected end of file, expected {what}"),
        })
    }

    fn expect_end(&mut self) -> Result<()> {
        match self.next_line()? {
            None => Ok(()),
            Some((line, l)) => Err(Error::Parse {
                line,
                msg: format!("trailing content '{l}'"),
            }),
        }
    }
}

pub fn write_generator<W: Write>(w: &mut W, g: &Generator, comment: Option<&str>) -> Result<()> {
    write_comment(w, comment)?;
    writeln!(w, "GEN {} {} {}", g.dim(), g.n(), g.nnz())?;
    for (i, j, v) in g.rates().triplets() {
        writeln!(w, "{i} {j} {}", format_value(v))?;
    }
    for (j, v) in g.leak().iter().enumerate() {
        writeln!(w, "LEAK {j} {}", format_value(*v))?;
    }
    Ok(())
}

pub fn read_generator<R: BufRead>(r: R) -> Result<Generator> {
    let mut lines = Lines::new(r);
    let (hl, header) = lines.expect_line("GEN header")?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 4 || parts[0] != "GEN" {
        return Err(Error::Parse {
            line: hl,
            msg: "expected 'GEN d n nnz'".into(),
        });
    }
    let dim = parse_index(parts[1], hl, "dimension")?;
    let n = parse_index(parts[2], hl, "cell count")?;
    let nnz = parse_index(parts[3], hl, "nonzero count")?;
    let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for _ in 0..nnz {
        let (ln, l) = lines.expect_line("matrix entry")?;
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.len() != 3 {
            return Err(Error::Parse {
                line: ln,
                msg: "expected 'i j value'".into(),
            });
        }
        let i = parse_index(f[0], ln, "row")?;
        let j = parse_index(f[1], ln, "column")?;
        if i >= n || j >= n {
            return Err(Error::Parse {
                line: ln,
                msg: format!("index ({i}, {j}) outside a {n}-state generator"),
            });
        }
        let v = parse_value(f[2], ln)?;
        if columns[j].iter().any(|&(r, _)| r == i) {
            return Err(Error::Parse {
                line: ln,
                msg: format!("duplicate entry ({i}, {j})"),
            });
        }
        columns[j].push((i, v));
    }
    let mut leak = vec![f64::NAN; n];
    for _ in 0..n {
        let (ln, l) = lines.expect_line("LEAK line")?;
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.len() != 3 || f[0] != "LEAK" {
            return Err(Error::Parse {
                line: ln,
                msg: "expected 'LEAK j value'".into(),
            });
        }
        let j = parse_index(f[1], ln, "cell")?;
        if j >= n || !leak[j].is_nan() {
            return Err(Error::Parse {
                line: ln,
                msg: format!("bad or repeated leak index {j}"),
            });
        }
        leak[j] = parse_value(f[2], ln)?;
    }
    lines.expect_end()?;
    for col in &mut columns {
        col.sort_by_key(|&(i, _)| i);
    }
    let rates = CscMatrix::from_columns(n, columns);
    if rates.nnz() != nnz {
        return Err(Error::Parse {
            line: hl,
            msg: "explicit zero entries are not allowed".into(),
        });
    }
    Generator::from_parts(dim, rates, leak)
}

pub fn write_field<W: Write>(
    w: &mut W,
    grid: &Grid,
    field: &CellField,
    comment: Option<&str>,
) -> Result<()> {
    if field.len() != grid.n_cells() {
        return Err(Error::DimensionMismatch {
            expected: grid.n_cells(),
            got: field.len(),
        });
    }
    write_comment(w, comment)?;
    let mut header = format!("FIELD {}", grid.dim());
    for r in grid.resolution() {
        header.push_str(&format!(" {r}"));
    }
    for (lo, hi) in grid.bounds().lo().iter().zip(grid.bounds().hi()) {
        header.push_str(&format!(" {} {}", format_value(*lo), format_value(*hi)));
    }
    writeln!(w, "{header} {}", field.tag.as_str())?;
    for v in &field.values {
        writeln!(w, "{}", format_value(*v))?;
    }
    Ok(())
}

pub fn read_field<R: BufRead>(r: R) -> Result<(Grid, CellField)> {
    let mut lines = Lines::new(r);
    let (hl, header) = lines.expect_line("FIELD header")?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    let bad = |msg: &str| Error::Parse {
        line: hl,
        msg: msg.to_string(),
    };
    if parts.len() < 3 || parts[0] != "FIELD" {
        return Err(bad("expected 'FIELD d res.. lo hi.. TAG'"));
    }
    let d = parse_index(parts[1], hl, "dimension")?;
    if d == 0 || parts.len() != 3 + 3 * d {
        return Err(bad("header length does not match the dimension"));
    }
    let res = (0..d)
        .map(|k| parse_index(parts[2 + k], hl, "resolution"))
        .collect::<Result<Vec<_>>>()?;
    let mut lo = Vec::with_capacity(d);
    let mut hi = Vec::with_capacity(d);
    for k in 0..d {
        lo.push(parse_value(parts[2 + d + 2 * k], hl)?);
        hi.push(parse_value(parts[3 + d + 2 * k], hl)?);
    }
    let tag = FieldTag::parse(parts[2 + 3 * d]).ok_or_else(|| bad("unknown field tag"))?;
    let grid = Grid::new(AxisBox::new(lo, hi)?, res)?;
    let values = (0..grid.n_cells())
        .map(|_| {
            let (ln, l) = lines.expect_line("field value")?;
            parse_value(&l, ln)
        })
        .collect::<Result<Vec<_>>>()?;
    lines.expect_end()?;
    Ok((grid, CellField::new(tag, values)))
}
