//! Sparse text dump of a [`ConicProgram`], for cross-solver debugging.
//!
//! ```text
//! conic-program v1
//! variables <n> <blocks>
//! block <name> <offset> <len>          (one line per block)
//! objective <constant> <nnz>
//! <col> <value>                        (nnz lines)
//! constraints <count>
//! cone <zero|nonneg|soc|psd> <size> <rows>
//! constants <nnz>
//! <row> <value>
//! triplets <nnz>
//! <row> <col> <value>
//! ```
//!
//! `size` is the row count, except for `psd` where it is the matrix order
//! and `rows = size (size + 1) / 2`. Each constraint row's value is
//! `constant + Σ value·x[col]`. Blank lines and `#` comments are ignored.
//! Floats are written in shortest round-trip form, so dumps reload exactly.

use super::{AffExpr, Cone, ConicProgram, Constraint, VarBlock};
use crate::error::{Error, Result};

const MAX_ROWS: usize = 1 << 20;
const MAX_VARS: usize = 1 << 24;

pub fn write_program(p: &ConicProgram) -> String {
    let mut s = String::from("conic-program v1\n");
    s.push_str(&format!("variables {} {}\n", p.num_vars(), p.blocks().len()));
    for b in p.blocks() {
        let name: String = b.name.chars().map(|c| if c.is_whitespace() { '_' } else { c }).collect();
        s.push_str(&format!("block {} {} {}\n", name, b.offset, b.len));
    }
    let obj = p.objective().compact();
    s.push_str(&format!("objective {:?} {}\n", obj.constant, obj.terms.len()));
    for (j, v) in &obj.terms {
        s.push_str(&format!("{j} {v:?}\n"));
    }
    s.push_str(&format!("constraints {}\n", p.constraints().len()));
    for c in p.constraints() {
        let size = match c.cone {
            Cone::Psd(d) => d,
            _ => c.rows.len(),
        };
        s.push_str(&format!("cone {} {} {}\n", c.cone.name(), size, c.rows.len()));
        let consts: Vec<(usize, f64)> =
            c.rows.iter().enumerate().filter(|(_, r)| r.constant != 0.0).map(|(i, r)| (i, r.constant)).collect();
        s.push_str(&format!("constants {}\n", consts.len()));
        for (i, v) in consts {
            s.push_str(&format!("{i} {v:?}\n"));
        }
        let rows: Vec<AffExpr> = c.rows.iter().map(AffExpr::compact).collect();
        let nnz: usize = rows.iter().map(|r| r.terms.len()).sum();
        s.push_str(&format!("triplets {nnz}\n"));
        for (i, r) in rows.iter().enumerate() {
            for (j, v) in &r.terms {
                s.push_str(&format!("{i} {j} {v:?}\n"));
            }
        }
    }
    s
}

struct Reader<'a> {
    text: &'a str,
    pos: usize,
    line_start: usize,
}

impl<'a> Reader<'a> {
    fn new(text: &'a str) -> Self {
        Self { text, pos: 0, line_start: 0 }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse { offset: self.line_start, message: msg.into() }
    }

    /// Next non-empty, non-comment line split on whitespace.
    fn line(&mut self) -> Result<Vec<&'a str>> {
        loop {
            if self.pos >= self.text.len() {
                self.line_start = self.text.len();
                return Err(self.err("unexpected end of input"));
            }
            let rest = &self.text[self.pos..];
            let end = rest.find('\n').map_or(rest.len(), |i| i + 1);
            self.line_start = self.pos;
            self.pos += end;
            let l = rest[..end].trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            return Ok(l.split_whitespace().collect());
        }
    }

    fn keyword(&mut self, kw: &str, nargs: usize) -> Result<Vec<&'a str>> {
        let toks = self.line()?;
        if toks[0] != kw || toks.len() != nargs + 1 {
            return Err(self.err(format!("expected `{kw}` with {nargs} argument(s)")));
        }
        Ok(toks[1..].to_vec())
    }

    fn usize(&self, tok: &str) -> Result<usize> {
        tok.parse().map_err(|_| self.err(format!("invalid integer `{tok}`")))
    }

    fn f64(&self, tok: &str) -> Result<f64> {
        let v: f64 = tok.parse().map_err(|_| self.err(format!("invalid number `{tok}`")))?;
        if !v.is_finite() {
            return Err(self.err("non-finite coefficient"));
        }
        Ok(v)
    }

    fn finished(&mut self) -> bool {
        while self.pos < self.text.len() {
            let rest = &self.text[self.pos..];
            let end = rest.find('\n').map_or(rest.len(), |i| i + 1);
            let l = rest[..end].trim();
            if !(l.is_empty() || l.starts_with('#')) {
                self.line_start = self.pos;
                return false;
            }
            self.pos += end;
        }
        true
    }
}

pub fn parse_program(text: &str) -> Result<ConicProgram> {
    let mut r = Reader::new(text);
    let head = r.line()?;
    if head != ["conic-program", "v1"] {
        return Err(r.err("missing `conic-program v1` header"));
    }
    let a = r.keyword("variables", 2)?;
    let nvars = r.usize(a[0])?;
    let nblocks = r.usize(a[1])?;
    if nvars > MAX_VARS {
        return Err(r.err("too many variables"));
    }
    let mut blocks = Vec::new();
    for _ in 0..nblocks {
        let a = r.keyword("block", 3)?;
        let offset = r.usize(a[1])?;
        let len = r.usize(a[2])?;
        if offset.checked_add(len).map_or(true, |e| e > nvars) {
            return Err(r.err("block exceeds the variable count"));
        }
        blocks.push(VarBlock { name: a[0].to_string(), offset, len });
    }
    let a = r.keyword("objective", 2)?;
    let mut objective = AffExpr::constant(r.f64(a[0])?);
    let nnz = r.usize(a[1])?;
    for _ in 0..nnz {
        let t = r.line()?;
        if t.len() != 2 {
            return Err(r.err("expected `<col> <value>`"));
        }
        let j = r.usize(t[0])?;
        if j >= nvars {
            return Err(r.err("objective column out of range"));
        }
        objective.terms.push((j, r.f64(t[1])?));
    }
    let a = r.keyword("constraints", 1)?;
    let count = r.usize(a[0])?;
    let mut constraints = Vec::new();
    let mut total_rows = 0usize;
    for _ in 0..count {
        let a = r.keyword("cone", 3)?;
        let size = r.usize(a[1])?;
        let nrows = r.usize(a[2])?;
        let cone = match a[0] {
            "zero" => Cone::Zero,
            "nonneg" => Cone::Nonneg,
            "soc" => Cone::Soc,
            "psd" => Cone::Psd(size),
            other => return Err(r.err(format!("unknown cone `{other}`"))),
        };
        let expected = match cone {
            Cone::Psd(d) => d.checked_mul(d + 1).map(|v| v / 2),
            _ => Some(size),
        };
        if expected != Some(nrows) || nrows == 0 {
            return Err(r.err("cone size and row count disagree"));
        }
        total_rows += nrows;
        if total_rows > MAX_ROWS {
            return Err(r.err("too many constraint rows"));
        }
        let mut rows = vec![AffExpr::zero(); nrows];
        let a = r.keyword("constants", 1)?;
        for _ in 0..r.usize(a[0])? {
            let t = r.line()?;
            if t.len() != 2 {
                return Err(r.err("expected `<row> <value>`"));
            }
            let i = r.usize(t[0])?;
            if i >= nrows {
                return Err(r.err("constant row out of range"));
            }
            rows[i].constant = r.f64(t[1])?;
        }
        let a = r.keyword("triplets", 1)?;
        for _ in 0..r.usize(a[0])? {
            let t = r.line()?;
            if t.len() != 3 {
                return Err(r.err("expected `<row> <col> <value>`"));
            }
            let i = r.usize(t[0])?;
            let j = r.usize(t[1])?;
            if i >= nrows || j >= nvars {
                return Err(r.err("triplet index out of range"));
            }
            rows[i].terms.push((j, r.f64(t[2])?));
        }
        constraints.push(Constraint { cone, rows });
    }
    if !r.finished() {
        return Err(r.err("trailing content after the last constraint"));
    }
    Ok(ConicProgram::from_parts(blocks, nvars, objective, constraints))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{solve, Tolerances};

    fn sample() -> ConicProgram {
        let mut p = ConicProgram::new();
        let t = p.scalar("t");
        let x = p.vector("x", 2);
        p.add_soc(AffExpr::var(t), vec![AffExpr::var(x[0]).plus_const(0.1), AffExpr::var(x[1])]);
        p.add_le(AffExpr::constant(1.0 / 3.0), AffExpr::var(x[0]).plus(&AffExpr::var(x[1])));
        p.add_psd(&[vec![AffExpr::var(t), AffExpr::var(x[0])], vec![AffExpr::var(x[0]), AffExpr::constant(2.0)]]);
        p.minimize(AffExpr::var(t));
        p
    }

    #[test]
    fn dump_round_trips() {
        let p = sample();
        let text = write_program(&p);
        let q = parse_program(&text).unwrap();
        assert_eq!(write_program(&q), text);
        let (a, b) = (solve(&p, &Tolerances::default()), solve(&q, &Tolerances::default()));
        assert_eq!(a.x, b.x);
    }

    #[test]
    fn errors_carry_line_offsets() {
        let text = write_program(&sample());
        let bad = text.replacen("cone soc", "cone cube", 1);
        match parse_program(&bad) {
            Err(Error::Parse { offset, .. }) => assert_eq!(&bad[offset..offset + 9], "cone cube"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn truncated_dump_is_rejected() {
        let text = write_program(&sample());
        assert!(parse_program(&text[..text.len() - 10]).is_err());
    }
}
