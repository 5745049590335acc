//! Instance files.
//!
//! Native format, one record per line, `#` starts a comment:
//!
//! ```text
//! mfopt-instance 1
//! n_vars 3
//! kind generic
//! objective 2
//! -1.5 0 1          # coefficient, then variable indices
//! 2
//! inequalities 1
//! constraint 2
//! 1 0
//! -1                # constant term
//! equalities 0
//! ```
//!
//! For `kind kp` the polynomial sections read `derived` and are followed by
//! `gains`, `weights` (one line each) and `capacity`. For `kind qkp` the
//! matrix follows as `quadratic`, then `n` lines holding row `i` from column
//! `i` onward. Numbers are written in shortest round-trip form, so reading a
//! written instance gives back an equal instance.
//!
//! The Billionet-Soutif QKP layout is also accepted: an optional name line,
//! `n`, the `n` linear profits, the upper-triangular pair profits row by row,
//! a constraint type (`0`), the capacity and the `n` weights. Profits are
//! maximized there, so `q_ii = p_i` and `q_ij = p_ij / 2` for `i != j`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::instance::{ProblemInstance, ProblemKind, Structure, SymMatrix};
use crate::poly::{MultilinearPolynomial, Term};

const MAGIC: &str = "mfopt-instance";
const VERSION: u32 = 1;

pub fn write_instance(instance: &ProblemInstance, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_native_string(instance))?;
    Ok(())
}

/// Reads either format; the native one is recognized by its header line.
pub fn read_instance(path: impl AsRef<Path>) -> Result<ProblemInstance> {
    parse_instance(&fs::read_to_string(path)?)
}

pub fn parse_instance(text: &str) -> Result<ProblemInstance> {
    let first = text
        .lines()
        .map(strip_comment)
        .find(|l| !l.trim().is_empty())
        .ok_or(Error::Empty)?;
    if first.split_whitespace().next() == Some(MAGIC) {
        parse_native(text)
    } else {
        parse_billionet_soutif(text)
    }
}

fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("")
}

pub fn to_native_string(instance: &ProblemInstance) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC} {VERSION}");
    let _ = writeln!(s, "n_vars {}", instance.n_vars());
    let _ = writeln!(s, "kind {}", instance.kind());
    match instance.structure() {
        Structure::Generic => {
            let obj = instance.objective();
            let _ = writeln!(s, "objective {}", obj.terms().len());
            write_terms(&mut s, &obj);
            write_constraints(&mut s, "inequalities", instance.inequalities());
            write_constraints(&mut s, "equalities", instance.equalities());
        }
        Structure::Knapsack(k) => {
            write_derived(&mut s);
            let _ = writeln!(s, "gains {}", join(&k.gains));
            let _ = writeln!(s, "weights {}", join(&k.weights));
            let _ = writeln!(s, "capacity {}", k.capacity);
        }
        Structure::Quadratic(q) => {
            write_derived(&mut s);
            let _ = writeln!(s, "weights {}", join(&q.weights));
            let _ = writeln!(s, "capacity {}", q.capacity);
            let _ = writeln!(s, "quadratic");
            for i in 0..q.matrix.n() {
                let _ = writeln!(s, "{}", join(&q.matrix.row(i)[i..]));
            }
        }
    }
    s
}

fn write_derived(s: &mut String) {
    s.push_str("objective derived\ninequalities derived\nequalities derived\n");
}

fn write_terms(s: &mut String, p: &MultilinearPolynomial) {
    for t in p.terms() {
        let _ = write!(s, "{}", t.coeff);
        for v in &t.vars {
            let _ = write!(s, " {v}");
        }
        s.push('\n');
    }
}

fn write_constraints(s: &mut String, header: &str, cs: &[MultilinearPolynomial]) {
    let _ = writeln!(s, "{header} {}", cs.len());
    for c in cs {
        let _ = writeln!(s, "constraint {}", c.terms().len());
        write_terms(s, c);
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

/// Non-empty, comment-stripped lines with their 1-based numbers.
struct Lines<'a> {
    inner: Box<dyn Iterator<Item = (usize, Vec<&'a str>)> + 'a>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        let inner = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, strip_comment(l).split_whitespace().collect::<Vec<_>>()))
            .filter(|(_, toks)| !toks.is_empty());
        Self {
            inner: Box::new(inner),
            last: 0,
        }
    }

    fn next(&mut self, what: &str) -> Result<(usize, Vec<&'a str>)> {
        match self.inner.next() {
            Some((n, toks)) => {
                self.last = n;
                Ok((n, toks))
            }
            None => Err(Error::Parse {
                line: self.last + 1,
                msg: format!("unexpected end of file, expected {what}"),
            }),
        }
    }

    /// A line of the form `key value...`; returns the values.
    fn keyed(&mut self, key: &str) -> Result<(usize, Vec<&'a str>)> {
        let (n, toks) = self.next(key)?;
        if toks[0] != key {
            return Err(parse_err(n, format!("expected `{key}`, found `{}`", toks[0])));
        }
        Ok((n, toks[1..].to_vec()))
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn num<T: std::str::FromStr>(line: usize, tok: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| parse_err(line, format!("invalid number `{tok}`")))
}

fn single<'a>(line: usize, vals: &[&'a str]) -> Result<&'a str> {
    match vals {
        [v] => Ok(v),
        _ => Err(parse_err(line, format!("expected one value, found {}", vals.len()))),
    }
}

fn floats(line: usize, vals: &[&str], expected: usize) -> Result<Vec<f64>> {
    if vals.len() != expected {
        return Err(Error::Validation(format!(
            "line {line}: expected {expected} values, found {}",
            vals.len()
        )));
    }
    vals.iter().map(|t| num(line, t)).collect()
}

fn parse_native(text: &str) -> Result<ProblemInstance> {
    let mut lines = Lines::new(text);
    let (n, vals) = lines.keyed(MAGIC)?;
    let version: u32 = num(n, single(n, &vals)?)?;
    if version != VERSION {
        return Err(parse_err(n, format!("unsupported format version {version}")));
    }
    let (n, vals) = lines.keyed("n_vars")?;
    let n_vars: usize = num(n, single(n, &vals)?)?;
    let (n, vals) = lines.keyed("kind")?;
    let kind: ProblemKind = single(n, &vals)?
        .parse()
        .map_err(|_| parse_err(n, format!("unknown kind `{}`", vals[0])))?;

    match kind {
        ProblemKind::Generic => {
            let (n, vals) = lines.keyed("objective")?;
            let count = num(n, single(n, &vals)?)?;
            let objective = parse_terms(&mut lines, n_vars, count)?;
            let inequalities = parse_constraints(&mut lines, "inequalities", n_vars)?;
            let equalities = parse_constraints(&mut lines, "equalities", n_vars)?;
            finish(&mut lines, ProblemInstance::generic(objective, inequalities, equalities))
        }
        ProblemKind::Kp | ProblemKind::Qkp => {
            for key in ["objective", "inequalities", "equalities"] {
                let (n, vals) = lines.keyed(key)?;
                if single(n, &vals)? != "derived" {
                    return Err(parse_err(n, format!("`{key}` must be `derived` for kind {kind}")));
                }
            }
            let gains = if kind == ProblemKind::Kp {
                let (n, vals) = lines.keyed("gains")?;
                Some(floats(n, &vals, n_vars)?)
            } else {
                None
            };
            let (n, vals) = lines.keyed("weights")?;
            let weights = floats(n, &vals, n_vars)?;
            let (n, vals) = lines.keyed("capacity")?;
            let capacity = num(n, single(n, &vals)?)?;
            let inst = match gains {
                Some(g) => ProblemInstance::knapsack(g, weights, capacity),
                None => {
                    let (n, vals) = lines.keyed("quadratic")?;
                    if !vals.is_empty() {
                        return Err(parse_err(n, "`quadratic` takes no values"));
                    }
                    let mut upper = Vec::with_capacity(n_vars * (n_vars + 1) / 2);
                    for i in 0..n_vars {
                        let (n, toks) = lines.next("matrix row")?;
                        upper.extend(floats(n, &toks, n_vars - i)?);
                    }
                    ProblemInstance::quadratic_knapsack(SymMatrix::from_upper_triangle(n_vars, &upper)?, weights, capacity)
                }
            };
            finish(&mut lines, inst)
        }
    }
}

fn finish(lines: &mut Lines<'_>, inst: Result<ProblemInstance>) -> Result<ProblemInstance> {
    if let Some((n, toks)) = lines.inner.next() {
        return Err(parse_err(n, format!("trailing content `{}`", toks.join(" "))));
    }
    inst
}

fn parse_terms(lines: &mut Lines<'_>, n_vars: usize, count: usize) -> Result<MultilinearPolynomial> {
    let mut terms = Vec::with_capacity(count);
    for _ in 0..count {
        let (n, toks) = lines.next("term")?;
        let coeff: f64 = num(n, toks[0])?;
        let vars = toks[1..]
            .iter()
            .map(|t| num::<usize>(n, t))
            .collect::<Result<Vec<_>>>()?;
        if let Some(v) = vars.iter().find(|&&v| v >= n_vars) {
            return Err(Error::Validation(format!(
                "line {n}: variable index {v} out of range for {n_vars} variables"
            )));
        }
        terms.push(Term::new(coeff, vars));
    }
    MultilinearPolynomial::new(n_vars, terms)
}

fn parse_constraints(lines: &mut Lines<'_>, key: &str, n_vars: usize) -> Result<Vec<MultilinearPolynomial>> {
    let (n, vals) = lines.keyed(key)?;
    let count: usize = num(n, single(n, &vals)?)?;
    (0..count)
        .map(|_| {
            let (n, vals) = lines.keyed("constraint")?;
            let terms = num(n, single(n, &vals)?)?;
            parse_terms(lines, n_vars, terms)
        })
        .collect()
}

struct Tokens<'a> {
    inner: std::iter::Peekable<Box<dyn Iterator<Item = (usize, &'a str)> + 'a>>,
    end_line: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let it: Box<dyn Iterator<Item = (usize, &'a str)> + 'a> = Box::new(
            text.lines()
                .enumerate()
                .flat_map(|(i, l)| l.split_whitespace().map(move |t| (i + 1, t))),
        );
        Self {
            inner: it.peekable(),
            end_line: text.lines().count() + 1,
        }
    }

    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        self.inner.next().ok_or_else(|| Error::Parse {
            line: self.end_line,
            msg: format!("unexpected end of file, expected {what}"),
        })
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let (l, t) = self.next(what)?;
        num(l, t)
    }
}

/// Reads the Billionet-Soutif flat layout.
pub fn parse_billionet_soutif(text: &str) -> Result<ProblemInstance> {
    let mut toks = Tokens::new(text);
    let (mut line, mut size_tok) = toks.next("instance size")?;
    if size_tok.parse::<f64>().is_err() {
        // name line
        let name_line = line;
        (line, size_tok) = toks.next("instance size")?;
        if line == name_line {
            return Err(parse_err(line, "name line must hold a single token"));
        }
    }
    let n: usize = num(line, size_tok)?;
    if n == 0 {
        return Err(Error::Validation(format!("line {line}: instance size must be positive")));
    }

    let mut matrix = SymMatrix::zeros(n);
    for i in 0..n {
        let p = toks.f64("linear profit")?;
        matrix.set(i, i, p);
    }
    for i in 0..n {
        for j in i + 1..n {
            let p = toks.f64("pair profit")?;
            matrix.set(i, j, p / 2.0);
        }
    }
    let kind = toks.f64("constraint type")?;
    if kind != 0.0 {
        return Err(Error::Validation(format!("unsupported constraint type {kind}")));
    }
    let capacity = toks.f64("capacity")?;
    let weights = (0..n).map(|_| toks.f64("weight")).collect::<Result<Vec<_>>>()?;
    if let Some((l, t)) = toks.inner.peek() {
        return Err(parse_err(*l, format!("trailing content `{t}`")));
    }
    ProblemInstance::quadratic_knapsack(matrix, weights, capacity)
}
