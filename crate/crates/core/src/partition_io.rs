//! Line-oriented text format for partitions.
//!
//! ```text
//! # dips-partition v1
//! # config-hash 3fa2...
//! # seed 42
//! # dim 2
//! # params x1 x2
//! # thresholds 25 0
//! # stages 2
//! leaf <id> <eval_id> <lo x dim> <hi x dim> <levels x dim> <cells x dim> <f> <distance> <prior> <ratios x stages>
//! ```
//!
//! Floats are written with Rust's shortest round-trip formatting, so a parse
//! of a written file reproduces every value bit for bit. `lo`/`hi` are for
//! readers; the integer levels and cells are authoritative.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::direct::{Hyperbox, Partition, PartitionMeta, MAX_LEVEL};
use crate::error::{Error, Result};

pub const MAGIC: &str = "# dips-partition v1";

pub fn write_partition(p: &Partition) -> String {
    let mut out = String::new();
    let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
    let _ = writeln!(out, "{MAGIC}");
    let hash = if p.meta.config_hash.is_empty() { "-" } else { &p.meta.config_hash };
    let _ = writeln!(out, "# config-hash {hash}");
    let _ = writeln!(out, "# seed {}", p.meta.seed);
    let _ = writeln!(out, "# dim {}", p.dim);
    let _ = writeln!(out, "# params {}", p.meta.params.join(" "));
    let _ = writeln!(out, "# thresholds {}", join(&p.meta.thresholds));
    let _ = writeln!(out, "# stages {}", p.stages());
    for b in p.leaves.values() {
        let (lo, hi) = b.bounds();
        let levels: Vec<String> = b.levels.iter().map(|l| l.to_string()).collect();
        let cells: Vec<String> = b.cells.iter().map(|c| c.to_string()).collect();
        let mut line = format!(
            "leaf {} {} {} {} {} {} {} {} {}",
            b.id,
            b.eval_id,
            join(&lo),
            join(&hi),
            levels.join(" "),
            cells.join(" "),
            b.f,
            b.distance,
            b.prior
        );
        if !b.ratios.is_empty() {
            line.push(' ');
            line.push_str(&join(&b.ratios));
        }
        let _ = writeln!(out, "{line}");
    }
    out
}

fn bad(line: usize, reason: impl Into<String>) -> Error {
    Error::PartitionFormat { line, reason: reason.into() }
}

fn parse_num<T: FromStr>(tok: &str, line: usize, what: &str) -> Result<T> {
    tok.parse().map_err(|_| bad(line, format!("cannot parse {what} from `{tok}`")))
}

fn header<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>, key: &str) -> Result<(usize, Vec<&'a str>)> {
    let (n, l) = lines.next().ok_or_else(|| bad(0, format!("missing `# {key}` header")))?;
    let rest = l
        .strip_prefix("# ")
        .and_then(|r| r.strip_prefix(key))
        .ok_or_else(|| bad(n, format!("expected `# {key}` header")))?;
    Ok((n, rest.split_whitespace().collect()))
}

pub fn parse_partition(text: &str) -> Result<Partition> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l)).filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, l)) if l.trim_end() == MAGIC => {}
        Some((n, _)) => return Err(bad(n, format!("expected `{MAGIC}`"))),
        None => return Err(bad(0, "empty file")),
    }
    let (n, h) = header(&mut lines, "config-hash")?;
    let config_hash = match h.as_slice() {
        ["-"] => String::new(),
        [x] => x.to_string(),
        _ => return Err(bad(n, "config-hash takes one token")),
    };
    let (n, h) = header(&mut lines, "seed")?;
    let seed = parse_num(h.first().ok_or_else(|| bad(n, "missing seed"))?, n, "seed")?;
    let (n, h) = header(&mut lines, "dim")?;
    let dim: usize = parse_num(h.first().ok_or_else(|| bad(n, "missing dim"))?, n, "dim")?;
    if dim == 0 {
        return Err(bad(n, "dim must be positive"));
    }
    let (_, h) = header(&mut lines, "params")?;
    let params: Vec<String> = h.iter().map(|s| s.to_string()).collect();
    let (n, h) = header(&mut lines, "thresholds")?;
    let thresholds = h.iter().map(|t| parse_num(t, n, "threshold")).collect::<Result<Vec<f64>>>()?;
    let (n, h) = header(&mut lines, "stages")?;
    let stages: usize = parse_num(h.first().ok_or_else(|| bad(n, "missing stages"))?, n, "stages")?;

    let want = 3 + 4 * dim + 3 + stages;
    let mut leaves = BTreeMap::new();
    for (n, l) in lines {
        let tok: Vec<&str> = l.split_whitespace().collect();
        if tok[0] != "leaf" {
            return Err(bad(n, format!("unexpected record `{}`", tok[0])));
        }
        if tok.len() != want {
            return Err(bad(n, format!("expected {want} fields, found {}", tok.len())));
        }
        let id: usize = parse_num(tok[1], n, "id")?;
        let eval_id = parse_num(tok[2], n, "eval id")?;
        let at = 3 + 2 * dim;
        let levels = tok[at..at + dim].iter().map(|t| parse_num(t, n, "level")).collect::<Result<Vec<u8>>>()?;
        let cells = tok[at + dim..at + 2 * dim].iter().map(|t| parse_num(t, n, "cell")).collect::<Result<Vec<u64>>>()?;
        for (l, c) in levels.iter().zip(&cells) {
            if *l > MAX_LEVEL || *c >= 3u64.pow(*l as u32) {
                return Err(bad(n, format!("cell {c} out of range for level {l}")));
            }
        }
        let at = at + 2 * dim;
        let f = parse_num(tok[at], n, "f")?;
        let distance = parse_num(tok[at + 1], n, "distance")?;
        let prior = parse_num(tok[at + 2], n, "prior")?;
        let ratios = tok[at + 3..].iter().map(|t| parse_num(t, n, "ratio")).collect::<Result<Vec<f64>>>()?;
        let b = Hyperbox { id, levels, cells, eval_id, f, distance, ratios, prior };
        if leaves.insert(id, b).is_some() {
            return Err(bad(n, format!("duplicate leaf id {id}")));
        }
    }
    if leaves.is_empty() {
        return Err(bad(0, "no leaves"));
    }
    Ok(Partition {
        dim,
        leaves,
        evals: Vec::new(),
        trace: Vec::new(),
        divisions: Vec::new(),
        calls: 0,
        stop_reason: None,
        meta: PartitionMeta { config_hash, seed, params, thresholds },
    })
}
