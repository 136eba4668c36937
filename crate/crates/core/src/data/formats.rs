//! Line-oriented text formats. Every reader rejects malformed input with the
//! offending line number; every writer prints floats with 17 significant
//! digits so values survive a round trip bit-for-bit.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::candgen::CandidateList;
use crate::error::{Error, Result};
use crate::labels::{Candidate, LabelSet, LabelSpace, MarginalPrediction};
use crate::rerank::RerankedList;

/// Probability given to labels a marginals line does not mention.
pub const P_DEFAULT: f64 = 1e-6;

const MISSING: &str = "NA";

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Numbered non-blank lines; a trailing carriage return is dropped.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .filter(|(_, l)| !l.trim().is_empty())
}

fn split_id<'a>(path: &Path, line_no: usize, line: &'a str) -> Result<(&'a str, &'a str)> {
    let (id, rest) = line.split_once('\t').unwrap_or((line, ""));
    if id.is_empty() {
        return Err(parse_err(path, line_no, "empty instance id"));
    }
    if id.chars().any(char::is_whitespace) {
        return Err(parse_err(path, line_no, format!("instance id {id:?} contains whitespace")));
    }
    Ok((id, rest))
}

fn parse_f64(path: &Path, line_no: usize, field: &str, what: &str) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| parse_err(path, line_no, format!("malformed {what} {field:?}")))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn finish(path: &Path, mut w: BufWriter<fs::File>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

macro_rules! put {
    ($w:expr, $path:expr, $($arg:tt)*) => {
        writeln!($w, $($arg)*).map_err(|e| Error::io($path, e))?
    };
}

/// Hex SHA-256 of a file's bytes.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// One code per line; the line number (from 0) is the label index.
pub fn read_vocab(path: &Path) -> Result<LabelSpace> {
    let text = read_text(path)?;
    let mut codes = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let code = line.strip_suffix('\r').unwrap_or(line);
        if code.is_empty() || code.chars().any(char::is_whitespace) {
            return Err(parse_err(path, i + 1, format!("invalid label code {code:?}")));
        }
        codes.push(code.to_string());
    }
    LabelSpace::new(codes).map_err(|e| parse_err(path, 0, e.to_string()))
}

pub fn write_vocab(path: &Path, space: &LabelSpace) -> Result<()> {
    let mut w = create(path)?;
    for code in space.codes() {
        put!(w, path, "{code}");
    }
    finish(path, w)
}

/// Sparse `id<TAB>code:prob ...` lines; unlisted labels get [`P_DEFAULT`].
pub fn read_marginals(path: &Path, space: &LabelSpace) -> Result<Vec<MarginalPrediction>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (line_no, line) in lines(&text) {
        let (id, rest) = split_id(path, line_no, line)?;
        if !seen.insert(id.to_string()) {
            return Err(parse_err(path, line_no, format!("duplicate instance id {id:?}")));
        }
        let mut probs = vec![P_DEFAULT; space.len()];
        let mut listed = vec![false; space.len()];
        for pair in rest.split(' ').filter(|s| !s.is_empty()) {
            let (code, value) = pair
                .rsplit_once(':')
                .ok_or_else(|| parse_err(path, line_no, format!("expected code:prob, got {pair:?}")))?;
            let idx = space
                .index_of(code)
                .ok_or_else(|| parse_err(path, line_no, format!("unknown label code {code:?}")))?;
            if std::mem::replace(&mut listed[idx], true) {
                return Err(parse_err(path, line_no, format!("label code {code:?} listed twice")));
            }
            let p = parse_f64(path, line_no, value, "probability")?;
            if !(0.0..=1.0).contains(&p) {
                return Err(parse_err(path, line_no, format!("probability {value} is outside [0, 1]")));
            }
            probs[idx] = p;
        }
        out.push(MarginalPrediction::new(id, probs).map_err(|e| parse_err(path, line_no, e.to_string()))?);
    }
    Ok(out)
}

/// Writes every probability that differs from [`P_DEFAULT`].
pub fn write_marginals(path: &Path, space: &LabelSpace, marginals: &[MarginalPrediction]) -> Result<()> {
    let mut w = create(path)?;
    for m in marginals {
        if m.num_labels() != space.len() {
            return Err(Error::input(format!(
                "marginals for {:?} cover {} labels, the vocabulary has {}",
                m.instance_id,
                m.num_labels(),
                space.len()
            )));
        }
        let pairs: Vec<String> = m
            .probs()
            .iter()
            .enumerate()
            .filter(|(_, &p)| p != P_DEFAULT)
            .map(|(i, &p)| format!("{}:{}", space.codes()[i], fmt_f64(p)))
            .collect();
        put!(w, path, "{}\t{}", m.instance_id, pairs.join(" "));
    }
    finish(path, w)
}

/// `id<TAB>code code ...`; keys are instance ids.
pub fn read_gold(path: &Path, space: &LabelSpace) -> Result<BTreeMap<String, LabelSet>> {
    let text = read_text(path)?;
    let mut out = BTreeMap::new();
    for (line_no, line) in lines(&text) {
        let (id, rest) = split_id(path, line_no, line)?;
        let set = space
            .parse_set(rest)
            .map_err(|e| parse_err(path, line_no, e.to_string()))?;
        if out.insert(id.to_string(), set).is_some() {
            return Err(parse_err(path, line_no, format!("duplicate instance id {id:?}")));
        }
    }
    Ok(out)
}

/// Writes `(id, set)` pairs in the given order. Also used for top-1 predictions.
pub fn write_gold<'a, I>(path: &Path, space: &LabelSpace, sets: I) -> Result<()>
where
    I: IntoIterator<Item = (&'a str, &'a LabelSet)>,
{
    let mut w = create(path)?;
    for (id, set) in sets {
        space.check_set(set)?;
        put!(w, path, "{id}\t{}", space.format_set(set));
    }
    finish(path, w)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| MISSING.to_string(), fmt_f64)
}

fn write_rows<'a>(
    path: &Path,
    space: &LabelSpace,
    rows: impl Iterator<Item = (&'a str, usize, &'a Candidate)>,
) -> Result<()> {
    let mut w = create(path)?;
    for (id, rank, c) in rows {
        space.check_set(&c.set)?;
        put!(
            w,
            path,
            "{id}\t{rank}\t{}\t{}\t{}\t{}",
            fmt_f64(c.base_logprob),
            opt(c.rerank_score),
            opt(c.combined_score),
            space.format_set(&c.set)
        );
    }
    finish(path, w)
}

/// Candidate lists in generation order; absent scores are written as `NA`.
pub fn write_candidates(path: &Path, space: &LabelSpace, lists: &[CandidateList]) -> Result<()> {
    write_rows(
        path,
        space,
        lists.iter().flat_map(|l| {
            l.candidates
                .iter()
                .enumerate()
                .map(move |(i, c)| (l.instance_id.as_str(), i + 1, c))
        }),
    )
}

/// Reranked lists, best first, with ranks after reranking.
pub fn write_reranked(path: &Path, space: &LabelSpace, lists: &[RerankedList]) -> Result<()> {
    write_rows(
        path,
        space,
        lists.iter().flat_map(|l| {
            l.candidates
                .iter()
                .enumerate()
                .map(move |(i, c)| (l.instance_id.as_str(), i + 1, &c.candidate))
        }),
    )
}

fn parse_opt(path: &Path, line_no: usize, field: &str, what: &str) -> Result<Option<f64>> {
    if field == MISSING {
        Ok(None)
    } else {
        parse_f64(path, line_no, field, what).map(Some)
    }
}

/// Reads a candidates or reranked file. Each instance's rows must be
/// contiguous with ranks `1, 2, ...`.
pub fn read_candidates(path: &Path, space: &LabelSpace) -> Result<Vec<CandidateList>> {
    let text = read_text(path)?;
    let mut out: Vec<CandidateList> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (line_no, line) in lines(&text) {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 6 {
            return Err(parse_err(path, line_no, format!("expected 6 tab-separated fields, got {}", fields.len())));
        }
        let (id, _) = split_id(path, line_no, line)?;
        let rank: usize = fields[1]
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("malformed rank {:?}", fields[1])))?;
        let base_logprob = parse_f64(path, line_no, fields[2], "base log-probability")?;
        let rerank_score = parse_opt(path, line_no, fields[3], "rerank score")?;
        let combined_score = parse_opt(path, line_no, fields[4], "combined score")?;
        let set = space
            .parse_set(fields[5])
            .map_err(|e| parse_err(path, line_no, e.to_string()))?;
        let candidate = Candidate {
            set,
            base_logprob,
            rerank_score,
            combined_score,
        };
        match out.last_mut() {
            Some(list) if list.instance_id == id => {
                if rank != list.len() + 1 {
                    return Err(parse_err(path, line_no, format!("rank {rank} follows rank {}", list.len())));
                }
                list.candidates.push(candidate);
            }
            _ => {
                if rank != 1 {
                    return Err(parse_err(path, line_no, format!("first candidate of {id:?} has rank {rank}")));
                }
                if !seen.insert(id.to_string()) {
                    return Err(parse_err(path, line_no, format!("rows for {id:?} are not contiguous")));
                }
                out.push(CandidateList {
                    instance_id: id.to_string(),
                    candidates: vec![candidate],
                });
            }
        }
    }
    Ok(out)
}

/// `bitmask<TAB>probability` for every one of the `2^n` sets.
pub fn write_joint_table(path: &Path, probs: &[f64]) -> Result<()> {
    let mut w = create(path)?;
    for (mask, &p) in probs.iter().enumerate() {
        put!(w, path, "{mask}\t{}", fmt_f64(p));
    }
    finish(path, w)
}

/// Reads a complete joint table over `num_labels` labels.
pub fn read_joint_table(path: &Path, num_labels: usize) -> Result<Vec<f64>> {
    if num_labels > 30 {
        return Err(Error::Capability(format!("joint tables over {num_labels} labels are not supported")));
    }
    let size = 1usize << num_labels;
    let text = read_text(path)?;
    let mut probs = vec![f64::NAN; size];
    let mut filled = 0;
    for (line_no, line) in lines(&text) {
        let (mask, value) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(path, line_no, "expected bitmask<TAB>probability"))?;
        let mask: usize = mask
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("malformed bitmask {mask:?}")))?;
        if mask >= size {
            return Err(parse_err(path, line_no, format!("bitmask {mask} exceeds {num_labels} labels")));
        }
        let p = parse_f64(path, line_no, value, "probability")?;
        if !(0.0..=1.0).contains(&p) {
            return Err(parse_err(path, line_no, format!("probability {value} is outside [0, 1]")));
        }
        if !probs[mask].is_nan() {
            return Err(parse_err(path, line_no, format!("bitmask {mask} listed twice")));
        }
        probs[mask] = p;
        filled += 1;
    }
    if filled != size {
        return Err(Error::input(format!(
            "{}: joint table has {filled} of {size} entries",
            path.display()
        )));
    }
    Ok(probs)
}
