//! Self-describing text checkpoints.
//!
//! ```text
//! labelset-rerank-checkpoint<TAB>1
//! kind<TAB>made | masksa
//! num_labels<TAB>N
//! label_digest<TAB><sha256 of the vocabulary>
//! config<TAB><json>
//! ordering<TAB>i<TAB>positions...          (MADE only)
//! connectivity<TAB>i<TAB>degrees...        (MADE only)
//! tensor<TAB>name<TAB>rows<TAB>cols
//! <one line of space-separated values per row>
//! ...
//! end<TAB><sha256 of every preceding byte>
//! ```
//!
//! The trailing digest catches truncation and corruption before any model is
//! assembled.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::config::{MadeConfig, MaskSaConfig};
use crate::error::{Error, Result};
use crate::labels::LabelSpace;
use crate::made::{MadeModel, MadeParams, MaskSet, Ordering};
use crate::masksa::{MaskSaModel, MaskSaParams};
use crate::nn::{DenseLayer, LayerNorm, MultiHeadAttention};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "labelset-rerank-checkpoint";

#[derive(Debug, Clone, PartialEq)]
pub enum Checkpoint {
    Made(MadeModel),
    MaskSa(MaskSaModel),
}

impl Checkpoint {
    pub fn kind(&self) -> &'static str {
        match self {
            Checkpoint::Made(_) => "made",
            Checkpoint::MaskSa(_) => "masksa",
        }
    }

    pub fn label_digest(&self) -> &str {
        match self {
            Checkpoint::Made(m) => m.label_digest(),
            Checkpoint::MaskSa(m) => m.label_digest(),
        }
    }
}

type Named<'a> = Vec<(String, usize, usize, &'a [f64])>;
type NamedMut<'a> = Vec<(String, usize, usize, &'a mut [f64])>;

fn dense<'a>(out: &mut Named<'a>, name: &str, l: &'a DenseLayer) {
    let (r, c) = l.weights.shape();
    out.push((format!("{name}.weights"), r, c, l.weights.as_slice()));
    out.push((format!("{name}.bias"), 1, r, &l.bias));
}

fn dense_mut<'a>(out: &mut NamedMut<'a>, name: &str, l: &'a mut DenseLayer) {
    let (r, c) = l.weights.shape();
    out.push((format!("{name}.weights"), r, c, l.weights.as_mut_slice()));
    out.push((format!("{name}.bias"), 1, r, &mut l.bias));
}

fn norm<'a>(out: &mut Named<'a>, name: &str, l: &'a LayerNorm) {
    out.push((format!("{name}.gain"), 1, l.gain.len(), &l.gain));
    out.push((format!("{name}.shift"), 1, l.shift.len(), &l.shift));
}

fn norm_mut<'a>(out: &mut NamedMut<'a>, name: &str, l: &'a mut LayerNorm) {
    let n = l.gain.len();
    out.push((format!("{name}.gain"), 1, n, &mut l.gain));
    out.push((format!("{name}.shift"), 1, n, &mut l.shift));
}

fn attention<'a>(out: &mut Named<'a>, name: &str, a: &'a MultiHeadAttention) {
    for (part, l) in [("query", &a.query), ("key", &a.key), ("value", &a.value), ("output", &a.output)] {
        dense(out, &format!("{name}.{part}"), l);
    }
}

fn attention_mut<'a>(out: &mut NamedMut<'a>, name: &str, a: &'a mut MultiHeadAttention) {
    for (part, l) in [
        ("query", &mut a.query),
        ("key", &mut a.key),
        ("value", &mut a.value),
        ("output", &mut a.output),
    ] {
        dense_mut(out, &format!("{name}.{part}"), l);
    }
}

fn made_tensors(p: &MadeParams) -> Named<'_> {
    let mut out = Vec::new();
    dense(&mut out, "hidden", &p.hidden);
    dense(&mut out, "output", &p.output);
    out
}

fn made_tensors_mut(p: &mut MadeParams) -> NamedMut<'_> {
    let mut out = Vec::new();
    dense_mut(&mut out, "hidden", &mut p.hidden);
    dense_mut(&mut out, "output", &mut p.output);
    out
}

fn masksa_tensors(p: &MaskSaParams) -> Named<'_> {
    let mut out = Vec::new();
    let (r, c) = p.embedding.shape();
    out.push(("embedding".to_string(), r, c, p.embedding.as_slice()));
    for (i, b) in p.blocks.iter().enumerate() {
        norm(&mut out, &format!("blocks.{i}.attn_norm"), &b.attn_norm);
        attention(&mut out, &format!("blocks.{i}.attention"), &b.attention);
        norm(&mut out, &format!("blocks.{i}.ff_norm"), &b.ff_norm);
        dense(&mut out, &format!("blocks.{i}.ff_in"), &b.ff_in);
        dense(&mut out, &format!("blocks.{i}.ff_out"), &b.ff_out);
    }
    norm(&mut out, "final_norm", &p.final_norm);
    dense(&mut out, "head", &p.head);
    out
}

fn masksa_tensors_mut(p: &mut MaskSaParams) -> NamedMut<'_> {
    let mut out = Vec::new();
    let (r, c) = p.embedding.shape();
    out.push(("embedding".to_string(), r, c, p.embedding.as_mut_slice()));
    for (i, b) in p.blocks.iter_mut().enumerate() {
        norm_mut(&mut out, &format!("blocks.{i}.attn_norm"), &mut b.attn_norm);
        attention_mut(&mut out, &format!("blocks.{i}.attention"), &mut b.attention);
        norm_mut(&mut out, &format!("blocks.{i}.ff_norm"), &mut b.ff_norm);
        dense_mut(&mut out, &format!("blocks.{i}.ff_in"), &mut b.ff_in);
        dense_mut(&mut out, &format!("blocks.{i}.ff_out"), &mut b.ff_out);
    }
    norm_mut(&mut out, "final_norm", &mut p.final_norm);
    dense_mut(&mut out, "head", &mut p.head);
    out
}

fn join<T: ToString>(values: impl IntoIterator<Item = T>) -> String {
    values.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

fn header(kind: &str, num_labels: usize, digest: &str, config: String) -> String {
    format!(
        "{MAGIC}\t{FORMAT_VERSION}\nkind\t{kind}\nnum_labels\t{num_labels}\nlabel_digest\t{digest}\nconfig\t{config}\n"
    )
}

fn push_tensors(text: &mut String, tensors: Named<'_>) {
    for (name, rows, cols, data) in tensors {
        text.push_str(&format!("tensor\t{name}\t{rows}\t{cols}\n"));
        for row in data.chunks(cols.max(1)) {
            text.push_str(&join(row.iter().map(|v| format!("{v:.16e}"))));
            text.push('\n');
        }
    }
}

fn seal(mut text: String) -> String {
    let digest = hex::encode(Sha256::digest(text.as_bytes()));
    text.push_str(&format!("end\t{digest}\n"));
    text
}

fn config_json<T: serde::Serialize>(c: &T) -> String {
    serde_json::to_string(c).expect("configs serialise")
}

pub fn made_to_string(model: &MadeModel) -> String {
    let mut text = header("made", model.num_labels(), model.label_digest(), config_json(model.config()));
    for (i, m) in model.mask_sets().iter().enumerate() {
        text.push_str(&format!("ordering\t{i}\t{}\n", join(m.ordering().as_slice())));
        text.push_str(&format!("connectivity\t{i}\t{}\n", join(m.connectivity())));
    }
    push_tensors(&mut text, made_tensors(model.params()));
    seal(text)
}

pub fn masksa_to_string(model: &MaskSaModel) -> String {
    let mut text = header("masksa", model.num_labels(), model.label_digest(), config_json(model.config()));
    push_tensors(&mut text, masksa_tensors(model.params()));
    seal(text)
}

fn write_atomic(path: &Path, text: &str) -> Result<()> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn save_made(model: &MadeModel, path: &Path) -> Result<()> {
    write_atomic(path, &made_to_string(model))
}

pub fn save_masksa(model: &MaskSaModel, path: &Path) -> Result<()> {
    write_atomic(path, &masksa_to_string(model))
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<()> {
    match checkpoint {
        Checkpoint::Made(m) => save_made(m, path),
        Checkpoint::MaskSa(m) => save_masksa(m, path),
    }
}

struct Reader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

fn bad(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Checkpoint(format!("line {line}: {msg}"))
}

impl<'a> Reader<'a> {
    fn next(&mut self) -> Result<(usize, &'a str)> {
        self.lines
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or_else(|| Error::Checkpoint("unexpected end of checkpoint".into()))
    }

    fn field(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (n, line) = self.next()?;
        match line.split_once('\t') {
            Some((k, v)) if k == key => Ok((n, v)),
            _ => Err(bad(n, format!("expected {key:?}"))),
        }
    }

    fn numbers<T: std::str::FromStr>(line: usize, text: &str, expected: usize) -> Result<Vec<T>> {
        let values: Vec<T> = text
            .split(' ')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| bad(line, format!("malformed number {s:?}"))))
            .collect::<Result<_>>()?;
        if values.len() != expected {
            return Err(bad(line, format!("expected {expected} values, found {}", values.len())));
        }
        Ok(values)
    }

    fn indexed(&mut self, key: &str, index: usize, expected: usize) -> Result<Vec<usize>> {
        let (n, rest) = self.field(key)?;
        let (i, values) = rest.split_once('\t').unwrap_or((rest, ""));
        if i.parse::<usize>().ok() != Some(index) {
            return Err(bad(n, format!("expected {key} {index}")));
        }
        Self::numbers(n, values, expected)
    }

    fn fill(&mut self, tensors: NamedMut<'_>) -> Result<()> {
        for (name, rows, cols, data) in tensors {
            let (n, rest) = self.field("tensor")?;
            let declared: Vec<&str> = rest.split('\t').collect();
            if declared != [name.as_str(), &rows.to_string(), &cols.to_string()] {
                return Err(bad(n, format!("expected tensor {name} of shape {rows}x{cols}, found {rest:?}")));
            }
            for row in data.chunks_mut(cols.max(1)) {
                let (n, line) = self.next()?;
                let values: Vec<f64> = Self::numbers(n, line, row.len())?;
                row.copy_from_slice(&values);
            }
        }
        Ok(())
    }

    fn finish(&mut self) -> Result<()> {
        match self.lines.next() {
            None => Ok(()),
            Some((i, _)) => Err(bad(i + 1, "unexpected content after the parameters")),
        }
    }
}

/// Splits off and verifies the `end` line, returning the body.
fn verify(text: &str) -> Result<&str> {
    let trimmed = text
        .strip_suffix('\n')
        .ok_or_else(|| Error::Checkpoint("checkpoint is truncated".into()))?;
    let (body_len, last) = match trimmed.rfind('\n') {
        Some(i) => (i + 1, &trimmed[i + 1..]),
        None => return Err(Error::Checkpoint("checkpoint is truncated".into())),
    };
    let digest = last
        .strip_prefix("end\t")
        .ok_or_else(|| Error::Checkpoint("checkpoint is truncated: missing end marker".into()))?;
    let body = &text[..body_len];
    if hex::encode(Sha256::digest(body.as_bytes())) != digest {
        return Err(Error::Checkpoint("checkpoint digest mismatch; the file is corrupt".into()));
    }
    Ok(body)
}

/// Parses a checkpoint and checks it was trained on `space`.
pub fn checkpoint_from_str(text: &str, space: &LabelSpace) -> Result<Checkpoint> {
    let body = verify(text)?;
    let mut r = Reader {
        lines: body.lines().enumerate(),
    };
    let (n, version) = r.field(MAGIC)?;
    if version != FORMAT_VERSION.to_string() {
        return Err(bad(n, format!("unsupported format version {version}; expected {FORMAT_VERSION}")));
    }
    let (_, kind) = r.field("kind")?;
    let (n, num_labels) = r.field("num_labels")?;
    let num_labels: usize = num_labels.parse().map_err(|_| bad(n, "malformed label count"))?;
    let (_, digest) = r.field("label_digest")?;
    if digest != space.digest() || num_labels != space.len() {
        return Err(Error::Checkpoint(format!(
            "label vocabulary digest mismatch: checkpoint {digest}, vocabulary {}",
            space.digest()
        )));
    }
    let (n, config) = r.field("config")?;
    match kind {
        "made" => {
            let config: MadeConfig = serde_json::from_str(config).map_err(|e| bad(n, e))?;
            config.validate()?;
            let mut masks = Vec::with_capacity(config.n_orderings);
            for i in 0..config.n_orderings {
                let ordering = Ordering::new(r.indexed("ordering", i, num_labels)?)?;
                let connectivity = r.indexed("connectivity", i, config.hidden)?;
                masks.push(MaskSet::new(ordering, connectivity)?);
            }
            let mut params = MadeParams {
                hidden: DenseLayer::zeros(num_labels, config.hidden),
                output: DenseLayer::zeros(config.hidden, num_labels),
            };
            r.fill(made_tensors_mut(&mut params))?;
            r.finish()?;
            Ok(Checkpoint::Made(MadeModel::from_parts(
                num_labels,
                digest.to_string(),
                config,
                params,
                masks,
            )?))
        }
        "masksa" => {
            let config: MaskSaConfig = serde_json::from_str(config).map_err(|e| bad(n, e))?;
            let mut params = MaskSaParams::new(num_labels, &config)?;
            r.fill(masksa_tensors_mut(&mut params))?;
            r.finish()?;
            Ok(Checkpoint::MaskSa(MaskSaModel::from_parts(
                num_labels,
                digest.to_string(),
                config,
                params,
            )?))
        }
        other => Err(Error::Checkpoint(format!("unknown model kind {other:?}"))),
    }
}

pub fn load_checkpoint(path: &Path, space: &LabelSpace) -> Result<Checkpoint> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_str(&text, space)
}
