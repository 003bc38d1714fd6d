use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Language, Version};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ppmi,
    Sgns,
    Cbow,
    Glove,
    External,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Ppmi => "ppmi",
            ModelKind::Sgns => "sgns",
            ModelKind::Cbow => "cbow",
            ModelKind::Glove => "glove",
            ModelKind::External => "external",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_lowercase().as_str() {
            "ppmi" => Ok(ModelKind::Ppmi),
            "sgns" | "skipgram" | "skip-gram" => Ok(ModelKind::Sgns),
            "cbow" => Ok(ModelKind::Cbow),
            "glove" => Ok(ModelKind::Glove),
            "external" => Ok(ModelKind::External),
            other => Err(Error::Config(format!("unknown model `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMetadata {
    pub model: ModelKind,
    pub language: Option<Language>,
    pub version: Option<Version>,
    pub seed: u64,
    pub learning_rate: Option<f64>,
    pub run_index: usize,
}

impl EmbeddingMetadata {
    pub fn new(model: ModelKind) -> Self {
        EmbeddingMetadata {
            model,
            language: None,
            version: None,
            seed: 0,
            learning_rate: None,
            run_index: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Vectors {
    /// Row-major `words × dim` values.
    Dense { dim: usize, data: Vec<f64> },
    /// Sorted `(column, value)` rows over `columns` dimensions.
    Sparse {
        columns: usize,
        rows: Vec<Vec<(u32, f64)>>,
    },
}

/// Word vectors with the words they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    words: Vec<String>,
    index: HashMap<String, u32>,
    vectors: Vectors,
    pub metadata: EmbeddingMetadata,
}

impl EmbeddingMatrix {
    pub fn new(words: Vec<String>, vectors: Vectors, metadata: EmbeddingMetadata) -> Result<Self> {
        let rows = match &vectors {
            Vectors::Dense { dim, data } => {
                if *dim == 0 || data.len() % dim != 0 {
                    return Err(Error::InvalidParameter(format!(
                        "dense data of length {} does not divide into rows of {dim}",
                        data.len()
                    )));
                }
                data.len() / dim
            }
            Vectors::Sparse { rows, .. } => rows.len(),
        };
        if rows != words.len() {
            return Err(Error::InvalidParameter(format!(
                "{} words but {rows} vectors",
                words.len()
            )));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i as u32).is_some() {
                return Err(Error::DuplicateWord(w.clone()));
            }
        }
        Ok(EmbeddingMatrix {
            words,
            index,
            vectors,
            metadata,
        })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn vectors(&self) -> &Vectors {
        &self.vectors
    }

    /// Dimensionality of dense vectors; `None` for sparse rows.
    pub fn dim(&self) -> Option<usize> {
        match &self.vectors {
            Vectors::Dense { dim, .. } => Some(*dim),
            Vectors::Sparse { .. } => None,
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.vectors, Vectors::Sparse { .. })
    }

    /// A dense row. Panics on sparse matrices.
    pub fn dense_row(&self, id: u32) -> &[f64] {
        match &self.vectors {
            Vectors::Dense { dim, data } => &data[id as usize * dim..(id as usize + 1) * dim],
            Vectors::Sparse { .. } => panic!("dense_row on a sparse embedding"),
        }
    }

    pub fn is_zero_row(&self, id: u32) -> bool {
        match &self.vectors {
            Vectors::Dense { .. } => self.dense_row(id).iter().all(|&v| v == 0.0),
            Vectors::Sparse { rows, .. } => rows[id as usize].iter().all(|&(_, v)| v == 0.0),
        }
    }

    /// Number of all-zero vectors.
    pub fn zero_rows(&self) -> usize {
        (0..self.len() as u32).filter(|&i| self.is_zero_row(i)).count()
    }
}

/// Writes a dense embedding as text: a `<count> <dim>` header, then one
/// `<word> <v1> ... <vdim>` line per word with 9 significant digits.
pub fn export_embeddings(emb: &EmbeddingMatrix, path: &Path) -> Result<()> {
    let Vectors::Dense { dim, .. } = emb.vectors() else {
        return Err(Error::InvalidParameter(
            "text export needs a dense embedding; use export_sparse_embeddings".into(),
        ));
    };
    let mut out = String::new();
    writeln!(out, "{} {}", emb.len(), dim).expect("write to String");
    for (i, word) in emb.words().iter().enumerate() {
        check_word(word)?;
        out.push_str(word);
        for v in emb.dense_row(i as u32) {
            write!(out, " {v:.8e}").expect("write to String");
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes a sparse embedding as text: a `<count> <columns> sparse` header,
/// then `<word> <column>:<value> ...` per word.
pub fn export_sparse_embeddings(emb: &EmbeddingMatrix, path: &Path) -> Result<()> {
    let Vectors::Sparse { columns, rows } = emb.vectors() else {
        return Err(Error::InvalidParameter("expected a sparse embedding".into()));
    };
    let mut out = String::new();
    writeln!(out, "{} {} sparse", emb.len(), columns).expect("write to String");
    for (word, row) in emb.words().iter().zip(rows) {
        check_word(word)?;
        out.push_str(word);
        for (c, v) in row {
            write!(out, " {c}:{v:.16e}").expect("write to String");
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn check_word(word: &str) -> Result<()> {
    if word.is_empty() || word.chars().any(char::is_whitespace) {
        return Err(Error::InvalidParameter(format!("word `{word}` cannot be written")));
    }
    Ok(())
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Reads either text format written by the exporters.
pub fn import_embeddings(path: &Path) -> Result<EmbeddingMatrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(&text)
}

pub fn parse_embeddings(text: &str) -> Result<EmbeddingMatrix> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing header"))?
        .split_whitespace()
        .collect();
    let sparse = match header.as_slice() {
        [_, _] => false,
        [_, _, "sparse"] => true,
        _ => return Err(parse_err(1, "expected `<count> <dim>` header")),
    };
    let count: usize = header[0].parse().map_err(|_| parse_err(1, "invalid word count"))?;
    let dim: usize = header[1].parse().map_err(|_| parse_err(1, "invalid dimension"))?;
    if dim == 0 && !sparse {
        return Err(parse_err(1, "dimension must be positive"));
    }

    let mut words = Vec::with_capacity(count);
    let mut seen = HashMap::with_capacity(count);
    let mut data = Vec::with_capacity(if sparse { 0 } else { count * dim });
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        if words.len() == count {
            return Err(parse_err(line_no, format!("more rows than the {count} in the header")));
        }
        let mut fields = line.split_whitespace();
        let word = fields.next().expect("non-empty line").to_string();
        if seen.insert(word.clone(), line_no).is_some() {
            return Err(Error::DuplicateWord(word));
        }
        if sparse {
            let mut row = Vec::new();
            for f in fields {
                let (c, v) = f
                    .split_once(':')
                    .ok_or_else(|| parse_err(line_no, format!("expected column:value, found `{f}`")))?;
                let c: u32 = c.parse().map_err(|_| parse_err(line_no, format!("invalid column `{c}`")))?;
                let v: f64 = v.parse().map_err(|_| parse_err(line_no, format!("invalid value `{v}`")))?;
                if c as usize >= dim {
                    return Err(parse_err(line_no, format!("column {c} outside {dim} columns")));
                }
                row.push((c, v));
            }
            rows.push(row);
        } else {
            let before = data.len();
            for f in fields {
                data.push(f.parse::<f64>().map_err(|_| parse_err(line_no, format!("invalid value `{f}`")))?);
            }
            let found = data.len() - before;
            if found != dim {
                return Err(parse_err(line_no, format!("expected {dim} values, found {found}")));
            }
        }
        words.push(word);
    }
    if words.len() != count {
        return Err(parse_err(
            text.lines().count() + 1,
            format!("header announces {count} rows, found {}", words.len()),
        ));
    }
    let vectors = if sparse {
        Vectors::Sparse { columns: dim, rows }
    } else {
        Vectors::Dense { dim, data }
    };
    EmbeddingMatrix::new(words, vectors, EmbeddingMetadata::new(ModelKind::External))
}
