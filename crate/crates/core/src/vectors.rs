//! Keyed word vectors and the four similarity queries served over them.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::num::{cosine_with_norms, norm};

/// Mean vectors shorter than this are treated as degenerate.
pub const DEGENERATE_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VectorError {
    #[error("unknown term `{0}`")]
    UnknownTerm(String),
    #[error("term `{0}` has a zero vector")]
    ZeroVector(String),
    #[error("cluster center is degenerate (mean norm below 1e-12)")]
    DegenerateCenter,
    #[error("mean vector of a term set is zero")]
    DegenerateMean,
    #[error("term set is empty")]
    EmptySet,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("malformed model file at line {line}: {reason}")]
    MalformedModelFile { line: usize, reason: String },
}

/// Cosine similarity, always inside [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimilarityScore(f64);

impl SimilarityScore {
    /// Clamps into [-1, 1]; NaN maps to -1.
    pub fn new(value: f64) -> Self {
        if value.is_nan() {
            SimilarityScore(-1.0)
        } else {
            SimilarityScore(value.clamp(-1.0, 1.0))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl From<SimilarityScore> for f64 {
    fn from(s: SimilarityScore) -> f64 {
        s.0
    }
}

/// Immutable term → vector table.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyedVectors {
    terms: Vec<String>,
    index: BTreeMap<String, usize>,
    data: Vec<f64>,
    norms: Vec<f64>,
    dim: usize,
}

impl KeyedVectors {
    /// Validates and wraps a row-major `terms.len() × dim` matrix.
    pub fn new(terms: Vec<String>, data: Vec<f64>, dim: usize) -> Result<Self, VectorError> {
        let invalid = |msg: String| Err(VectorError::InvalidModel(msg));
        if dim == 0 {
            return invalid("dimension must be at least 1".into());
        }
        if data.len() != terms.len() * dim {
            return invalid(format!("{} values for {} terms of dimension {dim}", data.len(), terms.len()));
        }
        let mut index = BTreeMap::new();
        for (i, t) in terms.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return invalid(format!("term {t:?} is empty or contains whitespace"));
            }
            if index.insert(t.clone(), i).is_some() {
                return invalid(format!("duplicate term `{t}`"));
            }
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return invalid(format!("non-finite coordinate in row of `{}`", terms[pos / dim]));
        }
        let norms: Vec<f64> = data.chunks_exact(dim).map(norm).collect();
        if !norms.iter().any(|&n| n > 0.0) {
            return invalid("every vector is zero".into());
        }
        Ok(KeyedVectors { terms, index, data, norms, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn contains(&self, term: &str) -> bool {
        self.index.contains_key(term)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn vector(&self, term: &str) -> Option<&[f64]> {
        self.index.get(term).map(|&i| self.row(i))
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn lookup(&self, term: &str) -> Result<usize, VectorError> {
        self.index.get(term).copied().ok_or_else(|| VectorError::UnknownTerm(term.into()))
    }

    fn lookup_nonzero(&self, term: &str) -> Result<usize, VectorError> {
        let i = self.lookup(term)?;
        if self.norms[i] > 0.0 {
            Ok(i)
        } else {
            Err(VectorError::ZeroVector(term.into()))
        }
    }

    /// Cosine between two term vectors.
    pub fn similarity(&self, a: &str, b: &str) -> Result<SimilarityScore, VectorError> {
        let (i, j) = (self.lookup_nonzero(a)?, self.lookup_nonzero(b)?);
        Ok(SimilarityScore::new(cosine_with_norms(self.row(i), self.row(j), self.norms[i], self.norms[j])))
    }

    /// The `k` nearest terms by cosine, query excluded, ties in term order.
    /// Zero vectors never appear in the result.
    pub fn most_similar(&self, term: &str, k: usize) -> Result<Vec<(String, SimilarityScore)>, VectorError> {
        if k == 0 {
            return Err(VectorError::ZeroK);
        }
        let q = self.lookup_nonzero(term)?;
        let mut scored: Vec<(usize, f64)> = (0..self.len())
            .filter(|&i| i != q && self.norms[i] > 0.0)
            .map(|i| (i, cosine_with_norms(self.row(q), self.row(i), self.norms[q], self.norms[i])))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| self.terms[a.0].cmp(&self.terms[b.0])));
        scored.truncate(k);
        Ok(scored.into_iter().map(|(i, s)| (self.terms[i].clone(), SimilarityScore::new(s))).collect())
    }

    /// Unit-normalized mean of the unit-normalized member vectors.
    pub fn cluster_center<S: AsRef<str>>(&self, terms: &[S]) -> Result<Vec<f64>, VectorError> {
        if terms.is_empty() {
            return Err(VectorError::EmptySet);
        }
        let mut mean = vec![0.0; self.dim];
        for t in terms {
            let i = self.lookup_nonzero(t.as_ref())?;
            let n = self.norms[i];
            for (m, x) in mean.iter_mut().zip(self.row(i)) {
                *m += x / n;
            }
        }
        for m in &mut mean {
            *m /= terms.len() as f64;
        }
        let n = norm(&mean);
        if n < DEGENERATE_NORM {
            return Err(VectorError::DegenerateCenter);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        Ok(mean)
    }

    /// Arithmetic mean of raw member vectors, duplicates counted.
    pub fn mean_vector<S: AsRef<str>>(&self, terms: &[S]) -> Result<Vec<f64>, VectorError> {
        if terms.is_empty() {
            return Err(VectorError::EmptySet);
        }
        let mut mean = vec![0.0; self.dim];
        for t in terms {
            let i = self.lookup(t.as_ref())?;
            for (m, x) in mean.iter_mut().zip(self.row(i)) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= terms.len() as f64;
        }
        Ok(mean)
    }

    /// Cosine between the raw mean vectors of two term sets.
    pub fn n_similarity<A: AsRef<str>, B: AsRef<str>>(
        &self,
        set_a: &[A],
        set_b: &[B],
    ) -> Result<SimilarityScore, VectorError> {
        let a = self.mean_vector(set_a)?;
        let b = self.mean_vector(set_b)?;
        let (na, nb) = (norm(&a), norm(&b));
        if !(na > 0.0 && nb > 0.0) {
            return Err(VectorError::DegenerateMean);
        }
        Ok(SimilarityScore::new(cosine_with_norms(&a, &b, na, nb)))
    }

    /// Text model format: a `<count> <dim>` header, then one
    /// `<term> <v1> … <vd>` line per term with 9 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.data.len() * 16);
        let _ = writeln!(out, "{} {}", self.len(), self.dim);
        for (i, t) in self.terms.iter().enumerate() {
            out.push_str(t);
            for &x in self.row(i) {
                out.push(' ');
                out.push_str(&format_sig9(x));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, VectorError> {
        let bad = |line: usize, reason: String| VectorError::MalformedModelFile { line, reason };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
        let (_, header) = lines.next().ok_or_else(|| bad(1, "missing header".into()))?;
        let mut fields = header.split_whitespace();
        let parse_count = |f: Option<&str>| f.and_then(|s| s.parse::<usize>().ok());
        let (rows, dim) = match (parse_count(fields.next()), parse_count(fields.next()), fields.next()) {
            (Some(r), Some(d), None) if d > 0 => (r, d),
            _ => return Err(bad(1, format!("expected `<count> <dim>`, got {header:?}"))),
        };
        let mut terms = Vec::with_capacity(rows);
        let mut data = Vec::with_capacity(rows * dim);
        let mut seen = BTreeMap::new();
        for (no, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            if terms.len() == rows {
                return Err(bad(no, format!("more than {rows} vector lines")));
            }
            let mut parts = line.split(' ').filter(|p| !p.is_empty());
            let term = parts.next().ok_or_else(|| bad(no, "missing term".into()))?;
            if seen.insert(term.to_string(), no).is_some() {
                return Err(bad(no, format!("duplicate term `{term}`")));
            }
            let before = data.len();
            for p in parts {
                let x: f64 = p.parse().map_err(|_| bad(no, format!("non-numeric coordinate {p:?}")))?;
                if !x.is_finite() {
                    return Err(bad(no, format!("non-finite coordinate {p:?}")));
                }
                data.push(x);
            }
            if data.len() - before != dim {
                return Err(bad(no, format!("expected {dim} coordinates, got {}", data.len() - before)));
            }
            terms.push(term.to_string());
        }
        if terms.len() != rows {
            return Err(bad(text.lines().count(), format!("header declares {rows} terms, found {}", terms.len())));
        }
        KeyedVectors::new(terms, data, dim).map_err(|e| bad(1, e.to_string()))
    }
}

/// Shortest-form decimal with 9 significant digits, like C's `%.9g`.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').unwrap_or((&sci, "0"));
    let exp: i32 = exp.parse().unwrap_or(0);
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.into()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').into()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(rows: &[(&str, &[f64])]) -> KeyedVectors {
        let dim = rows[0].1.len();
        KeyedVectors::new(
            rows.iter().map(|(t, _)| String::from(*t)).collect(),
            rows.iter().flat_map(|(_, v)| v.iter().copied()).collect(),
            dim,
        )
        .unwrap()
    }

    #[test]
    fn similarity_examples() {
        let m = model(&[("x", &[1.0, 0.0]), ("y", &[0.0, 1.0]), ("z", &[-1.0, 0.0]), ("o", &[0.0, 0.0])]);
        assert_eq!(m.similarity("x", "x").unwrap().value(), 1.0);
        assert_eq!(m.similarity("x", "y").unwrap().value(), 0.0);
        assert_eq!(m.similarity("x", "z").unwrap().value(), -1.0);
        assert_eq!(m.similarity("x", "nope"), Err(VectorError::UnknownTerm("nope".into())));
        assert_eq!(m.similarity("o", "x"), Err(VectorError::ZeroVector("o".into())));
    }

    #[test]
    fn most_similar_small_vocab_and_ties() {
        let m = model(&[("a", &[1.0, 0.0]), ("b", &[0.5, 0.5])]);
        assert_eq!(m.most_similar("a", 10).unwrap().len(), 1);
        let m = model(&[("q", &[1.0, 0.1]), ("zeta", &[1.0, 1.0]), ("alpha", &[1.0, 1.0]), ("far", &[-1.0, 0.0])]);
        let r = m.most_similar("zeta", 3).unwrap();
        assert_eq!(r[0].0, "alpha");
        assert!((r[0].1.value() - 1.0).abs() < 1e-15);
        let r = m.most_similar("q", 2).unwrap();
        assert_eq!(r[0].1, r[1].1);
        assert_eq!(r.iter().map(|(t, _)| t.as_str()).collect::<Vec<_>>(), ["alpha", "zeta"]);
        assert_eq!(m.most_similar("q", 0), Err(VectorError::ZeroK));
    }

    #[test]
    fn cluster_center_examples() {
        let m = model(&[("w", &[3.0, 4.0]), ("w2", &[3.0, 4.0]), ("x", &[1.0, 0.0]), ("y", &[-1.0, 0.0])]);
        assert_eq!(m.cluster_center(&["w"]).unwrap(), [0.6, 0.8]);
        assert_eq!(m.cluster_center(&["w", "w2"]).unwrap(), [0.6, 0.8]);
        assert_eq!(m.cluster_center(&["x", "y"]), Err(VectorError::DegenerateCenter));
        assert_eq!(m.cluster_center::<&str>(&[]), Err(VectorError::EmptySet));
    }

    #[test]
    fn n_similarity_examples() {
        let m = model(&[("a", &[1.0, 2.0]), ("b", &[-3.0, 1.0]), ("c", &[0.5, 0.5]), ("d", &[-1.0, -2.0])]);
        let s = ["a", "b", "b"];
        assert!((m.n_similarity(&s, &s).unwrap().value() - 1.0).abs() < 1e-15);
        assert_eq!(m.n_similarity(&["a"], &["c"]).unwrap(), m.similarity("a", "c").unwrap());
        assert_eq!(m.n_similarity(&["a", "d"], &["c"]), Err(VectorError::DegenerateMean));
        assert_eq!(m.n_similarity(&["a"], &["zz"]), Err(VectorError::UnknownTerm("zz".into())));
    }

    #[test]
    fn constructor_rejects_bad_models() {
        let t = |v: &[&str]| v.iter().map(|s| String::from(*s)).collect::<Vec<_>>();
        assert!(KeyedVectors::new(t(&["a", "a"]), vec![1.0, 1.0], 1).is_err());
        assert!(KeyedVectors::new(t(&["a b"]), vec![1.0], 1).is_err());
        assert!(KeyedVectors::new(t(&["a"]), vec![f64::NAN], 1).is_err());
        assert!(KeyedVectors::new(t(&["a"]), vec![0.0], 1).is_err());
        assert!(KeyedVectors::new(t(&["a"]), vec![1.0, 2.0], 1).is_err());
    }

    #[test]
    fn sig9_formatting() {
        assert_eq!(format_sig9(0.0), "0");
        assert_eq!(format_sig9(1.0), "1");
        assert_eq!(format_sig9(-0.5), "-0.5");
        assert_eq!(format_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(format_sig9(123456789.4), "123456789");
        assert_eq!(format_sig9(1234567891.0), "1.23456789e9");
        assert_eq!(format_sig9(0.000_012_345_678_91), "1.23456789e-5");
        assert_eq!(format_sig9(0.000_123_456_789_1), "0.000123456789");
        assert_eq!(format_sig9(9.999_999_999), "10");
    }

    #[test]
    fn text_format() {
        let m = model(&[("a", &[1.0, -0.25, 3.5]), ("b_c", &[1e-7, 2.0, 0.0])]);
        let text = m.to_text();
        assert_eq!(text, "2 3\na 1 -0.25 3.5\nb_c 1e-7 2 0\n");
        assert_eq!(KeyedVectors::from_text(&text).unwrap(), m);
    }

    #[test]
    fn malformed_model_files() {
        let err = |s: &str| matches!(KeyedVectors::from_text(s), Err(VectorError::MalformedModelFile { .. }));
        assert!(err("2 3\na 1 2 3\nb 1 2 3\nc 1 2 3\n"));
        assert!(err("2 2\na 1 2\na 3 4\n"));
        assert!(err("1 2\na 1 x\n"));
        assert!(err("1 2\na 1\n"));
        assert!(err("2 2\na 1 2\n"));
        assert!(err("two 2\n"));
        assert!(err(""));
        assert!(err("1 1\na inf\n"));
    }
}
