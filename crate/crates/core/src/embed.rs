//! Multilingual embedding baseline: monolingual word vectors mapped into a
//! shared space with an orthogonal projection fitted on a pseudo-dictionary
//! of identically spelled words, and per-user mean/max/std/coverage features.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::bleach::tokenize;
use crate::corpus::Language;
use crate::error::{Error, Result};

/// Shared words beyond this many (by source-file rank) are ignored.
pub const MAX_DICTIONARY_PAIRS: usize = 50_000;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub language: Language,
    dim: usize,
    /// Tokens in file order, which word-vector files sort by frequency.
    tokens: Vec<String>,
    /// Row-major `tokens.len() x dim`.
    data: Vec<f64>,
    index: HashMap<String, usize>,
}

impl EmbeddingTable {
    pub fn from_rows(language: Language, dim: usize, rows: Vec<(String, Vec<f64>)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::validation("embedding dimension must be positive"));
        }
        let mut t = EmbeddingTable {
            language,
            dim,
            tokens: Vec::new(),
            data: Vec::new(),
            index: HashMap::new(),
        };
        for (tok, v) in rows {
            if v.len() != dim {
                return Err(Error::validation(format!("vector for {tok:?} has length {}, expected {dim}", v.len())));
            }
            t.insert(tok, &v)?;
        }
        if t.is_empty() {
            return Err(Error::validation("embedding table has an empty vocabulary"));
        }
        Ok(t)
    }

    /// Inserts or overwrites; returns true when `tok` was already present.
    fn insert(&mut self, tok: String, v: &[f64]) -> Result<bool> {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::validation(format!("non-finite value in vector for {tok:?}")));
        }
        if let Some(&i) = self.index.get(&tok) {
            self.data[i * self.dim..(i + 1) * self.dim].copy_from_slice(v);
            return Ok(true);
        }
        self.index.insert(tok.clone(), self.tokens.len());
        self.tokens.push(tok);
        self.data.extend_from_slice(v);
        Ok(false)
    }

    /// Parses word-vector text: a `V d` header, then `token v1 .. vd` lines.
    /// Duplicate tokens keep the last vector.
    pub fn parse(text: &str, language: Language) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::validation("embedding file is empty"))?;
        let mut parts = header.split_whitespace();
        let parse_usize = |s: Option<&str>| s.and_then(|s| s.parse::<usize>().ok());
        let (declared, dim) = match (parse_usize(parts.next()), parse_usize(parts.next()), parts.next()) {
            (Some(v), Some(d), None) if d > 0 => (v, d),
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("expected header \"V d\", got {header:?}"),
                })
            }
        };
        let mut table = EmbeddingTable {
            language,
            dim,
            tokens: Vec::with_capacity(declared),
            data: Vec::with_capacity(declared * dim),
            index: HashMap::with_capacity(declared),
        };
        let mut duplicates = 0usize;
        let mut values = Vec::with_capacity(dim);
        for (i, line) in lines {
            let lineno = i + 1;
            let mut fields = line.split_whitespace();
            let tok = fields.next().expect("non-blank line");
            values.clear();
            for f in fields {
                let v: f64 = f.parse().map_err(|_| Error::Parse {
                    line: lineno,
                    message: format!("bad number {f:?}"),
                })?;
                values.push(v);
            }
            if values.len() != dim {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("expected {dim} values, found {}", values.len()),
                });
            }
            if table
                .insert(tok.to_string(), &values)
                .map_err(|e| Error::Parse { line: lineno, message: e.to_string() })?
            {
                duplicates += 1;
            }
        }
        if duplicates > 0 {
            log::warn!("{duplicates} duplicate tokens in embedding file; last occurrence kept");
        }
        if table.is_empty() {
            return Err(Error::validation("embedding table has an empty vocabulary"));
        }
        if table.len() + duplicates != declared {
            log::warn!("embedding header declares {declared} rows, read {}", table.len() + duplicates);
        }
        Ok(table)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn rank(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.index
            .get(token)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Unit-length rows, mean-centered, then unit-length again.
    pub fn preprocessed(&self) -> Self {
        let mut out = self.clone();
        let d = self.dim;
        let unit = |data: &mut [f64]| {
            for row in data.chunks_exact_mut(d) {
                let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                if n > 0.0 {
                    row.iter_mut().for_each(|v| *v /= n);
                }
            }
        };
        unit(&mut out.data);
        let mut mean = vec![0.0; d];
        for row in out.data.chunks_exact(d) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        let n = out.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        for row in out.data.chunks_exact_mut(d) {
            for (v, m) in row.iter_mut().zip(&mean) {
                *v -= m;
            }
        }
        unit(&mut out.data);
        out
    }

    /// Every row mapped through `w` (as a row vector times `w`).
    pub fn project(&self, w: &AlignmentMatrix) -> Result<Self> {
        if w.dim() != self.dim {
            return Err(Error::Alignment(format!(
                "matrix of dimension {} cannot map {}-dimensional vectors",
                w.dim(),
                self.dim
            )));
        }
        let mut out = self.clone();
        for (i, row) in out.data.chunks_exact_mut(self.dim).enumerate() {
            row.copy_from_slice(&w.apply(self.row(i)));
        }
        Ok(out)
    }
}

pub fn load_embeddings(path: impl AsRef<Path>, language: Language) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    EmbeddingTable::parse(&text, language)
}

/// Identically spelled words shared by both vocabularies, in lexicographic order.
pub fn build_pseudo_dictionary(src: &EmbeddingTable, tgt: &EmbeddingTable) -> Result<Vec<(String, String)>> {
    let mut shared: Vec<(usize, &String)> = src
        .tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| tgt.index.contains_key(*t))
        .collect();
    if shared.is_empty() {
        return Err(Error::Alignment(format!(
            "no shared tokens between {} and {} vocabularies",
            src.language, tgt.language
        )));
    }
    shared.truncate(MAX_DICTIONARY_PAIRS);
    let mut pairs: Vec<(String, String)> = shared.into_iter().map(|(_, t)| (t.clone(), t.clone())).collect();
    pairs.sort();
    Ok(pairs)
}

/// Orthogonal map between embedding spaces, applied to row vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentMatrix {
    w: DMatrix<f64>,
}

impl AlignmentMatrix {
    pub fn identity(d: usize) -> Self {
        AlignmentMatrix {
            w: DMatrix::identity(d, d),
        }
    }

    pub fn from_matrix(w: DMatrix<f64>) -> Result<Self> {
        if !w.is_square() || w.nrows() == 0 {
            return Err(Error::Alignment("alignment matrix must be square and non-empty".into()));
        }
        Ok(AlignmentMatrix { w })
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    /// `v W` for a row vector `v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .map(|j| (0..d).map(|i| v[i] * self.w[(i, j)]).sum())
            .collect()
    }

    /// `max |W'W - I|`.
    pub fn orthogonality_error(&self) -> f64 {
        let g = self.w.transpose() * &self.w;
        let d = self.dim();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - target).abs());
            }
        }
        worst
    }

    /// `d` on the first line, then `d` rows of `d` numbers.
    pub fn to_text(&self) -> String {
        let d = self.dim();
        let mut s = format!("{d}\n");
        for i in 0..d {
            for j in 0..d {
                if j > 0 {
                    s.push(' ');
                }
                write!(s, "{:.17e}", self.w[(i, j)]).expect("write to String");
            }
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or_else(|| Error::validation("empty alignment file"))?;
        let d: usize = first.trim().parse().map_err(|_| Error::Parse {
            line: 1,
            message: format!("expected dimension, got {first:?}"),
        })?;
        let mut vals = Vec::with_capacity(d * d);
        let mut rows = 0;
        for (i, line) in lines {
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
            if row.len() != d {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected {d} values, found {}", row.len()),
                });
            }
            vals.extend(row);
            rows += 1;
        }
        if rows != d {
            return Err(Error::validation(format!("expected {d} rows, found {rows}")));
        }
        AlignmentMatrix::from_matrix(DMatrix::from_row_slice(d, d, &vals))
    }
}

/// Orthogonal Procrustes: the orthogonal `W` minimizing `|XW - Y|_F`, where
/// rows of `x` and `y` are paired vectors. Computed as `U V'` from the SVD
/// `X'Y = U S V'`.
pub fn procrustes(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<AlignmentMatrix> {
    if x.shape() != y.shape() {
        return Err(Error::Alignment(format!("shape mismatch {:?} vs {:?}", x.shape(), y.shape())));
    }
    if x.nrows() < 2 {
        return Err(Error::Alignment("at least two dictionary pairs are required".into()));
    }
    let m = x.transpose() * y;
    let d = m.nrows();
    let svd = m.svd(true, true);
    let mut u = svd.u.ok_or_else(|| Error::Alignment("SVD did not converge".into()))?;
    let mut v_t = svd.v_t.ok_or_else(|| Error::Alignment("SVD did not converge".into()))?;
    let s = &svd.singular_values;
    let smax = s.max();
    if smax == 0.0 || s.iter().any(|&v| v <= smax * 1e-12) {
        log::warn!("cross-covariance is rank deficient; the orthogonal map is not unique");
    }
    // make the first non-negligible entry of each left singular vector positive
    for k in 0..d {
        let col = u.column(k);
        if let Some(first) = col.iter().find(|v| v.abs() > 1e-12) {
            if *first < 0.0 {
                u.column_mut(k).neg_mut();
                v_t.row_mut(k).neg_mut();
            }
        }
    }
    AlignmentMatrix::from_matrix(u * v_t)
}

/// `|XW - Y|_F`.
pub fn procrustes_objective(x: &DMatrix<f64>, y: &DMatrix<f64>, w: &DMatrix<f64>) -> f64 {
    (x * w - y).norm()
}

fn dictionary_matrices(
    src: &EmbeddingTable,
    tgt: &EmbeddingTable,
    dict: &[(String, String)],
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if src.dim != tgt.dim {
        return Err(Error::Alignment(format!(
            "dimension mismatch: {} vs {}",
            src.dim, tgt.dim
        )));
    }
    let d = src.dim;
    let mut xs = Vec::with_capacity(dict.len() * d);
    let mut ys = Vec::with_capacity(dict.len() * d);
    for (s, t) in dict {
        let sv = src.get(s).ok_or_else(|| Error::Alignment(format!("{s:?} missing from source table")))?;
        let tv = tgt.get(t).ok_or_else(|| Error::Alignment(format!("{t:?} missing from target table")))?;
        xs.extend_from_slice(sv);
        ys.extend_from_slice(tv);
    }
    Ok((
        DMatrix::from_row_slice(dict.len(), d, &xs),
        DMatrix::from_row_slice(dict.len(), d, &ys),
    ))
}

/// Fits the source-to-target map on the dictionary pairs. The tables are
/// used as given; call [`EmbeddingTable::preprocessed`] on both first to
/// work in the normalized space.
pub fn align(src: &EmbeddingTable, tgt: &EmbeddingTable, dict: &[(String, String)]) -> Result<AlignmentMatrix> {
    if dict.len() < src.dim {
        log::warn!(
            "only {} dictionary pairs for dimension {}; the fit is underdetermined",
            dict.len(),
            src.dim
        );
    }
    let (x, y) = dictionary_matrices(src, tgt, dict)?;
    procrustes(&x, &y)
}

/// Per-user representation: mean, max and population std of the token
/// vectors (each of length d), then coverage. Length `3d + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct UserEmbedding {
    pub values: Vec<f64>,
}

impl UserEmbedding {
    pub fn dim(&self) -> usize {
        (self.values.len() - 1) / 3
    }

    pub fn mean(&self) -> &[f64] {
        &self.values[..self.dim()]
    }

    pub fn max(&self) -> &[f64] {
        let d = self.dim();
        &self.values[d..2 * d]
    }

    pub fn std(&self) -> &[f64] {
        let d = self.dim();
        &self.values[2 * d..3 * d]
    }

    pub fn coverage(&self) -> f64 {
        self.values[self.values.len() - 1]
    }
}

pub fn user_embedding<S: AsRef<str>>(
    tweets: &[S],
    table: &EmbeddingTable,
    alignment: Option<&AlignmentMatrix>,
) -> UserEmbedding {
    let d = table.dim;
    let mut total = 0usize;
    let mut found: Vec<Vec<f64>> = Vec::new();
    for t in tweets {
        for tok in tokenize(t.as_ref()) {
            total += 1;
            if let Some(v) = table.get(tok) {
                found.push(match alignment {
                    Some(w) => w.apply(v),
                    None => v.to_vec(),
                });
            }
        }
    }
    let mut values = vec![0.0; 3 * d + 1];
    if found.is_empty() {
        return UserEmbedding { values };
    }
    let n = found.len() as f64;
    for j in 0..d {
        let mean = found.iter().map(|v| v[j]).sum::<f64>() / n;
        let max = found.iter().map(|v| v[j]).fold(f64::NEG_INFINITY, f64::max);
        let var = found.iter().map(|v| (v[j] - mean).powi(2)).sum::<f64>() / n;
        values[j] = mean;
        values[d + j] = max;
        values[2 * d + j] = var.sqrt();
    }
    values[3 * d] = found.len() as f64 / total as f64;
    UserEmbedding { values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lang() -> Language {
        Language::new("xx")
    }

    fn table(rows: &[(&str, &[f64])]) -> EmbeddingTable {
        let d = rows[0].1.len();
        EmbeddingTable::from_rows(lang(), d, rows.iter().map(|(t, v)| (t.to_string(), v.to_vec())).collect()).unwrap()
    }

    #[test]
    fn parse_examples() {
        let t = EmbeddingTable::parse("3 2\na 1 2\nb 3 4\nc 5 6\n", lang()).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.get("b"), Some(&[3.0, 4.0][..]));
        let err = EmbeddingTable::parse("2 2\na 1 2\nb 3\n", lang()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        assert!(EmbeddingTable::parse("0 2\n", lang()).is_err());
        let dup = EmbeddingTable::parse("2 1\na 1\na 2\n", lang()).unwrap();
        assert_eq!(dup.len(), 1);
        assert_eq!(dup.get("a"), Some(&[2.0][..]));
        assert!(EmbeddingTable::parse("bad header\n", lang()).is_err());
    }

    #[test]
    fn pseudo_dictionary_examples() {
        let a = table(&[("taxi", &[1.0]), ("amigo", &[2.0])]);
        let b = table(&[("taxi", &[1.0]), ("friend", &[2.0])]);
        assert_eq!(build_pseudo_dictionary(&a, &b).unwrap(), vec![("taxi".into(), "taxi".into())]);
        let c = table(&[("x", &[1.0])]);
        assert!(build_pseudo_dictionary(&a, &c).is_err());
        let pairs = build_pseudo_dictionary(&a, &a).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].0, "amigo");
    }

    fn rotation(theta: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[theta.cos(), theta.sin(), -theta.sin(), theta.cos()])
    }

    #[test]
    fn recovers_known_rotation() {
        let r = rotation(0.7);
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.2, -0.3, 2.0, 0.5, 0.5, 3.0, -1.0]);
        let y = &x * &r;
        let w = procrustes(&x, &y).unwrap();
        assert!((w.matrix() - &r).norm() < 1e-9);
        let same = procrustes(&x, &x).unwrap();
        assert!((same.matrix() - DMatrix::<f64>::identity(2, 2)).norm() < 1e-9);
    }

    #[test]
    fn preprocessing_commutes_with_rotation() {
        let src = table(&[("a", &[1.0, 0.0]), ("b", &[0.0, 2.0]), ("c", &[1.0, 1.0]), ("d", &[-2.0, 0.5])]);
        let r = AlignmentMatrix::from_matrix(rotation(-1.1)).unwrap();
        let tgt = src.project(&r).unwrap();
        let dict = build_pseudo_dictionary(&src, &tgt).unwrap();
        let w = align(&src.preprocessed(), &tgt.preprocessed(), &dict).unwrap();
        assert!((w.matrix() - r.matrix()).norm() < 1e-9);
    }

    #[test]
    fn alignment_text_round_trip() {
        let w = AlignmentMatrix::from_matrix(rotation(0.3)).unwrap();
        let back = AlignmentMatrix::parse(&w.to_text()).unwrap();
        assert_eq!(back, w);
        assert!(AlignmentMatrix::parse("2\n1 0\n").is_err());
        assert!(AlignmentMatrix::parse("2\n1 0\n0\n").is_err());
    }

    #[test]
    fn user_embedding_examples() {
        let t = table(&[("x", &[1.0, 2.0]), ("zero", &[0.0, 0.0]), ("y", &[2.0, 4.0])]);
        let e = user_embedding(&["x"], &t, None);
        assert_eq!(e.values, vec![1.0, 2.0, 1.0, 2.0, 0.0, 0.0, 1.0]);
        let e = user_embedding(&["zero y oov", "other"], &t, None);
        assert_eq!(e.mean(), &[1.0, 2.0]);
        assert_eq!(e.max(), &[2.0, 4.0]);
        assert_eq!(e.std(), &[1.0, 2.0]);
        assert_eq!(e.coverage(), 0.5);
        let none = user_embedding(&["nothing here"], &t, None);
        assert_eq!(none.values, vec![0.0; 7]);
        let empty: [&str; 0] = [];
        assert_eq!(user_embedding(&empty, &t, None).coverage(), 0.0);
    }

    proptest! {
        #[test]
        fn orthogonal_and_order_invariant(vals in proptest::collection::vec(-5.0f64..5.0, 24), shift in 1usize..5) {
            let x = DMatrix::from_row_slice(4, 3, &vals[..12]);
            let y = DMatrix::from_row_slice(4, 3, &vals[12..]);
            let w = procrustes(&x, &y).unwrap();
            prop_assert!(w.orthogonality_error() < 1e-6);
            let perm: Vec<usize> = (0..4).map(|i| (i + shift) % 4).collect();
            let xp = DMatrix::from_fn(4, 3, |i, j| x[(perm[i], j)]);
            let yp = DMatrix::from_fn(4, 3, |i, j| y[(perm[i], j)]);
            let wp = procrustes(&xp, &yp).unwrap();
            let a = procrustes_objective(&x, &y, w.matrix());
            let b = procrustes_objective(&x, &y, wp.matrix());
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn user_embedding_order_invariant(seed in 0u64..200) {
            use rand::{SeedableRng, seq::SliceRandom};
            let t = table(&[("a", &[1.0, -2.0]), ("b", &[0.5, 3.0]), ("c", &[-1.0, 0.0])]);
            let mut toks = ["a", "b", "c", "a", "q", "b"];
            let base = user_embedding(&[toks.join(" ")], &t, None);
            toks.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let shuffled = user_embedding(&[toks.join(" ")], &t, None);
            for (a, b) in base.values.iter().zip(&shuffled.values) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
