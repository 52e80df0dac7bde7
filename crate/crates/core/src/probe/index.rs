use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Lcg64;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexMode {
    Exact,
    Pq,
}

impl std::str::FromStr for IndexMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(IndexMode::Exact),
            "pq" => Ok(IndexMode::Pq),
            _ => Err(Error::Config(format!("unknown index mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PqParams {
    /// Number of subquantizers.
    pub m: usize,
    /// Centroids per subquantizer.
    pub k: usize,
    pub iterations: usize,
}

impl Default for PqParams {
    fn default() -> Self {
        Self { m: 4, k: 16, iterations: 25 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub id: usize,
    pub score: f64,
}

fn by_score_then_id(a: &Hit, b: &Hit) -> Ordering {
    b.score.partial_cmp(&a.score).unwrap_or(Ordering::Equal).then(a.id.cmp(&b.id))
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        v.to_vec()
    } else {
        v.iter().map(|x| x / n).collect()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Codebooks and codes of a product quantizer over unit-normalized vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductQuantizer {
    pub params: PqParams,
    /// Column range of each subspace.
    pub bounds: Vec<(usize, usize)>,
    /// `codebooks[s][c]` is centroid `c` of subspace `s`.
    pub codebooks: Vec<Vec<Vec<f64>>>,
    /// `codes[i][s]` is the centroid of entry `i` in subspace `s`.
    pub codes: Vec<Vec<u16>>,
    /// Total squared reconstruction error after each assignment step.
    pub errors: Vec<f64>,
}

impl ProductQuantizer {
    pub fn train(vectors: &[Vec<f64>], params: PqParams, seed: u64) -> Result<Self> {
        let dim = vectors.first().map_or(0, Vec::len);
        if params.m == 0 || params.m > dim {
            return Err(Error::Config(format!("cannot split {dim} dimensions into {} subspaces", params.m)));
        }
        if params.k == 0 || params.k > usize::from(u16::MAX) {
            return Err(Error::Config(format!("invalid centroid count {}", params.k)));
        }
        if vectors.len() < params.k {
            return Err(Error::Config(format!(
                "product quantization needs at least {} vectors, got {}",
                params.k,
                vectors.len()
            )));
        }
        let bounds: Vec<(usize, usize)> =
            (0..params.m).map(|s| (s * dim / params.m, (s + 1) * dim / params.m)).collect();
        let mut rng = Lcg64::derived(seed, 0x7071);
        let mut codebooks = Vec::with_capacity(params.m);
        let mut codes = vec![vec![0u16; params.m]; vectors.len()];
        let mut errors = vec![0.0; params.iterations];
        for (s, &(lo, hi)) in bounds.iter().enumerate() {
            let sub: Vec<&[f64]> = vectors.iter().map(|v| &v[lo..hi]).collect();
            let (book, assign, errs) = lloyd(&sub, params.k, params.iterations, &mut rng);
            for (i, a) in assign.into_iter().enumerate() {
                codes[i][s] = a as u16;
            }
            for (t, e) in errs.into_iter().enumerate() {
                errors[t] += e;
            }
            codebooks.push(book);
        }
        Ok(Self { params, bounds, codebooks, codes, errors })
    }

    /// Per-subspace inner products of `query` with every centroid.
    pub fn distance_table(&self, query: &[f64]) -> Vec<Vec<f64>> {
        self.bounds
            .iter()
            .zip(&self.codebooks)
            .map(|(&(lo, hi), book)| {
                book.iter().map(|c| c.iter().zip(&query[lo..hi]).map(|(a, b)| a * b).sum()).collect()
            })
            .collect()
    }

    pub fn reconstruct(&self, i: usize) -> Vec<f64> {
        self.codes[i].iter().enumerate().flat_map(|(s, &c)| self.codebooks[s][c as usize].iter().copied()).collect()
    }
}

fn nearest(point: &[f64], book: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in book.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Lloyd's k-means. Initial centroids are `k` distinct points chosen by a
/// partial Fisher-Yates draw; a centroid that loses all its points is kept.
fn lloyd(points: &[&[f64]], k: usize, iterations: usize, rng: &mut Lcg64) -> (Vec<Vec<f64>>, Vec<usize>, Vec<f64>) {
    let n = points.len();
    let mut order: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + rng.below(n - i);
        order.swap(i, j);
    }
    let mut book: Vec<Vec<f64>> = order[..k].iter().map(|&i| points[i].to_vec()).collect();
    let mut assign = vec![0usize; n];
    let mut errors = Vec::with_capacity(iterations);
    let width = points.first().map_or(0, |p| p.len());
    for _ in 0..iterations {
        let mut err = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(p, &book);
            assign[i] = c;
            err += d;
        }
        errors.push(err);
        let mut sums = vec![vec![0.0; width]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assign) {
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(p.iter()) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                book[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    // codes must reflect the final centroids
    for (i, p) in points.iter().enumerate() {
        assign[i] = nearest(p, &book).0;
    }
    (book, assign, errors)
}

/// Cosine-similarity index over unit-normalized vectors. Immutable once
/// built, so concurrent queries are safe.
#[derive(Debug, Clone)]
pub struct VectorIndex<T> {
    mode: IndexMode,
    dim: usize,
    ids: Vec<usize>,
    vectors: Vec<Vec<f64>>,
    pq: Option<ProductQuantizer>,
    _scalar: std::marker::PhantomData<T>,
}

impl<T: Scalar> VectorIndex<T> {
    pub fn build(entries: Vec<(usize, Vec<T>)>, mode: IndexMode, seed: u64) -> Result<Self> {
        Self::build_with(entries, mode, PqParams::default(), seed)
    }

    pub fn build_with(entries: Vec<(usize, Vec<T>)>, mode: IndexMode, params: PqParams, seed: u64) -> Result<Self> {
        let dim = entries.first().map(|(_, v)| v.len()).ok_or_else(|| Error::Empty("index entries".into()))?;
        if dim == 0 {
            return Err(Error::Shape("zero-width vectors".into()));
        }
        let mut ids = Vec::with_capacity(entries.len());
        let mut vectors = Vec::with_capacity(entries.len());
        for (id, v) in entries {
            if v.len() != dim {
                return Err(Error::Shape(format!("entry {id} has width {}, expected {dim}", v.len())));
            }
            let v: Vec<f64> = v.iter().map(|x| x.as_f64()).collect();
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Shape(format!("entry {id} is not finite")));
            }
            ids.push(id);
            vectors.push(unit(&v));
        }
        let pq = match mode {
            IndexMode::Exact => None,
            IndexMode::Pq => Some(ProductQuantizer::train(&vectors, params, seed)?),
        };
        Ok(Self { mode, dim, ids, vectors, pq, _scalar: std::marker::PhantomData })
    }

    pub fn mode(&self) -> IndexMode {
        self.mode
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn quantizer(&self) -> Option<&ProductQuantizer> {
        self.pq.as_ref()
    }

    /// Top-`k` entries by cosine (exact) or by asymmetric distance over the
    /// codes (pq), best first, ties broken by ascending id.
    pub fn query(&self, vector: &[T], k: usize) -> Result<Vec<Hit>> {
        if vector.len() != self.dim {
            return Err(Error::Shape(format!("query has width {}, index has {}", vector.len(), self.dim)));
        }
        let q = unit(&vector.iter().map(|x| x.as_f64()).collect::<Vec<_>>());
        let mut hits: Vec<Hit> = match &self.pq {
            None => self
                .ids
                .iter()
                .zip(&self.vectors)
                .map(|(&id, v)| Hit { id, score: v.iter().zip(&q).map(|(a, b)| a * b).sum() })
                .collect(),
            Some(pq) => {
                let table = pq.distance_table(&q);
                self.ids
                    .iter()
                    .zip(&pq.codes)
                    .map(|(&id, code)| Hit {
                        id,
                        score: code.iter().enumerate().map(|(s, &c)| table[s][c as usize]).sum(),
                    })
                    .collect()
            }
        };
        hits.sort_by(by_score_then_id);
        hits.truncate(k);
        Ok(hits)
    }
}
