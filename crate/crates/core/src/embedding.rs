//! Compositional-code word embeddings.
//!
//! A vocabulary of size `|V|` is covered by `M` codebooks of `K` codeword
//! vectors each, with `K` derived so that `K^M >= |V|`. The continuous
//! variant softmax-weights every codeword of every book per word; the
//! discrete variant picks one codeword per book and serves as the reference
//! oracle for the saturated-logit limit.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Smallest integer K with `K^M >= vocab_size`, computed with exact integer
/// checks around the floating-point root so rounding can never skew the
/// result.
pub fn derive_k(vocab_size: usize, num_codebooks: usize) -> usize {
    assert!(vocab_size >= 1 && num_codebooks >= 1);
    let m = num_codebooks as u32;
    let v = vocab_size as u128;
    let mut k = (vocab_size as f64)
        .powf(1.0 / num_codebooks as f64)
        .ceil()
        .max(1.0) as u128;
    while k > 1 && pow_at_least(k - 1, m, v) {
        k -= 1;
    }
    while !pow_at_least(k, m, v) {
        k += 1;
    }
    k as usize
}

/// `k^m >= v`, treating overflow as "certainly large enough".
fn pow_at_least(k: u128, m: u32, v: u128) -> bool {
    k.checked_pow(m).map_or(true, |p| p >= v)
}

/// The (|V|, M, K, dim) parameterization of a compositional-code embedding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeSpec {
    pub vocab_size: usize,
    pub num_codebooks: usize,
    pub codewords_per_book: usize,
    pub embedding_dim: usize,
}

impl CodeSpec {
    /// Spec with K derived from the vocabulary size.
    pub fn derive(vocab_size: usize, num_codebooks: usize, embedding_dim: usize) -> Self {
        CodeSpec {
            vocab_size,
            num_codebooks,
            codewords_per_book: derive_k(vocab_size, num_codebooks),
            embedding_dim,
        }
    }

    pub fn capacity(&self) -> u128 {
        (self.codewords_per_book as u128)
            .checked_pow(self.num_codebooks as u32)
            .unwrap_or(u128::MAX)
    }

    /// Trainable scalars: the code matrix plus the codebooks.
    pub fn param_count(&self) -> usize {
        self.vocab_size * self.num_codebooks * self.codewords_per_book
            + self.num_codebooks * self.codewords_per_book * self.embedding_dim
    }
}

/// M codebooks of K codeword vectors, stored as one trainable tensor
/// `[M, K, dim]`.
pub struct Codebooks<E: Scalar> {
    pub values: Tensor<E>,
}

impl<E: Scalar> Codebooks<E> {
    /// Codewords drawn from N(0, 1/sqrt(dim)).
    pub fn init(spec: &CodeSpec, rng: &mut impl Rng) -> Self {
        let (m, k, d) = (spec.num_codebooks, spec.codewords_per_book, spec.embedding_dim);
        let normal = Normal::new(0.0, 1.0 / (d as f64).sqrt()).unwrap();
        let data: Vec<E> = (0..m * k * d)
            .map(|_| E::from_f64(normal.sample(rng)))
            .collect();
        Codebooks {
            values: Tensor::param(&[m, k, d], data).unwrap(),
        }
    }

    pub fn from_tensor(spec: &CodeSpec, values: Tensor<E>) -> Result<Self> {
        let expected = [
            spec.num_codebooks,
            spec.codewords_per_book,
            spec.embedding_dim,
        ];
        if values.shape() != expected {
            return Err(Error::ShapeMismatch {
                op: "codebooks",
                lhs: expected.to_vec(),
                rhs: values.shape().to_vec(),
            });
        }
        Ok(Codebooks { values })
    }
}

/// Per-word continuous codes: unconstrained logits `[|V|, M, K]`,
/// softmax-normalized per book at lookup time.
pub struct CodeMatrix<E: Scalar> {
    pub logits: Tensor<E>,
}

impl<E: Scalar> CodeMatrix<E> {
    /// Logits drawn from U(-0.5, 0.5): initial embeddings sit near the
    /// codebook mean with mild diversity.
    pub fn init(spec: &CodeSpec, rng: &mut impl Rng) -> Self {
        let (v, m, k) = (spec.vocab_size, spec.num_codebooks, spec.codewords_per_book);
        let data: Vec<E> = (0..v * m * k)
            .map(|_| E::from_f64(rng.gen_range(-0.5..0.5)))
            .collect();
        CodeMatrix {
            logits: Tensor::param(&[v, m, k], data).unwrap(),
        }
    }

    pub fn from_tensor(spec: &CodeSpec, logits: Tensor<E>) -> Result<Self> {
        let expected = [
            spec.vocab_size,
            spec.num_codebooks,
            spec.codewords_per_book,
        ];
        if logits.shape() != expected {
            return Err(Error::ShapeMismatch {
                op: "code_matrix",
                lhs: expected.to_vec(),
                rhs: logits.shape().to_vec(),
            });
        }
        Ok(CodeMatrix { logits })
    }

    pub fn vocab_size(&self) -> usize {
        self.logits.shape()[0]
    }
}

/// One codeword index per codebook.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscreteCode {
    pub components: Vec<usize>,
}

/// Injective word -> code assignment: word index `w` becomes its M-digit
/// base-K expansion, most significant digit first.
pub fn assign_unique_codes(vocab_size: usize, spec: &CodeSpec) -> Result<Vec<DiscreteCode>> {
    if (vocab_size as u128) > spec.capacity() {
        return Err(Error::CodeCapacity {
            capacity: spec.capacity(),
            vocab_size,
        });
    }
    let (m, k) = (spec.num_codebooks, spec.codewords_per_book);
    let mut codes = Vec::with_capacity(vocab_size);
    for w in 0..vocab_size {
        let mut components = vec![0usize; m];
        let mut rem = w;
        for slot in (0..m).rev() {
            components[slot] = rem % k;
            rem /= k;
        }
        codes.push(DiscreteCode { components });
    }
    Ok(codes)
}

/// Continuous embedding of a token sequence: for each word, softmax the
/// per-book logits and sum the weighted codewords across all books.
/// Differentiable in both the logits and the codebooks; only the rows of the
/// looked-up tokens participate.
pub fn embed_continuous<E: Scalar>(
    tokens: &[u32],
    books: &Codebooks<E>,
    codes: &CodeMatrix<E>,
) -> Result<Tensor<E>> {
    let vocab_size = codes.vocab_size();
    let indices = check_tokens(tokens, vocab_size)?;
    let book_shape = books.values.shape().to_vec();
    let (m, k, d) = (book_shape[0], book_shape[1], book_shape[2]);

    let gathered = codes.logits.gather_rows(&indices)?; // [T, M, K]
    let weights = gathered.softmax(2)?;
    let flat_weights = weights.reshape(&[tokens.len(), m * k])?;
    let flat_books = books.values.reshape(&[m * k, d])?;
    flat_weights.matmul(&flat_books) // [T, dim]
}

/// Discrete embedding: sum of the selected codeword per book. Reference
/// oracle for `embed_continuous` with saturated logits.
pub fn embed_discrete<E: Scalar>(
    tokens: &[u32],
    books: &Codebooks<E>,
    codes: &[DiscreteCode],
) -> Result<Tensor<E>> {
    let indices = check_tokens(tokens, codes.len())?;
    let book_shape = books.values.shape().to_vec();
    let (m, k, d) = (book_shape[0], book_shape[1], book_shape[2]);

    let mut flat_indices = Vec::with_capacity(indices.len() * m);
    for &w in &indices {
        let code = &codes[w];
        for (book, &component) in code.components.iter().enumerate() {
            if component >= k {
                return Err(Error::CodeComponentOutOfRange { component, k });
            }
            flat_indices.push(book * k + component);
        }
    }
    let flat_books = books.values.reshape(&[m * k, d])?;
    let rows = flat_books.gather_rows(&flat_indices)?; // [T*M, dim]
    rows.reshape(&[indices.len(), m, d])?.sum(1, false) // [T, dim]
}

fn check_tokens(tokens: &[u32], vocab_size: usize) -> Result<Vec<usize>> {
    tokens
        .iter()
        .map(|&t| {
            let id = t as usize;
            if id >= vocab_size {
                Err(Error::TokenOutOfRange { id, vocab_size })
            } else {
                Ok(id)
            }
        })
        .collect()
}

/// Number of trainable embedding scalars: `|V|*M*K + M*K*dim`.
pub fn embedding_param_count(spec: &CodeSpec) -> usize {
    spec.param_count()
}
