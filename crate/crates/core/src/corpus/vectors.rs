use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::Rng;

use super::Vocabulary;
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// Rows without a pretrained vector are drawn from `[-INIT_RANGE, INIT_RANGE]`.
pub const INIT_RANGE: f64 = 0.05;

#[derive(Clone, Debug)]
pub struct WordVectors {
    /// One row per vocabulary index.
    pub matrix: Tensor,
    /// Vocabulary entries that received a pretrained vector.
    pub covered: usize,
}

pub fn random_embeddings<R: Rng + ?Sized>(rows: usize, dim: usize, rng: &mut R) -> Tensor {
    let data = (0..rows * dim)
        .map(|_| rng.gen_range(-INIT_RANGE..=INIT_RANGE))
        .collect();
    Tensor::matrix(rows, dim, data).expect("rows * dim values")
}

/// Loads word2vec text-format vectors for the tokens of `vocab`.
pub fn load_word_vectors(path: &Path, vocab: &Vocabulary, dim: usize, rng: &mut impl Rng) -> Result<WordVectors> {
    let file = File::open(path)?;
    parse_word_vectors(BufReader::new(file), path, vocab, dim, rng)
}

pub fn parse_word_vectors(
    reader: impl BufRead,
    path: &Path,
    vocab: &Vocabulary,
    dim: usize,
    rng: &mut impl Rng,
) -> Result<WordVectors> {
    let mut matrix = random_embeddings(vocab.len(), dim, rng);
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if i == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<u64>().is_ok()) {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: PathBuf::from(path),
            line: i + 1,
            message,
        };
        if fields.len() != dim + 1 {
            return Err(err(format!(
                "expected token and {dim} values, found {} values",
                fields.len() - 1
            )));
        }
        let values = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| err(format!("`{f}`: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(idx) = vocab.get(fields[0]) {
            if idx >= super::RESERVED.len() && seen.insert(idx) {
                matrix.row_mut(idx).copy_from_slice(&values);
            }
        }
    }
    Ok(WordVectors {
        matrix,
        covered: seen.len(),
    })
}

#[cfg(test)]
mod tests {
    use std::io::Cursor;

    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::corpus::{build_vocab, Document};

    fn vocab() -> Vocabulary {
        build_vocab(&[Document::from_text("d", &["cat dog cat"])], 100)
    }

    fn parse(text: &str, dim: usize) -> Result<WordVectors> {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        parse_word_vectors(Cursor::new(text), Path::new("v.txt"), &vocab(), dim, &mut rng)
    }

    #[test]
    fn full_coverage() {
        let wv = parse("2 3\ncat 0.1 0.2 0.3\ndog 1 2 3\nbird 0 0 0\n", 3).unwrap();
        assert_eq!(wv.covered, vocab().len() - 4);
        let v = vocab();
        assert_eq!(wv.matrix.row(v.index("dog")), &[1.0, 2.0, 3.0]);
        assert_eq!(wv.matrix.shape(), &[6, 3]);
    }

    #[test]
    fn empty_file_is_random() {
        let wv = parse("", 3).unwrap();
        assert_eq!(wv.covered, 0);
        assert!(wv.matrix.data().iter().all(|x| x.abs() <= INIT_RANGE));
        assert!(wv.matrix.data().iter().any(|x| *x != 0.0));
    }

    #[test]
    fn arity_error_reports_line() {
        let err = parse("dog 1 2 3\ncat 0.1 0.2\n", 3).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn same_seed_same_matrix() {
        let a = parse("cat 1 1 1\n", 3).unwrap();
        let b = parse("cat 1 1 1\n", 3).unwrap();
        assert_eq!(a.matrix, b.matrix);
    }
}
