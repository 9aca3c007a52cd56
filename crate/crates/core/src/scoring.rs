//! Per-record scoring: everything the score stage attaches to a run record.

use rayon::prelude::*;
use thiserror::Error;

use crate::analysis::{self, CodeSubwords};
use crate::corpus::{EvalRecord, RunRecord};
use crate::metrics::{self, BertScoreResult, BleuScore, EmbedError, EmbeddingProvider, MetricError};
use crate::pylex::{self, LexError};
use crate::subtok::Tokenizer;

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("code does not lex: {0}")]
    Lex(#[from] LexError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("no code found for example {0}")]
    MissingCode(String),
}

/// Tokenizer and embedding provider shared by all scoring.
pub struct Scorer {
    pub tokenizer: Tokenizer,
    pub provider: Box<dyn EmbeddingProvider>,
    /// Lowercase descriptions before BLEU tokenization.
    pub lowercase_bleu: bool,
}

impl Scorer {
    pub fn new(tokenizer: Tokenizer, provider: Box<dyn EmbeddingProvider>) -> Self {
        Scorer { tokenizer, provider, lowercase_bleu: false }
    }

    pub fn bleu(&self, candidate: &str, reference: &str) -> Result<BleuScore, MetricError> {
        let c = metrics::bleu_tokens(candidate, self.lowercase_bleu);
        let r = metrics::bleu_tokens(reference, self.lowercase_bleu);
        metrics::bleu4(&c, &r)
    }

    /// BERTScore over subword embeddings. An empty candidate scores zero.
    pub fn bertscore(&self, candidate: &str, reference: &str) -> Result<BertScoreResult, ScoreError> {
        let r = metrics::embed(&self.tokenizer.encode(reference), self.provider.as_ref())?;
        let c = metrics::embed(&self.tokenizer.encode(candidate), self.provider.as_ref())?;
        if c.is_empty() && !r.is_empty() {
            return Ok(BertScoreResult { precision: 0.0, recall: 0.0, f1: 0.0 });
        }
        Ok(metrics::bertscore(&r, &c)?)
    }

    pub fn evaluate(&self, code: &str, reference: &str, generated: &str) -> Result<EvalRecord, ScoreError> {
        let roles = pylex::classify_roles(&pylex::lex(code)?);
        let code_subwords = CodeSubwords::from_roles(&roles, &self.tokenizer);
        let ref_subwords = self.tokenizer.encode(reference);
        let gen_subwords = self.tokenizer.encode(generated);
        let id = self.tokenizer.id();
        let p_copy_reference = metrics::p_copy(code_subwords.seq(), &ref_subwords, id)?;
        let p_copy_generated = if gen_subwords.is_empty() {
            None
        } else {
            Some(metrics::p_copy(code_subwords.seq(), &gen_subwords, id)?)
        };
        Ok(EvalRecord {
            tokenizer: id.to_string(),
            bleu: self.bleu(generated, reference)?,
            bertscore: self.bertscore(generated, reference)?,
            bucket: analysis::bucket_label(&p_copy_reference).to_string(),
            p_copy_reference,
            p_copy_generated,
            attribution: analysis::attribute_copies(&code_subwords, &ref_subwords, Some(&gen_subwords)),
        })
    }

    /// Scores records in parallel against the code each one was generated
    /// from. Results keep the input order.
    pub fn score_records<'a>(
        &self,
        records: &'a [RunRecord],
        code: impl Fn(&'a RunRecord) -> Option<&'a str> + Sync,
    ) -> Vec<Result<RunRecord, ScoreError>> {
        records
            .par_iter()
            .map(|r| {
                let src = code(r).ok_or_else(|| ScoreError::MissingCode(r.example_id.clone()))?;
                let metrics = self.evaluate(src, &r.reference, &r.generated)?;
                Ok(RunRecord { metrics: Some(metrics), ..r.clone() })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::OneHotProvider;

    fn scorer() -> Scorer {
        Scorer::new(Tokenizer::Fallback, Box::new(OneHotProvider::new(1 << 20)))
    }

    #[test]
    fn echo_scores_perfectly() {
        let r = "Returns the sum of two numbers".to_string();
        let e = scorer().evaluate("def add(a, b):\n    return a + b", &r, &r).unwrap();
        assert_eq!(e.bleu.value, 100.0);
        assert_eq!(e.bertscore.f1, 100.0);
        assert_eq!(e.tokenizer, "fallback");
    }

    #[test]
    fn empty_generation() {
        let e = scorer().evaluate("def f(): pass", "does nothing at all", "").unwrap();
        assert_eq!(e.bleu.value, 0.0);
        assert_eq!(e.bertscore.f1, 0.0);
        assert!(e.p_copy_generated.is_none());
    }

    #[test]
    fn unlexable_code() {
        assert!(matches!(scorer().evaluate("def f(:", "a b c", "a b c"), Err(ScoreError::Lex(_))));
    }
}
