//! State encoding, cosine similarity and the three Read policies: similarity
//! top-K, softmax over Q, and top-K over a learned Q.

use std::borrow::Cow;
use std::cmp::Ordering;

use rand::Rng;

use crate::error::{Error, Result};
use crate::math;
use crate::mmdp::{Case, CaseId, RetrievalPolicy, State};

/// Default number of retrieved cases.
pub const DEFAULT_K: usize = 4;

/// Maps text to a unit vector.
pub trait Encoder: Send + Sync {
    fn dim(&self) -> usize;

    fn encode(&self, text: &str) -> Vec<f64>;

    /// Uses the state's attached embedding when it has one.
    fn embed<'a>(&self, state: &'a State) -> Cow<'a, [f64]> {
        match state.embedding() {
            Some(e) => Cow::Borrowed(e),
            None => Cow::Owned(self.encode(state.text())),
        }
    }
}

/// Bag of hashed character 3-grams, L2-normalised.
///
/// The text is framed with start/end markers so that short strings still
/// produce grams. Text with no grams maps to the first basis vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HashEncoder {
    dim: usize,
    seed: u64,
}

const FRAME_START: char = '\u{2}';
const FRAME_END: char = '\u{3}';

impl HashEncoder {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("encoder dimension must be positive"));
        }
        Ok(HashEncoder { dim, seed })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Bucket of one 3-gram.
    pub fn bucket(&self, gram: &[char]) -> usize {
        // FNV-1a over the seed bytes followed by the gram's UTF-8 bytes.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |b: u8| {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        };
        for b in self.seed.to_le_bytes() {
            feed(b);
        }
        let mut buf = [0u8; 4];
        for c in gram {
            for &b in c.encode_utf8(&mut buf).as_bytes() {
                feed(b);
            }
        }
        (h % self.dim as u64) as usize
    }

    pub fn grams(text: &str) -> Vec<[char; 3]> {
        if text.is_empty() {
            return Vec::new();
        }
        let framed: Vec<char> =
            std::iter::once(FRAME_START).chain(text.chars()).chain(std::iter::once(FRAME_END)).collect();
        framed.windows(3).map(|w| [w[0], w[1], w[2]]).collect()
    }
}

impl Default for HashEncoder {
    fn default() -> Self {
        HashEncoder { dim: 256, seed: 0 }
    }
}

impl Encoder for HashEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for g in Self::grams(text) {
            v[self.bucket(&g)] += 1.0;
        }
        if math::normalize(&mut v) == 0.0 {
            v[0] = 1.0;
        }
        v
    }
}

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::structural(format!("vector lengths {} and {} differ", u.len(), v.len())));
    }
    let nu = math::norm(u);
    let nv = math::norm(v);
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::domain("cosine similarity of a zero vector"));
    }
    Ok((math::dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Indices of the `k` largest scores, best first; equal scores keep the
/// lower index first.
pub fn top_k_indices(scores: &[f64], k: usize) -> Vec<usize> {
    let by_rank = |&a: &usize, &b: &usize| -> Ordering { scores[b].total_cmp(&scores[a]).then(a.cmp(&b)) };
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    let k = k.min(idx.len());
    if k == 0 {
        return Vec::new();
    }
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, by_rank);
        idx.truncate(k);
    }
    idx.sort_unstable_by(by_rank);
    idx
}

/// Cosine similarity of `state` to every case, in bank order.
pub fn similarities(state: &State, bank: &[Case], encoder: &dyn Encoder) -> Result<Vec<f64>> {
    let query = encoder.embed(state);
    bank.iter().map(|c| cosine_similarity(&query, &encoder.embed(&c.state))).collect()
}

/// `TopK_{c ∈ M} sim(enc(s), enc(s_c))`.
pub fn read_nonparametric<'b>(
    state: &State,
    bank: &'b [Case],
    k: usize,
    encoder: &dyn Encoder,
) -> Result<Vec<&'b Case>> {
    if k == 0 || bank.is_empty() {
        return Ok(Vec::new());
    }
    let sims = similarities(state, bank, encoder)?;
    Ok(top_k_indices(&sims, k).into_iter().map(|i| &bank[i]).collect())
}

/// `TopK_{c ∈ M} Q(s, c; θ)`. A non-finite Q aborts the read.
pub fn read_parametric<'b, F>(state: &State, bank: &'b [Case], k: usize, mut q: F) -> Result<Vec<&'b Case>>
where
    F: FnMut(&State, &Case) -> f64,
{
    if k == 0 || bank.is_empty() {
        return Ok(Vec::new());
    }
    let mut scores = Vec::with_capacity(bank.len());
    for c in bank {
        let v = q(state, c);
        if !v.is_finite() {
            return Err(Error::domain(format!("Q for case {} is {v}", c.id)));
        }
        scores.push(v);
    }
    Ok(top_k_indices(&scores, k).into_iter().map(|i| &bank[i]).collect())
}

/// A probability distribution over case ids, `μ(· | s, M)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalDistribution {
    case_ids: Vec<CaseId>,
    probs: Vec<f64>,
}

impl RetrievalDistribution {
    pub fn new(case_ids: Vec<CaseId>, probs: Vec<f64>) -> Result<Self> {
        if case_ids.len() != probs.len() || case_ids.is_empty() {
            return Err(Error::structural("distribution needs one probability per case id"));
        }
        let total: f64 = probs.iter().sum();
        if probs.iter().any(|p| p.is_nan() || *p < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!("probabilities must be non-negative and sum to 1 (sum {total})")));
        }
        Ok(RetrievalDistribution { case_ids, probs })
    }

    pub fn uniform(case_ids: Vec<CaseId>) -> Result<Self> {
        let n = case_ids.len();
        Self::new(case_ids, vec![1.0 / n as f64; n])
    }

    pub fn case_ids(&self) -> &[CaseId] {
        &self.case_ids
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob_of(&self, id: CaseId) -> f64 {
        self.case_ids.iter().zip(&self.probs).filter(|(c, _)| **c == id).map(|(_, p)| p).sum()
    }

    pub fn entropy(&self) -> f64 {
        math::entropy(&self.probs)
    }
}

/// `μ(c) ∝ exp(Q(c) / α)`.
pub fn retrieval_distribution(q_values: &[(CaseId, f64)], alpha: f64) -> Result<RetrievalDistribution> {
    if q_values.is_empty() {
        return Err(Error::domain("retrieval distribution over no cases"));
    }
    if alpha.is_nan() || alpha <= 0.0 {
        return Err(Error::domain(format!("alpha must be positive, got {alpha}")));
    }
    if let Some((id, q)) = q_values.iter().find(|(_, q)| !q.is_finite()) {
        return Err(Error::domain(format!("Q for case {id} is {q}")));
    }
    let qs: Vec<f64> = q_values.iter().map(|(_, q)| *q).collect();
    let probs = math::softmax(&qs, alpha);
    Ok(RetrievalDistribution { case_ids: q_values.iter().map(|(id, _)| *id).collect(), probs })
}

/// Inverse-CDF draw of one case id.
pub fn sample_case<R: Rng + ?Sized>(dist: &RetrievalDistribution, rng: &mut R) -> CaseId {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (id, p) in dist.case_ids.iter().zip(&dist.probs) {
        acc += p;
        if u < acc {
            return *id;
        }
    }
    // Rounding left `acc` just under 1; take the last case with mass.
    let last = dist.probs.iter().rposition(|&p| p > 0.0).unwrap_or(dist.len() - 1);
    dist.case_ids[last]
}

/// Uniform retrieval over the whole bank.
#[derive(Clone, Copy, Debug, Default)]
pub struct UniformRetrieval;

impl RetrievalPolicy for UniformRetrieval {
    fn distribution(&self, _state: &State, bank: &[Case]) -> Result<RetrievalDistribution> {
        RetrievalDistribution::uniform(bank.iter().map(|c| c.id).collect())
    }
}

/// Softmax retrieval over a caller-supplied Q function.
pub struct SoftmaxRetrieval<F> {
    pub q: F,
    pub alpha: f64,
}

impl<F> RetrievalPolicy for SoftmaxRetrieval<F>
where
    F: Fn(&State, &Case) -> f64,
{
    fn distribution(&self, state: &State, bank: &[Case]) -> Result<RetrievalDistribution> {
        let qs: Vec<(CaseId, f64)> = bank.iter().map(|c| (c.id, (self.q)(state, c))).collect();
        retrieval_distribution(&qs, self.alpha)
    }
}

/// Always retrieves the single most similar case.
pub struct NearestCase<'e> {
    pub encoder: &'e dyn Encoder,
}

impl RetrievalPolicy for NearestCase<'_> {
    fn distribution(&self, state: &State, bank: &[Case]) -> Result<RetrievalDistribution> {
        let best = read_nonparametric(state, bank, 1, self.encoder)?;
        let ids: Vec<CaseId> = bank.iter().map(|c| c.id).collect();
        let probs = ids.iter().map(|&id| if id == best[0].id { 1.0 } else { 0.0 }).collect();
        RetrievalDistribution::new(ids, probs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mmdp::{Action, CaseBank};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bank_of(states: Vec<State>) -> CaseBank {
        let mut bank = CaseBank::new();
        for s in states {
            bank.write(s, Action::new("a").unwrap(), 0.0).unwrap();
        }
        bank
    }

    #[test]
    fn encoding_is_deterministic_and_unit_norm() {
        let enc = HashEncoder::default();
        for text in ["hello world", "x", "", "ünïcödé ✓"] {
            let a = enc.encode(text);
            let b = enc.encode(text);
            assert_eq!(a, b);
            assert!((math::norm(&a) - 1.0).abs() < 1e-9);
        }
        assert_eq!(enc.encode("")[0], 1.0);
    }

    #[test]
    fn cosine_basics() {
        let v = [0.3, -1.2, 2.0];
        let two_v: Vec<f64> = v.iter().map(|x| 2.0 * x).collect();
        assert!((cosine_similarity(&v, &v).unwrap() - 1.0).abs() < 1e-15);
        assert!((cosine_similarity(&v, &two_v).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(matches!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn top_k_breaks_ties_by_index() {
        assert_eq!(top_k_indices(&[1.0, 3.0, 3.0, 2.0], 3), vec![1, 2, 3]);
        assert_eq!(top_k_indices(&[0.5; 5], 2), vec![0, 1]);
        assert!(top_k_indices(&[1.0], 0).is_empty());
        assert_eq!(top_k_indices(&[1.0, 2.0], 10), vec![1, 0]);
    }

    #[test]
    fn nonparametric_read_edge_cases() {
        let enc = HashEncoder::default();
        let bank = bank_of(["alpha task", "beta task", "gamma"].map(|t| State::new(t).unwrap()).to_vec());
        let q = State::new("beta task").unwrap();
        let all = read_nonparametric(&q, bank.cases(), 10, &enc).unwrap();
        assert_eq!(all.len(), 3);
        assert_eq!(all[0].id, 1);
        assert!(read_nonparametric(&q, bank.cases(), 0, &enc).unwrap().is_empty());
        assert!(read_nonparametric(&q, &[], 4, &enc).unwrap().is_empty());
    }

    #[test]
    fn nonparametric_read_orders_hand_placed_embeddings() {
        // Unit vectors at cosine 0.1, 0.9, 0.5 to the query e0.
        let at = |c: f64| vec![c, (1.0 - c * c).sqrt()];
        let states = [0.1, 0.9, 0.5]
            .iter()
            .enumerate()
            .map(|(i, &c)| State::with_embedding(format!("case{i}"), at(c)).unwrap())
            .collect();
        let bank = bank_of(states);
        let query = State::with_embedding("q", vec![1.0, 0.0]).unwrap();
        let enc = HashEncoder::new(2, 0).unwrap();
        let got: Vec<_> = read_nonparametric(&query, bank.cases(), 2, &enc).unwrap().iter().map(|c| c.id).collect();
        assert_eq!(got, vec![1, 2]);
    }

    #[test]
    fn softmax_examples() {
        let d = retrieval_distribution(&[(0, 0.0), (1, 0.0), (2, 0.0)], 1.0).unwrap();
        for p in d.probs() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        let d = retrieval_distribution(&[(0, 2f64.ln()), (1, 0.0)], 1.0).unwrap();
        assert!((d.probs()[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((d.probs()[1] - 1.0 / 3.0).abs() < 1e-12);
        let d = retrieval_distribution(&[(0, 5.0), (1, 1.0)], 1e-8).unwrap();
        assert!((d.probs()[0] - 1.0).abs() < 1e-6 && d.probs()[1] < 1e-6);
    }

    #[test]
    fn softmax_rejects_bad_input() {
        assert!(matches!(retrieval_distribution(&[], 1.0), Err(Error::Domain(_))));
        assert!(matches!(retrieval_distribution(&[(0, f64::NAN)], 1.0), Err(Error::Domain(_))));
        assert!(matches!(retrieval_distribution(&[(0, f64::INFINITY)], 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn sampling_degenerate_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let one = RetrievalDistribution::uniform(vec![7]).unwrap();
        let first = RetrievalDistribution::new(vec![3, 4], vec![1.0, 0.0]).unwrap();
        for _ in 0..1000 {
            assert_eq!(sample_case(&one, &mut rng), 7);
            assert_eq!(sample_case(&first, &mut rng), 3);
        }
    }

    #[test]
    fn sampling_matches_target_frequency() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let d = RetrievalDistribution::new(vec![0, 1], vec![0.25, 0.75]).unwrap();
        let n = 100_000;
        let hits = (0..n).filter(|_| sample_case(&d, &mut rng) == 0).count();
        assert!((hits as f64 / n as f64 - 0.25).abs() < 0.01);
    }

    #[test]
    fn parametric_read_uses_q_and_tie_break() {
        let bank = bank_of(["a", "b", "c"].map(|t| State::new(t).unwrap()).to_vec());
        let s = State::new("s").unwrap();
        let qs = [0.2, 0.1, 0.9];
        let top1 = read_parametric(&s, bank.cases(), 1, |_, c| qs[c.id as usize]).unwrap();
        assert_eq!(top1[0].id, 2);
        let tied: Vec<_> = read_parametric(&s, bank.cases(), 2, |_, _| 0.5).unwrap().iter().map(|c| c.id).collect();
        assert_eq!(tied, vec![0, 1]);
        assert!(read_parametric(&s, bank.cases(), 2, |_, _| f64::NAN).is_err());
    }
}
