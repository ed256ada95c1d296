//! Synthetic name datasets with exact edit-distance perturbations.

use std::collections::HashSet;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::encoding::{cosine, EncodingParams, MinHasher};

const GIVEN_TSV: &str = include_str!("../../data/given_names.tsv");
const FAMILY_TSV: &str = include_str!("../../data/family_names.tsv");
const ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyz";
const MAX_ATTEMPTS: usize = 10_000;

/// A frequency-weighted list of name parts.
#[derive(Clone, Debug)]
pub struct NamePool {
    names: Vec<String>,
    weights: WeightedIndex<f64>,
}

impl NamePool {
    /// Parses `name<TAB>weight` lines; a missing weight counts as 1.
    pub fn from_tsv(text: &str) -> Result<Self, EvalError> {
        let mut names = Vec::new();
        let mut weights = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            let name = parts.next().unwrap_or_default().trim().to_lowercase();
            let w = match parts.next() {
                Some(w) => w
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| EvalError::Pool(format!("line {}: {e}", i + 1)))?,
                None => 1.0,
            };
            if name.is_empty() {
                continue;
            }
            names.push(name);
            weights.push(w);
        }
        let weights = WeightedIndex::new(&weights).map_err(|e| EvalError::Pool(e.to_string()))?;
        Ok(Self { names, weights })
    }

    pub fn builtin_given() -> Self {
        Self::from_tsv(GIVEN_TSV).expect("bundled list parses")
    }

    pub fn builtin_family() -> Self {
        Self::from_tsv(FAMILY_TSV).expect("bundled list parses")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn sample<'a, R: Rng>(&'a self, rng: &mut R) -> &'a str {
        &self.names[self.weights.sample(rng)]
    }
}

#[derive(Clone, Debug)]
pub struct NamePools {
    pub given: NamePool,
    pub family: NamePool,
}

impl Default for NamePools {
    fn default() -> Self {
        Self {
            given: NamePool::builtin_given(),
            family: NamePool::builtin_family(),
        }
    }
}

/// Shape of generated full names.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NameStyle {
    /// given, middle and family name (voter-roll style)
    #[default]
    ThreePart,
    /// given and family name (census style)
    TwoPart,
}

impl NameStyle {
    fn draw<R: Rng>(self, pools: &NamePools, rng: &mut R) -> String {
        match self {
            NameStyle::ThreePart => format!(
                "{} {} {}",
                pools.given.sample(rng),
                pools.given.sample(rng),
                pools.family.sample(rng)
            ),
            NameStyle::TwoPart => format!("{} {}", pools.given.sample(rng), pools.family.sample(rng)),
        }
    }
}

/// Keeps negatives away from the responder set: a candidate is rejected
/// while its best cosine to any responder sketch reaches `tau`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegativeFilter {
    pub encoding: EncodingParams,
    pub tau: f64,
}

#[derive(Clone, Debug)]
pub struct SyntheticDatasetSpec {
    pub n_names: usize,
    pub n_positives: usize,
    pub n_negatives: usize,
    /// Exact edit distance between each positive and its source.
    pub ld: usize,
    pub style: NameStyle,
    pub seed: u64,
    pub negative_filter: Option<NegativeFilter>,
}

impl Default for SyntheticDatasetSpec {
    fn default() -> Self {
        Self {
            n_names: 1000,
            n_positives: 100,
            n_negatives: 100,
            ld: 1,
            style: NameStyle::ThreePart,
            seed: 1,
            negative_filter: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledQuery {
    pub name: String,
    /// Responder record this query was derived from; `None` for negatives.
    pub source: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub responder: Vec<String>,
    pub queries: Vec<LabeledQuery>,
    /// Negatives the filter could not push below its threshold.
    pub filter_violations: usize,
}

impl Dataset {
    pub fn truth(&self) -> Vec<Option<u32>> {
        self.queries.iter().map(|q| q.source).collect()
    }

    pub fn query_names(&self) -> Vec<String> {
        self.queries.iter().map(|q| q.name.clone()).collect()
    }
}

/// Applies `ld` random letter edits until the distance to `src` is exactly `ld`.
pub fn perturb<R: Rng>(src: &str, ld: usize, rng: &mut R) -> Result<String, EvalError> {
    if ld == 0 {
        return Ok(src.to_string());
    }
    for _ in 0..MAX_ATTEMPTS {
        let mut chars: Vec<char> = src.chars().collect();
        for _ in 0..ld {
            let letter = ALPHABET[rng.gen_range(0..ALPHABET.len())] as char;
            let letters: Vec<usize> = (0..chars.len()).filter(|&i| chars[i] != ' ').collect();
            match rng.gen_range(0..3) {
                0 => {
                    let at = rng.gen_range(0..=chars.len());
                    chars.insert(at, letter);
                }
                1 if letters.len() > 3 => {
                    chars.remove(letters[rng.gen_range(0..letters.len())]);
                }
                _ => {
                    let at = letters[rng.gen_range(0..letters.len())];
                    chars[at] = letter;
                }
            }
        }
        let out: String = chars.into_iter().collect();
        if strsim::levenshtein(src, &out) == ld && out.trim().chars().count() >= 3 {
            return Ok(out);
        }
    }
    Err(EvalError::PoolExhausted(format!("no edit of {src:?} at distance {ld}")))
}

/// Responder names, perturbed positives and length-matched negatives.
pub fn generate_dataset(spec: &SyntheticDatasetSpec, pools: &NamePools) -> Result<Dataset, EvalError> {
    if spec.n_positives > spec.n_names {
        return Err(EvalError::PoolExhausted(format!(
            "{} positives from {} names",
            spec.n_positives, spec.n_names
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let mut seen = HashSet::new();
    let mut responder = Vec::with_capacity(spec.n_names);
    let mut misses = 0;
    while responder.len() < spec.n_names {
        let name = spec.style.draw(pools, &mut rng);
        if seen.insert(name.clone()) {
            responder.push(name);
            misses = 0;
        } else {
            misses += 1;
            if misses > MAX_ATTEMPTS {
                return Err(EvalError::PoolExhausted(format!(
                    "only {} distinct names available",
                    responder.len()
                )));
            }
        }
    }

    let sources: Vec<usize> = rand::seq::index::sample(&mut rng, spec.n_names, spec.n_positives).into_vec();
    let mut queries = Vec::with_capacity(spec.n_positives + spec.n_negatives);
    for &s in &sources {
        queries.push(LabeledQuery {
            name: perturb(&responder[s], spec.ld, &mut rng)?,
            source: Some(s as u32),
        });
    }

    let filter = match &spec.negative_filter {
        Some(f) => {
            let h = MinHasher::new(f.encoding.clone())?;
            let sketches = responder
                .iter()
                .map(|n| Ok(crate::encoding::normalize(&h.signature(n)?)?.values))
                .collect::<Result<Vec<_>, EvalError>>()?;
            Some((h, sketches, f.tau))
        }
        None => None,
    };
    let mut filter_violations = 0;
    for i in 0..spec.n_negatives {
        let target = if queries.is_empty() {
            None
        } else {
            Some(queries[i % spec.n_positives.max(1)].name.chars().count())
        };
        let mut best: Option<(String, f64)> = None;
        for attempt in 0..MAX_ATTEMPTS {
            let name = spec.style.draw(pools, &mut rng);
            if seen.contains(&name) {
                continue;
            }
            let len = name.chars().count();
            let slack = attempt / 500;
            if target.is_some_and(|t| len.abs_diff(t) > slack) {
                continue;
            }
            let score = match &filter {
                Some((h, sketches, _)) => {
                    let q = crate::encoding::normalize(&h.signature(&name)?)?.values;
                    sketches.iter().map(|s| cosine(&q, s)).fold(f64::NEG_INFINITY, f64::max)
                }
                None => f64::NEG_INFINITY,
            };
            if best.as_ref().map_or(true, |b| score < b.1) {
                best = Some((name, score));
            }
            let tau = filter.as_ref().map_or(f64::INFINITY, |f| f.2);
            if score < tau || attempt >= 200 {
                break;
            }
        }
        let (name, score) = best.ok_or_else(|| EvalError::PoolExhausted("no negative candidate".into()))?;
        if filter.as_ref().is_some_and(|f| score >= f.2) {
            filter_violations += 1;
        }
        seen.insert(name.clone());
        queries.push(LabeledQuery { name, source: None });
    }
    Ok(Dataset {
        responder,
        queries,
        filter_violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Textbook two-row edit distance, independent of the library used above.
    fn edit_distance(a: &str, b: &str) -> usize {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        let mut prev: Vec<usize> = (0..=b.len()).collect();
        for i in 1..=a.len() {
            let mut cur = vec![i; b.len() + 1];
            for j in 1..=b.len() {
                let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
                cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
            }
            prev = cur;
        }
        prev[b.len()]
    }

    #[test]
    fn ld_zero_positives_are_verbatim_members() {
        let spec = SyntheticDatasetSpec {
            n_names: 200,
            n_positives: 50,
            n_negatives: 50,
            ld: 0,
            ..Default::default()
        };
        let d = generate_dataset(&spec, &NamePools::default()).unwrap();
        for q in d.queries.iter().filter(|q| q.source.is_some()) {
            assert_eq!(q.name, d.responder[q.source.unwrap() as usize]);
        }
        assert_eq!(d.queries.len(), 100);
    }

    #[test]
    fn perturbation_distance_is_exact() {
        for ld in 1..=5 {
            let spec = SyntheticDatasetSpec {
                n_names: 100,
                n_positives: 40,
                n_negatives: 0,
                ld,
                style: NameStyle::TwoPart,
                seed: ld as u64,
                negative_filter: None,
            };
            let d = generate_dataset(&spec, &NamePools::default()).unwrap();
            for q in &d.queries {
                let src = &d.responder[q.source.unwrap() as usize];
                assert_eq!(edit_distance(src, &q.name), ld, "{src} -> {}", q.name);
            }
        }
    }

    #[test]
    fn negatives_are_fresh_and_length_matched() {
        let spec = SyntheticDatasetSpec {
            n_names: 300,
            n_positives: 30,
            n_negatives: 30,
            ld: 1,
            ..Default::default()
        };
        let d = generate_dataset(&spec, &NamePools::default()).unwrap();
        let members: HashSet<_> = d.responder.iter().collect();
        let (pos, neg) = d.queries.split_at(30);
        for (p, n) in pos.iter().zip(neg) {
            assert!(n.source.is_none());
            assert!(!members.contains(&n.name));
            assert!(p.name.chars().count().abs_diff(n.name.chars().count()) <= 1);
        }
    }

    #[test]
    fn negative_filter_keeps_nearest_cosine_below_tau() {
        let enc = EncodingParams {
            num_permutations: 50,
            ..Default::default()
        };
        let spec = SyntheticDatasetSpec {
            n_names: 500,
            n_positives: 50,
            n_negatives: 100,
            ld: 1,
            negative_filter: Some(NegativeFilter {
                encoding: enc.clone(),
                tau: 0.9,
            }),
            ..Default::default()
        };
        let d = generate_dataset(&spec, &NamePools::default()).unwrap();
        let h = MinHasher::new(enc).unwrap();
        let sk: Vec<Vec<f64>> = d
            .responder
            .iter()
            .map(|n| crate::encoding::normalize(&h.signature(n).unwrap()).unwrap().values)
            .collect();
        let below = d.queries[50..]
            .iter()
            .filter(|q| {
                let v = crate::encoding::normalize(&h.signature(&q.name).unwrap()).unwrap().values;
                sk.iter().all(|s| cosine(&v, s) < 0.9)
            })
            .count();
        assert!(below as f64 >= 0.99 * 100.0, "{below}");
        assert_eq!(100 - below, d.filter_violations);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SyntheticDatasetSpec::default();
        let pools = NamePools::default();
        assert_eq!(generate_dataset(&spec, &pools).unwrap(), generate_dataset(&spec, &pools).unwrap());
    }

    #[test]
    fn tiny_pool_is_exhausted() {
        let pools = NamePools {
            given: NamePool::from_tsv("ann\t1\nbob\t1").unwrap(),
            family: NamePool::from_tsv("lee\t1").unwrap(),
        };
        let spec = SyntheticDatasetSpec {
            n_names: 5,
            style: NameStyle::TwoPart,
            n_positives: 1,
            ..Default::default()
        };
        assert!(matches!(generate_dataset(&spec, &pools), Err(EvalError::PoolExhausted(_))));
    }
}
