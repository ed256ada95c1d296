//! Fixtures shared by the benchmarks.

use std::sync::Arc;

pub use hefuzz_core::ckks::{Ciphertext, CkksBackend, CkksSecret, HeBackend, HeParams, SecretBackend};
use hefuzz_core::eval::{generate_dataset, Experiment, ExperimentConfig, NamePools, NameStyle, SyntheticDatasetSpec};
use hefuzz_core::protocol::{encrypt_indicators, IndicatorVector, Querier, Responder, SessionOptions};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// A responder over a small synthetic model and one prepared query batch.
pub struct Fixture {
    pub secret: CkksSecret,
    pub responder: Responder<CkksBackend>,
    pub experiment: Experiment,
    pub matching: Vec<Ciphertext>,
    pub centroid: Vec<Ciphertext>,
    pub indicators: Vec<Ciphertext>,
}

impl Fixture {
    pub fn new(names: usize, k: usize, batch: usize) -> Self {
        let spec = SyntheticDatasetSpec {
            n_names: names,
            n_positives: batch / 2,
            n_negatives: batch - batch / 2,
            ld: 1,
            style: NameStyle::ThreePart,
            seed: 5,
            negative_filter: None,
        };
        let data = generate_dataset(&spec, &NamePools::default()).expect("dataset");
        let mut cfg = ExperimentConfig::default();
        cfg.cluster.k = k;
        let experiment = Experiment::build(data, cfg).expect("model");
        let secret = CkksSecret::generate(HeParams::default(), 3).expect("keys");
        let responder = Responder::new(Arc::new(experiment.model.clone()), 0.9, 9).expect("responder");
        let mut q = Querier::new(secret.clone(), SessionOptions { early_exit: false, linear: false, compress: false }, 4);
        q.accept_setup(responder.info().clone()).expect("setup");
        let prepared = q.prepare_query(&experiment.dataset.query_names()).expect("query");

        // one cluster per query, round robin; only the encrypted shape matters here
        let picks: Vec<_> = (0..batch).map(|b| IndicatorVector::one_hot(k, b % k)).collect();
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let indicators = encrypt_indicators(secret.public(), &picks, k, &mut rng).expect("indicators");
        Self {
            secret,
            responder,
            experiment,
            matching: prepared.matching,
            centroid: prepared.centroid,
            indicators,
        }
    }

    pub fn backend(&self) -> &CkksBackend {
        self.secret.public()
    }
}
