use std::path::{Path, PathBuf};

use hefuzz_core::ckks::HeParams;
use hefuzz_core::clustering::ClusterConfig;
use hefuzz_core::encoding::{DualEncoder, EncodingParams};
use hefuzz_core::protocol::ProtocolConfig;
use hefuzz_core::transport::ChannelConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const CONFIG_ENV: &str = "HEFUZZ_CONFIG";
pub const DEFAULT_FILE: &str = "hefuzz.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncodingSection {
    /// Base MinHash family; `num_permutations` and `first_index` are
    /// derived from the window lengths below.
    #[serde(flatten)]
    pub params: EncodingParams,
    pub centroid_len: usize,
    pub match_len: usize,
}

impl Default for EncodingSection {
    fn default() -> Self {
        Self {
            params: EncodingParams::default(),
            centroid_len: 200,
            match_len: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSection {
    /// `None` picks `round(sqrt(n))`.
    pub k: Option<usize>,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for ClusterSection {
    fn default() -> Self {
        Self {
            k: None,
            iterations: 20,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub model: Option<PathBuf>,
    pub keys: Option<PathBuf>,
}

/// Everything a command needs, loaded from `hefuzz.toml` and then
/// overridden by flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub encoding: EncodingSection,
    pub he: HeParams,
    pub cluster: ClusterSection,
    pub protocol: ProtocolConfig,
    pub transport: ChannelConfig,
    pub paths: Paths,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 1,
            out_dir: PathBuf::from("out"),
            encoding: EncodingSection::default(),
            he: HeParams::default(),
            cluster: ClusterSection::default(),
            protocol: ProtocolConfig::default(),
            transport: ChannelConfig::default(),
            paths: Paths::default(),
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Config = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// `explicit`, else `$HEFUZZ_CONFIG`, else `./hefuzz.toml` if present,
    /// else defaults.
    pub fn load(explicit: Option<&Path>) -> Result<(Self, Option<PathBuf>), CliError> {
        let path = explicit
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from))
            .or_else(|| Some(PathBuf::from(DEFAULT_FILE)).filter(|p| p.exists()));
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(&p)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                Ok((Self::parse(&text)?, Some(p)))
            }
            None => Ok((Self::default(), None)),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.encoding.centroid_len == 0 || self.encoding.match_len == 0 {
            return bad("encoding window lengths must be positive".into());
        }
        self.encoding.params.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.he.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.protocol.tau) {
            return bad(format!("tau {} outside [0, 1]", self.protocol.tau));
        }
        if self.protocol.threads == 0 {
            return bad("threads must be at least 1".into());
        }
        if self.cluster.k == Some(0) {
            return bad("cluster.k must be positive; omit it for round(sqrt(n))".into());
        }
        Ok(())
    }

    /// Base encoding with its window set to the centroid sketch.
    pub fn base_encoding(&self) -> EncodingParams {
        self.encoding.params.window(0, self.encoding.centroid_len)
    }

    pub fn dual_encoder(&self) -> Result<DualEncoder, CliError> {
        DualEncoder::new(&self.base_encoding(), self.encoding.centroid_len, self.encoding.match_len)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn cluster_config(&self, n: usize) -> ClusterConfig {
        ClusterConfig {
            k: self.cluster.k.unwrap_or_else(|| ClusterConfig::default_k(n)),
            iterations: self.cluster.iterations,
            seed: self.cluster.seed,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default() {
        assert_eq!(Config::parse("").unwrap(), Config::default());
    }

    #[test]
    fn sections_override_fields() {
        let cfg = Config::parse(
            r#"
            seed = 9
            [encoding]
            shingle_size = 2
            match_len = 64
            [cluster]
            k = 12
            [protocol]
            tau = 0.8
            early_exit = false
            [transport]
            mode = "tcp"
            address = "127.0.0.1:9000"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.encoding.params.shingle_size, 2);
        assert_eq!(cfg.encoding.match_len, 64);
        assert_eq!(cfg.encoding.centroid_len, 200);
        assert_eq!(cfg.cluster_config(400).k, 12);
        assert!(!cfg.protocol.early_exit);
        assert_eq!(cfg.transport.address, "127.0.0.1:9000");
        assert_eq!(cfg.he, HeParams::default());
    }

    #[test]
    fn default_k_is_square_root() {
        assert_eq!(Config::default().cluster_config(2000).k, 45);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(matches!(Config::parse("colour = 1"), Err(CliError::Config(_))));
        assert!(matches!(Config::parse("[protocol]\ntau = 2.0"), Err(CliError::Config(_))));
        assert!(matches!(Config::parse("[he]\nring_degree = 1000"), Err(CliError::Config(_))));
    }

    #[test]
    fn roundtrips_through_toml() {
        let cfg = Config::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(Config::parse(&text).unwrap(), cfg);
    }
}
