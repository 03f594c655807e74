//! On-disk form of a hidden message: everything the receiver needs to
//! rebuild the sender's session, plus the emitted token ids.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distribution::TokenId;
use crate::models::{
    open_session, BackendSpec, Conditioning, ModelError, ModelSession, DEFAULT_MAX_LEN,
};
use crate::pipeline::{CandidateRule, StegoParams};
use crate::pooling::{EosPolicy, PoolParams};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StegoFileError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed stego file: {0}")]
    Malformed(String),
    #[error("unsupported stego file version {0}")]
    Version(u32),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileParams {
    pub t_a: f64,
    pub t_r: f64,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    #[serde(default)]
    pub eos_policy: EosPolicy,
    #[serde(default)]
    pub max_pool_size: Option<usize>,
    /// When set, the fixed-size baseline pool is used and the thresholds
    /// are ignored.
    #[serde(default)]
    pub top_k: Option<usize>,
}

fn default_max_len() -> usize {
    DEFAULT_MAX_LEN
}

impl FileParams {
    pub fn from_params(params: &StegoParams) -> Self {
        match params.rule {
            CandidateRule::Semantic(p) => Self {
                t_a: p.t_a,
                t_r: p.t_r,
                max_len: params.max_len,
                eos_policy: p.eos_policy,
                max_pool_size: p.max_pool_size,
                top_k: None,
            },
            CandidateRule::TopK { k, eos_policy } => Self {
                t_a: 0.0,
                t_r: 1.0,
                max_len: params.max_len,
                eos_policy,
                max_pool_size: None,
                top_k: Some(k),
            },
        }
    }

    pub fn to_params(&self) -> Result<StegoParams, StegoFileError> {
        let rule = match self.top_k {
            Some(k) => CandidateRule::TopK {
                k,
                eos_policy: self.eos_policy,
            },
            None => CandidateRule::Semantic(
                PoolParams::new(self.t_a, self.t_r)
                    .and_then(|p| p.with_max_pool_size(self.max_pool_size))
                    .map_err(|e| StegoFileError::Malformed(e.to_string()))?
                    .with_eos_policy(self.eos_policy),
            ),
        };
        Ok(StegoParams::new(rule).with_max_len(self.max_len))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StegoFile {
    pub version: u32,
    pub backend: String,
    /// Base64 conditioning bytes.
    pub conditioning: String,
    pub params: FileParams,
    pub tokens: Vec<u32>,
    /// Informational only; ignored when reading.
    #[serde(default)]
    pub token_strings: Vec<String>,
}

impl StegoFile {
    pub fn new(
        backend: &BackendSpec,
        conditioning: &Conditioning,
        params: &StegoParams,
        tokens: &[TokenId],
        token_strings: Vec<String>,
    ) -> Self {
        Self {
            version: FORMAT_VERSION,
            backend: backend.to_string(),
            conditioning: conditioning.to_base64(),
            params: FileParams::from_params(params),
            tokens: tokens.iter().map(|t| t.0).collect(),
            token_strings,
        }
    }

    pub fn parse(text: &str) -> Result<Self, StegoFileError> {
        #[derive(Deserialize)]
        struct Probe {
            version: u32,
        }
        let probe: Probe =
            serde_json::from_str(text).map_err(|e| StegoFileError::Malformed(e.to_string()))?;
        if probe.version != FORMAT_VERSION {
            return Err(StegoFileError::Version(probe.version));
        }
        serde_json::from_str(text).map_err(|e| StegoFileError::Malformed(e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self, StegoFileError> {
        let text = fs::read_to_string(path).map_err(|source| StegoFileError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("stego files always serialize");
        s.push('\n');
        s
    }

    pub fn backend_spec(&self) -> Result<BackendSpec, StegoFileError> {
        Ok(self.backend.parse()?)
    }

    pub fn conditioning(&self) -> Result<Conditioning, StegoFileError> {
        Conditioning::from_base64(&self.conditioning)
            .map_err(|e| StegoFileError::Malformed(format!("conditioning: {e}")))
    }

    pub fn token_ids(&self) -> Vec<TokenId> {
        self.tokens.iter().copied().map(TokenId).collect()
    }

    /// Fresh session matching the sender's.
    pub fn open_session(&self) -> Result<ModelSession, StegoFileError> {
        let session = open_session(&self.backend_spec()?, &self.conditioning()?)?;
        Ok(session.with_max_len(self.params.max_len))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> StegoFile {
        let params = StegoParams::semantic(0.01, 0.3).unwrap();
        StegoFile::new(
            &"synthetic:seed=7".parse().unwrap(),
            &Conditioning::from_text("animals"),
            &params,
            &[TokenId(3), TokenId(1)],
            vec!["w3".into(), "w1".into()],
        )
    }

    #[test]
    fn json_round_trip() {
        let f = sample();
        let again = StegoFile::parse(&f.to_json()).unwrap();
        assert_eq!(again, f);
        assert_eq!(
            again.conditioning().unwrap(),
            Conditioning::from_text("animals")
        );
        assert_eq!(
            again.params.to_params().unwrap(),
            StegoParams::semantic(0.01, 0.3).unwrap()
        );
    }

    #[test]
    fn unknown_fields_ignored_and_version_checked() {
        let mut v: serde_json::Value = serde_json::from_str(&sample().to_json()).unwrap();
        v["comment"] = "from the future".into();
        v["params"]["temperature"] = 0.7.into();
        assert!(StegoFile::parse(&v.to_string()).is_ok());
        v["version"] = 2.into();
        assert!(matches!(
            StegoFile::parse(&v.to_string()),
            Err(StegoFileError::Version(2))
        ));
        assert!(matches!(
            StegoFile::parse("{}"),
            Err(StegoFileError::Malformed(_))
        ));
    }

    #[test]
    fn topk_params_survive() {
        let params = StegoParams::topk(2).with_max_len(20);
        let p = FileParams::from_params(&params);
        assert_eq!(p.top_k, Some(2));
        assert_eq!(p.to_params().unwrap(), params);
    }
}
