use serde::{Deserialize, Serialize};

use crate::dataio::{SEQ_LEN, VOCAB_SIZE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Mlp,
    Cnn,
    Rnn,
    CnnLstm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Mlp, ModelKind::Cnn, ModelKind::Rnn, ModelKind::CnnLstm];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Mlp => "mlp",
            ModelKind::Cnn => "cnn",
            ModelKind::Rnn => "rnn",
            ModelKind::CnnLstm => "cnn-lstm",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase().replace('_', "-"))
            .ok_or_else(|| format!("unknown model kind {s:?} (expected mlp, cnn, rnn or cnn-lstm)"))
    }
}

/// Fully connected network over position-wise normalized indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self { hidden: vec![100; 3] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CnnConfig {
    pub embed_dim: usize,
    /// Filters of each convolutional block.
    pub filters: Vec<usize>,
    pub kernel: usize,
    pub dropout: f64,
    pub pool: usize,
    pub adaptive_len: usize,
    pub dense: usize,
}

impl Default for CnnConfig {
    fn default() -> Self {
        Self {
            embed_dim: 100,
            filters: vec![32, 64, 64],
            kernel: 3,
            dropout: 0.2,
            pool: 2,
            adaptive_len: 4,
            dense: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RnnConfig {
    pub embed_dim: usize,
    pub hidden: usize,
    pub bidirectional: bool,
    pub dropout: f64,
    pub dense: usize,
}

impl Default for RnnConfig {
    fn default() -> Self {
        Self {
            embed_dim: 100,
            hidden: 50,
            bidirectional: true,
            dropout: 0.2,
            dense: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CnnLstmConfig {
    pub embed_dim: usize,
    pub filters: usize,
    pub kernel: usize,
    pub pool: usize,
    pub hidden: usize,
}

impl Default for CnnLstmConfig {
    fn default() -> Self {
        Self {
            embed_dim: 8,
            filters: 32,
            kernel: 9,
            pool: 2,
            hidden: 512,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Architecture {
    Mlp(MlpConfig),
    Cnn(CnnConfig),
    Rnn(RnnConfig),
    CnnLstm(CnnLstmConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(default = "default_vocab")]
    pub vocab_size: usize,
    #[serde(default = "default_seq_len")]
    pub seq_len: usize,
    #[serde(flatten)]
    pub arch: Architecture,
    #[serde(default = "default_bn_eps")]
    pub batchnorm_eps: f64,
    #[serde(default = "default_bn_momentum")]
    pub batchnorm_momentum: f64,
}

fn default_vocab() -> usize {
    VOCAB_SIZE
}

fn default_seq_len() -> usize {
    SEQ_LEN
}

fn default_bn_eps() -> f64 {
    1e-3
}

fn default_bn_momentum() -> f64 {
    0.99
}

impl ModelSpec {
    pub fn new(arch: Architecture) -> Self {
        Self {
            vocab_size: default_vocab(),
            seq_len: default_seq_len(),
            arch,
            batchnorm_eps: default_bn_eps(),
            batchnorm_momentum: default_bn_momentum(),
        }
    }

    pub fn default_for(kind: ModelKind) -> Self {
        Self::new(match kind {
            ModelKind::Mlp => Architecture::Mlp(MlpConfig::default()),
            ModelKind::Cnn => Architecture::Cnn(CnnConfig::default()),
            ModelKind::Rnn => Architecture::Rnn(RnnConfig::default()),
            ModelKind::CnnLstm => Architecture::CnnLstm(CnnLstmConfig::default()),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self.arch {
            Architecture::Mlp(_) => ModelKind::Mlp,
            Architecture::Cnn(_) => ModelKind::Cnn,
            Architecture::Rnn(_) => ModelKind::Rnn,
            Architecture::CnnLstm(_) => ModelKind::CnnLstm,
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> [u8; 32] {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(self).expect("spec serializes");
        Sha256::digest(&json).into()
    }
}
