//! Run configuration: a flat `key = value` text file mapped onto the
//! per-module configs. Unknown keys are rejected; missing keys take defaults.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::detector::Pooling;
use crate::error::{AadError, Result};
use crate::features::{DenoiseConfig, FeatureConfig};
use crate::kmeans::KMeansConfig;
use crate::lstm_ae::LstmConfig;
use crate::ocsvm::{Gamma, OcSvmConfig};

/// Parse `key = value` lines. `#` starts a comment; blank lines are skipped.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| AadError::Config(format!("line {}: expected 'key = value'", n + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(AadError::Config(format!("line {}: empty key", n + 1)));
        }
        if out.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(AadError::Config(format!("line {}: duplicate key '{k}'", n + 1)));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub features: FeatureConfig,
    pub pooling: Pooling,
    /// Standardize vectors for K-Means and OC-SVM.
    pub standardize: bool,
    pub kmeans: KMeansConfig,
    pub ocsvm: OcSvmConfig,
    pub lstm: LstmConfig,
    pub percentile_grid: Vec<f64>,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            features: FeatureConfig::default(),
            pooling: Pooling::Flatten,
            standardize: true,
            kmeans: KMeansConfig::default(),
            ocsvm: OcSvmConfig::default(),
            lstm: LstmConfig::default(),
            percentile_grid: default_grid(),
            seed: 42,
        }
    }
}

/// 5, 10, …, 95.
pub fn default_grid() -> Vec<f64> {
    (1..=19).map(|i| 5.0 * i as f64).collect()
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| AadError::Config(format!("{key} = {v}: {e}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(AadError::Config(format!("{key} = {v}: expected on/off"))),
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

impl RunConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let kv = parse_kv(text)?;
        let mut c = RunConfig::default();
        let mut denoise_on = false;
        let mut denoise = DenoiseConfig::default();
        let mut rms_on = false;
        let mut rms_target = 0.1;
        for (k, v) in &kv {
            let (k, v) = (k.as_str(), v.as_str());
            match k {
                "n_fft" => c.features.n_fft = parse(k, v)?,
                "hop_length" => c.features.hop_length = parse(k, v)?,
                "n_mels" => c.features.n_mels = parse(k, v)?,
                "fmin" => c.features.fmin = parse(k, v)?,
                "fmax" => c.features.fmax = if v == "nyquist" { None } else { Some(parse(k, v)?) },
                "time_per_frame" => c.features.time_per_frame = parse(k, v)?,
                "hop_ratio" => c.features.hop_ratio = parse(k, v)?,
                "rms_normalize" => rms_on = parse_bool(k, v)?,
                "rms_target" => rms_target = parse(k, v)?,
                "denoise" => denoise_on = parse_bool(k, v)?,
                "denoise_percentile" => denoise.percentile = parse(k, v)?,
                "denoise_margin_db" => denoise.margin_db = parse(k, v)?,
                "pooling" => {
                    c.pooling = match v {
                        "flatten" => Pooling::Flatten,
                        "mean_pool_time" => Pooling::MeanPoolTime,
                        _ => return Err(AadError::Config(format!("pooling = {v}: expected flatten|mean_pool_time"))),
                    }
                }
                "standardize" => c.standardize = parse_bool(k, v)?,
                "kmeans_k" => c.kmeans.k = parse(k, v)?,
                "kmeans_max_iter" => c.kmeans.max_iter = parse(k, v)?,
                "kmeans_tol" => c.kmeans.tol = parse(k, v)?,
                "ocsvm_nu" => c.ocsvm.nu = parse(k, v)?,
                "ocsvm_gamma" => {
                    c.ocsvm.gamma = if v == "scale" { Gamma::Scale } else { Gamma::Value(parse(k, v)?) }
                }
                "ocsvm_tol" => c.ocsvm.tol = parse(k, v)?,
                "ocsvm_max_passes" => c.ocsvm.max_passes = parse(k, v)?,
                "ocsvm_cache_mb" => c.ocsvm.cache_mb = parse(k, v)?,
                "lstm_hidden" => c.lstm.hidden = parse(k, v)?,
                "lstm_epochs" => c.lstm.epochs = parse(k, v)?,
                "lstm_batch" => c.lstm.batch = parse(k, v)?,
                "lstm_lr" => c.lstm.lr = parse(k, v)?,
                "percentile_grid" => {
                    c.percentile_grid = v
                        .split(',')
                        .map(|p| parse::<f64>(k, p.trim()))
                        .collect::<Result<Vec<_>>>()?;
                }
                "seed" => c.seed = parse(k, v)?,
                other => return Err(AadError::Config(format!("unknown key '{other}'"))),
            }
        }
        c.features.rms_target = rms_on.then_some(rms_target);
        c.features.denoise = denoise_on.then_some(denoise);
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| AadError::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(AadError::Config(m.to_string()));
        let f = &self.features;
        if f.hop_length == 0 || f.n_mels == 0 {
            return bad("hop_length and n_mels must be positive");
        }
        if !(f.time_per_frame > 0.0) || !(f.hop_ratio > 0.0) {
            return bad("time_per_frame and hop_ratio must be positive");
        }
        if self.kmeans.k == 0 {
            return bad("kmeans_k must be >= 1");
        }
        if !(self.ocsvm.nu > 0.0 && self.ocsvm.nu <= 1.0) {
            return bad("ocsvm_nu must lie in (0, 1]");
        }
        if self.lstm.hidden == 0 || self.lstm.batch == 0 || !(self.lstm.lr > 0.0) {
            return bad("lstm_hidden, lstm_batch and lstm_lr must be positive");
        }
        if self.percentile_grid.is_empty() || self.percentile_grid.iter().any(|p| !(0.0..=100.0).contains(p)) {
            return bad("percentile_grid must be a non-empty list of values in [0, 100]");
        }
        if self.percentile_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("percentile_grid must be strictly increasing");
        }
        Ok(())
    }

    /// Every key with its effective value, sorted by key.
    pub fn canonical_pairs(&self) -> BTreeMap<&'static str, String> {
        let f = &self.features;
        let mut m = BTreeMap::new();
        m.insert("n_fft", f.n_fft.to_string());
        m.insert("hop_length", f.hop_length.to_string());
        m.insert("n_mels", f.n_mels.to_string());
        m.insert("fmin", fmt_f64(f.fmin));
        m.insert("fmax", f.fmax.map_or("nyquist".to_string(), fmt_f64));
        m.insert("time_per_frame", fmt_f64(f.time_per_frame));
        m.insert("hop_ratio", fmt_f64(f.hop_ratio));
        m.insert("rms_normalize", if f.rms_target.is_some() { "on" } else { "off" }.into());
        m.insert("rms_target", fmt_f64(f.rms_target.unwrap_or(0.1)));
        let d = f.denoise.clone().unwrap_or_default();
        m.insert("denoise", if f.denoise.is_some() { "on" } else { "off" }.into());
        m.insert("denoise_percentile", fmt_f64(d.percentile));
        m.insert("denoise_margin_db", fmt_f64(d.margin_db));
        m.insert("pooling", self.pooling.name().into());
        m.insert("standardize", if self.standardize { "on" } else { "off" }.into());
        m.insert("kmeans_k", self.kmeans.k.to_string());
        m.insert("kmeans_max_iter", self.kmeans.max_iter.to_string());
        m.insert("kmeans_tol", fmt_f64(self.kmeans.tol));
        m.insert("ocsvm_nu", fmt_f64(self.ocsvm.nu));
        m.insert(
            "ocsvm_gamma",
            match self.ocsvm.gamma {
                Gamma::Scale => "scale".into(),
                Gamma::Value(g) => fmt_f64(g),
            },
        );
        m.insert("ocsvm_tol", fmt_f64(self.ocsvm.tol));
        m.insert("ocsvm_max_passes", self.ocsvm.max_passes.to_string());
        m.insert("ocsvm_cache_mb", self.ocsvm.cache_mb.to_string());
        m.insert("lstm_hidden", self.lstm.hidden.to_string());
        m.insert("lstm_epochs", self.lstm.epochs.to_string());
        m.insert("lstm_batch", self.lstm.batch.to_string());
        m.insert("lstm_lr", fmt_f64(self.lstm.lr));
        m.insert(
            "percentile_grid",
            self.percentile_grid.iter().map(|p| fmt_f64(*p)).collect::<Vec<_>>().join(","),
        );
        m.insert("seed", self.seed.to_string());
        m
    }

    /// Canonical text form; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.canonical_pairs() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// SHA-256 of the canonical text; independent of key order in the source file.
    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.to_text().as_bytes()).into()
    }

    pub fn digest_hex(&self) -> String {
        hex(&self.digest())
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_ignores_order_and_comments() {
        let a = RunConfig::from_text("seed = 7\nn_mels = 64\n").unwrap();
        let b = RunConfig::from_text("# comment\nn_mels=64   # trailing\n\nseed = 7").unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), RunConfig::default().digest());
    }

    #[test]
    fn defaults_and_round_trip() {
        let d = RunConfig::default();
        assert_eq!(RunConfig::from_text("").unwrap(), d);
        assert_eq!(d.percentile_grid.len(), 19);
        let c = RunConfig::from_text("denoise = on\nfmax = 4000\nocsvm_gamma = 0.5\npooling = mean_pool_time").unwrap();
        assert_eq!(RunConfig::from_text(&c.to_text()).unwrap(), c);
        assert_eq!(c.features.denoise, Some(DenoiseConfig::default()));
    }

    #[test]
    fn rejects_bad_input() {
        for bad in ["nope = 1", "seed", "seed = x", "seed = 1\nseed = 2", "ocsvm_nu = 0", "percentile_grid = 50,10"] {
            assert!(matches!(RunConfig::from_text(bad), Err(AadError::Config(_))), "{bad}");
        }
    }
}
