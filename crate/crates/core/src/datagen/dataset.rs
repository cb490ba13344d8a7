//! Paired Lorenz feature / spike datasets and their on-disk form.
//!
//! A dataset directory holds `manifest.json` plus, per sequence `i`,
//! `seq_{i:04}_raw.csv` (Lorenz states), `seq_{i:04}_features.csv`
//! (min-max normalized states) and `seq_{i:04}_spikes.csv`.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lorenz::{normalize_minmax, simulate_lorenz, LorenzParams};
use super::spikes::{draw_receptive_fields, simulate_spikes, ReceptiveField, SpikeSimConfig};
use crate::error::{Error, Result};
use crate::io::{read_to_string, write_atomic};
use crate::model::{matrix_from_csv, matrix_to_csv};
use crate::numerics::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LorenzDatasetConfig {
    #[serde(default)]
    pub lorenz: LorenzParams,
    #[serde(default)]
    pub spikes: SpikeSimConfig,
    pub n_sequences: usize,
    pub n_train: usize,
    pub seed: u64,
}

impl LorenzDatasetConfig {
    /// 200 training and 100 held-out sequences.
    pub fn lorenz(seed: u64) -> Self {
        Self {
            lorenz: LorenzParams::default(),
            spikes: SpikeSimConfig::default(),
            n_sequences: 300,
            n_train: 200,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.lorenz.validate()?;
        self.spikes.validate()?;
        if self.n_sequences == 0 || self.n_train > self.n_sequences {
            return Err(Error::Config(format!(
                "need n_sequences >= 1 and n_train <= n_sequences, got {} / {}",
                self.n_sequences, self.n_train
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub config: LorenzDatasetConfig,
    pub sequence_seeds: Vec<u64>,
    pub field_seed: u64,
    pub split_seed: u64,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub fields: Vec<ReceptiveField>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LorenzDataset {
    pub manifest: DatasetManifest,
    pub raw: Vec<Tensor>,
    /// Per-sequence min-max normalized states in `[0, 1]³`.
    pub features: Vec<Tensor>,
    pub spikes: Vec<Tensor>,
}

/// SplitMix64 output for `(seed, index)`; used to give every sequence its own stream.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn make_lorenz_dataset(config: &LorenzDatasetConfig) -> Result<LorenzDataset> {
    config.validate()?;
    let n = config.n_sequences;
    let sequence_seeds: Vec<u64> = (0..n as u64).map(|i| derive_seed(config.seed, i)).collect();
    let field_seed = derive_seed(config.seed, u64::MAX);
    let split_seed = derive_seed(config.seed, u64::MAX - 1);

    let mut rngs: Vec<ChaCha8Rng> = sequence_seeds.iter().map(|&s| ChaCha8Rng::seed_from_u64(s)).collect();
    let raw: Vec<Tensor> = rngs
        .iter_mut()
        .map(|rng| simulate_lorenz(&config.lorenz, rng))
        .collect::<Result<_>>()?;
    let features: Vec<Tensor> = raw.iter().map(normalize_minmax).collect::<Result<_>>()?;

    // One population of neurons shared by every sequence, tuned to pooled statistics.
    let pooled = Tensor::new(
        vec![n * config.lorenz.steps, 3],
        features.iter().flat_map(|f| f.data().iter().copied()).collect(),
    )?;
    let fields = draw_receptive_fields(&pooled, &config.spikes, &mut ChaCha8Rng::seed_from_u64(field_seed))?;
    let spikes = features
        .iter()
        .zip(rngs.iter_mut())
        .map(|(z, rng)| simulate_spikes(z, &fields, &config.spikes, rng))
        .collect::<Result<_>>()?;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(split_seed));
    let (train, test) = order.split_at(config.n_train);
    let (mut train, mut test) = (train.to_vec(), test.to_vec());
    train.sort_unstable();
    test.sort_unstable();

    Ok(LorenzDataset {
        manifest: DatasetManifest {
            config: config.clone(),
            sequence_seeds,
            field_seed,
            split_seed,
            train,
            test,
            fields,
        },
        raw,
        features,
        spikes,
    })
}

impl LorenzDataset {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    fn pick(v: &[Tensor], idx: &[usize]) -> Vec<Tensor> {
        idx.iter().map(|&i| v[i].clone()).collect()
    }

    /// `(spikes, features)` for the training split.
    pub fn train_pairs(&self) -> (Vec<Tensor>, Vec<Tensor>) {
        (Self::pick(&self.spikes, &self.manifest.train), Self::pick(&self.features, &self.manifest.train))
    }

    pub fn test_pairs(&self) -> (Vec<Tensor>, Vec<Tensor>) {
        (Self::pick(&self.spikes, &self.manifest.test), Self::pick(&self.features, &self.manifest.test))
    }

    pub fn test_raw(&self) -> Vec<Tensor> {
        Self::pick(&self.raw, &self.manifest.test)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let manifest = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        for i in 0..self.len() {
            write_atomic(&dir.join(format!("seq_{i:04}_raw.csv")), matrix_to_csv(&self.raw[i], "z").as_bytes())?;
            write_atomic(
                &dir.join(format!("seq_{i:04}_features.csv")),
                matrix_to_csv(&self.features[i], "z").as_bytes(),
            )?;
            write_atomic(&dir.join(format!("seq_{i:04}_spikes.csv")), matrix_to_csv(&self.spikes[i], "x").as_bytes())?;
        }
        write_atomic(&dir.join("manifest.json"), manifest.as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: DatasetManifest = serde_json::from_str(&read_to_string(&dir.join("manifest.json"))?)
            .map_err(|e| Error::format("dataset manifest", e.to_string()))?;
        let n = manifest.config.n_sequences;
        let load = |name: String| matrix_from_csv(&read_to_string(&dir.join(name))?);
        let mut raw = Vec::with_capacity(n);
        let mut features = Vec::with_capacity(n);
        let mut spikes = Vec::with_capacity(n);
        for i in 0..n {
            raw.push(load(format!("seq_{i:04}_raw.csv"))?);
            features.push(load(format!("seq_{i:04}_features.csv"))?);
            spikes.push(load(format!("seq_{i:04}_spikes.csv"))?);
        }
        Ok(Self {
            manifest,
            raw,
            features,
            spikes,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> LorenzDatasetConfig {
        let mut c = LorenzDatasetConfig::lorenz(17);
        c.n_sequences = 4;
        c.n_train = 3;
        c.lorenz.steps = 50;
        c.spikes.channels = 12;
        c
    }

    #[test]
    fn split_and_shapes() {
        let d = make_lorenz_dataset(&small()).unwrap();
        assert_eq!(d.manifest.train.len(), 3);
        assert_eq!(d.manifest.test.len(), 1);
        assert_eq!(d.spikes[0].shape(), &[50, 12]);
        assert_eq!(d.features[0].shape(), &[50, 3]);
        let mut seeds = d.manifest.sequence_seeds.clone();
        seeds.dedup();
        assert_eq!(seeds.len(), 4);
        assert_ne!(d.raw[0], d.raw[1]);
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(make_lorenz_dataset(&small()).unwrap(), make_lorenz_dataset(&small()).unwrap());
    }

    #[test]
    fn disk_round_trip_is_exact() {
        let d = make_lorenz_dataset(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        d.save(dir.path()).unwrap();
        assert_eq!(LorenzDataset::load(dir.path()).unwrap(), d);
    }

    #[test]
    fn bad_split_is_a_config_error() {
        let mut c = small();
        c.n_train = 5;
        assert!(matches!(make_lorenz_dataset(&c), Err(Error::Config(_))));
    }
}
