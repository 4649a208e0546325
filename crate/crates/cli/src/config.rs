//! Flat `key = value` settings files. Keys mirror the field names of
//! `TrainConfig`, `HyperParams` and the dataset builders; `#` starts a
//! comment. `patience = none` disables early stopping.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use graphdial::error::{Error, Result};
use graphdial::model::{ConditionSpots, HyperParams};
use graphdial::train::TrainConfig;

const TRAIN_KEYS: &[&str] = &[
    "epochs",
    "batch_size",
    "lr",
    "beta",
    "seed",
    "spots",
    "patience",
    "clip_norm",
    "checkpoint_every",
];

const MODEL_KEYS: &[&str] = &[
    "enc_layers",
    "enc_hidden",
    "enc_embed",
    "latent_dim",
    "dec_layers",
    "dec_hidden",
    "dec_embed",
    "sos_dim",
];

const DATASET_KEYS: &[&str] = &[
    "count",
    "nodes",
    "k",
    "p_min",
    "p_max",
    "dim",
    "round_places",
    "walk_nodes",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let k = k.trim();
            if ![TRAIN_KEYS, MODEL_KEYS, DATASET_KEYS].iter().any(|keys| keys.contains(&k)) {
                return Err(Error::Config(format!("line {}: unknown key {k:?}", n + 1)));
            }
            values.insert(k.to_string(), v.trim().to_string());
        }
        Ok(Settings { values })
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Settings::parse(&std::fs::read_to_string(p)?),
            None => Ok(Settings::default()),
        }
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.values
            .get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Config(format!("bad value {v:?} for {key}")))
            })
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn apply_train(&self, cfg: &mut TrainConfig) -> Result<()> {
        macro_rules! set {
            ($($f:ident),*) => {$(
                if let Some(v) = self.get(stringify!($f))? {
                    cfg.$f = v;
                }
            )*};
        }
        set!(epochs, batch_size, lr, beta, seed, clip_norm, checkpoint_every);
        if let Some(s) = self.values.get("spots") {
            cfg.spots = ConditionSpots::parse(s)?;
        }
        if let Some(p) = self.values.get("patience") {
            cfg.patience = if p == "none" {
                None
            } else {
                Some(self.get("patience")?.expect("present"))
            };
        }
        cfg.validate()
    }

    pub fn apply_model(&self, hp: &mut HyperParams) -> Result<()> {
        macro_rules! set {
            ($($f:ident),*) => {$(
                if let Some(v) = self.get(stringify!($f))? {
                    hp.$f = v;
                }
            )*};
        }
        set!(enc_layers, enc_hidden, enc_embed, latent_dim, dec_layers, dec_hidden, dec_embed, sos_dim);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use graphdial::dfs::Vocabulary;

    #[test]
    fn parses_and_applies() {
        let s = Settings::parse(
            "# desk run\nepochs = 20\nlr=0.003  # faster\npatience = none\nspots = e,h\ndec_hidden = 16\ndec_embed = 16\nsos_dim = 16\n",
        )
        .unwrap();
        let mut cfg = TrainConfig::default();
        s.apply_train(&mut cfg).unwrap();
        assert_eq!(cfg.epochs, 20);
        assert_eq!(cfg.lr, 0.003);
        assert_eq!(cfg.patience, None);
        assert_eq!(cfg.spots, ConditionSpots::parse("e,h").unwrap());
        let mut hp = HyperParams::full(Vocabulary {
            t_size: 3,
            l_size: 3,
            e_size: 2,
        });
        s.apply_model(&mut hp).unwrap();
        assert_eq!(hp.dec_hidden, 16);
        hp.validate().unwrap();
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(Settings::parse("epoch = 3").is_err());
        assert!(Settings::parse("epochs 3").is_err());
        let s = Settings::parse("epochs = many").unwrap();
        assert!(s.apply_train(&mut TrainConfig::default()).is_err());
    }
}
