use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use super::ModelError;
use crate::kv::{parse_list, KvMap};

/// Number of pooling stages; each conv part is followed by one max-pool.
pub const CONV_PARTS: usize = 5;
/// Dense layers in the classification head.
pub const FC_LAYERS: usize = 3;

/// A run of `layers` same-width convolutions with `channels` filters each.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvPart {
    pub layers: usize,
    pub channels: usize,
}

impl ConvPart {
    pub const fn new(layers: usize, channels: usize) -> Self {
        Self { layers, channels }
    }
}

impl fmt::Display for ConvPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.layers, self.channels)
    }
}

impl FromStr for ConvPart {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (l, c) = s
            .trim()
            .split_once('x')
            .ok_or_else(|| format!("expected <layers>x<channels>, got {s:?}"))?;
        Ok(Self {
            layers: l.parse().map_err(|e| format!("{s:?}: {e}"))?,
            channels: c.parse().map_err(|e| format!("{s:?}: {e}"))?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub input_len: usize,
    pub num_classes: usize,
    pub conv_parts: Vec<ConvPart>,
    pub kernel_len: usize,
    /// 1-based indices of conv parts followed by an SE block.
    pub se_positions: BTreeSet<usize>,
    pub se_reduction: usize,
    pub lstm_hidden: usize,
    pub fc_sizes: Vec<usize>,
}

pub const DEFAULT_CONV_PARTS: [ConvPart; CONV_PARTS] = [
    ConvPart::new(1, 64),
    ConvPart::new(1, 128),
    ConvPart::new(2, 256),
    ConvPart::new(2, 512),
    ConvPart::new(2, 512),
];

impl ModelConfig {
    /// The eight-conv, two-SE, one-LSTM, three-dense network.
    pub fn standard(input_len: usize, num_classes: usize) -> Self {
        Self {
            input_len,
            num_classes,
            conv_parts: DEFAULT_CONV_PARTS.to_vec(),
            kernel_len: 3,
            se_positions: [4, 5].into_iter().collect(),
            se_reduction: 16,
            lstm_hidden: 128,
            fc_sizes: vec![256, 64, num_classes],
        }
    }

    /// Same topology at toy widths, for tests and quick experiments.
    pub fn tiny(input_len: usize, num_classes: usize) -> Self {
        Self {
            input_len,
            num_classes,
            conv_parts: vec![
                ConvPart::new(1, 8),
                ConvPart::new(1, 8),
                ConvPart::new(2, 8),
                ConvPart::new(2, 16),
                ConvPart::new(2, 16),
            ],
            kernel_len: 3,
            se_positions: [4, 5].into_iter().collect(),
            se_reduction: 2,
            lstm_hidden: 8,
            fc_sizes: vec![16, 16, num_classes],
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::Config(msg));
        if self.conv_parts.len() != CONV_PARTS {
            return bad(format!("expected {CONV_PARTS} conv parts, got {}", self.conv_parts.len()));
        }
        if let Some(p) = self.conv_parts.iter().find(|p| p.layers == 0 || p.channels == 0) {
            return bad(format!("conv part {p} has no layers or no channels"));
        }
        if self.fc_sizes.len() != FC_LAYERS {
            return bad(format!("expected {FC_LAYERS} dense layers, got {}", self.fc_sizes.len()));
        }
        if self.fc_sizes.contains(&0) {
            return bad("dense layer widths must be positive".into());
        }
        if self.num_classes == 0 || self.fc_sizes[FC_LAYERS - 1] != self.num_classes {
            return bad(format!(
                "last dense width {} must equal num_classes {}",
                self.fc_sizes[FC_LAYERS - 1],
                self.num_classes
            ));
        }
        if self.kernel_len == 0 || self.lstm_hidden == 0 || self.se_reduction == 0 {
            return bad("kernel_len, lstm_hidden and se_reduction must be positive".into());
        }
        for &pos in &self.se_positions {
            if !(1..=CONV_PARTS).contains(&pos) {
                return bad(format!("SE position {pos} outside 1..={CONV_PARTS}"));
            }
            let c = self.conv_parts[pos - 1].channels;
            if !c.is_multiple_of(self.se_reduction) || c < self.se_reduction {
                return bad(format!(
                    "SE after part {pos}: {c} channels not divisible by reduction {}",
                    self.se_reduction
                ));
            }
        }
        let min_len = 1 << CONV_PARTS;
        if self.input_len < min_len {
            return Err(ModelError::InputTooShort {
                input_len: self.input_len,
                min: min_len,
            });
        }
        Ok(())
    }

    pub fn conv_layer_count(&self) -> usize {
        self.conv_parts.iter().map(|p| p.layers).sum()
    }

    /// Canonical `key = value` block, keys in fixed order.
    pub fn to_kv_text(&self) -> String {
        let join = |v: &mut dyn Iterator<Item = String>| v.collect::<Vec<_>>().join(",");
        format!(
            "input_len = {}\nnum_classes = {}\nconv_parts = {}\nkernel_len = {}\nse_positions = {}\nse_reduction = {}\nlstm_hidden = {}\nfc_sizes = {}\n",
            self.input_len,
            self.num_classes,
            join(&mut self.conv_parts.iter().map(ConvPart::to_string)),
            self.kernel_len,
            join(&mut self.se_positions.iter().map(usize::to_string)),
            self.se_reduction,
            self.lstm_hidden,
            join(&mut self.fc_sizes.iter().map(usize::to_string)),
        )
    }

    pub const KEYS: [&'static str; 9] = [
        "preset",
        "input_len",
        "num_classes",
        "conv_parts",
        "kernel_len",
        "se_positions",
        "se_reduction",
        "lstm_hidden",
        "fc_sizes",
    ];

    /// Reads a config from a key-value map. `input_len` and `num_classes`
    /// are required; everything else falls back to the network named by
    /// `preset` (`standard` unless given, or `tiny`).
    pub fn from_kv(kv: &KvMap) -> Result<Self, ModelError> {
        let input_len = kv.require("input_len")?;
        let num_classes = kv.require("num_classes")?;
        let mut cfg = match kv.raw("preset").unwrap_or("standard") {
            "standard" => Self::standard(input_len, num_classes),
            "tiny" => Self::tiny(input_len, num_classes),
            other => return Err(ModelError::Config(format!("unknown preset {other:?} (expected standard or tiny)"))),
        };
        if let Some(v) = kv.raw("conv_parts") {
            cfg.conv_parts = parse_list("conv_parts", v)?;
        }
        cfg.kernel_len = kv.get_or("kernel_len", cfg.kernel_len)?;
        if let Some(v) = kv.raw("se_positions") {
            cfg.se_positions = parse_list("se_positions", v)?.into_iter().collect();
        }
        cfg.se_reduction = kv.get_or("se_reduction", cfg.se_reduction)?;
        cfg.lstm_hidden = kv.get_or("lstm_hidden", cfg.lstm_hidden)?;
        if let Some(v) = kv.raw("fc_sizes") {
            cfg.fc_sizes = parse_list("fc_sizes", v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_has_eight_convs() {
        let cfg = ModelConfig::standard(3600, 5);
        assert_eq!(cfg.conv_layer_count(), 8);
        cfg.validate().unwrap();
    }

    #[test]
    fn preset_key() {
        let kv = KvMap::parse("preset = tiny\ninput_len = 64\nnum_classes = 2\nlstm_hidden = 6").unwrap();
        let cfg = ModelConfig::from_kv(&kv).unwrap();
        assert_eq!(cfg.conv_parts, ModelConfig::tiny(64, 2).conv_parts);
        assert_eq!(cfg.lstm_hidden, 6);
        let kv = KvMap::parse("preset = huge\ninput_len = 64\nnum_classes = 2").unwrap();
        assert!(ModelConfig::from_kv(&kv).is_err());
    }

    #[test]
    fn kv_round_trip() {
        let cfg = ModelConfig::tiny(64, 3);
        let kv = KvMap::parse(&cfg.to_kv_text()).unwrap();
        assert_eq!(ModelConfig::from_kv(&kv).unwrap(), cfg);
    }

    #[test]
    fn rejects_invariant_violations() {
        let mut cfg = ModelConfig::standard(3600, 5);
        cfg.conv_parts.pop();
        assert!(cfg.validate().is_err());

        let mut cfg = ModelConfig::standard(3600, 5);
        cfg.fc_sizes = vec![256, 5];
        assert!(cfg.validate().is_err());

        let mut cfg = ModelConfig::standard(3600, 5);
        cfg.fc_sizes[2] = 4;
        assert!(cfg.validate().is_err());

        let mut cfg = ModelConfig::standard(3600, 5);
        cfg.conv_parts[0].layers = 0;
        assert!(cfg.validate().is_err());

        let cfg = ModelConfig::standard(31, 5);
        assert!(matches!(cfg.validate(), Err(ModelError::InputTooShort { .. })));

        let mut cfg = ModelConfig::tiny(64, 5);
        cfg.se_reduction = 3;
        assert!(cfg.validate().is_err());
    }
}
