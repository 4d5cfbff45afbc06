//! Seeded synthetic waveforms with one spike pattern per class, for
//! exercising the pipeline without clinical recordings.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::ingest::{LabelScheme, Segment};
use crate::kv::KvMap;

const CODES: [char; 5] = ['N', 'V', 'L', 'R', 'A'];

/// Parameters of a synthetic dataset, written as comma-separated
/// `key=value` pairs, e.g. `classes=5,per_class=40,len=128,noise=0.05,seed=1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub classes: usize,
    pub per_class: usize,
    pub len: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            classes: 5,
            per_class: 40,
            len: 128,
            noise: 0.05,
            seed: 0,
        }
    }
}

impl FromStr for SynthSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let kv = KvMap::parse(&s.replace(',', "\n")).map_err(|e| e.to_string())?;
        kv.check_known(&["classes", "per_class", "len", "noise", "seed"])
            .map_err(|e| e.to_string())?;
        let d = Self::default();
        let get = |e: crate::kv::KvError| e.to_string();
        let spec = Self {
            classes: kv.get_or("classes", d.classes).map_err(get)?,
            per_class: kv.get_or("per_class", d.per_class).map_err(get)?,
            len: kv.get_or("len", d.len).map_err(get)?,
            noise: kv.get_or("noise", d.noise).map_err(get)?,
            seed: kv.get_or("seed", d.seed).map_err(get)?,
        };
        if !(2..=CODES.len()).contains(&spec.classes) {
            return Err(format!("classes must be between 2 and {}", CODES.len()));
        }
        if spec.per_class == 0 {
            return Err("per_class must be positive".into());
        }
        if spec.len < 16 {
            return Err("len must be at least 16".into());
        }
        if !spec.noise.is_finite() || spec.noise < 0.0 {
            return Err("noise must be finite and non-negative".into());
        }
        Ok(spec)
    }
}

impl fmt::Display for SynthSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "classes={},per_class={},len={},noise={},seed={}",
            self.classes, self.per_class, self.len, self.noise, self.seed
        )
    }
}

impl SynthSpec {
    pub fn scheme(&self) -> LabelScheme {
        LabelScheme::new(CODES[..self.classes].to_vec()).expect("distinct codes")
    }

    /// Raw (unnormalized) segments, class by class.
    pub fn generate(&self) -> Vec<Segment> {
        let scheme = self.scheme();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let noise = Normal::new(0.0, self.noise).expect("validated noise");
        let mut out = Vec::with_capacity(self.classes * self.per_class);
        for (c, code) in CODES.iter().enumerate().take(self.classes) {
            for i in 0..self.per_class {
                let phase: f64 = rng.random();
                let amp = rng.random_range(0.8..1.2);
                let values = (0..self.len)
                    .map(|t| amp * pattern(c, t as f64 / self.len as f64, phase) + noise.sample(&mut rng))
                    .collect();
                out.push(Segment {
                    source_id: format!("synth_{code}_{i}"),
                    values,
                    label: scheme.class(c).expect("class in scheme"),
                    normalized: false,
                });
            }
        }
        out
    }
}

fn bump(x: f64, width: f64) -> f64 {
    (-(x * x) / (2.0 * width * width)).exp()
}

/// Distance from `u` to the nearest beat centre of a train with `beats`
/// beats per segment, as a fraction of the segment.
fn beat_offset(u: f64, phase: f64, beats: f64) -> f64 {
    let p = (u * beats + phase).fract();
    (p - 0.5) / beats
}

fn pattern(class: usize, u: f64, phase: f64) -> f64 {
    match class {
        // flat baseline with slow wander
        0 => 0.3 * (2.0 * PI * (u + phase)).sin(),
        // narrow positive spikes
        1 => bump(beat_offset(u, phase, 4.0), 0.012),
        // narrow negative spikes
        2 => -bump(beat_offset(u, phase, 4.0), 0.012),
        // wide bumps
        3 => bump(beat_offset(u, phase, 3.0), 0.05),
        // biphasic spikes
        _ => {
            let d = beat_offset(u, phase, 4.0);
            bump(d + 0.015, 0.01) - bump(d - 0.015, 0.01)
        }
    }
}
