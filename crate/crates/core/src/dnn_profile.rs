//! Per-layer compute and size tables, and what a cut at a given layer costs
//! each side.
//!
//! Profile file format (plain text, `#` starts a comment line):
//!
//! ```text
//! batch_size: 64
//! local_iterations: 5
//! index flops_fwd_bwd[FLOP/sample] activation[bit/sample] params[bit]
//! 1 2654208 131072 57344
//! 2 ...
//! ```
//!
//! The two directives must precede the header; records follow it, one per
//! layer, with contiguous indices starting at 1.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const HEADER: [&str; 4] = [
    "index",
    "flops_fwd_bwd[FLOP/sample]",
    "activation[bit/sample]",
    "params[bit]",
];

const ALEXNET_CIFAR: &str = include_str!("../data/alexnet_cifar.profile");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub index: usize,
    /// Forward plus backward FLOPs per sample.
    pub flops_fwd_bwd: f64,
    /// Bits per sample of this layer's output.
    pub activation_bits: f64,
    /// Bits of this layer's parameters.
    pub param_bits: f64,
}

/// How often split-layer features cross the air link per round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeatureUpload {
    /// Once per local iteration (E times per round).
    #[default]
    PerIteration,
    Once,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DnnProfile {
    pub layers: Vec<LayerEntry>,
    pub batch_size: usize,
    pub local_iterations: usize,
    pub feature_upload: FeatureUpload,
    /// Multiplier on the uploaded feature volume; 2.0 accounts for the
    /// split-layer gradients returned on the backward pass.
    pub gradient_multiplier: f64,
}

/// What a cut after layer ℓ costs for one device and one round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutCosts {
    /// Device-side FLOPs, layers 1..=ℓ.
    pub device_flops: f64,
    /// Server-side FLOPs, layers ℓ+1..=L.
    pub server_flops: f64,
    /// Bits exchanged over the air link for the split-layer features.
    pub feature_bits: f64,
    /// Bits of the UAV-side sub-model uploaded to the satellite.
    pub model_bits: f64,
}

impl DnnProfile {
    pub fn new(
        layers: Vec<LayerEntry>,
        batch_size: usize,
        local_iterations: usize,
    ) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::Parameter("profile needs at least two layers".into()));
        }
        if batch_size == 0 || local_iterations == 0 {
            return Err(Error::Parameter(
                "batch_size and local_iterations must be at least 1".into(),
            ));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.index != i + 1 {
                return Err(Error::Parameter(format!(
                    "layer indices must be contiguous from 1; position {} has index {}",
                    i + 1,
                    l.index
                )));
            }
            let fields = [l.flops_fwd_bwd, l.activation_bits, l.param_bits];
            if fields.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Parameter(format!(
                    "layer {} has a negative field",
                    l.index
                )));
            }
        }
        Ok(Self {
            layers,
            batch_size,
            local_iterations,
            feature_upload: FeatureUpload::PerIteration,
            gradient_multiplier: 2.0,
        })
    }

    /// The bundled AlexNet-on-CIFAR table.
    pub fn alexnet_cifar() -> Self {
        Self::parse(ALEXNET_CIFAR, "alexnet_cifar.profile").expect("bundled profile parses")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            source_name: source_name.to_string(),
            line,
            message,
        };
        let mut batch = None;
        let mut iters = None;
        let mut header_seen = false;
        let mut layers = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !header_seen {
                if let Some((key, value)) = line.split_once(':') {
                    let v: usize = value.trim().parse().map_err(|_| {
                        err(
                            line_no,
                            format!("`{}` is not a positive integer", value.trim()),
                        )
                    })?;
                    match key.trim() {
                        "batch_size" => batch = Some(v),
                        "local_iterations" => iters = Some(v),
                        other => return Err(err(line_no, format!("unknown directive `{other}`"))),
                    }
                    continue;
                }
                let cols: Vec<&str> = line.split_whitespace().collect();
                if cols != HEADER {
                    return Err(err(
                        line_no,
                        format!("expected header `{}`", HEADER.join(" ")),
                    ));
                }
                header_seen = true;
                continue;
            }
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != 4 {
                return Err(err(
                    line_no,
                    format!("expected 4 columns, found {}", cols.len()),
                ));
            }
            let index: usize = cols[0]
                .parse()
                .map_err(|_| err(line_no, format!("bad layer index `{}`", cols[0])))?;
            if index != layers.len() + 1 {
                return Err(err(
                    line_no,
                    format!(
                        "layer index {index} out of sequence, expected {}",
                        layers.len() + 1
                    ),
                ));
            }
            let mut vals = [0.0; 3];
            for (slot, col) in vals.iter_mut().zip(&cols[1..]) {
                let v: f64 = col
                    .parse()
                    .map_err(|_| err(line_no, format!("bad number `{col}`")))?;
                if !(v.is_finite() && v >= 0.0) {
                    return Err(err(
                        line_no,
                        format!("value `{col}` must be finite and >= 0"),
                    ));
                }
                *slot = v;
            }
            layers.push(LayerEntry {
                index,
                flops_fwd_bwd: vals[0],
                activation_bits: vals[1],
                param_bits: vals[2],
            });
        }
        let end = text.lines().count().max(1);
        if !header_seen {
            return Err(err(end, "missing header line".into()));
        }
        let batch = batch.ok_or_else(|| err(end, "missing `batch_size` directive".into()))?;
        let iters = iters.ok_or_else(|| err(end, "missing `local_iterations` directive".into()))?;
        Self::new(layers, batch, iters).map_err(|e| err(end, e.to_string()))
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "batch_size: {}\nlocal_iterations: {}\n{}\n",
            self.batch_size,
            self.local_iterations,
            HEADER.join(" ")
        );
        for l in &self.layers {
            out.push_str(&format!(
                "{} {} {} {}\n",
                l.index, l.flops_fwd_bwd, l.activation_bits, l.param_bits
            ));
        }
        out
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    /// Cut after layer `split` (1-based).
    pub fn cut(&self, split: usize) -> Result<CutCosts> {
        let l = self.n_layers();
        if split == 0 || split > l {
            return Err(Error::Parameter(format!(
                "split layer {split} outside 1..={l}"
            )));
        }
        let samples = (self.batch_size * self.local_iterations) as f64;
        let (head, tail) = self.layers.split_at(split);
        let uploads = match self.feature_upload {
            FeatureUpload::PerIteration => self.local_iterations as f64,
            FeatureUpload::Once => 1.0,
        };
        Ok(CutCosts {
            device_flops: samples * head.iter().map(|x| x.flops_fwd_bwd).sum::<f64>(),
            server_flops: samples * tail.iter().map(|x| x.flops_fwd_bwd).sum::<f64>(),
            feature_bits: self.gradient_multiplier
                * uploads
                * self.batch_size as f64
                * head[split - 1].activation_bits,
            model_bits: tail.iter().map(|x| x.param_bits).sum(),
        })
    }

    pub fn total_flops_per_round(&self) -> f64 {
        (self.batch_size * self.local_iterations) as f64
            * self.layers.iter().map(|x| x.flops_fwd_bwd).sum::<f64>()
    }
}
