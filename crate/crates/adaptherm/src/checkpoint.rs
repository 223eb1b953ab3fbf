//! Model checkpoints.
//!
//! Trained networks are binary, little-endian:
//!
//! | bytes | field |
//! |------:|-------|
//! | 8 | magic `ADTHCK\0\0` |
//! | 4 | format version (u32, currently 1) |
//! | 1 | model kind: 0 piml-a, 1 piml-as, 2 ann |
//! | 1 | hidden activation: 0 relu, 1 tanh |
//! | 1 | output activation: 0 identity, 1 sigmoid |
//! | 1 | reserved, 0 |
//! | 8 | load scale (f64) |
//! | 16 | input dim, hidden layers, hidden width, output dim (u32 each) |
//!
//! followed, per layer, by the `out × in` row-major weights and the `out`
//! biases as f64.
//!
//! The fixed-nodalization models (`lf`, `hf`) have nothing to train; their
//! checkpoint is a JSON stub naming the node counts.

use std::fs;
use std::path::Path;

use adaptherm_core::mesh::Nodalization;
use adaptherm_core::nnet::{Activation, MlpParams, MlpSpec, OutputActivation};
use adaptherm_core::piml::{AnnModel, Architecture, PhysicsContext, PimlModel, SampleInput};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"ADTHCK\0\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    PimlA,
    PimlAs,
    Ann,
    Lf,
    Hf,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::PimlA => "piml-a",
            ModelKind::PimlAs => "piml-as",
            ModelKind::Ann => "ann",
            ModelKind::Lf => "lf",
            ModelKind::Hf => "hf",
        }
    }

    /// Node count per dimension of the fixed models.
    pub fn fixed_n(self) -> Option<usize> {
        match self {
            ModelKind::Lf => Some(3),
            ModelKind::Hf => Some(adaptherm_core::DENSE_N),
            _ => None,
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Any of the five models, ready to predict.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Piml(PimlModel),
    Ann(AnnModel),
    Fixed { kind: ModelKind, n: usize },
}

/// Dense temperatures plus the nodalization used, if the model has one.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub temperatures: Vec<f64>,
    pub nodalization: Option<Nodalization>,
}

impl Model {
    pub fn fixed(kind: ModelKind) -> Option<Self> {
        kind.fixed_n().map(|n| Model::Fixed { kind, n })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Piml(m) => match m.arch {
                Architecture::PimlA => ModelKind::PimlA,
                Architecture::PimlAs => ModelKind::PimlAs,
            },
            Model::Ann(_) => ModelKind::Ann,
            Model::Fixed { kind, .. } => *kind,
        }
    }

    pub fn predict(&self, ctx: &PhysicsContext, sample: SampleInput<'_>) -> Result<Prediction> {
        Ok(match self {
            Model::Piml(m) => {
                let (t, nod) = m.predict(ctx, sample)?;
                Prediction {
                    temperatures: t,
                    nodalization: Some(nod),
                }
            }
            Model::Ann(m) => Prediction {
                temperatures: m.predict(sample.loads)?,
                nodalization: None,
            },
            Model::Fixed { n, .. } => {
                let ns = vec![*n; ctx.surfaces()];
                let t = if *n == adaptherm_core::DENSE_N {
                    ctx.hf_forward(sample.loads, sample.initial)?
                } else {
                    ctx.fixed_forward(&ns, sample.loads, sample.initial)?
                };
                Prediction {
                    temperatures: t,
                    nodalization: Some(Nodalization::new(ns)),
                }
            }
        })
    }
}

/// JSON stub for the fixed models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedStub {
    pub schema_version: u32,
    pub model: ModelKind,
    pub nodalization: Vec<usize>,
    pub dt_s: f64,
    pub duration_s: f64,
    pub config_hash: String,
}

pub fn encode_net(kind: ModelKind, net: &MlpParams, load_scale: f64) -> Result<Vec<u8>> {
    let code = match kind {
        ModelKind::PimlA => 0u8,
        ModelKind::PimlAs => 1,
        ModelKind::Ann => 2,
        other => return Err(Error::Usage(format!("{other} has no network to save"))),
    };
    let s = &net.spec;
    let mut b = Vec::with_capacity(44 + 8 * s.parameter_count());
    b.extend_from_slice(MAGIC);
    b.extend_from_slice(&VERSION.to_le_bytes());
    b.push(code);
    b.push(match s.activation {
        Activation::Relu => 0,
        Activation::Tanh => 1,
    });
    b.push(match s.output_activation {
        OutputActivation::Identity => 0,
        OutputActivation::Sigmoid => 1,
    });
    b.push(0);
    b.extend_from_slice(&load_scale.to_le_bytes());
    for d in [s.input_dim, s.hidden_layers, s.hidden_width, s.output_dim] {
        b.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for (w, bias) in net.weights.iter().zip(&net.biases) {
        for x in w.iter().chain(bias.iter()) {
            b.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(b)
}

pub fn decode_net(b: &[u8]) -> Result<Model> {
    let bad = |m: &str| Error::Format(format!("checkpoint: {m}"));
    if b.len() < 44 || &b[..8] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(b[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(bad(&format!("version {version} unsupported")));
    }
    let activation = match b[13] {
        0 => Activation::Relu,
        1 => Activation::Tanh,
        x => return Err(bad(&format!("unknown activation {x}"))),
    };
    let output_activation = match b[14] {
        0 => OutputActivation::Identity,
        1 => OutputActivation::Sigmoid,
        x => return Err(bad(&format!("unknown output activation {x}"))),
    };
    let load_scale = f64::from_le_bytes(b[16..24].try_into().unwrap());
    let dim = |k: usize| u32::from_le_bytes(b[24 + 4 * k..28 + 4 * k].try_into().unwrap()) as usize;
    let spec = MlpSpec {
        input_dim: dim(0),
        hidden_layers: dim(1),
        hidden_width: dim(2),
        output_dim: dim(3),
        activation,
        output_activation,
    };
    spec.validate()?;
    let body = &b[40..];
    if body.len() != 8 * spec.parameter_count() {
        return Err(bad(&format!(
            "expected {} parameters, found {} bytes",
            spec.parameter_count(),
            body.len()
        )));
    }
    let mut vals = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let (mut weights, mut biases) = (Vec::new(), Vec::new());
    for w in spec.dims().windows(2) {
        weights.push(vals.by_ref().take(w[0] * w[1]).collect());
        biases.push(vals.by_ref().take(w[1]).collect());
    }
    let net = MlpParams::from_parts(spec, weights, biases)?;
    Ok(match b[12] {
        0 | 1 => {
            let arch = if b[12] == 0 {
                Architecture::PimlA
            } else {
                Architecture::PimlAs
            };
            let surfaces = if arch.has_shifts() {
                spec.output_dim / 2
            } else {
                spec.output_dim
            };
            let mut m = PimlModel::with_spec(arch, spec, surfaces, load_scale, 0)?;
            m.net = net;
            Model::Piml(m)
        }
        2 => Model::Ann(AnnModel { net, load_scale }),
        x => return Err(bad(&format!("unknown model kind {x}"))),
    })
}

pub fn save(model: &Model, path: &Path, ctx: &PhysicsContext, config_hash: &str) -> Result<()> {
    let bytes = match model {
        Model::Piml(m) => encode_net(model.kind(), &m.net, m.load_scale)?,
        Model::Ann(m) => encode_net(ModelKind::Ann, &m.net, m.load_scale)?,
        Model::Fixed { kind, n } => {
            let stub = FixedStub {
                schema_version: 1,
                model: *kind,
                nodalization: vec![*n; ctx.surfaces()],
                dt_s: ctx.settings.dt,
                duration_s: ctx.settings.duration,
                config_hash: config_hash.to_string(),
            };
            let mut s = serde_json::to_string_pretty(&stub).expect("stub serializes");
            s.push('\n');
            s.into_bytes()
        }
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Model> {
    let b = fs::read(path).map_err(|e| Error::io(path, e))?;
    if b.first() == Some(&b'{') {
        let stub: FixedStub = serde_json::from_slice(&b).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: format!("{}: {e}", path.display()),
        })?;
        let n = stub
            .model
            .fixed_n()
            .ok_or_else(|| Error::Format(format!("{}: {} needs a binary checkpoint", path.display(), stub.model)))?;
        if stub.nodalization.iter().any(|&x| x != n) {
            return Err(Error::Format(format!(
                "{}: {} uses n = {n} everywhere",
                path.display(),
                stub.model
            )));
        }
        return Ok(Model::Fixed { kind: stub.model, n });
    }
    decode_net(&b).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(out: usize) -> MlpSpec {
        MlpSpec {
            input_dim: 5,
            hidden_layers: 2,
            hidden_width: 4,
            output_dim: out,
            activation: Activation::Tanh,
            output_activation: OutputActivation::Identity,
        }
    }

    #[test]
    fn networks_round_trip_bit_exactly() {
        let mut m = PimlModel::with_spec(Architecture::PimlAs, spec(6), 3, 12.5, 9).unwrap();
        m.force_uniform(4);
        let model = Model::Piml(m);
        let back = decode_net(
            &encode_net(
                model.kind(),
                match &model {
                    Model::Piml(m) => &m.net,
                    _ => unreachable!(),
                },
                12.5,
            )
            .unwrap(),
        )
        .unwrap();
        assert_eq!(back, model);

        let ann = AnnModel::with_spec(spec(5), 3.0, 1).unwrap();
        let b = encode_net(ModelKind::Ann, &ann.net, 3.0).unwrap();
        assert_eq!(decode_net(&b).unwrap(), Model::Ann(ann));
        assert!(decode_net(&b[..b.len() - 8]).is_err());
    }

    #[test]
    fn fixed_models_have_no_network() {
        let ann = AnnModel::with_spec(spec(5), 3.0, 1).unwrap();
        assert!(encode_net(ModelKind::Lf, &ann.net, 1.0).is_err());
        assert_eq!(
            Model::fixed(ModelKind::Lf),
            Some(Model::Fixed {
                kind: ModelKind::Lf,
                n: 3
            })
        );
        assert_eq!(Model::fixed(ModelKind::Ann), None);
    }
}
