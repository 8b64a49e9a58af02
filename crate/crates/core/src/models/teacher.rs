use alloc::format;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;

use super::config::TeacherConfig;
use super::layers::{self, EncoderRefs};
use crate::data::Batch;
use crate::error::{bail, Result};
use crate::nn::init::{constant, glorot, uniform};
use crate::nn::{param_count, Graph, ParamGroup, ParamRef, Tensor, Var};
use crate::tokenizer::EncodedExample;

/// Graph nodes of a teacher pass: token logits and, when requested, the
/// normalised output of one layer.
#[derive(Debug, Clone, Copy)]
pub struct TeacherOutputs {
    pub logits: Var,
    pub reps: Option<Var>,
}

/// Post-norm transformer encoder with learned positions and a token
/// classifier. Groups: `embeddings`, `layer1..layerL`, `classifier`.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherModel {
    pub config: TeacherConfig,
    pub params: Vec<ParamGroup>,
}

impl TeacherModel {
    pub fn new(config: TeacherConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let d = config.width;
        let mut params = Vec::with_capacity(config.layers + 2);
        params.push(ParamGroup::new(
            "embeddings",
            alloc::vec![
                uniform(rng, &[config.vocab_size, d], 1.0),
                constant(&[config.max_len, d], 0.0),
                constant(&[d], 1.0),
                constant(&[d], 0.0),
            ],
        ));
        for l in 1..=config.layers {
            params.push(ParamGroup::new(format!("layer{l}"), layers::init_encoder(rng, d, config.ff_width)));
        }
        params.push(ParamGroup::new("classifier", alloc::vec![glorot(rng, d, config.classes), constant(&[config.classes], 0.0)]));
        Ok(Self { config, params })
    }

    pub fn param_count(&self) -> usize {
        param_count(&self.params)
    }

    /// Token embedding table, `V×D`.
    pub fn embeddings(&self) -> &Tensor {
        &self.params[0].tensors[0]
    }

    fn check_layer(&self, layer: usize) -> Result<()> {
        if layer > self.config.layers {
            bail!(Config, "teacher has {} layers, layer {} requested", self.config.layers, layer);
        }
        Ok(())
    }

    /// Builds the forward pass; `rep_layer` 0 is the embedding output and `l`
    /// the output of layer `l`. `rng` enables dropout.
    pub fn forward(&self, g: &mut Graph, batch: &Batch, rep_layer: Option<usize>, mut rng: Option<&mut ChaCha8Rng>) -> Result<TeacherOutputs> {
        if let Some(l) = rep_layer {
            self.check_layer(l)?;
        }
        if batch.steps > self.config.max_len {
            bail!(Shape, "sequence of {} pieces exceeds teacher max_len {}", batch.steps, self.config.max_len);
        }
        let r = |group: usize, tensor: usize| ParamRef { group, tensor };
        let tok = g.param(r(0, 0));
        let pos = g.param(r(0, 1));
        let x = g.gather(tok, batch.ids.clone());
        let x = g.add_positional(x, pos, batch.size);
        let (ln_g, ln_b) = (g.param(r(0, 2)), g.param(r(0, 3)));
        let mut x = g.layer_norm(x, ln_g, ln_b);
        if let Some(rng) = rng.as_deref_mut() {
            x = g.dropout(x, self.config.dropout, rng);
        }
        let mut reps = (rep_layer == Some(0)).then_some(x);
        let slopes = if self.config.local_bias { layers::distance_slopes(self.config.heads) } else { Vec::new() };
        for l in 1..=self.config.layers {
            x = layers::encoder_layer(g, x, EncoderRefs { group: l, first: 0 }, batch.size, self.config.heads, &batch.mask, &slopes);
            if rep_layer == Some(l) {
                reps = Some(x);
            }
        }
        if let Some(rng) = rng.as_deref_mut() {
            x = g.dropout(x, self.config.dropout, rng);
        }
        let cls = self.config.layers + 1;
        let (wc, bc) = (g.param(r(cls, 0)), g.param(r(cls, 1)));
        let logits = g.linear(x, wc, bc);
        Ok(TeacherOutputs { logits, reps })
    }

    /// Argmax tag id per batch row.
    pub fn predict(&self, batch: &Batch) -> Result<Vec<usize>> {
        let mut g = Graph::inference(&self.params);
        let out = self.forward(&mut g, batch, None, None)?;
        Ok(super::student::argmax_rows(&g, out.logits))
    }
}

/// Raw logits `K×C` and layer-`layer` representations `K×D` for one example,
/// one row per position of the padded example.
pub fn teacher_forward(example: &EncodedExample, teacher: &TeacherModel, layer: usize) -> Result<(Tensor, Tensor)> {
    teacher.check_layer(layer)?;
    let batch = Batch::from_examples(&[example]).pad_to(example.max_len());
    let mut g = Graph::inference(&teacher.params);
    let out = teacher.forward(&mut g, &batch, Some(layer), None)?;
    let reps = out.reps.expect("layer checked");
    let (n, c) = g.dims(out.logits);
    let (_, d) = g.dims(reps);
    Ok((Tensor::matrix(n, c, g.value(out.logits).to_vec())?, Tensor::matrix(n, d, g.value(reps).to_vec())?))
}
