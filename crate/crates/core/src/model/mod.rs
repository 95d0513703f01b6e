//! Recognition network: per-step encoder/decoder, GRU, condense at the last
//! valid step, feature projection and classifier.

mod checkpoint;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::numerics::{NumericsError, Tape, Tensor, Var};
use crate::preprocess::ModelInput;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("input has {got} features, model expects {expected}")]
    InputWidth { expected: usize, got: usize },
    #[error("valid length {valid_len} outside 1..={max} for batch row {row}")]
    ValidLen {
        row: usize,
        valid_len: usize,
        max: usize,
    },
    #[error("empty batch")]
    EmptyBatch,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Parameter groups with their own learning rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Module {
    /// Sequence condenser: encoder, decoder and GRU.
    Sc,
    /// Feature projection.
    Fp,
    /// Classifier.
    Cls,
}

impl Module {
    pub const ALL: [Module; 3] = [Module::Sc, Module::Fp, Module::Cls];

    pub fn tag(self) -> u8 {
        match self {
            Module::Sc => 0,
            Module::Fp => 1,
            Module::Cls => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.get(tag as usize).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub input: usize,
    pub encoder: usize,
    pub decoder: usize,
    pub hidden: usize,
    pub feature: usize,
    pub classes: usize,
}

impl ModelDims {
    pub fn new(input: usize) -> Self {
        Self {
            input,
            encoder: 128,
            decoder: 64,
            hidden: 64,
            feature: 64,
            classes: crate::channel_sim::N_CLASSES,
        }
    }

    fn all(&self) -> [usize; 6] {
        [self.input, self.encoder, self.decoder, self.hidden, self.feature, self.classes]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: &'static str,
    pub module: Module,
    pub value: Tensor,
}

pub const ENC_W: usize = 0;
pub const ENC_B: usize = 1;
pub const DEC_W: usize = 2;
pub const DEC_B: usize = 3;
pub const GRU_W_IH: usize = 4;
pub const GRU_W_HH: usize = 5;
pub const GRU_B_IH: usize = 6;
pub const GRU_B_HH: usize = 7;
pub const FP_W: usize = 8;
pub const FP_B: usize = 9;
pub const CLS_W: usize = 10;
pub const CLS_B: usize = 11;

fn layout(d: &ModelDims) -> [(&'static str, Module, Vec<usize>); 12] {
    let h3 = 3 * d.hidden;
    [
        ("sc.encoder.weight", Module::Sc, vec![d.input, d.encoder]),
        ("sc.encoder.bias", Module::Sc, vec![d.encoder]),
        ("sc.decoder.weight", Module::Sc, vec![d.encoder, d.decoder]),
        ("sc.decoder.bias", Module::Sc, vec![d.decoder]),
        ("sc.gru.weight_ih", Module::Sc, vec![d.decoder, h3]),
        ("sc.gru.weight_hh", Module::Sc, vec![d.hidden, h3]),
        ("sc.gru.bias_ih", Module::Sc, vec![h3]),
        ("sc.gru.bias_hh", Module::Sc, vec![h3]),
        ("fp.weight", Module::Fp, vec![d.hidden, d.feature]),
        ("fp.bias", Module::Fp, vec![d.feature]),
        ("cls.weight", Module::Cls, vec![d.feature, d.classes]),
        ("cls.bias", Module::Cls, vec![d.classes]),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarModel {
    pub dims: ModelDims,
    pub params: Vec<Param>,
}

/// Network outputs for a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOut {
    /// `[B x feature]`.
    pub features: Tensor,
    /// `[B x classes]`.
    pub logits: Tensor,
}

/// Tape handles of a model's parameters.
#[derive(Debug, Clone)]
pub struct Bound {
    pub vars: Vec<Var>,
}

/// Tape handles of a forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardVars {
    pub features: Var,
    pub logits: Var,
}

impl HarModel {
    /// Weights and non-recurrent biases uniform in `+-1/sqrt(fan_in)`; GRU
    /// biases zero.
    pub fn init<R: Rng + ?Sized>(dims: ModelDims, rng: &mut R) -> Self {
        let params = layout(&dims)
            .into_iter()
            .enumerate()
            .map(|(i, (name, module, shape))| {
                let fan_in = match i {
                    ENC_W | ENC_B => dims.input,
                    DEC_W | DEC_B => dims.encoder,
                    GRU_W_IH => dims.decoder,
                    GRU_W_HH => dims.hidden,
                    FP_W | FP_B => dims.hidden,
                    _ => dims.feature,
                };
                let value = if i == GRU_B_IH || i == GRU_B_HH {
                    Tensor::zeros(&shape)
                } else {
                    let k = 1.0 / (fan_in as f64).sqrt();
                    Tensor::from_fn(&shape, |_| rng.gen_range(-k..k))
                };
                Param { name, module, value }
            })
            .collect();
        Self { dims, params }
    }

    pub fn n_parameters(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Stamp identifying these exact parameter values.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Sha256::new();
        for d in self.dims.all() {
            h.update((d as u64).to_le_bytes());
        }
        for p in &self.params {
            for v in p.value.data() {
                h.update(v.to_le_bytes());
            }
        }
        u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
    }

    /// Registers parameters on `tape`; those of modules for which
    /// `trainable` is false are bound as constants.
    pub fn bind(&self, tape: &mut Tape, trainable: impl Fn(Module) -> bool) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|p| {
                if trainable(p.module) {
                    tape.param(p.value.clone())
                } else {
                    tape.constant(p.value.clone())
                }
            })
            .collect();
        Bound { vars }
    }

    /// Records the forward pass of `batch`. The recurrence runs for the
    /// longest valid length in the batch; later rows are padding and,
    /// the GRU being causal, cannot reach any condensed step.
    pub fn forward_tape(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        batch: &[&ModelInput],
    ) -> Result<ForwardVars, ModelError> {
        let b = batch.len();
        if b == 0 {
            return Err(ModelError::EmptyBatch);
        }
        let d = &self.dims;
        let s = d.input;
        for (row, x) in batch.iter().enumerate() {
            if x.n_features != s {
                return Err(ModelError::InputWidth {
                    expected: s,
                    got: x.n_features,
                });
            }
            if x.valid_len == 0 || x.valid_len > x.pad_len {
                return Err(ModelError::ValidLen {
                    row,
                    valid_len: x.valid_len,
                    max: x.pad_len,
                });
            }
        }
        let steps = batch.iter().map(|x| x.valid_len).max().expect("non-empty");
        // Time-major rows: step t of sample j sits at row t * b + j.
        let mut x = Vec::with_capacity(steps * b * s);
        for t in 0..steps {
            for inp in batch {
                x.extend_from_slice(inp.row(t));
            }
        }
        let v = &bound.vars;
        let x = tape.constant(Tensor::new(vec![steps * b, s], x)?);
        let e = tape.matmul(x, v[ENC_W])?;
        let e = tape.add(e, v[ENC_B])?;
        let e = tape.relu(e);
        let dd = tape.matmul(e, v[DEC_W])?;
        let dd = tape.add(dd, v[DEC_B])?;
        let dd = tape.relu(dd);
        let xp = tape.matmul(dd, v[GRU_W_IH])?;
        let xp = tape.add(xp, v[GRU_B_IH])?;

        let hsz = d.hidden;
        let mut h = tape.constant(Tensor::zeros(&[b, hsz]));
        let mut outs = Vec::with_capacity(steps);
        for t in 0..steps {
            let xt = tape.narrow(xp, 0, t * b, b)?;
            let hp = tape.matmul(h, v[GRU_W_HH])?;
            let hp = tape.add(hp, v[GRU_B_HH])?;
            let (xr, xz, xn) = (
                tape.narrow(xt, 1, 0, hsz)?,
                tape.narrow(xt, 1, hsz, hsz)?,
                tape.narrow(xt, 1, 2 * hsz, hsz)?,
            );
            let (hr, hz, hn) = (
                tape.narrow(hp, 1, 0, hsz)?,
                tape.narrow(hp, 1, hsz, hsz)?,
                tape.narrow(hp, 1, 2 * hsz, hsz)?,
            );
            let r = tape.add(xr, hr)?;
            let r = tape.sigmoid(r);
            let z = tape.add(xz, hz)?;
            let z = tape.sigmoid(z);
            let rn = tape.mul(r, hn)?;
            let n = tape.add(xn, rn)?;
            let n = tape.tanh(n);
            // h' = (1 - z) * n + z * h
            let diff = tape.sub(h, n)?;
            let zd = tape.mul(z, diff)?;
            h = tape.add(n, zd)?;
            outs.push(tape.reshape(h, &[b, 1, hsz])?);
        }
        let gru_out = tape.concat(&outs, 1)?;
        let valid: Vec<usize> = batch.iter().map(|x| x.valid_len).collect();
        let c = condense(tape, gru_out, &valid)?;

        let f = tape.matmul(c, v[FP_W])?;
        let f = tape.add(f, v[FP_B])?;
        let features = tape.tanh(f);
        let logits = self.classify_tape(tape, bound, features)?;
        Ok(ForwardVars { features, logits })
    }

    /// Classifier applied to features already on the tape.
    pub fn classify_tape(&self, tape: &mut Tape, bound: &Bound, features: Var) -> Result<Var, ModelError> {
        let l = tape.matmul(features, bound.vars[CLS_W])?;
        Ok(tape.add(l, bound.vars[CLS_B])?)
    }

    pub fn forward(&self, batch: &[&ModelInput]) -> Result<ForwardOut, ModelError> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, |_| false);
        let out = self.forward_tape(&mut tape, &bound, batch)?;
        Ok(ForwardOut {
            features: tape.value(out.features).clone(),
            logits: tape.value(out.logits).clone(),
        })
    }

    /// Forward over any number of inputs in chunks of `chunk`, preserving
    /// order.
    pub fn forward_all(&self, inputs: &[&ModelInput], chunk: usize) -> Result<ForwardOut, ModelError> {
        use rayon::prelude::*;
        if inputs.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let parts: Vec<ForwardOut> = inputs
            .par_chunks(chunk.max(1))
            .map(|c| self.forward(c))
            .collect::<Result<_, _>>()?;
        let n = inputs.len();
        let (fd, cd) = (self.dims.feature, self.dims.classes);
        let mut features = Vec::with_capacity(n * fd);
        let mut logits = Vec::with_capacity(n * cd);
        for p in parts {
            features.extend_from_slice(p.features.data());
            logits.extend_from_slice(p.logits.data());
        }
        Ok(ForwardOut {
            features: Tensor::new(vec![n, fd], features)?,
            logits: Tensor::new(vec![n, cd], logits)?,
        })
    }

    /// Classifier on raw feature rows `[B x feature]`.
    pub fn classify(&self, features: &Tensor) -> Result<Tensor, ModelError> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, |_| false);
        let f = tape.constant(features.clone());
        let l = self.classify_tape(&mut tape, &bound, f)?;
        Ok(tape.value(l).clone())
    }
}

/// Picks `gru_out[b, valid_len[b] - 1, :]` for every batch row.
pub fn condense(tape: &mut Tape, gru_out: Var, valid_len: &[usize]) -> Result<Var, ModelError> {
    let shape = tape.shape(gru_out).to_vec();
    if shape.len() != 3 || shape[0] != valid_len.len() {
        return Err(NumericsError::Shape {
            op: "condense",
            lhs: shape,
            rhs: vec![valid_len.len()],
        }
        .into());
    }
    let (b, t, h) = (shape[0], shape[1], shape[2]);
    let mut idx = Vec::with_capacity(b);
    for (row, &v) in valid_len.iter().enumerate() {
        if v == 0 || v > t {
            return Err(ModelError::ValidLen {
                row,
                valid_len: v,
                max: t,
            });
        }
        idx.push(row * t + v - 1);
    }
    let flat = tape.reshape(gru_out, &[b * t, h])?;
    Ok(tape.gather_rows(flat, &idx)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::PAD_VALUE;

    pub(crate) fn random_input(rng: &mut crate::rng::Rng, s: usize, valid: usize, pad: usize) -> ModelInput {
        let mut data: Vec<f64> = (0..valid * s).map(|_| rng.gen_range(-1.0..1.0)).collect();
        data.resize(pad * s, PAD_VALUE);
        ModelInput {
            data,
            pad_len: pad,
            n_features: s,
            valid_len: valid,
            label: rng.gen_range(0..10),
            subject: 0,
            environment: 0,
            sample_id: 0,
        }
    }

    fn small_dims() -> ModelDims {
        ModelDims {
            input: 7,
            encoder: 12,
            decoder: 6,
            hidden: 5,
            feature: 4,
            classes: 10,
        }
    }

    #[test]
    fn init_is_deterministic_and_tagged() {
        let d = ModelDims::new(368);
        let a = HarModel::init(d, &mut crate::rng::rng(3));
        let b = HarModel::init(d, &mut crate::rng::rng(3));
        assert_eq!(a, b);
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), HarModel::init(d, &mut crate::rng::rng(4)).fingerprint());
        let count = |m: Module| a.params.iter().filter(|p| p.module == m).map(|p| p.value.len()).sum::<usize>();
        assert_eq!(count(Module::Sc) + count(Module::Fp) + count(Module::Cls), a.n_parameters());
        assert_eq!(count(Module::Cls), 64 * 10 + 10);
        assert!(a.params[GRU_B_IH].value.data().iter().all(|&v| v == 0.0));
        let k = 1.0 / (368f64).sqrt();
        assert!(a.params[ENC_W].value.data().iter().all(|v| v.abs() <= k));
    }

    #[test]
    fn condense_matches_loop() {
        let mut rng = crate::rng::rng(9);
        let (b, t, h) = (4, 6, 3);
        let data: Vec<f64> = (0..b * t * h).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let valid = [6, 1, 3, 4];
        let mut tape = Tape::new();
        let g = tape.param(Tensor::new(vec![b, t, h], data.clone()).unwrap());
        let c = condense(&mut tape, g, &valid).unwrap();
        for (row, &v) in valid.iter().enumerate() {
            for k in 0..h {
                assert_eq!(tape.value(c).data()[row * h + k], data[(row * t + v - 1) * h + k]);
            }
        }
        let s = tape.sum(c, None).unwrap();
        let grads = tape.backward(s).unwrap().tensor(g);
        let hot: f64 = grads.data().iter().sum();
        assert_eq!(hot, (b * h) as f64);
        assert!(condense(&mut tape, g, &[0, 1, 1, 1]).is_err());
        assert!(condense(&mut tape, g, &[7, 1, 1, 1]).is_err());
    }

    #[test]
    fn identical_rows_and_permutation() {
        let mut rng = crate::rng::rng(1);
        let d = small_dims();
        let m = HarModel::init(d, &mut rng);
        let a = random_input(&mut rng, 7, 5, 9);
        let b = random_input(&mut rng, 7, 3, 9);
        let out = m.forward(&[&a, &a, &b]).unwrap();
        let f = out.features.data();
        assert_eq!(&f[0..4], &f[4..8]);
        let swapped = m.forward(&[&b, &a, &a]).unwrap();
        for k in 0..4 {
            assert!((swapped.features.data()[k] - f[8 + k]).abs() < 1e-12);
        }
    }

    #[test]
    fn padding_extension_invariance() {
        let mut rng = crate::rng::rng(2);
        let m = HarModel::init(small_dims(), &mut rng);
        for _ in 0..10 {
            let v = rng.gen_range(1..8);
            let x = random_input(&mut rng, 7, v, 8);
            let y = x.repad(20).unwrap();
            let fx = m.forward(&[&x]).unwrap();
            let fy = m.forward(&[&y]).unwrap();
            for (a, b) in fx.features.data().iter().zip(fy.features.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn init_logit_scale() {
        let d = ModelDims::new(40);
        let mut rng = crate::rng::rng(11);
        let inputs: Vec<_> = (0..8).map(|_| random_input(&mut rng, 40, 10, 12)).collect();
        let refs: Vec<_> = inputs.iter().collect();
        for seed in 0..20 {
            let m = HarModel::init(d, &mut crate::rng::rng(seed));
            let l = m.forward(&refs).unwrap().logits;
            let mean = l.data().iter().sum::<f64>() / l.len() as f64;
            let var = l.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / l.len() as f64;
            assert!(var.sqrt() < 1.0);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut rng = crate::rng::rng(2);
        let m = HarModel::init(small_dims(), &mut rng);
        let x = random_input(&mut rng, 6, 2, 3);
        assert!(matches!(m.forward(&[&x]), Err(ModelError::InputWidth { .. })));
        assert!(matches!(m.forward(&[]), Err(ModelError::EmptyBatch)));
    }
}
