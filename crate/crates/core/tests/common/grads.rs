use nfsense_core::model::{Bound, HarModel, ModelError, Module};
use nfsense_core::numerics::{grad_check, NumericsError, Tape, Tensor, Var};
use nfsense_core::preprocess::ModelInput;
use nfsense_core::rng::Rng;
use nfsense_core::train::{ft_loss, pt_loss, LossWeights, TrainError};
use rand::Rng as _;

pub type Res = Result<Var, NumericsError>;

pub const OP_TOL: f64 = 1e-6;
pub const LOSS_TOL: f64 = 1e-4;
pub const LOSS_POINTS: u64 = 20;

pub fn rand_tensor(rng: &mut Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(lo..hi))
}

/// Contracts `y` with fixed random weights so every output coordinate
/// contributes to the scalar.
fn contract(t: &mut Tape, y: Var, seed: u64) -> Res {
    let mut rng = nfsense_core::rng::rng(seed);
    let shape = t.shape(y).to_vec();
    let w = t.constant(rand_tensor(&mut rng, &shape, -1.0, 1.0));
    let p = t.mul(y, w)?;
    t.sum(p, None)
}

pub struct OpCase {
    pub name: &'static str,
    pub shape: Vec<usize>,
    pub lo: f64,
    pub hi: f64,
    pub f: Box<dyn Fn(&mut Tape, Var) -> Res>,
}

fn case(name: &'static str, shape: &[usize], lo: f64, hi: f64, f: impl Fn(&mut Tape, Var) -> Res + 'static) -> OpCase {
    OpCase {
        name,
        shape: shape.to_vec(),
        lo,
        hi,
        f: Box::new(f),
    }
}

/// Worst relative error over five random points.
pub fn op_error(c: &OpCase) -> f64 {
    (0..5u64)
        .map(|trial| {
            let mut rng = nfsense_core::rng::rng(trial + 100);
            let point = rand_tensor(&mut rng, &c.shape, c.lo, c.hi);
            grad_check(
                |t, x| {
                    let y = (c.f)(t, x)?;
                    contract(t, y, trial)
                },
                &point,
                1e-5,
            )
            .unwrap()
        })
        .fold(0.0, f64::max)
}

/// Every differentiable op on the tape, including both sides of the
/// binary ones and broadcasting.
pub fn op_cases() -> Vec<OpCase> {
    let mut rng = nfsense_core::rng::rng(7);
    let other = rand_tensor(&mut rng, &[3, 4], -1.0, 1.0);
    let row = rand_tensor(&mut rng, &[4], -1.0, 1.0);
    let rhs = rand_tensor(&mut rng, &[4, 5], -1.0, 1.0);
    let lhs = rand_tensor(&mut rng, &[2, 3], -1.0, 1.0);
    let (o1, o2, o3, o4, o5) = (other.clone(), other.clone(), other.clone(), other.clone(), other);
    vec![
        case("sigmoid", &[3, 4], -3.0, 3.0, |t, x| Ok(t.sigmoid(x))),
        case("tanh", &[3, 4], -2.0, 2.0, |t, x| Ok(t.tanh(x))),
        case("relu", &[3, 4], 0.1, 2.0, |t, x| Ok(t.relu(x))),
        case("relu negative side", &[3, 4], -2.0, -0.1, |t, x| {
            let y = t.relu(x);
            let z = t.add_scalar(x, 0.0);
            t.add(y, z)
        }),
        case("log", &[3, 4], 0.2, 3.0, |t, x| Ok(t.log(x))),
        case("square", &[3, 4], -2.0, 2.0, |t, x| Ok(t.square(x))),
        case("sqrt", &[3, 4], 0.2, 3.0, |t, x| Ok(t.sqrt(x))),
        case("scale", &[3, 4], -2.0, 2.0, |t, x| Ok(t.scale(x, -1.7))),
        case("add_scalar", &[3, 4], -2.0, 2.0, |t, x| {
            let y = t.add_scalar(x, 0.3);
            t.mul(y, y)
        }),
        case("add", &[3, 4], -2.0, 2.0, move |t, x| {
            let c = t.constant(o1.clone());
            t.add(x, c)
        }),
        case("sub", &[3, 4], -2.0, 2.0, move |t, x| {
            let c = t.constant(o2.clone());
            t.sub(c, x)
        }),
        case("mul", &[3, 4], -2.0, 2.0, move |t, x| {
            let c = t.constant(o3.clone());
            t.mul(x, c)
        }),
        case("broadcast lhs", &[3, 4], -2.0, 2.0, move |t, x| {
            let c = t.constant(row.clone());
            t.mul(x, c)
        }),
        case("broadcast rhs", &[4], -2.0, 2.0, move |t, x| {
            let c = t.constant(o4.clone());
            let a = t.add(c, x)?;
            let m = t.mul(c, x)?;
            t.sub(a, m)
        }),
        case("self product", &[2, 3], -2.0, 2.0, |t, x| t.mul(x, x)),
        case("matmul lhs", &[3, 4], -1.0, 1.0, move |t, x| {
            let c = t.constant(rhs.clone());
            t.matmul(x, c)
        }),
        case("matmul rhs", &[3, 4], -1.0, 1.0, move |t, x| {
            let c = t.constant(lhs.clone());
            t.matmul(c, x)
        }),
        case("matmul self", &[3, 3], -1.0, 1.0, |t, x| t.matmul(x, x)),
        case("transpose", &[3, 4], -1.0, 1.0, |t, x| t.transpose(x)),
        case("reshape", &[3, 4], -1.0, 1.0, |t, x| t.reshape(x, &[2, 6])),
        case("narrow rows", &[4, 3], -1.0, 1.0, |t, x| t.narrow(x, 0, 1, 2)),
        case("narrow cols", &[4, 3], -1.0, 1.0, |t, x| t.narrow(x, 1, 1, 2)),
        case("gather rows", &[4, 3], -1.0, 1.0, |t, x| t.gather_rows(x, &[3, 0, 3, 1])),
        case("concat rows", &[2, 3], -1.0, 1.0, |t, x| {
            let s = t.square(x);
            t.concat(&[x, s], 0)
        }),
        case("concat cols", &[2, 3], -1.0, 1.0, |t, x| {
            let s = t.square(x);
            t.concat(&[s, x], 1)
        }),
        case("sum all", &[3, 4], -1.0, 1.0, |t, x| {
            let s = t.sum(x, None)?;
            Ok(t.square(s))
        }),
        case("sum axis 0", &[3, 4], -1.0, 1.0, |t, x| t.sum(x, Some(0))),
        case("sum axis 1", &[3, 4], -1.0, 1.0, |t, x| t.sum(x, Some(1))),
        case("mean all", &[3, 4], -1.0, 1.0, |t, x| {
            let s = t.mean(x, None)?;
            Ok(t.square(s))
        }),
        case("mean axis 0", &[3, 4], -1.0, 1.0, |t, x| t.mean(x, Some(0))),
        case("mean axis 1", &[3, 4], -1.0, 1.0, |t, x| t.mean(x, Some(1))),
        case("softmax", &[3, 4], -2.0, 2.0, |t, x| Ok(t.softmax(x))),
        case("log_softmax", &[3, 4], -2.0, 2.0, |t, x| Ok(t.log_softmax(x))),
        case("l2_norm", &[3, 4], 0.2, 1.0, |t, x| Ok(t.l2_norm(x))),
        case("normalize", &[3, 4], -1.0, 1.0, |t, x| Ok(t.normalize(x))),
        case("cosine_similarity", &[3, 4], -1.0, 1.0, move |t, x| {
            let c = t.constant(o5.clone());
            t.cosine_similarity(x, c)
        }),
        case("cosine_similarity self-pair", &[3, 4], -1.0, 1.0, |t, x| {
            let s = t.scale(x, 2.0);
            let y = t.tanh(x);
            let a = t.cosine_similarity(s, y)?;
            Ok(t.square(a))
        }),
    ]
}

/// Binds the parameters of `model` as slices of one flat vector so a whole
/// loss can be checked against central differences.
pub fn bind_flat(t: &mut Tape, model: &HarModel, flat: Var, trainable: impl Fn(Module) -> bool) -> Result<Bound, NumericsError> {
    let mut off = 0;
    let mut vars = Vec::with_capacity(model.params.len());
    for p in &model.params {
        if trainable(p.module) {
            let n = p.value.len();
            let slice = t.narrow(flat, 0, off, n)?;
            vars.push(t.reshape(slice, p.value.shape())?);
            off += n;
        } else {
            vars.push(t.constant(p.value.clone()));
        }
    }
    Ok(Bound { vars })
}

pub fn flat_params(model: &HarModel, trainable: impl Fn(Module) -> bool) -> Tensor {
    Tensor::from_vec(
        model
            .params
            .iter()
            .filter(|p| trainable(p.module))
            .flat_map(|p| p.value.data().iter().copied())
            .collect(),
    )
}

fn weights() -> LossWeights {
    LossWeights {
        l11: 0.05,
        ..LossWeights::default()
    }
}

fn numerics_of_model(e: ModelError) -> NumericsError {
    match e {
        ModelError::Numerics(n) => n,
        other => panic!("{other}"),
    }
}

/// Relative error of the whole pre-training loss gradient at one random
/// model and batch.
pub fn pt_loss_error(point: u64) -> f64 {
    let s = 5;
    let model = super::small_model(point, s);
    let mut rng = nfsense_core::rng::rng(1000 + point);
    let batch = super::random_batch(&mut rng, s, 6, 4, &[0, 3, 7]);
    let refs: Vec<&ModelInput> = batch.iter().collect();
    let labels: Vec<u8> = batch.iter().map(|x| x.label).collect();
    let w = weights();
    grad_check(
        |t, flat| {
            let bound = bind_flat(t, &model, flat, |_| true)?;
            let out = model.forward_tape(t, &bound, &refs).map_err(numerics_of_model)?;
            pt_loss(t, out.features, out.logits, &labels, &w, model.dims.hidden)
        },
        &flat_params(&model, |_| true),
        1e-5,
    )
    .unwrap()
}

/// Same for the fine-tuning loss with the classifier held fixed.
pub fn ft_loss_error(point: u64) -> f64 {
    let s = 5;
    let trainable = |m: Module| m != Module::Cls;
    let model = super::small_model(50 + point, s);
    let mut rng = nfsense_core::rng::rng(2000 + point);
    let ft = super::random_batch(&mut rng, s, 6, 4, &[1, 2, 5]);
    let an = super::random_batch(&mut rng, s, 8, 4, &[1, 2, 5, 8]);
    let ft_refs: Vec<&ModelInput> = ft.iter().collect();
    let an_refs: Vec<&ModelInput> = an.iter().collect();
    let w = weights();
    grad_check(
        |t, flat| {
            let bound = bind_flat(t, &model, flat, trainable)?;
            let l = ft_loss(&model, t, &bound, &ft_refs, &an_refs, &w).map_err(|e| match e {
                TrainError::Numerics(n) => n,
                TrainError::Model(m) => numerics_of_model(m),
                other => panic!("{other}"),
            })?;
            Ok(l.total)
        },
        &flat_params(&model, trainable),
        1e-5,
    )
    .unwrap()
}
