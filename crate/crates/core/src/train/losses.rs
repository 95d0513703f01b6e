//! Loss terms recorded on a [`Tape`].

use crate::numerics::{NumericsError, Tape, Tensor, Var};

use super::LossWeights;

type Res = Result<Var, NumericsError>;

fn one_hot(labels: &[u8], classes: usize) -> Tensor {
    let mut t = Tensor::zeros(&[labels.len(), classes]);
    for (b, &l) in labels.iter().enumerate() {
        t.data_mut()[b * classes + l as usize] = 1.0;
    }
    t
}

fn check_labels(labels: &[u8], classes: usize, rows: usize) -> Result<(), NumericsError> {
    if labels.len() != rows || labels.iter().any(|&l| l as usize >= classes) {
        return Err(NumericsError::Shape {
            op: "labels",
            lhs: vec![rows, classes],
            rhs: labels.iter().map(|&l| l as usize).collect(),
        });
    }
    Ok(())
}

/// Mean of `-log softmax(logits)[label]`.
pub fn ce_loss(tape: &mut Tape, logits: Var, labels: &[u8]) -> Res {
    let shape = tape.shape(logits).to_vec();
    let (b, c) = (shape[0], shape[1]);
    check_labels(labels, c, b)?;
    let ls = tape.log_softmax(logits);
    let hot = tape.constant(one_hot(labels, c));
    let picked = tape.mul(ls, hot)?;
    let total = tape.sum(picked, None)?;
    Ok(tape.scale(total, -1.0 / b.max(1) as f64))
}

/// Per-class mean rows of `features` for the classes present in `labels`,
/// in increasing class order. Returns the centers and their classes.
pub fn batch_centers(tape: &mut Tape, features: Var, labels: &[u8]) -> Result<(Var, Vec<usize>), NumericsError> {
    let b = labels.len();
    let mut present: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
    present.sort_unstable();
    present.dedup();
    let mut avg = Tensor::zeros(&[present.len(), b]);
    for (k, &c) in present.iter().enumerate() {
        let n = labels.iter().filter(|&&l| l as usize == c).count() as f64;
        for (j, &l) in labels.iter().enumerate() {
            if l as usize == c {
                avg.data_mut()[k * b + j] = 1.0 / n;
            }
        }
    }
    let avg = tape.constant(avg);
    Ok((tape.matmul(avg, features)?, present))
}

/// Margin-enlarging loss:
/// `l11 * mean_b sum_i (p_i - p^_i)^2 ||f_b||^2
///  - l12 / (S_h C'(C'-1)) * sum_{i != j} ||c_i - c_j||`
/// with `c` the batch centers of the `C'` classes present; the second term
/// is zero when fewer than two classes are present.
pub fn fe_loss(
    tape: &mut Tape,
    features: Var,
    probs: Var,
    labels: &[u8],
    weights: &LossWeights,
    hidden: usize,
) -> Res {
    let shape = tape.shape(probs).to_vec();
    let (b, c) = (shape[0], shape[1]);
    check_labels(labels, c, b)?;
    let hot = tape.constant(one_hot(labels, c));
    let diff = tape.sub(hot, probs)?;
    let sq = tape.square(diff);
    let err = tape.sum(sq, Some(1))?;
    let fsq = tape.square(features);
    let norm2 = tape.sum(fsq, Some(1))?;
    let prod = tape.mul(err, norm2)?;
    let term1 = tape.mean(prod, None)?;
    let term1 = tape.scale(term1, weights.l11);

    let (centers, present) = batch_centers(tape, features, labels)?;
    let cp = present.len();
    if cp < 2 {
        return Ok(term1);
    }
    let pairs = cp * (cp - 1);
    let mut sel = Tensor::zeros(&[pairs, cp]);
    let mut row = 0;
    for i in 0..cp {
        for j in 0..cp {
            if i != j {
                sel.data_mut()[row * cp + i] = 1.0;
                sel.data_mut()[row * cp + j] = -1.0;
                row += 1;
            }
        }
    }
    let sel = tape.constant(sel);
    let d = tape.matmul(sel, centers)?;
    let dist = tape.l2_norm(d);
    let total = tape.sum(dist, None)?;
    let term2 = tape.scale(total, -weights.l12 / (hidden as f64 * pairs as f64));
    tape.add(term1, term2)
}

/// Cross-entropy plus margin-enlarging loss on one batch.
pub fn pt_loss(
    tape: &mut Tape,
    features: Var,
    logits: Var,
    labels: &[u8],
    weights: &LossWeights,
    hidden: usize,
) -> Res {
    let ce = ce_loss(tape, logits, labels)?;
    if weights.l11 == 0.0 && weights.l12 == 0.0 {
        return Ok(ce);
    }
    let probs = tape.softmax(logits);
    let fe = fe_loss(tape, features, probs, labels, weights, hidden)?;
    tape.add(ce, fe)
}

/// `l23 * sum_i (1 - cos(a_i, b_i))` over matching center rows.
pub fn anchor_loss(tape: &mut Tape, ft_centers: Var, anchor_centers: Var, l23: f64) -> Res {
    let cos = tape.cosine_similarity(ft_centers, anchor_centers)?;
    let s = tape.sum(cos, None)?;
    let n = tape.shape(ft_centers)[0] as f64;
    let neg = tape.scale(s, -l23);
    Ok(tape.add_scalar(neg, l23 * n))
}

/// Class-weighted cross-entropy against smoothed targets: `1 - eps` on the
/// true class and `eps / (C - 1)` elsewhere, each row scaled by the weight
/// of its true class, averaged over the batch.
pub fn class_sensitive_loss(
    tape: &mut Tape,
    logits: Var,
    labels: &[u8],
    class_weights: &[f64],
    smoothing: f64,
) -> Res {
    let shape = tape.shape(logits).to_vec();
    let (b, c) = (shape[0], shape[1]);
    check_labels(labels, c, b)?;
    if class_weights.len() != c {
        return Err(NumericsError::Shape {
            op: "class_sensitive_loss",
            lhs: vec![c],
            rhs: vec![class_weights.len()],
        });
    }
    let off = if c > 1 { smoothing / (c - 1) as f64 } else { 0.0 };
    let mut target = Tensor::zeros(&[b, c]);
    for (r, &l) in labels.iter().enumerate() {
        let w = class_weights[l as usize];
        for k in 0..c {
            let t = if k == l as usize { 1.0 - smoothing } else { off };
            target.data_mut()[r * c + k] = w * t;
        }
    }
    let ls = tape.log_softmax(logits);
    let t = tape.constant(target);
    let p = tape.mul(ls, t)?;
    let s = tape.sum(p, None)?;
    Ok(tape.scale(s, -1.0 / b.max(1) as f64))
}

/// `s * cos(f_b, w_i)` for features `[B x F]` and class weights `[C x F]`.
pub fn cosine_classifier_logits(tape: &mut Tape, features: Var, class_weights: Var, scale: f64) -> Res {
    let f = tape.normalize(features);
    let w = tape.normalize(class_weights);
    let wt = tape.transpose(w)?;
    let l = tape.matmul(f, wt)?;
    Ok(tape.scale(l, scale))
}
