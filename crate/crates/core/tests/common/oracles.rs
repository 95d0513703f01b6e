use nfsense_core::numerics::{Tape, Tensor};
use nfsense_core::rng::{rng, Rng};
use nfsense_core::train::{anchor_loss, ce_loss, class_sensitive_loss, fe_loss, LossWeights};
use rand::Rng as _;

pub const TOL: f64 = 1e-10;
pub const C: usize = 10;

pub fn log_softmax_row(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

pub fn ce_oracle(logits: &[Vec<f64>], labels: &[u8]) -> f64 {
    logits
        .iter()
        .zip(labels)
        .map(|(z, &l)| -log_softmax_row(z)[l as usize])
        .sum::<f64>()
        / labels.len() as f64
}

pub fn centers_oracle(features: &[Vec<f64>], labels: &[u8]) -> Vec<(u8, Vec<f64>)> {
    let mut classes: Vec<u8> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    classes
        .into_iter()
        .map(|c| {
            let rows: Vec<&Vec<f64>> = features.iter().zip(labels).filter(|(_, &l)| l == c).map(|(f, _)| f).collect();
            let mut m = vec![0.0; features[0].len()];
            for r in &rows {
                for (a, b) in m.iter_mut().zip(r.iter()) {
                    *a += b;
                }
            }
            (c, m.into_iter().map(|v| v / rows.len() as f64).collect())
        })
        .collect()
}

pub fn fe_oracle(features: &[Vec<f64>], probs: &[Vec<f64>], labels: &[u8], l11: f64, l12: f64, hidden: usize) -> f64 {
    let b = labels.len() as f64;
    let mut term1 = 0.0;
    for ((f, p), &l) in features.iter().zip(probs).zip(labels) {
        let err: f64 = p
            .iter()
            .enumerate()
            .map(|(k, &pk)| {
                let y = if k == l as usize { 1.0 } else { 0.0 };
                (y - pk) * (y - pk)
            })
            .sum();
        let norm2: f64 = f.iter().map(|v| v * v).sum();
        term1 += err * norm2;
    }
    term1 *= l11 / b;
    let centers = centers_oracle(features, labels);
    let cp = centers.len();
    if cp < 2 {
        return term1;
    }
    let mut dist = 0.0;
    for i in 0..cp {
        for j in 0..cp {
            if i != j {
                dist += centers[i]
                    .1
                    .iter()
                    .zip(&centers[j].1)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
            }
        }
    }
    term1 - l12 * dist / (hidden as f64 * (cp * (cp - 1)) as f64)
}

pub fn cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

pub fn random_rows(rng: &mut Rng, n: usize, w: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..w).map(|_| rng.gen_range(-scale..scale)).collect()).collect()
}

pub fn to_tensor(rows: &[Vec<f64>]) -> Tensor {
    Tensor::new(vec![rows.len(), rows[0].len()], rows.concat()).unwrap()
}

pub fn random_labels(rng: &mut Rng, n: usize) -> Vec<u8> {
    (0..n).map(|_| rng.gen_range(0..C as u8)).collect()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}


pub fn class_sensitive_oracle(logits: &[Vec<f64>], labels: &[u8], cw: &[f64], eps: f64) -> f64 {
    logits
        .iter()
        .zip(labels)
        .map(|(z, &l)| {
            let ls = log_softmax_row(z);
            let inner: f64 = (0..C)
                .map(|k| {
                    let target = if k == l as usize { 1.0 - eps } else { eps / (C - 1) as f64 };
                    target * ls[k]
                })
                .sum();
            -cw[l as usize] * inner
        })
        .sum::<f64>()
        / labels.len() as f64
}

/// Worst relative error of the cross-entropy over 100 random batches.
pub fn ce_worst() -> f64 {
    let mut r = rng(1);
    (0..100)
        .map(|_| {
            let b = r.gen_range(1..20);
            let logits = random_rows(&mut r, b, C, 5.0);
            let labels = random_labels(&mut r, b);
            let mut t = Tape::new();
            let z = t.constant(to_tensor(&logits));
            let l = ce_loss(&mut t, z, &labels).unwrap();
            rel(t.value(l).item(), ce_oracle(&logits, &labels))
        })
        .fold(0.0, f64::max)
}

/// Largest deviation of the uniform-logit cross-entropy from ln 10.
pub fn uniform_ce_gap() -> f64 {
    [1, 7, 64]
        .into_iter()
        .map(|b| {
            let mut t = Tape::new();
            let z = t.constant(Tensor::full(&[b, C], 0.37));
            let labels: Vec<u8> = (0..b).map(|i| (i % C) as u8).collect();
            let l = ce_loss(&mut t, z, &labels).unwrap();
            (t.value(l).item() - (C as f64).ln()).abs()
        })
        .fold(0.0, f64::max)
}

pub fn fe_worst() -> f64 {
    let mut r = rng(2);
    (0..100)
        .map(|_| {
            let b = r.gen_range(1..24);
            let hidden = r.gen_range(1..80);
            let feats = random_rows(&mut r, b, 6, 1.0);
            let logits = random_rows(&mut r, b, C, 3.0);
            let probs: Vec<Vec<f64>> = logits.iter().map(|z| log_softmax_row(z).iter().map(|v| v.exp()).collect()).collect();
            let labels = random_labels(&mut r, b);
            let w = LossWeights {
                l11: r.gen_range(0.0..1.0),
                l12: r.gen_range(0.0..2.0),
                ..LossWeights::default()
            };
            let mut t = Tape::new();
            let f = t.constant(to_tensor(&feats));
            let p = t.constant(to_tensor(&probs));
            let l = fe_loss(&mut t, f, p, &labels, &w, hidden).unwrap();
            rel(t.value(l).item(), fe_oracle(&feats, &probs, &labels, w.l11, w.l12, hidden))
        })
        .fold(0.0, f64::max)
}

/// Worst relative error of the anchor loss, and the largest change caused
/// by scaling the anchor centers by 10.
pub fn anchor_worst() -> (f64, f64) {
    let mut r = rng(3);
    let mut worst = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let n = r.gen_range(1..10);
        let a = random_rows(&mut r, n, 8, 1.0);
        let b = random_rows(&mut r, n, 8, 1.0);
        let l23 = r.gen_range(0.1..3.0);
        let want: f64 = l23 * a.iter().zip(&b).map(|(x, y)| 1.0 - cos(x, y)).sum::<f64>();
        let eval = |a: &[Vec<f64>], b: &[Vec<f64>]| {
            let mut t = Tape::new();
            let x = t.constant(to_tensor(a));
            let y = t.constant(to_tensor(b));
            let l = anchor_loss(&mut t, x, y, l23).unwrap();
            t.value(l).item()
        };
        let got = eval(&a, &b);
        let scaled: Vec<Vec<f64>> = b.iter().map(|row| row.iter().map(|v| v * 10.0).collect()).collect();
        worst.0 = worst.0.max(rel(got, want));
        worst.1 = worst.1.max((eval(&a, &scaled) - got).abs());
    }
    worst
}

pub fn class_sensitive_worst() -> f64 {
    let mut r = rng(4);
    (0..100)
        .map(|_| {
            let b = r.gen_range(1..20);
            let logits = random_rows(&mut r, b, C, 4.0);
            let labels = random_labels(&mut r, b);
            let cw: Vec<f64> = (0..C).map(|_| r.gen_range(0.1..3.0)).collect();
            let eps = r.gen_range(0.0..0.3);
            let mut t = Tape::new();
            let z = t.constant(to_tensor(&logits));
            let l = class_sensitive_loss(&mut t, z, &labels, &cw, eps).unwrap();
            rel(t.value(l).item(), class_sensitive_oracle(&logits, &labels, &cw, eps))
        })
        .fold(0.0, f64::max)
}
