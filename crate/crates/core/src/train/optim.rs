use rand::seq::SliceRandom;

use crate::model::{HarModel, Module};
use crate::numerics::Tensor;
use crate::rng::Rng;

/// Adaptive-moment optimizer whose step size is looked up per module. A
/// module with rate zero is left untouched, moments included.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(model: &HarModel, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros: Vec<Vec<f64>> = model.params.iter().map(|p| vec![0.0; p.value.len()]).collect();
        Self {
            beta1,
            beta2,
            eps,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, model: &mut HarModel, grads: &[Tensor], lr: impl Fn(Module) -> f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (i, p) in model.params.iter_mut().enumerate() {
            let rate = lr(p.module);
            if rate == 0.0 {
                continue;
            }
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (((w, g), m), v) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(grads[i].data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                *w -= rate * (*m / c1) / ((*v / c2).sqrt() + self.eps);
            }
        }
    }
}

/// Endless reshuffled pass over `0..len`, handing out batches.
pub(crate) struct Cycler {
    order: Vec<usize>,
    pos: usize,
}

impl Cycler {
    pub fn new(len: usize, rng: &mut Rng) -> Self {
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(rng);
        Self { order, pos: 0 }
    }

    /// Next `min(n, len)` indices, reshuffling whenever a pass completes.
    pub fn next(&mut self, n: usize, rng: &mut Rng) -> Vec<usize> {
        let n = n.min(self.order.len());
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            if self.pos == self.order.len() {
                self.order.shuffle(rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelDims;

    #[test]
    fn zero_rate_module_is_untouched() {
        let mut m = HarModel::init(ModelDims::new(5), &mut crate::rng::rng(1));
        let before = m.clone();
        let grads: Vec<Tensor> = m.params.iter().map(|p| Tensor::full(p.value.shape(), 0.3)).collect();
        let mut opt = Adam::new(&m, 0.9, 0.999, 1e-8);
        opt.step(&mut m, &grads, |md| if md == Module::Cls { 0.0 } else { 1e-3 });
        for (a, b) in m.params.iter().zip(&before.params) {
            if a.module == Module::Cls {
                assert_eq!(a.value, b.value);
            } else {
                // First bias-corrected step moves every weight by about the rate.
                for (x, y) in a.value.data().iter().zip(b.value.data()) {
                    assert!((y - x - 1e-3).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn cycler_covers_each_pass() {
        let mut rng = crate::rng::rng(3);
        let mut c = Cycler::new(5, &mut rng);
        let mut a = c.next(3, &mut rng);
        a.extend(c.next(2, &mut rng));
        a.sort_unstable();
        assert_eq!(a, vec![0, 1, 2, 3, 4]);
        assert_eq!(c.next(9, &mut rng).len(), 5);
    }
}
