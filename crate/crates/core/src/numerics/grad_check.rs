use super::{NumericsError, Tape, Tensor, Var};

/// Compares the tape gradient of a scalar function against central
/// differences and returns the largest relative error over all coordinates,
/// `|a - n| / max(|a| + |n|, floor)`. The floor is `1e-4` of the largest
/// `|a| + |n|` (at least `1e-8`), so coordinates whose gradient sits at the
/// round-off level of the difference quotient are judged against the
/// gradient's overall scale.
pub fn grad_check<F>(f: F, point: &Tensor, eps: f64) -> Result<f64, NumericsError>
where
    F: Fn(&mut Tape, Var) -> Result<Var, NumericsError>,
{
    let mut tape = Tape::new();
    let x = tape.param(point.clone());
    let y = f(&mut tape, x)?;
    let analytic = tape.backward(y)?.tensor(x);

    let eval = |p: Tensor| -> Result<f64, NumericsError> {
        let mut t = Tape::new();
        let x = t.param(p);
        let y = f(&mut t, x)?;
        Ok(t.value(y).item())
    };

    let mut pairs = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        let mut plus = point.clone();
        plus.data_mut()[i] += eps;
        let mut minus = point.clone();
        minus.data_mut()[i] -= eps;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        pairs.push((analytic.data()[i], numeric));
    }
    let scale = pairs.iter().map(|(a, n)| a.abs() + n.abs()).fold(0.0, f64::max);
    let floor = (1e-4 * scale).max(1e-8);
    let worst = pairs
        .iter()
        .map(|(a, n)| (a - n).abs() / (a.abs() + n.abs()).max(floor))
        .fold(0.0f64, f64::max);
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_quadratic() {
        let p = Tensor::from_vec(vec![0.3, -1.2, 2.5, 0.7]);
        let err = grad_check(
            |t, x| {
                let sq = t.square(x);
                t.sum(sq, None)
            },
            &p,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn frozen_input_gets_zero_gradient() {
        let mut t = Tape::new();
        let w = t.constant(Tensor::from_vec(vec![1.0, 2.0]));
        let x = t.param(Tensor::from_vec(vec![3.0, 4.0]));
        let p = t.mul(x, w).unwrap();
        let s = t.sum(p, None).unwrap();
        let g = t.backward(s).unwrap();
        assert!(g.get(w).is_none());
        assert_eq!(g.tensor(w).data(), &[0.0, 0.0]);
        assert_eq!(g.tensor(x).data(), &[1.0, 2.0]);
    }
}
