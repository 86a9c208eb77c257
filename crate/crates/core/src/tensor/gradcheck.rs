use super::{Result, Tape, Tensor, TensorError, Var};

/// Compares tape gradients of a scalar function against central finite
/// differences, coordinate by coordinate, and returns the largest relative
/// error `|a - n| / max(|a|, |n|, 1e-8)`.
///
/// `f` builds the function on a fresh tape from leaf variables holding
/// `point`.
pub fn grad_check<F>(f: F, point: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    assert!(eps > 0.0, "grad_check step must be positive");
    let mut tape = Tape::new();
    let vars: Vec<Var> = point.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let eval = |inputs: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        let v = tape.value(out).item();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(TensorError::NonFiniteProbe)
        }
    };

    let mut worst = 0.0f64;
    let mut probe: Vec<Tensor> = point.to_vec();
    for (which, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var).expect("leaf gradient");
        for coord in 0..point[which].len() {
            let original = point[which].data()[coord];
            probe[which].data_mut()[coord] = original + eps;
            let plus = eval(&probe).map_err(|_| TensorError::NonFiniteProbe)?;
            probe[which].data_mut()[coord] = original - eps;
            let minus = eval(&probe).map_err(|_| TensorError::NonFiniteProbe)?;
            probe[which].data_mut()[coord] = original;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.data()[coord];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
