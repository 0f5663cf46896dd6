use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Denominator floor for the relative error.
pub const RELATIVE_FLOOR: f64 = 1e-8;

fn evaluate<F>(f: &F, leaves: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = leaves.iter().map(|t| tape.constant(t.clone())).collect();
    let out = f(&mut tape, &vars);
    let v = tape.value(out);
    if v.len() != 1 {
        return Err(Error::NotScalar(v.shape().to_vec()));
    }
    Ok(v.item())
}

/// Compare reverse-mode gradients of `f` with central differences.
///
/// `f` builds a scalar graph from the leaf handles it is given. Returns the
/// maximum over all leaf entries of
/// `|autodiff - central| / max(|central|, 1e-8)`.
pub fn finite_difference_check<F>(f: F, leaves: &[Tensor], step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    if step.is_nan() || step <= 0.0 {
        return Err(Error::InvalidConfig(format!("finite-difference step must be positive, got {step}")));
    }
    let first = evaluate(&f, leaves)?;
    let second = evaluate(&f, leaves)?;
    if first.to_bits() != second.to_bits() {
        return Err(Error::NonDeterministic { first, second });
    }

    let mut tape = Tape::new();
    let vars: Vec<Var> = leaves.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let loss = f(&mut tape, &vars);
    let grads = tape.backward(loss)?;

    let mut worst: f64 = 0.0;
    let mut probe = leaves.to_vec();
    for (li, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var).expect("leaf gradient present");
        for e in 0..leaves[li].len() {
            let orig = leaves[li].data()[e];
            probe[li].data_mut()[e] = orig + step;
            let plus = evaluate(&f, &probe)?;
            probe[li].data_mut()[e] = orig - step;
            let minus = evaluate(&f, &probe)?;
            probe[li].data_mut()[e] = orig;
            let central = (plus - minus) / (2.0 * step);
            let err = (analytic.data()[e] - central).abs() / central.abs().max(RELATIVE_FLOOR);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
