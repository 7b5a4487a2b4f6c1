use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// In-batch softmax loss over inner products.
///
/// Row `i` of `code` pairs with row `i` of `summary`; every other program in
/// the batch acts as a distractor for summary `i`:
/// `-(1/n) sum_i log softmax_j(r_j . r'_i)[i]`.
pub fn batch_loss(tape: &mut Tape, code: Var, summary: Var) -> Result<Var> {
    let (cs, ss) = (tape.value(code).shape().to_vec(), tape.value(summary).shape().to_vec());
    if cs.len() != 2 || cs != ss {
        return Err(Error::shape("batch_loss", format!("{cs:?} vs {ss:?}")));
    }
    let n = cs[0];
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if !tape.value(code).is_finite() || !tape.value(summary).is_finite() {
        return Err(Error::NonFinite("encodings fed to batch_loss".into()));
    }
    let code_t = tape.transpose(code)?;
    let scores = tape.matmul(summary, code_t)?;
    let log_probs = tape.log_softmax_rows(scores)?;
    let eye = tape.constant(Tensor::identity(n))?;
    let diag = tape.mul(log_probs, eye)?;
    let total = tape.sum(diag, None)?;
    tape.scale(total, -1.0 / n as f64)
}

/// Loss value from plain rows, without a tape.
pub fn batch_loss_value(code: &[Vec<f64>], summary: &[Vec<f64>]) -> Result<f64> {
    let mut tape = Tape::new(crate::autodiff::Mode::Eval);
    let c = tape.constant(Tensor::from_rows(code)?)?;
    let s = tape.constant(Tensor::from_rows(summary)?)?;
    let l = batch_loss(&mut tape, c, s)?;
    Ok(tape.value(l).item())
}
