//! Composite operations built from tape primitives.

use crate::autodiff::tape::{concat, Var};
use crate::error::{Error, Result};

/// One LSTM step. `weight` is `[4H × (I+H)]` with gate rows ordered
/// input, forget, candidate, output; `bias` is `[4H]`. Returns `(h, c)`.
pub fn lstm_cell<'t>(
    x: Var<'t>,
    h_prev: Var<'t>,
    c_prev: Var<'t>,
    weight: Var<'t>,
    bias: Var<'t>,
) -> Result<(Var<'t>, Var<'t>)> {
    let input_dim = x.numel();
    let hidden = h_prev.numel();
    if c_prev.numel() != hidden {
        return Err(Error::Dimension(format!(
            "lstm_cell: h has {hidden} units but c has {}",
            c_prev.numel()
        )));
    }
    let wshape = weight.shape();
    if wshape != [4 * hidden, input_dim + hidden] {
        return Err(Error::Dimension(format!(
            "lstm_cell: weight {wshape:?}, expected [{}, {}]",
            4 * hidden,
            input_dim + hidden
        )));
    }
    if bias.numel() != 4 * hidden {
        return Err(Error::Dimension(format!(
            "lstm_cell: bias length {}, expected {}",
            bias.numel(),
            4 * hidden
        )));
    }
    let xh = concat(&[x, h_prev])?.reshape(vec![input_dim + hidden, 1])?;
    let z = weight
        .matmul(xh)?
        .reshape(vec![4 * hidden])?
        .add(bias)?;
    let i = z.slice(0, hidden)?.sigmoid();
    let f = z.slice(hidden, 2 * hidden)?.sigmoid();
    let g = z.slice(2 * hidden, 3 * hidden)?.tanh();
    let o = z.slice(3 * hidden, 4 * hidden)?.sigmoid();
    let c = f.mul(c_prev)?.add(i.mul(g)?)?;
    let h = o.mul(c.tanh())?;
    Ok((h, c))
}

/// Dot-product attention of a single query state over `keys`/`values`
/// (rows are sequence positions). Returns `(context, weights)`.
pub fn attention<'t>(
    query: Var<'t>,
    keys: Var<'t>,
    values: Var<'t>,
) -> Result<(Var<'t>, Var<'t>)> {
    let kshape = keys.shape();
    if kshape.len() != 2 || kshape[0] == 0 {
        return Err(Error::EmptySequence(
            "attention over zero key positions".into(),
        ));
    }
    let (len, dim) = (kshape[0], kshape[1]);
    if query.numel() != dim {
        return Err(Error::Dimension(format!(
            "attention: query length {} vs key width {dim}",
            query.numel()
        )));
    }
    let vshape = values.shape();
    if vshape.len() != 2 || vshape[0] != len {
        return Err(Error::Dimension(format!(
            "attention: {len} keys but values shape {vshape:?}"
        )));
    }
    let scores = keys
        .matmul(query.reshape(vec![dim, 1])?)?
        .reshape(vec![len])?;
    let weights = scores.softmax()?;
    let context = weights
        .reshape(vec![1, len])?
        .matmul(values)?
        .reshape(vec![vshape[1]])?;
    Ok((context, weights))
}

/// `x · w + b` for a rank-1 `x`, with `w` shaped `[in × out]`.
pub fn linear<'t>(x: Var<'t>, w: Var<'t>, b: Var<'t>) -> Result<Var<'t>> {
    let n_in = x.numel();
    let out = w.shape()[1];
    x.reshape(vec![1, n_in])?
        .matmul(w)?
        .reshape(vec![out])?
        .add(b)
}

/// Row-wise `x · w + b` for a rank-2 `x` (bias broadcast over rows).
pub fn linear_rows<'t>(x: Var<'t>, w: Var<'t>, b: Var<'t>) -> Result<Var<'t>> {
    let y = x.matmul(w)?;
    let shape = y.shape();
    let (m, n) = (shape[0], shape[1]);
    if b.numel() != n {
        return Err(Error::Dimension(format!(
            "linear_rows: bias length {} for width {n}",
            b.numel()
        )));
    }
    // Broadcast by stacking the bias m times through a ones-column product.
    let ones = y.tape_scalar_ones(m)?;
    let bias_rows = ones.matmul(b.reshape(vec![1, n])?)?;
    y.add(bias_rows)
}

impl<'t> Var<'t> {
    /// Column of ones `[m × 1]` on the same tape (constant).
    fn tape_scalar_ones(&self, m: usize) -> Result<Var<'t>> {
        use crate::autodiff::Tensor;
        let t = Tensor::matrix(m, 1, vec![1.0; m])?;
        Ok(self.tape().constant(&t))
    }
}
