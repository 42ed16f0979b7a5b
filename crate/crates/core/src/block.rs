//! The tree memory block: one input gate, a forget gate per child, an output
//! gate peeking at the updated cell, and the backward pass that routes cell
//! error separately to the left and right child.

use crate::error::{Error, Result};
use crate::linalg::{
    matvec_acc, matvec_t_acc, outer_acc, sigmoid_in_place, GradSet, Param, ParamSet, Vector,
};
use crate::treebank::Side;

/// Hidden and cell states of the two children.
#[derive(Debug, Clone, Copy)]
pub struct BlockInput<'a> {
    pub h_l: &'a [f64],
    pub h_r: &'a [f64],
    pub c_l: &'a [f64],
    pub c_r: &'a [f64],
}

/// Everything the forward pass computes, cached for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockActivations {
    pub i: Vector,
    pub f_l: Vector,
    pub f_r: Vector,
    pub o: Vector,
    /// Pre-squash candidate input.
    pub x: Vector,
    pub tanh_x: Vector,
    pub c: Vector,
    pub tanh_c: Vector,
    pub h: Vector,
}

/// What a parent hands down to the child on `side` during backpropagation.
#[derive(Debug, Clone, Copy)]
pub struct ParentFeedback<'a> {
    pub side: Side,
    pub eps_c: &'a [f64],
    /// The parent's forget gate for this child's side.
    pub forget: &'a [f64],
    pub d_i: &'a [f64],
    pub d_fl: &'a [f64],
    pub d_fr: &'a [f64],
}

impl<'a> ParentFeedback<'a> {
    pub fn from_parent(side: Side, act: &'a BlockActivations, err: &'a BlockErrors) -> Self {
        ParentFeedback {
            side,
            eps_c: &err.eps_c,
            forget: match side {
                Side::Left => &act.f_l,
                Side::Right => &act.f_r,
            },
            d_i: &err.d_i,
            d_fl: &err.d_fl,
            d_fr: &err.d_fr,
        }
    }
}

/// Errors and gate deltas at one block. `eps_c` and the gate deltas are what the
/// children consume as their [`ParentFeedback`].
#[derive(Debug, Clone, PartialEq)]
pub struct BlockErrors {
    pub eps_h: Vector,
    pub eps_c: Vector,
    pub d_o: Vector,
    pub d_fl: Vector,
    pub d_fr: Vector,
    pub d_i: Vector,
    pub d_x: Vector,
    pub child_eps_h_l: Vector,
    pub child_eps_h_r: Vector,
}

const BLOCK_PARAMS: &[Param] = &[
    Param::WhiL,
    Param::WhiR,
    Param::WciL,
    Param::WciR,
    Param::Bi,
    Param::WhflL,
    Param::WhflR,
    Param::WcflL,
    Param::WcflR,
    Param::Bfl,
    Param::WhfrL,
    Param::WhfrR,
    Param::WcfrL,
    Param::WcfrR,
    Param::Bfr,
    Param::WhxL,
    Param::WhxR,
    Param::Bx,
    Param::WhoL,
    Param::WhoR,
    Param::Wco,
    Param::Bo,
];

fn check_shapes(params: &ParamSet, input: &BlockInput) -> Result<()> {
    let dims = params.dims();
    let d = dims.hidden_dim;
    for &p in BLOCK_PARAMS {
        let expected = dims.shape_of(p);
        if params[p].shape() != expected {
            return Err(Error::shape(
                format!("parameter `{}`", p.name()),
                format!("{expected:?}"),
                format!("{:?}", params[p].shape()),
            ));
        }
    }
    for (name, v) in [
        ("h_L", input.h_l),
        ("h_R", input.h_r),
        ("c_L", input.c_l),
        ("c_R", input.c_r),
    ] {
        if v.len() != d {
            return Err(Error::shape(format!("block input `{name}`"), d, v.len()));
        }
    }
    Ok(())
}

/// Pre-activation `W_h^L h_L + W_h^R h_R + W_c^L c_L + W_c^R c_R + b` of a gate.
fn gate_preact(
    params: &ParamSet,
    [wh_l, wh_r, wc_l, wc_r, b]: [Param; 5],
    input: &BlockInput,
) -> Vector {
    let mut z = Vector::from_vec(params[b].as_slice().to_vec());
    matvec_acc(&params[wh_l], input.h_l, &mut z);
    matvec_acc(&params[wh_r], input.h_r, &mut z);
    matvec_acc(&params[wc_l], input.c_l, &mut z);
    matvec_acc(&params[wc_r], input.c_r, &mut z);
    z
}

const INPUT_GATE: [Param; 5] = [
    Param::WhiL,
    Param::WhiR,
    Param::WciL,
    Param::WciR,
    Param::Bi,
];
const LEFT_FORGET: [Param; 5] = [
    Param::WhflL,
    Param::WhflR,
    Param::WcflL,
    Param::WcflR,
    Param::Bfl,
];
const RIGHT_FORGET: [Param; 5] = [
    Param::WhfrL,
    Param::WhfrR,
    Param::WcfrL,
    Param::WcfrR,
    Param::Bfr,
];

pub fn forward(params: &ParamSet, input: &BlockInput) -> Result<BlockActivations> {
    check_shapes(params, input)?;
    let d = params.hidden_dim();

    let mut i = gate_preact(params, INPUT_GATE, input);
    sigmoid_in_place(&mut i);
    let mut f_l = gate_preact(params, LEFT_FORGET, input);
    sigmoid_in_place(&mut f_l);
    let mut f_r = gate_preact(params, RIGHT_FORGET, input);
    sigmoid_in_place(&mut f_r);

    let mut x = Vector::from_vec(params[Param::Bx].as_slice().to_vec());
    matvec_acc(&params[Param::WhxL], input.h_l, &mut x);
    matvec_acc(&params[Param::WhxR], input.h_r, &mut x);
    let tanh_x: Vector = x.iter().map(|v| v.tanh()).collect::<Vec<_>>().into();

    let c: Vector = (0..d)
        .map(|k| f_l[k] * input.c_l[k] + f_r[k] * input.c_r[k] + i[k] * tanh_x[k])
        .collect::<Vec<_>>()
        .into();
    let tanh_c: Vector = c.iter().map(|v| v.tanh()).collect::<Vec<_>>().into();

    // The output gate looks at the freshly updated cell.
    let mut o = Vector::from_vec(params[Param::Bo].as_slice().to_vec());
    matvec_acc(&params[Param::WhoL], input.h_l, &mut o);
    matvec_acc(&params[Param::WhoR], input.h_r, &mut o);
    matvec_acc(&params[Param::Wco], &c, &mut o);
    sigmoid_in_place(&mut o);

    let h: Vector = o
        .iter()
        .zip(tanh_c.iter())
        .map(|(a, b)| a * b)
        .collect::<Vec<_>>()
        .into();

    Ok(BlockActivations {
        i,
        f_l,
        f_r,
        o,
        x,
        tanh_x,
        c,
        tanh_c,
        h,
    })
}

/// Cell error a node receives from its parent:
/// `ε_c^parent ⊙ f^side + (W_ci^S)ᵀδ_i + (W_cf_l^S)ᵀδ_fl + (W_cf_r^S)ᵀδ_fr`.
pub fn parent_cell_error(params: &ParamSet, fb: &ParentFeedback, out: &mut [f64]) {
    for ((o, e), f) in out.iter_mut().zip(fb.eps_c).zip(fb.forget) {
        *o += e * f;
    }
    let (wci, wcfl, wcfr) = match fb.side {
        Side::Left => (Param::WciL, Param::WcflL, Param::WcfrL),
        Side::Right => (Param::WciR, Param::WcflR, Param::WcfrR),
    };
    matvec_t_acc(&params[wci], fb.d_i, out);
    matvec_t_acc(&params[wcfl], fb.d_fl, out);
    matvec_t_acc(&params[wcfr], fb.d_fr, out);
}

/// Backward pass through one block.
///
/// `eps_h` is the total error on this block's hidden vector. `feedback` is
/// `None` at the root. Parameter gradients are added into `grads`.
pub fn backward(
    params: &ParamSet,
    input: &BlockInput,
    act: &BlockActivations,
    eps_h: &[f64],
    feedback: Option<&ParentFeedback>,
    grads: &mut GradSet,
) -> BlockErrors {
    let d = params.hidden_dim();
    assert_eq!(eps_h.len(), d, "eps_h length");

    let d_o: Vector = (0..d)
        .map(|k| eps_h[k] * act.tanh_c[k] * act.o[k] * (1.0 - act.o[k]))
        .collect::<Vec<_>>()
        .into();

    let mut eps_c: Vector = (0..d)
        .map(|k| eps_h[k] * act.o[k] * (1.0 - act.tanh_c[k] * act.tanh_c[k]))
        .collect::<Vec<_>>()
        .into();
    matvec_t_acc(&params[Param::Wco], &d_o, &mut eps_c);
    if let Some(fb) = feedback {
        parent_cell_error(params, fb, &mut eps_c);
    }

    let d_fl: Vector = (0..d)
        .map(|k| eps_c[k] * input.c_l[k] * act.f_l[k] * (1.0 - act.f_l[k]))
        .collect::<Vec<_>>()
        .into();
    let d_fr: Vector = (0..d)
        .map(|k| eps_c[k] * input.c_r[k] * act.f_r[k] * (1.0 - act.f_r[k]))
        .collect::<Vec<_>>()
        .into();
    let d_i: Vector = (0..d)
        .map(|k| eps_c[k] * act.tanh_x[k] * act.i[k] * (1.0 - act.i[k]))
        .collect::<Vec<_>>()
        .into();
    let d_x: Vector = (0..d)
        .map(|k| eps_c[k] * act.i[k] * (1.0 - act.tanh_x[k] * act.tanh_x[k]))
        .collect::<Vec<_>>()
        .into();

    // h_S feeds i, f_L, f_R, x and o.
    let child_eps_h = |wi, wfl, wfr, wx, wo| {
        let mut out = Vector::zeros(d);
        matvec_t_acc(&params[wi], &d_i, &mut out);
        matvec_t_acc(&params[wfl], &d_fl, &mut out);
        matvec_t_acc(&params[wfr], &d_fr, &mut out);
        matvec_t_acc(&params[wx], &d_x, &mut out);
        matvec_t_acc(&params[wo], &d_o, &mut out);
        out
    };
    let child_eps_h_l = child_eps_h(
        Param::WhiL,
        Param::WhflL,
        Param::WhfrL,
        Param::WhxL,
        Param::WhoL,
    );
    let child_eps_h_r = child_eps_h(
        Param::WhiR,
        Param::WhflR,
        Param::WhfrR,
        Param::WhxR,
        Param::WhoR,
    );

    let mut acc =
        |p: Param, delta: &[f64], v: &[f64]| outer_acc(grads.tensor_mut(p), delta, v, 1.0);
    for (gate, delta) in [
        (INPUT_GATE, &d_i),
        (LEFT_FORGET, &d_fl),
        (RIGHT_FORGET, &d_fr),
    ] {
        let [wh_l, wh_r, wc_l, wc_r, _] = gate;
        acc(wh_l, delta, input.h_l);
        acc(wh_r, delta, input.h_r);
        acc(wc_l, delta, input.c_l);
        acc(wc_r, delta, input.c_r);
    }
    acc(Param::WhxL, &d_x, input.h_l);
    acc(Param::WhxR, &d_x, input.h_r);
    acc(Param::WhoL, &d_o, input.h_l);
    acc(Param::WhoR, &d_o, input.h_r);
    acc(Param::Wco, &d_o, &act.c);
    for (b, delta) in [
        (Param::Bi, &d_i),
        (Param::Bfl, &d_fl),
        (Param::Bfr, &d_fr),
        (Param::Bx, &d_x),
        (Param::Bo, &d_o),
    ] {
        grads
            .tensor_mut(b)
            .as_mut_slice()
            .iter_mut()
            .zip(delta.iter())
            .for_each(|(g, x)| *g += x);
    }

    BlockErrors {
        eps_h: Vector::from_vec(eps_h.to_vec()),
        eps_c,
        d_o,
        d_fl,
        d_fr,
        d_i,
        d_x,
        child_eps_h_l,
        child_eps_h_r,
    }
}
