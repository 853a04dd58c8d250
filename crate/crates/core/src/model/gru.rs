use super::init::{Init, Registrar};
use crate::diffcore::{Graph, ParamId, ParameterStore, Var};
use crate::error::Result;

/// Weights of one GRU direction. The `*_c` matrices are present only when
/// the cell takes an extra context vector at every step.
#[derive(Clone, Debug)]
pub struct GruParams {
    pub w_ux: ParamId,
    pub w_uh: ParamId,
    pub w_rx: ParamId,
    pub w_rh: ParamId,
    pub w_hx: ParamId,
    pub w_hh: ParamId,
    pub b_u: ParamId,
    pub b_r: ParamId,
    pub b_h: ParamId,
    pub context: Option<GruContext>,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

#[derive(Clone, Debug)]
pub struct GruContext {
    pub w_uc: ParamId,
    pub w_rc: ParamId,
    pub w_hc: ParamId,
}

impl GruParams {
    pub fn ids(&self) -> Vec<ParamId> {
        let mut ids = vec![
            self.w_ux, self.w_uh, self.w_rx, self.w_rh, self.w_hx, self.w_hh, self.b_u, self.b_r, self.b_h,
        ];
        if let Some(c) = &self.context {
            ids.extend([c.w_uc, c.w_rc, c.w_hc]);
        }
        ids
    }

    pub(crate) fn register(
        reg: &mut Registrar<'_>,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        context_dim: Option<usize>,
    ) -> Result<Self> {
        let (x, h) = (&[hidden_dim, input_dim][..], &[hidden_dim, hidden_dim][..]);
        let b = &[hidden_dim][..];
        let mut p = |name: &str, shape: &[usize], init| reg.param(&format!("{prefix}.{name}"), shape, init);
        let params = Self {
            w_ux: p("w_ux", x, Init::Glorot)?,
            w_uh: p("w_uh", h, Init::Glorot)?,
            w_rx: p("w_rx", x, Init::Glorot)?,
            w_rh: p("w_rh", h, Init::Glorot)?,
            w_hx: p("w_hx", x, Init::Glorot)?,
            w_hh: p("w_hh", h, Init::Glorot)?,
            b_u: p("b_u", b, Init::Zeros)?,
            b_r: p("b_r", b, Init::Zeros)?,
            b_h: p("b_h", b, Init::Zeros)?,
            context: None,
            input_dim,
            hidden_dim,
        };
        let context = match context_dim {
            Some(c) => {
                let shape = &[hidden_dim, c][..];
                Some(GruContext {
                    w_uc: p("w_uc", shape, Init::Glorot)?,
                    w_rc: p("w_rc", shape, Init::Glorot)?,
                    w_hc: p("w_hc", shape, Init::Glorot)?,
                })
            }
            None => None,
        };
        Ok(Self { context, ..params })
    }
}

/// A GRU's parameters loaded as leaves of one graph.
#[derive(Clone, Copy, Debug)]
pub struct GruVars {
    w_ux: Var,
    w_uh: Var,
    w_rx: Var,
    w_rh: Var,
    w_hx: Var,
    w_hh: Var,
    b_u: Var,
    b_r: Var,
    b_h: Var,
    context: Option<[Var; 3]>,
}

impl GruVars {
    pub fn load(g: &mut Graph, store: &ParameterStore, p: &GruParams) -> Self {
        Self {
            w_ux: g.param(store, p.w_ux),
            w_uh: g.param(store, p.w_uh),
            w_rx: g.param(store, p.w_rx),
            w_rh: g.param(store, p.w_rh),
            w_hx: g.param(store, p.w_hx),
            w_hh: g.param(store, p.w_hh),
            b_u: g.param(store, p.b_u),
            b_r: g.param(store, p.b_r),
            b_h: g.param(store, p.b_h),
            context: p
                .context
                .as_ref()
                .map(|c| [g.param(store, c.w_uc), g.param(store, c.w_rc), g.param(store, c.w_hc)]),
        }
    }
}

/// `W_x·x + W_h·h + b`, plus `W_c·c` when a context is given.
fn gate_input(g: &mut Graph, w_x: Var, x: Var, w_h: Var, h: Var, context: Option<(Var, Var)>, b: Var) -> Result<Var> {
    let a = g.matvec(w_x, x)?;
    let bh = g.matvec(w_h, h)?;
    let mut sum = g.add(a, bh)?;
    if let Some((w_c, c)) = context {
        let cc = g.matvec(w_c, c)?;
        sum = g.add(sum, cc)?;
    }
    g.add(sum, b)
}

/// One step: update gate, reset gate, candidate state, interpolation.
///
/// `context` must be given exactly when the cell was registered with
/// context matrices.
pub fn gru_step(g: &mut Graph, p: &GruVars, x: Var, h_prev: Var, context: Option<Var>) -> Result<Var> {
    let ctx = |i: usize| match (p.context, context) {
        (Some(w), Some(c)) => Some((w[i], c)),
        _ => None,
    };
    let u_in = gate_input(g, p.w_ux, x, p.w_uh, h_prev, ctx(0), p.b_u)?;
    let u = g.sigmoid(u_in);
    let r_in = gate_input(g, p.w_rx, x, p.w_rh, h_prev, ctx(1), p.b_r)?;
    let r = g.sigmoid(r_in);
    let gated = g.hadamard(r, h_prev)?;
    let cand_in = gate_input(g, p.w_hx, x, p.w_hh, gated, ctx(2), p.b_h)?;
    let cand = g.tanh(cand_in);
    // (1 - u) ⊙ h' + u ⊙ h_prev, written as h' + u ⊙ (h_prev - h')
    let diff = g.sub(h_prev, cand)?;
    let carried = g.hadamard(u, diff)?;
    g.add(cand, carried)
}

/// Runs the cell over `xs` from a zero state and returns every state, in
/// input order. With `reverse` the sequence is consumed back to front but
/// states are still returned aligned with their inputs.
pub fn run_gru(g: &mut Graph, store: &ParameterStore, p: &GruParams, xs: &[Var], reverse: bool) -> Result<Vec<Var>> {
    let vars = GruVars::load(g, store, p);
    let mut h = g.constant(crate::diffcore::Tensor::zeros(&[p.hidden_dim]));
    let mut states = vec![h; xs.len()];
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..xs.len()).rev())
    } else {
        Box::new(0..xs.len())
    };
    for t in order {
        h = gru_step(g, &vars, xs[t], h, None)?;
        states[t] = h;
    }
    Ok(states)
}
