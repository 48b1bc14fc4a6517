//! Gradient-descent fine-tuning of a Takagi-Sugeno model.
//!
//! Full-batch descent with momentum on the squared output error, over the
//! Gaussian MF centers/widths and the linear consequents. The T-norm
//! parameter is held fixed (it is evolved, not descended). Max-disjunction
//! antecedents use the subgradient of the winning branch.

use crate::error::{Error, Result};
use crate::tsfis::{infer, TsModel, MEMBERSHIP_FLOOR};

/// One training sample: model input vector and desired output.
pub type Sample = (Vec<f64>, f64);

/// Partial derivatives (or update deltas) shaped exactly like the tunable
/// parameters of a [`TsModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct TsGradients {
    /// Per input, per MF.
    pub mf_center: Vec<Vec<f64>>,
    pub mf_width: Vec<Vec<f64>>,
    /// Per rule, per input.
    pub coeffs: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl TsGradients {
    pub fn zeros_like(model: &TsModel) -> TsGradients {
        TsGradients {
            mf_center: model.partitions.iter().map(|p| vec![0.0; p.len()]).collect(),
            mf_width: model.partitions.iter().map(|p| vec![0.0; p.len()]).collect(),
            coeffs: model.rules.iter().map(|r| vec![0.0; r.coeffs.len()]).collect(),
            bias: vec![0.0; model.rules.len()],
        }
    }

    fn for_each3(a: &mut TsGradients, g: &TsGradients, p: &TsGradients, mut f: impl FnMut(&mut f64, f64, f64)) {
        for (ar, (gr, pr)) in a.mf_center.iter_mut().zip(g.mf_center.iter().zip(&p.mf_center)) {
            for (av, (gv, pv)) in ar.iter_mut().zip(gr.iter().zip(pr)) {
                f(av, *gv, *pv);
            }
        }
        for (ar, (gr, pr)) in a.mf_width.iter_mut().zip(g.mf_width.iter().zip(&p.mf_width)) {
            for (av, (gv, pv)) in ar.iter_mut().zip(gr.iter().zip(pr)) {
                f(av, *gv, *pv);
            }
        }
        for (ar, (gr, pr)) in a.coeffs.iter_mut().zip(g.coeffs.iter().zip(&p.coeffs)) {
            for (av, (gv, pv)) in ar.iter_mut().zip(gr.iter().zip(pr)) {
                f(av, *gv, *pv);
            }
        }
        for (av, (gv, pv)) in a.bias.iter_mut().zip(g.bias.iter().zip(&p.bias)) {
            f(av, *gv, *pv);
        }
    }
}

/// E = Σ_k (d_k - y_k)² over the dataset.
pub fn output_error(model: &TsModel, data: &[Sample]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidInput("empty dataset".into()));
    }
    let mut e = 0.0;
    for (x, d) in data {
        let y = infer(model, x)?;
        e += (d - y) * (d - y);
    }
    Ok(e)
}

/// Analytic gradient of the output error w.r.t. every MF center/width and
/// consequent parameter, accumulated over the full dataset.
pub fn gradients(model: &TsModel, data: &[Sample]) -> Result<TsGradients> {
    if data.is_empty() {
        return Err(Error::InvalidInput("empty dataset".into()));
    }
    let p = model.tnorm_p;
    let n_inputs = model.num_inputs();
    let mut g = TsGradients::zeros_like(model);

    // scratch reused across samples
    let mut mus: Vec<Vec<f64>> = model.partitions.iter().map(|pt| vec![0.0; pt.len()]).collect();

    for (x, d) in data {
        if x.len() != n_inputs {
            return Err(Error::DimensionMismatch(
                "sample dimension != model inputs".into(),
            ));
        }
        for (i, part) in model.partitions.iter().enumerate() {
            for (s, mf) in part.iter().enumerate() {
                mus[i][s] = mf.eval(x[i]);
            }
        }

        // forward: per rule, winning MF per active input and the T-norm fold
        // in transformed space (Schweizer-Sklar is associative:
        // w = [Σ v_i^-p - (k-1)]^(-1/p)).
        struct ActiveInput {
            input: usize,
            mf: usize,
            v: f64,
            v_pow: f64, // v^-p
            floored: bool,
        }
        let mut rule_w = Vec::with_capacity(model.rules.len());
        let mut rule_f = Vec::with_capacity(model.rules.len());
        let mut rule_active: Vec<Vec<ActiveInput>> = Vec::with_capacity(model.rules.len());
        let mut den = 0.0;
        for rule in &model.rules {
            let mut actives: Vec<ActiveInput> = Vec::new();
            for i in 0..n_inputs {
                let mut best: Option<(usize, f64)> = None;
                for (s, &bit) in rule.antecedent[i].iter().enumerate() {
                    if bit {
                        let mu = mus[i][s];
                        if best.map_or(true, |(_, bv)| mu > bv) {
                            best = Some((s, mu));
                        }
                    }
                }
                if let Some((s, mu)) = best {
                    let floored = mu < MEMBERSHIP_FLOOR;
                    let v = mu.max(MEMBERSHIP_FLOOR);
                    actives.push(ActiveInput {
                        input: i,
                        mf: s,
                        v,
                        v_pow: v.powf(-p),
                        floored,
                    });
                }
            }
            let w = if actives.is_empty() {
                1.0
            } else {
                let t: f64 = actives.iter().map(|a| a.v_pow).sum::<f64>()
                    - (actives.len() as f64 - 1.0);
                if t.is_finite() {
                    t.powf(-1.0 / p)
                } else {
                    0.0
                }
            };
            let f: f64 =
                rule.bias + rule.coeffs.iter().zip(x).map(|(c, xi)| c * xi).sum::<f64>();
            den += w;
            rule_w.push(w);
            rule_f.push(f);
            rule_active.push(actives);
        }
        if den <= 0.0 {
            return Err(Error::Numeric(format!(
                "all rule strengths underflowed to zero at input {x:?}"
            )));
        }
        let y: f64 = rule_w
            .iter()
            .zip(&rule_f)
            .map(|(w, f)| w * f)
            .sum::<f64>()
            / den;

        // backward
        let e = 2.0 * (y - d); // dE/dy for this sample
        for n in 0..model.rules.len() {
            let w_bar = rule_w[n] / den;
            g.bias[n] += e * w_bar;
            for (j, xj) in x.iter().enumerate() {
                g.coeffs[n][j] += e * w_bar * xj;
            }
            let dy_dw = (rule_f[n] - y) / den;
            let w = rule_w[n];
            if w <= 0.0 {
                continue;
            }
            for a in &rule_active[n] {
                if a.floored {
                    continue; // membership clamped at the floor: flat branch
                }
                // dw/dv = w^(1+p) · v^(-p-1)
                let dw_dv = w.powf(1.0 + p) * a.v_pow / a.v;
                let dmu = e * dy_dw * dw_dv;
                let mf = &model.partitions[a.input][a.mf];
                let diff = x[a.input] - mf.center;
                let mu = a.v;
                g.mf_center[a.input][a.mf] += dmu * mu * diff / (mf.width * mf.width);
                g.mf_width[a.input][a.mf] +=
                    dmu * mu * diff * diff / (mf.width * mf.width * mf.width);
            }
        }
    }
    Ok(g)
}

/// Floor applied to widths after every update step.
pub const WIDTH_FLOOR: f64 = 1e-4;

/// One momentum step: Δw(n) = -ε·∂E/∂w + α·Δw(n-1); widths are floored at
/// [`WIDTH_FLOOR`] after the update. Returns the stepped model and the new
/// deltas.
pub fn gd_step(
    model: &TsModel,
    grads: &TsGradients,
    prev_deltas: &TsGradients,
    eps: f64,
    alpha: f64,
) -> (TsModel, TsGradients) {
    let mut deltas = TsGradients::zeros_like(model);
    TsGradients::for_each3(&mut deltas, grads, prev_deltas, |d, g, p| {
        *d = -eps * g + alpha * p;
    });
    let mut out = model.clone();
    for (i, part) in out.partitions.iter_mut().enumerate() {
        for (s, mf) in part.iter_mut().enumerate() {
            mf.center += deltas.mf_center[i][s];
            mf.width = (mf.width + deltas.mf_width[i][s]).max(WIDTH_FLOOR);
        }
    }
    for (n, rule) in out.rules.iter_mut().enumerate() {
        for (j, c) in rule.coeffs.iter_mut().enumerate() {
            *c += deltas.coeffs[n][j];
        }
        rule.bias += deltas.bias[n];
    }
    (out, deltas)
}

/// Run `epochs` full-batch steps and return the parameter state with the
/// lowest training error seen anywhere on the trajectory (including the
/// input model). Divergence to non-finite error stops early.
pub fn fine_tune(
    model: &TsModel,
    data: &[Sample],
    eps: f64,
    alpha: f64,
    epochs: usize,
) -> Result<TsModel> {
    if epochs == 0 {
        return Ok(model.clone());
    }
    let mut best = model.clone();
    let mut best_e = output_error(model, data)?;
    let mut current = model.clone();
    let mut deltas = TsGradients::zeros_like(model);
    for _ in 0..epochs {
        let g = match gradients(&current, data) {
            Ok(g) => g,
            Err(_) => break,
        };
        let (next, next_deltas) = gd_step(&current, &g, &deltas, eps, alpha);
        current = next;
        deltas = next_deltas;
        let e = match output_error(&current, data) {
            Ok(e) if e.is_finite() => e,
            _ => break,
        };
        if e < best_e {
            best_e = e;
            best = current.clone();
        }
    }
    Ok(best)
}
