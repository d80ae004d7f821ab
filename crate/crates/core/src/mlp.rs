//! Single-hidden-layer perceptron mapping POD coefficients to fault vectors,
//! trained with Levenberg–Marquardt.
//!
//! The Gauss-Newton matrix is assembled from its block structure (hidden
//! weights against hidden weights, hidden against each output row, and the
//! shared output Gram block) so a training epoch costs a handful of matrix
//! products instead of materialising the full residual Jacobian.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PhmError, Result};
use crate::fault::{FaultVector, ECCENTRICITY_INDEX, N_FAULTS, PHASE_INDEX};
use crate::seed;

pub fn tansig(x: f64) -> f64 {
    2.0 / (1.0 + (-2.0 * x).exp()) - 1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StopCriteria {
    pub max_epochs: usize,
    /// Stop when the max-norm of the MSE gradient falls below this.
    pub gradient: f64,
    pub mu_start: f64,
    pub mu_min: f64,
    pub mu_max: f64,
    /// Fraction of pairs held out for early stopping; 0 disables it.
    pub holdout: f64,
    /// Consecutive holdout-error increases tolerated before stopping.
    pub max_fail: usize,
}

impl Default for StopCriteria {
    fn default() -> Self {
        StopCriteria {
            max_epochs: 1000,
            gradient: 1e-7,
            mu_start: 1e-3,
            mu_min: 1e-10,
            mu_max: 1e10,
            holdout: 0.0,
            max_fail: 6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    Gradient,
    MuLimit,
    Holdout,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub epochs: usize,
    pub mse: f64,
    pub gradient: f64,
    pub mu: f64,
    pub reason: StopReason,
    /// Training MSE after every accepted step, starting with the initial one.
    pub history: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    /// n_h × n_m.
    pub w_hidden: DMatrix<f64>,
    pub b_hidden: DVector<f64>,
    /// n_k × n_h.
    pub w_out: DMatrix<f64>,
    pub b_out: DVector<f64>,
    pub input_mean: DVector<f64>,
    pub input_scale: DVector<f64>,
    pub record: Option<TrainingRecord>,
}

impl MlpModel {
    /// Uniform weights in ±1/√fan-in, zero output biases.
    pub fn init(n_in: usize, n_h: usize, n_out: usize, seed: u64) -> Result<Self> {
        if n_in == 0 || n_h == 0 || n_out == 0 {
            return Err(PhmError::invalid("network dimensions must be positive"));
        }
        let mut rng = seed::rng(seed, "mlp-init");
        let a = 1.0 / (n_in as f64).sqrt();
        let c = 1.0 / (n_h as f64).sqrt();
        let w_hidden = DMatrix::from_fn(n_h, n_in, |_, _| rng.random_range(-a..a));
        let b_hidden = DVector::from_fn(n_h, |_, _| rng.random_range(-a..a));
        let w_out = DMatrix::from_fn(n_out, n_h, |_, _| rng.random_range(-c..c));
        Ok(MlpModel {
            w_hidden,
            b_hidden,
            w_out,
            b_out: DVector::zeros(n_out),
            input_mean: DVector::zeros(n_in),
            input_scale: DVector::from_element(n_in, 1.0),
            record: None,
        })
    }

    pub fn n_inputs(&self) -> usize {
        self.w_hidden.ncols()
    }

    pub fn n_hidden(&self) -> usize {
        self.w_hidden.nrows()
    }

    pub fn n_outputs(&self) -> usize {
        self.w_out.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.n_hidden() * (self.n_inputs() + 1) + self.n_outputs() * (self.n_hidden() + 1)
    }

    pub fn validate(&self) -> Result<()> {
        let (h, m, k) = (self.n_hidden(), self.n_inputs(), self.n_outputs());
        if self.b_hidden.len() != h
            || self.w_out.ncols() != h
            || self.b_out.len() != k
            || self.input_mean.len() != m
            || self.input_scale.len() != m
        {
            return Err(PhmError::Format("inconsistent network dimensions".into()));
        }
        let finite = self.params().iter().all(|v| v.is_finite())
            && self.input_mean.iter().all(|v| v.is_finite())
            && self.input_scale.iter().all(|v| v.is_finite() && *v > 0.0);
        if !finite {
            return Err(PhmError::Format("non-finite network parameters".into()));
        }
        Ok(())
    }

    /// Parameters flattened as [W_h row j, b_h j] per hidden unit, then
    /// [W_o row o, b_o o] per output.
    pub fn params(&self) -> Vec<f64> {
        let (h, m, k) = (self.n_hidden(), self.n_inputs(), self.n_outputs());
        let mut p = Vec::with_capacity(self.n_params());
        for j in 0..h {
            p.extend((0..m).map(|a| self.w_hidden[(j, a)]));
            p.push(self.b_hidden[j]);
        }
        for o in 0..k {
            p.extend((0..h).map(|j| self.w_out[(o, j)]));
            p.push(self.b_out[o]);
        }
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let (h, m, k) = (self.n_hidden(), self.n_inputs(), self.n_outputs());
        assert_eq!(p.len(), self.n_params());
        let mut it = p.iter().copied();
        for j in 0..h {
            for a in 0..m {
                self.w_hidden[(j, a)] = it.next().unwrap();
            }
            self.b_hidden[j] = it.next().unwrap();
        }
        for o in 0..k {
            for j in 0..h {
                self.w_out[(o, j)] = it.next().unwrap();
            }
            self.b_out[o] = it.next().unwrap();
        }
    }

    fn normalize(&self, alpha: &[f64]) -> DVector<f64> {
        DVector::from_fn(alpha.len(), |a, _| (alpha[a] - self.input_mean[a]) / self.input_scale[a])
    }

    /// Output before the [0, 1] clamp, from an already normalised input.
    fn linear_output(&self, x: &DVector<f64>) -> DVector<f64> {
        let z = &self.w_hidden * x + &self.b_hidden;
        let h = z.map(tansig);
        &self.w_out * h + &self.b_out
    }

    pub fn forward_raw(&self, alpha: &[f64]) -> Result<Vec<f64>> {
        if alpha.len() != self.n_inputs() {
            return Err(PhmError::invalid(format!(
                "expected {} coefficients, got {}",
                self.n_inputs(),
                alpha.len()
            )));
        }
        if alpha.iter().any(|v| !v.is_finite()) {
            return Err(PhmError::invalid("non-finite coefficient"));
        }
        Ok(self.linear_output(&self.normalize(alpha)).iter().copied().collect())
    }

    /// Clamped network output.
    pub fn forward(&self, alpha: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_raw(alpha)?.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
    }

    pub fn estimate(&self, alpha: &[f64]) -> Result<FaultVector> {
        if self.n_outputs() != N_FAULTS {
            return Err(PhmError::invalid("network does not output a fault vector"));
        }
        FaultVector::from_slice(&self.forward(alpha)?)
    }

    /// Mean squared error of the unclamped output over rows of `x`
    /// (normalised inputs) against rows of `t`.
    fn mse_normalized(&self, x: &DMatrix<f64>, t: &DMatrix<f64>) -> f64 {
        let r = self.residuals(x, t).0;
        r.norm_squared() / r.len() as f64
    }

    /// Residuals (prediction − target, n × k) and hidden activations (n × h).
    fn residuals(&self, x: &DMatrix<f64>, t: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut z = x * self.w_hidden.transpose();
        for mut row in z.row_iter_mut() {
            row += self.b_hidden.transpose();
        }
        let h = z.map(tansig);
        let mut y = &h * self.w_out.transpose();
        for mut row in y.row_iter_mut() {
            row += self.b_out.transpose();
        }
        (y - t, h)
    }

    /// Gauss-Newton matrix JᵀJ and gradient Jᵀr of the residual vector, from
    /// the block structure of the Jacobian.
    fn normal_equations(&self, x: &DMatrix<f64>, t: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, f64) {
        let (n, m) = x.shape();
        let (hn, k) = (self.n_hidden(), self.n_outputs());
        let (r, h) = self.residuals(x, t);
        let d = h.map(|v| 1.0 - v * v);
        let m1 = m + 1;
        let nh = hn * m1;
        let no = hn + 1;
        let np = nh + k * no;

        // Z row s: d_sj · [x_s, 1] for every hidden unit j.
        let mut zmat = DMatrix::<f64>::zeros(n, nh);
        for s in 0..n {
            for j in 0..hn {
                let dj = d[(s, j)];
                for a in 0..m {
                    zmat[(s, j * m1 + a)] = dj * x[(s, a)];
                }
                zmat[(s, j * m1 + m)] = dj;
            }
        }
        let mut ht = DMatrix::<f64>::from_element(n, no, 1.0);
        ht.view_mut((0, 0), (n, hn)).copy_from(&h);

        let zz = zmat.tr_mul(&zmat);
        let zh = zmat.tr_mul(&ht);
        let hh = ht.tr_mul(&ht);
        let wtw = self.w_out.tr_mul(&self.w_out);

        let mut jtj = DMatrix::<f64>::zeros(np, np);
        for j in 0..hn {
            for l in 0..hn {
                let c = wtw[(j, l)];
                for a in 0..m1 {
                    for b in 0..m1 {
                        jtj[(j * m1 + a, l * m1 + b)] = c * zz[(j * m1 + a, l * m1 + b)];
                    }
                }
            }
        }
        for o in 0..k {
            let off = nh + o * no;
            jtj.view_mut((off, off), (no, no)).copy_from(&hh);
            for j in 0..hn {
                let w = self.w_out[(o, j)];
                for a in 0..m1 {
                    for b in 0..no {
                        let v = w * zh[(j * m1 + a, b)];
                        jtj[(j * m1 + a, off + b)] = v;
                        jtj[(off + b, j * m1 + a)] = v;
                    }
                }
            }
        }

        let mut g = DVector::<f64>::zeros(np);
        // Backpropagated error per hidden unit, n × h.
        let e = (&r * &self.w_out).component_mul(&d);
        for j in 0..hn {
            let col = e.column(j);
            for a in 0..m {
                g[j * m1 + a] = col.dot(&x.column(a));
            }
            g[j * m1 + m] = col.sum();
        }
        let hr = ht.tr_mul(&r);
        for o in 0..k {
            for b in 0..no {
                g[nh + o * no + b] = hr[(b, o)];
            }
        }
        let sse = r.norm_squared();
        (jtj, g, sse)
    }

    /// Half the squared-error sum over raw inputs and its gradient Jᵀr, as
    /// assembled for the Levenberg–Marquardt step.
    pub fn half_sse_gradient(&self, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
        if inputs.len() != targets.len() || targets.iter().any(|t| t.len() != self.n_outputs()) {
            return Err(PhmError::invalid("inputs and targets do not match the network"));
        }
        let x = DMatrix::from_fn(inputs.len(), self.n_inputs(), |s, a| (inputs[s][a] - self.input_mean[a]) / self.input_scale[a]);
        let t = DMatrix::from_fn(targets.len(), self.n_outputs(), |s, o| targets[s][o]);
        let (_, g, sse) = self.normal_equations(&x, &t);
        Ok((0.5 * sse, g.iter().copied().collect()))
    }

    /// Dense residual Jacobian, rows ordered sample-major then output. Only
    /// meant for small checks.
    pub fn residual_jacobian(&self, inputs: &[Vec<f64>]) -> DMatrix<f64> {
        let (hn, m, k) = (self.n_hidden(), self.n_inputs(), self.n_outputs());
        let m1 = m + 1;
        let nh = hn * m1;
        let mut jac = DMatrix::zeros(inputs.len() * k, self.n_params());
        for (s, alpha) in inputs.iter().enumerate() {
            let x = self.normalize(alpha);
            let h = (&self.w_hidden * &x + &self.b_hidden).map(tansig);
            for o in 0..k {
                let row = s * k + o;
                for j in 0..hn {
                    let c = self.w_out[(o, j)] * (1.0 - h[j] * h[j]);
                    for a in 0..m {
                        jac[(row, j * m1 + a)] = c * x[a];
                    }
                    jac[(row, j * m1 + m)] = c;
                }
                let off = nh + o * (hn + 1);
                for j in 0..hn {
                    jac[(row, off + j)] = h[j];
                }
                jac[(row, off + hn)] = 1.0;
            }
        }
        jac
    }
}

/// Weighted RMS fault-vector error; the phase term is weighted by the actual
/// eccentricity.
pub fn fdi_error(k_est: &FaultVector, k_act: &FaultVector) -> f64 {
    let mut s = 0.0;
    for i in 0..N_FAULTS {
        let w = if i == PHASE_INDEX { k_act.0[ECCENTRICITY_INDEX] } else { 1.0 };
        s += w * (k_est.0[i] - k_act.0[i]).powi(2);
    }
    (s / N_FAULTS as f64).sqrt()
}

fn to_matrix(rows: &[Vec<f64>], width: usize) -> Result<DMatrix<f64>> {
    if rows.iter().any(|r| r.len() != width) {
        return Err(PhmError::invalid("ragged training data"));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(PhmError::invalid("non-finite training data"));
    }
    Ok(DMatrix::from_fn(rows.len(), width, |i, j| rows[i][j]))
}

/// Trains a fresh network on (input, target) pairs.
pub fn train_mlp(inputs: &[Vec<f64>], targets: &[Vec<f64>], n_h: usize, stop: &StopCriteria, seed: u64) -> Result<MlpModel> {
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(PhmError::invalid("inputs and targets must be non-empty and of equal count"));
    }
    if !(0.0..1.0).contains(&stop.holdout) || stop.mu_min <= 0.0 || stop.mu_max < stop.mu_start || stop.mu_start < stop.mu_min {
        return Err(PhmError::invalid("bad stop criteria"));
    }
    let m = inputs[0].len();
    let k = targets[0].len();
    let xall = to_matrix(inputs, m)?;
    let tall = to_matrix(targets, k)?;

    let mut model = MlpModel::init(m, n_h, k, seed)?;
    let n = inputs.len();
    for a in 0..m {
        let col = xall.column(a);
        let mean = col.mean();
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        model.input_mean[a] = mean;
        model.input_scale[a] = if var > 0.0 { var.sqrt() } else { 1.0 };
    }
    if n < 10 * model.n_params() {
        log::warn!("{n} training pairs for {} parameters", model.n_params());
    }
    let xn = DMatrix::from_fn(n, m, |i, a| (xall[(i, a)] - model.input_mean[a]) / model.input_scale[a]);

    let mut order: Vec<usize> = (0..n).collect();
    let n_hold = (stop.holdout * n as f64).round() as usize;
    if n_hold > 0 {
        order.shuffle(&mut seed::rng(seed, "mlp-holdout"));
    }
    let (hold_idx, train_idx) = order.split_at(n_hold);
    let mut train_idx = train_idx.to_vec();
    train_idx.sort_unstable();
    let x = xn.select_rows(train_idx.iter());
    let t = tall.select_rows(train_idx.iter());
    let xv = xn.select_rows(hold_idx.iter());
    let tv = tall.select_rows(hold_idx.iter());

    lm_train(&mut model, &x, &t, (&xv, &tv), stop)?;
    Ok(model)
}

fn lm_train(model: &mut MlpModel, x: &DMatrix<f64>, t: &DMatrix<f64>, holdout: (&DMatrix<f64>, &DMatrix<f64>), stop: &StopCriteria) -> Result<()> {
    let n_res = (x.nrows() * t.ncols()) as f64;
    let mut mu = stop.mu_start;
    let mut params = model.params();
    let (mut jtj, mut g, mut sse) = model.normal_equations(x, t);
    let mut history = vec![sse / n_res];
    let use_holdout = holdout.0.nrows() > 0;
    let mut best_val = if use_holdout { model.mse_normalized(holdout.0, holdout.1) } else { f64::INFINITY };
    let mut best_params = params.clone();
    let mut fails = 0;
    let mut epochs = 0;
    let grad_norm = |g: &DVector<f64>| 2.0 * g.amax() / n_res;
    let mut reason = StopReason::MaxEpochs;

    while epochs < stop.max_epochs {
        if grad_norm(&g) < stop.gradient {
            reason = StopReason::Gradient;
            break;
        }
        let mut accepted = false;
        while mu <= stop.mu_max {
            let mut a = jtj.clone();
            for i in 0..a.nrows() {
                a[(i, i)] += mu;
            }
            let step = match a.cholesky() {
                Some(c) => c.solve(&(-&g)),
                None => {
                    mu *= 10.0;
                    continue;
                }
            };
            let trial: Vec<f64> = params.iter().zip(step.iter()).map(|(p, s)| p + s).collect();
            model.set_params(&trial);
            let (r, _) = model.residuals(x, t);
            let trial_sse = r.norm_squared();
            if trial_sse.is_finite() && trial_sse < sse {
                params = trial;
                mu = (mu / 10.0).max(stop.mu_min);
                accepted = true;
                break;
            }
            mu *= 10.0;
        }
        if !accepted {
            model.set_params(&params);
            if epochs == 0 && !sse.is_finite() {
                return Err(PhmError::SingularStep { mu });
            }
            reason = StopReason::MuLimit;
            break;
        }
        epochs += 1;
        let ne = model.normal_equations(x, t);
        jtj = ne.0;
        g = ne.1;
        sse = ne.2;
        history.push(sse / n_res);
        if use_holdout {
            let v = model.mse_normalized(holdout.0, holdout.1);
            if v < best_val {
                best_val = v;
                best_params = params.clone();
                fails = 0;
            } else {
                fails += 1;
                if fails >= stop.max_fail {
                    model.set_params(&best_params);
                    sse = model.mse_normalized(x, t) * n_res;
                    reason = StopReason::Holdout;
                    break;
                }
            }
        }
    }
    if !model.params().iter().all(|v| v.is_finite()) {
        return Err(PhmError::SingularStep { mu });
    }
    model.record = Some(TrainingRecord {
        epochs,
        mse: sse / n_res,
        gradient: grad_norm(&g),
        mu,
        reason,
        history,
    });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Uniform};

    fn random_net(m: usize, h: usize, k: usize, seed: u64) -> MlpModel {
        let mut net = MlpModel::init(m, h, k, seed).unwrap();
        let mut rng = seed::rng(seed, "perturb");
        let p: Vec<f64> = net.params().iter().map(|v| v + rng.random_range(-0.5..0.5)).collect();
        net.set_params(&p);
        net
    }

    fn random_inputs(n: usize, m: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = seed::rng(seed, "inputs");
        let u = Uniform::new(-1.0, 1.0).unwrap();
        (0..n).map(|_| (0..m).map(|_| u.sample(&mut rng)).collect()).collect()
    }

    #[test]
    fn tansig_values() {
        assert_eq!(tansig(0.0), 0.0);
        assert_eq!(tansig(f64::INFINITY), 1.0);
        assert_eq!(tansig(f64::NEG_INFINITY), -1.0);
        assert!((tansig(0.7) - 0.7f64.tanh()).abs() < 1e-15);
    }

    #[test]
    fn constant_network_and_clamp() {
        let mut net = MlpModel::init(3, 4, 2, 1).unwrap();
        net.w_out.fill(0.0);
        net.b_out = DVector::from_vec(vec![0.5, 1.7]);
        let y = net.forward(&[3.0, -1.0, 9.0]).unwrap();
        assert_eq!(y, vec![0.5, 1.0]);
        net.b_out[1] = -0.3;
        assert_eq!(net.forward(&[0.0, 0.0, 0.0]).unwrap()[1], 0.0);
        assert!(net.forward(&[f64::NAN, 0.0, 0.0]).is_err());
        assert!(net.forward(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn params_round_trip() {
        let net = random_net(3, 5, 2, 4);
        let mut other = MlpModel::init(3, 5, 2, 9).unwrap();
        other.set_params(&net.params());
        assert_eq!(other.params(), net.params());
        assert_eq!(net.params().len(), 5 * 4 + 2 * 6);
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let net = random_net(3, 4, 2, 11);
        let xs = random_inputs(5, 3, 12);
        let jac = net.residual_jacobian(&xs);
        let p0 = net.params();
        let eps = 1e-6;
        let outputs = |p: &[f64]| {
            let mut n = net.clone();
            n.set_params(p);
            xs.iter().flat_map(|x| n.forward_raw(x).unwrap()).collect::<Vec<_>>()
        };
        for q in 0..p0.len() {
            let mut hi = p0.clone();
            hi[q] += eps;
            let mut lo = p0.clone();
            lo[q] -= eps;
            let (a, b) = (outputs(&hi), outputs(&lo));
            for r in 0..a.len() {
                let fd = (a[r] - b[r]) / (2.0 * eps);
                let an = jac[(r, q)];
                assert!((fd - an).abs() <= 1e-6 * an.abs().max(1.0), "param {q} row {r}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn structured_normal_equations_match_dense() {
        let net = random_net(3, 4, 2, 21);
        let xs = random_inputs(7, 3, 22);
        let ts = random_inputs(7, 2, 23);
        let x = to_matrix(&xs, 3).unwrap();
        let t = to_matrix(&ts, 2).unwrap();
        let (jtj, g, sse) = net.normal_equations(&x, &t);
        let jac = net.residual_jacobian(&xs);
        let r: Vec<f64> = xs
            .iter()
            .zip(&ts)
            .flat_map(|(x, t)| net.forward_raw(x).unwrap().into_iter().zip(t.clone()).map(|(y, t)| y - t))
            .collect();
        let r = DVector::from_vec(r);
        assert!((jtj - jac.tr_mul(&jac)).amax() < 1e-12);
        assert!((g - jac.tr_mul(&r)).amax() < 1e-12);
        assert!((sse - r.norm_squared()).abs() < 1e-12);
    }

    #[test]
    fn learns_a_clamped_linear_map() {
        let xs = random_inputs(400, 3, 31);
        let a = [[0.3, -0.2, 0.1], [0.1, 0.25, -0.3]];
        let ts: Vec<Vec<f64>> = xs
            .iter()
            .map(|x| a.iter().map(|row| (0.5 + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()).clamp(0.0, 1.0)).collect())
            .collect();
        let net = train_mlp(&xs, &ts, 4, &StopCriteria { max_epochs: 200, ..Default::default() }, 5).unwrap();
        let rec = net.record.as_ref().unwrap();
        assert!(rec.mse < 1e-4, "mse {}", rec.mse);
        assert!(rec.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn single_pair_is_interpolated() {
        let net = train_mlp(&[vec![0.3, 0.1]], &[vec![0.2, 0.9]], 3, &StopCriteria::default(), 1).unwrap();
        assert!(net.record.unwrap().mse < 1e-10);
    }

    #[test]
    fn training_is_deterministic() {
        let xs = random_inputs(60, 2, 41);
        let ts: Vec<Vec<f64>> = xs.iter().map(|x| vec![(x[0] * x[1]).abs()]).collect();
        let stop = StopCriteria { max_epochs: 30, holdout: 0.2, ..Default::default() };
        let a = train_mlp(&xs, &ts, 5, &stop, 3).unwrap();
        let b = train_mlp(&xs, &ts, 5, &stop, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fdi_error_weights_phase_by_eccentricity() {
        let a = FaultVector::NOMINAL;
        assert_eq!(fdi_error(&a, &a), 0.0);
        let mut b = a;
        b.0[PHASE_INDEX] = 0.9;
        assert_eq!(fdi_error(&b, &a), 0.0);
        let mut c = a;
        c.0[0] = 0.1;
        assert!((fdi_error(&c, &a) - (0.01f64 / 8.0).sqrt()).abs() < 1e-15);
    }

    proptest::proptest! {
        #[test]
        fn output_is_always_in_unit_box(v in proptest::collection::vec(-1e6f64..1e6, 3), s in 0u64..50) {
            let net = random_net(3, 6, 8, s);
            let y = net.forward(&v).unwrap();
            proptest::prop_assert!(y.iter().all(|x| (0.0..=1.0).contains(x)));
        }
    }
}
