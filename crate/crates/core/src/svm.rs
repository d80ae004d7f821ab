//! Soft-margin support vector classifier with a polynomial kernel, trained by
//! SMO with second-order working-set selection.
//!
//! A trained model can be compiled into an explicit polynomial in the input
//! coordinates, which makes scoring cost independent of the support-vector
//! count.

use serde::{Deserialize, Serialize};

use crate::assess::{Assessor, DecisionBound, HealthLabel};
use crate::error::{PhmError, Result};
use crate::fault::{FaultVector, N_FAULTS};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Kernel {
    pub degree: u32,
    pub gamma: f64,
    pub coef0: f64,
}

impl Kernel {
    pub fn linear() -> Self {
        Kernel { degree: 1, gamma: 1.0, coef0: 0.0 }
    }

    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        (self.gamma * dot + self.coef0).powi(self.degree as i32)
    }
}

impl Default for Kernel {
    fn default() -> Self {
        Kernel { degree: 3, gamma: 1.0, coef0: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmOptions {
    pub kernel: Kernel,
    /// Box constraint.
    pub c: f64,
    /// KKT violation tolerance.
    pub tolerance: f64,
    pub max_iter: usize,
    /// Kernel column cache budget, MiB.
    pub cache_mb: usize,
}

impl Default for SvmOptions {
    fn default() -> Self {
        SvmOptions { kernel: Kernel::default(), c: 10.0, tolerance: 1e-3, max_iter: 10_000_000, cache_mb: 256 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: Kernel,
    pub c: f64,
    pub support_vectors: Vec<Vec<f64>>,
    /// Label times multiplier for each support vector; +1 is healthy.
    pub dual: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
}

impl SvmModel {
    pub fn dim(&self) -> usize {
        self.support_vectors.first().map_or(0, |v| v.len())
    }

    /// Kernel expansion score; positive means healthy.
    pub fn score(&self, x: &[f64]) -> f64 {
        self.support_vectors.iter().zip(&self.dual).map(|(sv, d)| d * self.kernel.eval(sv, x)).sum::<f64>() + self.bias
    }

    pub fn label(&self, x: &[f64]) -> HealthLabel {
        HealthLabel::from_sign(self.score(x))
    }

    pub fn compile(&self) -> PolyScorer {
        PolyScorer::from_model(self)
    }
}

struct KernelCache<'a> {
    x: &'a [Vec<f64>],
    kernel: Kernel,
    cols: Vec<Option<Vec<f64>>>,
    stamp: Vec<u64>,
    clock: u64,
    held: usize,
    capacity: usize,
}

impl<'a> KernelCache<'a> {
    fn new(x: &'a [Vec<f64>], kernel: Kernel, budget_mb: usize) -> Self {
        let n = x.len();
        let capacity = ((budget_mb << 20) / (8 * n.max(1))).max(2);
        KernelCache { x, kernel, cols: vec![None; n], stamp: vec![0; n], clock: 0, held: 0, capacity }
    }

    fn ensure(&mut self, i: usize) {
        self.clock += 1;
        self.stamp[i] = self.clock;
        if self.cols[i].is_some() {
            return;
        }
        if self.held >= self.capacity {
            let victim = (0..self.cols.len())
                .filter(|&k| self.cols[k].is_some() && k != i)
                .min_by_key(|&k| self.stamp[k])
                .expect("cache holds at least one column");
            self.cols[victim] = None;
            self.held -= 1;
        }
        let xi = &self.x[i];
        self.cols[i] = Some(self.x.iter().map(|xj| self.kernel.eval(xi, xj)).collect());
        self.held += 1;
    }

    /// Columns i and j, both guaranteed resident.
    fn pair(&mut self, i: usize, j: usize) -> (&[f64], &[f64]) {
        self.ensure(i);
        self.ensure(j);
        (self.cols[i].as_deref().unwrap(), self.cols[j].as_deref().unwrap())
    }

    fn column(&mut self, i: usize) -> &[f64] {
        self.ensure(i);
        self.cols[i].as_deref().unwrap()
    }
}

const TAU: f64 = 1e-12;

/// Trains on rows `x` with labels `y` (healthy = +1).
pub fn train_svm(x: &[Vec<f64>], labels: &[HealthLabel], opts: &SvmOptions) -> Result<SvmModel> {
    let n = x.len();
    if n == 0 || labels.len() != n {
        return Err(PhmError::invalid("inputs and labels must be non-empty and of equal count"));
    }
    let dim = x[0].len();
    if x.iter().any(|r| r.len() != dim || r.iter().any(|v| !v.is_finite())) {
        return Err(PhmError::invalid("ragged or non-finite training inputs"));
    }
    if !(opts.c > 0.0 && opts.tolerance > 0.0 && opts.kernel.gamma.is_finite() && opts.kernel.coef0.is_finite()) {
        return Err(PhmError::invalid("bad svm options"));
    }
    let y: Vec<f64> = labels.iter().map(|l| l.sign()).collect();
    if y.iter().all(|&v| v > 0.0) || y.iter().all(|&v| v < 0.0) {
        return Err(PhmError::SingleClass);
    }
    let c = opts.c;
    let diag: Vec<f64> = x.iter().map(|r| opts.kernel.eval(r, r)).collect();
    let mut cache = KernelCache::new(x, opts.kernel, opts.cache_mb);
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    let mut iter = 0;
    while iter < opts.max_iter {
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            if up(alpha[t], y[t]) {
                let v = -y[t] * grad[t];
                if v >= gmax {
                    gmax = v;
                    i = t;
                }
            }
        }
        if i == usize::MAX {
            break;
        }
        let ki = cache.column(i).to_vec();
        let mut gmin = f64::INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !low(alpha[t], y[t]) {
                continue;
            }
            let v = -y[t] * grad[t];
            gmin = gmin.min(v);
            let b = gmax - v;
            if b > 0.0 {
                let mut a = diag[i] + diag[t] - 2.0 * ki[t];
                if a <= 0.0 {
                    a = TAU;
                }
                let obj = -b * b / a;
                if obj <= best {
                    best = obj;
                    j = t;
                }
            }
        }
        if gmax - gmin < opts.tolerance || j == usize::MAX {
            break;
        }
        iter += 1;

        let (ci, cj) = cache.pair(i, j);
        let kij = ci[j];
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let mut quad = diag[i] + diag[j] - 2.0 * kij;
        if quad <= 0.0 {
            quad = TAU;
        }
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let di = alpha[i] - old_i;
        let dj = alpha[j] - old_j;
        // Q_tk = y_t y_k K_tk
        for t in 0..n {
            grad[t] += y[t] * (y[i] * ci[t] * di + y[j] * cj[t] * dj);
        }
    }
    if iter >= opts.max_iter {
        log::warn!("svm stopped at the iteration cap ({iter})");
    }

    // ρ from free vectors, else the midpoint of the feasible interval.
    let (mut ub, mut lb, mut sum, mut n_free) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else {
            n_free += 1;
            sum += yg;
        }
    }
    let rho = if n_free > 0 { sum / n_free as f64 } else { 0.5 * (ub + lb) };

    let mut support_vectors = Vec::new();
    let mut dual = Vec::new();
    for t in 0..n {
        if alpha[t] > 0.0 {
            support_vectors.push(x[t].clone());
            dual.push(y[t] * alpha[t]);
        }
    }
    Ok(SvmModel { kernel: opts.kernel, c, support_vectors, dual, bias: -rho, iterations: iter })
}

/// Explicit polynomial form of a trained model's score.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyScorer {
    dim: usize,
    /// Exponent tuples, one per monomial.
    powers: Vec<Vec<u32>>,
    coefs: Vec<f64>,
    constant: f64,
    /// Nested-Horner form of the same polynomial.
    nodes: Vec<HornerNode>,
    depth: usize,
    /// Coefficient blocks of a cubic in nested order, when the trie has depth 3.
    cubic: Option<Cubic>,
}

/// Cubic laid out over the quadratic features q = x_i x_j (i ≤ j), ordered
/// by j then i, so the terms whose largest index is k use a prefix of q.
#[derive(Clone, Debug, PartialEq)]
struct Cubic {
    linear: Vec<f64>,
    quad: Vec<f64>,
    /// Block k holds the coefficients of x_k q over the first (k+1)(k+2)/2 features.
    cubic: Vec<f64>,
}

fn tri(j: usize) -> usize {
    j * (j + 1) / 2
}

/// Dot product with four independent partial sums.
#[inline]
fn dot4(a: &[f64], b: &[f64]) -> f64 {
    let mut s = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            s[l] += x[l] * y[l];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (s[0] + s[1]) + (s[2] + s[3]) + tail
}

impl Cubic {
    fn from_nodes(nodes: &[HornerNode], dim: usize) -> Self {
        // preorder is the lexicographic order of the index paths
        let mut linear = vec![0.0; dim];
        let mut c2 = Vec::new();
        let mut c3 = Vec::new();
        for n in nodes.iter().rev() {
            match n.depth {
                0 => linear[n.coord] = n.coef,
                1 => c2.push(n.coef),
                _ => c3.push(n.coef),
            }
        }
        let mut quad = vec![0.0; tri(dim)];
        let offsets: Vec<usize> = (0..dim).map(|k| (0..k).map(|m| tri(m + 1)).sum()).collect();
        let mut cubic = vec![0.0; offsets.last().map_or(0, |o| o + tri(dim))];
        let (mut p2, mut p3) = (0, 0);
        for i in 0..dim {
            for j in i..dim {
                quad[tri(j) + i] = c2[p2];
                p2 += 1;
                for k in j..dim {
                    cubic[offsets[k] + tri(j) + i] = c3[p3];
                    p3 += 1;
                }
            }
        }
        Cubic { linear, quad, cubic }
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let n = x.len();
        let mut q = [0.0; 64];
        if tri(n) > q.len() {
            return f64::NAN;
        }
        for j in 0..n {
            for i in 0..=j {
                q[tri(j) + i] = x[i] * x[j];
            }
        }
        let q = &q[..tri(n)];
        let mut acc = dot4(&self.linear, x) + dot4(&self.quad, q);
        let mut off = 0;
        for (k, &xk) in x.iter().enumerate() {
            let len = tri(k + 1);
            acc += xk * dot4(&self.cubic[off..off + len], &q[..len]);
            off += len;
        }
        acc
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct HornerNode {
    coord: usize,
    /// Path length from the root, starting at 0.
    depth: usize,
    coef: f64,
}

/// Trie of the monomials in reverse preorder; a monomial x_i·x_j·x_k
/// (i ≤ j ≤ k) is the path i → j → k and carries its coefficient at the last
/// node. Reverse preorder visits every subtree right before its root.
fn horner_nodes(powers: &[Vec<u32>], coefs: &[f64]) -> Vec<HornerNode> {
    use std::collections::BTreeMap;
    let mut by_seq: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    for (beta, &c) in powers.iter().zip(coefs) {
        let seq: Vec<usize> = beta.iter().enumerate().flat_map(|(i, &b)| std::iter::repeat_n(i, b as usize)).collect();
        for l in 1..seq.len() {
            by_seq.entry(seq[..l].to_vec()).or_insert(0.0);
        }
        *by_seq.entry(seq).or_insert(0.0) += c;
    }
    by_seq
        .into_iter()
        .rev()
        .map(|(seq, coef)| HornerNode { coord: *seq.last().expect("non-empty"), depth: seq.len() - 1, coef })
        .collect()
}

fn multi_indices(dim: usize, degree: u32) -> Vec<Vec<u32>> {
    fn rec(dim: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == dim - 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for e in (0..=left).rev() {
            cur.push(e);
            rec(dim, left - e, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if dim > 0 {
        rec(dim, degree, &mut Vec::new(), &mut out);
    }
    out
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

fn binomial(n: u32, k: u32) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

impl PolyScorer {
    pub fn from_model(m: &SvmModel) -> Self {
        let dim = m.dim();
        let d = m.kernel.degree;
        let mut powers = Vec::new();
        let mut coefs = Vec::new();
        let mut constant = m.bias;
        // (γs + c0)^d = Σ_m C(d,m) c0^(d−m) γ^m s^m, and s^m expands
        // multinomially over monomials of total degree m.
        for deg in 0..=d {
            let outer = binomial(d, deg) * m.kernel.coef0.powi((d - deg) as i32) * m.kernel.gamma.powi(deg as i32);
            if deg == 0 {
                constant += outer * m.dual.iter().sum::<f64>();
                continue;
            }
            for beta in multi_indices(dim, deg) {
                let multinom = factorial(deg) / beta.iter().map(|&b| factorial(b)).product::<f64>();
                let s: f64 = m
                    .support_vectors
                    .iter()
                    .zip(&m.dual)
                    .map(|(sv, a)| a * sv.iter().zip(&beta).map(|(v, &b)| v.powi(b as i32)).product::<f64>())
                    .sum();
                powers.push(beta);
                coefs.push(outer * multinom * s);
            }
        }
        let nodes = horner_nodes(&powers, &coefs);
        let depth = nodes.iter().map(|n| n.depth + 1).max().unwrap_or(0);
        let full_cubic = depth == 3 && nodes.len() == dim + dim * (dim + 1) / 2 + dim * (dim + 1) * (dim + 2) / 6;
        let cubic = (full_cubic && tri(dim) <= 64).then(|| Cubic::from_nodes(&nodes, dim));
        PolyScorer { dim, powers, coefs, constant, nodes, depth, cubic }
    }

    pub fn n_terms(&self) -> usize {
        self.coefs.len()
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        if let Some(c) = &self.cubic {
            return self.constant + c.eval(x);
        }
        // acc[d] collects the finished subtrees hanging below depth d − 1
        let mut acc = [0.0f64; 8];
        if self.depth >= acc.len() {
            return self.score_expanded(x);
        }
        for n in &self.nodes {
            let v = x[n.coord] * (n.coef + acc[n.depth + 1]);
            acc[n.depth + 1] = 0.0;
            acc[n.depth] += v;
        }
        self.constant + acc[0]
    }

    /// Direct monomial sum, for checking the nested form.
    pub fn score_expanded(&self, x: &[f64]) -> f64 {
        self.constant
            + self
                .powers
                .iter()
                .zip(&self.coefs)
                .map(|(beta, c)| c * x.iter().zip(beta).map(|(v, &b)| v.powi(b as i32)).product::<f64>())
                .sum::<f64>()
    }

    pub fn label(&self, x: &[f64]) -> HealthLabel {
        HealthLabel::from_sign(self.score(x))
    }

    /// Lipschitz constants over the unit box: |∂/∂x_i c·xᵝ| ≤ |c|·β_i there.
    fn bound(&self) -> DecisionBound {
        let mut lipschitz = [0.0; N_FAULTS];
        for (beta, c) in self.powers.iter().zip(&self.coefs) {
            for (l, &b) in lipschitz.iter_mut().zip(beta) {
                *l += c.abs() * b as f64;
            }
        }
        let magnitude = self.constant.abs() + self.coefs.iter().map(|c| c.abs()).sum::<f64>();
        DecisionBound { lipschitz, rounding: 1e-12 * magnitude }
    }
}

/// Assessment by the sign of a compiled SVM score.
#[derive(Clone, Debug)]
pub struct SurrogateAssessor {
    pub model: SvmModel,
    scorer: PolyScorer,
    bound: DecisionBound,
}

impl SurrogateAssessor {
    pub fn new(model: SvmModel) -> Result<Self> {
        if model.dim() != N_FAULTS {
            return Err(PhmError::invalid(format!("svm trained on {} inputs, expected {N_FAULTS}", model.dim())));
        }
        let scorer = model.compile();
        let bound = scorer.bound();
        Ok(SurrogateAssessor { model, scorer, bound })
    }

    pub fn score(&self, k: &FaultVector) -> f64 {
        self.scorer.score(&k.0)
    }
}

impl Assessor for SurrogateAssessor {
    fn assess(&self, k: &FaultVector) -> Result<HealthLabel> {
        Ok(self.scorer.label(&k.0))
    }

    fn decision(&self, k: &FaultVector) -> Option<f64> {
        Some(self.scorer.score(&k.0))
    }

    fn decision_bound(&self) -> Option<DecisionBound> {
        Some(self.bound)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    fn labels(v: &[f64]) -> Vec<HealthLabel> {
        v.iter().map(|&s| HealthLabel::from_sign(s)).collect()
    }

    /// Dual objective ½ Σ a_i a_j y_i y_j K_ij − Σ a_i.
    fn dual_objective(x: &[Vec<f64>], y: &[f64], a: &[f64], k: Kernel) -> f64 {
        let mut q = 0.0;
        for i in 0..x.len() {
            for j in 0..x.len() {
                q += a[i] * a[j] * y[i] * y[j] * k.eval(&x[i], &x[j]);
            }
        }
        0.5 * q - a.iter().sum::<f64>()
    }

    /// Independent dual solver: projected gradient with an exact projection
    /// onto {0 ≤ a ≤ C, yᵀa = 0} by bisection on the multiplier.
    fn reference_dual(x: &[Vec<f64>], y: &[f64], c: f64, k: Kernel) -> Vec<f64> {
        let n = x.len();
        let q: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| y[i] * y[j] * k.eval(&x[i], &x[j])).collect()).collect();
        let lmax: f64 = q.iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
        let step = 1.0 / lmax;
        let project = |z: &[f64]| -> Vec<f64> {
            let f = |nu: f64| z.iter().zip(y).map(|(zi, yi)| yi * (zi - nu * yi).clamp(0.0, c)).sum::<f64>();
            let (mut lo, mut hi) = (-1e6, 1e6);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if f(mid) > 0.0 { lo = mid } else { hi = mid }
            }
            let nu = 0.5 * (lo + hi);
            z.iter().zip(y).map(|(zi, yi)| (zi - nu * yi).clamp(0.0, c)).collect()
        };
        let mut a = vec![0.0; n];
        for _ in 0..20000 {
            let g: Vec<f64> = (0..n).map(|i| (0..n).map(|j| q[i][j] * a[j]).sum::<f64>() - 1.0).collect();
            let z: Vec<f64> = a.iter().zip(&g).map(|(ai, gi)| ai - step * gi).collect();
            a = project(&z);
        }
        a
    }

    fn blobs(n: usize, seed_v: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = seed::rng(seed_v, "blobs");
        let mut x = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let p: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..1.0)).collect();
            let s = p[0] * p[0] + 0.8 * p[1] - 0.5 * p[2] * p[1] - 0.45 + rng.random_range(-0.1..0.1);
            y.push(if s < 0.0 { 1.0 } else { -1.0 });
            x.push(p);
        }
        (x, y)
    }

    #[test]
    fn two_points_bisector() {
        let x = vec![vec![0.0, 0.0], vec![2.0, 2.0]];
        let m = train_svm(&x, &labels(&[1.0, -1.0]), &SvmOptions { kernel: Kernel::linear(), ..Default::default() }).unwrap();
        assert_eq!(m.support_vectors.len(), 2);
        assert!(m.score(&[1.0, 1.0]).abs() < 1e-9);
        assert!(m.score(&[2.0, 0.0]).abs() < 1e-9);
        assert!((m.score(&[0.0, 0.0]) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn xor_is_separated_by_a_quadratic_kernel() {
        let x = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]];
        let y = [1.0, 1.0, -1.0, -1.0];
        let kern = Kernel { degree: 2, gamma: 1.0, coef0: 1.0 };
        let m = train_svm(&x, &labels(&y), &SvmOptions { kernel: kern, c: 100.0, ..Default::default() }).unwrap();
        for (p, &s) in x.iter().zip(&y) {
            assert_eq!(m.label(p), HealthLabel::from_sign(s));
        }
    }

    #[test]
    fn single_class_rejected() {
        let x = vec![vec![0.0], vec![1.0]];
        assert!(matches!(train_svm(&x, &labels(&[1.0, 1.0]), &SvmOptions::default()), Err(PhmError::SingleClass)));
    }

    #[test]
    fn matches_reference_dual_solver() {
        let (x, y) = blobs(30, 3);
        let kern = Kernel { degree: 3, gamma: 1.0 / 3.0, coef0: 1.0 };
        let c = 10.0;
        let m = train_svm(&x, &labels(&y), &SvmOptions { kernel: kern, c, tolerance: 1e-6, ..Default::default() }).unwrap();
        let mut a = vec![0.0; x.len()];
        for (sv, d) in m.support_vectors.iter().zip(&m.dual) {
            let i = x.iter().position(|r| r == sv).unwrap();
            a[i] = d.abs();
        }
        let reference = reference_dual(&x, &y, c, kern);
        let (fo, fr) = (dual_objective(&x, &y, &a, kern), dual_objective(&x, &y, &reference, kern));
        assert!((fo - fr).abs() <= 1e-4 * fr.abs().max(1.0), "{fo} vs {fr}");

        // Reference decision function, bias from its free vectors.
        let f_ref_nobias = |p: &[f64]| (0..x.len()).map(|i| reference[i] * y[i] * kern.eval(&x[i], p)).sum::<f64>();
        let free: Vec<usize> = (0..x.len()).filter(|&i| reference[i] > 1e-6 && reference[i] < c - 1e-6).collect();
        assert!(!free.is_empty());
        let b = free.iter().map(|&i| y[i] - f_ref_nobias(&x[i])).sum::<f64>() / free.len() as f64;
        let mut rng = seed::rng(4, "probe");
        let mut agree = 0;
        for _ in 0..100 {
            let p: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..1.0)).collect();
            if (f_ref_nobias(&p) + b).signum() == m.score(&p).signum() {
                agree += 1;
            }
        }
        assert!(agree >= 98, "{agree}/100");
    }

    #[test]
    fn kkt_and_dual_feasibility() {
        let (x, y) = blobs(200, 7);
        let opts = SvmOptions { kernel: Kernel { degree: 3, gamma: 1.0 / 3.0, coef0: 1.0 }, ..Default::default() };
        let m = train_svm(&x, &labels(&y), &opts).unwrap();
        assert!(m.dual.iter().sum::<f64>().abs() < 1e-8);
        for (sv, d) in m.support_vectors.iter().zip(&m.dual) {
            assert!(d.abs() <= opts.c + 1e-12);
            if d.abs() < opts.c * (1.0 - 1e-9) {
                let margin = d.signum() * m.score(sv);
                assert!((margin - 1.0).abs() < 2e-3, "free margin {margin}");
            }
        }
    }

    #[test]
    fn zero_duals_give_constant_score() {
        let m = SvmModel { kernel: Kernel::default(), c: 1.0, support_vectors: vec![vec![0.3; 8]], dual: vec![0.0], bias: -0.25, iterations: 0 };
        assert_eq!(m.score(&[0.9; 8]), -0.25);
        assert_eq!(m.compile().score(&[0.1; 8]), -0.25);
        assert_eq!(m.label(&[0.0; 8]), HealthLabel::Faulty);
    }

    #[test]
    fn compiled_polynomial_matches_expansion() {
        let mut rng = seed::rng(9, "poly");
        let svs: Vec<Vec<f64>> = (0..25).map(|_| (0..8).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let dual: Vec<f64> = (0..25).map(|_| rng.random_range(-10.0..10.0)).collect();
        let m = SvmModel { kernel: Kernel::default(), c: 10.0, support_vectors: svs, dual, bias: 0.7, iterations: 0 };
        let p = m.compile();
        assert_eq!(p.n_terms(), 164);
        for _ in 0..50 {
            let x: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..2.0)).collect();
            let (a, b, c) = (m.score(&x), p.score(&x), p.score_expanded(&x));
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{a} vs {b}");
            assert!((c - b).abs() <= 1e-9 * c.abs().max(1.0), "{c} vs {b}");
        }
    }

    #[test]
    fn decision_bound_holds_on_the_box() {
        let mut rng = seed::rng(10, "bound");
        let svs: Vec<Vec<f64>> = (0..25).map(|_| (0..8).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let dual: Vec<f64> = (0..25).map(|_| rng.random_range(-10.0..10.0)).collect();
        let m = SvmModel { kernel: Kernel::default(), c: 10.0, support_vectors: svs, dual, bias: 0.7, iterations: 0 };
        let sur = SurrogateAssessor::new(m).unwrap();
        let b = sur.decision_bound().unwrap();
        for _ in 0..500 {
            let a = FaultVector(std::array::from_fn(|_| rng.random_range(0.0..1.0)));
            let mut c = a;
            for v in c.0.iter_mut() {
                *v = (*v + rng.random_range(-0.05..0.05)).clamp(0.0, 1.0);
            }
            let moved: f64 = (0..N_FAULTS).map(|i| b.lipschitz[i] * (a.0[i] - c.0[i]).abs()).sum();
            let gap = (sur.decision(&a).unwrap() - sur.decision(&c).unwrap()).abs();
            assert!(gap <= moved + 2.0 * b.rounding, "{gap} > {moved}");
        }
    }

    #[test]
    fn monomial_count() {
        assert_eq!(multi_indices(8, 3).len(), 120);
        assert_eq!(multi_indices(2, 2), vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
    }

    #[test]
    fn tiny_cache_gives_identical_model() {
        let (x, y) = blobs(120, 11);
        let a = train_svm(&x, &labels(&y), &SvmOptions::default()).unwrap();
        let b = train_svm(&x, &labels(&y), &SvmOptions { cache_mb: 0, ..Default::default() }).unwrap();
        assert_eq!(a, b);
    }
}
