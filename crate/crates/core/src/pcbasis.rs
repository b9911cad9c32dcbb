//! Orthogonal polynomial chaos bases, Gauss rules and the moment tensors that
//! couple chaos modes in every Galerkin projection.
//!
//! Two Wiener-Askey families are supported. The Hermite family is orthogonal
//! under the standard Gaussian and is normalised so that `E[psi_n^2] = 1`. The
//! Legendre family is orthogonal under the uniform law on `[-sqrt(3), sqrt(3)]`
//! (zero mean, unit variance) and keeps the classical scaling
//! `psi_n(xi) = P_n(xi / sqrt(3))`, `E[psi_n^2] = 1 / (2n + 1)`.

use serde::{Deserialize, Serialize};

use crate::dense;
use crate::error::{invalid, Error, Result};
use crate::klexp::KlExpansion;

pub const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Law of the basic random variable and the matching polynomial family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    HermiteGaussian,
    LegendreUniform,
}

impl Family {
    /// Evaluates `psi_0..=psi_max_degree` of one variable at `x` into `out`.
    pub fn eval_all(self, x: f64, out: &mut [f64]) {
        if out.is_empty() {
            return;
        }
        out[0] = 1.0;
        if out.len() == 1 {
            return;
        }
        match self {
            Family::HermiteGaussian => {
                // probabilists' He_n, normalised afterwards
                out[1] = x;
                for n in 1..out.len() - 1 {
                    out[n + 1] = x * out[n] - n as f64 * out[n - 1];
                }
                let mut fact = 1.0;
                for (n, v) in out.iter_mut().enumerate().skip(1) {
                    fact *= n as f64;
                    *v /= fact.sqrt();
                }
            }
            Family::LegendreUniform => {
                let t = x / SQRT3;
                out[1] = t;
                for n in 1..out.len() - 1 {
                    let nf = n as f64;
                    out[n + 1] = ((2.0 * nf + 1.0) * t * out[n] - nf * out[n - 1]) / (nf + 1.0);
                }
            }
        }
    }

    /// `E[psi_n^2]` for the one-variable family.
    pub fn norm_sq(self, n: usize) -> f64 {
        match self {
            Family::HermiteGaussian => 1.0,
            Family::LegendreUniform => 1.0 / (2.0 * n as f64 + 1.0),
        }
    }

    /// Monomial coefficients (ascending powers of `xi`) of `psi_0..=psi_max`.
    pub fn monomial_table(self, max_degree: usize) -> Vec<Vec<f64>> {
        let mut table: Vec<Vec<f64>> = Vec::with_capacity(max_degree + 1);
        table.push(vec![1.0]);
        if max_degree == 0 {
            return table;
        }
        match self {
            Family::HermiteGaussian => {
                table.push(vec![0.0, 1.0]);
                for n in 1..max_degree {
                    let mut next = vec![0.0; n + 2];
                    for (k, c) in table[n].iter().enumerate() {
                        next[k + 1] += c;
                    }
                    for (k, c) in table[n - 1].iter().enumerate() {
                        next[k] -= n as f64 * c;
                    }
                    table.push(next);
                }
                let mut fact = 1.0;
                for (n, row) in table.iter_mut().enumerate().skip(1) {
                    fact *= n as f64;
                    let s = fact.sqrt();
                    row.iter_mut().for_each(|c| *c /= s);
                }
            }
            Family::LegendreUniform => {
                let inv = 1.0 / SQRT3;
                table.push(vec![0.0, inv]);
                for n in 1..max_degree {
                    let nf = n as f64;
                    let mut next = vec![0.0; n + 2];
                    for (k, c) in table[n].iter().enumerate() {
                        next[k + 1] += (2.0 * nf + 1.0) * inv * c / (nf + 1.0);
                    }
                    for (k, c) in table[n - 1].iter().enumerate() {
                        next[k] -= nf * c / (nf + 1.0);
                    }
                    table.push(next);
                }
            }
        }
        table
    }

    /// Draws one basic random variable from the family's law.
    pub fn sample<R: rand::Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            Family::HermiteGaussian => rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng),
            Family::LegendreUniform => rng.gen_range(-SQRT3..SQRT3),
        }
    }
}

/// One-dimensional Gauss rule for a probability measure.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `E[f(xi)]` under the rule.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Gauss-Hermite (standard Gaussian density) or Gauss-Legendre (uniform
/// density on `[-sqrt(3), sqrt(3)]`) rule with `n_points` nodes, built with
/// the Golub-Welsch eigenvalue method. Weights sum to one.
pub fn gauss_quadrature(family: Family, n_points: usize) -> Result<GaussRule> {
    if n_points == 0 {
        return Err(invalid("n_points", "must be at least 1"));
    }
    let n = n_points;
    let mut jacobi = vec![0.0; n * n];
    for k in 1..n {
        let b = match family {
            Family::HermiteGaussian => (k as f64).sqrt(),
            Family::LegendreUniform => {
                let kf = k as f64;
                kf / (4.0 * kf * kf - 1.0).sqrt()
            }
        };
        jacobi[(k - 1) * n + k] = b;
        jacobi[k * n + k - 1] = b;
    }
    let (values, vectors) = dense::symmetric_eigen(n, &jacobi)?;
    let scale = match family {
        Family::HermiteGaussian => 1.0,
        Family::LegendreUniform => SQRT3,
    };
    let mut pairs: Vec<(f64, f64)> = values.iter().zip(&vectors).map(|(&x, v)| (x * scale, v[0] * v[0])).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // symmetrise: the rules are symmetric about zero in exact arithmetic
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (pairs[j].0 - pairs[i].0);
        let w = 0.5 * (pairs[i].1 + pairs[j].1);
        pairs[i] = (-x, w);
        pairs[j] = (x, w);
    }
    if n % 2 == 1 {
        pairs[n / 2].0 = 0.0;
    }
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    Ok(GaussRule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1 / total).collect(),
    })
}

/// Truncated chaos basis of total degree `max_degree` in `n_rv` variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcBasis {
    pub family: Family,
    pub max_degree: usize,
    pub n_rv: usize,
    /// Graded-lexicographic multi-indices, one per basis function.
    pub multi_indices: Vec<Vec<usize>>,
    pub norms: Vec<f64>,
}

impl PcBasis {
    pub fn new(family: Family, max_degree: usize, n_rv: usize) -> Result<Self> {
        if n_rv == 0 {
            return Err(invalid("n_rv", "must be at least 1"));
        }
        let mut multi_indices = Vec::new();
        for degree in 0..=max_degree {
            push_compositions(degree, n_rv, &mut Vec::new(), &mut multi_indices);
        }
        let norms = multi_indices
            .iter()
            .map(|alpha| alpha.iter().map(|&a| family.norm_sq(a)).product())
            .collect();
        Ok(Self {
            family,
            max_degree,
            n_rv,
            multi_indices,
            norms,
        })
    }

    /// Single-variable basis, the configuration every application uses.
    pub fn univariate(family: Family, max_degree: usize) -> Self {
        Self::new(family, max_degree, 1).expect("n_rv = 1 is valid")
    }

    /// Number of basis functions minus one.
    pub fn n_pc(&self) -> usize {
        self.multi_indices.len() - 1
    }

    pub fn len(&self) -> usize {
        self.multi_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.multi_indices.is_empty()
    }

    pub fn eval_poly(&self, index: usize, xi: &[f64]) -> Result<f64> {
        if index >= self.len() {
            return Err(Error::IndexOutOfRange { index, len: self.len() });
        }
        if xi.len() != self.n_rv {
            return Err(Error::DimensionMismatch {
                expected: self.n_rv,
                got: xi.len(),
            });
        }
        let alpha = &self.multi_indices[index];
        let mut buf = vec![0.0; self.max_degree + 1];
        let mut value = 1.0;
        for (&x, &a) in xi.iter().zip(alpha) {
            self.family.eval_all(x, &mut buf[..=a]);
            value *= buf[a];
        }
        Ok(value)
    }

    /// All basis functions at `xi`, written into `out` (length `len()`).
    pub fn eval_all(&self, xi: &[f64], out: &mut [f64]) {
        debug_assert_eq!(xi.len(), self.n_rv);
        debug_assert_eq!(out.len(), self.len());
        let stride = self.max_degree + 1;
        let mut table = vec![0.0; stride * self.n_rv];
        for (d, &x) in xi.iter().enumerate() {
            self.family.eval_all(x, &mut table[d * stride..(d + 1) * stride]);
        }
        for (o, alpha) in out.iter_mut().zip(&self.multi_indices) {
            *o = alpha.iter().enumerate().map(|(d, &a)| table[d * stride + a]).product();
        }
    }

    /// Evaluates the expansion `sum_i coeffs[i] psi_i` at a scalar seed.
    pub fn eval_expansion_1d(&self, coeffs: &[f64], xi: f64) -> f64 {
        debug_assert_eq!(self.n_rv, 1);
        let mut buf = vec![0.0; self.max_degree + 1];
        self.family.eval_all(xi, &mut buf);
        coeffs.iter().zip(&buf).map(|(c, p)| c * p).sum()
    }

    /// Tensor-product Gauss rule over all `n_rv` variables with `n_points`
    /// nodes per direction: (points, weights).
    pub fn tensor_rule(&self, n_points: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        let rule = gauss_quadrature(self.family, n_points)?;
        let mut points = vec![Vec::new()];
        let mut weights = vec![1.0];
        for _ in 0..self.n_rv {
            let mut np = Vec::with_capacity(points.len() * rule.len());
            let mut nw = Vec::with_capacity(points.len() * rule.len());
            for (p, w) in points.iter().zip(&weights) {
                for (&x, &wx) in rule.nodes.iter().zip(&rule.weights) {
                    let mut q = p.clone();
                    q.push(x);
                    np.push(q);
                    nw.push(w * wx);
                }
            }
            points = np;
            weights = nw;
        }
        Ok((points, weights))
    }

    /// Node count used for the moment tensors: exact for every product of
    /// three basis functions and for one seed times two basis functions.
    pub fn tensor_quadrature_points(&self) -> usize {
        (3 * self.max_degree + 2).div_ceil(2) + 1
    }
}

fn push_compositions(remaining: usize, slots: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if slots == 1 {
        prefix.push(remaining);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for first in (0..=remaining).rev() {
        prefix.push(first);
        push_compositions(remaining - first, slots - 1, prefix, out);
        prefix.pop();
    }
}

/// Stochastic moment tensors.
///
/// * `c2[j][m] = E[psi_j psi_m]`
/// * `e3[i][j][m] = E[xibar_i sqrt(lambda_i) psi_j psi_m]`, slot 0 carrying the
///   convention `xibar_0 = 1`, `lambda_0 = 1`
/// * `f3[m][l][i] = E[psi_i psi_l psi_m]`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTensors {
    pub c2: Vec<Vec<f64>>,
    pub e3: Vec<Vec<Vec<f64>>>,
    pub f3: Vec<Vec<Vec<f64>>>,
}

impl MomentTensors {
    pub fn n_modes(&self) -> usize {
        self.c2.len()
    }
}

pub fn build_moment_tensors(basis: &PcBasis, kl: &KlExpansion) -> Result<MomentTensors> {
    if kl.n_kl() != basis.n_rv {
        return Err(Error::DimensionMismatch {
            expected: basis.n_rv,
            got: kl.n_kl(),
        });
    }
    let p = basis.len();
    let (points, weights) = basis.tensor_rule(basis.tensor_quadrature_points())?;
    let mut c2 = vec![vec![0.0; p]; p];
    let mut e3 = vec![vec![vec![0.0; p]; p]; basis.n_rv + 1];
    let mut f3 = vec![vec![vec![0.0; p]; p]; p];
    let mut psi = vec![0.0; p];
    let sqrt_lambda: Vec<f64> = std::iter::once(1.0).chain(kl.modes.iter().map(|m| m.lambda.sqrt())).collect();
    for (xi, &w) in points.iter().zip(&weights) {
        basis.eval_all(xi, &mut psi);
        for j in 0..p {
            for m in 0..p {
                let pjm = w * psi[j] * psi[m];
                c2[j][m] += pjm;
                e3[0][j][m] += pjm;
                for (i, &x) in xi.iter().enumerate() {
                    e3[i + 1][j][m] += sqrt_lambda[i + 1] * x * pjm;
                }
                for (l, &pl) in psi.iter().enumerate() {
                    f3[m][l][j] += pjm * pl;
                }
            }
        }
    }
    // Off-diagonal second moments vanish exactly; clear quadrature round-off.
    for (j, row) in c2.iter_mut().enumerate() {
        for (m, v) in row.iter_mut().enumerate() {
            if j != m {
                *v = 0.0;
            }
        }
    }
    Ok(MomentTensors { c2, e3, f3 })
}
