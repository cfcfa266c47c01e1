//! Step-by-step product integration for weakly singular Volterra equations
//!
//! ```text
//! x(s) = F(s) + κ/Γ(α) ∫_{s_0}^{s} g(ξ, x(ξ)) (s − ξ)^{α−1} dξ
//! ```
//!
//! on an arbitrary increasing node set. On the cell `[s_j, s_{j+1}]` the
//! integrand is frozen at its right end value `c_j = g_j(x_{j+1})` and the
//! kernel is integrated exactly, so each new node solves the implicit
//! relation `x_k = m_k + κ W_{k,k−1} g_{k−1}(x_k)` by Picard iteration.

use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::special::gamma;

/// Fixed-point controls for the per-node implicit update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PicardOptions {
    fn default() -> Self {
        PicardOptions {
            tol: 1e-12,
            max_iter: 50,
        }
    }
}

/// Normalised product-rectangle weights
/// `W_{k,j} = ((s_k − s_j)^α − (s_k − s_{j+1})^α) / Γ(α+1)`.
///
/// Uniform node sets store one weight per lag; other node sets store the full
/// lower triangle. Cloning shares the tables.
#[derive(Debug, Clone)]
pub(crate) struct ProductWeights {
    nodes: Arc<Vec<f64>>,
    table: Table,
}

#[derive(Debug, Clone)]
enum Table {
    // weights by lag `k − 1 − j`
    ByLag(Arc<Vec<f64>>),
    // row `k` holds `W_{k,0..k}` starting at offset `k (k − 1) / 2`
    Triangle(Arc<Vec<f64>>),
}

impl ProductWeights {
    pub(crate) fn new(alpha: f64, nodes: Vec<f64>) -> Self {
        let norm = gamma(alpha + 1.0);
        let n = nodes.len();
        let uniform = n >= 2 && {
            let span = nodes[n - 1] - nodes[0];
            let h = span / (n - 1) as f64;
            nodes
                .iter()
                .enumerate()
                .all(|(j, s)| (s - (nodes[0] + j as f64 * h)).abs() <= 1e-12 * span.abs().max(1.0))
        };
        let table = if uniform {
            let h = (nodes[n - 1] - nodes[0]) / (n - 1) as f64;
            let ha = h.powf(alpha);
            Table::ByLag(Arc::new(
                (0..n - 1)
                    .map(|d| ha * ((d as f64 + 1.0).powf(alpha) - (d as f64).powf(alpha)) / norm)
                    .collect(),
            ))
        } else {
            let mut tri = Vec::with_capacity(n * n.saturating_sub(1) / 2);
            let mut pow = Vec::with_capacity(n);
            for k in 1..n {
                pow.clear();
                pow.extend((0..=k).map(|j| (nodes[k] - nodes[j]).max(0.0).powf(alpha)));
                tri.extend((0..k).map(|j| (pow[j] - pow[j + 1]) / norm));
            }
            Table::Triangle(Arc::new(tri))
        };
        ProductWeights {
            nodes: Arc::new(nodes),
            table,
        }
    }

    pub(crate) fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    #[inline]
    pub(crate) fn weight(&self, k: usize, j: usize) -> f64 {
        match &self.table {
            Table::ByLag(lag) => lag[k - 1 - j],
            Table::Triangle(tri) => tri[k * (k - 1) / 2 + j],
        }
    }

    /// Row `W_{k,0..k}`, available for non-uniform nodes.
    #[inline]
    pub(crate) fn row(&self, k: usize) -> Option<&[f64]> {
        match &self.table {
            Table::ByLag(_) => None,
            Table::Triangle(tri) => Some(&tri[k * (k - 1) / 2..k * (k + 1) / 2]),
        }
    }
}

/// Incremental solver state: node values `x_0..x_k` and cell rates
/// `c_0..c_{k−1}`.
pub(crate) struct VolterraStepper {
    weights: ProductWeights,
    scale: f64,
    opts: PicardOptions,
    lipschitz: Option<f64>,
    states: Vec<DVector<f64>>,
    rates: Vec<DVector<f64>>,
}

impl VolterraStepper {
    pub(crate) fn new(
        weights: ProductWeights,
        scale: f64,
        x0: DVector<f64>,
        opts: PicardOptions,
        lipschitz: Option<f64>,
    ) -> Result<Self> {
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("initial state"));
        }
        let cap = weights.nodes.len();
        let mut states = Vec::with_capacity(cap);
        states.push(x0);
        Ok(VolterraStepper {
            weights,
            scale,
            opts,
            lipschitz,
            states,
            rates: Vec::with_capacity(cap),
        })
    }

    /// Index of the last solved node.
    pub(crate) fn index(&self) -> usize {
        self.states.len() - 1
    }

    pub(crate) fn is_done(&self) -> bool {
        self.states.len() == self.weights.nodes.len()
    }

    pub(crate) fn node(&self, k: usize) -> f64 {
        self.weights.nodes[k]
    }

    #[cfg(test)]
    pub(crate) fn state(&self, k: usize) -> &DVector<f64> {
        &self.states[k]
    }

    /// Advances one node. `forcing` is `F(s_{k})` at the new node and `rhs`
    /// evaluates the cell integrand `g_{k−1}` at a trial state.
    pub(crate) fn step(
        &mut self,
        forcing: DVector<f64>,
        rhs: impl Fn(&DVector<f64>) -> DVector<f64>,
    ) -> Result<&DVector<f64>> {
        let k = self.states.len();
        if k >= self.weights.nodes.len() {
            return Err(Error::invalid("stepper already reached the last node"));
        }
        let mut memory = forcing;
        for (j, c) in self.rates.iter().enumerate() {
            memory.axpy(self.scale * self.weights.weight(k, j), c, 1.0);
        }
        let wk = self.scale * self.weights.weight(k, k - 1);
        if let Some(l) = self.lipschitz {
            if l * wk >= 1.0 {
                return Err(Error::invalid(format!(
                    "step too large for a contractive update at node {k}: λ·w = {}",
                    l * wk
                )));
            }
        }

        let mut rate = rhs(&self.states[k - 1]);
        let mut x = &memory + &rate * wk;
        let mut converged = false;
        let mut update = f64::INFINITY;
        for _ in 0..self.opts.max_iter {
            rate = rhs(&x);
            let next = &memory + &rate * wk;
            update = (&next - &x).norm();
            x = next;
            if !update.is_finite() {
                break;
            }
            if update <= self.opts.tol * (1.0 + x.norm()) {
                converged = true;
                break;
            }
        }
        if x.iter().any(|v| !v.is_finite()) || rate.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("state"));
        }
        if !converged {
            return Err(Error::PicardDivergence { node: k, update });
        }
        self.states.push(x);
        self.rates.push(rate);
        Ok(self.states.last().expect("just pushed"))
    }

    pub(crate) fn into_parts(self) -> (Vec<f64>, Vec<DVector<f64>>, Vec<DVector<f64>>) {
        (self.weights.nodes.to_vec(), self.states, self.rates)
    }

    pub(crate) fn rates(&self) -> &[DVector<f64>] {
        &self.rates
    }
}

/// `n + 1` equispaced nodes on `[lo, hi]` with exact end points.
pub(crate) fn uniform_nodes(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let mut nodes: Vec<f64> = (0..=n)
        .map(|k| lo + (hi - lo) * k as f64 / n as f64)
        .collect();
    nodes[n] = hi;
    nodes
}

/// Graded nodes `(j/m)^{1/α}` on `[0, 1]`.
pub fn graded_nodes(alpha: f64, m: usize) -> Vec<f64> {
    let mut nodes: Vec<f64> = (0..=m)
        .map(|j| (j as f64 / m as f64).powf(1.0 / alpha))
        .collect();
    nodes[m] = 1.0;
    nodes
}
