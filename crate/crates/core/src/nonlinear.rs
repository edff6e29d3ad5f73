//! Quadratic nonlinearity `F(u) = grad u . grad^2 u` and the perturbation
//! source `G`, evaluated pseudo-spectrally with 2/3 dealiasing.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{
    dealias_mask, forward_real_many, inverse_real_many, orders_of, DerivativeTable, Grid,
    SpectralField,
};

/// One entry `F_i += weight * (d_a u_b)(d_c d_d u_e)`; indices are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticTerm {
    pub i: usize,
    pub grad: [usize; 2],
    pub hess: [usize; 3],
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    terms: Vec<QuadraticTerm>,
}

impl QuadraticForm {
    pub fn new(terms: Vec<QuadraticTerm>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Config("quadratic form table is empty".into()));
        }
        for t in &terms {
            let idx = [t.i, t.grad[0], t.grad[1], t.hess[0], t.hess[1], t.hess[2]];
            if idx.iter().any(|&x| !(1..=3).contains(&x)) {
                return Err(Error::Config(format!("quadratic term {t:?}: indices must be in 1..=3")));
            }
            if !t.weight.is_finite() {
                return Err(Error::Config(format!("quadratic term {t:?}: weight must be finite")));
            }
        }
        Ok(Self { terms })
    }

    /// `F_i = sum_{j,k} (d_j u_k)(d_j d_k u_i)`.
    pub fn standard() -> Self {
        let mut terms = Vec::with_capacity(27);
        for i in 1..=3 {
            for j in 1..=3 {
                for k in 1..=3 {
                    terms.push(QuadraticTerm { i, grad: [j, k], hess: [j, k, i], weight: 1.0 });
                }
            }
        }
        Self { terms }
    }

    /// The zero nonlinearity (one term with weight 0), for linear runs.
    pub fn zero() -> Self {
        Self { terms: vec![QuadraticTerm { i: 1, grad: [1, 1], hess: [1, 1, 1], weight: 0.0 }] }
    }

    pub fn terms(&self) -> &[QuadraticTerm] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.weight == 0.0)
    }

    fn grad_keys(&self) -> Vec<(usize, usize)> {
        let mut keys: Vec<_> = self.terms.iter().map(|t| (t.grad[0] - 1, t.grad[1] - 1)).collect();
        keys.sort_unstable();
        keys.dedup();
        keys
    }

    fn hess_keys(&self) -> Vec<(usize, usize, usize)> {
        let mut keys: Vec<_> = self.terms.iter().map(|t| hess_key(t.hess)).collect();
        keys.sort_unstable();
        keys.dedup();
        keys
    }
}

fn hess_key(h: [usize; 3]) -> (usize, usize, usize) {
    let (c, d) = (h[0].min(h[1]) - 1, h[0].max(h[1]) - 1);
    (c, d, h[2] - 1)
}

/// Physical-space samples of the derivatives a form needs from one field.
#[derive(Debug, Clone)]
pub struct FieldDerivatives {
    grad: BTreeMap<(usize, usize), Vec<f64>>,
    hess: BTreeMap<(usize, usize, usize), Vec<f64>>,
}

/// Evaluator bound to one grid and one form.
pub struct Nonlinearity {
    grid: Grid,
    form: QuadraticForm,
    table: DerivativeTable,
    mask: Vec<f64>,
}

impl Nonlinearity {
    pub fn new(grid: Grid, form: QuadraticForm) -> Self {
        Self { table: DerivativeTable::new(&grid), mask: dealias_mask(&grid), grid, form }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn form(&self) -> &QuadraticForm {
        &self.form
    }

    pub fn derivatives(&self, u: &SpectralField) -> Result<FieldDerivatives> {
        if *u.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        let gk = self.form.grad_keys();
        let hk = self.form.hess_keys();
        let mut coeffs: Vec<Vec<_>> = Vec::with_capacity(gk.len() + hk.len());
        for &(a, b) in &gk {
            coeffs.push(self.table.apply(u.comp(b), orders_of(&[a])));
        }
        for &(c, d, e) in &hk {
            coeffs.push(self.table.apply(u.comp(e), orders_of(&[c, d])));
        }
        let refs: Vec<&[_]> = coeffs.iter().map(|c| c.as_slice()).collect();
        let mut phys = inverse_real_many(&self.grid, &refs).into_iter();
        let grad = gk.into_iter().map(|k| (k, phys.next().unwrap())).collect();
        let hess = hk.into_iter().map(|k| (k, phys.next().unwrap())).collect();
        Ok(FieldDerivatives { grad, hess })
    }

    /// Accumulate `B(a, b)` pointwise into `out`.
    fn accumulate(&self, a: &FieldDerivatives, b: &FieldDerivatives, out: &mut [Vec<f64>; 3]) {
        for t in &self.form.terms {
            if t.weight == 0.0 {
                continue;
            }
            let g = &a.grad[&(t.grad[0] - 1, t.grad[1] - 1)];
            let h = &b.hess[&hess_key(t.hess)];
            let w = t.weight;
            out[t.i - 1]
                .par_iter_mut()
                .zip(g.par_iter().zip(h.par_iter()))
                .for_each(|(o, (x, y))| *o += w * x * y);
        }
    }

    fn finish(&self, phys: [Vec<f64>; 3], what: &str) -> Result<SpectralField> {
        if phys.iter().any(|c| c.iter().any(|x| !x.is_finite())) {
            return Err(Error::Divergence {
                at: what.to_string(),
                detail: "non-finite value in physical-space product".into(),
            });
        }
        let mut spec = forward_real_many(&self.grid, &[&phys[0], &phys[1], &phys[2]]).into_iter();
        let comps = [spec.next().unwrap(), spec.next().unwrap(), spec.next().unwrap()];
        let mut out = SpectralField::from_components(self.grid, comps)?.masked(&self.mask);
        out.zero_mean();
        Ok(out)
    }

    fn zeros(&self) -> [Vec<f64>; 3] {
        let z = vec![0.0; self.grid.len()];
        [z.clone(), z.clone(), z]
    }

    pub fn eval_f(&self, u: &SpectralField) -> Result<SpectralField> {
        if self.form.is_zero() {
            return Ok(SpectralField::zeros(self.grid));
        }
        let du = self.derivatives(u)?;
        let mut out = self.zeros();
        self.accumulate(&du, &du, &mut out);
        self.finish(out, "F(u)")
    }

    /// `B(a, b)` with the same coefficient table.
    pub fn eval_bilinear(&self, a: &SpectralField, b: &SpectralField) -> Result<SpectralField> {
        if self.form.is_zero() {
            return Ok(SpectralField::zeros(self.grid));
        }
        let (da, db) = (self.derivatives(a)?, self.derivatives(b)?);
        let mut out = self.zeros();
        self.accumulate(&da, &db, &mut out);
        self.finish(out, "B(a, b)")
    }

    /// `G(ut) = F(ut) + B(ut, uper) + B(uper, ut)`.
    pub fn eval_g(&self, ut: &SpectralField, uper: &SpectralField) -> Result<SpectralField> {
        if ut.grid() != uper.grid() {
            return Err(Error::GridMismatch);
        }
        if self.form.is_zero() {
            return Ok(SpectralField::zeros(self.grid));
        }
        let dp = self.derivatives(uper)?;
        self.eval_g_with(ut, &dp)
    }

    /// `G` with precomputed derivatives of the periodic solution.
    pub fn eval_g_with(&self, ut: &SpectralField, dper: &FieldDerivatives) -> Result<SpectralField> {
        if self.form.is_zero() {
            return Ok(SpectralField::zeros(self.grid));
        }
        let dt = self.derivatives(ut)?;
        let mut out = self.zeros();
        self.accumulate(&dt, &dt, &mut out);
        self.accumulate(&dt, dper, &mut out);
        self.accumulate(dper, &dt, &mut out);
        self.finish(out, "G(u)")
    }

    pub fn dealias(&self) -> &[f64] {
        &self.mask
    }
}
