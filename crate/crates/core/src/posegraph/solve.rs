//! Levenberg-Marquardt over per-node corrections.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SMatrix};
use serde::{Deserialize, Serialize};

use super::residual::{geo_residual_jacobians, huber_weight, pho_residual};
use super::{GraphError, SubmapGraph};
use crate::liegroup::{Sim3, Sim3Tangent, Vector7};
use crate::summary::SubmapId;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveParams {
    pub max_evals: usize,
    pub initial_damping: f64,
    pub damping_up: f64,
    pub damping_down: f64,
    pub max_damping: f64,
    pub min_step: f64,
    pub min_relative_reduction: f64,
    pub gradient_tolerance: f64,
}

impl Default for SolveParams {
    fn default() -> Self {
        Self {
            max_evals: 200,
            initial_damping: 1e-4,
            damping_up: 10.0,
            damping_down: 0.5,
            max_damping: 1e16,
            min_step: 1e-10,
            min_relative_reduction: 1e-12,
            gradient_tolerance: 1e-12,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    NoVariables,
    Gradient,
    StepSize,
    CostReduction,
    MaxEvaluations,
    MaxDamping,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub evaluations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    /// Cost after the initial evaluation and after every accepted step.
    pub accepted_costs: Vec<f64>,
    pub termination: Termination,
    pub variables: usize,
}

type Block = SMatrix<f64, 7, 7>;

struct Linearization {
    h: DMatrix<f64>,
    g: DVector<f64>,
}

/// Adds `w·[ja jb]ᵀ[ja jb]` and `w·[ja jb]ᵀ r` for the variable endpoints.
#[allow(clippy::too_many_arguments)]
fn accumulate(
    h: &mut DMatrix<f64>,
    g: &mut DVector<f64>,
    a: Option<usize>,
    b: Option<usize>,
    ja: &Block,
    jb: &Block,
    r: &Vector7,
    w: f64,
) {
    let blocks = [(a, ja), (b, jb)];
    for (ia, ja) in blocks {
        let Some(ia) = ia else { continue };
        let jat = ja.transpose();
        let mut gv = g.rows_mut(ia, 7);
        gv += w * jat * r;
        for (ib, jb) in blocks {
            let Some(ib) = ib else { continue };
            let mut hv = h.view_mut((ia, ib), (7, 7));
            hv += w * jat * jb;
        }
    }
}

impl SubmapGraph {
    fn linearize(&self, index: &BTreeMap<SubmapId, usize>, n: usize) -> Linearization {
        let mut h = DMatrix::zeros(n, n);
        let mut g = DVector::zeros(n);
        for e in self.edges.iter().filter(|e| e.valid) {
            let (a, b) = (index.get(&e.source).copied(), index.get(&e.target).copied());
            if a.is_none() && b.is_none() {
                continue;
            }
            let cs = self.nodes[&e.source].correction;
            let ct = self.nodes[&e.target].correction;
            let (r, js, jt) = geo_residual_jacobians(&e.measurement, &cs, &ct);
            let w = e.weight * huber_weight(r.norm_squared(), self.params.huber_geo);
            accumulate(&mut h, &mut g, a, b, &js, &jt, &r, w);
            if let Some((cache, tgt)) = self.photometric_inputs(e) {
                let samples = pho_residual(&cache, &tgt.anchor, &cs, &ct, true);
                if samples.len() < self.params.min_pixels {
                    continue;
                }
                let scale = e.photometric_weight / samples.len() as f64;
                // Accumulate the 14x14 photometric block, then scatter once.
                let mut hh = SMatrix::<f64, 14, 14>::zeros();
                let mut gg = SMatrix::<f64, 14, 1>::zeros();
                for s in &samples {
                    let w = scale * huber_weight(s.residual * s.residual, self.params.huber_pho);
                    let mut j = SMatrix::<f64, 1, 14>::zeros();
                    j.fixed_view_mut::<1, 7>(0, 0).copy_from(&s.jac_src);
                    j.fixed_view_mut::<1, 7>(0, 7).copy_from(&s.jac_tgt);
                    hh += w * j.transpose() * j;
                    gg += (w * s.residual) * j.transpose();
                }
                let slots = [(a, 0usize), (b, 7usize)];
                for (ia, oa) in slots {
                    let Some(ia) = ia else { continue };
                    let mut gv = g.rows_mut(ia, 7);
                    gv += gg.fixed_view::<7, 1>(oa, 0);
                    for (ib, ob) in slots {
                        let Some(ib) = ib else { continue };
                        let mut hv = h.view_mut((ia, ib), (7, 7));
                        hv += hh.fixed_view::<7, 7>(oa, ob);
                    }
                }
            }
        }
        Linearization { h, g }
    }

    /// Minimizes the total cost over all corrections except one fixed node
    /// per connected component.
    ///
    /// On a singular system at maximum damping the corrections are restored
    /// and an error is returned.
    pub fn solve(&mut self, params: &SolveParams) -> Result<SolveReport, GraphError> {
        self.refresh_anchor_caches();
        let fixed = self.fixed_nodes();
        let vars: Vec<SubmapId> = self
            .nodes
            .keys()
            .filter(|id| !fixed.contains(id))
            .copied()
            .collect();
        let index: BTreeMap<SubmapId, usize> =
            vars.iter().enumerate().map(|(i, id)| (*id, 7 * i)).collect();
        let n = 7 * vars.len();
        let start = self.corrections();
        let mut cost = self.total_cost_with(&start);
        let mut report = SolveReport {
            evaluations: 1,
            initial_cost: cost,
            final_cost: cost,
            accepted_costs: vec![cost],
            termination: Termination::NoVariables,
            variables: vars.len(),
        };
        if n == 0 {
            return Ok(report);
        }
        let mut mu = params.initial_damping;
        let mut lin = self.linearize(&index, n);
        loop {
            if lin.g.amax() <= params.gradient_tolerance || cost == 0.0 {
                report.termination = Termination::Gradient;
                break;
            }
            if report.evaluations >= params.max_evals {
                report.termination = Termination::MaxEvaluations;
                break;
            }
            let mut damped = lin.h.clone();
            for i in 0..n {
                damped[(i, i)] += mu;
            }
            let Some(chol) = damped.cholesky() else {
                mu *= params.damping_up;
                if mu > params.max_damping {
                    for (id, c) in &start {
                        self.nodes.get_mut(id).unwrap().correction = *c;
                    }
                    return Err(GraphError::Singular(format!(
                        "{} variables, damping {mu:.1e}",
                        vars.len()
                    )));
                }
                continue;
            };
            let step = chol.solve(&(-&lin.g));
            let mut trial = self.corrections();
            for (id, &off) in &index {
                let d = Sim3Tangent::from_vector(&Vector7::from_iterator(
                    step.rows(off, 7).iter().copied(),
                ));
                let c = trial.get_mut(id).unwrap();
                *c = c.compose(&Sim3::exp(&d));
            }
            let new_cost = self.total_cost_with(&trial);
            report.evaluations += 1;
            if new_cost < cost {
                for (id, c) in &trial {
                    self.nodes.get_mut(id).unwrap().correction = *c;
                }
                let reduction = (cost - new_cost) / cost;
                cost = new_cost;
                report.accepted_costs.push(cost);
                mu = (mu * params.damping_down).max(1e-12);
                if step.norm() < params.min_step {
                    report.termination = Termination::StepSize;
                    break;
                }
                if reduction < params.min_relative_reduction {
                    report.termination = Termination::CostReduction;
                    break;
                }
                lin = self.linearize(&index, n);
            } else {
                if step.norm() < params.min_step {
                    report.termination = Termination::StepSize;
                    break;
                }
                mu *= params.damping_up;
                if mu > params.max_damping {
                    report.termination = Termination::MaxDamping;
                    break;
                }
            }
        }
        report.final_cost = cost;
        self.update_pixel_counts();
        Ok(report)
    }
}
