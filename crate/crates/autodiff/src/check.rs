//! Finite-difference verification of reverse-mode gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::params::ParamSet;

/// Outcome of a gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(parameter name, flat index)` of the worst entry.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error.is_finite() && self.max_rel_error < tol
    }
}

/// Central-difference gradient check in double precision.
#[derive(Debug, Clone)]
pub struct GradCheck {
    pub h: f64,
    /// Above this many entries a seeded random subset is checked.
    pub max_entries: usize,
    pub seed: u64,
    /// Magnitudes below this are compared absolutely.
    pub floor: f64,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self { h: 1e-5, max_entries: 10_000, seed: 0, floor: 1e-6 }
    }
}

impl GradCheck {
    /// Compares reverse-mode gradients of the scalar built by `loss` against
    /// central differences over the entries of `params`.
    pub fn run<F>(&self, params: &ParamSet<f64>, loss: F) -> Result<GradCheckReport>
    where
        F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
    {
        let mut graph = Graph::new();
        let vars = params.bind(&mut graph, true);
        let root = loss(&mut graph, &vars)?;
        let grads = graph.backward(root)?;
        let analytic: Vec<Vec<f64>> = vars
            .iter()
            .zip(0..params.len())
            .map(|(&v, i)| grads.wrt(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; params.get(i).numel()]))
            .collect();

        let eval = |p: &ParamSet<f64>| -> Result<f64> {
            let mut g = Graph::new();
            let vars = p.bind(&mut g, false);
            let root = loss(&mut g, &vars)?;
            Ok(g.value(root).item())
        };

        let total = params.numel();
        let mut flat: Vec<(usize, usize)> = Vec::with_capacity(total.min(self.max_entries));
        if total <= self.max_entries {
            for i in 0..params.len() {
                flat.extend((0..params.get(i).numel()).map(|j| (i, j)));
            }
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            let mut picks = sample(&mut rng, total, self.max_entries).into_vec();
            picks.sort_unstable();
            let mut offsets = Vec::with_capacity(params.len());
            let mut acc = 0;
            for i in 0..params.len() {
                offsets.push(acc);
                acc += params.get(i).numel();
            }
            for p in picks {
                let i = offsets.partition_point(|&o| o <= p) - 1;
                flat.push((i, p - offsets[i]));
            }
        }

        let mut work = params.clone();
        let mut report = GradCheckReport { max_rel_error: 0.0, worst: None, checked: 0 };
        for (i, j) in flat {
            let orig = work.get(i).data()[j];
            work.get_mut(i).data_mut()[j] = orig + self.h;
            let up = eval(&work)?;
            work.get_mut(i).data_mut()[j] = orig - self.h;
            let down = eval(&work)?;
            work.get_mut(i).data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * self.h);
            let a = analytic[i][j];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(self.floor);
            report.checked += 1;
            if err > report.max_rel_error || err.is_nan() {
                report.max_rel_error = if err.is_nan() { f64::INFINITY } else { err };
                report.worst = Some((params.names()[i].clone(), j));
            }
        }
        Ok(report)
    }
}
