use serde::{Deserialize, Serialize};

/// Scalar observable used to draw a diagram: one velocity component at a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservableSpec {
    pub point: [f64; 2],
    /// 0 for the horizontal, 1 for the vertical velocity component.
    pub component: usize,
}

impl Default for ObservableSpec {
    fn default() -> Self {
        Self {
            point: [15.0, 3.75],
            component: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagramRecord {
    pub mu: f64,
    pub observable: f64,
    /// Continuation pass or branch id, when known.
    pub branch: Option<usize>,
    /// 1 for deterministic records, normalised peak density otherwise.
    pub weight: f64,
    pub converged: bool,
}

/// Collection of `(parameter, branch value, weight)` records.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BifurcationDiagram {
    pub records: Vec<DiagramRecord>,
    pub observable: Option<ObservableSpec>,
}

impl BifurcationDiagram {
    pub fn new(observable: Option<ObservableSpec>) -> Self {
        Self {
            records: Vec::new(),
            observable,
        }
    }

    pub fn push(&mut self, record: DiagramRecord) {
        self.records.push(record);
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records whose parameter equals `mu` to within `tol`.
    pub fn at_mu(&self, mu: f64, tol: f64) -> impl Iterator<Item = &DiagramRecord> {
        self.records.iter().filter(move |r| (r.mu - mu).abs() <= tol)
    }

    /// Distinct parameter values in first-appearance order.
    pub fn mu_values(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for r in &self.records {
            if !out.iter().any(|m| (m - r.mu).abs() < 1e-12) {
                out.push(r.mu);
            }
        }
        out
    }
}

/// Groups sorted values into clusters separated by gaps larger than `gap`
/// (single-linkage in one dimension). Returns the cluster centres.
pub fn cluster_1d(values: &[f64], gap: f64) -> Vec<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    let mut centres = Vec::new();
    let mut start = 0;
    for i in 1..=v.len() {
        if i == v.len() || v[i] - v[i - 1] > gap {
            if i > start {
                centres.push(v[start..i].iter().sum::<f64>() / (i - start) as f64);
            }
            start = i;
        }
    }
    centres
}
