//! Finite-sum benchmark problems.
//!
//! A problem is `m` agents, each holding `n_i` components, with the global
//! objective `f(x) = (1/m) sum_i f_i(x)` and `f_i = (1/n_i) sum_j f_ij`.
//! Implementations provide analytic component gradients (validated against
//! central finite differences in the tests) and per-agent smoothness models.

mod dim_reduction;
mod quadratic_inverse;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub use dim_reduction::{generate_dim_reduction_synthetic, DimReduction};
pub use quadratic_inverse::QuadraticInverse;

use crate::error::{Error, Result};
use crate::smoothness::SmoothnessModel;

/// Which per-agent smoothness estimator a run should use. The approximate
/// estimator is the practical default; the conservative one is the direct
/// worst-case bound used when asserting the mean-squared-smoothness
/// inequality and the smoothness-ratio guard.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothnessEstimator {
    Approximate,
    Conservative,
}

/// Finite-sum problem over `m` agents.
pub trait Problem: Send + Sync {
    fn num_agents(&self) -> usize;
    /// Flattened variable dimension.
    fn dim(&self) -> usize;
    fn num_components(&self, agent: usize) -> usize;

    fn component_objective(&self, agent: usize, j: usize, x: &DVector<f64>) -> f64;

    /// Accumulate `scale * grad f_{agent,j}(x)` into `acc`.
    fn accumulate_component_gradient(
        &self,
        agent: usize,
        j: usize,
        x: &DVector<f64>,
        scale: f64,
        acc: &mut DVector<f64>,
    );

    /// Per-agent smoothness model (see [`SmoothnessEstimator`]).
    fn smoothness_model(&self, agent: usize, kind: SmoothnessEstimator) -> SmoothnessModel;

    /// Lower bound on the global infimum, used by the potential-gap bound.
    /// Both benchmarks are means of squares, so zero is always valid.
    fn f_star_estimate(&self) -> f64 {
        0.0
    }

    fn total_components(&self) -> usize {
        (0..self.num_agents()).map(|i| self.num_components(i)).sum()
    }

    fn local_objective(&self, agent: usize, x: &DVector<f64>) -> f64 {
        let n = self.num_components(agent);
        let sum: f64 = (0..n).map(|j| self.component_objective(agent, j, x)).sum();
        sum / n as f64
    }

    /// `grad f_agent(x)` written into `out`.
    fn local_gradient_into(&self, agent: usize, x: &DVector<f64>, out: &mut DVector<f64>) {
        out.fill(0.0);
        let n = self.num_components(agent);
        let w = 1.0 / n as f64;
        for j in 0..n {
            self.accumulate_component_gradient(agent, j, x, w, out);
        }
    }

    fn objective(&self, x: &DVector<f64>) -> f64 {
        let m = self.num_agents();
        let sum: f64 = (0..m).map(|i| self.local_objective(i, x)).sum();
        sum / m as f64
    }

    /// `grad f(x) = (1/m) sum_i grad f_i(x)` written into `out`.
    fn global_gradient_into(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        out.fill(0.0);
        let m = self.num_agents();
        let w = 1.0 / m as f64;
        for i in 0..m {
            let n = self.num_components(i);
            let cw = w / n as f64;
            for j in 0..n {
                self.accumulate_component_gradient(i, j, x, cw, out);
            }
        }
    }
}

/// Central-difference gradient oracle. Test-side check for every analytic
/// component gradient; never used on the optimization path.
pub fn finite_difference_gradient(
    objective: impl Fn(&DVector<f64>) -> f64,
    x: &DVector<f64>,
    h: Option<f64>,
) -> Result<DVector<f64>> {
    let h = h.unwrap_or_else(|| 1e-5 * x.norm().max(1.0));
    if !(h > 0.0) {
        return Err(Error::invalid("finite difference step must be positive"));
    }
    let mut grad = DVector::zeros(x.len());
    let mut probe = x.clone();
    for k in 0..x.len() {
        probe[k] = x[k] + h;
        let fp = objective(&probe);
        probe[k] = x[k] - h;
        let fm = objective(&probe);
        probe[k] = x[k];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite objective value in finite differences at coordinate {k}"
            )));
        }
        grad[k] = (fp - fm) / (2.0 * h);
    }
    Ok(grad)
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

/// Result of [`load_csv_dataset`]: standardized feature vectors plus the
/// count of rows skipped for unparsable or missing cells.
#[derive(Clone, Debug)]
pub struct CsvDataset {
    pub vectors: Vec<DVector<f64>>,
    pub skipped_rows: usize,
}

impl CsvDataset {
    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, |v| v.len())
    }
}

/// Load the named numeric columns from a comma-separated file with a header
/// row. Rows with missing or unparsable cells are dropped (counted in
/// `skipped_rows`); surviving columns are standardized to zero mean and unit
/// variance, with a `1e-12` variance floor that maps constant columns to
/// all-zeros.
pub fn load_csv_dataset(path: &std::path::Path, feature_columns: &[String]) -> Result<CsvDataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let mut indices = Vec::with_capacity(feature_columns.len());
    for name in feature_columns {
        let idx = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Ingestion(format!("column '{name}' not found in header")))?;
        indices.push(idx);
    }
    let d = indices.len();
    if d == 0 {
        return Err(Error::Ingestion("no feature columns selected".into()));
    }

    let mut rows: Vec<DVector<f64>> = Vec::new();
    let mut skipped = 0usize;
    for record in reader.records() {
        let record = record?;
        let mut row = DVector::zeros(d);
        let mut ok = true;
        for (k, &idx) in indices.iter().enumerate() {
            match record.get(idx).map(str::trim) {
                Some(cell) if !cell.is_empty() => match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => row[k] = v,
                    _ => {
                        ok = false;
                        break;
                    }
                },
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            rows.push(row);
        } else {
            skipped += 1;
        }
    }
    if rows.is_empty() {
        return Err(Error::Ingestion(format!(
            "no usable rows in {} ({} skipped)",
            path.display(),
            skipped
        )));
    }

    // Standardize per feature.
    let n = rows.len() as f64;
    for k in 0..d {
        let mean: f64 = rows.iter().map(|r| r[k]).sum::<f64>() / n;
        let var: f64 = rows.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / n;
        if var > 1e-12 {
            let inv = 1.0 / var.sqrt();
            for r in rows.iter_mut() {
                r[k] = (r[k] - mean) * inv;
            }
        } else {
            for r in rows.iter_mut() {
                r[k] = 0.0;
            }
        }
    }

    Ok(CsvDataset {
        vectors: rows,
        skipped_rows: skipped,
    })
}

// ---------------------------------------------------------------------------
// Declarative problem fragment
// ---------------------------------------------------------------------------

/// Problem config fragment:
/// `{type, dim, agents, n_per_agent | partition, noise_std, seed, d_prime?, csv_path?}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ProblemConfig {
    QuadraticInverse {
        dim: usize,
        agents: usize,
        n_per_agent: usize,
        noise_std: f64,
        seed: u64,
    },
    DimReductionSynthetic {
        dim: usize,
        d_prime: usize,
        partition: Vec<usize>,
        seed: u64,
    },
    DimReductionCsv {
        csv_path: String,
        feature_columns: Vec<String>,
        d_prime: usize,
        partition: Vec<usize>,
        seed: u64,
    },
}

impl ProblemConfig {
    pub fn build(&self) -> Result<Box<dyn Problem>> {
        match self {
            ProblemConfig::QuadraticInverse {
                dim,
                agents,
                n_per_agent,
                noise_std,
                seed,
            } => Ok(Box::new(QuadraticInverse::generate(
                *dim,
                *agents,
                *n_per_agent,
                *noise_std,
                *seed,
            )?)),
            ProblemConfig::DimReductionSynthetic {
                dim,
                d_prime,
                partition,
                seed,
            } => Ok(Box::new(generate_dim_reduction_synthetic(
                *dim, partition, *d_prime, *seed,
            )?)),
            ProblemConfig::DimReductionCsv {
                csv_path,
                feature_columns,
                d_prime,
                partition,
                seed,
            } => {
                let data = load_csv_dataset(std::path::Path::new(csv_path), feature_columns)?;
                DimReduction::from_records_shuffled(data.vectors, partition, *d_prime, *seed)
                    .map(|p| Box::new(p) as Box<dyn Problem>)
            }
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ProblemConfig::QuadraticInverse { .. } => "quadratic_inverse",
            ProblemConfig::DimReductionSynthetic { .. } => "dim_reduction",
            ProblemConfig::DimReductionCsv { .. } => "dim_reduction",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::io::Write;

    #[test]
    fn fd_quadratic_is_exact() {
        let x = DVector::from_vec(vec![1.0, 2.0]);
        let g = finite_difference_gradient(|v| v.norm_squared(), &x, None).unwrap();
        assert_relative_eq!(g[0], 2.0, epsilon = 1e-6);
        assert_relative_eq!(g[1], 4.0, epsilon = 1e-6);
    }

    #[test]
    fn fd_constant_is_zero() {
        let x = DVector::from_vec(vec![0.3, -0.7, 2.0]);
        let g = finite_difference_gradient(|_| 42.0, &x, None).unwrap();
        assert_eq!(g, DVector::zeros(3));
    }

    #[test]
    fn fd_cubic_matches_analytic() {
        let x = DVector::from_vec(vec![1.0]);
        let g = finite_difference_gradient(|v| v[0].powi(3), &x, None).unwrap();
        // central differences: error O(h^2 f'''), h = 1e-5
        assert_relative_eq!(g[0], 3.0, epsilon = 1e-8);
    }

    #[test]
    fn fd_rejects_non_finite() {
        let x = DVector::from_vec(vec![0.0]);
        assert!(finite_difference_gradient(|v| (1.0 / v[0]).sqrt(), &x, None).is_err());
    }

    fn write_temp_csv(content: &str) -> std::path::PathBuf {
        let mut path = std::env::temp_dir();
        path.push(format!(
            "cgtvr_test_{}_{}.csv",
            std::process::id(),
            content.len()
        ));
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        path
    }

    #[test]
    fn csv_standardizes_columns() {
        let path = write_temp_csv("a,b\n1,2\n3,4\n5,6\n");
        let data = load_csv_dataset(&path, &["a".into(), "b".into()]).unwrap();
        std::fs::remove_file(&path).ok();
        assert_eq!(data.vectors.len(), 3);
        assert_eq!(data.skipped_rows, 0);
        for k in 0..2 {
            let mean: f64 = data.vectors.iter().map(|v| v[k]).sum::<f64>() / 3.0;
            let var: f64 = data.vectors.iter().map(|v| v[k].powi(2)).sum::<f64>() / 3.0;
            assert_relative_eq!(mean, 0.0, epsilon = 1e-12);
            assert_relative_eq!(var, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn csv_skips_bad_rows() {
        let mut body = String::from("a,b\n");
        for i in 0..10 {
            if i == 4 {
                body.push_str("oops,1\n");
            } else {
                body.push_str(&format!("{i},{}\n", i * 2));
            }
        }
        let path = write_temp_csv(&body);
        let data = load_csv_dataset(&path, &["a".into(), "b".into()]).unwrap();
        std::fs::remove_file(&path).ok();
        assert_eq!(data.vectors.len(), 9);
        assert_eq!(data.skipped_rows, 1);
    }

    #[test]
    fn csv_constant_column_becomes_zero() {
        let path = write_temp_csv("a,b\n7,1\n7,2\n7,3\n");
        let data = load_csv_dataset(&path, &["a".into(), "b".into()]).unwrap();
        std::fs::remove_file(&path).ok();
        for v in &data.vectors {
            assert_eq!(v[0], 0.0);
        }
    }

    #[test]
    fn csv_errors_when_empty() {
        let path = write_temp_csv("a,b\nx,y\n");
        let err = load_csv_dataset(&path, &["a".into(), "b".into()]);
        std::fs::remove_file(&path).ok();
        assert!(matches!(err, Err(Error::Ingestion(_))));
    }
}
