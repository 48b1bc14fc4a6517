//! Evaluation harness: RMSE, Pearson correlation, polynomial trend fitting
//! and comparison-table rendering.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reference test-set RMSE of the strongest method on the daily horizon from
/// the published comparison table; used as a reporting constant only.
pub const REFERENCE_DAILY_TEST_RMSE: f64 = 0.0053;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub horizon: String,
    pub train_rmse: f64,
    pub test_rmse: f64,
    pub test_cc: f64,
    pub rules: Option<usize>,
    pub clusters: Option<usize>,
}

/// sqrt(mean squared error) between two equal-length series.
pub fn rmse(pred: &[f64], actual: &[f64]) -> Result<f64> {
    if pred.is_empty() || pred.len() != actual.len() {
        return Err(Error::DimensionMismatch(format!(
            "rmse over {} predictions vs {} actuals",
            pred.len(),
            actual.len()
        )));
    }
    let mse: f64 = pred
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a) * (p - a))
        .sum::<f64>()
        / pred.len() as f64;
    Ok(mse.sqrt())
}

/// Pearson correlation; errors on constant series (undefined).
pub fn corr_coef(pred: &[f64], actual: &[f64]) -> Result<f64> {
    if pred.len() != actual.len() || pred.len() < 2 {
        return Err(Error::DimensionMismatch(
            "correlation needs two equal-length series of >= 2 points".into(),
        ));
    }
    let n = pred.len() as f64;
    let mp = pred.iter().sum::<f64>() / n;
    let ma = actual.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vp = 0.0;
    let mut va = 0.0;
    for (p, a) in pred.iter().zip(actual) {
        cov += (p - mp) * (a - ma);
        vp += (p - mp) * (p - mp);
        va += (a - ma) * (a - ma);
    }
    if vp == 0.0 || va == 0.0 {
        return Err(Error::Numeric(
            "correlation undefined for a constant series".into(),
        ));
    }
    Ok(cov / (vp.sqrt() * va.sqrt()))
}

/// Least-squares polynomial fit over x = 1..n, rescaled internally to [-1,1]
/// for conditioning. Coefficients are in the rescaled basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyFit {
    pub degree: usize,
    /// Coefficients c_0..c_degree over the rescaled abscissa in [-1,1].
    pub coeffs: Vec<f64>,
    pub fitted: Vec<f64>,
}

/// Fit a trend polynomial (default degree 6 for the trend plots).
pub fn polyfit_trend(series: &[f64], degree: usize) -> Result<PolyFit> {
    let n = series.len();
    if n < degree + 1 {
        return Err(Error::InvalidInput(format!(
            "need at least {} points for a degree-{degree} fit, got {n}",
            degree + 1
        )));
    }
    // abscissa 1..n rescaled to [-1, 1]
    let xs: Vec<f64> = (0..n)
        .map(|i| {
            if n == 1 {
                0.0
            } else {
                2.0 * i as f64 / (n - 1) as f64 - 1.0
            }
        })
        .collect();
    let k = degree + 1;
    // normal equations A^T A c = A^T y with A_ij = x_i^j
    let mut ata = vec![vec![0.0; k]; k];
    let mut aty = vec![0.0; k];
    for (x, y) in xs.iter().zip(series) {
        let mut powers = vec![1.0; k];
        for j in 1..k {
            powers[j] = powers[j - 1] * x;
        }
        for r in 0..k {
            aty[r] += powers[r] * y;
            for c in 0..k {
                ata[r][c] += powers[r] * powers[c];
            }
        }
    }
    let coeffs = solve_linear(ata, aty)?;
    let fitted = xs
        .iter()
        .map(|&x| {
            let mut acc = 0.0;
            let mut xp = 1.0;
            for c in &coeffs {
                acc += c * xp;
                xp *= x;
            }
            acc
        })
        .collect();
    Ok(PolyFit {
        degree,
        coeffs,
        fitted,
    })
}

/// Gaussian elimination with partial pivoting.
fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if a[pivot][col].abs() < 1e-300 {
            return Err(Error::Numeric("singular normal equations".into()));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for c in col..n {
                a[row][c] -= factor * a[col][c];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for c in row + 1..n {
            acc -= a[row][c] * x[c];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

/// Render reports as a CSV comparison table, rows sorted by test RMSE
/// ascending.
pub fn compare(reports: &[EvalReport]) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::InvalidInput("no reports to compare".into()));
    }
    let mut sorted: Vec<&EvalReport> = reports.iter().collect();
    sorted.sort_by(|a, b| a.test_rmse.partial_cmp(&b.test_rmse).unwrap());
    let mut out = String::from("method,horizon,rmse_train,rmse_test,cc_test,rules,clusters\n");
    for r in sorted {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.method,
            r.horizon,
            r.train_rmse,
            r.test_rmse,
            r.test_cc,
            r.rules.map(|v| v.to_string()).unwrap_or_default(),
            r.clusters.map(|v| v.to_string()).unwrap_or_default(),
        ));
    }
    Ok(out)
}

/// Parse a comparison CSV back into reports (round-trip of [`compare`]).
pub fn parse_comparison(csv_text: &str) -> Result<Vec<EvalReport>> {
    let mut rdr = csv::Reader::from_reader(csv_text.as_bytes());
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let opt = |s: &str| -> Result<Option<usize>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse()
                    .map(Some)
                    .map_err(|_| Error::InvalidInput(format!("bad count `{s}`")))
            }
        };
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::InvalidInput(format!("bad number `{s}`")))
        };
        out.push(EvalReport {
            method: rec[0].to_string(),
            horizon: rec[1].to_string(),
            train_rmse: num(&rec[2])?,
            test_rmse: num(&rec[3])?,
            test_cc: num(&rec[4])?,
            rules: opt(&rec[5])?,
            clusters: opt(&rec[6])?,
        });
    }
    Ok(out)
}
