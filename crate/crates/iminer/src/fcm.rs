//! Fuzzy c-means clustering.
//!
//! Minimizes J = Σ_i Σ_j u_ij^m ||c_i - x_j||² by alternating the closed-form
//! membership and center updates until the objective stops moving.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// c × n membership grid; every column sums to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipMatrix {
    pub u: Vec<Vec<f64>>,
}

impl MembershipMatrix {
    pub fn clusters(&self) -> usize {
        self.u.len()
    }

    pub fn points(&self) -> usize {
        self.u.first().map_or(0, |row| row.len())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub fuzzifier: f64,
    pub centers: Vec<Vec<f64>>,
    pub objective: f64,
    #[serde(skip)]
    pub memberships: MembershipMatrix,
}

impl Default for MembershipMatrix {
    fn default() -> Self {
        MembershipMatrix { u: Vec::new() }
    }
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn pow_m(x: f64, m: f64) -> f64 {
    if m == 2.0 {
        x * x
    } else {
        x.powf(m)
    }
}

fn check_dims(centers: &[Vec<f64>], data: &[Vec<f64>]) -> Result<()> {
    let dim = data
        .first()
        .map(|x| x.len())
        .ok_or_else(|| Error::InvalidInput("empty data".into()))?;
    if data.iter().any(|x| x.len() != dim) || centers.iter().any(|c| c.len() != dim) {
        return Err(Error::DimensionMismatch(
            "points and centers must share one dimension".into(),
        ));
    }
    Ok(())
}

/// The clustering objective J for a given membership matrix and centers.
pub fn fcm_objective(
    u: &MembershipMatrix,
    centers: &[Vec<f64>],
    data: &[Vec<f64>],
    m: f64,
) -> Result<f64> {
    check_dims(centers, data)?;
    if u.clusters() != centers.len() || u.points() != data.len() {
        return Err(Error::DimensionMismatch(format!(
            "membership matrix is {}x{}, expected {}x{}",
            u.clusters(),
            u.points(),
            centers.len(),
            data.len()
        )));
    }
    if m <= 1.0 {
        return Err(Error::InvalidInput("fuzzifier m must be > 1".into()));
    }
    let mut j = 0.0;
    for (i, center) in centers.iter().enumerate() {
        for (jx, x) in data.iter().enumerate() {
            j += pow_m(u.u[i][jx], m) * dist_sq(center, x);
        }
    }
    Ok(j)
}

/// Closed-form membership update. A point coincident with exactly one center
/// gets crisp membership there; coincidence with several identical centers is
/// a degenerate-center error.
pub fn update_memberships(
    centers: &[Vec<f64>],
    data: &[Vec<f64>],
    m: f64,
) -> Result<MembershipMatrix> {
    check_dims(centers, data)?;
    if m <= 1.0 {
        return Err(Error::InvalidInput("fuzzifier m must be > 1".into()));
    }
    let c = centers.len();
    let exp = 1.0 / (m - 1.0);
    let mut u = vec![vec![0.0; data.len()]; c];
    for (j, x) in data.iter().enumerate() {
        let d2: Vec<f64> = centers.iter().map(|ct| dist_sq(ct, x)).collect();
        let zero: Vec<usize> = (0..c).filter(|&i| d2[i] == 0.0).collect();
        match zero.len() {
            0 => {
                // u_ij = (1/d²_ij)^{1/(m-1)} / Σ_k (1/d²_kj)^{1/(m-1)}
                let w: Vec<f64> = d2.iter().map(|&d| (1.0 / d).powf(exp)).collect();
                let total: f64 = w.iter().sum();
                for i in 0..c {
                    u[i][j] = w[i] / total;
                }
            }
            1 => u[zero[0]][j] = 1.0,
            _ => {
                return Err(Error::DegenerateCenters(format!(
                    "point {j} coincides with {} identical centers",
                    zero.len()
                )))
            }
        }
    }
    Ok(MembershipMatrix { u })
}

/// u^m-weighted mean of the data per cluster.
pub fn update_centers(
    u: &MembershipMatrix,
    data: &[Vec<f64>],
    m: f64,
) -> Result<Vec<Vec<f64>>> {
    let dim = data
        .first()
        .map(|x| x.len())
        .ok_or_else(|| Error::InvalidInput("empty data".into()))?;
    let mut centers = Vec::with_capacity(u.clusters());
    for row in &u.u {
        if row.len() != data.len() {
            return Err(Error::DimensionMismatch(
                "membership row length != point count".into(),
            ));
        }
        let mut num = vec![0.0; dim];
        let mut den = 0.0;
        for (x, &uij) in data.iter().zip(row) {
            let w = pow_m(uij, m);
            den += w;
            for (nk, xk) in num.iter_mut().zip(x) {
                *nk += w * xk;
            }
        }
        if den <= 0.0 {
            return Err(Error::Numeric("zero-mass membership row".into()));
        }
        centers.push(num.into_iter().map(|v| v / den).collect());
    }
    Ok(centers)
}

/// Alternate membership/center updates from the given initial centers until
/// |ΔJ| < tol or `max_iter` passes.
pub fn fcm_run(
    data: &[Vec<f64>],
    init_centers: &[Vec<f64>],
    m: f64,
    tol: f64,
    max_iter: usize,
) -> Result<ClusterModel> {
    if init_centers.len() < 2 {
        return Err(Error::InvalidInput("need at least 2 initial centers".into()));
    }
    if data.len() < init_centers.len() {
        return Err(Error::InvalidInput(format!(
            "{} points for {} clusters",
            data.len(),
            init_centers.len()
        )));
    }
    for (i, a) in init_centers.iter().enumerate() {
        for b in &init_centers[i + 1..] {
            if a == b {
                return Err(Error::DegenerateCenters(
                    "initial centers are not distinct".into(),
                ));
            }
        }
    }
    let mut centers = init_centers.to_vec();
    let mut memberships = MembershipMatrix::default();
    let mut prev_j = f64::MAX;
    let mut j = f64::INFINITY;
    for _ in 0..max_iter.max(1) {
        memberships = update_memberships(&centers, data, m)?;
        centers = update_centers(&memberships, data, m)?;
        j = fcm_objective(&memberships, &centers, data, m)?;
        if (prev_j - j).abs() < tol {
            break;
        }
        prev_j = j;
    }
    Ok(ClusterModel {
        fuzzifier: m,
        centers,
        objective: j,
        memberships,
    })
}

/// Crisp argmax-membership assignment; ties go to the lowest cluster index.
pub fn assign(model: &ClusterModel, point: &[f64]) -> usize {
    let u = update_memberships(&model.centers, std::slice::from_ref(&point.to_vec()), model.fuzzifier);
    match u {
        Ok(u) => {
            let mut best = 0;
            for i in 1..u.clusters() {
                if u.u[i][0] > u.u[best][0] {
                    best = i;
                }
            }
            best
        }
        // identical centers: any of them is equally good, take the first
        Err(_) => {
            let mut best = 0;
            let mut bd = f64::INFINITY;
            for (i, c) in model.centers.iter().enumerate() {
                let d = dist_sq(c, point);
                if d < bd {
                    bd = d;
                    best = i;
                }
            }
            best
        }
    }
}

/// Memberships as CSV (one row per cluster).
pub fn memberships_to_csv(u: &MembershipMatrix, path: &std::path::Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(Error::Csv)?;
    for row in &u.u {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()
        .map_err(|e| Error::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn col_sums_to_one(u: &MembershipMatrix) {
        for j in 0..u.points() {
            let s: f64 = u.u.iter().map(|row| row[j]).sum();
            assert!((s - 1.0).abs() < 1e-9, "column {j} sums to {s}");
        }
    }

    #[test]
    fn objective_zero_for_crisp_coincident() {
        let data = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let centers = data.clone();
        let u = MembershipMatrix {
            u: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        };
        assert_eq!(fcm_objective(&u, &centers, &data, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn objective_single_term() {
        let data = vec![vec![0.0]];
        let centers = vec![vec![2.0]];
        let u = MembershipMatrix { u: vec![vec![1.0]] };
        assert_eq!(fcm_objective(&u, &centers, &data, 2.0).unwrap(), 4.0);
    }

    #[test]
    fn objective_matches_naive_double_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let data: Vec<Vec<f64>> = (0..12)
            .map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let centers: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        // random column-stochastic memberships
        let mut u = vec![vec![0.0; 12]; 3];
        for j in 0..12 {
            let raw: Vec<f64> = (0..3).map(|_| rng.gen_range(0.01..1.0)).collect();
            let s: f64 = raw.iter().sum();
            for i in 0..3 {
                u[i][j] = raw[i] / s;
            }
        }
        let u = MembershipMatrix { u };
        let m = 2.0;
        let mut naive = 0.0;
        for i in 0..3 {
            for j in 0..12 {
                let mut d2 = 0.0;
                for k in 0..3 {
                    d2 += (centers[i][k] - data[j][k]).powi(2);
                }
                naive += u.u[i][j].powf(m) * d2;
            }
        }
        let got = fcm_objective(&u, &centers, &data, m).unwrap();
        assert!((got - naive).abs() < 1e-12);
    }

    #[test]
    fn memberships_symmetric_point() {
        let data = vec![vec![0.5]];
        let centers = vec![vec![0.0], vec![1.0]];
        let u = update_memberships(&centers, &data, 2.0).unwrap();
        assert!((u.u[0][0] - 0.5).abs() < 1e-12);
        assert!((u.u[1][0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn memberships_crisp_at_center() {
        let data = vec![vec![1.0], vec![0.3]];
        let centers = vec![vec![1.0], vec![0.0]];
        let u = update_memberships(&centers, &data, 2.0).unwrap();
        assert_eq!(u.u[0][0], 1.0);
        assert_eq!(u.u[1][0], 0.0);
        col_sums_to_one(&u);
    }

    #[test]
    fn memberships_match_closed_form() {
        let data: Vec<Vec<f64>> = [0.0, 1.0, 9.0, 10.0].iter().map(|&x| vec![x]).collect();
        let centers = vec![vec![1.0], vec![9.0]];
        let m = 2.0;
        let u = update_memberships(&centers, &data, m).unwrap();
        // direct formula: u_ij = 1 / Σ_k (d_ij/d_kj)^{2/(m-1)}
        for (j, x) in data.iter().enumerate() {
            for i in 0..2 {
                let dij = (centers[i][0] - x[0]).abs();
                if dij == 0.0 {
                    continue;
                }
                let mut s = 0.0;
                for k in 0..2 {
                    let dkj = (centers[k][0] - x[0]).abs();
                    s += (dij / dkj).powf(2.0 / (m - 1.0));
                }
                assert!((u.u[i][j] - 1.0 / s).abs() < 1e-12);
            }
        }
        col_sums_to_one(&u);
    }

    #[test]
    fn coincident_with_two_identical_centers_errors() {
        let data = vec![vec![1.0], vec![2.0]];
        let centers = vec![vec![1.0], vec![1.0]];
        assert!(matches!(
            update_memberships(&centers, &data, 2.0),
            Err(Error::DegenerateCenters(_))
        ));
    }

    #[test]
    fn centers_from_crisp_memberships_are_means() {
        let data = vec![vec![0.0], vec![2.0], vec![10.0]];
        let u = MembershipMatrix {
            u: vec![vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
        };
        let c = update_centers(&u, &data, 2.0).unwrap();
        assert_eq!(c, vec![vec![1.0], vec![10.0]]);
    }

    #[test]
    fn centers_uniform_memberships_give_global_mean() {
        let data = vec![vec![1.0, 0.0], vec![3.0, 4.0]];
        let u = MembershipMatrix {
            u: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
        };
        let c = update_centers(&u, &data, 2.0).unwrap();
        for center in c {
            assert!((center[0] - 2.0).abs() < 1e-12);
            assert!((center[1] - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn centers_match_weighted_mean_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..2).map(|_| rng.gen_range(-5.0..5.0)).collect())
            .collect();
        let mut u = vec![vec![0.0; 8]; 2];
        for j in 0..8 {
            let a = rng.gen_range(0.05..0.95);
            u[0][j] = a;
            u[1][j] = 1.0 - a;
        }
        let u = MembershipMatrix { u };
        let got = update_centers(&u, &data, 2.0).unwrap();
        for i in 0..2 {
            for k in 0..2 {
                let num: f64 = (0..8).map(|j| u.u[i][j].powi(2) * data[j][k]).sum();
                let den: f64 = (0..8).map(|j| u.u[i][j].powi(2)).sum();
                assert!((got[i][k] - num / den).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_mass_row_errors() {
        let data = vec![vec![0.0], vec![1.0]];
        let u = MembershipMatrix {
            u: vec![vec![1.0, 1.0], vec![0.0, 0.0]],
        };
        assert!(update_centers(&u, &data, 2.0).is_err());
    }

    #[test]
    fn run_separates_two_blobs() {
        let data = vec![
            vec![0.0, 0.1],
            vec![0.1, 0.0],
            vec![0.05, 0.05],
            vec![5.0, 5.1],
            vec![5.1, 5.0],
            vec![5.05, 5.05],
        ];
        let model = fcm_run(&data, &[vec![1.0, 1.0], vec![4.0, 4.0]], 2.0, 1e-6, 300).unwrap();
        let c0 = &model.centers[0];
        let c1 = &model.centers[1];
        assert!(c0[0] < 1.0 && c0[1] < 1.0);
        assert!(c1[0] > 4.0 && c1[1] > 4.0);
    }

    #[test]
    fn run_symmetric_1d() {
        let data: Vec<Vec<f64>> = [0.0, 1.0, 9.0, 10.0].iter().map(|&x| vec![x]).collect();
        let model = fcm_run(&data, &[vec![1.0], vec![9.0]], 2.0, 1e-6, 300).unwrap();
        let (c1, c2) = (model.centers[0][0], model.centers[1][0]);
        assert!((c1 + c2 - 10.0).abs() < 1e-6, "c1={c1} c2={c2}");
        assert!(c1 > 0.0 && c1 < 1.5);
    }

    #[test]
    fn run_infinite_tol_stops_after_one_iteration() {
        let data: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let model = fcm_run(&data, &[vec![0.0], vec![4.0]], 2.0, f64::INFINITY, 300).unwrap();
        assert!(model.objective.is_finite());
        // one membership + one center update only
        let u = update_memberships(&[vec![0.0], vec![4.0]], &data, 2.0).unwrap();
        let c = update_centers(&u, &data, 2.0).unwrap();
        assert_eq!(model.centers, c);
    }

    #[test]
    fn run_deterministic_and_translation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data: Vec<Vec<f64>> = (0..15)
            .map(|_| (0..2).map(|_| rng.gen_range(0.0..4.0)).collect())
            .collect();
        let init = vec![vec![0.5, 0.5], vec![3.0, 3.0]];
        let a = fcm_run(&data, &init, 2.0, 1e-6, 300).unwrap();
        let b = fcm_run(&data, &init, 2.0, 1e-6, 300).unwrap();
        assert_eq!(a, b);

        let v = [10.0, -3.0];
        let shifted: Vec<Vec<f64>> = data
            .iter()
            .map(|x| vec![x[0] + v[0], x[1] + v[1]])
            .collect();
        let init_s = vec![vec![10.5, -2.5], vec![13.0, 0.0]];
        let s = fcm_run(&shifted, &init_s, 2.0, 1e-6, 300).unwrap();
        assert!((s.objective - a.objective).abs() < 1e-9);
        for (cs, ca) in s.centers.iter().zip(&a.centers) {
            assert!((cs[0] - ca[0] - v[0]).abs() < 1e-9);
            assert!((cs[1] - ca[1] - v[1]).abs() < 1e-9);
        }
        for (rs, ra) in s.memberships.u.iter().zip(&a.memberships.u) {
            for (us, ua) in rs.iter().zip(ra) {
                assert!((us - ua).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn objective_non_increasing_across_iterations() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..2).map(|_| rng.gen_range(0.0..1.0)).collect())
            .collect();
        let mut centers = vec![vec![0.2, 0.2], vec![0.8, 0.8], vec![0.5, 0.1]];
        let mut prev = f64::INFINITY;
        for _ in 0..40 {
            let u = update_memberships(&centers, &data, 2.0).unwrap();
            centers = update_centers(&u, &data, 2.0).unwrap();
            let j = fcm_objective(&u, &centers, &data, 2.0).unwrap();
            assert!(j <= prev + 1e-12);
            prev = j;
        }
    }

    #[test]
    fn too_few_points_errors() {
        let data = vec![vec![0.0]];
        assert!(fcm_run(&data, &[vec![0.0], vec![1.0]], 2.0, 1e-6, 10).is_err());
    }

    #[test]
    fn assign_matches_membership_argmax() {
        let data: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let model = fcm_run(&data, &[vec![2.0], vec![7.0]], 2.0, 1e-6, 300).unwrap();
        for x in &data {
            let u = update_memberships(&model.centers, std::slice::from_ref(x), 2.0).unwrap();
            let expect = if u.u[0][0] >= u.u[1][0] { 0 } else { 1 };
            assert_eq!(assign(&model, x), expect);
        }
    }

    #[test]
    fn assign_tie_breaks_low() {
        let model = ClusterModel {
            fuzzifier: 2.0,
            centers: vec![vec![0.0], vec![1.0]],
            objective: 0.0,
            memberships: MembershipMatrix::default(),
        };
        assert_eq!(assign(&model, &[0.5]), 0);
        assert_eq!(assign(&model, &[0.0]), 0);
        assert_eq!(assign(&model, &[1.0]), 1);
    }
}
