//! Takagi-Sugeno fuzzy inference.
//!
//! Gaussian membership functions per input, rules encoded as per-input bit
//! vectors over the fuzzy partition (set bits = active linguistic labels,
//! multiple bits = disjunction via max, no bits = don't care) with linear
//! consequents, combined across inputs by the parameterized Schweizer-Sklar
//! T-norm and averaged by normalized firing strength.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Memberships are floored at this before entering the T-norm so 0^(-p)
/// cannot occur.
pub const MEMBERSHIP_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianMf {
    pub center: f64,
    pub width: f64,
}

impl GaussianMf {
    pub fn new(center: f64, width: f64) -> Result<GaussianMf> {
        if width <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "Gaussian MF width must be positive, got {width}"
            )));
        }
        Ok(GaussianMf { center, width })
    }

    /// exp(-(x-c)² / (2σ²)), in (0, 1], peaking at the center.
    pub fn eval(&self, x: f64) -> f64 {
        let d = x - self.center;
        (-(d * d) / (2.0 * self.width * self.width)).exp()
    }
}

/// μ(x) for a standalone MF; errors on a non-positive width.
pub fn gaussian_mf(x: f64, mf: &GaussianMf) -> Result<f64> {
    if mf.width <= 0.0 {
        return Err(Error::InvalidInput("MF width must be positive".into()));
    }
    Ok(mf.eval(x))
}

mod bits {
    //! Antecedent bit vectors serialize as 0/1 arrays.
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Vec<bool>], s: S) -> Result<S::Ok, S::Error> {
        let raw: Vec<Vec<u8>> = v
            .iter()
            .map(|row| row.iter().map(|&b| b as u8).collect())
            .collect();
        raw.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<bool>>, D::Error> {
        let raw: Vec<Vec<u8>> = Vec::deserialize(d)?;
        Ok(raw
            .into_iter()
            .map(|row| row.into_iter().map(|b| b != 0).collect())
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzyRule {
    /// One bit vector per input, one bit per fuzzy set of that input.
    #[serde(with = "bits")]
    pub antecedent: Vec<Vec<bool>>,
    /// Linear consequent coefficients, one per input.
    pub coeffs: Vec<f64>,
    pub bias: f64,
}

impl FuzzyRule {
    pub fn has_premise(&self) -> bool {
        self.antecedent.iter().any(|v| v.iter().any(|&b| b))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsModel {
    /// Per-input fuzzy partitions.
    pub partitions: Vec<Vec<GaussianMf>>,
    pub rules: Vec<FuzzyRule>,
    pub tnorm_p: f64,
}

impl TsModel {
    pub fn num_inputs(&self) -> usize {
        self.partitions.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.rules.is_empty() {
            return Err(Error::InvalidInput("model has no rules".into()));
        }
        if self.tnorm_p <= 0.0 {
            return Err(Error::InvalidInput("T-norm parameter must be > 0".into()));
        }
        for rule in &self.rules {
            if rule.antecedent.len() != self.num_inputs()
                || rule.coeffs.len() != self.num_inputs()
            {
                return Err(Error::DimensionMismatch(
                    "rule arity != number of inputs".into(),
                ));
            }
            for (bitvec, part) in rule.antecedent.iter().zip(&self.partitions) {
                if bitvec.len() != part.len() {
                    return Err(Error::DimensionMismatch(
                        "antecedent bit vector != partition size".into(),
                    ));
                }
            }
            if !rule.has_premise() {
                return Err(Error::InvalidInput(
                    "rule has no antecedent bit set on any input".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Schweizer-Sklar T-norm: T(a,b,p) = [max{0, a^-p + b^-p - 1}]^(-1/p);
/// zero arguments map to 0 (the limit convention).
pub fn tnorm_ss(a: f64, b: f64, p: f64) -> Result<f64> {
    if p <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "T-norm parameter must be > 0, got {p}"
        )));
    }
    Ok(tnorm_ss_unchecked(a, b, p))
}

pub(crate) fn tnorm_ss_unchecked(a: f64, b: f64, p: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        return 0.0;
    }
    let s = a.powf(-p) + b.powf(-p) - 1.0;
    if s <= 0.0 {
        // unreachable for a,b in (0,1]; kept for the max{0,·} contract
        return 0.0;
    }
    s.powf(-1.0 / p)
}

/// Per-input membership of a rule: max over set-bit MFs, 1 for don't-care
/// inputs, floored at `MEMBERSHIP_FLOOR`. Returns `None` for don't-care.
fn input_membership(rule: &FuzzyRule, input: usize, x: f64, model: &TsModel) -> Option<f64> {
    let bitvec = &rule.antecedent[input];
    let mut best: Option<f64> = None;
    for (s, &bit) in bitvec.iter().enumerate() {
        if bit {
            let mu = model.partitions[input][s].eval(x);
            best = Some(best.map_or(mu, |b: f64| b.max(mu)));
        }
    }
    best.map(|v| v.max(MEMBERSHIP_FLOOR))
}

/// Degree to which the rule's antecedent matches `x`: per-input memberships
/// left-folded through the Schweizer-Sklar T-norm.
pub fn firing_strength(rule: &FuzzyRule, x: &[f64], model: &TsModel) -> f64 {
    let mut acc: Option<f64> = None;
    for (i, &xi) in x.iter().enumerate() {
        if let Some(v) = input_membership(rule, i, xi, model) {
            acc = Some(match acc {
                None => v,
                Some(a) => tnorm_ss_unchecked(a, v, model.tnorm_p),
            });
        }
    }
    acc.unwrap_or(1.0)
}

/// Sugeno output: firing-strength-weighted average of the rules' linear
/// consequents.
pub fn infer(model: &TsModel, x: &[f64]) -> Result<f64> {
    if x.len() != model.num_inputs() {
        return Err(Error::DimensionMismatch(format!(
            "input has {} components, model expects {}",
            x.len(),
            model.num_inputs()
        )));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for rule in &model.rules {
        let w = firing_strength(rule, x, model);
        let f: f64 = rule.bias + rule.coeffs.iter().zip(x).map(|(c, xi)| c * xi).sum::<f64>();
        num += w * f;
        den += w;
    }
    if den <= 0.0 {
        return Err(Error::Numeric(format!(
            "all rule strengths underflowed to zero at input {x:?}"
        )));
    }
    Ok(num / den)
}

/// One rule per cell of the full MF grid: evenly spaced Gaussian centers per
/// input with width = spacing/2, zero-initialized consequents, p = 1.
pub fn grid_partition(
    num_inputs: usize,
    mfs_per_input: usize,
    input_ranges: &[(f64, f64)],
) -> Result<TsModel> {
    if num_inputs == 0 || mfs_per_input == 0 {
        return Err(Error::InvalidInput(
            "need at least one input and one MF per input".into(),
        ));
    }
    if input_ranges.len() != num_inputs {
        return Err(Error::DimensionMismatch(format!(
            "{} ranges for {} inputs",
            input_ranges.len(),
            num_inputs
        )));
    }
    let mut partitions = Vec::with_capacity(num_inputs);
    for &(lo, hi) in input_ranges {
        let span = hi - lo;
        let mfs: Vec<GaussianMf> = if mfs_per_input == 1 {
            vec![GaussianMf {
                center: (lo + hi) / 2.0,
                width: (span / 2.0).max(0.5),
            }]
        } else {
            let spacing = span / (mfs_per_input - 1) as f64;
            let width = (spacing / 2.0).max(1e-3);
            (0..mfs_per_input)
                .map(|k| GaussianMf {
                    center: lo + spacing * k as f64,
                    width,
                })
                .collect()
        };
        partitions.push(mfs);
    }
    // odometer over grid cells, first input most significant
    let rule_count = mfs_per_input.pow(num_inputs as u32);
    let mut rules = Vec::with_capacity(rule_count);
    let mut digits = vec![0usize; num_inputs];
    for _ in 0..rule_count {
        let antecedent: Vec<Vec<bool>> = digits
            .iter()
            .map(|&d| (0..mfs_per_input).map(|s| s == d).collect())
            .collect();
        rules.push(FuzzyRule {
            antecedent,
            coeffs: vec![0.0; num_inputs],
            bias: 0.0,
        });
        for d in digits.iter_mut().rev() {
            *d += 1;
            if *d < mfs_per_input {
                break;
            }
            *d = 0;
        }
    }
    Ok(TsModel {
        partitions,
        rules,
        tnorm_p: 1.0,
    })
}

/// Total share of the output mass a rule claims over a dataset:
/// Σ_k normalized-firing-strength(rule, x_k).
pub fn rule_strength(model: &TsModel, rule_idx: usize, data: &[Vec<f64>]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidInput("empty dataset".into()));
    }
    if rule_idx >= model.rules.len() {
        return Err(Error::InvalidInput(format!(
            "rule index {rule_idx} out of {}",
            model.rules.len()
        )));
    }
    let mut total = 0.0;
    for x in data {
        let ws: Vec<f64> = model
            .rules
            .iter()
            .map(|r| firing_strength(r, x, model))
            .collect();
        let den: f64 = ws.iter().sum();
        if den > 0.0 {
            total += ws[rule_idx] / den;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_input_model(mfs: Vec<GaussianMf>, rules: Vec<FuzzyRule>, p: f64) -> TsModel {
        TsModel {
            partitions: vec![mfs],
            rules,
            tnorm_p: p,
        }
    }

    #[test]
    fn gaussian_peak_and_width_point() {
        let mf = GaussianMf::new(0.3, 0.2).unwrap();
        assert_eq!(gaussian_mf(0.3, &mf).unwrap(), 1.0);
        let v = gaussian_mf(0.5, &mf).unwrap();
        assert!((v - (-0.5f64).exp()).abs() < 1e-12);
        assert!((v - 0.60653).abs() < 1e-5);
    }

    #[test]
    fn gaussian_symmetric() {
        let mf = GaussianMf::new(1.0, 0.4).unwrap();
        for d in [0.1, 0.5, 2.0] {
            assert!((mf.eval(1.0 + d) - mf.eval(1.0 - d)).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_bad_width_errors() {
        assert!(GaussianMf::new(0.0, 0.0).is_err());
        assert!(gaussian_mf(0.0, &GaussianMf { center: 0.0, width: -1.0 }).is_err());
    }

    #[test]
    fn tnorm_identity_element() {
        for a in [0.1, 0.4, 0.9, 1.0] {
            for p in [0.01, 1.0, 5.0, 50.0] {
                assert!((tnorm_ss(a, 1.0, p).unwrap() - a).abs() < 1e-9, "a={a} p={p}");
            }
        }
    }

    #[test]
    fn tnorm_direct_substitution() {
        assert!((tnorm_ss(0.5, 0.5, 1.0).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn tnorm_limit_behaviour() {
        assert!((tnorm_ss(0.4, 0.7, 0.001).unwrap() - 0.28).abs() < 5e-3);
        assert!((tnorm_ss(0.4, 0.7, 200.0).unwrap() - 0.4).abs() < 5e-3);
    }

    #[test]
    fn tnorm_zero_and_bad_p() {
        assert_eq!(tnorm_ss(0.0, 0.7, 1.0).unwrap(), 0.0);
        assert_eq!(tnorm_ss(0.7, 0.0, 1.0).unwrap(), 0.0);
        assert!(tnorm_ss(0.5, 0.5, 0.0).is_err());
        assert!(tnorm_ss(0.5, 0.5, -1.0).is_err());
    }

    #[test]
    fn tnorm_commutative_and_bounded_by_min() {
        for &a in &[0.1, 0.3, 0.6, 1.0] {
            for &b in &[0.2, 0.5, 0.9] {
                for &p in &[0.01, 0.5, 2.0, 20.0] {
                    let t1 = tnorm_ss(a, b, p).unwrap();
                    let t2 = tnorm_ss(b, a, p).unwrap();
                    assert!((t1 - t2).abs() < 1e-12);
                    assert!(t1 <= a.min(b) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn firing_strength_at_selected_center() {
        let model = single_input_model(
            vec![GaussianMf::new(0.0, 0.5).unwrap(), GaussianMf::new(1.0, 0.5).unwrap()],
            vec![FuzzyRule {
                antecedent: vec![vec![true, false]],
                coeffs: vec![0.0],
                bias: 0.0,
            }],
            1.0,
        );
        assert_eq!(firing_strength(&model.rules[0], &[0.0], &model), 1.0);
    }

    #[test]
    fn firing_strength_dont_care_is_one() {
        let model = single_input_model(
            vec![GaussianMf::new(0.0, 0.5).unwrap()],
            vec![FuzzyRule {
                antecedent: vec![vec![false]],
                coeffs: vec![0.0],
                bias: 0.0,
            }],
            1.0,
        );
        for x in [-3.0, 0.0, 7.0] {
            assert_eq!(firing_strength(&model.rules[0], &[x], &model), 1.0);
        }
    }

    #[test]
    fn firing_strength_two_inputs_through_tnorm() {
        // both inputs give membership 0.5 at the test point, p = 1 → 1/3
        let sigma = 0.5;
        let offset = sigma * (2.0 * (2.0f64).ln()).sqrt(); // μ(c+offset) = 0.5
        let model = TsModel {
            partitions: vec![
                vec![GaussianMf::new(0.0, sigma).unwrap()],
                vec![GaussianMf::new(0.0, sigma).unwrap()],
            ],
            rules: vec![FuzzyRule {
                antecedent: vec![vec![true], vec![true]],
                coeffs: vec![0.0, 0.0],
                bias: 0.0,
            }],
            tnorm_p: 1.0,
        };
        let w = firing_strength(&model.rules[0], &[offset, offset], &model);
        assert!((w - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn multi_bit_input_uses_max() {
        let model = single_input_model(
            vec![GaussianMf::new(0.0, 0.5).unwrap(), GaussianMf::new(1.0, 0.5).unwrap()],
            vec![FuzzyRule {
                antecedent: vec![vec![true, true]],
                coeffs: vec![0.0],
                bias: 0.0,
            }],
            1.0,
        );
        // at x=1 the second MF peaks; disjunction should give 1
        assert_eq!(firing_strength(&model.rules[0], &[1.0], &model), 1.0);
    }

    #[test]
    fn infer_single_rule_is_its_consequent() {
        let model = single_input_model(
            vec![GaussianMf::new(0.0, 0.5).unwrap()],
            vec![FuzzyRule {
                antecedent: vec![vec![true]],
                coeffs: vec![2.0],
                bias: 1.0,
            }],
            1.0,
        );
        for x in [-1.0, 0.0, 0.7, 3.0] {
            assert!((infer(&model, &[x]).unwrap() - (2.0 * x + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn infer_equal_strengths_average() {
        let model = single_input_model(
            vec![GaussianMf::new(0.0, 0.5).unwrap()],
            vec![
                FuzzyRule {
                    antecedent: vec![vec![true]],
                    coeffs: vec![0.0],
                    bias: 1.0,
                },
                FuzzyRule {
                    antecedent: vec![vec![true]],
                    coeffs: vec![0.0],
                    bias: 3.0,
                },
            ],
            1.0,
        );
        assert!((infer(&model, &[0.4]).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn infer_matches_hand_weighted_average() {
        let model = single_input_model(
            vec![GaussianMf::new(0.0, 0.3).unwrap(), GaussianMf::new(1.0, 0.3).unwrap()],
            vec![
                FuzzyRule {
                    antecedent: vec![vec![true, false]],
                    coeffs: vec![1.5],
                    bias: 0.2,
                },
                FuzzyRule {
                    antecedent: vec![vec![false, true]],
                    coeffs: vec![-0.5],
                    bias: 1.0,
                },
            ],
            2.5,
        );
        let x = 0.35;
        let w1 = model.partitions[0][0].eval(x);
        let w2 = model.partitions[0][1].eval(x);
        let expect = (w1 * (1.5 * x + 0.2) + w2 * (-0.5 * x + 1.0)) / (w1 + w2);
        assert!((infer(&model, &[x]).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn infer_is_convex_combination_of_consequents() {
        let model = single_input_model(
            vec![GaussianMf::new(0.0, 0.3).unwrap(), GaussianMf::new(1.0, 0.3).unwrap()],
            vec![
                FuzzyRule {
                    antecedent: vec![vec![true, false]],
                    coeffs: vec![1.0],
                    bias: 0.0,
                },
                FuzzyRule {
                    antecedent: vec![vec![false, true]],
                    coeffs: vec![-2.0],
                    bias: 0.5,
                },
            ],
            1.0,
        );
        for &x in &[0.0, 0.25, 0.5, 0.75, 1.0] {
            let f1 = 1.0 * x;
            let f2 = -2.0 * x + 0.5;
            let y = infer(&model, &[x]).unwrap();
            assert!(y >= f1.min(f2) - 1e-12 && y <= f1.max(f2) + 1e-12);
        }
    }

    #[test]
    fn grid_partition_rule_counts() {
        assert_eq!(
            grid_partition(4, 3, &[(0.0, 1.0); 4]).unwrap().rules.len(),
            81
        );
        assert_eq!(
            grid_partition(2, 2, &[(0.0, 1.0); 2]).unwrap().rules.len(),
            4
        );
    }

    #[test]
    fn grid_partition_centers_even() {
        let m = grid_partition(1, 3, &[(0.0, 2.0)]).unwrap();
        let centers: Vec<f64> = m.partitions[0].iter().map(|g| g.center).collect();
        assert_eq!(centers, vec![0.0, 1.0, 2.0]);
        assert_eq!(m.rules.len(), 3);
        assert!(m.validate().is_ok());
    }

    #[test]
    fn grid_rules_select_one_mf_each() {
        let m = grid_partition(2, 3, &[(0.0, 1.0); 2]).unwrap();
        for rule in &m.rules {
            for bitvec in &rule.antecedent {
                assert_eq!(bitvec.iter().filter(|&&b| b).count(), 1);
            }
        }
    }

    #[test]
    fn rule_strength_single_rule_equals_dataset_size() {
        let model = single_input_model(
            vec![GaussianMf::new(0.5, 0.2).unwrap()],
            vec![FuzzyRule {
                antecedent: vec![vec![true]],
                coeffs: vec![0.0],
                bias: 0.0,
            }],
            1.0,
        );
        let data: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64 / 7.0]).collect();
        assert!((rule_strength(&model, 0, &data).unwrap() - 7.0).abs() < 1e-9);
    }

    #[test]
    fn rule_strengths_sum_to_dataset_size() {
        let model = grid_partition(2, 3, &[(0.0, 1.0); 2]).unwrap();
        let data: Vec<Vec<f64>> = (0..10)
            .map(|i| vec![i as f64 / 9.0, (9 - i) as f64 / 9.0])
            .collect();
        let total: f64 = (0..model.rules.len())
            .map(|i| rule_strength(&model, i, &data).unwrap())
            .sum();
        assert!((total - data.len() as f64).abs() < 1e-6);
    }

    #[test]
    fn symmetric_rules_on_mirrored_data_have_equal_strength() {
        let model = grid_partition(1, 2, &[(0.0, 1.0)]).unwrap();
        let data: Vec<Vec<f64>> = vec![vec![0.2], vec![0.8], vec![0.35], vec![0.65]];
        let s0 = rule_strength(&model, 0, &data).unwrap();
        let s1 = rule_strength(&model, 1, &data).unwrap();
        assert!((s0 - s1).abs() < 1e-9);
    }

    #[test]
    fn model_json_roundtrip_bits_as_01() {
        let m = grid_partition(2, 2, &[(0.0, 1.0); 2]).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("[[1,0],[1,0]]"), "json: {json}");
        let back: TsModel = serde_json::from_str(&json).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn validate_rejects_empty_premise() {
        let model = single_input_model(
            vec![GaussianMf::new(0.0, 0.5).unwrap()],
            vec![FuzzyRule {
                antecedent: vec![vec![false]],
                coeffs: vec![0.0],
                bias: 0.0,
            }],
            1.0,
        );
        assert!(model.validate().is_err());
    }
}
