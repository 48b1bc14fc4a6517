//! Hierarchical evolutionary learner.
//!
//! A three-layer chromosome (cluster seeds / rule-presence bits / learning
//! parameters) evolved with linear-ranking selection, elitism, blend
//! crossover and non-uniform mutation whose step size anneals with the
//! generation count. Fitness of a chromosome is the training RMSE of the
//! full decode → cluster → re-index → build FIS → fine-tune pipeline.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fcm::{fcm_run, ClusterModel};
use crate::ingest::FeatureTable;
use crate::pipeline;
use crate::tsfis::{grid_partition, TsModel};
use crate::tune::fine_tune;

/// Allelic ranges of the layer-3 genes.
pub const LEARN_RATE_RANGE: (f64, f64) = (1e-4, 0.5);
pub const MOMENTUM_RANGE: (f64, f64) = (0.0, 0.99);
pub const TNORM_P_RANGE: (f64, f64) = (1e-3, 10.0);

/// One layer-1 slot: an activation bit plus center coordinates in the
/// (normalized) clustering feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterGene {
    pub active: bool,
    pub coords: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chromosome {
    /// Layer 1: C_max center slots.
    pub centers: Vec<CenterGene>,
    /// Layer 2: one presence bit per grid-partition rule.
    pub rule_bits: Vec<bool>,
    /// Layer 3: gradient-descent learning rate ε.
    pub learn_rate: f64,
    /// Layer 3: momentum α.
    pub momentum: f64,
    /// Layer 3: Schweizer-Sklar T-norm parameter p.
    pub tnorm_p: f64,
}

impl Chromosome {
    pub fn active_centers(&self) -> usize {
        self.centers.iter().filter(|c| c.active).count()
    }

    pub fn active_rules(&self) -> usize {
        self.rule_bits.iter().filter(|&&b| b).count()
    }

    pub fn validate(&self, bounds: &[(f64, f64)]) -> Result<()> {
        if self.active_centers() < 2 {
            return Err(Error::InvalidInput("fewer than 2 active centers".into()));
        }
        if self.active_rules() == 0 {
            return Err(Error::InvalidInput("no rule bits set".into()));
        }
        let in_range = |x: f64, (a, b): (f64, f64)| x >= a && x <= b;
        if !in_range(self.learn_rate, LEARN_RATE_RANGE)
            || !in_range(self.momentum, MOMENTUM_RANGE)
            || !in_range(self.tnorm_p, TNORM_P_RANGE)
        {
            return Err(Error::InvalidInput("layer-3 gene out of range".into()));
        }
        for c in &self.centers {
            if c.coords.len() != bounds.len() {
                return Err(Error::DimensionMismatch(
                    "center dimension != data bounds".into(),
                ));
            }
            for (x, &(lo, hi)) in c.coords.iter().zip(bounds) {
                if *x < lo || *x > hi {
                    return Err(Error::InvalidInput(
                        "center coordinate outside data bounding box".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// GA hyperparameters; the defaults are the published parameter settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub population_size: usize,
    pub max_generations: usize,
    pub mfs_per_input: usize,
    pub gd_epochs: usize,
    pub ranking_pressure: f64,
    pub elitism_fraction: f64,
    pub mutation_rate_start: f64,
    pub mutation_shape_b: f64,
    /// Layer-1 slot count (upper bound on the cluster count).
    pub c_max: usize,
    pub target_error: Option<f64>,
    pub fuzzifier: f64,
    pub fcm_tol: f64,
    pub fcm_max_iter: usize,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population_size: 30,
            max_generations: 35,
            mfs_per_input: 3,
            gd_epochs: 10,
            ranking_pressure: 0.50,
            elitism_fraction: 0.05,
            mutation_rate_start: 0.50,
            mutation_shape_b: 5.0,
            c_max: 12,
            target_error: None,
            fuzzifier: 2.0,
            fcm_tol: 1e-6,
            fcm_max_iter: 300,
            seed: 42,
        }
    }
}

impl GaConfig {
    /// Model inputs: requests, bytes, index, cluster.
    pub const NUM_INPUTS: usize = 4;

    pub fn rule_genes(&self) -> usize {
        self.mfs_per_input.pow(Self::NUM_INPUTS as u32)
    }

    pub fn elite_count(&self) -> usize {
        ((self.elitism_fraction * self.population_size as f64).ceil() as usize).max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub centers: Vec<Vec<f64>>,
    pub rule_indices: Vec<usize>,
    pub learn_rate: f64,
    pub momentum: f64,
    pub tnorm_p: f64,
}

/// Extract the phenotype: active centers, selected grid rules and the
/// layer-3 scalars.
pub fn decode(chr: &Chromosome, config: &GaConfig, bounds: &[(f64, f64)]) -> Result<Decoded> {
    chr.validate(bounds)?;
    if chr.rule_bits.len() != config.rule_genes() {
        return Err(Error::DimensionMismatch(format!(
            "{} rule bits for a {}-rule grid",
            chr.rule_bits.len(),
            config.rule_genes()
        )));
    }
    Ok(Decoded {
        centers: chr
            .centers
            .iter()
            .filter(|c| c.active)
            .map(|c| c.coords.clone())
            .collect(),
        rule_indices: chr
            .rule_bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect(),
        learn_rate: chr.learn_rate,
        momentum: chr.momentum,
        tnorm_p: chr.tnorm_p,
    })
}

/// Random population: centers uniform within the data bounds, all rule bits
/// set (full grid start), layer-3 genes uniform in their ranges.
pub fn init_population(
    config: &GaConfig,
    bounds: &[(f64, f64)],
    rng: &mut impl Rng,
) -> Vec<Chromosome> {
    (0..config.population_size)
        .map(|_| {
            let mut chr = Chromosome {
                centers: (0..config.c_max)
                    .map(|_| CenterGene {
                        active: rng.gen_bool(0.5),
                        coords: bounds.iter().map(|&(lo, hi)| rng.gen_range(lo..=hi)).collect(),
                    })
                    .collect(),
                rule_bits: vec![true; config.rule_genes()],
                learn_rate: rng.gen_range(LEARN_RATE_RANGE.0..=LEARN_RATE_RANGE.1),
                momentum: rng.gen_range(MOMENTUM_RANGE.0..=MOMENTUM_RANGE.1),
                tnorm_p: rng.gen_range(TNORM_P_RANGE.0..=TNORM_P_RANGE.1),
            };
            repair(&mut chr, rng);
            chr
        })
        .collect()
}

/// Reinstate the minimum structure: ≥ 2 active centers, ≥ 1 rule bit.
fn repair(chr: &mut Chromosome, rng: &mut impl Rng) {
    while chr.active_centers() < 2 {
        let i = rng.gen_range(0..chr.centers.len());
        chr.centers[i].active = true;
    }
    if chr.active_rules() == 0 {
        let i = rng.gen_range(0..chr.rule_bits.len());
        chr.rule_bits[i] = true;
    }
}

/// Everything the fitness pipeline produces for one chromosome.
#[derive(Debug, Clone)]
pub struct Evaluated {
    pub train_rmse: f64,
    pub cluster_model: ClusterModel,
    pub ts_model: TsModel,
    pub rule_count: usize,
    pub cluster_count: usize,
}

/// Decode and run the full pipeline on the (normalized) training table:
/// FCM from the evolved seeds, cluster re-indexing, rule-subset FIS build,
/// gradient-descent fine-tuning, training RMSE.
pub fn evaluate_chromosome(
    chr: &Chromosome,
    train: &FeatureTable,
    config: &GaConfig,
    bounds: &[(f64, f64)],
) -> Result<Evaluated> {
    let decoded = decode(chr, config, bounds)?;
    let data = pipeline::cluster_features(train);
    let cluster_model = fcm_run(
        &data,
        &decoded.centers,
        config.fuzzifier,
        config.fcm_tol,
        config.fcm_max_iter,
    )?;
    let reindexed = pipeline::assign_and_reindex(&cluster_model, train)?;
    let samples = pipeline::model_inputs(&reindexed, cluster_model.centers.len())?;

    let grid = grid_partition(
        GaConfig::NUM_INPUTS,
        config.mfs_per_input,
        &[(0.0, 1.0); GaConfig::NUM_INPUTS],
    )?;
    let ts_model = TsModel {
        partitions: grid.partitions,
        rules: decoded
            .rule_indices
            .iter()
            .map(|&i| grid.rules[i].clone())
            .collect(),
        tnorm_p: decoded.tnorm_p,
    };
    let tuned = fine_tune(
        &ts_model,
        &samples,
        decoded.learn_rate,
        decoded.momentum,
        config.gd_epochs,
    )?;
    let train_rmse = pipeline::model_rmse(&tuned, &samples)?;
    Ok(Evaluated {
        train_rmse,
        rule_count: decoded.rule_indices.len(),
        cluster_count: decoded.centers.len(),
        cluster_model,
        ts_model: tuned,
    })
}

/// Training RMSE of the decoded, fine-tuned pipeline; lower is fitter.
pub fn fitness(
    chr: &Chromosome,
    train: &FeatureTable,
    config: &GaConfig,
    bounds: &[(f64, f64)],
) -> Result<f64> {
    Ok(evaluate_chromosome(chr, train, config, bounds)?.train_rmse)
}

/// Linear-ranking selection probabilities for fitnesses sorted ascending
/// (best first), with tied fitnesses sharing the average of their ranks'
/// probabilities.
pub fn ranking_probabilities(sorted_fitnesses: &[f64], pressure: f64) -> Vec<f64> {
    let n = sorted_fitnesses.len();
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![1.0];
    }
    let s = 1.0 + pressure;
    let nf = n as f64;
    let base: Vec<f64> = (0..n)
        .map(|i| (2.0 - s) / nf + 2.0 * (s - 1.0) * (n - 1 - i) as f64 / (nf * (nf - 1.0)))
        .collect();
    // average within tie groups
    let mut probs = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && sorted_fitnesses[j] == sorted_fitnesses[i] {
            j += 1;
        }
        let mean = base[i..j].iter().sum::<f64>() / (j - i) as f64;
        for k in i..j {
            probs[k] = mean;
        }
        i = j;
    }
    probs
}

/// Sample `count` parent indices (with replacement) by linear ranking.
/// `sorted_fitnesses` must be ascending.
pub fn rank_select(
    sorted_fitnesses: &[f64],
    pressure: f64,
    count: usize,
    rng: &mut impl Rng,
) -> Vec<usize> {
    let probs = ranking_probabilities(sorted_fitnesses, pressure);
    let mut cumulative = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for p in &probs {
        acc += p;
        cumulative.push(acc);
    }
    (0..count)
        .map(|_| {
            let r = rng.gen_range(0.0..1.0);
            cumulative
                .iter()
                .position(|&c| r < c)
                .unwrap_or(probs.len() - 1)
        })
        .collect()
}

/// Non-uniform mutation of one real gene over [a, b]: the step
/// Δ(t, z) = z·(1 - γ^((1 - t/t_max)^b)) shrinks toward zero as t → t_max.
#[allow(clippy::too_many_arguments)]
pub fn mutate_gene(
    x: f64,
    a: f64,
    b: f64,
    t: usize,
    t_max: usize,
    b_shape: f64,
    gamma: f64,
    omega: bool,
) -> Result<f64> {
    if x < a || x > b {
        return Err(Error::InvalidInput(format!("gene {x} outside [{a}, {b}]")));
    }
    let frac = if t_max == 0 {
        1.0
    } else {
        (1.0 - t as f64 / t_max as f64).max(0.0)
    };
    let delta = |z: f64| z * (1.0 - gamma.powf(frac.powf(b_shape)));
    let out = if omega {
        x - delta(x - a)
    } else {
        x + delta(b - x)
    };
    Ok(out.clamp(a, b))
}

/// Blend crossover: real genes are arithmetically mixed per gene, bits are
/// uniformly exchanged; children are repaired to satisfy the chromosome
/// invariants.
pub fn crossover(
    p1: &Chromosome,
    p2: &Chromosome,
    rng: &mut impl Rng,
) -> (Chromosome, Chromosome) {
    let mut c1 = p1.clone();
    let mut c2 = p2.clone();
    for (s1, s2) in c1.centers.iter_mut().zip(c2.centers.iter_mut()) {
        if rng.gen_bool(0.5) {
            std::mem::swap(&mut s1.active, &mut s2.active);
        }
        for (g1, g2) in s1.coords.iter_mut().zip(s2.coords.iter_mut()) {
            let beta: f64 = rng.gen_range(0.0..=1.0);
            let (a, b) = (*g1, *g2);
            // written so identical parents blend to exactly themselves
            *g1 = b + beta * (a - b);
            *g2 = a + beta * (b - a);
        }
    }
    for (b1, b2) in c1.rule_bits.iter_mut().zip(c2.rule_bits.iter_mut()) {
        if rng.gen_bool(0.5) {
            std::mem::swap(b1, b2);
        }
    }
    let mut blend = |g1: &mut f64, g2: &mut f64| {
        let beta: f64 = rng.gen_range(0.0..=1.0);
        let (a, b) = (*g1, *g2);
        *g1 = b + beta * (a - b);
        *g2 = a + beta * (b - a);
    };
    blend(&mut c1.learn_rate, &mut c2.learn_rate);
    blend(&mut c1.momentum, &mut c2.momentum);
    blend(&mut c1.tnorm_p, &mut c2.tnorm_p);
    repair(&mut c1, rng);
    repair(&mut c2, rng);
    (c1, c2)
}

/// Mutate a chromosome at generation `t`. Per-gene probabilities follow the
/// starting mutation rate scaled per layer (clustering layer fastest): ×1
/// for layer 1, ×0.5 for rule bits, ×0.25 for the learning parameters.
pub fn mutate(
    chr: &Chromosome,
    t: usize,
    t_max: usize,
    config: &GaConfig,
    bounds: &[(f64, f64)],
    rng: &mut impl Rng,
) -> Result<Chromosome> {
    let mut out = chr.clone();
    let p1 = config.mutation_rate_start;
    let p2 = config.mutation_rate_start * 0.5;
    let p3 = config.mutation_rate_start * 0.25;
    let b_shape = config.mutation_shape_b;
    let real = |x: f64, (a, b): (f64, f64), rng: &mut dyn RngCore| -> Result<f64> {
        let gamma: f64 = rng.gen_range(0.0..=1.0);
        let omega = rng.gen_bool(0.5);
        mutate_gene(x, a, b, t, t_max, b_shape, gamma, omega)
    };
    for slot in &mut out.centers {
        if rng.gen_bool(p1) {
            slot.active = !slot.active;
        }
        for (coord, &range) in slot.coords.iter_mut().zip(bounds) {
            if rng.gen_bool(p1) {
                *coord = real(*coord, range, rng)?;
            }
        }
    }
    for bit in &mut out.rule_bits {
        if rng.gen_bool(p2) {
            *bit = !*bit; // flip on: new rule introduced; flip off: pruned
        }
    }
    if rng.gen_bool(p3) {
        out.learn_rate = real(out.learn_rate, LEARN_RATE_RANGE, rng)?;
    }
    if rng.gen_bool(p3) {
        out.momentum = real(out.momentum, MOMENTUM_RANGE, rng)?;
    }
    if rng.gen_bool(p3) {
        out.tnorm_p = real(out.tnorm_p, TNORM_P_RANGE, rng)?;
    }
    repair(&mut out, rng);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub train_rmse: f64,
    pub test_rmse: f64,
    pub rules: usize,
    pub clusters: usize,
}

pub type EvolutionHistory = Vec<GenerationStats>;

#[derive(Debug, Clone)]
pub struct EvolveOutcome {
    pub best: Chromosome,
    pub evaluated: Evaluated,
    pub history: EvolutionHistory,
}

struct Individual {
    chr: Chromosome,
    eval: Option<Evaluated>,
}

/// Run the generation loop: evaluate, record, select, recombine, mutate,
/// with elites copied unchanged. Stops at `max_generations` or when the best
/// fitness reaches `target_error`. Fully deterministic for a given config.
pub fn evolve(
    train: &FeatureTable,
    test: &FeatureTable,
    config: &GaConfig,
) -> Result<EvolveOutcome> {
    let bounds = pipeline::data_bounds(&pipeline::cluster_features(train));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut population: Vec<Individual> = init_population(config, &bounds, &mut rng)
        .into_iter()
        .map(|chr| Individual { chr, eval: None })
        .collect();
    let mut history = Vec::new();

    for generation in 0..config.max_generations {
        // evaluations are RNG-free, so parallel order cannot change results
        population
            .par_iter_mut()
            .filter(|ind| ind.eval.is_none())
            .try_for_each(|ind| -> Result<()> {
                ind.eval = Some(evaluate_chromosome(&ind.chr, train, config, &bounds)?);
                Ok(())
            })?;
        population.sort_by(|a, b| {
            let fa = a.eval.as_ref().unwrap().train_rmse;
            let fb = b.eval.as_ref().unwrap().train_rmse;
            fa.partial_cmp(&fb).unwrap()
        });
        let best = population[0].eval.as_ref().unwrap();
        let test_rmse = pipeline::evaluate_test_rmse(best, test)?;
        history.push(GenerationStats {
            generation,
            train_rmse: best.train_rmse,
            test_rmse,
            rules: best.rule_count,
            clusters: best.cluster_count,
        });
        if config
            .target_error
            .is_some_and(|target| best.train_rmse <= target)
        {
            break;
        }
        if generation + 1 == config.max_generations {
            break;
        }

        let fitnesses: Vec<f64> = population
            .iter()
            .map(|i| i.eval.as_ref().unwrap().train_rmse)
            .collect();
        let elite_count = config.elite_count().min(population.len());
        let old = std::mem::take(&mut population);
        let mut new_pop: Vec<Individual> = Vec::with_capacity(config.population_size);
        for elite in old.iter().take(elite_count) {
            new_pop.push(Individual {
                chr: elite.chr.clone(),
                eval: elite.eval.clone(),
            });
        }
        while new_pop.len() < config.population_size {
            let parents = rank_select(&fitnesses, config.ranking_pressure, 2, &mut rng);
            let (c1, c2) = crossover(&old[parents[0]].chr, &old[parents[1]].chr, &mut rng);
            for child in [c1, c2] {
                if new_pop.len() >= config.population_size {
                    break;
                }
                let mutated = mutate(
                    &child,
                    generation,
                    config.max_generations,
                    config,
                    &bounds,
                    &mut rng,
                )?;
                new_pop.push(Individual {
                    chr: mutated,
                    eval: None,
                });
            }
        }
        population = new_pop;
    }

    // best of the final evaluated generation
    let best = population
        .into_iter()
        .filter(|i| i.eval.is_some())
        .min_by(|a, b| {
            let fa = a.eval.as_ref().unwrap().train_rmse;
            let fb = b.eval.as_ref().unwrap().train_rmse;
            fa.partial_cmp(&fb).unwrap()
        })
        .ok_or_else(|| Error::InvalidInput("evolution produced no evaluated individual".into()))?;
    Ok(EvolveOutcome {
        evaluated: best.eval.unwrap(),
        best: best.chr,
        history,
    })
}

/// History CSV: `generation,train_rmse,test_rmse,rules,clusters`.
pub fn history_to_csv(history: &[GenerationStats]) -> String {
    let mut out = String::from("generation,train_rmse,test_rmse,rules,clusters\n");
    for h in history {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            h.generation, h.train_rmse, h.test_rmse, h.rules, h.clusters
        ));
    }
    out
}
