//! Genetic search over recurrent architectures.
//!
//! A genome is a stack of recurrent layer genes (cell kind, units, dropout)
//! plus optional hidden dense genes; decoding appends the scalar output
//! layer. Search runs one independent stream per ensemble slot by default,
//! each with its own generation count NI ~ U(ni_min, ni_max) and population
//! size NP ~ U(np_min, np_max) per generation. The best genome so far is
//! carried into every later population and re-evaluated, parents come from
//! roulette selection (rank-weighted when fitnesses are not all positive),
//! and offspring pass through single-point crossover and per-gene mutation.
//!
//! Fitness evaluation is a caller-supplied closure so the search can be
//! exercised with surrogate landscapes; [`train_and_score`] is the real
//! thing, training the decoded model and scoring it on a validation split
//! by negative MSE or by detection F1 when labels exist.
//!
//! The mutation schedule has two knobs beyond the base rate: a floor on the
//! effective per-gene probability (`min_mutation`) and an exponential
//! moving-average damping (`momentum`, capped by `max_momentum`) that
//! shrinks the units perturbation step from [`UNIT_STEP`] toward the floor
//! as generations pass. This is one concrete reading of those knobs, chosen
//! so early generations explore and late generations fine-tune; it is
//! configuration, not a hard contract.

use alloc::vec::Vec;

use crate::bayes::{mc_predict, BayesError};
use crate::dataset::{Segment, WindowBatch};
use crate::detect::{self, DetectError, DetectorConfig};
use crate::eval::{self, EvalError, MetricSet};
use crate::nn::{
    train, CellKind, DropoutMasks, LayerSpec, ModelOptions, NnError, RnnModel, TrainConfig,
    MAX_DROPOUT,
};
use crate::rng::SplitRng;

/// Base units-perturbation magnitude: one mutation moves a layer's width by
/// about this fraction (never less than one unit).
pub const UNIT_STEP: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LayerGene {
    pub kind: CellKind,
    pub units: usize,
    pub dropout_p: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DenseGene {
    pub units: usize,
    pub dropout_p: f64,
}

/// Searchable architecture description. The final scalar output layer is
/// not a gene; [`Genome::decode`] appends it.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Genome {
    pub recurrent: Vec<LayerGene>,
    pub dense: Vec<DenseGene>,
}

impl Genome {
    pub fn decode(&self) -> Vec<LayerSpec> {
        let mut specs = Vec::with_capacity(self.recurrent.len() + self.dense.len() + 1);
        for g in &self.recurrent {
            specs.push(LayerSpec {
                kind: g.kind,
                units: g.units,
                dropout_p: g.dropout_p,
            });
        }
        for g in &self.dense {
            specs.push(LayerSpec {
                kind: CellKind::Dense,
                units: g.units,
                dropout_p: g.dropout_p,
            });
        }
        specs.push(LayerSpec {
            kind: CellKind::Dense,
            units: 1,
            dropout_p: 0.0,
        });
        specs
    }

    pub fn build_model(
        &self,
        input_dim: usize,
        options: ModelOptions,
        rng: &mut SplitRng,
    ) -> Result<RnnModel, NnError> {
        RnnModel::new(input_dim, self.decode(), options, rng)
    }

    pub fn within_bounds(&self, cfg: &GaConfig) -> bool {
        let p_ok = |p: f64| (cfg.min_dropout..=cfg.max_dropout).contains(&p);
        let depth_ok = self.recurrent.len() >= cfg.l_min && self.recurrent.len() <= cfg.l_max;
        let rec_ok = self
            .recurrent
            .iter()
            .all(|g| g.units >= cfg.n_min && g.units <= cfg.n_max && p_ok(g.dropout_p));
        let dense_ok = self
            .dense
            .iter()
            .all(|g| g.units >= 1 && g.units <= cfg.n_max && p_ok(g.dropout_p));
        depth_ok && rec_ok && dense_ok
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GaConfig {
    /// Recurrent depth bounds, inclusive.
    pub l_min: usize,
    pub l_max: usize,
    /// Units-per-layer bounds, inclusive.
    pub n_min: usize,
    pub n_max: usize,
    /// Dropout probability bounds for drawn and mutated genes.
    pub min_dropout: f64,
    pub max_dropout: f64,
    /// Generation count bounds; the actual count is drawn per stream.
    pub ni_min: usize,
    pub ni_max: usize,
    /// Population size bounds; the actual size is drawn per generation.
    pub np_min: usize,
    pub np_max: usize,
    pub mutation_rate: f64,
    /// Floor on the effective per-gene mutation probability and on the
    /// damped units step.
    pub min_mutation: f64,
    /// EMA damping applied to the units step each generation.
    pub momentum: f64,
    pub max_momentum: f64,
    /// Ensemble slots to fill.
    pub k: usize,
    /// One shared stream returning the top-k distinct genomes instead of k
    /// independent streams.
    pub shared_pool: bool,
}

impl GaConfig {
    /// Bounds small enough to search on a laptop.
    pub fn desk() -> GaConfig {
        GaConfig {
            l_min: 2,
            l_max: 6,
            n_min: 8,
            n_max: 32,
            min_dropout: 0.0,
            max_dropout: MAX_DROPOUT,
            ni_min: 3,
            ni_max: 6,
            np_min: 4,
            np_max: 6,
            mutation_rate: 0.1,
            min_mutation: 1e-4,
            momentum: 0.1,
            max_momentum: 0.1,
            k: 2,
            shared_pool: false,
        }
    }

    /// The published experiment scale: 128 to 256 units per layer.
    pub fn full_scale() -> GaConfig {
        GaConfig {
            n_min: 128,
            n_max: 256,
            ..GaConfig::desk()
        }
    }

    pub fn validate(&self) -> Result<(), GaError> {
        if self.l_min < 1 || self.l_min > self.l_max {
            return Err(GaError::InvalidConfig("layer bounds"));
        }
        if self.n_min < 1 || self.n_min > self.n_max {
            return Err(GaError::InvalidConfig("unit bounds"));
        }
        if self.ni_min < 1 || self.ni_min > self.ni_max {
            return Err(GaError::InvalidConfig("iteration bounds"));
        }
        if self.np_min < 1 || self.np_min > self.np_max {
            return Err(GaError::InvalidConfig("population bounds"));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate)
            || !(0.0..=1.0).contains(&self.min_mutation)
            || !(0.0..=1.0).contains(&self.momentum)
            || !(0.0..=1.0).contains(&self.max_momentum)
        {
            return Err(GaError::InvalidConfig("rates must lie in [0, 1]"));
        }
        if !(0.0..=MAX_DROPOUT).contains(&self.max_dropout)
            || self.min_dropout < 0.0
            || self.min_dropout > self.max_dropout
        {
            return Err(GaError::InvalidConfig("dropout bounds"));
        }
        if self.k < 1 {
            return Err(GaError::InvalidConfig("k"));
        }
        Ok(())
    }
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig::desk()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GaError {
    #[error("invalid search config: {0}")]
    InvalidConfig(&'static str),
    #[error("search produced no usable genome")]
    InsufficientPopulation,
    #[error("f1 fitness needs labelled validation anomalies")]
    MissingLabels,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Bayes(#[from] BayesError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// What an evaluation closure reports back for one genome.
#[derive(Debug, Clone)]
pub struct Evaluation {
    /// Higher is better; non-finite values cull the genome from selection.
    pub fitness: f64,
    pub model: Option<RnnModel>,
    pub validation_mse: Option<f64>,
    pub detection: Option<MetricSet>,
}

impl Evaluation {
    pub fn of(fitness: f64) -> Evaluation {
        Evaluation {
            fitness,
            model: None,
            validation_mse: None,
            detection: None,
        }
    }

    fn diverged() -> Evaluation {
        Evaluation::of(f64::NEG_INFINITY)
    }
}

#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FitnessRecord {
    pub genome: Genome,
    pub fitness: f64,
    pub model: Option<RnnModel>,
    pub validation_mse: Option<f64>,
    pub detection: Option<MetricSet>,
}

/// One line of the run log: every evaluated genome, in evaluation order.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GenomeLogEntry {
    pub slot: usize,
    pub generation: usize,
    pub genome: Genome,
    pub fitness: f64,
}

#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GaRun {
    /// Best genome per slot (or the top-k of the shared pool), best first
    /// within each slot.
    pub winners: Vec<FitnessRecord>,
    pub log: Vec<GenomeLogEntry>,
}

fn random_kind(rng: &mut SplitRng) -> CellKind {
    match rng.uniform_usize(0, 2) {
        0 => CellKind::SimpleRnn,
        1 => CellKind::Lstm,
        _ => CellKind::Gru,
    }
}

pub fn random_genome(cfg: &GaConfig, rng: &mut SplitRng) -> Genome {
    let depth = rng.uniform_usize(cfg.l_min, cfg.l_max);
    let recurrent = (0..depth)
        .map(|_| LayerGene {
            kind: random_kind(rng),
            units: rng.uniform_usize(cfg.n_min, cfg.n_max),
            dropout_p: rng.uniform_range(cfg.min_dropout, cfg.max_dropout),
        })
        .collect();
    Genome {
        recurrent,
        dense: Vec::new(),
    }
}

/// Single-point crossover over the recurrent gene lists: one shared cut
/// position, clamped into each parent, so identical parents reproduce
/// exactly. Dense genes follow the first parent.
pub fn crossover(a: &Genome, b: &Genome, cfg: &GaConfig, rng: &mut SplitRng) -> Genome {
    let la = a.recurrent.len();
    let lb = b.recurrent.len();
    let cut = rng.uniform_usize(0, la.max(lb));
    let mut recurrent = a.recurrent[..cut.min(la)].to_vec();
    recurrent.extend_from_slice(&b.recurrent[cut.min(lb)..]);
    recurrent.truncate(cfg.l_max);
    // Unreachable for in-bound parents (the child length lies between the
    // parents' lengths); kept so the depth bound holds unconditionally.
    let mut fill = 0;
    while recurrent.len() < cfg.l_min && lb > 0 {
        recurrent.push(b.recurrent[fill % lb].clone());
        fill += 1;
    }
    Genome {
        recurrent,
        dense: a.dense.clone(),
    }
}

fn perturb_units(units: usize, frac: f64, lo: usize, hi: usize, rng: &mut SplitRng) -> usize {
    let step = (crate::math::round(units as f64 * frac) as usize).max(1);
    let next = if rng.bernoulli(0.5) {
        units + step
    } else {
        units.saturating_sub(step)
    };
    next.clamp(lo, hi)
}

fn jitter_dropout(p: f64, cfg: &GaConfig, rng: &mut SplitRng) -> f64 {
    let width = 0.25 * (cfg.max_dropout - cfg.min_dropout);
    (p + rng.uniform_range(-width, width)).clamp(cfg.min_dropout, cfg.max_dropout)
}

/// Per-gene mutation at the base units step.
pub fn mutate(g: &Genome, rate: f64, cfg: &GaConfig, rng: &mut SplitRng) -> Genome {
    mutate_with_step(g, rate, UNIT_STEP, cfg, rng)
}

/// Each gene independently mutates with probability `rate`: the cell kind
/// is resampled, units move by `unit_step` (fraction, at least one unit,
/// clamped to bounds) and dropout is jittered within [0, max_dropout].
pub fn mutate_with_step(
    g: &Genome,
    rate: f64,
    unit_step: f64,
    cfg: &GaConfig,
    rng: &mut SplitRng,
) -> Genome {
    let mut child = g.clone();
    for gene in &mut child.recurrent {
        if rng.uniform() < rate {
            gene.kind = random_kind(rng);
            gene.units = perturb_units(gene.units, unit_step, cfg.n_min, cfg.n_max, rng);
            gene.dropout_p = jitter_dropout(gene.dropout_p, cfg, rng);
        }
    }
    for gene in &mut child.dense {
        if rng.uniform() < rate {
            gene.units = perturb_units(gene.units, unit_step, 1, cfg.n_max, rng);
            gene.dropout_p = jitter_dropout(gene.dropout_p, cfg, rng);
        }
    }
    child
}

/// Roulette selection over finite-fitness parents; when any fitness is
/// zero or negative the wheel uses ranks instead of raw values.
fn select<'a>(parents: &'a [(Genome, f64)], rng: &mut SplitRng) -> &'a Genome {
    let min = parents.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        let total: f64 = parents.iter().map(|p| p.1).sum();
        let mut r = rng.uniform() * total;
        for (g, f) in parents {
            r -= *f;
            if r <= 0.0 {
                return g;
            }
        }
        &parents[parents.len() - 1].0
    } else {
        let mut idx: Vec<usize> = (0..parents.len()).collect();
        idx.sort_by(|&i, &j| parents[i].1.partial_cmp(&parents[j].1).unwrap());
        let total = (parents.len() * (parents.len() + 1) / 2) as f64;
        let mut r = rng.uniform() * total;
        for (rank, &i) in idx.iter().enumerate() {
            r -= (rank + 1) as f64;
            if r <= 0.0 {
                return &parents[i].0;
            }
        }
        &parents[idx[parents.len() - 1]].0
    }
}

/// Keeps `top` as the best `cap` distinct genomes, best first. Re-seeing a
/// genome keeps its best recorded fitness; ties keep the earlier entry.
fn offer(top: &mut Vec<FitnessRecord>, cap: usize, rec: FitnessRecord) {
    if let Some(existing) = top.iter_mut().find(|r| r.genome == rec.genome) {
        if rec.fitness > existing.fitness {
            *existing = rec;
        }
    } else {
        top.push(rec);
    }
    top.sort_by(|a, b| b.fitness.partial_cmp(&a.fitness).unwrap());
    top.truncate(cap);
}

fn run_stream<F>(
    slot: usize,
    take: usize,
    cfg: &GaConfig,
    eval: &mut F,
    rng: &mut SplitRng,
    log: &mut Vec<GenomeLogEntry>,
) -> Result<Vec<FitnessRecord>, GaError>
where
    F: FnMut(&Genome, &mut SplitRng) -> Result<Evaluation, GaError>,
{
    let generations = rng.uniform_usize(cfg.ni_min, cfg.ni_max);
    let rate = cfg.mutation_rate.max(cfg.min_mutation);
    let momentum = cfg.momentum.min(cfg.max_momentum);
    let mut unit_step = UNIT_STEP;
    let mut top: Vec<FitnessRecord> = Vec::new();
    let mut parents: Vec<(Genome, f64)> = Vec::new();

    for generation in 0..generations {
        let np = rng.uniform_usize(cfg.np_min, cfg.np_max);
        let mut population = Vec::with_capacity(np);
        if parents.is_empty() {
            for _ in 0..np {
                population.push(random_genome(cfg, rng));
            }
        } else {
            if let Some(best) = top.first() {
                population.push(best.genome.clone());
            }
            while population.len() < np {
                if population.len() == np - 1 && np >= 3 {
                    // One fresh immigrant per generation keeps exploring
                    // after selection converges.
                    population.push(random_genome(cfg, rng));
                } else {
                    let pa = select(&parents, rng);
                    let pb = select(&parents, rng);
                    let child = crossover(pa, pb, cfg, rng);
                    population.push(mutate_with_step(&child, rate, unit_step, cfg, rng));
                }
            }
        }

        let mut scored = Vec::with_capacity(population.len());
        for genome in population {
            let mut genome_rng = rng.split();
            let ev = eval(&genome, &mut genome_rng)?;
            log.push(GenomeLogEntry {
                slot,
                generation,
                genome: genome.clone(),
                fitness: ev.fitness,
            });
            if ev.fitness.is_finite() {
                scored.push((genome.clone(), ev.fitness));
                offer(
                    &mut top,
                    take,
                    FitnessRecord {
                        genome,
                        fitness: ev.fitness,
                        model: ev.model,
                        validation_mse: ev.validation_mse,
                        detection: ev.detection,
                    },
                );
            }
        }
        if !scored.is_empty() {
            parents = scored;
        }
        unit_step =
            ((1.0 - momentum) * unit_step + momentum * cfg.min_mutation).max(cfg.min_mutation);
    }

    if top.len() < take {
        return Err(GaError::InsufficientPopulation);
    }
    Ok(top)
}

/// Runs the search and returns the slot winners plus the full evaluation
/// log. Evaluation order is deterministic for a fixed seed: every genome
/// gets its own split-off RNG stream, so the schedule cannot leak in.
pub fn evolve<F>(cfg: &GaConfig, mut eval: F, rng: &mut SplitRng) -> Result<GaRun, GaError>
where
    F: FnMut(&Genome, &mut SplitRng) -> Result<Evaluation, GaError>,
{
    cfg.validate()?;
    let mut log = Vec::new();
    let mut winners = Vec::with_capacity(cfg.k);
    if cfg.shared_pool {
        let mut stream_rng = rng.split();
        winners = run_stream(0, cfg.k, cfg, &mut eval, &mut stream_rng, &mut log)?;
    } else {
        for slot in 0..cfg.k {
            let mut stream_rng = rng.split();
            let best = run_stream(slot, 1, cfg, &mut eval, &mut stream_rng, &mut log)?;
            winners.extend(best);
        }
    }
    Ok(GaRun { winners, log })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum FitnessMode {
    /// Negative validation MSE; needs no labels.
    NegMse,
    /// Detection F1 on the validation split; needs truth segments.
    F1,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FitnessConfig {
    pub mode: FitnessMode,
    pub train: TrainConfig,
    pub detector: DetectorConfig,
    /// MC dropout passes for the F1 mode's predictive band.
    pub mc_samples: usize,
    pub options: ModelOptions,
}

impl Default for FitnessConfig {
    fn default() -> Self {
        FitnessConfig {
            mode: FitnessMode::NegMse,
            train: TrainConfig::default(),
            detector: DetectorConfig::default(),
            mc_samples: 25,
            options: ModelOptions::default(),
        }
    }
}

pub struct FitnessData<'a> {
    pub train: &'a WindowBatch,
    pub validation: &'a WindowBatch,
    /// True anomaly segments indexed over the validation batch's scored
    /// points (0 .. validation.len()); required for [`FitnessMode::F1`].
    pub truth: Option<&'a [Segment]>,
}

/// Deterministic (all-units-on) forecast MSE over a window batch.
pub fn validation_mse(model: &RnnModel, windows: &WindowBatch) -> Result<f64, NnError> {
    let masks = DropoutMasks::ones(model);
    let mut sum = 0.0;
    for b in 0..windows.len() {
        let err = model.forward(windows.input(b), &masks)? - windows.target(b);
        sum += err * err;
    }
    Ok(sum / windows.len() as f64)
}

/// Detection metrics of a trained model on a labelled validation batch,
/// using the MC dropout band and the confirmation rule.
pub fn score_detection(
    model: &RnnModel,
    validation: &WindowBatch,
    truth: &[Segment],
    fcfg: &FitnessConfig,
    rng: &mut SplitRng,
) -> Result<MetricSet, GaError> {
    let dist = mc_predict(model, validation, fcfg.mc_samples, rng)?;
    let scores = detect::score(validation.targets(), &dist.mean, &dist.variance)?;
    let tent = detect::tentative(&scores, fcfg.detector.band_k);
    let segments = detect::flag(&tent, &fcfg.detector)?;
    let confusion = eval::confusion(&segments, truth, validation.len())?;
    Ok(eval::metrics(&confusion))
}

/// The real fitness function: decode, train, score on the validation
/// split. Non-finite training losses or predictions cull the genome with a
/// negative-infinity fitness instead of failing the whole search.
pub fn train_and_score(
    genome: &Genome,
    data: &FitnessData<'_>,
    fcfg: &FitnessConfig,
    rng: &mut SplitRng,
) -> Result<Evaluation, GaError> {
    let model = genome.build_model(data.train.num_features(), fcfg.options, rng)?;
    let (model, history) = train(model, data.train, &fcfg.train, rng)?;
    if history.iter().any(|l| !l.is_finite()) {
        return Ok(Evaluation::diverged());
    }
    let mse = validation_mse(&model, data.validation)?;
    if !mse.is_finite() {
        return Ok(Evaluation::diverged());
    }
    match fcfg.mode {
        FitnessMode::NegMse => Ok(Evaluation {
            fitness: -mse,
            model: Some(model),
            validation_mse: Some(mse),
            detection: None,
        }),
        FitnessMode::F1 => {
            let truth = data.truth.ok_or(GaError::MissingLabels)?;
            let mut metrics = score_detection(&model, data.validation, truth, fcfg, rng)?;
            metrics.mse = Some(mse);
            Ok(Evaluation {
                fitness: metrics.f1,
                model: Some(model),
                validation_mse: Some(mse),
                detection: Some(metrics),
            })
        }
    }
}
