//! Operator scheduling: which mutation operator the havoc stage draws.
//!
//! Three modes share one interface. `Uniform` is plain AFL. `Empirical`
//! replays a fixed distribution estimated offline from success counts
//! (`p_k = c_k / sum c`). `Thompson` keeps a Beta posterior per operator,
//! updated with every child's outcome, and periodically replaces the
//! distribution with normalized posterior samples (`p_k = theta_k / sum theta`).

use std::fmt;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mutation::{MutationOperator, MutationRecord};

/// Tolerance on the sum of a loaded distribution file.
pub const FILE_SUM_TOLERANCE: f64 = 1e-6;

/// The operators available to a campaign: all sixteen, or fourteen when
/// there is no dictionary to feed the extra operators.
pub fn active_arms(has_dictionary: bool) -> Vec<MutationOperator> {
    MutationOperator::ALL
        .into_iter()
        .filter(|op| has_dictionary || !op.uses_dictionary())
        .collect()
}

/// A probability distribution over a fixed set of operators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(MutationOperator, f64)>", into = "Vec<(MutationOperator, f64)>")]
pub struct OperatorDistribution {
    arms: Vec<MutationOperator>,
    probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl OperatorDistribution {
    /// Builds a distribution from probabilities that already sum to one.
    pub fn new(arms: Vec<MutationOperator>, probs: Vec<f64>) -> Result<Self> {
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {sum}"
            )));
        }
        Self::validate(&arms, &probs)?;
        Ok(Self::build(arms, probs))
    }

    /// Normalizes non-negative weights into a distribution.
    pub fn from_weights(arms: Vec<MutationOperator>, weights: Vec<f64>) -> Result<Self> {
        Self::validate(&arms, &weights)?;
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidDistribution("all weights are zero".into()));
        }
        Ok(Self::build(arms, weights.iter().map(|w| w / total).collect()))
    }

    fn validate(arms: &[MutationOperator], weights: &[f64]) -> Result<()> {
        if arms.is_empty() || arms.len() != weights.len() {
            return Err(Error::InvalidDistribution(format!(
                "{} arms but {} weights",
                arms.len(),
                weights.len()
            )));
        }
        let mut sorted = arms.to_vec();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != arms.len() {
            return Err(Error::InvalidDistribution("duplicate operator".into()));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidDistribution(format!("bad weight {w}")));
        }
        Ok(())
    }

    fn build(arms: Vec<MutationOperator>, probs: Vec<f64>) -> Self {
        let cumulative = probs
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        OperatorDistribution {
            arms,
            probs,
            cumulative,
        }
    }

    pub fn uniform(arms: Vec<MutationOperator>) -> Self {
        let n = arms.len();
        Self::from_weights(arms, vec![1.0; n]).expect("uniform over a non-empty arm set")
    }

    pub fn point_mass(op: MutationOperator) -> Self {
        Self::uniform(vec![op])
    }

    pub fn arms(&self) -> &[MutationOperator] {
        &self.arms
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    /// Number of arms (the K of the bandit).
    pub fn arm_count(&self) -> usize {
        self.arms.len()
    }

    /// Probability of `op`; zero for operators outside the arm set.
    pub fn probability(&self, op: MutationOperator) -> f64 {
        self.arms
            .iter()
            .position(|&a| a == op)
            .map_or(0.0, |i| self.probs[i])
    }

    /// Probabilities indexed like [`MutationOperator::ALL`].
    pub fn full(&self) -> [f64; MutationOperator::COUNT] {
        let mut out = [0.0; MutationOperator::COUNT];
        for (op, p) in self.arms.iter().zip(&self.probs) {
            out[op.index()] = *p;
        }
        out
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> MutationOperator {
        let total = *self.cumulative.last().unwrap();
        let u = rng.random::<f64>() * total;
        let i = self.cumulative.partition_point(|&c| c <= u);
        // Rounding can leave `u` at the very top; fall back to the last
        // arm with mass.
        let i = if i < self.arms.len() {
            i
        } else {
            self.probs.iter().rposition(|&p| p > 0.0).unwrap()
        };
        self.arms[i]
    }

    /// Restricts the distribution to `arms`, renormalizing the remaining mass.
    pub fn restricted_to(&self, arms: &[MutationOperator]) -> Result<Self> {
        if arms == self.arms.as_slice() {
            return Ok(self.clone());
        }
        let weights = arms.iter().map(|&op| self.probability(op)).collect();
        Self::from_weights(arms.to_vec(), weights).map_err(|_| {
            Error::InvalidDistribution("no probability mass left on the active operators".into())
        })
    }

    /// Reads a distribution file: one `<operator> <probability>` line per
    /// operator, all sixteen present, summing to one.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let values = parse_operator_table(&text, path, |s| s.parse::<f64>().ok())?;
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > FILE_SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "{}: probabilities sum to {sum}",
                path.display()
            )));
        }
        if (sum - 1.0).abs() <= 1e-9 {
            Self::new(MutationOperator::ALL.to_vec(), values.to_vec())
        } else {
            Self::from_weights(MutationOperator::ALL.to_vec(), values.to_vec())
        }
    }

    /// Writes every operator, including those outside the arm set as zero.
    pub fn to_text(&self) -> String {
        let full = self.full();
        MutationOperator::ALL
            .iter()
            .map(|op| format!("{} {}\n", op.name(), full[op.index()]))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

impl TryFrom<Vec<(MutationOperator, f64)>> for OperatorDistribution {
    type Error = Error;

    fn try_from(pairs: Vec<(MutationOperator, f64)>) -> Result<Self> {
        let (arms, probs) = pairs.into_iter().unzip();
        Self::new(arms, probs)
    }
}

impl From<OperatorDistribution> for Vec<(MutationOperator, f64)> {
    fn from(d: OperatorDistribution) -> Self {
        d.arms.into_iter().zip(d.probs).collect()
    }
}

/// Parses `<operator> <value>` lines covering every operator exactly once.
/// Blank lines and `#` comments are ignored.
fn parse_operator_table<T: Copy + Default>(
    text: &str,
    path: &Path,
    parse: impl Fn(&str) -> Option<T>,
) -> Result<[T; MutationOperator::COUNT]> {
    let mut values = [T::default(); MutationOperator::COUNT];
    let mut seen = [false; MutationOperator::COUNT];
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let (Some(name), Some(value), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::parse(path, i + 1, "expected `<operator> <value>`"));
        };
        let op: MutationOperator = name
            .parse()
            .map_err(|_| Error::parse(path, i + 1, format!("unknown operator `{name}`")))?;
        let value =
            parse(value).ok_or_else(|| Error::parse(path, i + 1, format!("bad value `{value}`")))?;
        if std::mem::replace(&mut seen[op.index()], true) {
            return Err(Error::parse(path, i + 1, format!("duplicate operator `{name}`")));
        }
        values[op.index()] = value;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::parse(
            path,
            text.lines().count(),
            format!("missing operator `{}`", MutationOperator::ALL[missing]),
        ));
    }
    Ok(values)
}

/// Maximum-likelihood distribution from success counts, `c_k / sum c`.
/// With `smoothing`, one is added to every count first.
pub fn empirical_distribution(counts: &[u64], smoothing: bool) -> Result<Vec<f64>> {
    let add = if smoothing { 1 } else { 0 };
    let total: u64 = counts.iter().map(|c| c + add).sum();
    if total == 0 {
        return Err(Error::InsufficientTrainingData);
    }
    Ok(counts
        .iter()
        .map(|&c| (c + add) as f64 / total as f64)
        .collect())
}

/// Per-operator success counts (`c_k`), as exported after a training run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorCounts(pub [u64; MutationOperator::COUNT]);

impl OperatorCounts {
    pub fn get(&self, op: MutationOperator) -> u64 {
        self.0[op.index()]
    }

    pub fn add(&mut self, op: MutationOperator, n: u64) {
        self.0[op.index()] += n;
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    /// A count file with no successes cannot seed an empirical distribution.
    pub fn is_usable(&self) -> bool {
        self.total() > 0
    }

    pub fn merge(&mut self, other: &OperatorCounts) {
        for (a, b) in self.0.iter_mut().zip(other.0) {
            *a += b;
        }
    }

    pub fn to_distribution(&self, smoothing: bool) -> Result<OperatorDistribution> {
        let probs = empirical_distribution(&self.0, smoothing)?;
        OperatorDistribution::from_weights(MutationOperator::ALL.to_vec(), probs)
    }

    pub fn to_text(&self) -> String {
        MutationOperator::ALL
            .iter()
            .map(|op| format!("{} {}\n", op.name(), self.get(*op)))
            .collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_operator_table(&text, path, |s| s.parse::<u64>().ok()).map(OperatorCounts)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Beta prior shared by every arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPrior {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for BetaPrior {
    fn default() -> Self {
        BetaPrior {
            alpha: 1.0,
            beta: 1000.0,
        }
    }
}

impl BetaPrior {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(alpha) || !ok(beta) {
            return Err(Error::Config(format!(
                "prior parameters must be positive, got ({alpha}, {beta})"
            )));
        }
        Ok(BetaPrior { alpha, beta })
    }
}

impl std::str::FromStr for BetaPrior {
    type Err = Error;

    /// Parses `A,B`.
    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once(',')
            .ok_or_else(|| Error::Config(format!("prior `{s}` is not `A,B`")))?;
        let num = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad prior value `{v}`")))
        };
        BetaPrior::new(num(a)?, num(b)?)
    }
}

/// Posterior state of one operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmPosterior {
    pub alpha0: f64,
    pub beta0: f64,
    /// Children this operator helped produce that found a new path.
    pub n_success: u64,
    pub n_failure: u64,
}

impl ArmPosterior {
    pub fn new(prior: BetaPrior) -> Self {
        ArmPosterior {
            alpha0: prior.alpha,
            beta0: prior.beta,
            n_success: 0,
            n_failure: 0,
        }
    }

    /// Shape parameters of the Beta posterior.
    pub fn posterior(&self) -> (f64, f64) {
        posterior_of(self)
    }

    pub fn mean(&self) -> f64 {
        let (a, b) = self.posterior();
        a / (a + b)
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (a, b) = self.posterior();
        let beta = Beta::new(a, b).expect("posterior parameters are positive");
        beta.sample(rng).max(f64::MIN_POSITIVE)
    }
}

/// `(alpha0 + n_success, beta0 + n_failure)`.
pub fn posterior_of(arm: &ArmPosterior) -> (f64, f64) {
    (
        arm.alpha0 + arm.n_success as f64,
        arm.beta0 + arm.n_failure as f64,
    )
}

/// One posterior per active operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSet {
    arms: Vec<MutationOperator>,
    posteriors: Vec<ArmPosterior>,
}

impl ArmSet {
    pub fn new(arms: Vec<MutationOperator>, prior: BetaPrior) -> Self {
        let posteriors = vec![ArmPosterior::new(prior); arms.len()];
        ArmSet { arms, posteriors }
    }

    pub fn arms(&self) -> &[MutationOperator] {
        &self.arms
    }

    pub fn get(&self, op: MutationOperator) -> Option<&ArmPosterior> {
        self.arms
            .iter()
            .position(|&a| a == op)
            .map(|i| &self.posteriors[i])
    }

    pub fn get_mut(&mut self, op: MutationOperator) -> Option<&mut ArmPosterior> {
        self.arms
            .iter()
            .position(|&a| a == op)
            .map(move |i| &mut self.posteriors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (MutationOperator, &ArmPosterior)> {
        self.arms.iter().copied().zip(&self.posteriors)
    }

    /// Credits every step of `record`. An operator used `m` times in one
    /// stack gets `m` increments.
    pub fn update_counts(&mut self, record: &MutationRecord, success: bool) {
        for op in record.operators() {
            if let Some(arm) = self.get_mut(op) {
                if success {
                    arm.n_success += 1;
                } else {
                    arm.n_failure += 1;
                }
            }
        }
    }

    /// Sum of all success and failure counts.
    pub fn total_observations(&self) -> u64 {
        self.posteriors
            .iter()
            .map(|p| p.n_success + p.n_failure)
            .sum()
    }

    /// Draws `theta_k` from every posterior and normalizes.
    pub fn resample_distribution<R: Rng + ?Sized>(&self, rng: &mut R) -> OperatorDistribution {
        let thetas = self.posteriors.iter().map(|p| p.draw(rng)).collect();
        OperatorDistribution::from_weights(self.arms.clone(), thetas)
            .expect("posterior draws are positive")
    }
}

/// How often the Thompson distribution is redrawn: whichever limit is hit
/// first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefreshCadence {
    pub secs: Option<f64>,
    pub execs: Option<u64>,
}

impl Default for RefreshCadence {
    fn default() -> Self {
        RefreshCadence {
            secs: Some(600.0),
            execs: Some(100_000),
        }
    }
}

impl RefreshCadence {
    pub fn due(&self, execs_since: u64, secs_since: f64) -> bool {
        self.execs.is_some_and(|e| execs_since >= e) || self.secs.is_some_and(|s| secs_since >= s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedulerKind {
    Uniform,
    Empirical,
    Thompson,
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchedulerKind::Uniform => "uniform",
            SchedulerKind::Empirical => "empirical",
            SchedulerKind::Thompson => "thompson",
        })
    }
}

/// Supplies the current operator distribution and absorbs feedback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scheduler {
    kind: SchedulerKind,
    current: OperatorDistribution,
    thompson: Option<ArmSet>,
    cadence: RefreshCadence,
    last_refresh_execs: u64,
    last_refresh_secs: f64,
    refreshes: u64,
}

impl Scheduler {
    pub fn uniform(arms: Vec<MutationOperator>) -> Self {
        Self::with(SchedulerKind::Uniform, OperatorDistribution::uniform(arms), None)
    }

    /// Fixed distribution, restricted to `arms`.
    pub fn empirical(arms: Vec<MutationOperator>, dist: Option<&OperatorDistribution>) -> Result<Self> {
        let dist = dist.ok_or_else(|| {
            Error::Config("empirical strategy needs a distribution file".into())
        })?;
        let current = dist.restricted_to(&arms)?;
        Ok(Self::with(SchedulerKind::Empirical, current, None))
    }

    /// Starts uniform; the first posterior draw replaces it at the first
    /// refresh.
    pub fn thompson(arms: Vec<MutationOperator>, prior: BetaPrior, cadence: RefreshCadence) -> Self {
        let mut s = Self::with(
            SchedulerKind::Thompson,
            OperatorDistribution::uniform(arms.clone()),
            Some(ArmSet::new(arms, prior)),
        );
        s.cadence = cadence;
        s
    }

    fn with(kind: SchedulerKind, current: OperatorDistribution, thompson: Option<ArmSet>) -> Self {
        Scheduler {
            kind,
            current,
            thompson,
            cadence: RefreshCadence::default(),
            last_refresh_execs: 0,
            last_refresh_secs: 0.0,
            refreshes: 0,
        }
    }

    pub fn kind(&self) -> SchedulerKind {
        self.kind
    }

    pub fn current_distribution(&self) -> &OperatorDistribution {
        &self.current
    }

    pub fn arm_set(&self) -> Option<&ArmSet> {
        self.thompson.as_ref()
    }

    pub fn refreshes(&self) -> u64 {
        self.refreshes
    }

    /// Feeds back one executed havoc child. Only the Thompson mode learns.
    pub fn observe(&mut self, record: &MutationRecord, success: bool) {
        if let Some(arms) = &mut self.thompson {
            arms.update_counts(record, success);
        }
    }

    /// Redraws the Thompson distribution if the cadence has elapsed.
    /// Returns whether a refresh happened.
    pub fn maybe_refresh<R: Rng + ?Sized>(&mut self, execs: u64, secs: f64, rng: &mut R) -> bool {
        let Some(arms) = &self.thompson else {
            return false;
        };
        if !self
            .cadence
            .due(execs - self.last_refresh_execs, secs - self.last_refresh_secs)
        {
            return false;
        }
        self.current = arms.resample_distribution(rng);
        self.last_refresh_execs = execs;
        self.last_refresh_secs = secs;
        self.refreshes += 1;
        true
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::mutation::MutationStep;
    use MutationOperator::*;

    fn record(ops: &[MutationOperator]) -> MutationRecord {
        MutationRecord {
            steps: ops
                .iter()
                .map(|&op| MutationStep {
                    op,
                    site: 0,
                    applied: true,
                })
                .collect(),
        }
    }

    fn all_arms() -> Vec<MutationOperator> {
        MutationOperator::ALL.to_vec()
    }

    fn assert_valid(d: &OperatorDistribution) {
        let sum: f64 = d.probabilities().iter().sum();
        assert!((sum - 1.0).abs() <= 1e-9, "sum {sum}");
        assert!(d.probabilities().iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn empirical_examples() {
        assert_eq!(empirical_distribution(&[2, 1, 1], false).unwrap(), [0.5, 0.25, 0.25]);
        assert_eq!(empirical_distribution(&[5, 0, 0], false).unwrap(), [1.0, 0.0, 0.0]);
        assert_eq!(
            empirical_distribution(&[5, 0, 0], true).unwrap(),
            [6.0 / 8.0, 1.0 / 8.0, 1.0 / 8.0]
        );
        let uniform = empirical_distribution(&[1; 16], false).unwrap();
        assert!(uniform.iter().all(|&p| p == 1.0 / 16.0));
        assert!(matches!(
            empirical_distribution(&[0, 0, 0], false),
            Err(Error::InsufficientTrainingData)
        ));
    }

    #[test]
    fn posterior_examples() {
        let prior = BetaPrior::default();
        let mut arm = ArmPosterior::new(prior);
        assert_eq!(posterior_of(&arm), (1.0, 1000.0));
        arm.n_success = 3;
        arm.n_failure = 97;
        assert_eq!(posterior_of(&arm), (4.0, 1097.0));
        let mut arm = ArmPosterior::new(BetaPrior::new(2.0, 5.0).unwrap());
        arm.n_failure = 1;
        assert_eq!(arm.posterior(), (2.0, 6.0));
    }

    #[test]
    fn prior_validation() {
        assert!(BetaPrior::new(0.0, 1.0).is_err());
        assert!(BetaPrior::new(1.0, f64::NAN).is_err());
        assert_eq!("1,1000".parse::<BetaPrior>().unwrap(), BetaPrior::default());
        assert!("1;1000".parse::<BetaPrior>().is_err());
    }

    #[test]
    fn update_counts_examples() {
        let mut arms = ArmSet::new(all_arms(), BetaPrior::default());
        arms.update_counts(&record(&[BitFlip, Delete, Delete, Clone]), true);
        assert_eq!(arms.get(BitFlip).unwrap().n_success, 1);
        assert_eq!(arms.get(Delete).unwrap().n_success, 2);
        assert_eq!(arms.get(Clone).unwrap().n_success, 1);
        assert_eq!(arms.get(AddByte).unwrap().n_success, 0);
        assert_eq!(arms.total_observations(), 4);

        let mut failed = ArmSet::new(all_arms(), BetaPrior::default());
        failed.update_counts(&record(&[BitFlip, Delete, Delete, Clone]), false);
        let failures: u64 = failed.iter().map(|(_, p)| p.n_failure).sum();
        assert_eq!(failures, 4);
        for (op, p) in failed.iter() {
            let s = arms.get(op).unwrap();
            assert_eq!(p.n_failure, s.n_success);
            assert_eq!(p.n_success, s.n_failure);
        }
    }

    #[test]
    fn resample_is_a_valid_distribution() {
        let arms = ArmSet::new(all_arms(), BetaPrior::default());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let d = arms.resample_distribution(&mut rng);
            assert_valid(&d);
            assert!(d.probabilities().iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }

    #[test]
    fn dominant_arm_takes_most_mass() {
        let mut arms = ArmSet::new(all_arms(), BetaPrior::default());
        arms.get_mut(Clone).unwrap().n_success = 1_000_000;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mean: f64 = (0..1000)
            .map(|_| arms.resample_distribution(&mut rng).probability(Clone))
            .sum::<f64>()
            / 1000.0;
        assert!(mean > 0.9, "mean {mean}");
    }

    #[test]
    fn exchangeable_arms_get_equal_mass() {
        let mut arms = ArmSet::new(vec![BitFlip, Delete], BetaPrior::new(3.0, 50.0).unwrap());
        for op in [BitFlip, Delete] {
            let p = arms.get_mut(op).unwrap();
            p.n_success = 5;
            p.n_failure = 40;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 20_000;
        let mean: f64 = (0..n)
            .map(|_| arms.resample_distribution(&mut rng).probability(BitFlip))
            .sum::<f64>()
            / n as f64;
        // Standard deviation of one draw is below 0.2, so the mean's
        // standard error is below 0.0015.
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn distribution_sampling_follows_probabilities() {
        let d = OperatorDistribution::new(vec![BitFlip, Delete, Clone], vec![0.5, 0.0, 0.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut hits = [0usize; 3];
        for _ in 0..10_000 {
            match d.sample(&mut rng) {
                BitFlip => hits[0] += 1,
                Delete => hits[1] += 1,
                Clone => hits[2] += 1,
                _ => unreachable!(),
            }
        }
        assert_eq!(hits[1], 0);
        assert!((hits[0] as i64 - 5000).abs() < 300);
    }

    #[test]
    fn distribution_validation() {
        assert!(OperatorDistribution::new(vec![BitFlip], vec![0.5]).is_err());
        assert!(OperatorDistribution::from_weights(vec![BitFlip, BitFlip], vec![1.0, 1.0]).is_err());
        assert!(OperatorDistribution::from_weights(vec![BitFlip], vec![-1.0]).is_err());
        assert!(OperatorDistribution::from_weights(vec![BitFlip, Clone], vec![0.0, 0.0]).is_err());
        assert!(OperatorDistribution::from_weights(vec![], vec![]).is_err());
    }

    #[test]
    fn masked_arms_renormalize() {
        let arms = active_arms(false);
        assert_eq!(arms.len(), 14);
        assert!(!arms.contains(&ExtraInsert));
        let d = Scheduler::uniform(arms.clone());
        assert_eq!(d.current_distribution().arm_count(), 14);

        let mut w = vec![1.0; 16];
        w[ExtraInsert.index()] = 2.0;
        let full = OperatorDistribution::from_weights(all_arms(), w).unwrap();
        let restricted = full.restricted_to(&arms).unwrap();
        assert_valid(&restricted);
        assert!((restricted.probability(BitFlip) - 1.0 / 14.0).abs() < 1e-12);

        let only_extras = OperatorDistribution::point_mass(ExtraOverwrite);
        assert!(only_extras.restricted_to(&arms).is_err());
    }

    #[test]
    fn current_distribution_by_mode() {
        let uniform = Scheduler::uniform(all_arms());
        assert!(uniform
            .current_distribution()
            .probabilities()
            .iter()
            .all(|&p| p == 0.0625));

        let mut probs = vec![0.5 / 14.0; 16];
        probs[0] = 0.25;
        probs[1] = 0.25;
        let file = OperatorDistribution::new(all_arms(), probs.clone()).unwrap();
        let emp = Scheduler::empirical(all_arms(), Some(&file)).unwrap();
        assert_eq!(emp.current_distribution().probabilities(), &probs[..]);
        assert!(Scheduler::empirical(all_arms(), None).is_err());

        let t = Scheduler::thompson(all_arms(), BetaPrior::default(), RefreshCadence::default());
        assert_eq!(
            t.current_distribution(),
            &OperatorDistribution::uniform(all_arms())
        );
    }

    #[test]
    fn thompson_refresh_cadence() {
        let cadence = RefreshCadence {
            secs: None,
            execs: Some(100),
        };
        let mut s = Scheduler::thompson(all_arms(), BetaPrior::default(), cadence);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(!s.maybe_refresh(99, 1e9, &mut rng));
        assert!(s.maybe_refresh(100, 0.0, &mut rng));
        assert!(!s.maybe_refresh(150, 0.0, &mut rng));
        assert!(s.maybe_refresh(200, 0.0, &mut rng));
        assert_eq!(s.refreshes(), 2);

        let by_time = RefreshCadence {
            secs: Some(10.0),
            execs: None,
        };
        assert!(by_time.due(0, 10.0));
        assert!(!by_time.due(1 << 40, 9.9));

        let mut u = Scheduler::uniform(all_arms());
        assert!(!u.maybe_refresh(1 << 30, 1e9, &mut rng));
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut counts = OperatorCounts::default();
        counts.add(ExtraInsert, 6);
        counts.add(Clone, 2);
        let path = dir.path().join("counts");
        counts.save(&path).unwrap();
        assert_eq!(OperatorCounts::load(&path).unwrap(), counts);

        let dist = counts.to_distribution(false).unwrap();
        assert_eq!(dist.probability(ExtraInsert), 0.75);
        let dpath = dir.path().join("dist");
        dist.save(&dpath).unwrap();
        let loaded = OperatorDistribution::load(&dpath).unwrap();
        assert_valid(&loaded);
        assert_eq!(loaded.full(), dist.full());

        let mut merged = counts;
        merged.merge(&counts);
        assert_eq!(merged.get(ExtraInsert), 12);
        assert!(!OperatorCounts::default().is_usable());
    }

    #[test]
    fn loader_rejects_bad_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d");
        let write = |s: &str| fs::write(&path, s).unwrap();

        let mut lines: Vec<String> = MutationOperator::ALL
            .iter()
            .map(|o| format!("{} 0.0625", o.name()))
            .collect();
        write(&lines.join("\n"));
        assert!(OperatorDistribution::load(&path).is_ok());

        lines[0] = "bit_flip 0.5".into();
        write(&lines.join("\n"));
        assert!(matches!(
            OperatorDistribution::load(&path),
            Err(Error::InvalidDistribution(_))
        ));

        write(&lines[1..].join("\n"));
        assert!(matches!(OperatorDistribution::load(&path), Err(Error::Parse { .. })));

        lines[0] = "bit_flip 0.0625 extra".into();
        write(&lines.join("\n"));
        assert!(OperatorDistribution::load(&path).is_err());

        lines[0] = "bit_flop 0.0625".into();
        write(&lines.join("\n"));
        assert!(OperatorDistribution::load(&path).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let mut s = Scheduler::thompson(active_arms(false), BetaPrior::default(), RefreshCadence::default());
        s.observe(&record(&[BitFlip, Delete]), true);
        let json = serde_json::to_string(&s).unwrap();
        let back: Scheduler = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }
}
