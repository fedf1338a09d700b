//! Finite cue worlds for checking when thresholding the true posterior can
//! localize perfectly.
//!
//! A world assigns each cue `m` a prior `p(m)`, a posterior `p(Y=1 | m)` used
//! as its score, and a deterministic foreground label `T(m)`. Thresholding
//! follows the metrics: a cue is predicted foreground iff `score >= tau`.
//!
//! Boundary convention: when the smallest foreground posterior equals the
//! largest background posterior, no `tau` separates them under `>=`, so the
//! posterior-ratio predicate used for the equivalence check is strict
//! ([`Boundary::Strict`]). The non-strict reading is kept as
//! [`Boundary::Inclusive`] for comparison.

use serde::Serialize;

use crate::error::{Error, Result};

const PRIOR_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cue {
    pub name: String,
    pub prior: f64,
    pub posterior: f64,
    pub foreground: bool,
}

impl Cue {
    pub fn new(name: impl Into<String>, prior: f64, posterior: f64, foreground: bool) -> Self {
        Self {
            name: name.into(),
            prior,
            posterior,
            foreground,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CueWorld {
    cues: Vec<Cue>,
}

impl CueWorld {
    pub fn new(cues: Vec<Cue>) -> Result<Self> {
        if let Some(c) = cues
            .iter()
            .find(|c| !(c.prior >= 0.0 && c.prior.is_finite()) || !(0.0..=1.0).contains(&c.posterior))
        {
            return Err(Error::InvalidArgument(format!(
                "cue '{}' needs a non-negative prior and a posterior in [0, 1]",
                c.name
            )));
        }
        let total: f64 = cues.iter().map(|c| c.prior).sum();
        if (total - 1.0).abs() > PRIOR_SUM_TOLERANCE {
            return Err(Error::InvalidArgument(format!("cue priors sum to {total}, not 1")));
        }
        let has = |fg: bool| cues.iter().any(|c| c.foreground == fg && c.prior > 0.0);
        if !has(true) || !has(false) {
            return Err(Error::InvalidArgument(
                "a world needs foreground and background cues with positive prior".into(),
            ));
        }
        Ok(Self { cues })
    }

    pub fn cues(&self) -> &[Cue] {
        &self.cues
    }

    /// Cues that carry probability mass; zero-prior cues never matter.
    fn support(&self) -> impl Iterator<Item = &Cue> {
        self.cues.iter().filter(|c| c.prior > 0.0)
    }

    fn min_foreground_posterior(&self) -> f64 {
        self.support()
            .filter(|c| c.foreground)
            .map(|c| c.posterior)
            .fold(f64::INFINITY, f64::min)
    }

    fn max_background_posterior(&self) -> f64 {
        self.support()
            .filter(|c| !c.foreground)
            .map(|c| c.posterior)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Every supported cue labelled correctly by `score >= tau`.
    fn separates(&self, tau: f64) -> bool {
        self.support().all(|c| (c.posterior >= tau) == c.foreground)
    }
}

/// `P(s >= tau | T=1) P(T=1) + P(s < tau | T=0) P(T=0)` with the posterior as
/// score, i.e. the prior mass of correctly labelled cues.
pub fn px_acc(world: &CueWorld, tau: f64) -> f64 {
    world
        .cues
        .iter()
        .filter(|c| (c.posterior >= tau) == c.foreground)
        .map(|c| c.prior)
        .sum()
}

/// Decides whether some threshold labels every supported cue correctly.
///
/// The predicate only changes at posterior values, so the candidates are the
/// intervals `(-inf, v1], (v1, v2], ..., (vk, +inf)` over the sorted distinct
/// supported posteriors. Returns a witness threshold: the midpoint of the
/// separating interval when it is strictly inside, otherwise its upper end.
pub fn perfect_threshold_exists(world: &CueWorld) -> Option<f64> {
    let mut levels: Vec<f64> = world.support().map(|c| c.posterior).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();

    let mut lower = f64::NEG_INFINITY;
    for &upper in levels.iter().chain(std::iter::once(&f64::INFINITY)) {
        // Any tau in (lower, upper] selects exactly the cues scoring >= upper.
        if world.separates(upper) {
            let mid = (lower + upper) / 2.0;
            let witness = if mid.is_finite() && mid > lower && mid <= upper {
                mid
            } else {
                upper
            };
            return Some(witness);
        }
        lower = upper;
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Boundary {
    /// Every foreground posterior strictly exceeds every background one.
    #[default]
    Strict,
    /// Ratio `>= 1` read literally: ties between classes allowed.
    Inclusive,
}

/// Finite-world form of "foreground/background posterior ratio >= 1 almost
/// surely": compares the smallest supported foreground posterior with the
/// largest supported background posterior.
pub fn posterior_ratio_condition(world: &CueWorld) -> bool {
    posterior_ratio_condition_with(world, Boundary::Strict)
}

pub fn posterior_ratio_condition_with(world: &CueWorld, boundary: Boundary) -> bool {
    let (fg, bg) = (world.min_foreground_posterior(), world.max_background_posterior());
    match boundary {
        Boundary::Strict => fg > bg,
        Boundary::Inclusive => fg >= bg,
    }
}

/// Class-conditional cue likelihoods for one foreground and one background cue.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CueLikelihoods {
    pub fg_given_pos: f64,
    pub bg_given_pos: f64,
    pub fg_given_neg: f64,
    pub bg_given_neg: f64,
    /// `p(Y = 1)`
    pub positive_rate: f64,
}

/// Posterior ratio `p(Y=1 | fg) / p(Y=1 | bg)` written as the likelihood
/// ratio times the inverse cue-prior ratio, with each cue prior obtained by
/// total probability over `Y`.
pub fn posterior_ratio_from_likelihoods(l: &CueLikelihoods) -> Result<f64> {
    let all = [
        l.fg_given_pos,
        l.bg_given_pos,
        l.fg_given_neg,
        l.bg_given_neg,
        l.positive_rate,
    ];
    if all.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidArgument("probabilities must lie in [0, 1]".into()));
    }
    let neg = 1.0 - l.positive_rate;
    let p_fg = l.fg_given_pos * l.positive_rate + l.fg_given_neg * neg;
    let p_bg = l.bg_given_pos * l.positive_rate + l.bg_given_neg * neg;
    if l.bg_given_pos == 0.0 || p_fg == 0.0 || p_bg == 0.0 {
        return Err(Error::InvalidArgument("posterior ratio has a zero denominator".into()));
    }
    let likelihood_ratio = l.fg_given_pos / l.bg_given_pos;
    let prior_ratio = p_fg / p_bg;
    Ok(likelihood_ratio / prior_ratio)
}

/// Outcome of checking both predicates over every enumerated world.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub worlds: u64,
    pub disagreements: u64,
    /// Worlds where the inclusive reading disagrees with the threshold search.
    pub inclusive_disagreements: u64,
    pub first_counterexample: Option<CueWorld>,
}

/// Every world with `2..=max_cues` equally likely cues, posteriors from
/// `{1/(g+1), ..., g/(g+1)}` for `g = grid_size`, and every labelling that
/// uses both classes.
pub fn check_equivalence(max_cues: usize, grid_size: usize) -> Result<EquivalenceReport> {
    if max_cues < 2 || grid_size == 0 {
        return Err(Error::InvalidArgument(
            "need at least two cues and a non-empty posterior grid".into(),
        ));
    }
    if max_cues > 12 {
        return Err(Error::InvalidArgument(format!(
            "{max_cues} cues is too many to enumerate"
        )));
    }
    let grid: Vec<f64> = (1..=grid_size).map(|i| i as f64 / (grid_size + 1) as f64).collect();
    let mut report = EquivalenceReport::default();
    for k in 2..=max_cues {
        let prior = 1.0 / k as f64;
        let n_posteriors = (grid_size as u64).pow(k as u32);
        for code in 0..n_posteriors {
            let mut rest = code;
            let posteriors: Vec<f64> = (0..k)
                .map(|_| {
                    let p = grid[(rest % grid_size as u64) as usize];
                    rest /= grid_size as u64;
                    p
                })
                .collect();
            // Skip the all-foreground and all-background labellings.
            for labels in 1..(1u32 << k) - 1 {
                let world = CueWorld {
                    cues: posteriors
                        .iter()
                        .enumerate()
                        .map(|(i, &p)| Cue::new(format!("m{i}"), prior, p, labels >> i & 1 == 1))
                        .collect(),
                };
                let perfect = perfect_threshold_exists(&world).is_some();
                report.worlds += 1;
                if perfect != posterior_ratio_condition(&world) {
                    report.disagreements += 1;
                    report.first_counterexample.get_or_insert_with(|| world.clone());
                }
                if perfect != posterior_ratio_condition_with(&world, Boundary::Inclusive) {
                    report.inclusive_disagreements += 1;
                }
            }
        }
    }
    Ok(report)
}
