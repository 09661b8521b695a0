//! Monte Carlo estimates of eps-stabilizer volumes inside GL2(R).
//!
//! Exact stabilizers of a figure are measure-zero subsets of GL2, so the
//! estimator works with the eps-thickened set `{g : d_H(g.f, f) <= eps}` and
//! reads the codimension off the scaling of its volume: inside a ball the
//! hit fraction behaves like `eps^codim`, so the least-squares slope of
//! `log(fraction)` against `log(eps)` recovers `4 - dim(stabilizer)`.
//!
//! Distances are computed between the `n` boundary samples of one figure and
//! the exact point set of the other, in both directions. This keeps the
//! continuous shapes continuous: a rotated circle is at distance ~1e-16 from
//! itself rather than at the spacing of its samples.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::figures::{Figure, DEFAULT_SAMPLES};
use crate::group::{chunk_lengths, draw_from_ball, sample_chunk, stream_rng, BallSpec, Gl2};

/// Minimum hits for an eps grid point to enter the codimension fit.
pub const MIN_FIT_HITS: u64 = 20;

/// Smallest sample count accepted by [`stabilizer_fraction`].
pub const MIN_COUNT: usize = 10_000;

pub const DEFAULT_EPS_GRID: [f64; 4] = [0.2, 0.1, 0.05, 0.025];
pub const DEFAULT_COUNT: usize = 1_000_000;

/// A subset of GL2 whose eps-thickening is measured.
pub trait StabilizerTarget: Sync {
    fn id(&self) -> &str;

    /// Distance-like gap of `g` from the set. Once the running value exceeds
    /// `cap` the implementation may stop early and return any value above
    /// `cap`.
    fn gap(&self, g: &Gl2, cap: f64) -> f64;
}

/// The eps-stabilizer of a figure.
#[derive(Debug, Clone)]
pub struct FigureTarget {
    id: String,
    figure: Figure,
    samples: Vec<[f64; 2]>,
}

impl FigureTarget {
    pub fn new(id: &str, figure: Figure, n: usize) -> Self {
        let samples = figure.sample_points(n);
        Self { id: id.to_string(), figure, samples }
    }

    pub fn figure(&self) -> &Figure {
        &self.figure
    }
}

impl StabilizerTarget for FigureTarget {
    fn id(&self) -> &str {
        &self.id
    }

    fn gap(&self, g: &Gl2, cap: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for &s in &self.samples {
            worst = worst.max(self.figure.distance_to(g.apply(s)));
            if worst > cap {
                return worst;
            }
        }
        let image = self.figure.transformed(g);
        for &s in &self.samples {
            worst = worst.max(image.distance_to(s));
            if worst > cap {
                return worst;
            }
        }
        worst
    }
}

/// The affine hyperplane `{g : g[row][col] = value}`; codimension 1, used to
/// calibrate the estimator.
#[derive(Debug, Clone)]
pub struct EntryHyperplane {
    pub id: String,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

impl EntryHyperplane {
    pub fn new(id: &str, row: usize, col: usize, value: f64) -> Self {
        Self { id: id.to_string(), row, col, value }
    }
}

impl StabilizerTarget for EntryHyperplane {
    fn id(&self) -> &str {
        &self.id
    }

    fn gap(&self, g: &Gl2, _cap: f64) -> f64 {
        (g.entries()[self.row][self.col] - self.value).abs()
    }
}

/// Gap between `g.f` and `f`: the larger of the two directed distances
/// between the `n`-point sample of one figure and the exact other figure.
pub fn stabilizer_gap(g: &Gl2, f: &Figure, n: usize) -> f64 {
    FigureTarget::new("", f.clone(), n).gap(g, f64::INFINITY)
}

/// Whether `g` moves `f` by at most `eps` in Hausdorff distance.
pub fn is_stabilizer(g: &Gl2, f: &Figure, eps: f64) -> bool {
    FigureTarget::new("", f.clone(), DEFAULT_SAMPLES).gap(g, eps) <= eps
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabEstimate {
    pub figure_id: String,
    pub eps_grid: Vec<f64>,
    pub hits: Vec<u64>,
    pub sample_count: usize,
    pub hit_fraction: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Grid points with at least [`MIN_FIT_HITS`] hits.
    pub usable: Vec<bool>,
    pub codim_fit: f64,
    pub codim_stderr: f64,
    pub seed: u64,
}

pub fn binomial_stderr(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Hit counts per threshold over the ball's sample sequence. `thresholds`
/// must be sorted in decreasing order. Chunks are independent RNG streams and
/// the counts are integers, so the result does not depend on scheduling.
fn count_hits(targets: &[&dyn StabilizerTarget], ball: &BallSpec, thresholds: &[f64], count: usize) -> Vec<Vec<u64>> {
    let cap = thresholds[0];
    let lens: Vec<usize> = chunk_lengths(count).collect();
    lens.par_iter()
        .enumerate()
        .map(|(k, &len)| {
            let mut hits = vec![vec![0u64; thresholds.len()]; targets.len()];
            for g in sample_chunk(ball, k, len) {
                for (t, target) in targets.iter().enumerate() {
                    let gap = target.gap(&g, cap);
                    for (e, &eps) in thresholds.iter().enumerate() {
                        if gap > eps {
                            break;
                        }
                        hits[t][e] += 1;
                    }
                }
            }
            hits
        })
        .reduce(
            || vec![vec![0u64; thresholds.len()]; targets.len()],
            |mut a, b| {
                for (ra, rb) in a.iter_mut().zip(b) {
                    for (x, y) in ra.iter_mut().zip(rb) {
                        *x += y;
                    }
                }
                a
            },
        )
}

/// Ordinary least-squares slope and its standard error.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    if xs.len() <= 2 {
        return (slope, 0.0);
    }
    let intercept = my - slope * mx;
    let ssr: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    (slope, (ssr / (n - 2.0) / sxx).sqrt())
}

pub fn stabilizer_fraction(
    target: &dyn StabilizerTarget,
    ball: &BallSpec,
    eps_grid: &[f64],
    count: usize,
) -> Result<StabEstimate> {
    if count < MIN_COUNT {
        return Err(Error::InvalidInput(format!("sample count must be at least {MIN_COUNT}, got {count}")));
    }
    if eps_grid.is_empty() || eps_grid.iter().any(|&e| !(e > 0.0)) || eps_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidInput(format!("eps grid must be positive and strictly decreasing: {eps_grid:?}")));
    }
    let hits = count_hits(&[target], ball, eps_grid, count).remove(0);
    let hit_fraction: Vec<f64> = hits.iter().map(|&h| h as f64 / count as f64).collect();
    let stderr = hit_fraction.iter().map(|&p| binomial_stderr(p, count)).collect();
    let usable: Vec<bool> = hits.iter().map(|&h| h >= MIN_FIT_HITS).collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = eps_grid
        .iter()
        .zip(&hit_fraction)
        .zip(&usable)
        .filter(|(_, &u)| u)
        .map(|((&e, &p), _)| (e.ln(), p.ln()))
        .unzip();
    if xs.len() < 2 {
        return Err(Error::InsufficientHits { hits });
    }
    let (codim_fit, codim_stderr) = ols_slope(&xs, &ys);
    Ok(StabEstimate {
        figure_id: target.id().to_string(),
        eps_grid: eps_grid.to_vec(),
        hits,
        sample_count: count,
        hit_fraction,
        stderr,
        usable,
        codim_fit,
        codim_stderr,
        seed: ball.seed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureHit {
    pub figure_id: String,
    pub eps: f64,
    pub hits: u64,
    pub count: usize,
    pub fraction: f64,
    pub stderr: f64,
}

impl FeatureHit {
    /// Gap between two fractions in units of their combined standard error.
    pub fn separation(&self, other: &FeatureHit) -> f64 {
        let se = self.stderr.hypot(other.stderr);
        if se == 0.0 {
            if self.fraction == other.fraction {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.fraction - other.fraction) / se
        }
    }
}

/// Hit fractions of several figures at one eps on a shared sample stream,
/// sorted by decreasing fraction (ties broken by id).
pub fn compare_features(
    targets: &[&dyn StabilizerTarget],
    ball: &BallSpec,
    eps: f64,
    count: usize,
) -> Result<Vec<FeatureHit>> {
    if targets.len() < 2 {
        return Err(Error::InvalidInput("compare_features needs at least two figures".into()));
    }
    if !(eps > 0.0) || count == 0 {
        return Err(Error::InvalidInput(format!("need eps > 0 and count > 0, got {eps}, {count}")));
    }
    let hits = count_hits(targets, ball, &[eps], count);
    let mut out: Vec<FeatureHit> = targets
        .iter()
        .zip(hits)
        .map(|(t, h)| {
            let fraction = h[0] as f64 / count as f64;
            FeatureHit {
                figure_id: t.id().to_string(),
                eps,
                hits: h[0],
                count,
                fraction,
                stderr: binomial_stderr(fraction, count),
            }
        })
        .collect();
    out.sort_by(|a, b| b.hits.cmp(&a.hits).then_with(|| a.figure_id.cmp(&b.figure_id)));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkSpec {
    pub step_sigma: f64,
    pub eps: f64,
    pub max_steps: u64,
    pub start: BallSpec,
    pub trial_count: usize,
    pub seed: u64,
    /// Reject steps that leave the start ball, keeping the walk inside it.
    pub confine: bool,
}

impl WalkSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_sigma > 0.0) || !(self.eps > 0.0) {
            return Err(Error::InvalidInput("step_sigma and eps must be positive".into()));
        }
        if self.step_sigma >= self.eps {
            return Err(Error::InvalidInput(format!(
                "step_sigma ({}) must be smaller than eps ({})",
                self.step_sigma, self.eps
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkHits {
    pub figure_id: String,
    /// First step at which the walk stabilized the figure, per trial;
    /// `max_steps + 1` when it never did.
    pub first_hit: Vec<u64>,
}

/// Gaussian random walks over the entries of GL2. Every figure is watched on
/// the same walk realization; each trial owns its RNG streams, so results do
/// not depend on how trials are spread over workers.
pub fn random_walk_first_hit(targets: &[&dyn StabilizerTarget], spec: &WalkSpec) -> Result<Vec<WalkHits>> {
    spec.validate()?;
    let never = spec.max_steps + 1;
    let per_trial: Vec<Vec<u64>> = (0..spec.trial_count)
        .into_par_iter()
        .map(|trial| {
            let mut start_rng = stream_rng(spec.start.seed, trial as u64);
            let mut rng = stream_rng(spec.seed, trial as u64 + (1 << 32));
            let mut g = draw_from_ball(&spec.start, &mut start_rng);
            let mut first = vec![never; targets.len()];
            let mut pending = targets.len();
            let mut step = 0u64;
            loop {
                for (i, t) in targets.iter().enumerate() {
                    if first[i] == never && t.gap(&g, spec.eps) <= spec.eps {
                        first[i] = step;
                        pending -= 1;
                    }
                }
                if pending == 0 || step == spec.max_steps {
                    break;
                }
                let domain = spec.confine.then_some(&spec.start);
                g = walk_step(&g, spec.step_sigma, domain, &mut rng);
                step += 1;
            }
            first
        })
        .collect();
    Ok(targets
        .iter()
        .enumerate()
        .map(|(i, t)| WalkHits { figure_id: t.id().to_string(), first_hit: per_trial.iter().map(|f| f[i]).collect() })
        .collect())
}

fn walk_step<R: Rng>(g: &Gl2, sigma: f64, domain: Option<&BallSpec>, rng: &mut R) -> Gl2 {
    let e = g.entries();
    loop {
        let z: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let m = [[e[0][0] + sigma * z[0], e[0][1] + sigma * z[1]], [e[1][0] + sigma * z[2], e[1][1] + sigma * z[3]]];
        if let Ok(next) = Gl2::new(m) {
            if domain.is_none_or(|b| next.frobenius_distance(&b.center) <= b.radius) {
                return next;
            }
        }
    }
}

/// Trials in which `a` hit strictly before `b` (a trial where `a` never hit
/// is never a win).
pub fn paired_wins(a: &WalkHits, b: &WalkHits, max_steps: u64) -> usize {
    a.first_hit.iter().zip(&b.first_hit).filter(|&(&x, &y)| x <= max_steps && x < y).count()
}

pub fn median(values: &[u64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_unstable();
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2] as f64,
        _ => (v[n / 2 - 1] as f64 + v[n / 2] as f64) / 2.0,
    }
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

/// Rows `(figure_id, eps, hits, count, fraction, stderr)`.
pub fn write_estimates_csv<W: Write>(w: W, estimates: &[StabEstimate]) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["figure_id", "eps", "hits", "count", "fraction", "stderr"])?;
    for est in estimates {
        for i in 0..est.eps_grid.len() {
            out.write_record([
                est.figure_id.clone(),
                est.eps_grid[i].to_string(),
                est.hits[i].to_string(),
                est.sample_count.to_string(),
                est.hit_fraction[i].to_string(),
                est.stderr[i].to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Rows `(figure_id, codim_fit, codim_stderr, usable_points, seed)`.
pub fn write_fits_csv<W: Write>(w: W, estimates: &[StabEstimate]) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["figure_id", "codim_fit", "codim_stderr", "usable_points", "seed"])?;
    for est in estimates {
        out.write_record([
            est.figure_id.clone(),
            est.codim_fit.to_string(),
            est.codim_stderr.to_string(),
            est.usable.iter().filter(|&&u| u).count().to_string(),
            est.seed.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_feature_hits_csv<W: Write>(w: W, hits: &[FeatureHit]) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["figure_id", "eps", "hits", "count", "fraction", "stderr"])?;
    for h in hits {
        out.write_record([
            h.figure_id.clone(),
            h.eps.to_string(),
            h.hits.to_string(),
            h.count.to_string(),
            h.fraction.to_string(),
            h.stderr.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Rows `(figure_id, trial, first_hit_step)`.
pub fn write_walk_csv<W: Write>(w: W, walks: &[WalkHits]) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["figure_id", "trial", "first_hit_step"])?;
    for walk in walks {
        for (trial, step) in walk.first_hit.iter().enumerate() {
            out.write_record([walk.figure_id.clone(), trial.to_string(), step.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}
