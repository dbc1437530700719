//! Token-to-constellation assignment minimizing expected semantic distortion.
//!
//! Containers and the objective are generic over [`Scalar`], so invariance
//! checks can run in exact rationals. Building confusion matrices and the
//! annealer need a [`Real`].

use std::io::Write;

use num_complex::Complex;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::rng::{substream, Purpose};
use crate::scalar::{q_function, Real, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SemmapError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("brute force is limited to 8 points, got {0}")]
    TooLarge(usize),
    #[error("invalid input: {0}")]
    Invalid(String),
}

/// Square row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<S> {
    n: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn from_rows(rows: Vec<Vec<S>>) -> Result<Self, SemmapError> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(SemmapError::Dimension("matrix must be square and non-empty".into()));
        }
        Ok(Self { n, data: rows.into_iter().flatten().collect() })
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> S) -> Self {
        Self { n, data: (0..n * n).map(|k| f(k / n, k % n)).collect() }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> &S {
        &self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConfusionSource {
    Analytic,
    MonteCarlo { seed: u64, trials: u64 },
}

/// `P(decide j | sent i)` over the points of a constellation.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix<S> {
    pub matrix: Matrix<S>,
    pub source: ConfusionSource,
    /// The analytic bound degenerated and Monte-Carlo was used instead.
    pub fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConfusionMethod {
    Analytic { fallback_seed: u64, fallback_trials: u64 },
    MonteCarlo { seed: u64, trials: u64 },
}

fn nearest<F: Real>(points: &[Complex<F>], y: Complex<F>) -> usize {
    let mut best = 0;
    let mut best_d = F::infinity();
    for (j, p) in points.iter().enumerate() {
        let d = (y - p).norm_sqr();
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

/// Unit-energy `m`-PSK starting at angle 0.
pub fn psk_points<F: Real>(m: usize) -> Vec<Complex<F>> {
    (0..m).map(|k| Complex::from_polar(F::one(), F::TAU() * F::lit(k as f64) / F::lit(m as f64))).collect()
}

pub fn build_confusion<F: Real>(
    points: &[Complex<F>],
    snr_db: F,
    method: ConfusionMethod,
) -> Result<ConfusionMatrix<F>, SemmapError> {
    if !snr_db.is_finite() {
        return Err(SemmapError::Invalid("snr_db must be finite".into()));
    }
    if points.len() < 2 {
        return Err(SemmapError::Dimension("need at least two points".into()));
    }
    let n0 = crate::phy::noise_var(snr_db);
    match method {
        ConfusionMethod::Analytic { fallback_seed, fallback_trials } => {
            let sigma = (n0 / F::lit(2.0)).sqrt();
            let m = points.len();
            let mut rows = vec![vec![F::zero(); m]; m];
            let mut degenerate = false;
            for i in 0..m {
                let mut off = F::zero();
                for j in (0..m).filter(|&j| j != i) {
                    let d = (points[i] - points[j]).norm();
                    rows[i][j] = q_function(d / (F::lit(2.0) * sigma));
                    off = off + rows[i][j];
                }
                if off >= F::one() {
                    degenerate = true;
                    break;
                }
                rows[i][i] = F::one() - off;
            }
            if degenerate {
                let mut mc = monte_carlo(points, n0, fallback_seed, fallback_trials)?;
                mc.fallback = true;
                return Ok(mc);
            }
            Ok(ConfusionMatrix { matrix: Matrix::from_rows(rows)?, source: ConfusionSource::Analytic, fallback: false })
        }
        ConfusionMethod::MonteCarlo { seed, trials } => monte_carlo(points, n0, seed, trials),
    }
}

fn monte_carlo<F: Real>(points: &[Complex<F>], n0: F, seed: u64, trials: u64) -> Result<ConfusionMatrix<F>, SemmapError> {
    if trials == 0 {
        return Err(SemmapError::Invalid("trials must be positive".into()));
    }
    let rows = (0..points.len())
        .into_par_iter()
        .map(|i| {
            let noisy = crate::phy::awgn(&vec![points[i]; trials as usize], n0, seed, i as u64);
            let mut counts = vec![0u64; points.len()];
            for y in noisy {
                counts[nearest(points, y)] += 1;
            }
            counts.into_iter().map(|c| F::lit(c as f64 / trials as f64)).collect()
        })
        .collect();
    Ok(ConfusionMatrix {
        matrix: Matrix::from_rows(rows)?,
        source: ConfusionSource::MonteCarlo { seed, trials },
        fallback: false,
    })
}

/// Pairwise token distance `(1 − cos)/2`, in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticDistance<S> {
    pub matrix: Matrix<S>,
}

impl<S: Scalar> SemanticDistance<S> {
    /// Checks symmetry, zero diagonal and range.
    pub fn from_matrix(matrix: Matrix<S>) -> Result<Self, SemmapError> {
        let n = matrix.size();
        for i in 0..n {
            if *matrix.get(i, i) != S::zero() {
                return Err(SemmapError::Invalid("distance diagonal must be zero".into()));
            }
            for j in 0..n {
                let v = matrix.get(i, j);
                if v != matrix.get(j, i) || *v < S::zero() || *v > S::one() {
                    return Err(SemmapError::Invalid("distance must be symmetric with entries in [0, 1]".into()));
                }
            }
        }
        Ok(Self { matrix })
    }
}

impl<F: Real> SemanticDistance<F> {
    pub fn from_embeddings(rows: &[Vec<f64>]) -> Result<Self, SemmapError> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != rows[0].len()) {
            return Err(SemmapError::Dimension("embeddings must be non-empty with equal dimensions".into()));
        }
        let norms: Vec<f64> = rows.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
        if norms.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(SemmapError::Invalid("embeddings must be finite with nonzero norm".into()));
        }
        let d = |i: usize, j: usize| {
            if i == j {
                return F::zero();
            }
            let dot: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
            let cos = (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0);
            F::lit((1.0 - cos) / 2.0)
        };
        // symmetric by construction: compute the upper triangle once
        let upper = Matrix::from_fn(n, |i, j| if i <= j { d(i, j) } else { F::zero() });
        Ok(Self { matrix: Matrix::from_fn(n, |i, j| if i <= j { *upper.get(i, j) } else { *upper.get(j, i) }) })
    }
}

/// Bijection from tokens to points: `point[t]` carries token `t`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment {
    point: Vec<usize>,
}

impl Assignment {
    pub fn new(point: Vec<usize>) -> Result<Self, SemmapError> {
        let mut seen = vec![false; point.len()];
        for &p in &point {
            if p >= point.len() || std::mem::replace(&mut seen[p], true) {
                return Err(SemmapError::Invalid("assignment is not a permutation".into()));
            }
        }
        Ok(Self { point })
    }

    pub fn identity(m: usize) -> Self {
        Self { point: (0..m).collect() }
    }

    pub fn points(&self) -> &[usize] {
        &self.point
    }

    pub fn len(&self) -> usize {
        self.point.len()
    }

    pub fn is_empty(&self) -> bool {
        self.point.is_empty()
    }

    /// CSV rows `token_id,point_index,point_i,point_q`.
    pub fn write_csv<F: Real, W: Write>(&self, points: &[Complex<F>], mut w: W) -> std::io::Result<()> {
        writeln!(w, "token_id,point_index,point_i,point_q")?;
        for (t, &p) in self.point.iter().enumerate() {
            let s = points[p];
            writeln!(w, "{t},{p},{},{}", s.re.to_f64_lossy(), s.im.to_f64_lossy())?;
        }
        Ok(())
    }
}

fn check_dims<S: Scalar>(m: usize, conf: &Matrix<S>, dist: &Matrix<S>, prior: &[S]) -> Result<(), SemmapError> {
    if conf.size() != m || dist.size() != m || prior.len() != m {
        return Err(SemmapError::Dimension(format!(
            "assignment {m}, confusion {}, distance {}, prior {}",
            conf.size(),
            dist.size(),
            prior.len()
        )));
    }
    Ok(())
}

/// `D(π) = Σ_t p(t) Σ_{u≠t} conf[π(t), π(u)] · dist(t, u)`.
pub fn expected_distortion<S: Scalar>(
    assign: &Assignment,
    conf: &Matrix<S>,
    dist: &Matrix<S>,
    prior: &[S],
) -> Result<S, SemmapError> {
    check_dims(assign.len(), conf, dist, prior)?;
    Ok(distortion(&assign.point, conf, dist, prior))
}

fn distortion<S: Scalar>(pi: &[usize], conf: &Matrix<S>, dist: &Matrix<S>, prior: &[S]) -> S {
    let mut total = S::zero();
    for t in 0..pi.len() {
        let mut inner = S::zero();
        for u in (0..pi.len()).filter(|&u| u != t) {
            inner = inner + conf.get(pi[t], pi[u]).clone() * dist.get(t, u).clone();
        }
        total = total + prior[t].clone() * inner;
    }
    total
}

/// Change of `D` when tokens `a` and `b` swap points. O(M).
pub fn swap_delta<F: Real>(pi: &[usize], a: usize, b: usize, conf: &Matrix<F>, dist: &Matrix<F>, prior: &[F]) -> F {
    if a == b {
        return F::zero();
    }
    let (pa, pb) = (pi[a], pi[b]);
    let c = |i: usize, j: usize| *conf.get(i, j);
    let d = |i: usize, j: usize| *dist.get(i, j);
    let mut delta = F::zero();
    for t in (0..pi.len()).filter(|&t| t != a && t != b) {
        let pt = pi[t];
        delta = delta
            + prior[t] * (d(t, a) * (c(pt, pb) - c(pt, pa)) + d(t, b) * (c(pt, pa) - c(pt, pb)))
            + prior[a] * d(a, t) * (c(pb, pt) - c(pa, pt))
            + prior[b] * d(b, t) * (c(pa, pt) - c(pb, pt));
    }
    delta + prior[a] * d(a, b) * (c(pb, pa) - c(pa, pb)) + prior[b] * d(b, a) * (c(pa, pb) - c(pb, pa))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnealSchedule {
    /// Starting temperature as a multiple of the mean |Δ| of random swaps.
    pub initial_temp: f64,
    /// Geometric factor applied after every proposal.
    pub cooling: f64,
    pub steps: usize,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        Self { initial_temp: 1.0, cooling: 0.999, steps: 20_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Steepest-descent pairwise swaps from the identity.
    Greedy,
    Anneal { seed: u64, schedule: AnnealSchedule },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimized<S> {
    pub assignment: Assignment,
    pub distortion: S,
}

fn steepest_descent<F: Real>(pi: &mut [usize], conf: &Matrix<F>, dist: &Matrix<F>, prior: &[F]) {
    let m = pi.len();
    loop {
        let mut best = (F::zero(), 0, 0);
        for a in 0..m {
            for b in a + 1..m {
                let d = swap_delta(pi, a, b, conf, dist, prior);
                if d < best.0 {
                    best = (d, a, b);
                }
            }
        }
        if best.0 >= F::zero() {
            return;
        }
        pi.swap(best.1, best.2);
    }
}

fn anneal_once<F: Real>(
    conf: &Matrix<F>,
    dist: &Matrix<F>,
    prior: &[F],
    seed: u64,
    restart: u64,
    schedule: &AnnealSchedule,
) -> (Vec<usize>, F) {
    let m = conf.size();
    let mut rng = substream(seed, Purpose::Optimizer, restart);
    let mut pi: Vec<usize> = (0..m).collect();
    pi.shuffle(&mut rng);
    let mut current = distortion(&pi, conf, dist, prior);
    let mut best = (pi.clone(), current);

    let probe = 32;
    let scale = (0..probe)
        .map(|_| {
            let (a, b) = (rng.random_range(0..m), rng.random_range(0..m));
            swap_delta(&pi, a, b, conf, dist, prior).abs()
        })
        .fold(F::zero(), |acc, x| acc + x)
        / F::lit(probe as f64);
    let mut temp = scale * F::lit(schedule.initial_temp);
    let cooling = F::lit(schedule.cooling);

    for _ in 0..schedule.steps {
        let a = rng.random_range(0..m);
        let b = rng.random_range(0..m - 1);
        let b = if b >= a { b + 1 } else { b };
        let delta = swap_delta(&pi, a, b, conf, dist, prior);
        let u: f64 = rng.random();
        if delta <= F::zero() || (temp > F::zero() && F::lit(u) < (-delta / temp).exp()) {
            pi.swap(a, b);
            current = current + delta;
            if current < best.1 {
                // resync to stop drift from accumulated deltas
                current = distortion(&pi, conf, dist, prior);
                if current < best.1 {
                    best = (pi.clone(), current);
                }
            }
        }
        temp = temp * cooling;
    }
    let (mut pi, _) = best;
    steepest_descent(&mut pi, conf, dist, prior);
    let d = distortion(&pi, conf, dist, prior);
    (pi, d)
}

/// Best assignment found by `method`. Restarts run in parallel on separate
/// streams; ties go to the lowest restart. The identity assignment is always
/// a candidate.
pub fn optimize<F: Real>(
    conf: &Matrix<F>,
    dist: &Matrix<F>,
    prior: &[F],
    method: Method,
    restarts: usize,
) -> Result<Optimized<F>, SemmapError> {
    let m = conf.size();
    check_dims(m, conf, dist, prior)?;
    let identity: Vec<usize> = (0..m).collect();
    let mut best = (identity.clone(), distortion(&identity, conf, dist, prior));
    let mut consider = |cand: (Vec<usize>, F)| {
        if cand.1 < best.1 {
            best = cand;
        }
    };
    match method {
        Method::Greedy => {
            let mut pi = identity;
            steepest_descent(&mut pi, conf, dist, prior);
            let d = distortion(&pi, conf, dist, prior);
            consider((pi, d));
        }
        Method::Anneal { seed, schedule } => {
            if m < 2 {
                return Ok(Optimized { assignment: Assignment { point: best.0 }, distortion: best.1 });
            }
            let results: Vec<(Vec<usize>, F)> = (0..restarts.max(1) as u64)
                .into_par_iter()
                .map(|r| anneal_once(conf, dist, prior, seed, r, &schedule))
                .collect();
            results.into_iter().for_each(&mut consider);
        }
    }
    Ok(Optimized { assignment: Assignment { point: best.0 }, distortion: best.1 })
}

fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
        return false;
    };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).expect("pivot has a successor");
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Exact optimum by enumerating every permutation in lexicographic order;
/// the first minimum wins.
pub fn brute_force<S: Scalar>(conf: &Matrix<S>, dist: &Matrix<S>, prior: &[S]) -> Result<Optimized<S>, SemmapError> {
    let m = conf.size();
    if m > 8 {
        return Err(SemmapError::TooLarge(m));
    }
    check_dims(m, conf, dist, prior)?;
    let mut pi: Vec<usize> = (0..m).collect();
    let mut best = (pi.clone(), distortion(&pi, conf, dist, prior));
    while next_permutation(&mut pi) {
        let d = distortion(&pi, conf, dist, prior);
        if d < best.1 {
            best = (pi.clone(), d);
        }
    }
    Ok(Optimized { assignment: Assignment { point: best.0 }, distortion: best.1 })
}

/// Uniform prior over `m` tokens.
pub fn uniform_prior<S: Scalar>(m: usize) -> Vec<S> {
    vec![S::one() / S::from_u64_exact(m as u64); m]
}
