//! Group actions: exact finite permutation groups and the continuous group
//! GL2(R) acting on the plane.
//!
//! Finite actions are checked for closure when built from an explicit element
//! list; the built-in constructors (cyclic, dihedral, symmetric) generate their
//! elements by closing a generating set, so they are closed by construction.
//!
//! GL2 elements are sampled from Frobenius-norm balls, i.e. Euclidean balls in
//! the 4-dimensional space of matrix entries. Sampling is split into fixed
//! chunks, each driven by its own ChaCha stream, so the sample sequence does
//! not depend on how many workers consume it.

use std::collections::{BTreeSet, HashMap, VecDeque};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Determinants at or below this magnitude count as singular.
pub const SINGULAR_DET: f64 = 1e-12;

/// Smallest perturbation magnitude scanned by [`nearest_invertible`].
const MIN_PERTURBATION: f64 = 1e-15;

/// Samples per RNG stream when drawing from a ball.
pub const SAMPLE_CHUNK: usize = 4096;

pub type Point = [f64; 2];
pub type Mat2 = [[f64; 2]; 2];

pub fn det2(m: &Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

/// An invertible 2x2 real matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gl2 {
    m: Mat2,
    det: f64,
}

impl Gl2 {
    pub fn new(m: Mat2) -> Result<Self> {
        let det = det2(&m);
        if !det.is_finite() || det.abs() <= SINGULAR_DET || m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Singular { det });
        }
        Ok(Self { m, det })
    }

    pub fn identity() -> Self {
        Self { m: [[1.0, 0.0], [0.0, 1.0]], det: 1.0 }
    }

    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self { m: [[c, -s], [s, c]], det: c * c + s * s }
    }

    pub fn scaling(sx: f64, sy: f64) -> Result<Self> {
        Self::new([[sx, 0.0], [0.0, sy]])
    }

    pub fn entries(&self) -> Mat2 {
        self.m
    }

    pub fn det(&self) -> f64 {
        self.det
    }

    pub fn apply(&self, p: Point) -> Point {
        [
            self.m[0][0] * p[0] + self.m[0][1] * p[1],
            self.m[1][0] * p[0] + self.m[1][1] * p[1],
        ]
    }

    pub fn inverse(&self) -> Self {
        let inv_det = 1.0 / self.det;
        let m = [
            [self.m[1][1] * inv_det, -self.m[0][1] * inv_det],
            [-self.m[1][0] * inv_det, self.m[0][0] * inv_det],
        ];
        Self { m, det: inv_det }
    }

    /// Matrix product `self * other`, i.e. apply `other` first.
    pub fn compose(&self, other: &Gl2) -> Result<Self> {
        let a = &self.m;
        let b = &other.m;
        Self::new([
            [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
            [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
        ])
    }

    pub fn frobenius_distance(&self, other: &Gl2) -> f64 {
        frobenius_distance(&self.m, &other.m)
    }

    /// Conjugation `r * self * r^-1`.
    pub fn conjugate_by(&self, r: &Gl2) -> Self {
        // the product of invertibles stays invertible up to rounding of det
        let p = r.compose(self).and_then(|p| p.compose(&r.inverse()));
        p.unwrap_or(*self)
    }
}

pub fn frobenius_distance(a: &Mat2, b: &Mat2) -> f64 {
    let mut s = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            s += (a[i][j] - b[i][j]).powi(2);
        }
    }
    s.sqrt()
}

pub fn apply(g: &Gl2, p: Point) -> Point {
    g.apply(p)
}

/// Perturbation parameters scanned by [`nearest_invertible`], ordered by
/// increasing magnitude with the positive value first at each level.
fn perturbation_grid(delta: f64) -> Vec<f64> {
    let mut mags = Vec::new();
    let mut t = delta;
    while t >= MIN_PERTURBATION {
        mags.push(t);
        t *= 0.5;
    }
    mags.reverse();
    mags.into_iter().flat_map(|m| [m, -m]).collect()
}

/// Moves a possibly singular `a` a small step toward the invertible `b`:
/// returns `M = (1 - t) a + t b` with `|t| <= delta` and `|det M|` above the
/// singularity threshold, together with the `t` used. An already invertible
/// `a` is returned unchanged with `t = 0`.
pub fn nearest_invertible(a: &Mat2, b: &Gl2, delta: f64) -> Result<(Gl2, f64)> {
    if !(delta > 0.0) {
        return Err(Error::InvalidInput(format!("delta must be positive, got {delta}")));
    }
    if det2(a).abs() > SINGULAR_DET {
        return Ok((Gl2::new(*a)?, 0.0));
    }
    let bm = b.entries();
    for t in perturbation_grid(delta) {
        let mut m = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                m[i][j] = (1.0 - t) * a[i][j] + t * bm[i][j];
            }
        }
        if let Ok(g) = Gl2::new(m) {
            return Ok((g, t));
        }
    }
    Err(Error::NoInvertiblePerturbation { delta })
}

/// Square-matrix version of [`nearest_invertible`].
pub fn nearest_invertible_dense(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    delta: f64,
) -> Result<(DMatrix<f64>, f64)> {
    if !(delta > 0.0) {
        return Err(Error::InvalidInput(format!("delta must be positive, got {delta}")));
    }
    if !a.is_square() || a.shape() != b.shape() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), got: b.ncols() });
    }
    let det_b = b.clone().determinant();
    if det_b.abs() <= SINGULAR_DET {
        return Err(Error::Singular { det: det_b });
    }
    if a.clone().determinant().abs() > SINGULAR_DET {
        return Ok((a.clone(), 0.0));
    }
    for t in perturbation_grid(delta) {
        let m = a * (1.0 - t) + b * t;
        let det = m.clone().determinant();
        if det.is_finite() && det.abs() > SINGULAR_DET {
            return Ok((m, t));
        }
    }
    Err(Error::NoInvertiblePerturbation { delta })
}

/// A permutation action of a finite group on `0..ground_size`.
#[derive(Debug, Clone)]
pub struct FiniteAction {
    name: String,
    ground: Vec<String>,
    elements: Vec<Vec<usize>>,
}

fn compose_perm(a: &[usize], b: &[usize]) -> Vec<usize> {
    // (a . b)(x) = a(b(x))
    b.iter().map(|&x| a[x]).collect()
}

fn invert_perm(a: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; a.len()];
    for (i, &x) in a.iter().enumerate() {
        inv[x] = i;
    }
    inv
}

fn is_permutation(p: &[usize], n: usize) -> bool {
    let mut seen = vec![false; n];
    p.len() == n && p.iter().all(|&x| x < n && !std::mem::replace(&mut seen[x], true))
}

impl FiniteAction {
    /// Builds an action from an explicit element list, verifying that the list
    /// contains the identity and is closed under composition and inversion.
    pub fn from_elements(name: &str, ground: Vec<String>, elements: Vec<Vec<usize>>) -> Result<Self> {
        let n = ground.len();
        if let Some(bad) = elements.iter().find(|p| !is_permutation(p, n)) {
            return Err(Error::InvalidGroup(format!("{bad:?} is not a permutation of {n} points")));
        }
        let index: HashMap<&[usize], usize> =
            elements.iter().enumerate().map(|(i, p)| (p.as_slice(), i)).collect();
        if index.len() != elements.len() {
            return Err(Error::InvalidGroup("duplicate elements".into()));
        }
        let id: Vec<usize> = (0..n).collect();
        if !index.contains_key(id.as_slice()) {
            return Err(Error::InvalidGroup("identity missing".into()));
        }
        for a in &elements {
            if !index.contains_key(invert_perm(a).as_slice()) {
                return Err(Error::InvalidGroup(format!("inverse of {a:?} missing")));
            }
            for b in &elements {
                if !index.contains_key(compose_perm(a, b).as_slice()) {
                    return Err(Error::InvalidGroup(format!("{a:?} . {b:?} not in the element list")));
                }
            }
        }
        Ok(Self { name: name.to_string(), ground, elements })
    }

    /// Closes a set of generating permutations under composition.
    pub fn generated(name: &str, ground_size: usize, generators: &[Vec<usize>]) -> Result<Self> {
        if let Some(bad) = generators.iter().find(|p| !is_permutation(p, ground_size)) {
            return Err(Error::InvalidGroup(format!("{bad:?} is not a permutation of {ground_size} points")));
        }
        let id: Vec<usize> = (0..ground_size).collect();
        let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
        let mut elements = vec![id.clone()];
        seen.insert(id.clone());
        let mut queue = VecDeque::from([id]);
        while let Some(p) = queue.pop_front() {
            for g in generators {
                let q = compose_perm(g, &p);
                if seen.insert(q.clone()) {
                    elements.push(q.clone());
                    queue.push_back(q);
                }
            }
        }
        let ground = (0..ground_size).map(|i| i.to_string()).collect();
        Ok(Self { name: name.to_string(), ground, elements })
    }

    pub fn trivial(ground_size: usize) -> Self {
        Self {
            name: "trivial".into(),
            ground: (0..ground_size).map(|i| i.to_string()).collect(),
            elements: vec![(0..ground_size).collect()],
        }
    }

    /// Rotations of an n-gon acting on its vertices.
    pub fn cyclic(n: usize) -> Result<Self> {
        check_small(n, 1)?;
        let rot: Vec<usize> = (0..n).map(|i| (i + 1) % n).collect();
        Self::generated(&format!("C{n}"), n, &[rot])
    }

    /// Symmetries of a regular n-gon acting on its vertices (order 2n).
    pub fn dihedral(n: usize) -> Result<Self> {
        check_small(n, 3)?;
        let rot: Vec<usize> = (0..n).map(|i| (i + 1) % n).collect();
        let refl: Vec<usize> = (0..n).map(|i| (n - i) % n).collect();
        Self::generated(&format!("D{n}"), n, &[rot, refl])
    }

    /// The full symmetric group on n points.
    pub fn symmetric(n: usize) -> Result<Self> {
        check_small(n, 1)?;
        let mut gens = Vec::new();
        if n > 1 {
            let mut swap: Vec<usize> = (0..n).collect();
            swap.swap(0, 1);
            gens.push(swap);
            gens.push((0..n).map(|i| (i + 1) % n).collect());
        }
        Self::generated(&format!("S{n}"), n, &gens)
    }

    /// Parses names like `C6`, `D4`, `S3` or `trivial<n>`.
    pub fn by_name(name: &str) -> Result<Self> {
        let bad = || Error::InvalidGroup(format!("unknown group {name:?} (expected C<n>, D<n>, S<n> or trivial<n>)"));
        if let Some(rest) = name.strip_prefix("trivial") {
            let n: usize = rest.parse().map_err(|_| bad())?;
            return Ok(Self::trivial(n));
        }
        let (kind, num) = name.split_at(1.min(name.len()));
        let n: usize = num.parse().map_err(|_| bad())?;
        match kind {
            "C" | "c" => Self::cyclic(n),
            "D" | "d" => Self::dihedral(n),
            "S" | "s" => Self::symmetric(n),
            _ => Err(bad()),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn ground(&self) -> &[String] {
        &self.ground
    }

    pub fn elements(&self) -> &[Vec<usize>] {
        &self.elements
    }
}

fn check_small(n: usize, min: usize) -> Result<()> {
    if n < min || n > 8 {
        return Err(Error::InvalidGroup(format!("built-in groups act on {min}..=8 points, got {n}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrbitStabilizer {
    pub orbit: BTreeSet<usize>,
    /// Indices into [`FiniteAction::elements`].
    pub stabilizer: Vec<usize>,
}

pub fn finite_orbit_stabilizer(action: &FiniteAction, x: usize) -> Result<OrbitStabilizer> {
    if x >= action.ground.len() {
        return Err(Error::InvalidInput(format!("{x} is not in the ground set of {}", action.name)));
    }
    let mut orbit = BTreeSet::new();
    let mut stabilizer = Vec::new();
    for (i, g) in action.elements.iter().enumerate() {
        orbit.insert(g[x]);
        if g[x] == x {
            stabilizer.push(i);
        }
    }
    Ok(OrbitStabilizer { orbit, stabilizer })
}

/// A Frobenius-norm ball in GL2, seen as a Euclidean ball in entry space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallSpec {
    pub center: Gl2,
    pub radius: f64,
    pub seed: u64,
}

impl BallSpec {
    pub fn new(center: Gl2, radius: f64, seed: u64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidInput(format!("ball radius must be positive, got {radius}")));
        }
        Ok(Self { center, radius, seed })
    }

    pub fn about_identity(radius: f64, seed: u64) -> Result<Self> {
        Self::new(Gl2::identity(), radius, seed)
    }
}

/// The RNG for one chunk (or trial) of a seeded computation. Each index gets
/// its own ChaCha stream, so results never depend on the worker count.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draws one point uniformly from the ball, rejecting singular matrices.
pub fn draw_from_ball<R: Rng>(spec: &BallSpec, rng: &mut R) -> Gl2 {
    let c = spec.center.entries();
    loop {
        let u: [f64; 4] = std::array::from_fn(|_| rng.random::<f64>() * 2.0 - 1.0);
        if u.iter().map(|v| v * v).sum::<f64>() > 1.0 {
            continue;
        }
        let m = [
            [c[0][0] + spec.radius * u[0], c[0][1] + spec.radius * u[1]],
            [c[1][0] + spec.radius * u[2], c[1][1] + spec.radius * u[3]],
        ];
        if let Ok(g) = Gl2::new(m) {
            return g;
        }
    }
}

/// The `len` samples of chunk `chunk` of the ball's sample sequence.
pub fn sample_chunk(spec: &BallSpec, chunk: usize, len: usize) -> Vec<Gl2> {
    let mut rng = stream_rng(spec.seed, chunk as u64);
    (0..len).map(|_| draw_from_ball(spec, &mut rng)).collect()
}

/// Lengths of the chunks that make up a sequence of `count` samples.
pub fn chunk_lengths(count: usize) -> impl Iterator<Item = usize> {
    let full = count / SAMPLE_CHUNK;
    let rest = count % SAMPLE_CHUNK;
    std::iter::repeat_n(SAMPLE_CHUNK, full).chain((rest > 0).then_some(rest))
}

/// `count` matrices drawn uniformly from the ball; deterministic in the seed.
pub fn sample_ball(spec: &BallSpec, count: usize) -> Vec<Gl2> {
    let lens: Vec<usize> = chunk_lengths(count).collect();
    lens.par_iter()
        .enumerate()
        .flat_map_iter(|(k, &len)| sample_chunk(spec, k, len))
        .collect()
}
