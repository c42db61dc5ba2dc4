//! The true-value set `{alpha* + Ker A} ∩ [0, M]^a` of the multicollinear
//! linear model and its most parsimonious member.
//!
//! `A` is the `a x r` matrix with `A (X^j)_{j in D}' = X'`; it acts on row
//! vectors, so `Ker A = {v : v A = 0}` has dimension `a - r`. A coordinate set
//! `E` is admissible when `span{e_j : j in E} ⊕ Ker A = R^a`, which forces
//! `|E| = r`. The oblique projection `pr_E` onto `span{e_j : j in E}` along
//! `Ker A` produces the vertex candidates for the penalty minimizer.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::penalty::PenaltySpec;

/// Tolerances of the parsimony engine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParsimonyConfig {
    /// Singular values below `rank_tol * sigma_max` count as zero; also the
    /// determinant threshold for admissible sets.
    pub rank_tol: f64,
    /// Coordinates above `-nonneg_tol` count as nonnegative.
    pub nonneg_tol: f64,
    /// Required gap between the best and second-best penalty values.
    pub unique_tol: f64,
    /// Maximum `a - r`.
    pub enumeration_cap: usize,
}

impl Default for ParsimonyConfig {
    fn default() -> Self {
        Self {
            rank_tol: 1e-9,
            nonneg_tol: 1e-12,
            unique_tol: 1e-9,
            enumeration_cap: 12,
        }
    }
}

fn full_svd(m: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let n = m.nrows();
    // pad to square so that U is complete
    let mut sq = DMatrix::zeros(n, n.max(m.ncols()));
    sq.view_mut((0, 0), (n, m.ncols())).copy_from(m);
    let svd = sq.svd(true, false);
    let u = svd.u.expect("requested U");
    (u, svd.singular_values.iter().copied().collect())
}

fn numerical_rank(m: &DMatrix<f64>, tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * max).count()
}

/// Orthonormal basis of `{v : v A = 0}`, one row vector per element.
pub fn kernel_basis(a: &DMatrix<f64>, tol: f64) -> Result<Vec<Vec<f64>>> {
    let (rows, r) = (a.nrows(), a.ncols());
    if rows == 0 {
        return Ok(Vec::new());
    }
    let (u, sv) = full_svd(a);
    let max = sv.iter().copied().fold(0.0, f64::max);
    let rank = sv.iter().filter(|&&s| max > 0.0 && s > tol * max).count();
    if rank != r {
        return Err(Error::Rank { expected: r, found: rank });
    }
    Ok((0..rows)
        .filter(|&k| !(max > 0.0 && sv[k] > tol * max))
        .map(|k| u.column(k).iter().copied().collect())
        .collect())
}

fn stacked(rows_e: &[usize], kernel: &[Vec<f64>], a: usize) -> DMatrix<f64> {
    let n = rows_e.len() + kernel.len();
    let mut m = DMatrix::zeros(n, a);
    for (i, &j) in rows_e.iter().enumerate() {
        m[(i, j)] = 1.0;
    }
    for (i, v) in kernel.iter().enumerate() {
        for (j, &x) in v.iter().enumerate() {
            m[(rows_e.len() + i, j)] = x;
        }
    }
    m
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// All admissible coordinate sets `E` (0-based, ascending), in lexicographic order.
pub fn enumerate_e(a: &DMatrix<f64>, cfg: &ParsimonyConfig) -> Result<Vec<Vec<usize>>> {
    let dim = a.nrows();
    let kernel = kernel_basis(a, cfg.rank_tol)?;
    let r = dim - kernel.len();
    if kernel.len() > cfg.enumeration_cap {
        return Err(Error::EnumerationCap {
            needed: kernel.len(),
            cap: cfg.enumeration_cap,
            hint: "kernel dimension too large for exhaustive enumeration",
        });
    }
    Ok(subsets(dim, r)
        .into_iter()
        .filter(|e| stacked(e, &kernel, dim).determinant().abs() > cfg.rank_tol)
        .collect())
}

/// `pr_E(y)`: the unique point of `span{e_j : j in E}` with `y - pr_E(y)` in `Ker A`.
pub fn project_pr_e(y: &[f64], e: &[usize], a: &DMatrix<f64>) -> Result<Vec<f64>> {
    let (dim, r) = (a.nrows(), a.ncols());
    if y.len() != dim || e.len() != r || e.iter().any(|&j| j >= dim) {
        return Err(Error::Input(format!(
            "need |y| = {dim} and |E| = {r} with indices below {dim}"
        )));
    }
    let target = DVector::from_row_slice(y).transpose() * a; // 1 x r
    // z A_E = y A  <=>  A_E' z' = (y A)'
    let a_e = DMatrix::from_fn(r, r, |i, j| a[(e[i], j)]);
    let z = a_e
        .transpose()
        .lu()
        .solve(&target.transpose())
        .ok_or_else(|| Error::Singular(format!("E = {e:?} is not admissible")))?;
    let mut out = vec![0.0; dim];
    for (i, &j) in e.iter().enumerate() {
        out[j] = z[i];
    }
    let residual = (DVector::from_row_slice(&out).transpose() * a - &target).amax();
    let scale = target.amax().max(1.0);
    if !residual.is_finite() || residual > 1e-8 * scale {
        return Err(Error::Singular(format!("E = {e:?} is numerically inadmissible")));
    }
    Ok(out)
}

/// `alpha A`.
pub fn image(alpha: &[f64], a: &DMatrix<f64>) -> Vec<f64> {
    (DVector::from_row_slice(alpha).transpose() * a).iter().copied().collect()
}

/// `{alpha* + Ker A} ∩ [0, M]^a`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueValueSet {
    pub alpha_star: Vec<f64>,
    pub kernel: Vec<Vec<f64>>,
    pub alpha_max: f64,
}

impl TrueValueSet {
    pub fn new(alpha_star: Vec<f64>, a: &DMatrix<f64>, alpha_max: f64, tol: f64) -> Result<Self> {
        if alpha_star.len() != a.nrows() {
            return Err(Error::Input("alpha* length differs from the rows of A".into()));
        }
        Ok(Self { kernel: kernel_basis(a, tol)?, alpha_star, alpha_max })
    }

    /// `alpha* + sum_v c_v v`.
    pub fn point(&self, c: &[f64]) -> Vec<f64> {
        let mut x = self.alpha_star.clone();
        for (v, &cv) in self.kernel.iter().zip(c) {
            for (xi, vi) in x.iter_mut().zip(v) {
                *xi += cv * vi;
            }
        }
        x
    }

    pub fn in_box(&self, x: &[f64]) -> bool {
        x.iter().all(|&v| (0.0..self.alpha_max).contains(&v))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub e: Vec<usize>,
    pub projection: Vec<f64>,
    pub pe: f64,
    pub feasible: bool,
}

/// Output of [`select_parsimonious`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parsimonious {
    pub alpha: Vec<f64>,
    pub e0: Vec<usize>,
    /// Penalty gap to the next-best distinct feasible candidate (`+inf` if none).
    pub margin: f64,
    /// Whether `alpha` lies in `[0, M)^a`.
    pub interior: bool,
    pub candidates: Vec<Candidate>,
}

/// Candidate table: every admissible `E` with its projection and penalty.
pub fn candidates(alpha_star: &[f64], a: &DMatrix<f64>, pe: &PenaltySpec, cfg: &ParsimonyConfig) -> Result<Vec<Candidate>> {
    enumerate_e(a, cfg)?
        .into_iter()
        .map(|e| {
            let mut projection = project_pr_e(alpha_star, &e, a)?;
            let feasible = projection.iter().all(|&v| v >= -cfg.nonneg_tol);
            if feasible {
                // round-off on exact zeros
                projection.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            let pe = pe.time_invariant(&projection);
            Ok(Candidate { e, projection, pe, feasible })
        })
        .collect()
}

/// Picks the unique penalty minimizer among the nonnegative projections.
pub fn select_parsimonious(
    alpha_star: &[f64],
    a: &DMatrix<f64>,
    pe: &PenaltySpec,
    alpha_max: f64,
    cfg: &ParsimonyConfig,
) -> Result<Parsimonious> {
    let table = candidates(alpha_star, a, pe, cfg)?;
    // distinct feasible points; different E can share a projection
    let mut distinct: Vec<&Candidate> = Vec::new();
    for c in table.iter().filter(|c| c.feasible) {
        let dup = distinct.iter().any(|d| {
            d.projection
                .iter()
                .zip(&c.projection)
                .all(|(x, y)| (x - y).abs() <= 1e-10 * (1.0 + x.abs()))
        });
        if !dup {
            distinct.push(c);
        }
    }
    if distinct.is_empty() {
        return Err(Error::Numerical("no nonnegative projection found".into()));
    }
    distinct.sort_by(|x, y| x.pe.total_cmp(&y.pe));
    let best = distinct[0];
    let margin = distinct.get(1).map_or(f64::INFINITY, |c| c.pe - best.pe);
    if margin <= cfg.unique_tol {
        let tied: Vec<String> = distinct
            .iter()
            .filter(|c| c.pe - best.pe <= cfg.unique_tol)
            .map(|c| format!("E={:?} -> {:?}", c.e, c.projection))
            .collect();
        return Err(Error::NonUnique(format!("L1# fails, tied candidates: {}", tied.join("; "))));
    }
    Ok(Parsimonious {
        alpha: best.projection.clone(),
        e0: best.e.clone(),
        margin,
        interior: best.projection.iter().all(|&v| v < alpha_max),
        candidates: table,
    })
}

/// `Ker A ∩ span{e_j : j in J1} = {0}`.
pub fn check_j1_independence(a: &DMatrix<f64>, j1: &[usize], tol: f64) -> Result<bool> {
    let kernel = kernel_basis(a, tol)?;
    let m = stacked(j1, &kernel, a.nrows());
    Ok(numerical_rank(&m, tol) == j1.len() + kernel.len())
}

/// Settings of the search-based penalty minimizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BruteForceConfig {
    /// Target accuracy of the returned point.
    pub resolution: f64,
    /// Budget of the initial full grid.
    pub grid_points: usize,
    /// Uniform samples over the coordinate box, and as many hit-and-run
    /// samples inside the feasible region.
    pub random_points: usize,
    /// Number of coarse points refined.
    pub refine: usize,
    pub seed: u64,
}

impl Default for BruteForceConfig {
    fn default() -> Self {
        Self { resolution: 1e-3, grid_points: 200_000, random_points: 100_000, refine: 48, seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceMin {
    pub point: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

struct Search<'a> {
    set: &'a TrueValueSet,
    pe: &'a PenaltySpec,
    evaluations: usize,
}

impl Search<'_> {
    fn eval(&mut self, c: &[f64]) -> Option<f64> {
        self.evaluations += 1;
        let x = self.set.point(c);
        self.set.in_box(&x).then(|| self.pe.time_invariant(&x))
    }

    /// Rows `(v_1[i], ..., v_k[i])` of the map `c -> alpha_i`.
    fn rows(&self, pinned: &[usize]) -> DMatrix<f64> {
        let k = self.set.kernel.len();
        DMatrix::from_fn(pinned.len(), k, |r, d| self.set.kernel[d][pinned[r]])
    }

    /// Orthonormal directions in `c`-space keeping the pinned coordinates fixed.
    fn face_basis(&self, pinned: &[usize]) -> Vec<Vec<f64>> {
        let k = self.set.kernel.len();
        if pinned.is_empty() {
            return (0..k).map(|d| (0..k).map(|e| if d == e { 1.0 } else { 0.0 }).collect()).collect();
        }
        let rt = self.rows(pinned).transpose();
        let (u, sv) = full_svd(&rt);
        let max = sv.iter().copied().fold(0.0, f64::max);
        (0..k)
            .filter(|&j| sv.get(j).is_none_or(|&s| s <= 1e-10 * max))
            .map(|j| u.column(j).iter().copied().collect())
            .collect()
    }

    /// Smallest change of `c` that zeroes the pinned coordinates.
    fn snap(&self, c: &[f64], pinned: &[usize]) -> Option<Vec<f64>> {
        let x = self.set.point(c);
        let rhs = DVector::from_iterator(pinned.len(), pinned.iter().map(|&i| -x[i]));
        let pinv = self.rows(pinned).pseudo_inverse(1e-12).ok()?;
        let dc = pinv * rhs;
        let out: Vec<f64> = c.iter().zip(dc.iter()).map(|(a, b)| a + b).collect();
        let y = self.set.point(&out);
        pinned.iter().all(|&i| y[i].abs() <= 1e-9).then_some(out)
    }
}

/// Grid/random search of the penalty over `{alpha* + Ker A} ∩ [0, M)^a`,
/// parametrized by kernel coordinates. The best coarse points seed pattern
/// searches that pin coordinates reaching zero and continue on that face.
/// Uses no projection machinery.
pub fn brute_force_pe_min(set: &TrueValueSet, pe: &PenaltySpec, cfg: &BruteForceConfig) -> Result<BruteForceMin> {
    let k = set.kernel.len();
    if k == 0 {
        return Ok(BruteForceMin {
            value: pe.time_invariant(&set.alpha_star),
            point: set.alpha_star.clone(),
            evaluations: 1,
        });
    }
    let m = set.alpha_max;
    let dim = set.alpha_star.len();
    // c_v = (alpha - alpha*) . v  with alpha in [0, M]^a
    let (lo, hi): (Vec<f64>, Vec<f64>) = set
        .kernel
        .iter()
        .map(|v| {
            let shift: f64 = v.iter().zip(&set.alpha_star).map(|(a, b)| a * b).sum();
            let l: f64 = v.iter().map(|&x| (m * x).min(0.0)).sum();
            let h: f64 = v.iter().map(|&x| (m * x).max(0.0)).sum();
            (l - shift, h - shift)
        })
        .unzip();
    let mut search = Search { set, pe, evaluations: 0 };

    let per_dim = ((cfg.grid_points as f64).powf(1.0 / k as f64).floor() as usize).max(2);
    let mut pool: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut idx = vec![0usize; k];
    loop {
        let c: Vec<f64> = (0..k)
            .map(|d| lo[d] + (hi[d] - lo[d]) * idx[d] as f64 / (per_dim - 1) as f64)
            .collect();
        if let Some(v) = search.eval(&c) {
            pool.push((v, c));
        }
        if !advance(&mut idx, per_dim) {
            break;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.random_points {
        let c: Vec<f64> = (0..k).map(|d| rng.random_range(lo[d]..=hi[d])).collect();
        if let Some(v) = search.eval(&c) {
            pool.push((v, c));
        }
    }
    // hit-and-run from alpha* (c = 0) reaches thin feasible regions the box misses
    let mut c = vec![0.0; k];
    if let Some(v) = search.eval(&c) {
        pool.push((v, c.clone()));
    }
    for _ in 0..cfg.random_points {
        let dir: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = set.point(&c);
        let (mut t_lo, mut t_hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for (i, &xi) in x.iter().enumerate() {
            let slope: f64 = set.kernel.iter().zip(&dir).map(|(v, d)| v[i] * d).sum();
            if slope.abs() > 1e-14 {
                let (a, b) = ((0.0 - xi) / slope, (m - xi) / slope);
                t_lo = t_lo.max(a.min(b));
                t_hi = t_hi.min(a.max(b));
            }
        }
        if !(t_lo < t_hi && t_lo.is_finite() && t_hi.is_finite()) {
            continue;
        }
        let t = rng.random_range(t_lo..t_hi);
        let next: Vec<f64> = c.iter().zip(&dir).map(|(ci, di)| ci + t * di).collect();
        if let Some(v) = search.eval(&next) {
            pool.push((v, next.clone()));
            c = next;
        }
    }
    if pool.is_empty() {
        return Err(Error::Numerical("search found no feasible point of the true-value set".into()));
    }
    pool.sort_by(|a, b| a.0.total_cmp(&b.0));
    // scales come from the feasible points, which can occupy a small part of the box
    let span: Vec<f64> = (0..k)
        .map(|d| {
            let (a, b) = pool.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (_, c)| (a.min(c[d]), b.max(c[d])));
            (b - a).max(1e-9 * (1.0 + m))
        })
        .collect();
    let cell = span.iter().fold(0.0_f64, |a, &s| a.max(s / (per_dim - 1) as f64));
    // refine the best points that are at least two cells apart, so that
    // competing vertices each get a seed
    let diag = span.iter().map(|s| s * s).sum::<f64>().sqrt();
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let mut seeds: Vec<(f64, Vec<f64>)> = Vec::new();
    for (v, c) in &pool {
        if seeds.len() >= cfg.refine.max(2) / 2 {
            break;
        }
        if seeds.iter().all(|(_, s)| dist(s, c) > 0.2 * diag) {
            seeds.push((*v, c.clone()));
        }
    }
    for (v, c) in pool {
        if seeds.len() >= cfg.refine.max(1) {
            break;
        }
        if seeds.iter().all(|(_, s)| (0..k).any(|d| (s[d] - c[d]).abs() > 2.0 * cell)) {
            seeds.push((v, c));
        }
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    for (v0, c0) in seeds {
        let (mut val, mut c) = (v0, c0);
        let mut pinned: Vec<usize> = Vec::new();
        let mut basis = search.face_basis(&pinned);
        let mut width = cell;
        let mut steps = 0;
        // pattern search: widen after a move, halve otherwise. The penalty has
        // square-root cusps on the faces, so zoom far below the reported
        // resolution to let values near competing vertices separate.
        while !basis.is_empty() && width > 1e-13 * (1.0 + m) && steps < 5000 {
            steps += 1;
            let kf = basis.len();
            let side = if kf <= 2 { 9 } else { 5 };
            let step = |u: &[f64]| -> Vec<f64> {
                let mut p = c.clone();
                for (b, &ud) in basis.iter().zip(u) {
                    for (pi, bi) in p.iter_mut().zip(b) {
                        *pi += ud * bi;
                    }
                }
                p
            };
            let mut cand = (val, c.clone());
            let mut idx = vec![0usize; kf];
            loop {
                let u: Vec<f64> = idx.iter().map(|&i| width * (2.0 * i as f64 / (side - 1) as f64 - 1.0)).collect();
                let p = step(&u);
                if let Some(v) = search.eval(&p) {
                    if v < cand.0 {
                        cand = (v, p);
                    }
                }
                if !advance(&mut idx, side) {
                    break;
                }
            }
            for _ in 0..200 * kf {
                let u: Vec<f64> = (0..kf).map(|_| width * rng.random_range(-1.0..=1.0)).collect();
                let p = step(&u);
                if let Some(v) = search.eval(&p) {
                    if v < cand.0 {
                        cand = (v, p);
                    }
                }
            }
            let moved = cand.1 != c;
            (val, c) = cand;
            width = if moved { (width * 1.5).min(4.0 * cell) } else { width * 0.5 };

            // pin coordinates that came close to zero when that does not hurt
            let x = set.point(&c);
            let mut near: Vec<usize> = (0..dim).filter(|i| !pinned.contains(i) && x[*i] <= 4.0 * width).collect();
            near.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
            for i in near {
                let mut trial = pinned.clone();
                trial.push(i);
                if let Some(p) = search.snap(&c, &trial) {
                    if let Some(v) = search.eval(&p) {
                        if v <= val {
                            pinned = trial;
                            (val, c) = (v, p);
                            basis = search.face_basis(&pinned);
                        }
                    }
                }
            }
        }
        if best.as_ref().is_none_or(|b| val < b.0) {
            best = Some((val, c));
        }
    }
    let (value, c) = best.expect("pool nonempty");
    Ok(BruteForceMin { point: set.point(&c), value, evaluations: search.evaluations })
}

fn advance(idx: &mut [usize], side: usize) -> bool {
    for i in idx.iter_mut() {
        *i += 1;
        if *i < side {
            return true;
        }
        *i = 0;
    }
    false
}

/// Candidate table as CSV (`E` as 1-based indices joined by `;`).
pub fn candidates_csv(table: &[Candidate], comments: &[String]) -> String {
    let mut out = String::new();
    for c in comments {
        out.push_str(&format!("# {c}\n"));
    }
    out.push_str("E,projection,pe,feasible\n");
    for c in table {
        let e: Vec<String> = c.e.iter().map(|j| (j + 1).to_string()).collect();
        let p: Vec<String> = c.projection.iter().map(|v| v.to_string()).collect();
        out.push_str(&format!("{},{},{},{}\n", e.join(";"), p.join(";"), c.pe, c.feasible));
    }
    out
}
