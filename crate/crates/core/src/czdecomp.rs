//! Stopping-time triadic decomposition of a neighbourhood of the boundary, the
//! subordinate partition of unity, and the pointwise error functional `E_eps`.
//!
//! Cube `(m, k)` is `3^m (k + [-1/2, 1/2)^2)`. Essential infima over `3 Q ∩ ∂Ω` are
//! minima over a fixed dense boundary sample, bucketed by level-`m` cell so that
//! `3 Q` is the union of nine buckets. Adjacency between cubes is decided in integer
//! arithmetic.

use std::collections::{HashMap, HashSet};
use std::f64::consts::TAU;

use crate::dioph::dioph_constant;
use crate::error::{Error, Result};
use crate::fields::ConvexDomain;
use crate::mollifier::{self, Jet};

/// Maximum number of refinement levels below the initial cube.
pub const MAX_DEPTH: usize = 60;
/// Boundary samples per side of the smallest admissible cube (sizes never drop below the floor).
pub const SAMPLES_PER_SIDE: f64 = 32.0;
const MAX_SAMPLES: usize = 40_000_000;

#[inline]
fn pow3(m: i32) -> f64 {
    3f64.powi(m)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TriadicCube {
    pub level: i32,
    /// Center in units of `3^level`.
    pub center: [i64; 2],
}

impl TriadicCube {
    pub fn new(level: i32, center: [i64; 2]) -> Self {
        Self { level, center }
    }

    pub fn size(&self) -> f64 {
        pow3(self.level)
    }

    pub fn center_point(&self) -> [f64; 2] {
        let s = self.size();
        [self.center[0] as f64 * s, self.center[1] as f64 * s]
    }

    /// Closed bounds of `r Q`.
    pub fn bounds(&self, r: f64) -> ([f64; 2], [f64; 2]) {
        let c = self.center_point();
        let h = 0.5 * r * self.size();
        ([c[0] - h, c[1] - h], [c[0] + h, c[1] + h])
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        cell_of(x, self.level) == self.center
    }

    /// `x` in the closed dilate `r Q`.
    pub fn dilate_contains(&self, x: &[f64], r: f64) -> bool {
        let (lo, hi) = self.bounds(r);
        (0..2).all(|i| lo[i] <= x[i] && x[i] <= hi[i])
    }

    pub fn children(&self) -> impl Iterator<Item = TriadicCube> + '_ {
        (-1..=1).flat_map(move |a| {
            (-1..=1).map(move |b| TriadicCube::new(self.level - 1, [3 * self.center[0] + a, 3 * self.center[1] + b]))
        })
    }

    pub fn meets_boundary(&self, dom: &ConvexDomain) -> bool {
        let (lo, hi) = self.bounds(1.0);
        dom.box_meets_boundary(&lo, &hi)
    }
}

/// Level-`m` cell containing `x`.
#[inline]
pub fn cell_of(x: &[f64], level: i32) -> [i64; 2] {
    let s = pow3(level);
    [(x[0] / s + 0.5).floor() as i64, (x[1] / s + 0.5).floor() as i64]
}

/// Relation of two closed cubes, decided exactly.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Contact {
    Apart,
    Touching,
    Overlapping,
}

pub fn contact(p: &TriadicCube, q: &TriadicCube) -> Contact {
    let (small, big) = if p.level <= q.level { (p, q) } else { (q, p) };
    let scale = 3i128.pow((big.level - small.level) as u32);
    let mut touching = false;
    for ax in 0..2 {
        // endpoints in units of 3^{small.level} / 2
        let (a0, a1) = (2 * small.center[ax] as i128 - 1, 2 * small.center[ax] as i128 + 1);
        let (b0, b1) = ((2 * big.center[ax] as i128 - 1) * scale, (2 * big.center[ax] as i128 + 1) * scale);
        if a1 < b0 || b1 < a0 {
            return Contact::Apart;
        }
        if a1 == b0 || b1 == a0 {
            touching = true;
        }
    }
    if touching { Contact::Touching } else { Contact::Overlapping }
}

/// Level-`m + 1` cells whose closures can meet the closure of `(m, k)`.
fn parent_level_candidates(c: &TriadicCube) -> Vec<[i64; 2]> {
    let range = |k: i64| -> (i64, i64) {
        // (2k-1) <= 3(2K+1) and 3(2K-1) <= 2k+1
        let lo = (2 * k - 4).div_euclid(6) - 1;
        let hi = (2 * k + 4).div_euclid(6) + 1;
        (lo, hi)
    };
    let (x0, x1) = range(c.center[0]);
    let (y0, y1) = range(c.center[1]);
    let mut out = Vec::new();
    for kx in x0..=x1 {
        for ky in y0..=y1 {
            let cand = TriadicCube::new(c.level + 1, [kx, ky]);
            if contact(c, &cand) != Contact::Apart {
                out.push([kx, ky]);
            }
        }
    }
    out
}

/// Dense chart sample of the boundary.
#[derive(Clone, Debug)]
pub struct BoundarySampling {
    pub s: Vec<f64>,
    pub points: Vec<[f64; 2]>,
    pub normals: Vec<[f64; 2]>,
    /// Arc-length weights.
    pub weights: Vec<f64>,
    pub f: Vec<f64>,
    /// Diophantine constants with the `(kappa, Xi)` they were computed at.
    pub a: Option<(f64, usize, Vec<f64>)>,
}

impl BoundarySampling {
    /// Uniform chart sample with arclength spacing at most `spacing`.
    pub fn new(dom: &ConvexDomain, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) {
            return Err(Error::InvalidInput(format!("sample spacing must be positive, got {spacing}")));
        }
        let vmax = dom.half_extent();
        let count = ((TAU * vmax / spacing).ceil() as usize).max(16);
        if count > MAX_SAMPLES {
            return Err(Error::InvalidInput(format!(
                "boundary sampling at spacing {spacing:e} needs {count} points (limit {MAX_SAMPLES})"
            )));
        }
        let ds = TAU / count as f64;
        let mut out = Self {
            s: Vec::with_capacity(count),
            points: Vec::with_capacity(count),
            normals: Vec::with_capacity(count),
            weights: Vec::with_capacity(count),
            f: Vec::new(),
            a: None,
        };
        for i in 0..count {
            let s = i as f64 * ds;
            let bp = dom.chart_unchecked(s);
            out.s.push(s);
            out.points.push(bp.point);
            out.normals.push(bp.normal);
            out.weights.push(dom.speed(s) * ds);
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    /// Diophantine constants of all sample normals, computed once per `(kappa, Xi)`.
    pub fn diophantine(&mut self, kappa: f64, xi: usize) -> Result<&[f64]> {
        let fresh = !matches!(&self.a, Some((k, x, _)) if *k == kappa && *x == xi);
        if fresh {
            let mut a = Vec::with_capacity(self.len());
            for n in &self.normals {
                a.push(dioph_constant(n, kappa, xi)?.a_lb);
            }
            self.a = Some((kappa, xi, a));
        }
        Ok(&self.a.as_ref().unwrap().2)
    }

    /// `min f` per level-`m` cell.
    fn bucket_min(&self, level: i32) -> HashMap<[i64; 2], f64> {
        let mut map: HashMap<[i64; 2], f64> = HashMap::new();
        for (p, &f) in self.points.iter().zip(&self.f) {
            let e = map.entry(cell_of(p, level)).or_insert(f64::INFINITY);
            if f < *e {
                *e = f;
            }
        }
        map
    }
}

/// `min` of bucketed values over the nine cells forming `3 Q`.
fn min3(buckets: &HashMap<[i64; 2], f64>, c: &[i64; 2]) -> f64 {
    let mut m = f64::INFINITY;
    for a in -1..=1 {
        for b in -1..=1 {
            if let Some(&v) = buckets.get(&[c[0] + a, c[1] + b]) {
                m = m.min(v);
            }
        }
    }
    m
}

/// Boundary point attached to a cube.
#[derive(Clone, Debug, PartialEq)]
pub struct Anchor {
    pub s: f64,
    pub point: [f64; 2],
    pub normal: [f64; 2],
    pub a_lb: f64,
}

/// Driving function `F = eps^{1-delta} / A(n(x))` with its parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiophantineDriver {
    pub eps: f64,
    pub delta: f64,
    pub kappa: f64,
    pub xi: usize,
}

impl DiophantineDriver {
    /// Lattice cutoff `ceil(eps^{-1/2})` unless given.
    pub fn new(eps: f64, delta: f64, kappa: f64, xi: Option<usize>) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidInput(format!("eps must lie in (0, 1), got {eps}")));
        }
        if !(delta > 0.0 && delta < 0.5) {
            return Err(Error::InvalidInput(format!("delta must lie in (0, 1/2), got {delta}")));
        }
        let xi = xi.unwrap_or_else(|| eps.powf(-0.5).ceil() as usize);
        Ok(Self { eps, delta, kappa, xi })
    }

    pub fn floor(&self) -> f64 {
        self.eps.powf(1.0 - self.delta)
    }

    pub fn f_of_a(&self, a: f64) -> f64 {
        if a > 0.0 { self.floor() / a } else { f64::INFINITY }
    }
}

/// Emitted cubes with the sample they were built from.
#[derive(Clone, Debug)]
pub struct CubePartition {
    pub cubes: Vec<TriadicCube>,
    pub anchors: Vec<Option<Anchor>>,
    pub top_level: i32,
    pub floor: f64,
    pub driver: Option<DiophantineDriver>,
    pub samples: Option<BoundarySampling>,
    index: HashMap<TriadicCube, usize>,
    levels: Vec<i32>,
}

impl CubePartition {
    /// Partition from an explicit cube list (sorted canonically).
    pub fn from_cubes(mut cubes: Vec<TriadicCube>, anchors: Option<Vec<Anchor>>) -> Result<Self> {
        let mut paired: Vec<(TriadicCube, Option<Anchor>)> = match anchors {
            Some(a) if a.len() == cubes.len() => cubes.drain(..).zip(a.into_iter().map(Some)).collect(),
            Some(a) => {
                return Err(Error::InvalidInput(format!("{} anchors for {} cubes", a.len(), cubes.len())));
            }
            None => cubes.drain(..).map(|c| (c, None)).collect(),
        };
        paired.sort_by(|a, b| a.0.cmp(&b.0));
        let (cubes, anchors): (Vec<_>, Vec<_>) = paired.into_iter().unzip();
        let top = cubes.iter().map(|c| c.level).max().unwrap_or(0);
        let floor = cubes.iter().map(|c| c.size()).fold(f64::INFINITY, f64::min);
        Ok(Self::assemble(cubes, anchors, top, floor, None, None))
    }

    fn assemble(
        cubes: Vec<TriadicCube>,
        anchors: Vec<Option<Anchor>>,
        top_level: i32,
        floor: f64,
        driver: Option<DiophantineDriver>,
        samples: Option<BoundarySampling>,
    ) -> Self {
        let index = cubes.iter().enumerate().map(|(i, c)| (*c, i)).collect();
        let mut levels: Vec<i32> = cubes.iter().map(|c| c.level).collect();
        levels.sort_unstable();
        levels.dedup();
        Self { cubes, anchors, top_level, floor, driver, samples, index, levels }
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    pub fn levels(&self) -> &[i32] {
        &self.levels
    }

    pub fn position(&self, c: &TriadicCube) -> Option<usize> {
        self.index.get(c).copied()
    }

    /// Cube containing `x`, if any.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        self.levels.iter().find_map(|&m| self.position(&TriadicCube::new(m, cell_of(x, m))))
    }

    /// Indices of cubes whose closed dilate `r Q` contains `x`.
    pub fn dilates_containing(&self, x: &[f64], r: f64) -> Vec<usize> {
        let reach = ((r - 1.0) * 0.5).ceil().max(0.0) as i64 + 1;
        let mut out = Vec::new();
        for &m in &self.levels {
            let c = cell_of(x, m);
            for a in -reach..=reach {
                for b in -reach..=reach {
                    if let Some(i) = self.position(&TriadicCube::new(m, [c[0] + a, c[1] + b])) {
                        if self.cubes[i].dilate_contains(x, r) {
                            out.push(i);
                        }
                    }
                }
            }
        }
        out
    }

    /// All pairs `(i, j)`, `i < j`, of cubes whose closures meet.
    pub fn neighbour_pairs(&self) -> Vec<(usize, usize, Contact)> {
        let mut out = Vec::new();
        for (i, c) in self.cubes.iter().enumerate() {
            for &m in self.levels.iter().filter(|&&m| m >= c.level) {
                let scale = 3i64.pow((m - c.level) as u32);
                let range = |k: i64| {
                    let lo = (2 * k - 1 - scale).div_euclid(2 * scale);
                    let hi = (2 * k + 1 + scale).div_euclid(2 * scale) + 1;
                    (lo, hi)
                };
                let (x0, x1) = range(c.center[0]);
                let (y0, y1) = range(c.center[1]);
                for kx in x0..=x1 {
                    for ky in y0..=y1 {
                        let other = TriadicCube::new(m, [kx, ky]);
                        if let Some(j) = self.position(&other) {
                            if j == i || (m == c.level && j < i) {
                                continue;
                            }
                            let rel = contact(c, &other);
                            if rel != Contact::Apart {
                                out.push((i.min(j), i.max(j), rel));
                            }
                        }
                    }
                }
            }
        }
        out.sort_unstable_by_key(|p| (p.0, p.1));
        out.dedup_by_key(|p| (p.0, p.1));
        out
    }
}

/// Stopping-time decomposition driven by per-sample values `samples.f`.
pub fn decompose_sampled(dom: &ConvexDomain, samples: BoundarySampling, floor: f64) -> Result<CubePartition> {
    if !(floor > 0.0) {
        return Err(Error::InvalidInput(format!("floor must be positive, got {floor}")));
    }
    if samples.f.len() != samples.len() || samples.is_empty() {
        return Err(Error::InvalidInput("boundary sample has no driving values".into()));
    }
    if let Some(bad) = samples.f.iter().position(|&f| !(f >= floor * (1.0 - 1e-12))) {
        return Err(Error::InvalidInput(format!(
            "F = {} below the floor {floor} at chart parameter {}",
            samples.f[bad], samples.s[bad]
        )));
    }
    let fmin = samples.f.iter().copied().fold(f64::INFINITY, f64::min);
    let mut m0 = 0i32;
    while pow3(m0) * 0.5 <= dom.half_extent() {
        m0 += 1;
    }
    while pow3(m0) < fmin {
        m0 += 1;
    }

    let mut queue = vec![TriadicCube::new(m0, [0, 0])];
    let mut prev_bad: HashSet<[i64; 2]> = HashSet::new();
    let mut emitted = Vec::new();
    for depth in 0.. {
        if queue.is_empty() {
            break;
        }
        if depth >= MAX_DEPTH {
            return Err(Error::NoConvergence(format!(
                "decomposition exceeded {MAX_DEPTH} levels (floor {floor:e})"
            )));
        }
        let level = m0 - depth as i32;
        let buckets = samples.bucket_min(level - 1);
        let child_size = pow3(level - 1);
        let mut next = Vec::new();
        let mut bad_here = HashSet::new();
        for cube in &queue {
            let kids: Vec<TriadicCube> = cube.children().filter(|c| c.meets_boundary(dom)).collect();
            let small_enough = kids.iter().all(|k| min3(&buckets, &k.center) <= child_size);
            let isolated = parent_level_candidates(cube).iter().all(|k| !prev_bad.contains(k));
            if small_enough && isolated {
                next.extend(kids);
            } else {
                bad_here.insert(cube.center);
                emitted.push(*cube);
            }
        }
        prev_bad = bad_here;
        queue = next;
    }
    emitted.sort();
    let anchors = vec![None; emitted.len()];
    Ok(CubePartition::assemble(emitted, anchors, m0, floor, None, Some(samples)))
}

/// Decomposition for a general boundary function.
pub fn decompose<F: Fn(f64, &[f64; 2], &[f64; 2]) -> f64>(dom: &ConvexDomain, f: F, floor: f64) -> Result<CubePartition> {
    let mut samples = BoundarySampling::new(dom, floor / SAMPLES_PER_SIDE)?;
    samples.f = (0..samples.len()).map(|i| f(samples.s[i], &samples.points[i], &samples.normals[i])).collect();
    decompose_sampled(dom, samples, floor)
}

/// Decomposition for `F = eps^{1-delta} / A(n(x))`, with anchors attached.
pub fn decompose_diophantine(dom: &ConvexDomain, driver: DiophantineDriver) -> Result<CubePartition> {
    let floor = driver.floor();
    let mut samples = BoundarySampling::new(dom, floor / SAMPLES_PER_SIDE)?;
    let f: Vec<f64> = samples.diophantine(driver.kappa, driver.xi)?.iter().map(|&a| driver.f_of_a(a)).collect();
    samples.f = f;
    let mut part = decompose_sampled(dom, samples, floor)?;
    part.driver = Some(driver);
    anchor_points(&mut part, driver.kappa, driver.xi)?;
    Ok(part)
}

/// Attach to every cube the sample of `3 Q ∩ ∂Ω` with the largest Diophantine constant and
/// verify `A(x) size(Q) >= eps^{1-delta}` when the partition carries a driver.
pub fn anchor_points(part: &mut CubePartition, kappa: f64, xi: usize) -> Result<()> {
    let mut samples = part
        .samples
        .take()
        .ok_or_else(|| Error::InvalidInput("partition has no boundary sample".into()))?;
    let result = (|| {
        let a = samples.diophantine(kappa, xi)?.to_vec();
        let mut failures = 0usize;
        for &m in &part.levels.clone() {
            let mut best: HashMap<[i64; 2], usize> = HashMap::new();
            for (i, p) in samples.points.iter().enumerate() {
                let e = best.entry(cell_of(p, m)).or_insert(i);
                if a[i] > a[*e] {
                    *e = i;
                }
            }
            for (ci, cube) in part.cubes.iter().enumerate().filter(|(_, c)| c.level == m) {
                let mut pick: Option<usize> = None;
                for da in -1..=1 {
                    for db in -1..=1 {
                        if let Some(&i) = best.get(&[cube.center[0] + da, cube.center[1] + db]) {
                            if pick.is_none_or(|p| a[i] > a[p]) {
                                pick = Some(i);
                            }
                        }
                    }
                }
                let Some(i) = pick else {
                    failures += 1;
                    continue;
                };
                if let Some(d) = part.driver {
                    if a[i] * cube.size() < d.floor() * (1.0 - 1e-12) {
                        failures += 1;
                    }
                }
                part.anchors[ci] = Some(Anchor { s: samples.s[i], point: samples.points[i], normal: samples.normals[i], a_lb: a[i] });
            }
        }
        if failures > 0 {
            return Err(Error::Geometry(format!("{failures} cubes without an admissible anchor sample")));
        }
        Ok(())
    })();
    part.samples = Some(samples);
    result
}

/// Property audit of a partition.
#[derive(Clone, Debug, Default)]
pub struct PartitionCheck {
    pub cubes: usize,
    /// Independent boundary samples not covered by any cube (i).
    pub coverage_misses: usize,
    /// Cubes not meeting the boundary (ii).
    pub not_meeting: usize,
    /// Cubes with `min_{3Q} F > size` on the construction sample (iii).
    pub essinf_violations: usize,
    /// Adjacent pairs with size ratio outside `{1/3, 1, 3}` (v).
    pub ratio_violations: usize,
    pub overlaps: usize,
    pub neighbour_pairs: usize,
    /// `max_n #{size >= 3^n} 3^{n(d-1)} / H{F >= 3^{n-2}}` (iv).
    pub counting_constant: f64,
    pub min_size: f64,
    pub max_size: f64,
    /// `(level, count)` ascending.
    pub per_level: Vec<(i32, usize)>,
}

impl PartitionCheck {
    /// Properties (i), (ii), (iii), (v) and disjointness.
    pub fn exact_properties_hold(&self) -> bool {
        self.coverage_misses == 0
            && self.not_meeting == 0
            && self.essinf_violations == 0
            && self.ratio_violations == 0
            && self.overlaps == 0
    }
}

pub fn check_partition(part: &CubePartition, dom: &ConvexDomain, coverage_samples: usize) -> Result<PartitionCheck> {
    let mut chk = PartitionCheck { cubes: part.len(), ..Default::default() };
    for i in 0..coverage_samples {
        let s = TAU * (i as f64 + 0.5) / coverage_samples as f64;
        if part.locate(&dom.chart_unchecked(s).point).is_none() {
            chk.coverage_misses += 1;
        }
    }
    chk.not_meeting = part.cubes.iter().filter(|c| !c.meets_boundary(dom)).count();
    let pairs = part.neighbour_pairs();
    chk.neighbour_pairs = pairs.len();
    for &(i, j, rel) in &pairs {
        if rel == Contact::Overlapping {
            chk.overlaps += 1;
        }
        if (part.cubes[i].level - part.cubes[j].level).abs() > 1 {
            chk.ratio_violations += 1;
        }
    }
    chk.min_size = part.cubes.iter().map(|c| c.size()).fold(f64::INFINITY, f64::min);
    chk.max_size = part.cubes.iter().map(|c| c.size()).fold(0.0, f64::max);
    let mut per: HashMap<i32, usize> = HashMap::new();
    for c in &part.cubes {
        *per.entry(c.level).or_default() += 1;
    }
    let mut per: Vec<(i32, usize)> = per.into_iter().collect();
    per.sort_unstable();
    chk.per_level = per;
    if let Some(samples) = &part.samples {
        for &m in part.levels() {
            let buckets = samples.bucket_min(m);
            chk.essinf_violations += part
                .cubes
                .iter()
                .filter(|c| c.level == m && min3(&buckets, &c.center) > c.size())
                .count();
        }
        let mut worst = 0.0f64;
        for &(m, _) in &chk.per_level {
            let count = part.cubes.iter().filter(|c| c.level >= m).count() as f64;
            let thresh = pow3(m - 2);
            let measure: f64 =
                samples.f.iter().zip(&samples.weights).filter(|(f, _)| **f >= thresh).map(|(_, w)| w).sum();
            let ratio = if measure > 0.0 { count * pow3(m) / measure } else { f64::INFINITY };
            worst = worst.max(ratio);
        }
        chk.counting_constant = worst;
    }
    Ok(chk)
}

/// `(c, C)` with `c eps^{1-delta} = min size` and `C eps^{(1-delta)/2} = max size`.
pub fn size_constants(chk: &PartitionCheck, eps: f64, delta: f64) -> (f64, f64) {
    (chk.min_size / eps.powf(1.0 - delta), chk.max_size / eps.powf(0.5 * (1.0 - delta)))
}

/// Mollified-indicator windows `psi_Q = zeta_Q / sum zeta`.
pub struct PartitionOfUnity<'a> {
    part: &'a CubePartition,
}

/// Lower bound of `sum zeta` on the union of the cubes: every `zeta_Q >= 1/4` on `Q`.
pub const ZETA_FLOOR: f64 = 0.25;

impl<'a> PartitionOfUnity<'a> {
    pub fn new(part: &'a CubePartition) -> Result<Self> {
        if part.is_empty() {
            return Err(Error::InvalidInput("empty partition".into()));
        }
        Ok(Self { part })
    }

    /// `zeta_Q(x) = prod_i [H((c_i + s/2 - x_i)/s) - H((c_i - s/2 - x_i)/s)]`, supported in `(4/3) Q`.
    pub fn zeta(&self, idx: usize, x: &[f64]) -> f64 {
        let c = &self.part.cubes[idx];
        let p = c.center_point();
        let s = c.size();
        mollifier::bump(x[0], p[0], s) * mollifier::bump(x[1], p[1], s)
    }

    fn supports(&self, x: &[f64]) -> Vec<usize> {
        self.part.dilates_containing(x, 4.0 / 3.0)
    }

    pub fn zeta_sum(&self, x: &[f64]) -> f64 {
        self.supports(x).iter().map(|&i| self.zeta(i, x)).sum()
    }

    /// Nonzero `(index, psi)` at `x`; errors if `x` lies in a cube but `sum zeta` is degenerate.
    pub fn psi_all(&self, x: &[f64]) -> Result<Vec<(usize, f64)>> {
        let sup = self.supports(x);
        let vals: Vec<(usize, f64)> = sup.iter().map(|&i| (i, self.zeta(i, x))).filter(|p| p.1 > 0.0).collect();
        let total: f64 = vals.iter().map(|p| p.1).sum();
        if self.part.locate(x).is_some() && total < ZETA_FLOOR * (1.0 - 1e-12) {
            return Err(Error::Geometry(format!("sum of windows {total} below {ZETA_FLOOR} at {x:?}")));
        }
        if total == 0.0 {
            return Ok(Vec::new());
        }
        Ok(vals.into_iter().map(|(i, v)| (i, v / total)).collect())
    }

    pub fn psi(&self, idx: usize, x: &[f64]) -> Result<f64> {
        Ok(self.psi_all(x)?.into_iter().find(|p| p.0 == idx).map_or(0.0, |p| p.1))
    }

    /// Directional derivatives `d^k/dt^k psi_Q(x + t v)` at `t = 0`, `k = 0..=4`.
    pub fn psi_directional(&self, idx: usize, x: &[f64], v: &[f64; 2]) -> [f64; mollifier::MAX_ORDER + 1] {
        let sup = self.supports(x);
        let jet = |i: usize| {
            let c = &self.part.cubes[i];
            let p = c.center_point();
            let s = c.size();
            let jx = Jet::from_derivatives(&mollifier::bump_derivs(x[0], p[0], s), v[0]);
            let jy = Jet::from_derivatives(&mollifier::bump_derivs(x[1], p[1], s), v[1]);
            jx.mul(jy)
        };
        let mut total = Jet::constant(0.0);
        let mut own = Jet::constant(0.0);
        for &i in &sup {
            let j = jet(i);
            total = total.add(j);
            if i == idx {
                own = j;
            }
        }
        if total.derivatives()[0] == 0.0 {
            return [0.0; mollifier::MAX_ORDER + 1];
        }
        own.mul(total.recip()).derivatives()
    }
}

/// Sampled audit of the partition of unity.
#[derive(Clone, Debug, Default)]
pub struct PartitionOfUnityCheck {
    pub samples: usize,
    /// `max |sum psi - 1|` over boundary samples.
    pub sum_defect: f64,
    pub range_ok: bool,
    /// Samples where some `psi_Q > 0` outside `(4/3) Q`.
    pub support_violations: usize,
    /// `C_k = max |d_v^k psi_Q| size(Q)^k` over samples and directions, `k = 1..=3`.
    pub derivative_constants: [f64; 3],
}

pub fn check_partition_of_unity(part: &CubePartition, dom: &ConvexDomain, samples: usize) -> Result<PartitionOfUnityCheck> {
    let pu = PartitionOfUnity::new(part)?;
    let mut out = PartitionOfUnityCheck { samples, range_ok: true, ..Default::default() };
    let dirs: Vec<[f64; 2]> = (0..4).map(|k| {
        let t = std::f64::consts::PI * k as f64 / 4.0 + 0.1;
        [t.cos(), t.sin()]
    }).collect();
    for i in 0..samples {
        let s = TAU * (i as f64 + 0.37) / samples as f64;
        let x = dom.chart_unchecked(s).point;
        let vals = pu.psi_all(&x)?;
        let sum: f64 = vals.iter().map(|p| p.1).sum();
        out.sum_defect = out.sum_defect.max((sum - 1.0).abs());
        for &(idx, v) in &vals {
            if !(0.0..=1.0 + 1e-15).contains(&v) {
                out.range_ok = false;
            }
            let c = &part.cubes[idx];
            if !c.dilate_contains(&x, 4.0 / 3.0) {
                out.support_violations += 1;
            }
            for d in &dirs {
                let der = pu.psi_directional(idx, &x, d);
                for k in 1..=3 {
                    out.derivative_constants[k - 1] = out.derivative_constants[k - 1].max(der[k].abs() * c.size().powi(k as i32));
                }
            }
        }
    }
    Ok(out)
}

/// `E_eps(x0) = sum_Q (size^3/eps^2 ∧ 1) dist(x0, ∂Ω) size / |x0 - xbar(Q)|^2`.
pub fn error_functional(part: &CubePartition, dom: &ConvexDomain, x0: &[f64], eps: f64) -> Result<f64> {
    if !dom.contains(x0) {
        return Err(Error::Excluded(format!("{x0:?} is not inside the domain")));
    }
    if !part.dilates_containing(x0, 5.0).is_empty() {
        return Err(Error::Excluded(format!("{x0:?} lies in the boundary layer")));
    }
    let dist = dom.dist_to_boundary(x0);
    error_sum(part, x0, dist, eps)
}

fn error_sum(part: &CubePartition, x0: &[f64], dist: f64, eps: f64) -> Result<f64> {
    let mut acc = 0.0;
    for (c, a) in part.cubes.iter().zip(&part.anchors) {
        let a = a.as_ref().ok_or_else(|| Error::InvalidInput("cube without anchor".into()))?;
        let s = c.size();
        let r2 = (x0[0] - a.point[0]).powi(2) + (x0[1] - a.point[1]).powi(2);
        acc += (s * s * s / (eps * eps)).min(1.0) * dist * s / r2;
    }
    Ok(acc)
}

/// Quadrature of `E_eps` over `Ω \ Γ_eps` and of `|Γ_eps|`.
#[derive(Clone, Debug)]
pub struct ErrorNorms {
    pub eps: f64,
    pub l1: f64,
    pub l2_sq: f64,
    pub gamma_measure: f64,
    pub points: usize,
    pub excluded: usize,
}

/// Polar quadrature `x = (a r cos t, b r sin t)`, graded geometrically in `1 - r` toward
/// the boundary with angular spacing proportional to `1 - r`.
pub fn error_norms(part: &CubePartition, dom: &ConvexDomain, eps: f64) -> Result<ErrorNorms> {
    error_norms_refined(part, dom, eps, 1)
}

/// [`error_norms`] with `refine` times as many radial panels and angular nodes.
pub fn error_norms_refined(part: &CubePartition, dom: &ConvexDomain, eps: f64, refine: u32) -> Result<ErrorNorms> {
    if refine == 0 {
        return Err(Error::InvalidInput("refinement factor must be positive".into()));
    }
    let (a, b) = match *dom {
        ConvexDomain::Disc { radius } => (radius, radius),
        ConvexDomain::Ellipse { a, b } => (a, b),
    };
    let smin = part.cubes.iter().map(|c| c.size()).fold(f64::INFINITY, f64::min);
    let rho_lo = (smin / (4.0 * a.max(b))).min(0.25);
    let ratio = 1.05f64.powf(1.0 / refine as f64);
    let gauss = [(0.5 - 0.5 / 3f64.sqrt(), 0.5), (0.5 + 0.5 / 3f64.sqrt(), 0.5)];
    let mut out = ErrorNorms { eps, l1: 0.0, l2_sq: 0.0, gamma_measure: 0.0, points: 0, excluded: 0 };
    // innermost band is inside every 5Q of the cubes covering the nearest boundary point
    out.gamma_measure += a * b * 0.5 * TAU * (1.0 - (1.0 - rho_lo).powi(2));
    let mut lo = rho_lo;
    while lo < 1.0 {
        let hi = (lo * ratio).min(1.0);
        for &(g, w) in &gauss {
            let rho = lo + g * (hi - lo);
            let r = 1.0 - rho;
            let nt = ((TAU * refine as f64 / rho).ceil() as usize).clamp(64 * refine as usize, 1 << 24);
            let wt = w * (hi - lo) * a * b * r * TAU / nt as f64;
            for k in 0..nt {
                let t = TAU * (k as f64 + 0.5) / nt as f64;
                let x = [a * r * t.cos(), b * r * t.sin()];
                if !part.dilates_containing(&x, 5.0).is_empty() {
                    out.excluded += 1;
                    out.gamma_measure += wt;
                    continue;
                }
                let e = error_sum(part, &x, dom.dist_to_boundary(&x), eps)?;
                out.points += 1;
                out.l1 += e * wt;
                out.l2_sq += e * e * wt;
            }
        }
        lo = hi;
    }
    Ok(out)
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let lx: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_contact_classification() {
        let a = TriadicCube::new(0, [0, 0]);
        assert_eq!(contact(&a, &TriadicCube::new(0, [1, 0])), Contact::Touching);
        assert_eq!(contact(&a, &TriadicCube::new(0, [1, 1])), Contact::Touching);
        assert_eq!(contact(&a, &TriadicCube::new(0, [2, 0])), Contact::Apart);
        assert_eq!(contact(&a, &TriadicCube::new(1, [0, 0])), Contact::Overlapping);
        // [1/2, 3/2] against [3/2, 9/2]
        assert_eq!(contact(&TriadicCube::new(0, [1, 0]), &TriadicCube::new(1, [1, 0])), Contact::Touching);
        assert_eq!(contact(&TriadicCube::new(-30, [5, 0]), &TriadicCube::new(10, [0, 0])), Contact::Overlapping);
        let c = TriadicCube::new(-2, [4, -7]);
        let cands = parent_level_candidates(&c);
        for kx in -10..10 {
            for ky in -10..10 {
                let p = TriadicCube::new(-1, [kx, ky]);
                assert_eq!(cands.contains(&[kx, ky]), contact(&c, &p) != Contact::Apart);
            }
        }
    }

    #[test]
    fn cells_and_children() {
        let c = TriadicCube::new(-1, [2, -1]);
        let p = c.center_point();
        assert!(c.contains(&p));
        let kids: Vec<_> = c.children().collect();
        assert_eq!(kids.len(), 9);
        for k in &kids {
            assert!(c.contains(&k.center_point()));
        }
    }

    fn constant_partition(c: f64) -> (CubePartition, ConvexDomain) {
        let dom = ConvexDomain::unit_disc();
        let part = decompose(&dom, |_, _, _| c, c).unwrap();
        (part, dom)
    }

    #[test]
    fn constant_driver_sizes_and_properties() {
        for (m, c) in [(-2, 0.1), (-3, 0.03)] {
            assert!(pow3(m - 1) < c && c <= pow3(m));
            let (part, dom) = constant_partition(c);
            let chk = check_partition(&part, &dom, 10_000).unwrap();
            assert!(chk.exact_properties_hold(), "{chk:?}");
            for cube in &part.cubes {
                assert!((m - 1..=m + 1).contains(&cube.level), "{cube:?}");
            }
        }
    }

    #[test]
    fn deterministic_output() {
        let (a, _) = constant_partition(0.05);
        let (b, _) = constant_partition(0.05);
        assert_eq!(a.cubes, b.cubes);
        let mut sorted = a.cubes.clone();
        sorted.sort();
        assert_eq!(sorted, a.cubes);
    }

    #[test]
    fn rejects_values_below_floor() {
        let dom = ConvexDomain::unit_disc();
        assert!(decompose(&dom, |s, _, _| 0.1 + s, 0.2).is_err());
        assert!(decompose(&dom, |_, _, _| 1.0, 0.0).is_err());
    }

    #[test]
    fn partition_of_unity_on_constant_partition() {
        let (part, dom) = constant_partition(0.1);
        let chk = check_partition_of_unity(&part, &dom, 2000).unwrap();
        assert!(chk.sum_defect < 1e-12, "{chk:?}");
        assert!(chk.range_ok && chk.support_violations == 0);
        assert!(chk.derivative_constants.iter().all(|c| c.is_finite() && *c > 0.0));
    }

    #[test]
    fn single_cube_window_is_one_on_its_arc() {
        let part = CubePartition::from_cubes(vec![TriadicCube::new(1, [0, 0])], None).unwrap();
        let pu = PartitionOfUnity::new(&part).unwrap();
        for s in [0.0, 1.0, 2.5, 4.0] {
            let x = ConvexDomain::unit_disc().chart_unchecked(s).point;
            assert!((pu.psi(0, &x).unwrap() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn two_neighbours_sum_to_one() {
        let cubes = vec![TriadicCube::new(-1, [0, 0]), TriadicCube::new(-1, [1, 0])];
        let part = CubePartition::from_cubes(cubes, None).unwrap();
        let pu = PartitionOfUnity::new(&part).unwrap();
        for t in 0..50 {
            let x = [1.0 / 6.0 + (t as f64 - 25.0) / 300.0, 0.05];
            let v = pu.psi_all(&x).unwrap();
            let s: f64 = v.iter().map(|p| p.1).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn one_term_error_functional() {
        let eps = 0.01f64;
        let level = (eps.ln() / 3f64.ln()).round() as i32;
        let s = pow3(level);
        let anchor = Anchor { s: 0.0, point: [1.0, 0.0], normal: [1.0, 0.0], a_lb: 1.0 };
        let part = CubePartition::from_cubes(vec![TriadicCube::new(level, [(1.0 / s).round() as i64, 0])], Some(vec![anchor])).unwrap();
        let dom = ConvexDomain::unit_disc();
        let x0 = [0.5, 0.0];
        let v = error_functional(&part, &dom, &x0, eps).unwrap();
        let expect = (s.powi(3) / (eps * eps)).min(1.0) * 0.5 / 0.25 * s;
        assert!((v - expect).abs() < 1e-15 * expect);
        assert!(v >= 0.0);
        let inside_layer = [(1.0 / s).round() * s - s, 0.0];
        assert!(matches!(error_functional(&part, &dom, &inside_layer, eps), Err(Error::Excluded(_))));
        assert!(error_functional(&part, &dom, &[2.0, 0.0], eps).is_err());
    }

    #[test]
    fn diophantine_partition_anchors() {
        let dom = ConvexDomain::unit_disc();
        let driver = DiophantineDriver::new(2f64.powi(-6), 0.02, 1.5, None).unwrap();
        let part = decompose_diophantine(&dom, driver).unwrap();
        let chk = check_partition(&part, &dom, 10_000).unwrap();
        assert!(chk.exact_properties_hold(), "{chk:?}");
        let samples = part.samples.as_ref().unwrap();
        let a = &samples.a.as_ref().unwrap().2;
        for (c, anchor) in part.cubes.iter().zip(&part.anchors) {
            let anchor = anchor.as_ref().unwrap();
            assert!(anchor.a_lb * c.size() >= driver.floor() * (1.0 - 1e-12));
            assert!(c.dilate_contains(&anchor.point, 3.0));
            // argmax over the samples of 3Q
            let best = samples
                .points
                .iter()
                .zip(a)
                .filter(|(p, _)| (0..2).all(|i| (cell_of(*p, c.level)[i] - c.center[i]).abs() <= 1))
                .map(|(_, &v)| v)
                .fold(0.0, f64::max);
            assert_eq!(anchor.a_lb, best);
        }
    }
}
