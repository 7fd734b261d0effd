//! Finite-state topological Markov shifts and cocycles over them.
//!
//! Points are bi-infinite admissible vertex sequences. The ones this crate
//! works with are eventually periodic in both directions (periodic and
//! homoclinic words) or come from a finite sampled window padded with
//! periodic fillers.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cocycle::{invert, iterate, Cocycle};
use crate::error::{Error, Result};
use crate::holonomy::{holonomy_to_tolerance, Side};
use crate::linalg::{eigen_by_modulus, from_rows, to_rows, DEFAULT_RESIDUAL_TOL};
use crate::report::{
    decide, eigenbasis_form, pinching_from_eigen, twisting_check, CriterionReport,
    HomoclinicReport, PinchingReport, Provenance, Tolerances, TwistingReport, Verdict,
    REPORT_SCHEMA_VERSION,
};

/// Longest period accepted by [`enumerate_periodic`].
pub const MAX_PERIOD: usize = 12;
/// Half-width of the window on which base distances are evaluated.
pub const METRIC_WINDOW: i64 = 64;
/// Default length of the sampled window behind [`Cocycle::sample`].
pub const DEFAULT_SAMPLE_LENGTH: usize = 1 << 16;

/// A directed graph on `0..vertex_count` with the metric parameter `chi`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovShift {
    adjacency: Vec<Vec<bool>>,
    chi: f64,
}

impl MarkovShift {
    /// Every vertex needs an incoming and an outgoing edge.
    pub fn new(vertex_count: usize, edges: &[(u32, u32)], chi: f64) -> Result<Self> {
        if vertex_count == 0 {
            return Err(Error::InvalidInput(
                "shift needs at least one vertex".into(),
            ));
        }
        if !(chi > 0.0) || !chi.is_finite() {
            return Err(Error::InvalidInput(format!(
                "chi must be positive, got {chi}"
            )));
        }
        let mut adjacency = vec![vec![false; vertex_count]; vertex_count];
        for &(a, b) in edges {
            if a as usize >= vertex_count || b as usize >= vertex_count {
                return Err(Error::InvalidInput(format!(
                    "edge {a} -> {b} leaves the vertex set"
                )));
            }
            adjacency[a as usize][b as usize] = true;
        }
        for v in 0..vertex_count {
            if !adjacency[v].iter().any(|&e| e) {
                return Err(Error::InvalidInput(format!(
                    "vertex {v} has no outgoing edge"
                )));
            }
            if !(0..vertex_count).any(|u| adjacency[u][v]) {
                return Err(Error::InvalidInput(format!(
                    "vertex {v} has no incoming edge"
                )));
            }
        }
        Ok(MarkovShift { adjacency, chi })
    }

    /// The full shift on `n` symbols.
    pub fn full(n: usize, chi: f64) -> Result<Self> {
        let edges: Vec<(u32, u32)> = (0..n as u32)
            .flat_map(|a| (0..n as u32).map(move |b| (a, b)))
            .collect();
        MarkovShift::new(n, &edges, chi)
    }

    pub fn vertex_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn chi(&self) -> f64 {
        self.chi
    }

    pub fn has_edge(&self, from: u32, to: u32) -> bool {
        self.adjacency
            .get(from as usize)
            .and_then(|row| row.get(to as usize))
            .copied()
            .unwrap_or(false)
    }

    pub fn edges(&self) -> Vec<(u32, u32)> {
        let n = self.vertex_count() as u32;
        (0..n)
            .flat_map(|a| (0..n).map(move |b| (a, b)))
            .filter(|&(a, b)| self.has_edge(a, b))
            .collect()
    }

    /// Strong connectivity of the graph.
    pub fn is_irreducible(&self) -> bool {
        let n = self.vertex_count();
        let reach = |forward: bool| {
            let mut seen = vec![false; n];
            let mut stack = vec![0usize];
            seen[0] = true;
            while let Some(v) = stack.pop() {
                for u in 0..n {
                    let e = if forward {
                        self.adjacency[v][u]
                    } else {
                        self.adjacency[u][v]
                    };
                    if e && !seen[u] {
                        seen[u] = true;
                        stack.push(u);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        reach(true) && reach(false)
    }

    /// Equal weights on the outgoing edges of each vertex.
    pub fn uniform_weights(&self) -> Vec<Vec<f64>> {
        self.adjacency
            .iter()
            .map(|row| {
                let k = row.iter().filter(|&&e| e).count() as f64;
                row.iter().map(|&e| if e { 1.0 / k } else { 0.0 }).collect()
            })
            .collect()
    }

    fn check_word(&self, word: &[u32], first_position: i64) -> Result<()> {
        for (i, w) in word.windows(2).enumerate() {
            if !self.has_edge(w[0], w[1]) {
                return Err(Error::NotAdmissible {
                    from: w[0],
                    to: w[1],
                    position: first_position + i as i64,
                });
            }
        }
        Ok(())
    }
}

/// A directed cycle, read as the periodic sequence `P_n = symbols[n mod q]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PeriodicWord {
    symbols: Vec<u32>,
}

impl PeriodicWord {
    pub fn new(shift: &MarkovShift, symbols: Vec<u32>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::InvalidInput("periodic word is empty".into()));
        }
        let mut closed = symbols.clone();
        closed.push(symbols[0]);
        shift.check_word(&closed, 0)?;
        Ok(PeriodicWord { symbols })
    }

    pub fn symbols(&self) -> &[u32] {
        &self.symbols
    }

    pub fn period(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbol(&self, n: i64) -> u32 {
        self.symbols[n.rem_euclid(self.symbols.len() as i64) as usize]
    }
}

/// `U_n = P_n` except at `1..=insertion.len()`, where the insertion sits.
///
/// `l` is the smallest multiple of the period with `l > insertion.len()`,
/// so that `σ^l U` agrees with `P` on all nonnegative coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HomoclinicWord {
    pub base: PeriodicWord,
    pub insertion: Vec<u32>,
    pub l: usize,
    /// Empty insertion: the sequence is `P` itself.
    pub trivial: bool,
}

impl HomoclinicWord {
    pub fn symbol(&self, n: i64) -> u32 {
        if n >= 1 && n <= self.insertion.len() as i64 {
            self.insertion[(n - 1) as usize]
        } else {
            self.base.symbol(n)
        }
    }
}

/// All primitive cycles of length exactly `q`, one per rotation class.
///
/// Each class is represented by its lexicographically least rotation and
/// the list is sorted.
pub fn enumerate_periodic(shift: &MarkovShift, q: usize) -> Result<Vec<PeriodicWord>> {
    if q > MAX_PERIOD {
        return Err(Error::TooLong {
            q,
            limit: MAX_PERIOD,
        });
    }
    if q == 0 {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    let mut word = Vec::with_capacity(q);
    fn extend(shift: &MarkovShift, q: usize, word: &mut Vec<u32>, out: &mut Vec<PeriodicWord>) {
        if word.len() == q {
            if shift.has_edge(word[q - 1], word[0]) && is_canonical(word) {
                out.push(PeriodicWord {
                    symbols: word.clone(),
                });
            }
            return;
        }
        for v in 0..shift.vertex_count() as u32 {
            // The first symbol of a canonical word is its smallest symbol.
            if !word.is_empty() && (v < word[0] || !shift.has_edge(*word.last().unwrap(), v)) {
                continue;
            }
            word.push(v);
            extend(shift, q, word, out);
            word.pop();
        }
    }
    extend(shift, q, &mut word, &mut out);
    out.sort();
    Ok(out)
}

/// Primitive and strictly smaller than every nontrivial rotation.
fn is_canonical(word: &[u32]) -> bool {
    let q = word.len();
    (1..q).all(|r| {
        let rotated = word[r..].iter().chain(&word[..r]);
        word.iter().lt(rotated)
    })
}

/// Splices `insertion` into `P` after coordinate 0.
pub fn make_homoclinic(
    shift: &MarkovShift,
    base: &PeriodicWord,
    insertion: &[u32],
) -> Result<HomoclinicWord> {
    let q = base.period();
    if let Some(&v) = insertion
        .iter()
        .find(|&&v| v as usize >= shift.vertex_count())
    {
        return Err(Error::InvalidInput(format!("symbol {v} is not a vertex")));
    }
    let len = insertion.len();
    let l = if len == 0 {
        q
    } else {
        (len + 1).div_ceil(q) * q
    };
    let word = HomoclinicWord {
        base: base.clone(),
        insertion: insertion.to_vec(),
        l,
        trivial: len == 0,
    };
    let span: Vec<u32> = (0..=(len as i64 + 1)).map(|n| word.symbol(n)).collect();
    shift.check_word(&span, 0)?;
    Ok(word)
}

/// Symbols of a sequence on the index range `offset..offset + symbols.len()`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Window {
    pub offset: i64,
    pub symbols: Vec<u32>,
}

impl Window {
    pub fn get(&self, n: i64) -> Option<u32> {
        let i = n - self.offset;
        if i < 0 {
            None
        } else {
            self.symbols.get(i as usize).copied()
        }
    }

    fn first(&self) -> i64 {
        self.offset
    }

    fn last(&self) -> i64 {
        self.offset + self.symbols.len() as i64 - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub distance: f64,
    /// The windows agree on the whole common range; `distance` is then an upper bound.
    pub equal_on_window: bool,
}

/// `exp(-(chi/2)·min{|n| : R_n ≠ S_n})` evaluated on the common range `[-m, m]`.
pub fn shift_metric(r: &Window, s: &Window, chi: f64) -> Result<MetricValue> {
    let m = [-r.first(), r.last(), -s.first(), s.last()]
        .into_iter()
        .min()
        .unwrap_or(-1);
    if m < 0 {
        return Err(Error::InvalidInput(
            "windows must both cover index 0".into(),
        ));
    }
    for n in 0..=m {
        if r.get(n) != s.get(n) || r.get(-n) != s.get(-n) {
            return Ok(MetricValue {
                distance: (-0.5 * chi * n as f64).exp(),
                equal_on_window: false,
            });
        }
    }
    Ok(MetricValue {
        distance: (-0.5 * chi * (m + 1) as f64).exp(),
        equal_on_window: true,
    })
}

#[derive(Debug)]
struct Sequence {
    left: Vec<u32>,
    middle: Vec<u32>,
    start: i64,
    right: Vec<u32>,
}

impl Sequence {
    fn symbol(&self, i: i64) -> u32 {
        if i < self.start {
            self.left[i.rem_euclid(self.left.len() as i64) as usize]
        } else if i < self.start + self.middle.len() as i64 {
            self.middle[(i - self.start) as usize]
        } else {
            self.right[i.rem_euclid(self.right.len() as i64) as usize]
        }
    }

    fn end(&self) -> i64 {
        self.start + self.middle.len() as i64
    }
}

/// A point of the shift: a shared sequence viewed from `origin`.
///
/// Shifting only moves the origin, so stepping is O(1).
#[derive(Debug, Clone)]
pub struct ShiftPoint {
    seq: Arc<Sequence>,
    origin: i64,
}

impl ShiftPoint {
    /// The periodic point `P`.
    pub fn periodic(p: &PeriodicWord) -> Self {
        ShiftPoint {
            seq: Arc::new(Sequence {
                left: p.symbols.clone(),
                middle: Vec::new(),
                start: 0,
                right: p.symbols.clone(),
            }),
            origin: 0,
        }
    }

    /// The homoclinic point `U`.
    pub fn homoclinic(u: &HomoclinicWord) -> Self {
        ShiftPoint {
            seq: Arc::new(Sequence {
                left: u.base.symbols.clone(),
                middle: u.insertion.clone(),
                start: 1,
                right: u.base.symbols.clone(),
            }),
            origin: 0,
        }
    }

    /// `symbols` placed at coordinates `0..len`, with both tails repeating
    /// the nearest end symbol. The tails need not be admissible.
    pub fn from_window(symbols: Vec<u32>) -> Result<Self> {
        let (Some(&first), Some(&last)) = (symbols.first(), symbols.last()) else {
            return Err(Error::InvalidInput("empty symbol window".into()));
        };
        Ok(ShiftPoint {
            seq: Arc::new(Sequence {
                left: vec![first],
                middle: symbols,
                start: 0,
                right: vec![last],
            }),
            origin: 0,
        })
    }

    /// Coordinate `n` of the point.
    pub fn symbol(&self, n: i64) -> u32 {
        self.seq.symbol(self.origin + n)
    }

    pub fn shifted(&self, n: i64) -> Self {
        ShiftPoint {
            seq: Arc::clone(&self.seq),
            origin: self.origin + n,
        }
    }

    pub fn window(&self, m: i64) -> Window {
        Window {
            offset: -m,
            symbols: (-m..=m).map(|n| self.symbol(n)).collect(),
        }
    }

    /// Whether `other` agrees with `self` on all coordinates `n ≥ 0`
    /// (stable side) or `n ≤ 0` (unstable side).
    pub fn same_local_leaf(&self, other: &ShiftPoint, side: Side) -> bool {
        let period = lcm(
            lcm(self.seq.left.len(), self.seq.right.len()),
            lcm(other.seq.left.len(), other.seq.right.len()),
        ) as i64;
        match side {
            Side::Stable => {
                let reach = (self.seq.end() - self.origin)
                    .max(other.seq.end() - other.origin)
                    .max(0);
                (0..reach + period).all(|n| self.symbol(n) == other.symbol(n))
            }
            Side::Unstable => {
                let reach = (self.origin - self.seq.start)
                    .max(other.origin - other.seq.start)
                    .max(0);
                (0..=reach + period).all(|n| self.symbol(-n) == other.symbol(-n))
            }
        }
    }
}

fn lcm(a: usize, b: usize) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    a / gcd(a, b) * b
}

/// Generator of a cocycle over the shift.
#[derive(Debug, Clone, PartialEq)]
pub enum ShiftGenerator {
    /// `A(x) = table[x_0]`.
    LocallyConstant { table: Vec<DMatrix<f64>> },
    /// `A(x) = table[x_0]·(I + ε Σ_{1≤|j|≤depth} decay^{|j|} perturbations[x_j])`.
    Holder {
        table: Vec<DMatrix<f64>>,
        perturbations: Vec<DMatrix<f64>>,
        epsilon: f64,
        decay: f64,
        depth: usize,
    },
}

/// A cocycle over a Markov shift, with the Markov measure used for sampling.
#[derive(Debug, Clone)]
pub struct ShiftCocycle {
    shift: MarkovShift,
    generator: ShiftGenerator,
    alpha: f64,
    weights: Vec<Vec<f64>>,
    sample_length: usize,
}

fn check_table(shift: &MarkovShift, table: &[DMatrix<f64>]) -> Result<usize> {
    if table.len() != shift.vertex_count() {
        return Err(Error::DimensionMismatch(format!(
            "{} matrices for {} vertices",
            table.len(),
            shift.vertex_count()
        )));
    }
    let d = table[0].nrows();
    if d == 0 || table.iter().any(|m| m.nrows() != d || m.ncols() != d) {
        return Err(Error::DimensionMismatch(
            "matrices must be square of one size".into(),
        ));
    }
    for m in table {
        invert(m)?;
    }
    Ok(d)
}

/// Cocycle reading only the symbol at coordinate 0.
pub fn locally_constant_cocycle(
    shift: &MarkovShift,
    table: Vec<DMatrix<f64>>,
    alpha: f64,
) -> Result<ShiftCocycle> {
    check_table(shift, &table)?;
    ShiftCocycle::new(
        shift.clone(),
        ShiftGenerator::LocallyConstant { table },
        alpha,
    )
}

/// Cocycle depending on the coordinates `-depth..=depth` with geometric weights.
pub fn holder_cocycle(
    shift: &MarkovShift,
    table: Vec<DMatrix<f64>>,
    perturbations: Vec<DMatrix<f64>>,
    epsilon: f64,
    decay: f64,
    depth: usize,
) -> Result<ShiftCocycle> {
    let d = check_table(shift, &table)?;
    if perturbations.len() != table.len()
        || perturbations
            .iter()
            .any(|m| m.nrows() != d || m.ncols() != d)
    {
        return Err(Error::DimensionMismatch(
            "perturbations must match the table".into(),
        ));
    }
    let sys = ShiftCocycle::new(
        shift.clone(),
        ShiftGenerator::Holder {
            table,
            perturbations,
            epsilon,
            decay,
            depth,
        },
        1.0,
    )?;
    Ok(sys)
}

impl ShiftCocycle {
    fn new(shift: MarkovShift, generator: ShiftGenerator, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "Hölder exponent {alpha} not in (0, 1]"
            )));
        }
        let weights = shift.uniform_weights();
        Ok(ShiftCocycle {
            shift,
            generator,
            alpha,
            weights,
            sample_length: DEFAULT_SAMPLE_LENGTH,
        })
    }

    /// Replaces the transition weights of the sampling measure.
    pub fn with_weights(mut self, weights: Vec<Vec<f64>>) -> Result<Self> {
        check_weights(&self.shift, &weights)?;
        self.weights = weights;
        Ok(self)
    }

    /// Length of the sampled window behind [`Cocycle::sample`].
    pub fn with_sample_length(mut self, n: usize) -> Self {
        self.sample_length = n.max(1);
        self
    }

    pub fn shift(&self) -> &MarkovShift {
        &self.shift
    }

    pub fn generator_kind(&self) -> &ShiftGenerator {
        &self.generator
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn is_locally_constant(&self) -> bool {
        matches!(self.generator, ShiftGenerator::LocallyConstant { .. })
    }
}

impl Cocycle for ShiftCocycle {
    type Point = ShiftPoint;

    fn fiber_dim(&self) -> usize {
        match &self.generator {
            ShiftGenerator::LocallyConstant { table } | ShiftGenerator::Holder { table, .. } => {
                table[0].nrows()
            }
        }
    }

    fn step(&self, x: &ShiftPoint) -> ShiftPoint {
        x.shifted(1)
    }

    fn inverse_step(&self, x: &ShiftPoint) -> ShiftPoint {
        x.shifted(-1)
    }

    fn generator(&self, x: &ShiftPoint) -> DMatrix<f64> {
        match &self.generator {
            ShiftGenerator::LocallyConstant { table } => table[x.symbol(0) as usize].clone(),
            ShiftGenerator::Holder {
                table,
                perturbations,
                epsilon,
                decay,
                depth,
            } => {
                let d = table[0].nrows();
                let mut sum = DMatrix::zeros(d, d);
                for j in 1..=*depth as i64 {
                    let w = decay.powi(j as i32);
                    sum += &perturbations[x.symbol(j) as usize] * w;
                    sum += &perturbations[x.symbol(-j) as usize] * w;
                }
                &table[x.symbol(0) as usize] * (DMatrix::identity(d, d) + sum * *epsilon)
            }
        }
    }

    fn holder_exponent(&self) -> f64 {
        self.alpha
    }

    fn sample(&self, seed: u64) -> ShiftPoint {
        let symbols = sample_markov_orbit(&self.shift, &self.weights, seed, self.sample_length)
            .expect("weights are validated on construction");
        ShiftPoint::from_window(symbols).expect("sample length is positive")
    }

    fn distance(&self, x: &ShiftPoint, y: &ShiftPoint) -> f64 {
        if Arc::ptr_eq(&x.seq, &y.seq) && x.origin == y.origin {
            return 0.0;
        }
        shift_metric(
            &x.window(METRIC_WINDOW),
            &y.window(METRIC_WINDOW),
            self.shift.chi,
        )
        .map(|m| m.distance)
        .unwrap_or(1.0)
    }
}

/// Holonomy between two points of one local stable or unstable set.
///
/// Locally constant cocycles have identical partial products along the
/// shared side, so the holonomy is exactly the identity.
pub fn shift_holonomy(
    sys: &ShiftCocycle,
    r: &ShiftPoint,
    s: &ShiftPoint,
    side: Side,
    tol: &Tolerances,
) -> Result<(DMatrix<f64>, f64)> {
    if !r.same_local_leaf(s, side) {
        return Err(Error::NotOnSameLeaf { side: side.name() });
    }
    let d = sys.fiber_dim();
    if sys.is_locally_constant() {
        return Ok((DMatrix::identity(d, d), 0.0));
    }
    let (h, _) = holonomy_to_tolerance(sys, r, s, side, tol)?;
    Ok((h.matrix, h.tail_bound))
}

/// `ψ = H^s_{σ^l U, P} · A^l(U) · H^u_{P, U}` with the holonomy tails.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMap {
    pub matrix: DMatrix<f64>,
    pub tails: Vec<f64>,
    pub l: usize,
}

pub fn transition_map_shift(
    sys: &ShiftCocycle,
    p: &PeriodicWord,
    u: &HomoclinicWord,
    tol: &Tolerances,
) -> Result<TransitionMap> {
    let pp = ShiftPoint::periodic(p);
    let up = ShiftPoint::homoclinic(u);
    let l = u.l as i64;
    let (hu, tu) = shift_holonomy(sys, &pp, &up, Side::Unstable, tol)?;
    let middle = iterate(sys, &up, l)?;
    // σ^l U agrees with P on nonnegative coordinates, and P is σ^l-invariant.
    let (hs, ts) = shift_holonomy(sys, &up.shifted(l), &pp, Side::Stable, tol)?;
    Ok(TransitionMap {
        matrix: hs * middle * hu,
        tails: vec![tu, ts],
        l: u.l,
    })
}

/// Pinching and twisting for a periodic word and a homoclinic word.
///
/// Numerical trouble never escapes as an error; it is reported as a
/// not-decided verdict with the reason attached.
pub fn simplicity_check_shift(
    sys: &ShiftCocycle,
    p: &PeriodicWord,
    u: &HomoclinicWord,
    tol: &Tolerances,
) -> CriterionReport {
    let mut blockers = Vec::new();
    let assumptions = vec![
        "sampling measure has full support and local product structure: irreducible shift with positive weights on every edge".to_string(),
    ];
    if !sys.shift.is_irreducible() {
        blockers.push("shift is not irreducible".to_string());
    }
    let q = p.period() as i64;
    let eigen = iterate(sys, &ShiftPoint::periodic(p), q)
        .and_then(|m| eigen_by_modulus(&m, DEFAULT_RESIDUAL_TOL));
    let (pinching, eigen) = match eigen {
        Ok(e) => (pinching_from_eigen(&e, tol.rel_gap), Some(e)),
        Err(e) => {
            blockers.push(format!("return map eigen-decomposition failed: {e}"));
            (
                PinchingReport {
                    ok: false,
                    band: crate::report::Band::Borderline,
                    moduli: Vec::new(),
                    min_relative_gap: None,
                },
                None,
            )
        }
    };
    let mut twisting = TwistingReport::not_applicable();
    let mut tails = Vec::new();
    let mut transition_matrix = Vec::new();
    match transition_map_shift(sys, p, u, tol) {
        Ok(psi) => {
            tails = psi.tails.clone();
            if let Some(t) = tails.iter().find(|t| !(**t < tol.tail_target)) {
                blockers.push(format!("holonomy tail {t:.3e} above target"));
            }
            transition_matrix = to_rows(&psi.matrix);
            if let Some(e) = &eigen {
                match twisting_check(&psi.matrix, e, tol.minor_tol) {
                    Ok(t) => {
                        if t.applicable {
                            if let Some(v) = e.real_vectors(DEFAULT_RESIDUAL_TOL) {
                                if let Ok(c) = eigenbasis_form(&psi.matrix, &v) {
                                    transition_matrix = to_rows(&c);
                                }
                            }
                        }
                        twisting = t;
                    }
                    Err(err) => blockers.push(format!("twisting check failed: {err}")),
                }
            }
        }
        Err(err) => blockers.push(format!("transition map failed: {err}")),
    }
    let (verdict, reasons) = decide(&pinching, &twisting, None, &blockers);
    let verdict = if sys.shift.is_irreducible() {
        verdict
    } else {
        Verdict::NotDecided
    };
    CriterionReport {
        schema_version: REPORT_SCHEMA_VERSION,
        verdict,
        pinching,
        twisting,
        bunching: None,
        hyperbolicity: None,
        holonomy_tails: tails,
        homoclinic: HomoclinicReport {
            l: u.l as u64,
            transversality_angle: None,
        },
        transition_matrix,
        tolerances: *tol,
        assumptions,
        reasons,
        provenance: Provenance::default(),
    }
}

fn check_weights(shift: &MarkovShift, weights: &[Vec<f64>]) -> Result<()> {
    let n = shift.vertex_count();
    if weights.len() != n || weights.iter().any(|r| r.len() != n) {
        return Err(Error::NotStochastic(format!("weights must be {n}x{n}")));
    }
    for (a, row) in weights.iter().enumerate() {
        for (b, &w) in row.iter().enumerate() {
            let edge = shift.has_edge(a as u32, b as u32);
            if !w.is_finite() || (edge && w <= 0.0) || (!edge && w != 0.0) {
                return Err(Error::NotStochastic(format!(
                    "weight {w} on {a} -> {b} (edge present: {edge})"
                )));
            }
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::NotStochastic(format!("row {a} sums to {sum}")));
        }
    }
    Ok(())
}

/// Stationary distribution of an irreducible transition matrix.
pub fn stationary_distribution(weights: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = weights.len();
    // Solve π(P - I) = 0 with the last equation replaced by Σπ = 1.
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = weights[j][i] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = nalgebra::DVector::zeros(n);
    b[n - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::NotStochastic("stationary distribution is not unique".into()))?;
    if pi.iter().any(|p| !(*p > 0.0)) {
        return Err(Error::NotStochastic(
            "stationary distribution is not positive".into(),
        ));
    }
    Ok(pi.iter().copied().collect())
}

/// Stationary Markov chain sample of length `n`, deterministic per seed.
pub fn sample_markov_orbit(
    shift: &MarkovShift,
    weights: &[Vec<f64>],
    seed: u64,
    n: usize,
) -> Result<Vec<u32>> {
    check_weights(shift, weights)?;
    let pi = stationary_distribution(weights)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let initial = WeightedIndex::new(&pi).map_err(|e| Error::NotStochastic(e.to_string()))?;
    let rows = weights
        .iter()
        .map(|r| WeightedIndex::new(r).map_err(|e| Error::NotStochastic(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return Ok(out);
    }
    let mut v = initial.sample(&mut rng);
    out.push(v as u32);
    for _ in 1..n {
        v = rows[v].sample(&mut rng);
        out.push(v as u32);
    }
    Ok(out)
}

/// Serialized form of a shift with a matrix table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftSpec {
    pub vertices: usize,
    pub edges: Vec<[u32; 2]>,
    pub chi: f64,
    /// One row-major matrix per vertex.
    pub matrices: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holder: Option<HolderSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HolderSpec {
    pub perturbations: Vec<Vec<Vec<f64>>>,
    pub epsilon: f64,
    pub decay: f64,
    pub depth: usize,
}

impl ShiftSpec {
    pub fn shift(&self) -> Result<MarkovShift> {
        let edges: Vec<(u32, u32)> = self.edges.iter().map(|e| (e[0], e[1])).collect();
        MarkovShift::new(self.vertices, &edges, self.chi)
    }

    pub fn build(&self) -> Result<ShiftCocycle> {
        let shift = self.shift()?;
        let table = self
            .matrices
            .iter()
            .map(|m| from_rows(m))
            .collect::<Result<Vec<_>>>()?;
        let sys = match &self.holder {
            None => locally_constant_cocycle(&shift, table, 1.0)?,
            Some(h) => {
                let perturbations = h
                    .perturbations
                    .iter()
                    .map(|m| from_rows(m))
                    .collect::<Result<Vec<_>>>()?;
                holder_cocycle(&shift, table, perturbations, h.epsilon, h.decay, h.depth)?
            }
        };
        match &self.weights {
            Some(w) => sys.with_weights(w.clone()),
            None => Ok(sys),
        }
    }
}
