//! Reference likelihoods for small instances.
//!
//! [`exact_likelihood_cells`] cuts the null space into boxes on which the
//! consistency count cannot change and sums the probability mass of the
//! boxes where the event holds. [`grid_likelihood`] is a midpoint rule over
//! an equal-probability grid that reports the mass of the cells it could not
//! decide as its uncertainty.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::approx::{sample_count, ApproxError, LikelihoodQuery};
use crate::expr::Arith;
use crate::condworld::{lift, prune, world_of, LiftOptions, WorldError, ANSWER};
use crate::model::{IncompleteDatabase, NullId, Valuation};
use crate::query::{Bound, Query};
use crate::random::Distribution;
use crate::ratfn::RatFn;

pub const DEFAULT_CELL_LIMIT: u64 = 1_000_000;

/// Probability cut from each unbounded tail in grid mode.
pub const TAIL_MASS: f64 = 1e-6;

/// Tolerance on the total mass of a cell decomposition.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Grid mode handles at most this many nulls.
pub const MAX_GRID_NULLS: usize = 3;

/// Blocks per null on the first grid pass.
const COARSE_BLOCKS: u64 = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error("not cell-decomposable: {0}")]
    NotCellDecomposable(String),
    #[error("{cells} cells exceed the limit of {limit}")]
    CellLimit { cells: u128, limit: u64 },
    #[error("grid mode supports at most {max} nulls, found {found}")]
    TooManyNulls { found: usize, max: usize },
    #[error("cell masses sum to {0}")]
    MassDefect(f64),
    #[error("resolution must be positive")]
    InvalidResolution,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    Exact,
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub value: f64,
    pub mode: OracleMode,
    pub uncertainty: f64,
    pub cells: u64,
}

/// Sorted breakpoints per null.
pub type Breakpoints = BTreeMap<NullId, Vec<f64>>;

fn not_decomposable(e: WorldError) -> OracleError {
    match e {
        WorldError::BlowupLimit { pairs, cap } => OracleError::CellLimit {
            cells: pairs,
            limit: cap as u64,
        },
        other => OracleError::NotCellDecomposable(other.to_string()),
    }
}

fn add_breakpoint(points: &mut Breakpoints, f: &RatFn) -> Result<(), OracleError> {
    if f.is_constant() {
        return Ok(());
    }
    let (id, a, b) = f
        .as_affine()
        .ok_or_else(|| OracleError::NotCellDecomposable(format!("{f} is not affine in one null")))?;
    points.entry(id).or_default().push(-b / a);
    Ok(())
}

/// Breakpoints at which the consistency count of `l` over `db` may change.
///
/// Every order test met while lifting the query, and every comparison of an
/// answer entry with an interval endpoint, has to be affine in a single
/// null; the interval endpoints have to be constants.
pub fn breakpoints(l: &LikelihoodQuery, db: &IncompleteDatabase, cell_limit: u64) -> Result<Breakpoints, OracleError> {
    l.prepare(db)?;
    let mut ends = Vec::with_capacity(l.intervals.len());
    for spec in &l.intervals {
        let mut pair = [None, None];
        for (slot, b) in pair.iter_mut().zip([spec.lower(), spec.upper()]) {
            if let Bound::Finite(e) = b {
                if !e.is_const() {
                    return Err(OracleError::NotCellDecomposable(format!("interval endpoint {e} is not constant")));
                }
                let f = RatFn::from_expr(e).map_err(|e| OracleError::NotCellDecomposable(e.to_string()))?;
                *slot = f.as_constant();
            }
        }
        ends.push(pair);
    }
    let opts = LiftOptions {
        blowup_cap: usize::try_from(cell_limit).unwrap_or(usize::MAX),
        prune_intermediate: true,
    };
    let lifted = prune(&lift(&l.query, &world_of(db), opts).map_err(not_decomposable)?);
    let mut points = Breakpoints::new();
    for pair in &lifted.pairs {
        for e in pair.condition.members() {
            add_breakpoint(&mut points, e)?;
        }
        for (row, _) in pair.relations[ANSWER].iter() {
            for (t, [lo, hi]) in row.iter().zip(&ends) {
                for c in [lo, hi].into_iter().flatten() {
                    add_breakpoint(&mut points, &t.clone().minus(&RatFn::constant(*c)))?;
                }
            }
        }
    }
    for list in points.values_mut() {
        list.sort_by(f64::total_cmp);
        list.dedup();
    }
    Ok(points)
}

/// One null's share of a cell: its mass and a point inside it.
#[derive(Debug, Clone, Copy)]
struct Slab {
    mass: f64,
    point: f64,
}

/// Slabs between consecutive breakpoints; the representative point is the
/// conditional median, which lies strictly inside the slab.
fn slabs(dist: &Distribution, cuts: &[f64]) -> Vec<Slab> {
    let mut probs = vec![0.0];
    probs.extend(cuts.iter().map(|&x| dist.cdf(x)));
    probs.push(1.0);
    probs
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| Slab {
            mass: w[1] - w[0],
            point: dist.quantile(0.5 * (w[0] + w[1])),
        })
        .collect()
}

fn for_each_cell(axes: &[(NullId, Vec<Slab>)], mut f: impl FnMut(&Valuation, f64) -> Result<(), OracleError>) -> Result<(), OracleError> {
    let mut index = vec![0usize; axes.len()];
    loop {
        let mut v = Valuation::new();
        let mut mass = 1.0;
        for ((id, slabs), &i) in axes.iter().zip(&index) {
            v.insert(*id, slabs[i].point);
            mass *= slabs[i].mass;
        }
        f(&v, mass)?;
        let mut d = 0;
        loop {
            if d == axes.len() {
                return Ok(());
            }
            index[d] += 1;
            if index[d] < axes[d].1.len() {
                break;
            }
            index[d] = 0;
            d += 1;
        }
    }
}

/// Exact likelihood by cell decomposition.
pub fn exact_likelihood_cells(
    l: &LikelihoodQuery,
    db: &IncompleteDatabase,
    cell_limit: u64,
) -> Result<OracleResult, OracleError> {
    let core = l.prepare(db)?;
    let points = breakpoints(l, db, cell_limit)?;
    let axes: Vec<(NullId, Vec<Slab>)> = db
        .annotations()
        .iter()
        .map(|(id, dist)| (*id, slabs(dist, points.get(id).map_or(&[][..], Vec::as_slice))))
        .collect();
    let cells = axes.iter().map(|(_, s)| s.len() as u128).product::<u128>();
    if cells > u128::from(cell_limit) {
        return Err(OracleError::CellLimit { cells, limit: cell_limit });
    }
    let (mut value, mut total) = (0.0, 0.0);
    for_each_cell(&axes, |v, mass| {
        total += mass;
        let count = sample_count(l, &core, db, v).map_err(|e| ApproxError::Sample { index: 0, source: e })?;
        if l.cmp.holds(count, l.k) {
            value += mass;
        }
        Ok(())
    })?;
    if (total - 1.0).abs() > MASS_TOLERANCE {
        return Err(OracleError::MassDefect(total));
    }
    Ok(OracleResult {
        value,
        mode: OracleMode::Exact,
        uncertainty: 0.0,
        cells: cells as u64,
    })
}

/// One null's axis in grid mode: `resolution` cells of equal mass over the
/// truncated support.
struct Axis<'a> {
    id: NullId,
    dist: &'a Distribution,
    lo: f64,
    width: f64,
}

impl Axis<'_> {
    fn new(id: NullId, dist: &Distribution) -> Axis<'_> {
        let lo = if dist.quantile(0.0).is_finite() { 0.0 } else { TAIL_MASS };
        let hi = if dist.quantile(1.0).is_finite() { 1.0 } else { 1.0 - TAIL_MASS };
        Axis {
            id,
            dist,
            lo,
            width: hi - lo,
        }
    }

    fn at(&self, t: f64, resolution: u64) -> f64 {
        self.dist.quantile(self.lo + self.width * t / resolution as f64)
    }
}

struct Grid<'a> {
    l: &'a LikelihoodQuery,
    core: Query,
    db: &'a IncompleteDatabase,
    axes: Vec<Axis<'a>>,
    resolution: u64,
    corners: HashMap<Vec<u64>, Option<bool>>,
    cell_mass: f64,
    value: f64,
    boundary: f64,
    cells: u64,
}

impl Grid<'_> {
    /// The event at a point given in half-cell units; `None` when the
    /// evaluation fails there.
    fn event(&self, half: &[u64]) -> Option<bool> {
        let v: Valuation = self
            .axes
            .iter()
            .zip(half)
            .map(|(a, &h)| (a.id, a.at(h as f64 / 2.0, self.resolution)))
            .collect();
        sample_count(self.l, &self.core, self.db, &v).ok().map(|c| self.l.cmp.holds(c, self.l.k))
    }

    fn corner(&mut self, at: Vec<u64>) -> Option<bool> {
        if let Some(&x) = self.corners.get(&at) {
            return x;
        }
        let half: Vec<u64> = at.iter().map(|i| 2 * i).collect();
        let x = self.event(&half);
        self.corners.insert(at, x);
        x
    }

    /// A block of cells `lo[d] .. hi[d]`; blocks whose corners agree are
    /// taken as uniform, the others are halved down to single cells.
    fn block(&mut self, lo: &[u64], hi: &[u64]) {
        let n = lo.len();
        let mut states = BTreeSet::new();
        for mask in 0..1u32 << n {
            let at: Vec<u64> = (0..n).map(|d| if mask & (1 << d) != 0 { hi[d] } else { lo[d] }).collect();
            states.insert(self.corner(at));
        }
        let count: u64 = lo.iter().zip(hi).map(|(a, b)| b - a).product();
        let mass = self.cell_mass * count as f64;
        if states.len() == 1 {
            self.cells += count;
            if states.first() == Some(&Some(true)) {
                self.value += mass;
            }
            return;
        }
        if count == 1 {
            self.cells += 1;
            self.boundary += mass;
            let mid: Vec<u64> = lo.iter().map(|i| 2 * i + 1).collect();
            if self.event(&mid) == Some(true) {
                self.value += mass;
            }
            return;
        }
        // halve every side longer than one cell
        let splits: Vec<Vec<(u64, u64)>> = lo
            .iter()
            .zip(hi)
            .map(|(&a, &b)| if b - a > 1 { vec![(a, (a + b) / 2), ((a + b) / 2, b)] } else { vec![(a, b)] })
            .collect();
        let mut index = vec![0usize; n];
        loop {
            let (sub_lo, sub_hi): (Vec<u64>, Vec<u64>) = splits.iter().zip(&index).map(|(s, &i)| s[i]).unzip();
            self.block(&sub_lo, &sub_hi);
            let mut d = 0;
            loop {
                if d == n {
                    return;
                }
                index[d] += 1;
                if index[d] < splits[d].len() {
                    break;
                }
                index[d] = 0;
                d += 1;
            }
        }
    }
}

/// Midpoint-rule likelihood over an equal-probability grid of
/// `resolution` cells per null.
///
/// The grid is first walked in coarse blocks; a block whose corners all
/// agree on the event is counted whole, otherwise it is refined. The
/// reported uncertainty is the mass of the single cells whose corners
/// disagree plus the truncated tail mass.
pub fn grid_likelihood(
    l: &LikelihoodQuery,
    db: &IncompleteDatabase,
    resolution: u64,
) -> Result<OracleResult, OracleError> {
    if resolution == 0 {
        return Err(OracleError::InvalidResolution);
    }
    let core = l.prepare(db)?;
    let n = db.annotations().len();
    if n > MAX_GRID_NULLS {
        return Err(OracleError::TooManyNulls {
            found: n,
            max: MAX_GRID_NULLS,
        });
    }
    let axes: Vec<Axis> = db.annotations().iter().map(|(id, d)| Axis::new(*id, d)).collect();
    let kept: f64 = axes.iter().map(|a| a.width).product();
    let mut grid = Grid {
        l,
        core,
        db,
        cell_mass: kept / (resolution as f64).powi(n as i32),
        axes,
        resolution,
        corners: HashMap::new(),
        value: 0.0,
        boundary: 0.0,
        cells: 0,
    };
    if n == 0 {
        let value = if grid.event(&[]) == Some(true) { 1.0 } else { 0.0 };
        return Ok(OracleResult {
            value,
            mode: OracleMode::Grid,
            uncertainty: 0.0,
            cells: 1,
        });
    }
    let blocks = COARSE_BLOCKS.min(resolution);
    let edges: Vec<u64> = (0..=blocks).map(|b| b * resolution / blocks).collect();
    let mut index = vec![0usize; n];
    loop {
        let lo: Vec<u64> = index.iter().map(|&i| edges[i]).collect();
        let hi: Vec<u64> = index.iter().map(|&i| edges[i + 1]).collect();
        grid.block(&lo, &hi);
        let mut d = 0;
        loop {
            if d == n {
                return Ok(OracleResult {
                    value: grid.value,
                    mode: OracleMode::Grid,
                    uncertainty: grid.boundary + (1.0 - kept),
                    cells: grid.cells,
                });
            }
            index[d] += 1;
            if index[d] < blocks as usize {
                break;
            }
            index[d] = 0;
            d += 1;
        }
    }
}
