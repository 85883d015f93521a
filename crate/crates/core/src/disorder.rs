//! Random-field realizations and the two-scale block statistics built on
//! them: per-block balance indicators, clean/dirty classification, the
//! dirty-region construction, and the probabilistic sanity checks.

use crate::error::{Error, Result};
use crate::rng::stream;
use rand::Rng;
use serde::Serialize;
use std::collections::VecDeque;
use std::fmt::Write as _;

/// The two block scales and the clean/dirty parameters.
///
/// Blocks have odd side 2*ell+1; the small blocks tile the domain and nest
/// exactly inside the big blocks.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Scales {
    /// interaction range L the scales were derived from (recorded, not used
    /// by the block statistics themselves)
    pub range: f64,
    pub lambda: f64,
    pub ell_small: usize,
    pub ell_big: usize,
    pub kappa: f64,
    pub p_dirty: f64,
    pub domain_side: usize,
}

impl Scales {
    pub fn small_side(&self) -> usize {
        2 * self.ell_small + 1
    }

    pub fn big_side(&self) -> usize {
        2 * self.ell_big + 1
    }

    /// Scales with every field given explicitly; validates tiling/nesting.
    pub fn explicit(
        ell_small: usize,
        ell_big: usize,
        domain_side: usize,
        kappa: f64,
        p_dirty: f64,
        range: f64,
        lambda: f64,
    ) -> Result<Self> {
        let s = Scales {
            range,
            lambda,
            ell_small,
            ell_big,
            kappa,
            p_dirty,
            domain_side,
        };
        s.validate()?;
        Ok(s)
    }

    /// Derive block scales from the interaction range: ell_small targets
    /// L^(1-lambda) rounded down and ell_big targets L^(1+lambda) rounded
    /// up, both adjusted to the nearest sides that tile `domain_side`
    /// exactly and nest. p_dirty follows the proof's choice
    /// L^(-d(1-lambda)/3) with d = 2.
    pub fn derive(range: f64, lambda: f64, kappa: f64, domain_side: usize) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0 / 3.0) {
            return Err(Error::Config(format!("lambda {lambda} outside (0, 1/3)")));
        }
        let target_small = 2.0 * range.powf(1.0 - lambda) + 1.0;
        let target_big = 2.0 * range.powf(1.0 + lambda) + 1.0;
        // largest odd divisor of the domain side not exceeding the target
        let small_side = (1..=domain_side)
            .filter(|s| *s >= 3 && s % 2 == 1 && domain_side % s == 0 && *s as f64 <= target_small)
            .max()
            .ok_or_else(|| Error::Geometry(format!("no small-block side tiles {domain_side}")))?;
        // smallest odd multiple of small_side dividing the domain side and
        // not below the target
        let big_side = (1..=domain_side)
            .filter(|s| {
                s % 2 == 1
                    && s % small_side == 0
                    && domain_side % s == 0
                    && *s as f64 >= target_big.min(domain_side as f64)
            })
            .min()
            .ok_or_else(|| {
                Error::Geometry(format!(
                    "no big-block side >= {target_big:.1} tiles {domain_side}"
                ))
            })?;
        let p_dirty = range.powf(-2.0 * (1.0 - lambda) / 3.0);
        Scales::explicit(
            (small_side - 1) / 2,
            (big_side - 1) / 2,
            domain_side,
            kappa,
            p_dirty,
            range,
            lambda,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa < 0.5) {
            return Err(Error::Config(format!("kappa {} outside (0, 1/2)", self.kappa)));
        }
        if !(self.p_dirty > 0.0 && self.p_dirty < 1.0) {
            return Err(Error::Config(format!("p_dirty {} outside (0, 1)", self.p_dirty)));
        }
        if self.ell_small == 0 {
            return Err(Error::Geometry("ell_small must be >= 1".into()));
        }
        if self.ell_big <= self.ell_small {
            return Err(Error::Geometry(format!(
                "ell_big {} must exceed ell_small {}",
                self.ell_big, self.ell_small
            )));
        }
        if self.domain_side % self.small_side() != 0 {
            return Err(Error::Geometry(format!(
                "small block side {} does not tile domain side {}",
                self.small_side(),
                self.domain_side
            )));
        }
        if self.domain_side % self.big_side() != 0 {
            return Err(Error::Geometry(format!(
                "big block side {} does not tile domain side {}",
                self.big_side(),
                self.domain_side
            )));
        }
        if self.big_side() % self.small_side() != 0 {
            return Err(Error::Geometry(format!(
                "small blocks (side {}) do not nest in big blocks (side {})",
                self.small_side(),
                self.big_side()
            )));
        }
        Ok(())
    }
}

/// An i.i.d. +-1 field on a square domain, regenerable from its seed.
#[derive(Debug, Clone)]
pub struct DisorderField {
    pub side: usize,
    pub alpha: Vec<i8>,
    pub bias_p: f64,
    pub seed: u64,
}

impl DisorderField {
    pub fn get(&self, x: usize, y: usize) -> i8 {
        self.alpha[y * self.side + x]
    }
}

/// Sample alpha_z = +1 with probability bias_p, -1 otherwise, i.i.d.
pub fn sample_disorder(side: usize, bias_p: f64, seed: u64) -> DisorderField {
    let mut rng = stream(seed, "disorder", 0);
    let alpha = (0..side * side)
        .map(|_| if rng.gen::<f64>() < bias_p { 1 } else { -1 })
        .collect();
    DisorderField { side, alpha, bias_p, seed }
}

/// A square grid of per-block values (small- or big-block resolution).
#[derive(Debug, Clone)]
pub struct BlockGrid {
    pub per_side: usize,
    pub vals: Vec<u8>,
}

impl BlockGrid {
    pub fn get(&self, bx: usize, by: usize) -> u8 {
        self.vals[by * self.per_side + bx]
    }
}

/// phi per small block: 1 iff |N+ - |B|/2| < |B|^(1/2 + kappa).
pub fn block_balance(field: &DisorderField, scales: &Scales) -> Result<BlockGrid> {
    if field.side != scales.domain_side {
        return Err(Error::Geometry(format!(
            "field side {} != scales domain side {}",
            field.side, scales.domain_side
        )));
    }
    let s = scales.small_side();
    let per_side = field.side / s;
    let block_sites = (s * s) as f64;
    let threshold = block_sites.powf(0.5 + scales.kappa);
    let mut vals = Vec::with_capacity(per_side * per_side);
    for by in 0..per_side {
        for bx in 0..per_side {
            let mut plus = 0usize;
            for y in by * s..(by + 1) * s {
                for x in bx * s..(bx + 1) * s {
                    if field.get(x, y) == 1 {
                        plus += 1;
                    }
                }
            }
            let dev = (plus as f64 - block_sites / 2.0).abs();
            vals.push(u8::from(dev < threshold));
        }
    }
    Ok(BlockGrid { per_side, vals })
}

/// Block statistics at both scales plus the dirty region.
#[derive(Debug, Clone)]
pub struct CleanMap {
    pub phi_small: BlockGrid,
    pub xi_big: BlockGrid,
    /// big blocks belonging to the dirty region (union of closures of the
    /// corner-connected components of Xi = 0 blocks)
    pub dirty_set: Vec<bool>,
    /// the components themselves, as big-block coordinates
    pub components: Vec<Vec<(usize, usize)>>,
}

impl CleanMap {
    /// Fraction of the domain covered by the dirty region.
    pub fn dirty_fraction(&self) -> f64 {
        let total = self.xi_big.vals.len();
        let dirty = self.dirty_set.iter().filter(|&&d| d).count();
        dirty as f64 / total as f64
    }

    /// Clean / dirty classification of a set of big blocks: clean iff the
    /// fraction of Xi = 1 blocks exceeds 1 - p.
    pub fn is_clean(&self, blocks: &[(usize, usize)], p: f64) -> bool {
        if blocks.is_empty() {
            return true;
        }
        let clean = blocks
            .iter()
            .filter(|&&(bx, by)| self.xi_big.get(bx, by) == 1)
            .count();
        clean as f64 / blocks.len() as f64 > 1.0 - p
    }
}

/// Corner-inclusive (8-neighbor) offsets.
const NEIGHBORS: [(i64, i64); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// Compute Xi per big block (unanimity of phi over its nested small
/// blocks), the corner-connected components of dirty (Xi = 0) blocks, and
/// the dirty region: the union of closures c(Y) = delta(Y) u Int(Y).
pub fn xi_and_dirty(field: &DisorderField, scales: &Scales) -> Result<CleanMap> {
    let phi = block_balance(field, scales)?;
    let ratio = scales.big_side() / scales.small_side();
    let big_per_side = scales.domain_side / scales.big_side();
    let mut xi_vals = Vec::with_capacity(big_per_side * big_per_side);
    for by in 0..big_per_side {
        for bx in 0..big_per_side {
            let mut all = 1u8;
            'outer: for sy in by * ratio..(by + 1) * ratio {
                for sx in bx * ratio..(bx + 1) * ratio {
                    if phi.get(sx, sy) == 0 {
                        all = 0;
                        break 'outer;
                    }
                }
            }
            xi_vals.push(all);
        }
    }
    let xi = BlockGrid { per_side: big_per_side, vals: xi_vals };

    // corner-connected components of Xi = 0 blocks
    let n = big_per_side;
    let mut seen = vec![false; n * n];
    let mut components = Vec::new();
    for start in 0..n * n {
        if seen[start] || xi.vals[start] == 1 {
            continue;
        }
        let mut comp = Vec::new();
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(i) = queue.pop_front() {
            let (bx, by) = (i % n, i / n);
            comp.push((bx, by));
            for (dx, dy) in NEIGHBORS {
                let (nx, ny) = (bx as i64 + dx, by as i64 + dy);
                if (0..n as i64).contains(&nx) && (0..n as i64).contains(&ny) {
                    let j = ny as usize * n + nx as usize;
                    if !seen[j] && xi.vals[j] == 0 {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        components.push(comp);
    }

    // dirty region: for each component Y, delta(Y) = Y plus its 8-neighbor
    // ring, Int(Y) = holes of Y (complement components not reaching the
    // domain edge)
    let mut dirty = vec![false; n * n];
    for comp in &components {
        let mut in_y = vec![false; n * n];
        for &(bx, by) in comp {
            in_y[by * n + bx] = true;
        }
        // delta(Y)
        for &(bx, by) in comp {
            dirty[by * n + bx] = true;
            for (dx, dy) in NEIGHBORS {
                let (nx, ny) = (bx as i64 + dx, by as i64 + dy);
                if (0..n as i64).contains(&nx) && (0..n as i64).contains(&ny) {
                    dirty[ny as usize * n + nx as usize] = true;
                }
            }
        }
        // Int(Y): flood the complement of Y from the domain edge (edge-
        // and corner-adjacency both work here; use 8-neighbor to match)
        let mut outside = vec![false; n * n];
        let mut queue: VecDeque<usize> = VecDeque::new();
        for i in 0..n * n {
            let (bx, by) = (i % n, i / n);
            let on_edge = bx == 0 || by == 0 || bx == n - 1 || by == n - 1;
            if on_edge && !in_y[i] {
                outside[i] = true;
                queue.push_back(i);
            }
        }
        while let Some(i) = queue.pop_front() {
            let (bx, by) = (i % n, i / n);
            for (dx, dy) in NEIGHBORS {
                let (nx, ny) = (bx as i64 + dx, by as i64 + dy);
                if (0..n as i64).contains(&nx) && (0..n as i64).contains(&ny) {
                    let j = ny as usize * n + nx as usize;
                    if !outside[j] && !in_y[j] {
                        outside[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        for i in 0..n * n {
            if !in_y[i] && !outside[i] {
                dirty[i] = true; // a hole of Y
            }
        }
    }

    Ok(CleanMap { phi_small: phi, xi_big: xi, dirty_set: dirty, components })
}

#[derive(Debug, Clone, Serialize)]
pub struct DirtyFractionRow {
    pub ell_small: usize,
    pub ell_big: usize,
    pub domain_side: usize,
    pub trials: usize,
    pub mean: f64,
    pub variance: f64,
    pub fractions: Vec<f64>,
}

/// Empirical dirty-fraction statistics over independent fair-field trials,
/// one row per scale set. Trials use derived seeds (seed, trial index), so
/// aggregation order cannot change results.
pub fn dirty_fraction_stats(
    scale_sets: &[Scales],
    trials: usize,
    seed: u64,
) -> Result<Vec<DirtyFractionRow>> {
    if trials == 0 {
        return Err(Error::Config("trials must be >= 1".into()));
    }
    let mut rows = Vec::new();
    for (si, scales) in scale_sets.iter().enumerate() {
        let mut fractions = Vec::with_capacity(trials);
        for t in 0..trials {
            let mut rng = stream(seed, "dirty-trial", (si * trials + t) as u64);
            let field_seed: u64 = rng.gen();
            let field = sample_disorder(scales.domain_side, 0.5, field_seed);
            let map = xi_and_dirty(&field, scales)?;
            fractions.push(map.dirty_fraction());
        }
        let mean = fractions.iter().sum::<f64>() / trials as f64;
        let variance = fractions.iter().map(|f| (f - mean).powi(2)).sum::<f64>()
            / (trials as f64 - 1.0).max(1.0);
        rows.push(DirtyFractionRow {
            ell_small: scales.ell_small,
            ell_big: scales.ell_big,
            domain_side: scales.domain_side,
            trials,
            mean,
            variance,
            fractions,
        });
    }
    Ok(rows)
}

/// CSV with the realized scales echoed in a header comment.
pub fn dirty_fraction_csv(rows: &[DirtyFractionRow], scale_sets: &[Scales]) -> String {
    let mut out = String::new();
    for s in scale_sets {
        let _ = writeln!(
            out,
            "# scales: ell_small={} ell_big={} domain_side={} kappa={} p_dirty={} range={} lambda={}",
            s.ell_small, s.ell_big, s.domain_side, s.kappa, s.p_dirty, s.range, s.lambda
        );
    }
    out.push_str("ell_small,trial,fraction\n");
    for row in rows {
        for (t, f) in row.fractions.iter().enumerate() {
            let _ = writeln!(out, "{},{t},{f}", row.ell_small);
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct HoeffdingRow {
    pub size: usize,
    pub a: f64,
    pub trials: usize,
    pub empirical: f64,
    pub bound: f64,
    pub exact: f64,
    pub std_err: f64,
}

/// Exact P(|N+ - n/2| >= A sqrt(n/2)) for N+ ~ Binomial(n, 1/2), by
/// direct summation in log space.
pub fn binomial_tail(n: usize, a: f64) -> f64 {
    let t = a * (n as f64 / 2.0).sqrt();
    let mut log_c = -(n as f64) * std::f64::consts::LN_2; // log P(N+ = 0)
    let mut p = 0.0;
    for k in 0..=n {
        if ((k as f64) - n as f64 / 2.0).abs() >= t {
            p += log_c.exp();
        }
        if k < n {
            log_c += ((n - k) as f64 / (k + 1) as f64).ln();
        }
    }
    p.min(1.0)
}

/// Empirical tail probabilities P(|N+ - n/2| >= A sqrt(n/2)) against the
/// bound 2 exp(-A^2/4), with the exact binomial tail alongside.
pub fn hoeffding_check(
    block_sizes: &[usize],
    a_values: &[f64],
    trials: usize,
    seed: u64,
) -> Vec<HoeffdingRow> {
    let mut rows = Vec::new();
    for (bi, &n) in block_sizes.iter().enumerate() {
        let mut rng = stream(seed, "hoeffding", bi as u64);
        // one batch of counts per size, reused across A values
        let counts: Vec<usize> = (0..trials)
            .map(|_| (0..n).filter(|_| rng.gen::<bool>()).count())
            .collect();
        for &a in a_values {
            let t = a * (n as f64 / 2.0).sqrt();
            let hits = counts
                .iter()
                .filter(|&&c| (c as f64 - n as f64 / 2.0).abs() >= t)
                .count();
            let empirical = hits as f64 / trials as f64;
            let exact = binomial_tail(n, a);
            let std_err = (exact * (1.0 - exact) / trials as f64).sqrt();
            rows.push(HoeffdingRow {
                size: n,
                a,
                trials,
                empirical,
                bound: 2.0 * (-a * a / 4.0).exp(),
                exact,
                std_err,
            });
        }
    }
    rows
}

pub fn hoeffding_csv(rows: &[HoeffdingRow]) -> String {
    let mut out = String::from("size,A,trials,empirical,bound,exact,std_err\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.size, r.a, r.trials, r.empirical, r.bound, r.exact, r.std_err
        );
    }
    out
}
