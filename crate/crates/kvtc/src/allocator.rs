//! Dynamic-programming bit allocation over ordered PCA components.
//!
//! The DP keeps, for every (component prefix, bit budget) cell, the minimum
//! squared Frobenius reconstruction error achievable when only the first `i`
//! components may receive bits and everything else is zeroed, plus
//! backpointers for the optimal final block. Blocks are contiguous runs of
//! components sharing one element type and one shift/scale pair; a None0
//! block zeroes its components at zero cost. A brute-force enumerator over
//! all block tilings serves as the optimality oracle on small instances.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::quant::{simulate_quantization, ElementType};

#[derive(Debug, Clone)]
pub struct DpConfig {
    /// Allowed group widths, ascending.
    pub group_sizes: Vec<usize>,
    /// Allowed element types; must contain None0 (the zero-bit fallback).
    pub types: Vec<ElementType>,
    /// Hard cap on the budget axis, bounding table memory.
    pub max_budget_bits: usize,
    /// At most this many calibration rows feed the DP.
    pub dp_sample_cap: usize,
}

impl Default for DpConfig {
    fn default() -> Self {
        DpConfig {
            group_sizes: vec![1, 16, 64, 256, 1024],
            types: vec![
                ElementType::None0,
                ElementType::Int2,
                ElementType::Int4,
                ElementType::Fp8E4M3,
            ],
            max_budget_bits: 65_536,
            dp_sample_cap: 32_768,
        }
    }
}

impl DpConfig {
    fn validate(&self) -> Result<()> {
        if self.group_sizes.is_empty() {
            return Err(Error::invalid("no group sizes configured"));
        }
        for w in self.group_sizes.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::invalid("group sizes must be strictly ascending"));
            }
        }
        if self.group_sizes[0] == 0 {
            return Err(Error::invalid("group sizes must be positive"));
        }
        if !self.types.contains(&ElementType::None0) {
            return Err(Error::invalid("type set must contain None0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlanGroup {
    pub size: usize,
    pub etype: ElementType,
}

/// Ordered group layout over the leading components. `groups` tiles
/// `[0, covered_components)` contiguously (None0 spans included); the
/// trailing `total_components - covered_components` components are an
/// implicit zero span.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationPlan {
    pub groups: Vec<PlanGroup>,
    pub covered_components: usize,
    pub total_components: usize,
    pub bits_per_token: u64,
    pub budget_bits: u64,
    /// Squared Frobenius error on the DP calibration data.
    pub expected_error: f64,
}

impl AllocationPlan {
    pub fn all_zero(total_components: usize, budget_bits: u64, expected_error: f64) -> Self {
        AllocationPlan {
            groups: Vec::new(),
            covered_components: 0,
            total_components,
            bits_per_token: 0,
            budget_bits,
            expected_error,
        }
    }

    /// Per-component payload bit widths, expanded from the group layout.
    pub fn per_component_bits(&self) -> Vec<u32> {
        let mut bits = vec![0u32; self.total_components];
        let mut offset = 0;
        for g in &self.groups {
            for b in bits.iter_mut().skip(offset).take(g.size) {
                *b = g.etype.payload_bits();
            }
            offset += g.size;
        }
        bits
    }
}

/// Error change (quantized error minus zero-bit error) of quantizing one
/// block, plus its per-token bit cost. Every error path in this module and
/// in the codec goes through this helper so oracle comparisons are bitwise.
pub(crate) fn block_delta(block: &Matrix, etype: ElementType) -> Result<(f64, u64)> {
    let (dequantized, cost) = simulate_quantization(block, etype)?;
    let zero_bit: f64 = block.data().iter().map(|x| x * x).sum();
    let quant: f64 = block
        .data()
        .iter()
        .zip(dequantized.data())
        .map(|(x, y)| {
            let e = x - y;
            e * e
        })
        .sum();
    Ok((quant - zero_bit, cost))
}

/// Precomputed block error changes for every (end component, size, type)
/// combination, independent of the budget axis. Reusable across budgets.
pub struct BlockErrorTable {
    pub components: usize,
    pub initial_error: f64,
    sizes: Vec<usize>,
    types: Vec<ElementType>,
    delta: Vec<f64>,
    cost: Vec<u64>,
}

impl BlockErrorTable {
    fn slot(&self, end: usize, s_idx: usize, t_idx: usize) -> usize {
        ((end - 1) * self.sizes.len() + s_idx) * self.types.len() + t_idx
    }
}

pub fn block_error_table(projected: &Matrix, config: &DpConfig) -> Result<BlockErrorTable> {
    config.validate()?;
    let r = projected.cols();
    if projected.rows() == 0 || r == 0 {
        return Err(Error::invalid("empty calibration matrix"));
    }
    let initial_error: f64 = projected.data().iter().map(|x| x * x).sum();
    let (ns, nt) = (config.group_sizes.len(), config.types.len());
    let mut delta = vec![0.0; r * ns * nt];
    let mut cost = vec![0u64; r * ns * nt];
    for end in 1..=r {
        for (s_idx, &size) in config.group_sizes.iter().enumerate() {
            if size > end {
                continue;
            }
            let block = projected.column_block(end - size, end);
            for (t_idx, &etype) in config.types.iter().enumerate() {
                let (d, c) = block_delta(&block, etype)?;
                let slot = ((end - 1) * ns + s_idx) * nt + t_idx;
                delta[slot] = d;
                cost[slot] = c;
            }
        }
    }
    Ok(BlockErrorTable {
        components: r,
        initial_error,
        sizes: config.group_sizes.clone(),
        types: config.types.clone(),
        delta,
        cost,
    })
}

/// DP tables: minimum error and backpointers over (prefix, budget) cells.
/// The budget axis is strided by the GCD of all block costs; only multiples
/// of the stride are reachable, so striding loses nothing.
pub struct DpTables {
    pub components: usize,
    pub budget_bits: usize,
    pub initial_error: f64,
    stride: usize,
    width: usize,
    best_error: Vec<f64>,
    bp_type: Vec<u8>,
    bp_block: Vec<u32>,
    bp_cost: Vec<u32>,
}

impl DpTables {
    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width + j
    }

    /// Best error using the first `components` components within
    /// `budget_bits` bits per token.
    pub fn best_error_at(&self, components: usize, budget_bits: usize) -> f64 {
        let j = (budget_bits / self.stride).min(self.width - 1);
        self.best_error[self.idx(components, j)]
    }

    pub fn optimal_error(&self) -> f64 {
        self.best_error[self.idx(self.components, self.width - 1)]
    }
}

fn cost_gcd(blocks: &BlockErrorTable) -> usize {
    fn gcd(a: u64, b: u64) -> u64 {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    let mut g = 0u64;
    for &size in &blocks.sizes {
        for &t in &blocks.types {
            let c = t.bit_cost_per_token(size);
            if c > 0 {
                g = gcd(g, c);
            }
        }
    }
    g.max(1) as usize
}

pub fn dp_tables(blocks: &BlockErrorTable, budget_bits: usize) -> DpTables {
    let r = blocks.components;
    let stride = cost_gcd(blocks);
    let width = budget_bits / stride + 1;
    let cells = (r + 1) * width;
    let mut tables = DpTables {
        components: r,
        budget_bits,
        initial_error: blocks.initial_error,
        stride,
        width,
        best_error: vec![blocks.initial_error; cells],
        bp_type: vec![0; cells],
        bp_block: vec![0; cells],
        bp_cost: vec![0; cells],
    };

    let (ns, nt) = (blocks.sizes.len(), blocks.types.len());
    for i in 1..=r {
        for j in 1..width {
            let budget = j * stride;
            // Carry over the previous budget column, then try every block
            // that can end at component i.
            let prev = tables.idx(i, j - 1);
            let mut err = tables.best_error[prev];
            let mut bp = (
                tables.bp_type[prev],
                tables.bp_block[prev],
                tables.bp_cost[prev],
            );
            for s_idx in 0..ns {
                let size = blocks.sizes[s_idx];
                if size > i {
                    continue;
                }
                for t_idx in 0..nt {
                    let etype = blocks.types[t_idx];
                    let slot = blocks.slot(i, s_idx, t_idx);
                    let cost = blocks.cost[slot] as usize;
                    if cost > budget {
                        continue;
                    }
                    let from = tables.idx(i - size, j - cost / stride);
                    let candidate = blocks.delta[slot] + tables.best_error[from];
                    let key = (cost as u32, size as u32, etype.wire_id());
                    let cur_key = (bp.2, bp.1, bp.0);
                    let cand_key = (key.0, key.1, key.2);
                    if candidate < err || (candidate == err && cand_key < cur_key) {
                        err = candidate;
                        bp = (etype.wire_id(), size as u32, cost as u32);
                    }
                }
            }
            let here = tables.idx(i, j);
            tables.best_error[here] = err;
            tables.bp_type[here] = bp.0;
            tables.bp_block[here] = bp.1;
            tables.bp_cost[here] = bp.2;
        }
    }
    tables
}

/// Walks the backpointers into an [`AllocationPlan`]. The walk reproduces
/// exactly the error stored in the optimal cell.
pub fn plan_from_tables(tables: &DpTables) -> AllocationPlan {
    let mut rev: Vec<PlanGroup> = Vec::new();
    let mut i = tables.components;
    let mut j = tables.width - 1;
    while i > 0 {
        let cell = tables.idx(i, j);
        let block = tables.bp_block[cell] as usize;
        if block == 0 {
            break; // all-zero prefix is optimal here
        }
        let etype = ElementType::from_wire_id(tables.bp_type[cell]).expect("internal wire id");
        rev.push(PlanGroup { size: block, etype });
        let cost = tables.bp_cost[cell] as usize;
        i -= block;
        j -= cost / tables.stride;
    }
    let mut groups: Vec<PlanGroup> = Vec::new();
    if i > 0 && !rev.is_empty() {
        groups.push(PlanGroup { size: i, etype: ElementType::None0 });
    }
    groups.extend(rev.into_iter().rev());
    normalize_groups(&mut groups);

    let covered_components: usize = groups.iter().map(|g| g.size).sum();
    let bits_per_token: u64 = groups
        .iter()
        .map(|g| g.etype.bit_cost_per_token(g.size))
        .sum();
    AllocationPlan {
        groups,
        covered_components,
        total_components: tables.components,
        bits_per_token,
        budget_bits: tables.budget_bits as u64,
        expected_error: tables.optimal_error(),
    }
}

/// Merges adjacent None0 spans and drops trailing ones (they fold into the
/// implicit zero tail).
fn normalize_groups(groups: &mut Vec<PlanGroup>) {
    let mut merged: Vec<PlanGroup> = Vec::with_capacity(groups.len());
    for g in groups.drain(..) {
        if g.etype == ElementType::None0 {
            if let Some(last) = merged.last_mut() {
                if last.etype == ElementType::None0 {
                    last.size += g.size;
                    continue;
                }
            }
        }
        merged.push(g);
    }
    while matches!(merged.last(), Some(g) if g.etype == ElementType::None0) {
        merged.pop();
    }
    *groups = merged;
}

fn capped_rows<'a>(projected: &'a Matrix, cap: usize) -> std::borrow::Cow<'a, Matrix> {
    if projected.rows() > cap {
        std::borrow::Cow::Owned(projected.row_block(0, cap))
    } else {
        std::borrow::Cow::Borrowed(projected)
    }
}

/// Budget in bits per token for a target compression ratio against the
/// 16-bit (or `feature_bits`) baseline over the *original* feature count.
pub fn budget_for_target_cr(
    original_features: usize,
    feature_bits: u32,
    target_cr: f64,
) -> Result<usize> {
    if !target_cr.is_finite() || target_cr <= 0.0 {
        return Err(Error::invalid(format!("target compression ratio {target_cr} must be positive")));
    }
    Ok((original_features as f64 * feature_bits as f64 / target_cr).floor() as usize)
}

/// Optimal plan for a target compression ratio. Columns of
/// `projected_calibration` must be ordered by descending singular value.
pub fn dp_allocate(
    projected_calibration: &Matrix,
    target_cr: f64,
    feature_bits: u32,
    original_features: usize,
    config: &DpConfig,
) -> Result<AllocationPlan> {
    let budget = budget_for_target_cr(original_features, feature_bits, target_cr)?
        .min(config.max_budget_bits);
    dp_allocate_with_budget(projected_calibration, budget, config)
}

pub fn dp_allocate_with_budget(
    projected_calibration: &Matrix,
    budget_bits: usize,
    config: &DpConfig,
) -> Result<AllocationPlan> {
    config.validate()?;
    let data = capped_rows(projected_calibration, config.dp_sample_cap);
    let blocks = block_error_table(&data, config)?;
    let tables = dp_tables(&blocks, budget_bits.min(config.max_budget_bits));
    Ok(plan_from_tables(&tables))
}

/// Exhaustively enumerates the DP's exact feasible set: an arbitrary all-zero
/// component prefix followed by a tiling of the remaining components with
/// blocks of allowed sizes and types (None0 included), anchored at the last
/// component. Exponential; the size guards keep it to oracle-scale instances.
pub fn brute_force_allocate(
    projected_calibration: &Matrix,
    budget_bits: usize,
    config: &DpConfig,
) -> Result<AllocationPlan> {
    config.validate()?;
    let data = capped_rows(projected_calibration, config.dp_sample_cap);
    let r = data.cols();
    if data.rows() == 0 || r == 0 {
        return Err(Error::invalid("empty calibration matrix"));
    }
    if r > 12 || budget_bits > 512 || config.group_sizes.len() > 4 || config.types.len() > 6 {
        return Err(Error::InstanceTooLarge(format!(
            "r={r}, budget={budget_bits}, {} sizes, {} types",
            config.group_sizes.len(),
            config.types.len()
        )));
    }

    // Delta for every (start, size, type) block.
    struct Cand {
        size: usize,
        etype: ElementType,
        cost: u64,
        delta: f64,
    }
    let mut cands: Vec<Vec<Cand>> = Vec::with_capacity(r);
    for start in 0..r {
        let mut at = Vec::new();
        for &size in &config.group_sizes {
            if start + size > r {
                continue;
            }
            let block = data.column_block(start, start + size);
            for &etype in &config.types {
                let (delta, cost) = block_delta(&block, etype)?;
                at.push(Cand { size, etype, cost, delta });
            }
        }
        cands.push(at);
    }

    struct Best {
        error: f64,
        placed: Vec<(usize, usize, ElementType)>,
    }
    let initial: f64 = data.data().iter().map(|x| x * x).sum();
    let mut best = Best { error: initial, placed: Vec::new() };

    // Tiles [pos, r) completely; a solution is recorded only when the tiling
    // reaches r (blocks are anchored at the right end, matching the DP walk).
    // `c.delta + acc` keeps the DP's exact fold order.
    #[allow(clippy::assign_op_pattern)]
    fn recurse(
        pos: usize,
        r: usize,
        budget_left: u64,
        acc: f64,
        cands: &[Vec<Cand>],
        stack: &mut Vec<(usize, usize, ElementType)>,
        best: &mut Best,
    ) {
        if pos == r {
            if acc < best.error {
                best.error = acc;
                best.placed = stack.clone();
            }
            return;
        }
        for c in &cands[pos] {
            if c.cost > budget_left {
                continue;
            }
            stack.push((pos, c.size, c.etype));
            recurse(pos + c.size, r, budget_left - c.cost, c.delta + acc, cands, stack, best);
            stack.pop();
        }
    }
    // Every zero-prefix length is a valid anchor point.
    let mut stack = Vec::new();
    for prefix in 0..=r {
        recurse(prefix, r, budget_bits as u64, initial, &cands, &mut stack, &mut best);
    }

    // Rebuild a tiling with explicit None0 gaps from the placement list.
    let mut groups: Vec<PlanGroup> = Vec::new();
    let mut cursor = 0usize;
    for &(start, size, etype) in &best.placed {
        if start > cursor {
            groups.push(PlanGroup { size: start - cursor, etype: ElementType::None0 });
        }
        groups.push(PlanGroup { size, etype });
        cursor = start + size;
    }
    normalize_groups(&mut groups);
    let covered_components: usize = groups.iter().map(|g| g.size).sum();
    let bits_per_token: u64 = groups
        .iter()
        .map(|g| g.etype.bit_cost_per_token(g.size))
        .sum();
    Ok(AllocationPlan {
        groups,
        covered_components,
        total_components: r,
        bits_per_token,
        budget_bits: budget_bits as u64,
        expected_error: best.error,
    })
}

/// Re-simulates a plan group by group on `projected` and returns the squared
/// Frobenius error (components outside any non-None0 group count their full
/// squared mass). On the exact calibration data this reproduces
/// `plan.expected_error` bit for bit.
// The `delta + acc` fold order mirrors the DP recurrence so the sums are
// bitwise identical; keep it spelled out.
#[allow(clippy::assign_op_pattern)]
pub fn plan_error(projected: &Matrix, plan: &AllocationPlan) -> Result<f64> {
    if projected.cols() < plan.covered_components {
        return Err(Error::invalid(format!(
            "projected has {} columns, plan covers {}",
            projected.cols(),
            plan.covered_components
        )));
    }
    let mut acc: f64 = projected.data().iter().map(|x| x * x).sum();
    let mut offset = 0usize;
    for g in &plan.groups {
        let block = projected.column_block(offset, offset + g.size);
        let (delta, _) = block_delta(&block, g.etype)?;
        acc = delta + acc;
        offset += g.size;
    }
    Ok(acc)
}

/// Degenerate planner for the pure-PCA-truncation mode: keep the leading
/// components at 16-bit raw, drop the rest, sized to the budget.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaOnlyPlan {
    pub kept_components: usize,
    pub total_components: usize,
    pub bits_per_token: u64,
    pub budget_bits: u64,
    /// Squared Frobenius error: discarded mass plus binary16 rounding of the
    /// kept coefficients.
    pub expected_error: f64,
}

pub fn pca_only_plan(
    projected_calibration: &Matrix,
    budget_bits: usize,
    feature_bits: u32,
) -> Result<PcaOnlyPlan> {
    let r = projected_calibration.cols();
    if projected_calibration.rows() == 0 || r == 0 {
        return Err(Error::invalid("empty calibration matrix"));
    }
    let kept = (budget_bits / feature_bits as usize).min(r);
    let mut err = 0.0f64;
    for row in 0..projected_calibration.rows() {
        let vals = projected_calibration.row(row);
        for (c, &x) in vals.iter().enumerate() {
            if c < kept {
                let e = x - half::f16::from_f64(x).to_f64();
                err += e * e;
            } else {
                err += x * x;
            }
        }
    }
    Ok(PcaOnlyPlan {
        kept_components: kept,
        total_components: r,
        bits_per_token: kept as u64 * feature_bits as u64,
        budget_bits: budget_bits as u64,
        expected_error: err,
    })
}

pub fn pca_only_for_target_cr(
    projected_calibration: &Matrix,
    target_cr: f64,
    feature_bits: u32,
    original_features: usize,
) -> Result<PcaOnlyPlan> {
    let budget = budget_for_target_cr(original_features, feature_bits, target_cr)?;
    pca_only_plan(projected_calibration, budget, feature_bits)
}
