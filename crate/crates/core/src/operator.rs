//! Discretized Radon operators on a pixel grid.
//!
//! Entry `(j, i)` of the operator is `w` when the center of pixel `i` lies in
//! region `j` and zero otherwise. Two storages share one membership
//! definition:
//!
//! * explicit sparse: a row-compressed binary pattern;
//! * matrix free: half spaces keep, per direction, the pixels sorted by
//!   their projection, so a row is a prefix of that order; balls keep, per
//!   row, the runs of consecutive pixels along axis 0 that fall inside the
//!   ball, so a row sum is a handful of prefix-sum differences.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use crate::grid::PixelGrid;
use crate::projection::{ball_contains, shifted_dot, BallSet, Geometry, HalfSpaceSet};

/// A linear map driven only through forward and adjoint products.
pub trait LinearOperator: Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    /// `out = A v`; `out` has length `rows()`.
    fn apply_into(&self, v: &[f64], out: &mut [f64]);
    /// `out = A^T u`; `out` has length `cols()`.
    fn adjoint_into(&self, u: &[f64], out: &mut [f64]);

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(self.cols(), v.len())?;
        let mut out = vec![0.0; self.rows()];
        self.apply_into(v, &mut out);
        Ok(out)
    }

    fn adjoint_apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len(self.rows(), u.len())?;
        let mut out = vec![0.0; self.cols()];
        self.adjoint_into(u, &mut out);
        Ok(out)
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, got })
    }
}

/// Identity map on `R^n`.
#[derive(Debug, Clone, Copy)]
pub struct IdentityOperator(pub usize);

impl LinearOperator for IdentityOperator {
    fn rows(&self) -> usize {
        self.0
    }
    fn cols(&self) -> usize {
        self.0
    }
    fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        out.copy_from_slice(v);
    }
    fn adjoint_into(&self, u: &[f64], out: &mut [f64]) {
        out.copy_from_slice(u);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Storage {
    ExplicitSparse,
    MatrixFree,
}

/// Scaling convention linking the operator to the measurements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    /// `w = pixel volume` with per-m measurements: `Rv` is the probability
    /// mass of each region when `v` is a density.
    Density,
    /// `w = 1` with raw counts, the literal binary matrix.
    PaperLiteral,
}

impl WeightMode {
    pub fn weight(self, grid: &PixelGrid) -> f64 {
        match self {
            WeightMode::Density => grid.pixel_volume(),
            WeightMode::PaperLiteral => 1.0,
        }
    }

    pub fn normalization(self) -> crate::projection::Normalization {
        match self {
            WeightMode::Density => crate::projection::Normalization::PerM,
            WeightMode::PaperLiteral => crate::projection::Normalization::RawCounts,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssembleOptions {
    pub storage: Storage,
    pub weight_mode: WeightMode,
    /// Largest number of stored entries allowed for explicit storage.
    pub nonzero_budget: usize,
}

impl AssembleOptions {
    /// Matrix free storage with density weighting.
    pub fn matrix_free() -> Self {
        Self {
            storage: Storage::MatrixFree,
            weight_mode: WeightMode::Density,
            nonzero_budget: DEFAULT_NONZERO_BUDGET,
        }
    }

    pub fn explicit() -> Self {
        Self {
            storage: Storage::ExplicitSparse,
            ..Self::matrix_free()
        }
    }
}

impl Default for AssembleOptions {
    fn default() -> Self {
        Self::matrix_free()
    }
}

pub const DEFAULT_NONZERO_BUDGET: usize = 100_000_000;

/// Number of partial sums used by parallel adjoints; fixed so results do
/// not depend on the thread count.
const REDUCTION_CHUNKS: usize = 32;

#[derive(Debug, Clone)]
struct CsrPattern {
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
}

#[derive(Debug, Clone)]
struct SortedDirections {
    /// Pixel indices sorted by projection, one block of `cols` per direction.
    order: Vec<u32>,
    /// Number of member pixels per row.
    counts: Vec<u32>,
    offsets_per_direction: usize,
}

#[derive(Debug, Clone, Copy)]
struct Run {
    line: u32,
    lo: u16,
    /// Inclusive.
    hi: u16,
}

#[derive(Debug, Clone)]
struct BallRuns {
    row_ptr: Vec<usize>,
    runs: Vec<Run>,
    line_len: usize,
    lines: usize,
}

#[derive(Debug, Clone)]
enum Backend {
    Sparse(CsrPattern),
    HalfSpace(SortedDirections),
    Ball(BallRuns),
}

/// Binary membership matrix scaled by a uniform weight.
#[derive(Debug, Clone)]
pub struct RadonOperator {
    grid: PixelGrid,
    geometry: Geometry,
    weight: f64,
    weight_mode: WeightMode,
    backend: Backend,
}

/// Operator description written next to exported matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorMetadata {
    pub kind: String,
    pub rows: usize,
    pub cols: usize,
    pub storage: Storage,
    pub weight_mode: WeightMode,
    pub weight: f64,
    pub nonzeros: usize,
    pub geometry_hash: String,
}

/// Builds the operator for `geometry` on `grid`.
pub fn assemble(
    grid: &PixelGrid,
    geometry: &Geometry,
    opts: &AssembleOptions,
) -> Result<RadonOperator> {
    grid.validate()?;
    geometry.validate()?;
    grid.check_dim(geometry.dim())?;
    let backend = match geometry {
        Geometry::HalfSpace(h) => Backend::HalfSpace(sort_directions(grid, h)),
        Geometry::Ball(b) => Backend::Ball(ball_runs(grid, b)),
    };
    let mut op = RadonOperator {
        grid: grid.clone(),
        geometry: geometry.clone(),
        weight: opts.weight_mode.weight(grid),
        weight_mode: opts.weight_mode,
        backend,
    };
    if opts.storage == Storage::ExplicitSparse {
        let nnz = op.nonzeros();
        if nnz > opts.nonzero_budget {
            return Err(Error::Capacity {
                nonzeros: nnz,
                budget: opts.nonzero_budget,
            });
        }
        op.backend = Backend::Sparse(op.pattern());
    }
    Ok(op)
}

fn sort_directions(grid: &PixelGrid, set: &HalfSpaceSet) -> SortedDirections {
    let centers = grid.centers();
    let d = grid.dim();
    let n = grid.len();
    let per_dir: Vec<(Vec<u32>, Vec<u32>)> = set
        .directions
        .par_iter()
        .map(|theta| {
            let t: Vec<f64> = centers
                .chunks_exact(d)
                .map(|p| shifted_dot(p, &set.anchor, theta))
                .collect();
            let mut order: Vec<u32> = (0..n as u32).collect();
            order.sort_by(|&a, &b| t[a as usize].total_cmp(&t[b as usize]).then(a.cmp(&b)));
            let sorted: Vec<f64> = order.iter().map(|&i| t[i as usize]).collect();
            let counts = set
                .offsets
                .iter()
                .map(|&s| sorted.partition_point(|&x| x <= s) as u32)
                .collect();
            (order, counts)
        })
        .collect();
    let mut order = Vec::with_capacity(n * set.directions.len());
    let mut counts = Vec::with_capacity(set.rows());
    for (o, c) in per_dir {
        order.extend(o);
        counts.extend(c);
    }
    SortedDirections {
        order,
        counts,
        offsets_per_direction: set.offsets.len(),
    }
}

fn ball_runs(grid: &PixelGrid, set: &BallSet) -> BallRuns {
    let d = grid.dim();
    let shape = grid.shape();
    let nx = shape[0];
    let lines: usize = shape[1..].iter().product();
    assert!(nx <= u16::MAX as usize, "axis 0 longer than 65535 pixels");

    let per_center: Vec<Vec<Vec<Run>>> = set
        .centers
        .par_iter()
        .map(|c| {
            let mut rows = Vec::with_capacity(set.radii.len());
            let mut p = [0.0f64; 3];
            for &s in &set.radii {
                let mut runs = Vec::new();
                // Candidate lines: axes 1.. within s (+1 pixel) of the center.
                let mut lo_idx = [0usize; 3];
                let mut hi_idx = [0usize; 3];
                for k in 1..d {
                    let h = grid.spacing()[k];
                    let o = grid.origin()[k];
                    let a = ((c[k] - s - o) / h - 1.5).floor().max(0.0);
                    let b = ((c[k] + s - o) / h + 0.5).ceil();
                    lo_idx[k] = a as usize;
                    hi_idx[k] = if b < 0.0 { 0 } else { (b as usize).min(shape[k] - 1) };
                    if a > (shape[k] - 1) as f64 || b < 0.0 {
                        lo_idx[k] = 1;
                        hi_idx[k] = 0;
                    }
                }
                let (y0, y1) = if d > 1 { (lo_idx[1], hi_idx[1]) } else { (0, 0) };
                let (z0, z1) = if d > 2 { (lo_idx[2], hi_idx[2]) } else { (0, 0) };
                if y0 > y1 || z0 > z1 {
                    rows.push(runs);
                    continue;
                }
                for iz in z0..=z1 {
                    for iy in y0..=y1 {
                        if d > 1 {
                            p[1] = grid.axis_center(1, iy);
                        }
                        if d > 2 {
                            p[2] = grid.axis_center(2, iz);
                        }
                        if let Some((lo, hi)) = line_run(grid, c, s, &mut p) {
                            let line = if d == 1 {
                                0
                            } else if d == 2 {
                                iy
                            } else {
                                iy + shape[1] * iz
                            };
                            runs.push(Run {
                                line: line as u32,
                                lo: lo as u16,
                                hi: hi as u16,
                            });
                        }
                    }
                }
                rows.push(runs);
            }
            rows
        })
        .collect();

    let mut row_ptr = Vec::with_capacity(set.rows() + 1);
    row_ptr.push(0);
    let mut runs = Vec::new();
    for rows in per_center {
        for r in rows {
            runs.extend(r);
            row_ptr.push(runs.len());
        }
    }
    BallRuns {
        row_ptr,
        runs,
        line_len: nx,
        lines,
    }
}

/// Exact member range along axis 0 for the line through `p[1..]`.
fn line_run(grid: &PixelGrid, c: &[f64], s: f64, p: &mut [f64; 3]) -> Option<(usize, usize)> {
    let d = grid.dim();
    let nx = grid.shape()[0];
    let inside = |ix: usize, p: &mut [f64; 3]| {
        p[0] = grid.axis_center(0, ix);
        ball_contains(&p[..d], c, s)
    };
    let t = (c[0] - grid.origin()[0]) / grid.spacing()[0] - 0.5;
    let k0 = t.round().clamp(0.0, (nx - 1) as f64) as usize;
    // The squared distance is monotone on both sides of the closest pixel,
    // so membership along the line is one contiguous run.
    let mut best = k0;
    let mut best_d = f64::INFINITY;
    for k in k0.saturating_sub(1)..=(k0 + 1).min(nx - 1) {
        p[0] = grid.axis_center(0, k);
        let dd = crate::projection::squared_distance(&p[..d], c);
        if dd < best_d {
            best_d = dd;
            best = k;
        }
    }
    if !inside(best, p) {
        return None;
    }
    let mut rest = 0.0;
    for k in 1..d {
        let dk = p[k] - c[k];
        rest += dk * dk;
    }
    let half = (s * s - rest).max(0.0).sqrt() / grid.spacing()[0];
    let mut hi = ((t + half).floor().max(best as f64) as usize).min(nx - 1);
    while hi > best && !inside(hi, p) {
        hi -= 1;
    }
    while hi + 1 < nx && inside(hi + 1, p) {
        hi += 1;
    }
    let mut lo = ((t - half).ceil().max(0.0) as usize).min(best);
    while lo < best && !inside(lo, p) {
        lo += 1;
    }
    while lo > 0 && inside(lo - 1, p) {
        lo -= 1;
    }
    Some((lo, hi))
}

impl RadonOperator {
    pub fn grid(&self) -> &PixelGrid {
        &self.grid
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn weight_mode(&self) -> WeightMode {
        self.weight_mode
    }

    pub fn storage(&self) -> Storage {
        match self.backend {
            Backend::Sparse(_) => Storage::ExplicitSparse,
            _ => Storage::MatrixFree,
        }
    }

    pub fn kind(&self) -> &'static str {
        self.geometry.kind_name()
    }

    /// Stored (nonzero) entries of the binary pattern.
    pub fn nonzeros(&self) -> usize {
        match &self.backend {
            Backend::Sparse(p) => p.cols.len(),
            Backend::HalfSpace(h) => h.counts.iter().map(|&c| c as usize).sum(),
            Backend::Ball(b) => b
                .runs
                .iter()
                .map(|r| (r.hi - r.lo) as usize + 1)
                .sum(),
        }
    }

    /// Member pixel indices of row `j`, ascending.
    pub fn row_pattern(&self, j: usize) -> Vec<usize> {
        match &self.backend {
            Backend::Sparse(p) => p.cols[p.row_ptr[j]..p.row_ptr[j + 1]]
                .iter()
                .map(|&c| c as usize)
                .collect(),
            Backend::HalfSpace(h) => {
                let n = self.grid.len();
                let dir = j / h.offsets_per_direction;
                let block = &h.order[dir * n..(dir + 1) * n];
                let mut cols: Vec<usize> = block[..h.counts[j] as usize]
                    .iter()
                    .map(|&c| c as usize)
                    .collect();
                cols.sort_unstable();
                cols
            }
            Backend::Ball(b) => {
                let mut cols = Vec::new();
                for r in &b.runs[b.row_ptr[j]..b.row_ptr[j + 1]] {
                    let base = r.line as usize * b.line_len;
                    cols.extend((r.lo as usize..=r.hi as usize).map(|x| base + x));
                }
                cols
            }
        }
    }

    fn pattern(&self) -> CsrPattern {
        let rows = self.geometry.rows();
        let per_row: Vec<Vec<u32>> = (0..rows)
            .into_par_iter()
            .map(|j| self.row_pattern(j).into_iter().map(|c| c as u32).collect())
            .collect();
        let mut row_ptr = Vec::with_capacity(rows + 1);
        row_ptr.push(0);
        let mut cols = Vec::with_capacity(per_row.iter().map(Vec::len).sum());
        for r in per_row {
            cols.extend(r);
            row_ptr.push(cols.len());
        }
        CsrPattern { row_ptr, cols }
    }

    /// Same operator with explicit sparse storage.
    pub fn to_explicit(&self, budget: usize) -> Result<Self> {
        let nnz = self.nonzeros();
        if nnz > budget {
            return Err(Error::Capacity {
                nonzeros: nnz,
                budget,
            });
        }
        let mut op = self.clone();
        op.backend = Backend::Sparse(self.pattern());
        Ok(op)
    }

    pub fn metadata(&self) -> OperatorMetadata {
        let geometry_json = serde_json::to_string(&self.geometry).expect("geometry serializes");
        OperatorMetadata {
            kind: self.kind().to_string(),
            rows: self.rows(),
            cols: self.cols(),
            storage: self.storage(),
            weight_mode: self.weight_mode,
            weight: self.weight,
            nonzeros: self.nonzeros(),
            geometry_hash: format!("{:016x}", fnv1a(geometry_json.as_bytes())),
        }
    }

    /// Writes the weighted matrix in Matrix Market coordinate format.
    pub fn write_matrix_market<W: Write>(&self, w: W) -> Result<()> {
        let mut w = std::io::BufWriter::new(w);
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "% raden {} operator, weight {:?}", self.kind(), self.weight)?;
        writeln!(w, "{} {} {}", self.rows(), self.cols(), self.nonzeros())?;
        for j in 0..self.rows() {
            for c in self.row_pattern(j) {
                writeln!(w, "{} {} {:?}", j + 1, c + 1, self.weight)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_matrix_market(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_matrix_market(std::fs::File::create(path)?)
    }

    fn apply_sparse(&self, p: &CsrPattern, v: &[f64], out: &mut [f64]) {
        let w = self.weight;
        out.par_iter_mut().enumerate().for_each(|(j, o)| {
            let s: f64 = p.cols[p.row_ptr[j]..p.row_ptr[j + 1]]
                .iter()
                .map(|&c| v[c as usize])
                .sum();
            *o = w * s;
        });
    }

    fn adjoint_sparse(&self, p: &CsrPattern, u: &[f64], out: &mut [f64]) {
        let n = self.cols();
        let partials = chunked_partials(u.len(), n, |range, acc| {
            for j in range {
                let uj = u[j];
                if uj != 0.0 {
                    for &c in &p.cols[p.row_ptr[j]..p.row_ptr[j + 1]] {
                        acc[c as usize] += uj;
                    }
                }
            }
        });
        let w = self.weight;
        for (o, s) in out.iter_mut().zip(partials) {
            *o = w * s;
        }
    }

    fn apply_half_space(&self, h: &SortedDirections, v: &[f64], out: &mut [f64]) {
        let n = self.cols();
        let per = h.offsets_per_direction;
        let w = self.weight;
        out.par_chunks_mut(per).enumerate().for_each(|(dir, o)| {
            let order = &h.order[dir * n..(dir + 1) * n];
            let counts = &h.counts[dir * per..(dir + 1) * per];
            let mut acc = 0.0;
            let mut taken = 0usize;
            for (oj, &cnt) in o.iter_mut().zip(counts) {
                let cnt = cnt as usize;
                while taken < cnt {
                    acc += v[order[taken] as usize];
                    taken += 1;
                }
                *oj = w * acc;
            }
        });
    }

    fn adjoint_half_space(&self, h: &SortedDirections, u: &[f64], out: &mut [f64]) {
        let n = self.cols();
        let per = h.offsets_per_direction;
        let dirs = u.len() / per.max(1);
        let partials = chunked_partials(dirs, n, |range, acc| {
            let mut diff = vec![0.0; n + 1];
            for dir in range {
                diff.iter_mut().for_each(|x| *x = 0.0);
                let counts = &h.counts[dir * per..(dir + 1) * per];
                let ud = &u[dir * per..(dir + 1) * per];
                for (&cnt, &uj) in counts.iter().zip(ud) {
                    diff[0] += uj;
                    diff[cnt as usize] -= uj;
                }
                let order = &h.order[dir * n..(dir + 1) * n];
                let mut run = 0.0;
                for (r, &px) in order.iter().enumerate() {
                    run += diff[r];
                    acc[px as usize] += run;
                }
            }
        });
        let w = self.weight;
        for (o, s) in out.iter_mut().zip(partials) {
            *o = w * s;
        }
    }

    fn apply_ball(&self, b: &BallRuns, v: &[f64], out: &mut [f64]) {
        let stride = b.line_len + 1;
        let mut prefix = vec![0.0; b.lines * stride];
        for line in 0..b.lines {
            let src = &v[line * b.line_len..(line + 1) * b.line_len];
            let dst = &mut prefix[line * stride..(line + 1) * stride];
            let mut acc = 0.0;
            for (x, &val) in src.iter().enumerate() {
                acc += val;
                dst[x + 1] = acc;
            }
        }
        let w = self.weight;
        out.par_iter_mut().enumerate().for_each(|(j, o)| {
            let mut s = 0.0;
            for r in &b.runs[b.row_ptr[j]..b.row_ptr[j + 1]] {
                let base = r.line as usize * stride;
                s += prefix[base + r.hi as usize + 1] - prefix[base + r.lo as usize];
            }
            *o = w * s;
        });
    }

    fn adjoint_ball(&self, b: &BallRuns, u: &[f64], out: &mut [f64]) {
        let stride = b.line_len + 1;
        let diff = chunked_partials(u.len(), b.lines * stride, |range, acc| {
            for j in range {
                let uj = u[j];
                if uj == 0.0 {
                    continue;
                }
                for r in &b.runs[b.row_ptr[j]..b.row_ptr[j + 1]] {
                    let base = r.line as usize * stride;
                    acc[base + r.lo as usize] += uj;
                    acc[base + r.hi as usize + 1] -= uj;
                }
            }
        });
        let w = self.weight;
        for line in 0..b.lines {
            let src = &diff[line * stride..(line + 1) * stride];
            let dst = &mut out[line * b.line_len..(line + 1) * b.line_len];
            let mut acc = 0.0;
            for (o, d) in dst.iter_mut().zip(src) {
                acc += d;
                *o = w * acc;
            }
        }
    }
}

impl LinearOperator for RadonOperator {
    fn rows(&self) -> usize {
        self.geometry.rows()
    }

    fn cols(&self) -> usize {
        self.grid.len()
    }

    fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.cols());
        debug_assert_eq!(out.len(), self.rows());
        match &self.backend {
            Backend::Sparse(p) => self.apply_sparse(p, v, out),
            Backend::HalfSpace(h) => self.apply_half_space(h, v, out),
            Backend::Ball(b) => self.apply_ball(b, v, out),
        }
    }

    fn adjoint_into(&self, u: &[f64], out: &mut [f64]) {
        debug_assert_eq!(u.len(), self.rows());
        debug_assert_eq!(out.len(), self.cols());
        match &self.backend {
            Backend::Sparse(p) => self.adjoint_sparse(p, u, out),
            Backend::HalfSpace(h) => self.adjoint_half_space(h, u, out),
            Backend::Ball(b) => self.adjoint_ball(b, u, out),
        }
    }
}

/// Splits `0..items` into a fixed number of chunks, accumulates each into
/// its own buffer of length `len`, and sums the buffers in chunk order.
fn chunked_partials<F>(items: usize, len: usize, f: F) -> Vec<f64>
where
    F: Fn(std::ops::Range<usize>, &mut [f64]) + Sync,
{
    let chunks = REDUCTION_CHUNKS.min(items.max(1));
    let per = items.div_ceil(chunks);
    let partials: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0; len];
            let start = (c * per).min(items);
            let end = ((c + 1) * per).min(items);
            f(start..end, &mut acc);
            acc
        })
        .collect();
    let mut total = vec![0.0; len];
    for p in &partials {
        for (t, x) in total.iter_mut().zip(p) {
            *t += x;
        }
    }
    total
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Reads a Matrix Market coordinate file into `(rows, cols, triplets)`.
pub fn read_matrix_market<R: std::io::BufRead>(r: R) -> Result<(usize, usize, Vec<(usize, usize, f64)>)> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty matrix market file".into()))??;
    if !header.starts_with("%%MatrixMarket matrix coordinate") {
        return Err(Error::Parse(format!("unsupported header {header:?}")));
    }
    let mut size = None;
    let mut entries = Vec::new();
    for line in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = t.split_whitespace().collect();
        let parse_usize = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::Parse(format!("bad integer {s:?}")))
        };
        match size {
            None => {
                if fields.len() != 3 {
                    return Err(Error::Parse(format!("bad size line {t:?}")));
                }
                size = Some((parse_usize(fields[0])?, parse_usize(fields[1])?, parse_usize(fields[2])?));
            }
            Some(_) => {
                if fields.len() != 3 {
                    return Err(Error::Parse(format!("bad entry line {t:?}")));
                }
                let v: f64 = fields[2]
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad value {:?}", fields[2])))?;
                entries.push((parse_usize(fields[0])? - 1, parse_usize(fields[1])? - 1, v));
            }
        }
    }
    let (rows, cols, nnz) = size.ok_or_else(|| Error::Parse("missing size line".into()))?;
    if nnz != entries.len() {
        return Err(Error::Parse(format!(
            "header promises {nnz} entries, found {}",
            entries.len()
        )));
    }
    Ok((rows, cols, entries))
}
