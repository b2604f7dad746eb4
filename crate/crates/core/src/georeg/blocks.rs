use crate::error::{Error, Result};
use crate::lf::LightField;

/// One `p×p` spatial block across all views, matricized as
/// `(u·v, p²·c)` with the second mode ordered `(row, col, channel)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub row: usize,
    pub col: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockSet {
    pub p: usize,
    /// `(u, v, h, w, c)` of the source field
    pub extent: [usize; 5],
    pub blocks: Vec<Block>,
}

impl BlockSet {
    pub fn n(&self) -> usize {
        self.blocks.len()
    }

    pub fn views(&self) -> usize {
        self.extent[0] * self.extent[1]
    }

    /// `p²·c`
    pub fn block_width(&self) -> usize {
        self.p * self.p * self.extent[4]
    }

    /// Flat light-field offsets of block `i`'s elements in matricized order,
    /// for batch item `b`.
    pub fn offsets(&self, i: usize, b: usize) -> Vec<usize> {
        let [u, v, h, w, c] = self.extent;
        let (r0, c0) = (self.blocks[i].row, self.blocks[i].col);
        let mut out = Vec::with_capacity(self.views() * self.block_width());
        for view in 0..u * v {
            let base = (b * u * v + view) * h;
            for dy in 0..self.p {
                for dx in 0..self.p {
                    let px = ((base + r0 + dy) * w + c0 + dx) * c;
                    out.extend(px..px + c);
                }
            }
        }
        out
    }

    /// Inverse of [`partition_blocks`] for a single-item field.
    pub fn reassemble(&self, range: crate::lf::RangeTag) -> Result<LightField> {
        let [u, v, h, w, c] = self.extent;
        let dims = crate::lf::Dims::new(1, u, v, h, w, c);
        let mut data = vec![0f32; dims.len()];
        for (i, blk) in self.blocks.iter().enumerate() {
            for (&off, &x) in self.offsets(i, 0).iter().zip(&blk.data) {
                data[off] = x as f32;
            }
        }
        LightField::new(dims, data, range)
    }
}

/// Splits batch item `b` of `lf` into non-overlapping `p×p` blocks in
/// raster order.
pub fn partition_item(lf: &LightField, b: usize, p: usize) -> Result<BlockSet> {
    let data: Vec<f64> = lf.data().iter().map(|&x| x as f64).collect();
    partition_raw(&data, lf.dims().as_array(), b, p)
}

/// [`partition_item`] over row-major `(b, u, v, h, w, c)` values with any
/// channel count.
pub fn partition_raw(src: &[f64], dims: [usize; 6], b: usize, p: usize) -> Result<BlockSet> {
    let [nb, u, v, h, w, c] = dims;
    if src.len() != dims.iter().product::<usize>() {
        return Err(Error::shape("partition_blocks", format!("{} values for dims {dims:?}", src.len())));
    }
    if p == 0 || h % p != 0 || w % p != 0 {
        return Err(Error::config(format!(
            "block size {p} does not divide the spatial extent {h}x{w}; crop to a multiple of {p}"
        )));
    }
    if b >= nb {
        return Err(Error::OutOfBounds {
            axis: "b",
            index: b,
            extent: nb,
        });
    }
    let mut set = BlockSet {
        p,
        extent: [u, v, h, w, c],
        blocks: Vec::with_capacity((h / p) * (w / p)),
    };
    for row in (0..h).step_by(p) {
        for col in (0..w).step_by(p) {
            set.blocks.push(Block { row, col, data: Vec::new() });
        }
    }
    for i in 0..set.blocks.len() {
        let data = set.offsets(i, b).iter().map(|&o| src[o]).collect();
        set.blocks[i].data = data;
    }
    Ok(set)
}

/// [`partition_item`] for a single-item field.
pub fn partition_blocks(lf: &LightField, p: usize) -> Result<BlockSet> {
    if lf.dims().b != 1 {
        return Err(Error::shape("partition_blocks", format!("expected batch 1, got {}", lf.dims().b)));
    }
    partition_item(lf, 0, p)
}

/// Block indices of one cluster. `members[0]` is the reference block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    pub members: Vec<usize>,
    /// leftover blocks nearest to this cluster's reference; not tensorized
    pub overflow: Vec<usize>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Groups blocks into `k` clusters of exactly `m`.
///
/// References are chosen by farthest-point seeding from block 0; each
/// reference in seeding order then takes its `m−1` nearest unassigned
/// blocks. Ties go to the lower block index.
pub fn match_clusters(bs: &BlockSet, k: usize, m: usize) -> Result<Vec<Cluster>> {
    let n = bs.n();
    if k == 0 || m == 0 || k * m > n {
        return Err(Error::config(format!("cannot form {k} clusters of {m} from {n} blocks")));
    }
    let data = |i: usize| bs.blocks[i].data.as_slice();

    let mut seeds = vec![0usize];
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(data(i), data(0))).collect();
    while seeds.len() < k {
        let mut best = None;
        for i in 0..n {
            if seeds.contains(&i) {
                continue;
            }
            if best.is_none_or(|b: usize| nearest[i] > nearest[b]) {
                best = Some(i);
            }
        }
        let s = best.expect("k ≤ n");
        seeds.push(s);
        for i in 0..n {
            nearest[i] = nearest[i].min(sq_dist(data(i), data(s)));
        }
    }

    let mut assigned = vec![false; n];
    for &s in &seeds {
        assigned[s] = true;
    }
    let mut clusters: Vec<Cluster> = Vec::with_capacity(k);
    for &s in &seeds {
        let mut cand: Vec<(f64, usize)> = (0..n)
            .filter(|&i| !assigned[i])
            .map(|i| (sq_dist(data(i), data(s)), i))
            .collect();
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut members = vec![s];
        for &(_, i) in cand.iter().take(m - 1) {
            assigned[i] = true;
            members.push(i);
        }
        clusters.push(Cluster {
            members,
            overflow: Vec::new(),
        });
    }
    for i in (0..n).filter(|&i| !assigned[i]) {
        let (j, _) = seeds
            .iter()
            .enumerate()
            .map(|(j, &s)| (j, sq_dist(data(i), data(s))))
            .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
        clusters[j].overflow.push(i);
    }
    Ok(clusters)
}

/// A cluster stacked along a third mode: `(u·v, p²·c, m)`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterTensor {
    pub member_indices: Vec<usize>,
    pub overflow: Vec<usize>,
    pub dims: [usize; 3],
    pub data: Vec<f64>,
}

impl ClusterTensor {
    pub fn gather(bs: &BlockSet, cluster: &Cluster) -> Self {
        let (i1, i2, i3) = (bs.views(), bs.block_width(), cluster.members.len());
        let mut data = vec![0.0; i1 * i2 * i3];
        for (kk, &blk) in cluster.members.iter().enumerate() {
            for (e, &x) in bs.blocks[blk].data.iter().enumerate() {
                data[e * i3 + kk] = x;
            }
        }
        ClusterTensor {
            member_indices: cluster.members.clone(),
            overflow: cluster.overflow.clone(),
            dims: [i1, i2, i3],
            data,
        }
    }
}

/// Block matching followed by tensorization of each cluster.
pub fn match_blocks(bs: &BlockSet, k: usize, m: usize) -> Result<Vec<ClusterTensor>> {
    Ok(match_clusters(bs, k, m)?
        .iter()
        .map(|c| ClusterTensor::gather(bs, c))
        .collect())
}
