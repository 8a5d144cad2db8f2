use crate::tensor::{Graph, Tensor, Var};
use crate::{Error, Result};

fn check_tiling(op: &'static str, h: usize, w: usize, group_h: usize, group_w: usize) -> Result<()> {
    if group_h == 0 || group_w == 0 || h % group_h != 0 || w % group_w != 0 {
        return Err(Error::invalid(
            op,
            format!("{h}x{w} map does not tile into {group_h}x{group_w} groups"),
        ));
    }
    Ok(())
}

/// Splits an `N×C×H×W` map into non-overlapping `group_h×group_w` windows.
///
/// Output is `[N·G, group_h·group_w, C]`: groups are ordered row-major over
/// the group grid (per sample), tokens row-major within each group.
pub fn partition_groups(g: &mut Graph, x: Var, group_h: usize, group_w: usize) -> Result<Var> {
    let shape = g.shape(x).to_vec();
    let [n, c, h, w] = shape[..] else {
        return Err(Error::invalid("group_partition", format!("expected N×C×H×W, got {shape:?}")));
    };
    check_tiling("group_partition", h, w, group_h, group_w)?;
    let (gy, gx) = (h / group_h, w / group_w);
    let r = g.reshape(x, &[n, c, gy, group_h, gx, group_w])?;
    let p = g.permute(r, &[0, 2, 4, 3, 5, 1])?;
    g.reshape(p, &[n * gy * gx, group_h * group_w, c])
}

/// Inverse of [`partition_groups`].
pub fn merge_groups(g: &mut Graph, blocks: Var, n: usize, h: usize, w: usize, group_h: usize, group_w: usize) -> Result<Var> {
    check_tiling("group_merge", h, w, group_h, group_w)?;
    let shape = g.shape(blocks).to_vec();
    let (gy, gx) = (h / group_h, w / group_w);
    let [b, tokens, c] = shape[..] else {
        return Err(Error::invalid("group_merge", format!("expected [blocks, tokens, C], got {shape:?}")));
    };
    if b != n * gy * gx || tokens != group_h * group_w {
        return Err(Error::invalid(
            "group_merge",
            format!("{b} blocks of {tokens} tokens cannot form {n} maps of {h}x{w} with {group_h}x{group_w} groups"),
        ));
    }
    let r = g.reshape(blocks, &[n, gy, gx, group_h, group_w, c])?;
    let p = g.permute(r, &[0, 5, 1, 3, 2, 4])?;
    g.reshape(p, &[n, c, h, w])
}

/// Splits a `C×H×W` feature into `(H/group_h)·(W/group_w)` blocks of shape
/// `(group_h·group_w) × C`.
pub fn group_partition(feature: &Tensor, group_h: usize, group_w: usize) -> Result<Vec<Tensor>> {
    let shape = feature.shape().to_vec();
    let [c, h, w] = shape[..] else {
        return Err(Error::invalid("group_partition", format!("expected C×H×W, got {shape:?}")));
    };
    let mut g = Graph::new();
    let x = g.constant(feature.clone().reshape(vec![1, c, h, w])?);
    let blocks = partition_groups(&mut g, x, group_h, group_w)?;
    let n = group_h * group_w;
    g.data(blocks)
        .chunks(n * c)
        .map(|chunk| Tensor::new(vec![n, c], chunk.to_vec()))
        .collect()
}

/// Reassembles blocks produced by [`group_partition`] into a `C×H×W` map.
pub fn group_merge(blocks: &[Tensor], shape: [usize; 3], group_h: usize, group_w: usize) -> Result<Tensor> {
    let [c, h, w] = shape;
    check_tiling("group_merge", h, w, group_h, group_w)?;
    let expected = (h / group_h) * (w / group_w);
    if blocks.len() != expected {
        return Err(Error::invalid(
            "group_merge",
            format!("{} blocks given, {expected} needed for {h}x{w}", blocks.len()),
        ));
    }
    let n = group_h * group_w;
    let mut data = Vec::with_capacity(c * h * w);
    for b in blocks {
        if b.shape() != [n, c] {
            return Err(Error::shape("group_merge", b.shape(), &[n, c]));
        }
        data.extend_from_slice(b.data());
    }
    let mut g = Graph::new();
    let stacked = g.constant(Tensor::new(vec![expected, n, c], data)?);
    let merged = merge_groups(&mut g, stacked, 1, h, w, group_h, group_w)?;
    g.value(merged).clone().reshape(vec![c, h, w])
}
