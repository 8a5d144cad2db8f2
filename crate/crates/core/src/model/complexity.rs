use serde::Serialize;

use super::attention::{count_mhsa_macs, MhsaShape};
use crate::tensor::MacTally;
use crate::{Error, Result};

/// Attention cost of global MHSA versus grouped, bottlenecked MHSA on an
/// `H×W×C` feature map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Complexity {
    /// `4·HW·C² + 2·(HW)²·C`
    pub omega_mhsa: u64,
    /// `4·hw·(C/φ)² + 2·(hw)²·(C/φ)` for a single group.
    pub omega_gt_per_group: u64,
    /// `HW / hw`
    pub num_groups: u64,
    pub omega_gt_total: u64,
    /// `omega_gt_total / omega_mhsa`
    pub ratio: f64,
}

fn check(height: usize, width: usize, channels: usize, group_h: usize, group_w: usize, phi: usize) -> Result<()> {
    if [height, width, channels, group_h, group_w, phi].contains(&0) {
        return Err(Error::Config("all complexity parameters must be positive".into()));
    }
    if height % group_h != 0 || width % group_w != 0 {
        return Err(Error::Config(format!(
            "{height}x{width} map does not tile into {group_h}x{group_w} groups"
        )));
    }
    if channels % phi != 0 {
        return Err(Error::Config(format!("{channels} channels not divisible by phi={phi}")));
    }
    Ok(())
}

pub fn complexity(height: usize, width: usize, channels: usize, group_h: usize, group_w: usize, phi: usize) -> Result<Complexity> {
    check(height, width, channels, group_h, group_w, phi)?;
    let hw = (height * width) as u64;
    let c = channels as u64;
    let omega_mhsa = 4 * hw * c * c + 2 * hw * hw * c;
    let n = (group_h * group_w) as u64;
    let d = c / phi as u64;
    let omega_gt_per_group = 4 * n * d * d + 2 * n * n * d;
    let num_groups = hw / n;
    let omega_gt_total = num_groups * omega_gt_per_group;
    Ok(Complexity {
        omega_mhsa,
        omega_gt_per_group,
        num_groups,
        omega_gt_total,
        ratio: omega_gt_total as f64 / omega_mhsa as f64,
    })
}

/// MAC counts observed by running attention on random data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct InstrumentedCounts {
    /// One group spanning the whole map at full width `C`.
    pub global_projection: u64,
    pub global_attention: u64,
    /// All `HW/hw` groups at bottleneck width `C/φ`.
    pub grouped_projection: u64,
    pub grouped_attention: u64,
    /// Relative-position logits, which the closed forms do not count.
    pub grouped_position: u64,
}

impl InstrumentedCounts {
    pub fn global_total(&self) -> u64 {
        self.global_projection + self.global_attention
    }

    pub fn grouped_total(&self) -> u64 {
        self.grouped_projection + self.grouped_attention
    }

    /// Term-by-term agreement with the closed forms.
    pub fn matches(&self, c: &Complexity, height: usize, width: usize, channels: usize, group_h: usize, group_w: usize, phi: usize) -> bool {
        let (hw, ch) = ((height * width) as u64, channels as u64);
        let (n, d) = ((group_h * group_w) as u64, ch / phi as u64);
        self.global_projection == 4 * hw * ch * ch
            && self.global_attention == 2 * hw * hw * ch
            && self.global_total() == c.omega_mhsa
            && self.grouped_projection == c.num_groups * 4 * n * d * d
            && self.grouped_attention == c.num_groups * 2 * n * n * d
            && self.grouped_total() == c.omega_gt_total
    }
}

fn heads_for(d: usize) -> usize {
    [4, 2, 1].into_iter().find(|h| d % h == 0).unwrap_or(1)
}

fn tally_of(groups: usize, d: usize, group_h: usize, group_w: usize) -> Result<MacTally> {
    let shape = MhsaShape {
        heads: heads_for(d),
        group_h,
        group_w,
    };
    count_mhsa_macs(groups, d, shape, 0)
}

/// Executes global attention over the full map and grouped attention over
/// every group, counting the products actually performed.
pub fn instrumented_counts(height: usize, width: usize, channels: usize, group_h: usize, group_w: usize, phi: usize) -> Result<InstrumentedCounts> {
    check(height, width, channels, group_h, group_w, phi)?;
    let global = tally_of(1, channels, height, width)?;
    let groups = (height / group_h) * (width / group_w);
    let grouped = tally_of(groups, channels / phi, group_h, group_w)?;
    Ok(InstrumentedCounts {
        global_projection: global.projection,
        global_attention: global.attention,
        grouped_projection: grouped.projection,
        grouped_attention: grouped.attention,
        grouped_position: grouped.position,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_examples() {
        assert_eq!(complexity(8, 8, 16, 8, 8, 1).unwrap().omega_mhsa, 196_608);
        assert_eq!(complexity(8, 8, 16, 8, 8, 2).unwrap().omega_gt_per_group, 81_920);
        let c = complexity(16, 16, 16, 8, 8, 2).unwrap();
        assert_eq!(c.omega_mhsa, 2_359_296);
        assert_eq!(c.num_groups, 4);
        assert_eq!(c.omega_gt_total, 327_680);
        assert!((c.ratio - 0.1389).abs() < 1e-4);
    }

    #[test]
    fn single_group_without_bottleneck_is_global() {
        let c = complexity(8, 8, 16, 8, 8, 1).unwrap();
        assert_eq!(c.omega_gt_total, c.omega_mhsa);
        assert_eq!(c.ratio, 1.0);
    }

    #[test]
    fn rejects_indivisible() {
        assert!(complexity(10, 8, 16, 8, 8, 2).is_err());
        assert!(complexity(8, 8, 15, 8, 8, 2).is_err());
    }

    #[test]
    fn decreasing_in_phi() {
        let mut prev = u64::MAX;
        for phi in [1, 2, 4, 8, 16] {
            let c = complexity(32, 32, 16, 8, 8, phi).unwrap();
            assert!(c.omega_gt_total < prev);
            assert!(c.ratio < 1.0);
            prev = c.omega_gt_total;
        }
    }

    #[test]
    fn instrumented_agrees() {
        let (h, w, c, gh, gw, phi) = (16, 16, 16, 8, 8, 2);
        let closed = complexity(h, w, c, gh, gw, phi).unwrap();
        let counted = instrumented_counts(h, w, c, gh, gw, phi).unwrap();
        assert!(counted.matches(&closed, h, w, c, gh, gw, phi));
    }
}
