use super::distance::{DistanceConfig, PreparedRows};
use crate::encdec::Table;
use crate::error::{Error, Result};

/// Default neighbour count for the k-NN radii.
pub const DEFAULT_K: usize = 5;
const GRID: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

/// Distance from each row to its k-th nearest other row.
fn knn_radii(rows: &PreparedRows, k: usize) -> Vec<f64> {
    (0..rows.len())
        .map(|i| {
            let mut d: Vec<f64> = (0..rows.len())
                .filter(|&j| j != i)
                .map(|j| rows.distance(rows.row(i), rows.row(j)))
                .collect();
            d.select_nth_unstable_by(k - 1, f64::total_cmp);
            d[k - 1]
        })
        .collect()
}

/// For each probe row, the density rank of the densest support ball that
/// contains it (`usize::MAX` when none does). Ranks order support points by
/// ascending k-NN radius.
fn containment_ranks(support: &PreparedRows, radii: &[f64], probes: &PreparedRows) -> Vec<usize> {
    let mut order: Vec<usize> = (0..support.len()).collect();
    order.sort_by(|&a, &b| radii[a].total_cmp(&radii[b]).then(a.cmp(&b)));
    (0..probes.len())
        .map(|p| {
            order
                .iter()
                .position(|&i| support.distance(probes.row(p), support.row(i)) <= radii[i])
                .unwrap_or(usize::MAX)
        })
        .collect()
}

/// Fraction of probes inside the α-support for each α on the grid.
fn coverage_curve(ranks: &[usize], support_len: usize) -> Vec<f64> {
    GRID.iter()
        .map(|a| {
            let top = (a * support_len as f64).ceil() as usize;
            ranks.iter().filter(|&&r| r < top).count() as f64 / ranks.len() as f64
        })
        .collect()
}

/// `1 − mean_α |c(α) − c_ref(α)| / c_ref(α)`, clipped to [0, 1]. The
/// reference curve is the support set's own coverage, which is what a
/// perfect generator reproduces.
fn calibrated_score(curve: &[f64], reference: &[f64]) -> f64 {
    let dev = curve
        .iter()
        .zip(reference)
        .map(|(c, r)| (c - r).abs() / r.max(f64::MIN_POSITIVE))
        .sum::<f64>()
        / curve.len() as f64;
    (1.0 - dev).clamp(0.0, 1.0)
}

fn support_score(support: &Table, probes: &Table, k: usize, cfg: &DistanceConfig) -> Result<f64> {
    support.ensure_same_schema(probes)?;
    if k == 0 || k >= support.n_rows() || probes.n_rows() == 0 {
        return Err(Error::Data(format!(
            "k-NN support needs 1 <= k < {} rows and a non-empty probe set",
            support.n_rows()
        )));
    }
    let s = PreparedRows::new(support, cfg)?;
    let p = PreparedRows::new(probes, cfg)?;
    let radii = knn_radii(&s, k);
    let own = coverage_curve(&containment_ranks(&s, &radii, &s), s.len());
    let cov = coverage_curve(&containment_ranks(&s, &radii, &p), s.len());
    Ok(calibrated_score(&cov, &own))
}

/// α-precision: how well synthetic rows populate the real data's
/// density-ranked k-NN supports.
pub fn ip_alpha(syn: &Table, real: &Table, k: usize, cfg: &DistanceConfig) -> Result<f64> {
    support_score(real, syn, k, cfg)
}

/// β-recall: how well the synthetic data's supports cover the real rows.
pub fn ir_beta(syn: &Table, real: &Table, k: usize, cfg: &DistanceConfig) -> Result<f64> {
    support_score(syn, real, k, cfg)
}
