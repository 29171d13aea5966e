use std::io::Write;

use serde::{Deserialize, Serialize};

use super::MetricError;

/// Mean error conditioned on rank bins of an index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedErrorCurve {
    pub n_bins: usize,
    /// Quantile boundaries, `n_bins + 1` values from 0 to 1.
    pub bin_edges: Vec<f64>,
    /// Smallest and largest index value in each bin.
    pub index_lo: Vec<f64>,
    pub index_hi: Vec<f64>,
    pub mean_error: Vec<f64>,
    pub count: Vec<usize>,
}

impl BinnedErrorCurve {
    /// `bin,quantile_lo,quantile_hi,mean_error,count`
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "bin,quantile_lo,quantile_hi,mean_error,count")?;
        for b in 0..self.n_bins {
            writeln!(
                w,
                "{},{},{},{},{}",
                b,
                self.bin_edges[b],
                self.bin_edges[b + 1],
                self.mean_error[b],
                self.count[b]
            )?;
        }
        Ok(())
    }
}

/// Groups samples into `n_bins` rank bins of `index_values` and averages
/// `errors` within each. Samples with a non-finite index or error are
/// skipped. Ties keep their original order; when the sample count is not
/// a multiple of `n_bins` the top bins get one extra sample each.
pub fn quantile_bin_errors(
    index_values: &[f64],
    errors: &[f64],
    n_bins: usize,
) -> Result<BinnedErrorCurve, MetricError> {
    if index_values.len() != errors.len() {
        return Err(MetricError::LengthMismatch(index_values.len(), errors.len()));
    }
    if n_bins < 2 {
        return Err(MetricError::BadBins(n_bins));
    }
    let mut order: Vec<usize> = (0..index_values.len())
        .filter(|&i| index_values[i].is_finite() && errors[i].is_finite())
        .collect();
    let n = order.len();
    if n < n_bins {
        return Err(MetricError::TooFewSamples { need: n_bins, got: n });
    }
    order.sort_by(|&a, &b| index_values[a].total_cmp(&index_values[b]));

    let base = n / n_bins;
    let extra = n % n_bins;
    let mut curve = BinnedErrorCurve {
        n_bins,
        bin_edges: Vec::with_capacity(n_bins + 1),
        index_lo: Vec::with_capacity(n_bins),
        index_hi: Vec::with_capacity(n_bins),
        mean_error: Vec::with_capacity(n_bins),
        count: Vec::with_capacity(n_bins),
    };
    let mut start = 0usize;
    curve.bin_edges.push(0.0);
    for b in 0..n_bins {
        let size = base + usize::from(b >= n_bins - extra);
        let members = &order[start..start + size];
        let sum: f64 = members.iter().map(|&i| errors[i]).sum();
        curve.mean_error.push(sum / size as f64);
        curve.count.push(size);
        curve.index_lo.push(index_values[members[0]]);
        curve.index_hi.push(index_values[members[size - 1]]);
        start += size;
        curve.bin_edges.push(start as f64 / n as f64);
    }
    Ok(curve)
}
