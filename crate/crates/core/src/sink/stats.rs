use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StatsError {
    #[error("total frame count is zero")]
    ZeroTotal,
    #[error("kept {kept} frames out of only {total}")]
    KeptExceedsTotal { total: u64, kept: u64 },
}

/// Percentage of frames not kept: `100 · (1 − kept/total)`.
pub fn reduction_stats(total: u64, kept: u64) -> Result<f64, StatsError> {
    if total == 0 {
        return Err(StatsError::ZeroTotal);
    }
    if kept > total {
        return Err(StatsError::KeptExceedsTotal { total, kept });
    }
    Ok(100.0 * (1.0 - kept as f64 / total as f64))
}

/// Two decimals and a percent sign, e.g. `85.65%`.
pub fn format_percent(p: f64) -> String {
    format!("{p:.2}%")
}
