use anc_core::{nse_db, Result};
use serde::{Deserialize, Serialize};

/// NSE of one block, stamped with the index one past its last sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NsePoint {
    pub sample: usize,
    pub nse_db: f64,
}

/// NSE over consecutive non-overlapping blocks. Blocks with no disturbance
/// energy are skipped; a trailing partial block is dropped.
pub fn block_nse(error: &[f64], disturbance: &[f64], block: usize) -> Result<Vec<NsePoint>> {
    let mut out = Vec::new();
    for (i, (e, d)) in error.chunks_exact(block).zip(disturbance.chunks_exact(block)).enumerate() {
        if d.iter().all(|&v| v == 0.0) {
            continue;
        }
        out.push(NsePoint {
            sample: (i + 1) * block,
            nse_db: nse_db(e, d)?,
        });
    }
    Ok(out)
}

/// First sample from which every later block stays below `threshold_db`.
pub fn settling_sample(curve: &[NsePoint], threshold_db: f64) -> Option<usize> {
    let last_above = curve.iter().rposition(|p| p.nse_db >= threshold_db);
    match last_above {
        None => curve.first().map(|p| p.sample),
        Some(i) => curve.get(i + 1).map(|p| p.sample),
    }
}
