//! Ground-truth correspondence files: `model,anchor` index pairs.

use std::path::Path;

use ccpd::bench::synth::CorrespondenceGroundTruth;

use crate::error::{CliError, Result};
use crate::fileio::{read_to_string, write_atomic};

pub const HEADER: &str = "model,anchor";

pub fn parse_truth(text: &str) -> std::result::Result<Vec<(usize, usize)>, (usize, String)> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line == HEADER {
            continue;
        }
        let (m, a) = line
            .split_once(',')
            .ok_or((i + 1, "expected model,anchor".to_string()))?;
        let idx = |s: &str| s.trim().parse::<usize>().map_err(|_| (i + 1, format!("bad index {s:?}")));
        pairs.push((idx(m)?, idx(a)?));
    }
    Ok(pairs)
}

/// Reads pairs and checks them against the set sizes.
pub fn read_truth(path: &Path, model_count: usize, anchor_count: usize) -> Result<CorrespondenceGroundTruth> {
    let pairs = parse_truth(&read_to_string(path)?).map_err(|(l, m)| CliError::parse(path, l, m))?;
    CorrespondenceGroundTruth::new(pairs, model_count, anchor_count)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn write_truth(truth: &CorrespondenceGroundTruth, path: &Path) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "{HEADER}")?;
        for (m, a) in truth.pairs() {
            writeln!(w, "{m},{a}")?;
        }
        Ok(())
    })
}
