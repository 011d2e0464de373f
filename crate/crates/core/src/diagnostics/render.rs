use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::AlignmentMetrics;
use crate::error::{Error, Result};
use crate::kernels::{AlignmentMatrix, AlignmentRow, EdgePolicy};
use crate::scalar::Scalar;

/// Binary greyscale (P5) image, one pixel row per decoder step and one
/// column per memory entry. Intensities are scaled by the matrix maximum.
pub fn to_pgm<S: Scalar>(alignment: &AlignmentMatrix<S>) -> Vec<u8> {
    let (h, w) = (alignment.steps(), alignment.memory_len());
    let max = alignment
        .rows
        .iter()
        .flat_map(|r| r.weights().iter().map(|v| v.as_f64()))
        .fold(0.0f64, f64::max);
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    for r in &alignment.rows {
        for v in r.weights() {
            let px = if max > 0.0 { (255.0 * v.as_f64() / max).round().clamp(0.0, 255.0) } else { 0.0 };
            out.push(px as u8);
        }
    }
    out
}

/// Plain CSV with one line per decoder step. Values are written in the
/// shortest form that parses back to the same number.
pub fn alignment_to_csv<S: Scalar>(alignment: &AlignmentMatrix<S>) -> String {
    let mut out = String::new();
    for r in &alignment.rows {
        let line: Vec<String> = r.weights().iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn alignment_from_csv<S: Scalar + std::str::FromStr>(
    text: &str,
    edge_policy: EdgePolicy,
) -> Result<AlignmentMatrix<S>> {
    let mut rows = Vec::new();
    for (k, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let weights = line
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<S>()
                    .map_err(|_| Error::Parse(format!("line {}: bad value {f:?}", k + 1)))
            })
            .collect::<Result<Vec<S>>>()?;
        rows.push(AlignmentRow::new(weights)?);
    }
    AlignmentMatrix::new(rows, edge_policy)
}

pub fn metrics_to_csv(metrics: &AlignmentMetrics) -> String {
    let mut out = String::from("frame,max_weight,entropy,argmax\n");
    for i in 0..metrics.max_weight.len() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            i + 1,
            metrics.max_weight[i],
            metrics.entropy[i],
            metrics.argmax[i] + 1
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeatmapFiles {
    pub pgm: PathBuf,
    pub csv: PathBuf,
}

/// Writes `<stem>.pgm` and `<stem>.csv` under `dir`, creating it if needed.
pub fn render_alignment_heatmap<S: Scalar>(
    alignment: &AlignmentMatrix<S>,
    dir: &Path,
    stem: &str,
) -> Result<HeatmapFiles> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let pgm = dir.join(format!("{stem}.pgm"));
    let csv = dir.join(format!("{stem}.csv"));
    fs::write(&pgm, to_pgm(alignment)).map_err(|e| Error::io(&pgm, e))?;
    fs::write(&csv, alignment_to_csv(alignment)).map_err(|e| Error::io(&csv, e))?;
    Ok(HeatmapFiles { pgm, csv })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: Vec<Vec<f64>>) -> AlignmentMatrix<f64> {
        AlignmentMatrix::new(rows.into_iter().map(|r| AlignmentRow::new(r).unwrap()).collect(), EdgePolicy::Leak).unwrap()
    }

    #[test]
    fn identity_pixels() {
        let pgm = to_pgm(&matrix(vec![vec![1.0, 0.0], vec![0.0, 1.0]]));
        let header = b"P5\n2 2\n255\n";
        assert_eq!(&pgm[..header.len()], header);
        assert_eq!(&pgm[header.len()..], &[255, 0, 0, 255]);
    }

    #[test]
    fn max_scaling() {
        let pgm = to_pgm(&matrix(vec![vec![0.2, 0.1], vec![0.0, 0.0]]));
        assert_eq!(&pgm[pgm.len() - 4..], &[255, 128, 0, 0]);
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let m = matrix(vec![vec![0.1, 1.0 / 3.0, 1e-20], vec![0.0, 0.5, 0.25]]);
        let back: AlignmentMatrix<f64> = alignment_from_csv(&alignment_to_csv(&m), EdgePolicy::Leak).unwrap();
        assert_eq!(back, m);
        assert!(alignment_from_csv::<f64>("0.1,x\n", EdgePolicy::Leak).is_err());
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let m = matrix(vec![vec![0.1, 1.0 / 3.0], vec![2.0f64.sqrt() / 2.0, 0.0]]);
        let back: AlignmentMatrix<f64> = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let files = render_alignment_heatmap(&matrix(vec![vec![1.0, 0.0]]), &dir.path().join("sub"), "a").unwrap();
        assert!(files.pgm.exists() && files.csv.exists());
    }
}
