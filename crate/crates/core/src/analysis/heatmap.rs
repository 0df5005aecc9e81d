use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HeatmapError {
    #[error("attention is {rows}x{cols} but there are {outputs} output and {sources} source labels")]
    DimensionMismatch {
        rows: usize,
        cols: usize,
        outputs: usize,
        sources: usize,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn check(attn: &[Vec<f64>], source: &[String], output: &[String]) -> Result<(), HeatmapError> {
    let cols = attn.first().map_or(0, Vec::len);
    if attn.len() != output.len() || attn.iter().any(|r| r.len() != source.len()) {
        return Err(HeatmapError::DimensionMismatch {
            rows: attn.len(),
            cols,
            outputs: output.len(),
            sources: source.len(),
        });
    }
    Ok(())
}

/// One row per output token (label first), one column per source token.
pub fn heatmap_tsv(attn: &[Vec<f64>], source: &[String], output: &[String]) -> Result<String, HeatmapError> {
    check(attn, source, output)?;
    let mut s = String::new();
    for tok in source {
        s.push('\t');
        s.push_str(tok);
    }
    s.push('\n');
    for (label, row) in output.iter().zip(attn) {
        s.push_str(label);
        for v in row {
            write!(s, "\t{v:.6}").unwrap();
        }
        s.push('\n');
    }
    Ok(s)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const CELL: usize = 20;

/// Grayscale grid, darker for more weight.
pub fn heatmap_svg(attn: &[Vec<f64>], source: &[String], output: &[String]) -> Result<String, HeatmapError> {
    check(attn, source, output)?;
    let chars = |v: &[String]| v.iter().map(|t| t.chars().count()).max().unwrap_or(0);
    let left = 7 * chars(output) + 8;
    let top = 7 * chars(source) + 8;
    let (w, h) = (left + CELL * source.len(), top + CELL * output.len());
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"monospace\" font-size=\"11\">\n"
    );
    for (j, tok) in source.iter().enumerate() {
        let x = left + CELL * j + CELL / 2 + 4;
        writeln!(
            s,
            "<text x=\"{x}\" y=\"{}\" transform=\"rotate(-90 {x} {})\">{}</text>",
            top - 4,
            top - 4,
            escape(tok)
        )
        .unwrap();
    }
    for (i, (label, row)) in output.iter().zip(attn).enumerate() {
        let y = top + CELL * i;
        writeln!(s, "<text x=\"2\" y=\"{}\">{}</text>", y + CELL - 6, escape(label)).unwrap();
        for (j, v) in row.iter().enumerate() {
            let g = (255.0 * (1.0 - v.clamp(0.0, 1.0))).round() as u8;
            writeln!(
                s,
                "<rect x=\"{}\" y=\"{y}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"rgb({g},{g},{g})\"/>",
                left + CELL * j
            )
            .unwrap();
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Writes `<prefix>.tsv` and `<prefix>.svg`.
pub fn attention_heatmap(
    attn: &[Vec<f64>],
    source: &[String],
    output: &[String],
    prefix: &Path,
) -> Result<(PathBuf, PathBuf), HeatmapError> {
    let tsv = heatmap_tsv(attn, source, output)?;
    let svg = heatmap_svg(attn, source, output)?;
    let (tp, sp) = (prefix.with_extension("tsv"), prefix.with_extension("svg"));
    std::fs::write(&tp, tsv)?;
    std::fs::write(&sp, svg)?;
    Ok((tp, sp))
}
