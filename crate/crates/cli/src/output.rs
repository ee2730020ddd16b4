//! CSV and PNG artifacts. Every artifact carries the configuration
//! fingerprint: CSV files as a leading `# fingerprint=<hex>` comment line,
//! PNG files as a `fingerprint` text chunk.

use std::fs;
use std::io::Write;
use std::path::Path;

use hsvae::diffcore::Tensor;

use crate::CliError;

pub fn fingerprint_line(fp: &[u8; 32]) -> String {
    format!("# fingerprint={}\n", hex::encode(fp))
}

/// Writes `header` and `rows` (already comma-joined) after the fingerprint
/// comment.
pub fn write_csv(path: &Path, fp: &[u8; 32], header: &str, rows: &[String]) -> Result<(), CliError> {
    let mut s = fingerprint_line(fp);
    s.push_str(header);
    s.push('\n');
    for r in rows {
        s.push_str(r);
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

/// Appends rows, writing the header first if the file is new or empty.
pub fn append_csv(path: &Path, header: &str, rows: &[String]) -> Result<(), CliError> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut f = fs::OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(f, "{header}")?;
    }
    for r in rows {
        writeln!(f, "{r}")?;
    }
    Ok(())
}

/// One row per tensor row, columns `z1..zn`.
pub fn tensor_csv_rows(t: &Tensor<f64>) -> (String, Vec<String>) {
    let header = (1..=t.cols()).map(|i| format!("z{i}")).collect::<Vec<_>>().join(",");
    let rows = t
        .iter_rows()
        .map(|r| r.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(","))
        .collect();
    (header, rows)
}

/// Reads a numeric CSV with a header row; `#` lines are comments.
pub fn read_matrix_csv(path: &Path) -> Result<Tensor<f64>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let row = rec
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Data(format!("{}: data row {}: {e}", path.display(), i + 1)))?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!("{}: no data rows", path.display())));
    }
    Tensor::from_rows(&rows).map_err(CliError::from)
}

/// Tiles `images` (rows of `side * side` pixels in `[0, 1]`) into a
/// grayscale PNG with `ceil(sqrt(count))` columns.
pub fn write_png_grid(path: &Path, images: &Tensor<f64>, side: usize, fp: &[u8; 32]) -> Result<(), CliError> {
    let count = images.rows();
    let cols = (count as f64).sqrt().ceil().max(1.0) as usize;
    let rows = count.div_ceil(cols).max(1);
    let (w, h) = (cols * side, rows * side);
    let mut pixels = vec![0u8; w * h];
    for (k, img) in images.iter_rows().enumerate() {
        let (gy, gx) = (k / cols, k % cols);
        for y in 0..side {
            for x in 0..side {
                let v = (img[y * side + x].clamp(0.0, 1.0) * 255.0).round() as u8;
                pixels[(gy * side + y) * w + gx * side + x] = v;
            }
        }
    }
    let file = fs::File::create(path)?;
    let mut enc = png::Encoder::new(std::io::BufWriter::new(file), w as u32, h as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    enc.add_text_chunk("fingerprint".into(), hex::encode(fp))
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut writer = enc.write_header().map_err(|e| CliError::Runtime(e.to_string()))?;
    writer.write_image_data(&pixels).map_err(|e| CliError::Runtime(e.to_string()))?;
    writer.finish().map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(())
}
