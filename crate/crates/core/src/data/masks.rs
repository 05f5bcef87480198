//! Attention masks as 8-bit grayscale PNGs plus CSVs of the raw values.
//! Images put the last feature row at the top so low frequencies sit at
//! the bottom; CSV rows follow feature order.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::features::file::write_atomic;

/// One mask and the metadata used to name and group it.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskExport {
    pub utt_id: String,
    /// Grouping label: the attack id, or `bonafide` for bona fide speech.
    pub attack_id: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f32>,
}

impl MaskExport {
    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.rows * self.cols || self.values.is_empty() {
            return Err(Error::shape(format!(
                "mask {} has {} values for {}x{}",
                self.utt_id,
                self.values.len(),
                self.rows,
                self.cols
            )));
        }
        if let Some(v) = self.values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!(
                "mask {} has value {v} outside [0, 1]",
                self.utt_id
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskMode {
    /// One image per mask, named by utterance id.
    Single,
    /// One cellwise-average image per attack id, named `avg_<attack>`.
    ClassAverage,
}

/// Pixel value of a mask cell.
pub fn quantize(v: f32) -> u8 {
    (255.0 * v).round() as u8
}

fn encode_png(m: &MaskExport) -> Result<Vec<u8>> {
    let mut pixels = Vec::with_capacity(m.values.len());
    for row in m.values.chunks(m.cols).rev() {
        pixels.extend(row.iter().map(|&v| quantize(v)));
    }
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, m.cols as u32, m.rows as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let png_err = |e: png::EncodingError| Error::format(format!("png encoding: {e}"));
    let mut w = enc.write_header().map_err(png_err)?;
    w.write_image_data(&pixels).map_err(png_err)?;
    w.finish().map_err(png_err)?;
    Ok(out)
}

fn encode_csv(m: &MaskExport) -> String {
    let mut out = String::new();
    for row in m.values.chunks(m.cols) {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{v}").expect("string write");
        }
        out.push('\n');
    }
    out
}

fn average(group: &[&MaskExport], attack: &str) -> Result<MaskExport> {
    let first = group[0];
    let mut sum = vec![0.0f64; first.values.len()];
    for m in group {
        if (m.rows, m.cols) != (first.rows, first.cols) {
            return Err(Error::shape(format!(
                "cannot average {}x{} and {}x{} masks",
                first.rows, first.cols, m.rows, m.cols
            )));
        }
        sum.iter_mut()
            .zip(&m.values)
            .for_each(|(s, &v)| *s += v as f64);
    }
    let n = group.len() as f64;
    Ok(MaskExport {
        utt_id: format!("avg_{attack}"),
        attack_id: attack.to_string(),
        rows: first.rows,
        cols: first.cols,
        values: sum.into_iter().map(|s| (s / n) as f32).collect(),
    })
}

/// Writes `<name>.png` and `<name>.csv` per exported mask into `dir` and
/// returns the paths written.
pub fn export_masks(masks: &[MaskExport], mode: MaskMode, dir: &Path) -> Result<Vec<PathBuf>> {
    for m in masks {
        m.validate()?;
    }
    let outputs = match mode {
        MaskMode::Single => masks.to_vec(),
        MaskMode::ClassAverage => {
            let mut groups: BTreeMap<&str, Vec<&MaskExport>> = BTreeMap::new();
            for m in masks {
                groups.entry(&m.attack_id).or_default().push(m);
            }
            groups
                .into_iter()
                .map(|(attack, group)| average(&group, attack))
                .collect::<Result<_>>()?
        }
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    let mut paths = Vec::with_capacity(2 * outputs.len());
    for m in &outputs {
        let png_path = dir.join(format!("{}.png", m.utt_id));
        write_atomic(&png_path, &encode_png(m)?)?;
        let csv_path = dir.join(format!("{}.csv", m.utt_id));
        write_atomic(&csv_path, encode_csv(m).as_bytes())?;
        paths.push(png_path);
        paths.push(csv_path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(id: &str, attack: &str, v: Vec<f32>) -> MaskExport {
        MaskExport {
            utt_id: id.into(),
            attack_id: attack.into(),
            rows: 2,
            cols: 3,
            values: v,
        }
    }

    fn read_png(path: &Path) -> Vec<u8> {
        let dec = png::Decoder::new(std::io::BufReader::new(std::fs::File::open(path).unwrap()));
        let mut r = dec.read_info().unwrap();
        let mut buf = vec![0; r.output_buffer_size().unwrap()];
        let info = r.next_frame(&mut buf).unwrap();
        buf.truncate(info.buffer_size());
        buf
    }

    #[test]
    fn black_and_white() {
        let dir = tempfile::tempdir().unwrap();
        let ms = [
            mask("zero", "-", vec![0.0; 6]),
            mask("one", "-", vec![1.0; 6]),
        ];
        export_masks(&ms, MaskMode::Single, dir.path()).unwrap();
        assert_eq!(read_png(&dir.path().join("zero.png")), vec![0; 6]);
        assert_eq!(read_png(&dir.path().join("one.png")), vec![255; 6]);
    }

    #[test]
    fn class_average_is_cellwise_mean() {
        let dir = tempfile::tempdir().unwrap();
        let a = vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
        let b = vec![1.0, 0.2, 0.1, 0.0, 0.3, 0.5];
        let ms = [
            mask("a", "A01", a.clone()),
            mask("b", "A01", b.clone()),
            mask("c", "-", vec![0.5; 6]),
        ];
        let paths = export_masks(&ms, MaskMode::ClassAverage, dir.path()).unwrap();
        assert_eq!(paths.len(), 4);
        let px = read_png(&dir.path().join("avg_A01.png"));
        // image rows are flipped relative to feature rows
        let flipped: Vec<f32> = a.chunks(3).rev().flatten().copied().collect();
        let flipped_b: Vec<f32> = b.chunks(3).rev().flatten().copied().collect();
        for i in 0..6 {
            let want = (flipped[i] + flipped_b[i]) / 2.0;
            assert!((px[i] as f32 / 255.0 - want).abs() <= 0.5 / 255.0 + 1e-6);
        }
        let csv = std::fs::read_to_string(dir.path().join("avg_A01.csv")).unwrap();
        assert_eq!(csv.lines().next().unwrap(), "0.5,0.2,0.25");
    }

    #[test]
    fn out_of_range_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(export_masks(
            &[mask("x", "-", vec![1.5; 6])],
            MaskMode::Single,
            dir.path()
        )
        .is_err());
        assert!(export_masks(
            &[mask("x", "-", vec![0.5; 5])],
            MaskMode::Single,
            dir.path()
        )
        .is_err());
    }
}
