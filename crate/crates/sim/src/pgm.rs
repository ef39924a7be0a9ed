//! 16-bit PGM depth-image IO. Depth is stored in micrometers, big-endian,
//! per the binary `P5` format; a sidecar text file carries the
//! ground-truth line endpoints for benchmark datasets.

use std::io::{self, Read, Write};
use std::path::Path;

use tacservo_core::extraction::GroundTruthLine;
use tacservo_core::image::DepthImage;

pub fn write_pgm(img: &DepthImage, path: &Path) -> io::Result<()> {
    let mut file = std::fs::File::create(path)?;
    write!(file, "P5\n{} {}\n65535\n", img.width(), img.height())?;
    let mut buf = Vec::with_capacity(img.width() * img.height() * 2);
    for d in img.data() {
        let um = (d * 1e6).round().clamp(0.0, 65535.0) as u16;
        buf.extend_from_slice(&um.to_be_bytes());
    }
    file.write_all(&buf)
}

pub fn read_pgm(path: &Path, pixel_pitch_m: f64) -> io::Result<DepthImage> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let header_err = || io::Error::new(io::ErrorKind::InvalidData, "bad PGM header");
    // Parse "P5 <w> <h> <maxval>" allowing arbitrary whitespace.
    let mut pos = 0usize;
    let mut fields: Vec<String> = Vec::new();
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(header_err());
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1; // single whitespace after maxval
    if fields[0] != "P5" {
        return Err(header_err());
    }
    let w: usize = fields[1].parse().map_err(|_| header_err())?;
    let h: usize = fields[2].parse().map_err(|_| header_err())?;
    let maxval: u32 = fields[3].parse().map_err(|_| header_err())?;
    if maxval != 65535 {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            "expected 16-bit PGM",
        ));
    }
    if bytes.len() < pos + 2 * w * h {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "truncated PGM"));
    }
    let mut data = Vec::with_capacity(w * h);
    for i in 0..w * h {
        let um = u16::from_be_bytes([bytes[pos + 2 * i], bytes[pos + 2 * i + 1]]);
        data.push(um as f64 * 1e-6);
    }
    Ok(DepthImage::from_data(w, h, pixel_pitch_m, data))
}

/// Sidecar ground truth: one line, four numbers (two endpoint pixels).
pub fn write_ground_truth(line: &GroundTruthLine, path: &Path) -> io::Result<()> {
    std::fs::write(
        path,
        format!(
            "{} {} {} {}\n",
            line.a_px.0, line.a_px.1, line.b_px.0, line.b_px.1
        ),
    )
}

pub fn read_ground_truth(path: &Path) -> io::Result<GroundTruthLine> {
    let text = std::fs::read_to_string(path)?;
    let vals: Vec<f64> = text
        .split_whitespace()
        .map(|t| t.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| io::Error::new(io::ErrorKind::InvalidData, "bad ground-truth sidecar"))?;
    if vals.len() != 4 {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            "expected four numbers",
        ));
    }
    Ok(GroundTruthLine {
        a_px: (vals[0], vals[1]),
        b_px: (vals[2], vals[3]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip_quantizes_to_micrometers() {
        let mut img = DepthImage::new(17, 9, 6e-5, 0.02);
        img.set(3, 4, 0.0213577);
        img.set(16, 8, 0.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("depth.pgm");
        write_pgm(&img, &path).unwrap();
        let back = read_pgm(&path, 6e-5).unwrap();
        assert_eq!(back.width(), 17);
        assert_eq!(back.height(), 9);
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 5.1e-7, "{a} vs {b}");
        }
    }

    #[test]
    fn ground_truth_sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gt.txt");
        let line = GroundTruthLine {
            a_px: (10.0, 120.5),
            b_px: (310.0, 119.25),
        };
        write_ground_truth(&line, &path).unwrap();
        let back = read_ground_truth(&path).unwrap();
        assert_eq!(back, line);
    }
}
