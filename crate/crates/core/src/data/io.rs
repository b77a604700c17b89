//! Frame folders of 8-bit binary PGM (grayscale) or PPM (RGB) images.

use std::fs;
use std::io::{self, ErrorKind};
use std::path::{Path, PathBuf};

use crate::data::sequence::FrameSequence;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn invalid(path: &Path, msg: impl Into<String>) -> Error {
    Error::io(path, io::Error::new(ErrorKind::InvalidData, msg.into()))
}

/// Quantizes to 8 bits with round-half-up.
pub fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Encodes a `C×H×W` image (C = 1 or 3) as binary PGM/PPM.
pub fn encode_pnm(image: &Tensor) -> Result<Vec<u8>> {
    let (c, h, w) = image.chw()?;
    let magic = match c {
        1 => "P5",
        3 => "P6",
        _ => return Err(Error::Format(format!("cannot encode {c}-channel image"))),
    };
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    let d = image.data();
    for i in 0..h * w {
        for ch in 0..c {
            out.push(to_byte(d[ch * h * w + i]));
        }
    }
    Ok(out)
}

pub fn write_pnm(path: &Path, image: &Tensor) -> Result<()> {
    let bytes = encode_pnm(image)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Decodes binary PGM/PPM into `C×H×W` values in `[0, 1]`.
pub fn read_pnm(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut pos = 0;
    let mut fields = Vec::new();
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(invalid(path, "truncated header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    let c = match fields[0].as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(invalid(path, format!("unsupported magic {other}"))),
    };
    let parse = |s: &str| s.parse::<usize>().map_err(|_| invalid(path, format!("bad header field {s:?}")));
    let (w, h, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if maxval != 255 {
        return Err(invalid(path, format!("only 8-bit images supported, maxval {maxval}")));
    }
    if w == 0 || h == 0 {
        return Err(invalid(path, "empty image"));
    }
    let body = bytes.get(pos..pos + c * h * w).ok_or_else(|| invalid(path, "truncated pixel data"))?;
    let mut img = Tensor::zeros(&[c, h, w]);
    for i in 0..h * w {
        for ch in 0..c {
            img.data_mut()[ch * h * w + i] = body[i * c + ch] as f64 / 255.0;
        }
    }
    Ok(img)
}

pub fn frame_file_name(index: usize, channels: usize) -> String {
    let ext = if channels == 3 { "ppm" } else { "pgm" };
    format!("frame_{:06}.{ext}", index + 1)
}

fn frame_number(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    let ext = path.extension()?.to_str()?;
    if ext != "pgm" && ext != "ppm" {
        return None;
    }
    stem.strip_prefix("frame_")?.parse().ok()
}

/// Writes `frame_000001.pgm`, … (or `.ppm` for color) into `dir`, creating it.
pub fn save_frame_dir(frames: &FrameSequence, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (c, _, _) = frames.frame_shape();
    for (t, frame) in frames.frames().iter().enumerate() {
        write_pnm(&dir.join(frame_file_name(t, c)), frame)?;
    }
    Ok(())
}

/// Loads every `frame_NNNNNN.pgm|ppm` in `dir`, ordered by number.
pub fn load_frame_dir(dir: &Path) -> Result<FrameSequence> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<(u64, PathBuf)> = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if let Some(n) = frame_number(&path) {
            files.push((n, path));
        }
    }
    if files.is_empty() {
        return Err(Error::io(dir, io::Error::new(ErrorKind::NotFound, "no frame files")));
    }
    files.sort();
    let mut frames = Vec::with_capacity(files.len());
    for (_, path) in &files {
        let img = read_pnm(path)?;
        if let Some(first) = frames.first() {
            let first: &Tensor = first;
            if first.shape() != img.shape() {
                return Err(Error::Format(format!(
                    "{} is {:?} but earlier frames are {:?}",
                    path.display(),
                    img.shape(),
                    first.shape()
                )));
            }
        }
        frames.push(img);
    }
    FrameSequence::from_frames(&frames)
}

/// Reads a manifest listing one clip directory per line (relative paths resolve
/// against the manifest's directory; blank lines and `#` comments are skipped).
pub fn read_manifest(path: &Path) -> Result<Vec<PathBuf>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| base.join(l))
        .collect())
}

pub fn write_manifest(path: &Path, dirs: &[String]) -> Result<()> {
    let mut text = dirs.join("\n");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
