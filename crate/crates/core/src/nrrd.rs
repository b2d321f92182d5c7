//! Minimal NRRD reader/writer: 3-D, `float` or `uint8`, raw little-endian
//! attached data, diagonal `space directions`. Anything else is rejected
//! with an error naming the offending field.

use std::path::Path;

use crate::error::{Error, Result};
use crate::volume::{Geometry, Mask, Volume};

#[derive(Debug, Clone, PartialEq)]
pub enum NrrdImage {
    Float(Volume),
    U8(Mask),
}

impl NrrdImage {
    pub fn geometry(&self) -> &Geometry {
        match self {
            NrrdImage::Float(v) => v.geometry(),
            NrrdImage::U8(m) => m.geometry(),
        }
    }
}

fn fmt_triplet(v: [f64; 3]) -> String {
    format!("({},{},{})", v[0], v[1], v[2])
}

fn header(kind: &str, g: &Geometry) -> String {
    let s = g.spacing;
    format!(
        "NRRD0004\n\
         type: {kind}\n\
         dimension: 3\n\
         space: right-anterior-superior\n\
         sizes: {} {} {}\n\
         space directions: {} {} {}\n\
         kinds: domain domain domain\n\
         endian: little\n\
         encoding: raw\n\
         space origin: {}\n\n",
        g.dims[0],
        g.dims[1],
        g.dims[2],
        fmt_triplet([s[0], 0.0, 0.0]),
        fmt_triplet([0.0, s[1], 0.0]),
        fmt_triplet([0.0, 0.0, s[2]]),
        fmt_triplet(g.origin),
    )
}

pub fn encode_volume(v: &Volume) -> Vec<u8> {
    let mut out = header("float", v.geometry()).into_bytes();
    out.reserve(v.data().len() * 4);
    for x in v.data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn encode_mask(m: &Mask) -> Vec<u8> {
    let mut out = header("uint8", m.geometry()).into_bytes();
    out.extend_from_slice(m.data());
    out
}

pub fn write_volume(path: &Path, v: &Volume) -> Result<()> {
    std::fs::write(path, encode_volume(v)).map_err(|e| Error::io(path, e))
}

pub fn write_mask(path: &Path, m: &Mask) -> Result<()> {
    std::fs::write(path, encode_mask(m)).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<NrrdImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| e.context(path.display().to_string()))
}

pub fn read_volume(path: &Path) -> Result<Volume> {
    match read(path)? {
        NrrdImage::Float(v) => Ok(v),
        NrrdImage::U8(m) => Ok(Volume::new(
            *m.geometry(),
            m.data().iter().map(|&b| b as f32).collect(),
        )?),
    }
}

pub fn read_mask(path: &Path) -> Result<Mask> {
    match read(path)? {
        NrrdImage::U8(m) => Ok(m),
        NrrdImage::Float(_) => Err(Error::Unsupported {
            field: "type".into(),
            detail: format!("{}: masks must be uint8", path.display()),
        }),
    }
}

#[derive(Clone, Copy)]
enum Kind {
    Float,
    U8,
}

fn unsupported(field: &str, detail: impl Into<String>) -> Error {
    Error::Unsupported {
        field: field.to_string(),
        detail: detail.into(),
    }
}

fn parse_vector(field: &str, s: &str) -> Result<[f64; 3]> {
    let inner = s
        .trim()
        .strip_prefix('(')
        .and_then(|r| r.strip_suffix(')'))
        .ok_or_else(|| Error::malformed("NRRD header", format!("{field}: expected (a,b,c), got `{s}`")))?;
    let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(Error::malformed(
            "NRRD header",
            format!("{field}: expected 3 components in `{s}`"),
        ));
    }
    let mut v = [0.0; 3];
    for (slot, p) in v.iter_mut().zip(&parts) {
        *slot = p
            .parse()
            .map_err(|_| Error::malformed("NRRD header", format!("{field}: bad number `{p}`")))?;
    }
    Ok(v)
}

fn split_vectors(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in s.char_indices() {
        match ch {
            '(' => start = Some(i),
            ')' => {
                if let Some(st) = start.take() {
                    out.push(&s[st..=i]);
                }
            }
            _ => {}
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<NrrdImage> {
    // Header ends at the first blank line.
    let split = bytes
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| Error::malformed("NRRD header", "missing blank line before data"))?;
    let header = std::str::from_utf8(&bytes[..split])
        .map_err(|_| Error::malformed("NRRD header", "header is not UTF-8"))?;
    let payload = &bytes[split + 2..];

    let mut lines = header.lines();
    let magic = lines.next().unwrap_or_default();
    if !magic.starts_with("NRRD000") {
        return Err(Error::malformed("NRRD header", format!("bad magic `{magic}`")));
    }

    let mut kind = None;
    let mut dimension = None;
    let mut sizes = None;
    let mut spacing = None;
    let mut origin = [0.0; 3];
    let mut encoding_ok = false;
    let mut little = true;

    for line in lines {
        let line = line.trim_end();
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        if line.contains(":=") {
            // Key/value annotations carry no geometry.
            continue;
        }
        let (field, value) = line
            .split_once(':')
            .ok_or_else(|| Error::malformed("NRRD header", format!("bad line `{line}`")))?;
        let value = value.trim();
        match field.trim() {
            "type" => {
                kind = Some(match value {
                    "float" => Kind::Float,
                    "uint8" | "uchar" | "unsigned char" | "uint8_t" => Kind::U8,
                    other => return Err(unsupported("type", other)),
                })
            }
            "dimension" => {
                if value != "3" {
                    return Err(unsupported("dimension", value));
                }
                dimension = Some(3);
            }
            "sizes" => {
                let s: Vec<usize> = value
                    .split_whitespace()
                    .map(|t| t.parse())
                    .collect::<Result<_, _>>()
                    .map_err(|_| Error::malformed("NRRD header", format!("sizes: `{value}`")))?;
                if s.len() != 3 {
                    return Err(unsupported("sizes", format!("{} axes", s.len())));
                }
                sizes = Some([s[0], s[1], s[2]]);
            }
            "space directions" => {
                let vecs = split_vectors(value);
                if vecs.len() != 3 {
                    return Err(unsupported("space directions", value));
                }
                let mut sp = [0.0; 3];
                for (axis, v) in vecs.iter().enumerate() {
                    let d = parse_vector("space directions", v)?;
                    for (c, &x) in d.iter().enumerate() {
                        if c != axis && x != 0.0 {
                            return Err(unsupported(
                                "space directions",
                                "non-diagonal direction matrix",
                            ));
                        }
                    }
                    if !(d[axis] > 0.0) {
                        return Err(unsupported(
                            "space directions",
                            "non-positive diagonal (axis flips)",
                        ));
                    }
                    sp[axis] = d[axis];
                }
                spacing = Some(sp);
            }
            "space origin" => origin = parse_vector("space origin", value)?,
            "encoding" => {
                if value != "raw" {
                    return Err(unsupported("encoding", value));
                }
                encoding_ok = true;
            }
            "endian" => match value {
                "little" => little = true,
                "big" => little = false,
                other => return Err(unsupported("endian", other)),
            },
            "space" => match value {
                "right-anterior-superior" | "RAS" | "3D-right-handed" => {}
                other => return Err(unsupported("space", other)),
            },
            "space dimension" => {
                if value != "3" {
                    return Err(unsupported("space dimension", value));
                }
            }
            "kinds" => {
                if value.split_whitespace().any(|k| k != "domain" && k != "space") {
                    return Err(unsupported("kinds", value));
                }
            }
            "content" | "space units" => {}
            other => return Err(unsupported(other, value)),
        }
    }

    let kind = kind.ok_or_else(|| Error::malformed("NRRD header", "missing `type`"))?;
    dimension.ok_or_else(|| Error::malformed("NRRD header", "missing `dimension`"))?;
    let dims = sizes.ok_or_else(|| Error::malformed("NRRD header", "missing `sizes`"))?;
    let spacing =
        spacing.ok_or_else(|| Error::malformed("NRRD header", "missing `space directions`"))?;
    if !encoding_ok {
        return Err(Error::malformed("NRRD header", "missing `encoding`"));
    }
    if !little && matches!(kind, Kind::Float) {
        return Err(unsupported("endian", "big"));
    }
    let geom = Geometry::new(dims, spacing, origin)?;
    let n = geom.len();

    match kind {
        Kind::Float => {
            if payload.len() != n * 4 {
                return Err(Error::malformed(
                    "NRRD data",
                    format!("expected {} bytes, found {}", n * 4, payload.len()),
                ));
            }
            let data = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            Ok(NrrdImage::Float(Volume::new(geom, data)?))
        }
        Kind::U8 => {
            if payload.len() != n {
                return Err(Error::malformed(
                    "NRRD data",
                    format!("expected {n} bytes, found {}", payload.len()),
                ));
            }
            Ok(NrrdImage::U8(Mask::new(geom, payload.to_vec())?))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_volume() -> Volume {
        let g = Geometry::new([3, 4, 5], [0.5, 1.25, 3.0], [-10.125, 0.1, 7.0]).unwrap();
        Volume::from_fn(g, |p| (p[0] * 0.1 + p[1] * p[2]).sin() as f32).unwrap()
    }

    #[test]
    fn float_round_trip() {
        let v = sample_volume();
        match decode(&encode_volume(&v)).unwrap() {
            NrrdImage::Float(back) => {
                assert_eq!(back.geometry(), v.geometry());
                let a: Vec<u32> = back.data().iter().map(|x| x.to_bits()).collect();
                let b: Vec<u32> = v.data().iter().map(|x| x.to_bits()).collect();
                assert_eq!(a, b);
            }
            _ => panic!("wrong type"),
        }
    }

    #[test]
    fn mask_round_trip() {
        let g = Geometry::new([2, 2, 2], [1.0; 3], [0.0; 3]).unwrap();
        let m = Mask::new(g, vec![0, 1, 1, 0, 0, 0, 1, 1]).unwrap();
        assert_eq!(decode(&encode_mask(&m)).unwrap(), NrrdImage::U8(m));
    }

    fn with_line(old: &str, new: &str) -> Vec<u8> {
        let bytes = encode_volume(&sample_volume());
        let split = bytes.windows(2).position(|w| w == b"\n\n").unwrap();
        let head = std::str::from_utf8(&bytes[..split]).unwrap().replace(old, new);
        let mut out = head.into_bytes();
        out.extend_from_slice(&bytes[split..]);
        out
    }

    fn unsupported_field(bytes: &[u8]) -> String {
        match decode(bytes) {
            Err(Error::Unsupported { field, .. }) => field,
            other => panic!("expected unsupported error, got {other:?}"),
        }
    }

    #[test]
    fn unsupported_features_name_the_field() {
        assert_eq!(
            unsupported_field(&with_line("encoding: raw", "encoding: gzip")),
            "encoding"
        );
        assert_eq!(
            unsupported_field(&with_line("type: float", "type: double")),
            "type"
        );
        assert_eq!(
            unsupported_field(&with_line("(0,1.25,0)", "(0.5,1.25,0)")),
            "space directions"
        );
        assert_eq!(
            unsupported_field(&with_line("encoding: raw", "encoding: raw\ndata file: x.raw")),
            "data file"
        );
    }

    #[test]
    fn truncated_payload_is_malformed() {
        let mut bytes = encode_volume(&sample_volume());
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(decode(&bytes), Err(Error::Malformed { .. })));
    }
}
