//! `.cube` text format parser and writer.
//!
//! Accepted input: optional `TITLE`, mandatory `LUT_3D_SIZE N`, optional
//! `DOMAIN_MIN` / `DOMAIN_MAX`, then `N^3` whitespace-separated float triples
//! with the red index fastest. `#` comments and CRLF line endings are
//! accepted. Parse errors carry a 1-based line number.

use crate::error::{Error, Result};
use crate::lut::Lut3d;

pub fn parse_cube(text: &str) -> Result<Lut3d> {
    let mut size: Option<usize> = None;
    let mut domain_min = [0.0f32; 3];
    let mut domain_max = [1.0f32; 3];
    let mut lattice: Vec<f32> = Vec::new();
    let mut expected: Option<usize> = None;
    let mut last_line = 0usize;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        last_line = lineno;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let first = tokens.next().unwrap();
        match first {
            "TITLE" => continue,
            "LUT_3D_SIZE" => {
                let n: usize = tokens
                    .next()
                    .ok_or_else(|| parse_err(lineno, "LUT_3D_SIZE missing value"))?
                    .parse()
                    .map_err(|_| parse_err(lineno, "LUT_3D_SIZE is not an integer"))?;
                if n < 2 {
                    return Err(parse_err(lineno, &format!("LUT_3D_SIZE must be >= 2, got {n}")));
                }
                size = Some(n);
                expected = Some(3 * n * n * n);
            }
            "LUT_1D_SIZE" => {
                return Err(parse_err(lineno, "1D LUTs are not supported"));
            }
            "DOMAIN_MIN" | "DOMAIN_MAX" => {
                let mut vals = [0.0f32; 3];
                for v in vals.iter_mut() {
                    *v = tokens
                        .next()
                        .ok_or_else(|| parse_err(lineno, &format!("{first} needs 3 values")))?
                        .parse()
                        .map_err(|_| parse_err(lineno, &format!("non-numeric {first} value")))?;
                }
                if first == "DOMAIN_MIN" {
                    domain_min = vals;
                } else {
                    domain_max = vals;
                }
            }
            _ => {
                let n = size.ok_or_else(|| {
                    parse_err(lineno, "data before LUT_3D_SIZE (or missing header)")
                })?;
                let _ = n;
                let mut count = 0;
                for tok in std::iter::once(first).chain(tokens) {
                    let v: f32 = tok
                        .parse()
                        .map_err(|_| parse_err(lineno, &format!("non-numeric token {tok:?}")))?;
                    lattice.push(v);
                    count += 1;
                }
                if count % 3 != 0 {
                    return Err(parse_err(lineno, "expected float triples"));
                }
                if let Some(exp) = expected {
                    if lattice.len() > exp {
                        return Err(parse_err(
                            lineno,
                            &format!("too many entries: expected {} triples", exp / 3),
                        ));
                    }
                }
            }
        }
    }

    let size = size.ok_or_else(|| parse_err(last_line.max(1), "missing LUT_3D_SIZE"))?;
    let expected = 3 * size * size * size;
    if lattice.len() != expected {
        // report at the line following the last content (EOF)
        return Err(parse_err(
            last_line + 1,
            &format!(
                "wrong entry count: expected {} triples, got {}",
                expected / 3,
                lattice.len() / 3
            ),
        ));
    }
    Lut3d::with_domain(size, lattice, domain_min, domain_max)
}

fn parse_err(line: usize, msg: &str) -> Error {
    Error::CubeParse { line, msg: msg.to_string() }
}

pub fn write_cube(lut: &Lut3d) -> String {
    let d = lut.size();
    let mut out = String::with_capacity(3 * d * d * d * 10 + 64);
    out.push_str(&format!("LUT_3D_SIZE {d}\n"));
    let dmin = lut.domain_min();
    let dmax = lut.domain_max();
    if dmin != [0.0; 3] || dmax != [1.0; 3] {
        out.push_str(&format!("DOMAIN_MIN {} {} {}\n", dmin[0], dmin[1], dmin[2]));
        out.push_str(&format!("DOMAIN_MAX {} {} {}\n", dmax[0], dmax[1], dmax[2]));
    }
    // `{}` prints the shortest decimal that parses back to the same f32,
    // so write -> parse round-trips are bit-lossless
    for entry in lut.lattice().chunks_exact(3) {
        out.push_str(&format!("{} {} {}\n", entry[0], entry[1], entry[2]));
    }
    out
}
