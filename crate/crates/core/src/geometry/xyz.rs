//! Extended-XYZ dialect used for every structure file.
//!
//! ```text
//! 2
//! Lattice="ax ay az bx by bz cx cy cz" pbc="T T F" Properties=species:S:1:pos:R:3:fixed:I:1:adsorbate:I:1 id=name
//! Pt 0.0 0.0 10.0 1 0
//! O 0.0 0.0 11.5 0 1
//! ```
//! Lengths are Å. Numbers are written with 12 significant digits.

use std::fs;
use std::path::Path;

use super::{Lattice, Structure, Vec3};
use crate::elements;
use crate::error::{Error, Result};

pub const PROPERTIES: &str = "species:S:1:pos:R:3:fixed:I:1:adsorbate:I:1";

/// Format `x` with `digits` significant digits in plain decimal notation
/// (scientific for very small or very large magnitudes).
pub fn fmt_sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-5..15).contains(&exp) {
        return format!("{:.*e}", digits - 1, x);
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    let s = format!("{:.*}", decimals, x);
    // trim trailing zeros in the fractional part
    if s.contains('.') {
        let t = s.trim_end_matches('0').trim_end_matches('.');
        if t == "-0" {
            "0".to_string()
        } else {
            t.to_string()
        }
    } else {
        s
    }
}

fn parse_header(line: &str, lineno: usize) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut chars = line.trim().chars().peekable();
    loop {
        while chars.peek().is_some_and(|c| c.is_whitespace()) {
            chars.next();
        }
        if chars.peek().is_none() {
            break;
        }
        let mut key = String::new();
        while let Some(&c) = chars.peek() {
            if c == '=' || c.is_whitespace() {
                break;
            }
            key.push(c);
            chars.next();
        }
        if chars.next() != Some('=') {
            return Err(Error::parse(
                lineno,
                format!("malformed header: key '{key}' has no value"),
            ));
        }
        let mut value = String::new();
        if chars.peek() == Some(&'"') {
            chars.next();
            let mut closed = false;
            for c in chars.by_ref() {
                if c == '"' {
                    closed = true;
                    break;
                }
                value.push(c);
            }
            if !closed {
                return Err(Error::parse(lineno, "malformed header: unterminated quote"));
            }
        } else {
            while let Some(&c) = chars.peek() {
                if c.is_whitespace() {
                    break;
                }
                value.push(c);
                chars.next();
            }
        }
        out.push((key, value));
    }
    Ok(out)
}

fn parse_flag(tok: &str, lineno: usize) -> Result<bool> {
    match tok {
        "T" | "t" | "True" | "true" => Ok(true),
        "F" | "f" | "False" | "false" => Ok(false),
        _ => Err(Error::parse(lineno, format!("malformed header: bad pbc flag '{tok}'"))),
    }
}

pub fn parse_structure(text: &str) -> Result<Structure> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, first) = lines.next().ok_or_else(|| Error::parse(1, "empty file"))?;
    let n: usize = first
        .trim()
        .parse()
        .map_err(|_| Error::parse(1, format!("malformed header: atom count '{}'", first.trim())))?;
    let (hl, header) = lines
        .next()
        .ok_or_else(|| Error::parse(2, "malformed header: missing comment line"))?;
    let kv = parse_header(header, hl)?;
    let get = |k: &str| {
        kv.iter()
            .find(|(key, _)| key.eq_ignore_ascii_case(k))
            .map(|(_, v)| v.as_str())
    };

    let lat_str = get("Lattice").ok_or_else(|| Error::parse(hl, "malformed header: missing Lattice"))?;
    let vals: Vec<f64> = lat_str
        .split_whitespace()
        .map(|t| t.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::parse(hl, "malformed header: non-numeric Lattice"))?;
    if vals.len() != 9 {
        return Err(Error::parse(
            hl,
            format!("malformed header: Lattice has {} values, expected 9", vals.len()),
        ));
    }
    let pbc_str = get("pbc").unwrap_or("T T F");
    let flags: Vec<bool> = pbc_str
        .split_whitespace()
        .map(|t| parse_flag(t, hl))
        .collect::<Result<_>>()?;
    if flags.len() != 3 {
        return Err(Error::parse(hl, "malformed header: pbc needs 3 flags"));
    }
    if flags[2] {
        return Err(Error::BulkPeriodicity);
    }
    if let Some(props) = get("Properties") {
        if props != PROPERTIES {
            return Err(Error::parse(
                hl,
                format!("malformed header: unsupported Properties '{props}'"),
            ));
        }
    }
    let id = get("id").unwrap_or("").to_string();
    let lattice = Lattice::new(
        [
            [vals[0], vals[1], vals[2]],
            [vals[3], vals[4], vals[5]],
            [vals[6], vals[7], vals[8]],
        ],
        [flags[0], flags[1], flags[2]],
    )?;

    let mut numbers = Vec::with_capacity(n);
    let mut positions = Vec::with_capacity(n);
    let mut fixed = Vec::with_capacity(n);
    let mut adsorbate = Vec::with_capacity(n);
    let mut last_line = hl;
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        last_line = lineno;
        if numbers.len() == n {
            return Err(Error::parse(
                lineno,
                format!("atom count mismatch: header says {n}, found extra atom line"),
            ));
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 6 {
            return Err(Error::parse(
                lineno,
                format!("expected 6 columns, found {}", toks.len()),
            ));
        }
        let z = elements::atomic_number(toks[0])
            .map_err(|_| Error::parse(lineno, format!("unknown element symbol '{}'", toks[0])))?;
        let mut xyz = [0.0; 3];
        for k in 0..3 {
            xyz[k] = toks[1 + k]
                .parse()
                .map_err(|_| Error::parse(lineno, format!("bad coordinate '{}'", toks[1 + k])))?;
        }
        let flag = |t: &str| -> Result<bool> {
            match t {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(Error::parse(lineno, format!("bad mask value '{t}'"))),
            }
        };
        numbers.push(z);
        positions.push(Vec3::from(xyz));
        fixed.push(flag(toks[4])?);
        adsorbate.push(flag(toks[5])?);
    }
    if numbers.len() != n {
        return Err(Error::parse(
            last_line,
            format!("atom count mismatch: header says {n}, body has {}", numbers.len()),
        ));
    }
    Structure::new(id, numbers, positions, fixed, adsorbate, lattice)
}

pub fn format_structure(s: &Structure) -> Result<String> {
    let mut out = String::new();
    out.push_str(&format!("{}\n", s.len()));
    let lat = s
        .lattice
        .rows()
        .iter()
        .flatten()
        .map(|v| fmt_sig(*v, 12))
        .collect::<Vec<_>>()
        .join(" ");
    let pbc = s
        .lattice
        .periodic()
        .iter()
        .map(|&p| if p { "T" } else { "F" })
        .collect::<Vec<_>>()
        .join(" ");
    out.push_str(&format!("Lattice=\"{lat}\" pbc=\"{pbc}\" Properties={PROPERTIES}"));
    if !s.id.is_empty() {
        if s.id.chars().any(|c| c.is_whitespace() || c == '"') {
            return Err(Error::InvalidArgument(format!(
                "structure id '{}' contains whitespace or quotes",
                s.id
            )));
        }
        out.push_str(&format!(" id={}", s.id));
    }
    out.push('\n');
    for i in 0..s.len() {
        let p = &s.positions[i];
        out.push_str(&format!(
            "{} {} {} {} {} {}\n",
            elements::symbol(s.atomic_numbers[i])?,
            fmt_sig(p.x, 12),
            fmt_sig(p.y, 12),
            fmt_sig(p.z, 12),
            s.fixed[i] as u8,
            s.adsorbate[i] as u8
        ));
    }
    Ok(out)
}

pub fn read_structure(path: impl AsRef<Path>) -> Result<Structure> {
    let text = fs::read_to_string(path)?;
    parse_structure(&text)
}

pub fn write_structure(path: impl AsRef<Path>, s: &Structure) -> Result<()> {
    fs::write(path, format_structure(s)?)?;
    Ok(())
}
