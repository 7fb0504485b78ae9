//! Point-cloud and trajectory files.
//!
//! `efsb` layout (all integers and floats little-endian):
//!
//! ```text
//! "EFSB"                 4 bytes magic
//! version: u16           currently 1
//! n: u32, d: u32, snapshot_count: u32
//! gamma: f64, s: f64, epsilon: f64
//! snapshot_count blocks of n*d f64, row-major
//! has_labels: u8         0 or 1
//! n u32 labels           present iff has_labels == 1
//! ```
//!
//! A plain point cloud is a file with one snapshot and zero run parameters.
//! Readers accept a file that ends right after the last snapshot block.
//!
//! `csv`: header `x0,x1,...` with an optional trailing `label` column,
//! values written with 17 significant digits, LF line endings.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use crate::datasets::LabeledPoints;
use crate::error::{EfsError, Result};
use crate::forward::Trajectory;
use crate::particles::ParticleSet;
use crate::potential::PotentialParams;

pub const EFSB_MAGIC: &[u8; 4] = b"EFSB";
pub const EFSB_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 3 * 4 + 3 * 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Efsb,
}

impl Format {
    /// Picks the format from a `.csv` / `.efsb` extension.
    pub fn from_path(path: &Path) -> Result<Format> {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Ok(Format::Csv),
            Some(e) if e.eq_ignore_ascii_case("efsb") => Ok(Format::Efsb),
            _ => Err(EfsError::invalid(format!(
                "cannot infer format of {}; use a .csv or .efsb extension",
                path.display()
            ))),
        }
    }
}

impl FromStr for Format {
    type Err = EfsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "efsb" => Ok(Format::Efsb),
            other => Err(EfsError::invalid(format!("unknown format {other:?}"))),
        }
    }
}

/// Contents of an `efsb` file.
#[derive(Clone, Debug, PartialEq)]
pub struct EfsbFile {
    pub snapshots: Vec<ParticleSet>,
    pub gamma: f64,
    pub s: f64,
    pub epsilon: f64,
    pub labels: Option<Vec<u32>>,
}

impl EfsbFile {
    pub fn from_points(lp: &LabeledPoints) -> Self {
        EfsbFile {
            snapshots: vec![lp.points.clone()],
            gamma: 0.0,
            s: 0.0,
            epsilon: 0.0,
            labels: lp.labels.clone(),
        }
    }

    pub fn from_trajectory(traj: &Trajectory, labels: Option<Vec<u32>>) -> Self {
        EfsbFile {
            snapshots: traj.snapshots().to_vec(),
            gamma: traj.gamma(),
            s: traj.params().s(),
            epsilon: traj.params().epsilon(),
            labels,
        }
    }

    pub fn to_trajectory(&self) -> Result<Trajectory> {
        Trajectory::new(
            self.snapshots.clone(),
            self.gamma,
            PotentialParams::new(self.s, self.epsilon)?,
        )
    }

    pub fn snapshot_points(&self, j: usize) -> Result<LabeledPoints> {
        let snap = self.snapshots.get(j).ok_or(EfsError::IndexOutOfRange {
            index: j,
            len: self.snapshots.len(),
        })?;
        LabeledPoints::new(snap.clone(), self.labels.clone())
    }

    pub fn encode(&self) -> Vec<u8> {
        let first = &self.snapshots[0];
        let (n, d) = (first.len(), first.dim());
        let mut out = Vec::with_capacity(HEADER_LEN + self.snapshots.len() * n * d * 8 + 1 + 4 * n);
        out.extend_from_slice(EFSB_MAGIC);
        out.extend_from_slice(&EFSB_VERSION.to_le_bytes());
        out.extend_from_slice(&(n as u32).to_le_bytes());
        out.extend_from_slice(&(d as u32).to_le_bytes());
        out.extend_from_slice(&(self.snapshots.len() as u32).to_le_bytes());
        for v in [self.gamma, self.s, self.epsilon] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for snap in &self.snapshots {
            for v in snap.as_flat() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        match &self.labels {
            Some(labels) => {
                out.push(1);
                for l in labels {
                    out.extend_from_slice(&l.to_le_bytes());
                }
            }
            None => out.push(0),
        }
        out
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |message: String| EfsError::Parse {
            path: path.to_path_buf(),
            line: 0,
            message,
        };
        if bytes.len() < HEADER_LEN {
            return Err(bad(format!("file is {} bytes, shorter than the header", bytes.len())));
        }
        if &bytes[..4] != EFSB_MAGIC {
            return Err(bad("missing EFSB magic".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != EFSB_VERSION {
            return Err(bad(format!("unsupported efsb version {version}")));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let (n, d, count) = (u32_at(6), u32_at(10), u32_at(14));
        let (gamma, s, epsilon) = (f64_at(18), f64_at(26), f64_at(34));
        if d == 0 || count == 0 {
            return Err(bad(format!("invalid shape n={n} d={d} snapshots={count}")));
        }
        let block = n
            .checked_mul(d)
            .and_then(|v| v.checked_mul(8))
            .ok_or_else(|| bad("shape overflows".into()))?;
        let body_end = block
            .checked_mul(count)
            .and_then(|v| v.checked_add(HEADER_LEN))
            .ok_or_else(|| bad("shape overflows".into()))?;
        if bytes.len() < body_end {
            return Err(bad(format!(
                "truncated: expected at least {body_end} bytes, found {}",
                bytes.len()
            )));
        }
        let mut snapshots = Vec::with_capacity(count);
        for j in 0..count {
            let start = HEADER_LEN + j * block;
            let data: Vec<f64> = bytes[start..start + block]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let snap = ParticleSet::from_flat(data, n, d)
                .map_err(|e| bad(format!("snapshot {j}: {e}")))?;
            snapshots.push(snap);
        }
        let rest = &bytes[body_end..];
        let labels = match rest.first() {
            None | Some(0) => {
                if rest.len() > 1 {
                    return Err(bad(format!("{} unexpected trailing bytes", rest.len() - 1)));
                }
                None
            }
            Some(1) => {
                if rest.len() != 1 + 4 * n {
                    return Err(bad(format!(
                        "label block holds {} bytes, expected {}",
                        rest.len() - 1,
                        4 * n
                    )));
                }
                Some(
                    rest[1..]
                        .chunks_exact(4)
                        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                )
            }
            Some(flag) => return Err(bad(format!("invalid label flag {flag}"))),
        };
        Ok(EfsbFile {
            snapshots,
            gamma,
            s,
            epsilon,
            labels,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(|e| io_err(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
        Self::decode(&bytes, path)
    }
}

fn io_err(path: &Path, source: std::io::Error) -> EfsError {
    EfsError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Formats `v` like C's `%.17g`: shortest fixed or exponent form with 17
/// significant digits, trailing zeros removed. Parses back to the same bits.
pub fn format_g17(v: f64) -> String {
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.16e}", v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..17).contains(&exp) {
        let decimals = (16 - exp) as usize;
        trim_zeros(format!("{:.*}", decimals, v))
    } else {
        format!("{}e{}{:02}", trim_zeros(mantissa.to_string()), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn write_csv<W: Write>(lp: &LabeledPoints, mut out: W) -> std::io::Result<()> {
    let d = lp.points.dim();
    let mut header: Vec<String> = (0..d).map(|k| format!("x{k}")).collect();
    if lp.labels.is_some() {
        header.push("label".into());
    }
    writeln!(out, "{}", header.join(","))?;
    for (i, row) in lp.points.rows().enumerate() {
        let mut fields: Vec<String> = row.iter().map(|&v| format_g17(v)).collect();
        if let Some(labels) = &lp.labels {
            fields.push(labels[i].to_string());
        }
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

pub fn parse_csv(text: &str, path: &Path) -> Result<LabeledPoints> {
    let bad = |line: usize, message: String| EfsError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| bad(1, "empty file".into()))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let has_label = columns.last() == Some(&"label");
    let d = columns.len() - usize::from(has_label);
    if d == 0 {
        return Err(bad(1, "no coordinate columns".into()));
    }
    for (k, c) in columns[..d].iter().enumerate() {
        if *c != format!("x{k}") {
            return Err(bad(1, format!("expected column x{k}, found {c:?}")));
        }
    }
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != columns.len() {
            return Err(bad(
                lineno,
                format!("{} fields, expected {}", fields.len(), columns.len()),
            ));
        }
        for f in &fields[..d] {
            let v: f64 = f
                .parse()
                .map_err(|_| bad(lineno, format!("cannot parse {f:?} as a number")))?;
            if !v.is_finite() {
                return Err(bad(lineno, format!("non-finite value {f:?}")));
            }
            data.push(v);
        }
        if has_label {
            let l: u32 = fields[d]
                .parse()
                .map_err(|_| bad(lineno, format!("cannot parse label {:?}", fields[d])))?;
            labels.push(l);
        }
    }
    let n = data.len() / d;
    if n == 0 {
        return Err(bad(1, "no data rows".into()));
    }
    let points = ParticleSet::from_flat(data, n, d)?;
    LabeledPoints::new(points, has_label.then_some(labels))
}

pub fn save_points(lp: &LabeledPoints, path: &Path, format: Format) -> Result<()> {
    match format {
        Format::Efsb => EfsbFile::from_points(lp).write(path),
        Format::Csv => {
            let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
            let mut w = BufWriter::new(file);
            write_csv(lp, &mut w)
                .and_then(|_| w.flush())
                .map_err(|e| io_err(path, e))
        }
    }
}

/// Loads a point cloud. An `efsb` trajectory yields its first snapshot.
pub fn load_points(path: &Path, format: Format) -> Result<LabeledPoints> {
    match format {
        Format::Efsb => EfsbFile::read(path)?.snapshot_points(0),
        Format::Csv => {
            let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            parse_csv(&text, path)
        }
    }
}

pub fn save_trajectory(traj: &Trajectory, labels: Option<Vec<u32>>, path: &Path) -> Result<()> {
    if let Some(l) = &labels {
        if l.len() != traj.n() {
            return Err(EfsError::invalid("label count differs from n"));
        }
    }
    EfsbFile::from_trajectory(traj, labels).write(path)
}

pub fn load_trajectory(path: &Path) -> Result<(Trajectory, Option<Vec<u32>>)> {
    let file = EfsbFile::read(path)?;
    let traj = file.to_trajectory()?;
    Ok((traj, file.labels))
}
