//! File formats: CSV `index,t,re,im` and JSON `{n, dt, t0, values: [[re, im], ...]}`
//! for signals and kernels. Floats are written with 17 significant digits.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{Kernel, Sampled, SampledSignal, TimeGrid};

/// Formats `x` with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// JSON formatter writing every float with 17 significant digits.
#[derive(Debug, Default, Clone, Copy)]
pub struct SigFigFormatter;

impl serde_json::ser::Formatter for SigFigFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            writer.write_all(fmt_f64(value).as_bytes())
        } else {
            writer.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Serializes `value` to a JSON string using [`SigFigFormatter`].
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigFigFormatter);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut s = to_json_string(value)?;
    s.push('\n');
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&s)?)
}

/// JSON record of a grid-sampled sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelRecord {
    pub n: usize,
    pub dt: f64,
    pub t0: f64,
    pub values: Vec<[f64; 2]>,
}

/// Signals use the same record layout as kernels.
pub type SignalRecord = KernelRecord;

impl KernelRecord {
    pub fn from_sampled<S: Sampled>(s: &S) -> Self {
        let g = s.grid();
        KernelRecord {
            n: g.n(),
            dt: g.dt(),
            t0: g.t0(),
            values: s.values().iter().map(|z| [z.re, z.im]).collect(),
        }
    }

    fn parts(&self) -> Result<(TimeGrid, Vec<Complex64>)> {
        let grid = TimeGrid::from_parts(self.n, self.dt, self.t0)?;
        Ok((grid, self.values.iter().map(|&[re, im]| Complex64::new(re, im)).collect()))
    }

    pub fn to_kernel(&self) -> Result<Kernel> {
        let (g, v) = self.parts()?;
        Kernel::new(g, v)
    }

    pub fn to_signal(&self) -> Result<SampledSignal> {
        let (g, v) = self.parts()?;
        SampledSignal::new(g, v)
    }
}

/// Writes `index,t,re,im` rows.
pub fn write_csv<S: Sampled, W: Write>(s: &S, mut w: W) -> io::Result<()> {
    writeln!(w, "index,t,re,im")?;
    let g = s.grid();
    for (k, z) in s.values().iter().enumerate() {
        writeln!(w, "{},{},{},{}", k, fmt_f64(g.time(k)), fmt_f64(z.re), fmt_f64(z.im))?;
    }
    Ok(())
}

pub fn to_csv_string<S: Sampled>(s: &S) -> String {
    let mut buf = Vec::new();
    write_csv(s, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("ASCII output")
}

/// Parses the CSV written by [`write_csv`]; the grid is rebuilt from the time column.
pub fn parse_csv(text: &str) -> Result<(TimeGrid, Vec<Complex64>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == "index,t,re,im" => {}
        other => return Err(Error::Parse(format!("bad CSV header: {other:?}"))),
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (row, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(Error::Parse(format!("row {row}: expected 4 columns")));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("row {row}: {e}")));
        let index: usize = cols[0].trim().parse().map_err(|e| Error::Parse(format!("row {row}: {e}")))?;
        if index != row {
            return Err(Error::Parse(format!("row {row}: index {index} out of sequence")));
        }
        times.push(num(cols[1])?);
        values.push(Complex64::new(num(cols[2])?, num(cols[3])?));
    }
    if times.len() < 2 {
        return Err(Error::Parse("CSV holds fewer than two samples".into()));
    }
    let n = times.len();
    let dt = (times[n - 1] - times[0]) / (n - 1) as f64;
    let grid = TimeGrid::from_parts(n, dt, times[0])?;
    Ok((grid, values))
}

pub fn kernel_from_csv(text: &str) -> Result<Kernel> {
    let (g, v) = parse_csv(text)?;
    Kernel::new(g, v)
}

pub fn signal_from_csv(text: &str) -> Result<SampledSignal> {
    let (g, v) = parse_csv(text)?;
    SampledSignal::new(g, v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_kernel() -> Kernel {
        let g = TimeGrid::new(16, 0.1).unwrap();
        Kernel::from_fn(g, |t| Complex64::new((3.0 * t).sin() / 7.0, t.exp().recip()))
    }

    #[test]
    fn json_round_trip_is_exact() {
        let k = sample_kernel();
        let rec = KernelRecord::from_sampled(&k);
        let s = to_json_string(&rec).unwrap();
        let back: KernelRecord = serde_json::from_str(&s).unwrap();
        assert_eq!(back.to_kernel().unwrap(), k);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let k = sample_kernel();
        let text = to_csv_string(&k);
        assert_eq!(text.lines().count(), 17);
        let back = kernel_from_csv(&text).unwrap();
        assert_eq!(back.values(), k.values());
        assert_eq!(back.grid().n(), 16);
    }

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        let s = to_json_string(&[1.0f64 / 3.0]).unwrap();
        assert_eq!(s, "[3.3333333333333331e-1]");
    }

    #[test]
    fn rejects_bad_csv() {
        assert!(parse_csv("a,b\n").is_err());
        assert!(parse_csv("index,t,re,im\n0,0,1\n").is_err());
    }
}
