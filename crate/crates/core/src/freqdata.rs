//! Frequency grids, sampled complex responses, weight curves and their CSV
//! representations.
//!
//! Only the nonnegative half-axis `[0, 1/(2 ts)]` is stored. Values at
//! negative frequencies follow from conjugate symmetry of real systems.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::io::{read_text, write_atomic};

const NYQUIST_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    ts: f64,
    freqs: Vec<f64>,
}

impl FrequencyGrid {
    pub fn new(ts: f64, freqs: Vec<f64>) -> Result<Self> {
        if !(ts.is_finite() && ts > 0.0) {
            return Err(Error::invariant(format!("sampling period must be positive, got {ts}")));
        }
        if freqs.len() < 2 {
            return Err(Error::invariant(format!(
                "a frequency grid needs at least 2 points, got {}",
                freqs.len()
            )));
        }
        for (k, &f) in freqs.iter().enumerate() {
            if !f.is_finite() || f < 0.0 {
                return Err(Error::invariant(format!("frequency #{k} = {f} is not a finite nonnegative value")));
            }
            if k > 0 && f <= freqs[k - 1] {
                return Err(Error::invariant(format!(
                    "frequencies must be strictly increasing: {} followed by {f}",
                    freqs[k - 1]
                )));
            }
        }
        let nyquist = 0.5 / ts;
        let last = *freqs.last().unwrap();
        if last > nyquist * (1.0 + NYQUIST_REL_TOL) {
            return Err(Error::invariant(format!(
                "last frequency {last} Hz exceeds the Nyquist frequency {nyquist} Hz"
            )));
        }
        Ok(Self { ts, freqs })
    }

    /// `n` equally spaced points covering `[f_lo, f_hi]` inclusive.
    pub fn uniform(ts: f64, f_lo: f64, f_hi: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invariant("a uniform grid needs at least 2 points"));
        }
        let step = (f_hi - f_lo) / (n - 1) as f64;
        let mut freqs: Vec<f64> = (0..n).map(|k| f_lo + step * k as f64).collect();
        // pin the end point so that f_hi == nyquist survives rounding
        freqs[n - 1] = f_hi;
        Self::new(ts, freqs)
    }

    pub fn ts(&self) -> f64 {
        self.ts
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn nyquist(&self) -> f64 {
        0.5 / self.ts
    }

    /// Angular frequency in rad/s of node `k`.
    pub fn omega(&self, k: usize) -> f64 {
        2.0 * PI * self.freqs[k]
    }

    /// Unit-circle point `exp(j 2 pi f_k ts)`.
    pub fn z(&self, k: usize) -> Complex64 {
        Complex64::from_polar(1.0, 2.0 * PI * self.freqs[k] * self.ts)
    }

    /// True when the grid starts at DC and ends at Nyquist.
    pub fn spans_full_band(&self) -> bool {
        self.freqs[0] == 0.0 && (self.nyquist() - self.freqs[self.len() - 1]).abs() <= NYQUIST_REL_TOL * self.nyquist()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexResponse {
    grid: Arc<FrequencyGrid>,
    values: Vec<Complex64>,
}

impl ComplexResponse {
    pub fn new(grid: Arc<FrequencyGrid>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::invariant(format!(
                "response has {} values but the grid has {} frequencies",
                values.len(),
                grid.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::invariant(format!(
                "response value at {} Hz is not finite",
                grid.freqs()[k]
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Arc<FrequencyGrid>, value: Complex64) -> Self {
        let values = vec![value; grid.len()];
        Self { grid, values }
    }

    pub fn from_fn(grid: Arc<FrequencyGrid>, mut f: impl FnMut(usize, f64) -> Complex64) -> Result<Self> {
        let values = grid.freqs().iter().enumerate().map(|(k, &hz)| f(k, hz)).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<FrequencyGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    /// Pointwise product; both operands must live on the same grid.
    pub fn mul(&self, other: &ComplexResponse) -> Result<ComplexResponse> {
        ensure_same_grid(&self.grid, &other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect();
        Ok(ComplexResponse {
            grid: self.grid.clone(),
            values,
        })
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.re == 0.0 && v.im == 0.0)
    }
}

/// Positive real weight samples on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightCurve {
    grid: Arc<FrequencyGrid>,
    magnitudes: Vec<f64>,
}

impl WeightCurve {
    pub fn new(grid: Arc<FrequencyGrid>, magnitudes: Vec<f64>) -> Result<Self> {
        if magnitudes.len() != grid.len() {
            return Err(Error::invariant(format!(
                "weight has {} values but the grid has {} frequencies",
                magnitudes.len(),
                grid.len()
            )));
        }
        if let Some(k) = magnitudes.iter().position(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(Error::invariant(format!(
                "weight magnitude at {} Hz must be finite and positive, got {}",
                grid.freqs()[k],
                magnitudes[k]
            )));
        }
        Ok(Self { grid, magnitudes })
    }

    pub fn grid(&self) -> &Arc<FrequencyGrid> {
        &self.grid
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantCase {
    pub id: String,
    pub p_cv: ComplexResponse,
    pub p_cp: ComplexResponse,
}

impl PlantCase {
    pub fn new(id: impl Into<String>, p_cv: ComplexResponse, p_cp: ComplexResponse) -> Result<Self> {
        ensure_same_grid(p_cv.grid(), p_cp.grid())?;
        Ok(Self {
            id: id.into(),
            p_cv,
            p_cp,
        })
    }

    pub fn grid(&self) -> &Arc<FrequencyGrid> {
        self.p_cv.grid()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantSet {
    cases: Vec<PlantCase>,
}

impl PlantSet {
    pub fn new(cases: Vec<PlantCase>) -> Result<Self> {
        if cases.is_empty() {
            return Err(Error::invariant("a plant set needs at least one case"));
        }
        let mut seen = HashSet::new();
        for case in &cases {
            if !seen.insert(case.id.as_str()) {
                return Err(Error::invariant(format!("duplicate case id '{}'", case.id)));
            }
            ensure_same_grid(cases[0].grid(), case.grid())?;
        }
        Ok(Self { cases })
    }

    pub fn cases(&self) -> &[PlantCase] {
        &self.cases
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn grid(&self) -> &Arc<FrequencyGrid> {
        self.cases[0].grid()
    }

    pub fn case(&self, id: &str) -> Option<&PlantCase> {
        self.cases.iter().find(|c| c.id == id)
    }
}

pub fn ensure_same_grid(a: &Arc<FrequencyGrid>, b: &Arc<FrequencyGrid>) -> Result<()> {
    if Arc::ptr_eq(a, b) || **a == **b {
        Ok(())
    } else {
        Err(Error::GridMismatch(format!(
            "grids differ ({} points, ts={} vs {} points, ts={})",
            a.len(),
            a.ts(),
            b.len(),
            b.ts()
        )))
    }
}

/// Complex-linear interpolation of `r` onto `target`. Real and imaginary
/// parts are interpolated independently; shared nodes are reproduced exactly.
pub fn resample(r: &ComplexResponse, target: &Arc<FrequencyGrid>) -> Result<ComplexResponse> {
    let values = interpolate_at(r.grid().freqs(), r.values(), target.freqs())?;
    ComplexResponse::new(target.clone(), values)
}

/// Same as [`resample`] but for arbitrary query frequencies.
pub fn interpolate_at(src_f: &[f64], src_v: &[Complex64], query: &[f64]) -> Result<Vec<Complex64>> {
    let lo = src_f[0];
    let hi = src_f[src_f.len() - 1];
    let slack = NYQUIST_REL_TOL * hi.abs().max(1.0);
    query
        .iter()
        .map(|&f| {
            if f < lo - slack || f > hi + slack {
                return Err(Error::Extrapolation { freq_hz: f, lo, hi });
            }
            // index of the first node strictly greater than f
            let upper = src_f.partition_point(|&x| x <= f);
            if upper == 0 {
                return Ok(src_v[0]);
            }
            let i = upper - 1;
            if src_f[i] == f || i + 1 == src_f.len() {
                return Ok(src_v[i]);
            }
            let t = (f - src_f[i]) / (src_f[i + 1] - src_f[i]);
            let a = src_v[i];
            let b = src_v[i + 1];
            Ok(Complex64::new(a.re + t * (b.re - a.re), a.im + t * (b.im - a.im)))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// CSV I/O
// ---------------------------------------------------------------------------

const PLANT_HEADER: &str = "case_id,freq_hz,re_pcv,im_pcv,re_pcp,im_pcp";

struct CsvRows<'a> {
    path: &'a str,
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> CsvRows<'a> {
    fn new(path: &'a str, text: &'a str) -> Self {
        Self {
            path,
            lines: text.lines().enumerate(),
        }
    }

    /// Returns the header line or a parse error for an empty file.
    fn header(&mut self) -> Result<String> {
        for (_, line) in self.lines.by_ref() {
            let line = line.trim();
            if !line.is_empty() {
                return Ok(line.to_string());
            }
        }
        Err(Error::Parse {
            path: self.path.into(),
            line: 1,
            msg: "missing header".into(),
        })
    }

    fn parse_err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.into(),
            line,
            msg: msg.into(),
        }
    }
}

impl<'a> Iterator for CsvRows<'a> {
    type Item = (usize, Vec<&'a str>);

    fn next(&mut self) -> Option<Self::Item> {
        for (idx, line) in self.lines.by_ref() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            return Some((idx + 1, line.split(',').map(str::trim).collect()));
        }
        None
    }
}

fn parse_f64(rows: &CsvRows<'_>, line: usize, field: &str, name: &str) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| rows.parse_err(line, format!("cannot parse {name} from '{field}'")))?;
    if !v.is_finite() {
        return Err(rows.parse_err(line, format!("{name} is not finite")));
    }
    Ok(v)
}

fn normalize_header(h: &str) -> String {
    h.split(',').map(str::trim).collect::<Vec<_>>().join(",")
}

/// Parses the plant CSV schema
/// `case_id,freq_hz,re_pcv,im_pcv,re_pcp,im_pcp`.
///
/// Every case must list the same frequencies in ascending order. The
/// sampling period is not part of the schema and is supplied by the caller.
pub fn parse_plant_set(text: &str, ts: f64, source: &str) -> Result<PlantSet> {
    let mut rows = CsvRows::new(source, text);
    let header = rows.header()?;
    if normalize_header(&header) != PLANT_HEADER {
        return Err(rows.parse_err(1, format!("expected header '{PLANT_HEADER}', got '{header}'")));
    }

    // (id, freqs, pcv, pcp) in order of first appearance
    let mut groups: Vec<(String, Vec<f64>, Vec<Complex64>, Vec<Complex64>)> = Vec::new();
    let mut rows_vec = Vec::new();
    for row in rows.by_ref() {
        rows_vec.push(row);
    }
    for (line, fields) in rows_vec {
        if fields.len() != 6 {
            return Err(rows.parse_err(line, format!("expected 6 fields, got {}", fields.len())));
        }
        let id = fields[0];
        if id.is_empty() {
            return Err(rows.parse_err(line, "empty case_id"));
        }
        let f = parse_f64(&rows, line, fields[1], "freq_hz")?;
        let pcv = Complex64::new(
            parse_f64(&rows, line, fields[2], "re_pcv")?,
            parse_f64(&rows, line, fields[3], "im_pcv")?,
        );
        let pcp = Complex64::new(
            parse_f64(&rows, line, fields[4], "re_pcp")?,
            parse_f64(&rows, line, fields[5], "im_pcp")?,
        );
        match groups.last_mut() {
            Some(g) if g.0 == id => {
                g.1.push(f);
                g.2.push(pcv);
                g.3.push(pcp);
            }
            _ => {
                if groups.iter().any(|g| g.0 == id) {
                    return Err(rows.parse_err(line, format!("rows of case '{id}' are not contiguous")));
                }
                groups.push((id.to_string(), vec![f], vec![pcv], vec![pcp]));
            }
        }
    }
    if groups.is_empty() {
        return Err(Error::invariant(format!("{source}: plant file contains no cases")));
    }

    let grid = Arc::new(FrequencyGrid::new(ts, groups[0].1.clone())?);
    let mut cases = Vec::with_capacity(groups.len());
    for (id, freqs, pcv, pcp) in groups {
        if freqs.len() != grid.len() {
            return Err(Error::invariant(format!(
                "case '{id}' has {} rows but the grid has {} frequencies",
                freqs.len(),
                grid.len()
            )));
        }
        if freqs != grid.freqs() {
            // validate ordering first for a sharper message
            FrequencyGrid::new(ts, freqs)?;
            return Err(Error::GridMismatch(format!(
                "case '{id}' uses different frequencies than the first case"
            )));
        }
        cases.push(PlantCase::new(
            id,
            ComplexResponse::new(grid.clone(), pcv)?,
            ComplexResponse::new(grid.clone(), pcp)?,
        )?);
    }
    PlantSet::new(cases)
}

pub fn load_plant_set(path: impl AsRef<Path>, ts: f64) -> Result<PlantSet> {
    let path = path.as_ref();
    let text = read_text(path)?;
    parse_plant_set(&text, ts, &path.display().to_string())
}

pub fn format_plant_set(set: &PlantSet) -> String {
    let mut out = String::with_capacity(64 * set.len() * set.grid().len());
    out.push_str(PLANT_HEADER);
    out.push('\n');
    for case in set.cases() {
        for (k, f) in case.grid().freqs().iter().enumerate() {
            let a = case.p_cv.values()[k];
            let b = case.p_cp.values()[k];
            let _ = writeln!(out, "{},{},{},{},{},{}", case.id, f, a.re, a.im, b.re, b.im);
        }
    }
    out
}

pub fn save_plant_set(set: &PlantSet, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), format_plant_set(set).as_bytes())
}

/// Parses `freq_hz,re,im` or the magnitude-only form `freq_hz,mag`.
/// Magnitude-only spectra are given zero phase; H2 quantities only depend
/// on `|D|^2`.
pub fn parse_spectrum(text: &str, ts: f64, source: &str) -> Result<ComplexResponse> {
    let mut rows = CsvRows::new(source, text);
    let header = normalize_header(&rows.header()?);
    let magnitude_only = match header.as_str() {
        "freq_hz,re,im" => false,
        "freq_hz,mag" => true,
        other => {
            return Err(rows.parse_err(1, format!("expected header 'freq_hz,re,im' or 'freq_hz,mag', got '{other}'")))
        }
    };
    let width = if magnitude_only { 2 } else { 3 };
    let mut freqs = Vec::new();
    let mut values = Vec::new();
    let collected: Vec<_> = rows.by_ref().collect();
    for (line, fields) in collected {
        if fields.len() != width {
            return Err(rows.parse_err(line, format!("expected {width} fields, got {}", fields.len())));
        }
        freqs.push(parse_f64(&rows, line, fields[0], "freq_hz")?);
        if magnitude_only {
            let m = parse_f64(&rows, line, fields[1], "mag")?;
            if m < 0.0 {
                return Err(rows.parse_err(line, "magnitude must be nonnegative"));
            }
            values.push(Complex64::new(m, 0.0));
        } else {
            values.push(Complex64::new(
                parse_f64(&rows, line, fields[1], "re")?,
                parse_f64(&rows, line, fields[2], "im")?,
            ));
        }
    }
    let grid = Arc::new(FrequencyGrid::new(ts, freqs)?);
    ComplexResponse::new(grid, values)
}

pub fn load_spectrum(path: impl AsRef<Path>, ts: f64) -> Result<ComplexResponse> {
    let path = path.as_ref();
    parse_spectrum(&read_text(path)?, ts, &path.display().to_string())
}

pub fn format_spectrum(r: &ComplexResponse) -> String {
    let mut out = String::from("freq_hz,re,im\n");
    for (f, v) in r.grid().freqs().iter().zip(r.values()) {
        let _ = writeln!(out, "{},{},{}", f, v.re, v.im);
    }
    out
}

pub fn save_spectrum(r: &ComplexResponse, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), format_spectrum(r).as_bytes())
}

pub fn parse_weight(text: &str, ts: f64, source: &str) -> Result<WeightCurve> {
    let mut rows = CsvRows::new(source, text);
    let header = normalize_header(&rows.header()?);
    if header != "freq_hz,mag" {
        return Err(rows.parse_err(1, format!("expected header 'freq_hz,mag', got '{header}'")));
    }
    let mut freqs = Vec::new();
    let mut mags = Vec::new();
    let collected: Vec<_> = rows.by_ref().collect();
    for (line, fields) in collected {
        if fields.len() != 2 {
            return Err(rows.parse_err(line, format!("expected 2 fields, got {}", fields.len())));
        }
        freqs.push(parse_f64(&rows, line, fields[0], "freq_hz")?);
        mags.push(parse_f64(&rows, line, fields[1], "mag")?);
    }
    let grid = Arc::new(FrequencyGrid::new(ts, freqs)?);
    WeightCurve::new(grid, mags)
}

pub fn load_weight(path: impl AsRef<Path>, ts: f64) -> Result<WeightCurve> {
    let path = path.as_ref();
    parse_weight(&read_text(path)?, ts, &path.display().to_string())
}

pub fn format_weight(w: &WeightCurve) -> String {
    let mut out = String::from("freq_hz,mag\n");
    for (f, m) in w.grid().freqs().iter().zip(w.magnitudes()) {
        let _ = writeln!(out, "{},{}", f, m);
    }
    out
}

pub fn save_weight(w: &WeightCurve, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), format_weight(w).as_bytes())
}

/// Places a weight curve onto `target` by linear interpolation of its
/// magnitudes.
pub fn resample_weight(w: &WeightCurve, target: &Arc<FrequencyGrid>) -> Result<WeightCurve> {
    if Arc::ptr_eq(w.grid(), target) || **w.grid() == **target {
        return WeightCurve::new(target.clone(), w.magnitudes().to_vec());
    }
    let src: Vec<Complex64> = w.magnitudes().iter().map(|&m| Complex64::new(m, 0.0)).collect();
    let vals = interpolate_at(w.grid().freqs(), &src, target.freqs())?;
    WeightCurve::new(target.clone(), vals.into_iter().map(|v| v.re).collect())
}
