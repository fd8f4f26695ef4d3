use std::fmt::Write as _;
use std::path::Path;

use faer::c64;

use crate::error::{GspError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhasorKind {
    Voltage,
    Current,
    InternalVoltage,
    /// Log-domain generator state `diag(m)^{1/2} ln e`.
    GeneratorState,
}

/// A T×N block of phasor samples, one row (frame) per time step.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasorSeries {
    values: Vec<c64>,
    n: usize,
    bus_ids: Vec<u64>,
    rate_hz: f64,
    kind: PhasorKind,
}

impl PhasorSeries {
    /// `values` is row-major with `bus_ids.len()` columns.
    pub fn new(values: Vec<c64>, bus_ids: Vec<u64>, rate_hz: f64, kind: PhasorKind) -> Result<Self> {
        let n = bus_ids.len();
        if n == 0 {
            return Err(GspError::invalid("bus_ids", "no buses"));
        }
        if values.len() % n != 0 {
            return Err(GspError::Dimension {
                expected: n * (values.len() / n + 1),
                got: values.len(),
            });
        }
        if values.is_empty() {
            return Err(GspError::invalid("values", "T ≥ 1 violated"));
        }
        if let Some(pos) = values.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(GspError::invalid(
                "values",
                format!("non-finite entry at frame {}, bus {}", pos / n, bus_ids[pos % n]),
            ));
        }
        if !(rate_hz.is_finite() && rate_hz > 0.0) {
            return Err(GspError::invalid("rate_hz", format!("must be positive, got {rate_hz}")));
        }
        Ok(PhasorSeries {
            values,
            n,
            bus_ids,
            rate_hz,
            kind,
        })
    }

    pub fn from_frames(frames: &[Vec<c64>], bus_ids: Vec<u64>, rate_hz: f64, kind: PhasorKind) -> Result<Self> {
        let n = bus_ids.len();
        let mut values = Vec::with_capacity(frames.len() * n);
        for (t, f) in frames.iter().enumerate() {
            if f.len() != n {
                return Err(GspError::invalid("values", format!("frame {t} has {} entries, expected {n}", f.len())));
            }
            values.extend_from_slice(f);
        }
        Self::new(values, bus_ids, rate_hz, kind)
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn n_buses(&self) -> usize {
        self.n
    }

    pub fn bus_ids(&self) -> &[u64] {
        &self.bus_ids
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn kind(&self) -> PhasorKind {
        self.kind
    }

    pub fn values(&self) -> &[c64] {
        &self.values
    }

    pub fn frame(&self, t: usize) -> &[c64] {
        &self.values[t * self.n..(t + 1) * self.n]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[c64]> {
        self.values.chunks(self.n)
    }

    pub fn to_frames(&self) -> Vec<Vec<c64>> {
        self.frames().map(|f| f.to_vec()).collect()
    }

    pub fn column(&self, j: usize) -> Vec<c64> {
        self.frames().map(|f| f[j]).collect()
    }

    /// Restricts to the given bus positions, in the given order.
    pub fn select_buses(&self, idx: &[usize]) -> PhasorSeries {
        let values = self.frames().flat_map(|f| idx.iter().map(move |&j| f[j])).collect();
        PhasorSeries {
            values,
            n: idx.len(),
            bus_ids: idx.iter().map(|&j| self.bus_ids[j]).collect(),
            rate_hz: self.rate_hz,
            kind: self.kind,
        }
    }

    pub fn with_bus_ids(mut self, bus_ids: Vec<u64>) -> Result<Self> {
        if bus_ids.len() != self.n {
            return Err(GspError::Dimension {
                expected: self.n,
                got: bus_ids.len(),
            });
        }
        self.bus_ids = bus_ids;
        Ok(self)
    }

    pub fn with_rate(mut self, rate_hz: f64) -> Result<Self> {
        if !(rate_hz.is_finite() && rate_hz > 0.0) {
            return Err(GspError::invalid("rate_hz", format!("must be positive, got {rate_hz}")));
        }
        self.rate_hz = rate_hz;
        Ok(self)
    }

    /// Frames `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(GspError::invalid("frames", format!("range {start}..{end} outside 0..{}", self.len())));
        }
        Ok(PhasorSeries {
            values: self.values[start * self.n..end * self.n].to_vec(),
            n: self.n,
            bus_ids: self.bus_ids.clone(),
            rate_hz: self.rate_hz,
            kind: self.kind,
        })
    }

    pub fn with_kind(mut self, kind: PhasorKind) -> Self {
        self.kind = kind;
        self
    }
}

pub fn load_phasor_csv(path: impl AsRef<Path>, kind: PhasorKind) -> Result<PhasorSeries> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| GspError::io(path, e))?;
    parse_phasor_csv(&text, kind)
}

pub(crate) fn parse_phasor_csv(text: &str, kind: PhasorKind) -> Result<PhasorSeries> {
    let mut rate = None;
    let mut body = String::with_capacity(text.len());
    for line in text.lines() {
        let trimmed = line.trim();
        if let Some(comment) = trimmed.strip_prefix('#') {
            if let Some(r) = comment.trim().strip_prefix("rate_hz=") {
                rate = Some(
                    r.trim()
                        .parse::<f64>()
                        .map_err(|_| GspError::Parse(format!("bad rate_hz value {r:?}")))?,
                );
            }
            continue;
        }
        if trimmed.is_empty() {
            continue;
        }
        body.push_str(line);
        body.push('\n');
    }
    let rate = rate.ok_or_else(|| GspError::Parse("missing `# rate_hz=<r>` header line".into()))?;

    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(body.as_bytes());
    let headers = reader.headers().map_err(|e| GspError::Parse(e.to_string()))?.clone();
    if headers.len() < 3 || headers.len() % 2 != 1 || &headers[0] != "t" {
        return Err(GspError::Parse("header must be `t,<id>_mag,<id>_ang,...`".into()));
    }
    let mut bus_ids = Vec::with_capacity(headers.len() / 2);
    for k in 0..headers.len() / 2 {
        let mag = &headers[1 + 2 * k];
        let ang = &headers[2 + 2 * k];
        let id = mag
            .strip_suffix("_mag")
            .ok_or_else(|| GspError::Parse(format!("column {mag:?} should end in _mag")))?;
        if ang.strip_suffix("_ang") != Some(id) {
            return Err(GspError::Parse(format!("column {ang:?} should be {id}_ang")));
        }
        bus_ids.push(id.parse::<u64>().map_err(|_| GspError::Parse(format!("bad bus id {id:?}")))?);
    }
    let n = bus_ids.len();
    let mut values = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| GspError::Parse(e.to_string()))?;
        if rec.len() != headers.len() {
            return Err(GspError::Parse(format!(
                "ragged row {}: {} fields, expected {}",
                row + 1,
                rec.len(),
                headers.len()
            )));
        }
        let field = |i: usize| -> Result<f64> {
            let v: f64 = rec[i]
                .trim()
                .parse()
                .map_err(|_| GspError::Parse(format!("row {}: bad number {:?}", row + 1, &rec[i])))?;
            if !v.is_finite() {
                return Err(GspError::Parse(format!("row {}: non-finite entry", row + 1)));
            }
            Ok(v)
        };
        field(0)?;
        for k in 0..n {
            values.push(c64::from_polar(field(1 + 2 * k)?, field(2 + 2 * k)?));
        }
    }
    if values.is_empty() {
        return Err(GspError::invalid("values", "T ≥ 1 violated"));
    }
    PhasorSeries::new(values, bus_ids, rate, kind)
}

pub fn save_phasor_csv(series: &PhasorSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_phasor_csv(series)).map_err(|e| GspError::io(path, e))
}

pub(crate) fn format_phasor_csv(series: &PhasorSeries) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# rate_hz={}", series.rate_hz);
    out.push('t');
    for id in &series.bus_ids {
        let _ = write!(out, ",{id}_mag,{id}_ang");
    }
    out.push('\n');
    for (t, frame) in series.frames().enumerate() {
        let _ = write!(out, "{:.14e}", t as f64 / series.rate_hz);
        for z in frame {
            let _ = write!(out, ",{:.14e},{:.14e}", z.norm(), z.arg());
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polar_conversion() {
        let text = format!("# rate_hz=30\nt,1_mag,1_ang,2_mag,2_ang\n0,1,0,1,{PI}\n");
        let s = parse_phasor_csv(&text, PhasorKind::Voltage).unwrap();
        assert_eq!(s.rate_hz(), 30.0);
        assert_eq!(s.len(), 1);
        assert!((s.frame(0)[0] - c64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((s.frame(0)[1] - c64::new(-1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn empty_data_rejected() {
        let err = parse_phasor_csv("# rate_hz=30\nt,1_mag,1_ang\n", PhasorKind::Voltage).unwrap_err();
        assert!(err.to_string().contains("T ≥ 1 violated"), "{err}");
    }

    #[test]
    fn ragged_and_nonfinite_rejected() {
        let ragged = "# rate_hz=30\nt,1_mag,1_ang\n0,1\n";
        assert!(parse_phasor_csv(ragged, PhasorKind::Voltage).unwrap_err().to_string().contains("ragged"));
        let nan = "# rate_hz=30\nt,1_mag,1_ang\n0,NaN,0\n";
        assert!(parse_phasor_csv(nan, PhasorKind::Voltage).unwrap_err().to_string().contains("non-finite"));
    }

    #[test]
    fn format_then_parse_is_stable() {
        let values = vec![c64::new(1.0312, -0.2), c64::new(0.97, 0.011), c64::new(-0.5, 0.33), c64::new(1e-3, 2.0)];
        let s = PhasorSeries::new(values, vec![7, 9], 30.0, PhasorKind::Voltage).unwrap();
        let once = parse_phasor_csv(&format_phasor_csv(&s), PhasorKind::Voltage).unwrap();
        let twice = parse_phasor_csv(&format_phasor_csv(&once), PhasorKind::Voltage).unwrap();
        assert_eq!(format_phasor_csv(&once), format_phasor_csv(&twice));
        for (a, b) in s.values().iter().zip(once.values()) {
            assert!((a - b).norm() < 1e-13 * a.norm().max(1.0));
        }
    }
}
