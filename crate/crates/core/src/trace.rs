//! Trace storage, the SCTR/SCFT file formats, measurement windows and
//! feature normalization.
//!
//! SCTR layout (all integers little-endian):
//!
//! ```text
//! "SCTR" | version u16 = 1 | S u32 | N u32 | plaintext_len u16 = 16 | key_flag u8
//!        | [16-byte key if key_flag = 1]
//!        | S x (16 plaintext bytes, N x f32 samples)
//! ```
//!
//! SCFT has the same record idea with `D` f32 features per row:
//!
//! ```text
//! "SCFT" | version u16 = 1 | S u32 | D u32 | S x (16 plaintext bytes, D x f32)
//! ```

use std::fs::File;
use std::io::{BufWriter, Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result, Scalar};

pub const TRACE_MAGIC: &[u8; 4] = b"SCTR";
pub const FEATURE_MAGIC: &[u8; 4] = b"SCFT";
pub const FORMAT_VERSION: u16 = 1;
pub const PLAINTEXT_LEN: usize = 16;
pub const NUM_SBOX: usize = 16;

pub type Block = [u8; PLAINTEXT_LEN];

/// Power traces with their plaintexts and, optionally, the key.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceSet {
    samples: Array2<f32>,
    plaintexts: Vec<Block>,
    known_key: Option<Block>,
}

impl TraceSet {
    pub fn new(samples: Array2<f32>, plaintexts: Vec<Block>, known_key: Option<Block>) -> Result<Self> {
        if samples.nrows() != plaintexts.len() {
            return Err(Error::Shape(format!(
                "{} traces but {} plaintexts",
                samples.nrows(),
                plaintexts.len()
            )));
        }
        if let Some(((j, t), v)) = samples.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite sample {v} at trace {j}, index {t}")));
        }
        let samples = if samples.is_standard_layout() {
            samples
        } else {
            samples.as_standard_layout().to_owned()
        };
        Ok(TraceSet {
            samples,
            plaintexts,
            known_key,
        })
    }

    pub fn num_traces(&self) -> usize {
        self.samples.nrows()
    }

    pub fn samples_per_trace(&self) -> usize {
        self.samples.ncols()
    }

    pub fn samples(&self) -> ArrayView2<'_, f32> {
        self.samples.view()
    }

    pub fn trace(&self, j: usize) -> ArrayView1<'_, f32> {
        self.samples.row(j)
    }

    pub fn plaintexts(&self) -> &[Block] {
        &self.plaintexts
    }

    pub fn known_key(&self) -> Option<&Block> {
        self.known_key.as_ref()
    }

    /// The first `n` traces.
    pub fn prefix(&self, n: usize) -> Result<TraceSet> {
        if n > self.num_traces() {
            return Err(Error::Argument(format!(
                "prefix of {n} traces requested from a set of {}",
                self.num_traces()
            )));
        }
        Ok(TraceSet {
            samples: self.samples.slice(ndarray::s![..n, ..]).to_owned(),
            plaintexts: self.plaintexts[..n].to_vec(),
            known_key: self.known_key,
        })
    }

    /// Traces in `range`, keeping the key.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<TraceSet> {
        if range.end > self.num_traces() || range.start > range.end {
            return Err(Error::Argument(format!("bad trace range {range:?}")));
        }
        Ok(TraceSet {
            samples: self.samples.slice(ndarray::s![range.clone(), ..]).to_owned(),
            plaintexts: self.plaintexts[range].to_vec(),
            known_key: self.known_key,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let s = self.num_traces();
        let n = self.samples_per_trace();
        let mut out = Vec::with_capacity(17 + 16 + s * (16 + 4 * n));
        out.extend_from_slice(TRACE_MAGIC);
        out.write_u16::<LittleEndian>(FORMAT_VERSION).unwrap();
        out.write_u32::<LittleEndian>(s as u32).unwrap();
        out.write_u32::<LittleEndian>(n as u32).unwrap();
        out.write_u16::<LittleEndian>(PLAINTEXT_LEN as u16).unwrap();
        match &self.known_key {
            Some(k) => {
                out.push(1);
                out.extend_from_slice(k);
            }
            None => out.push(0),
        }
        for (p, row) in self.plaintexts.iter().zip(self.samples.rows()) {
            out.extend_from_slice(p);
            for v in row {
                out.write_f32::<LittleEndian>(*v).unwrap();
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor::new(bytes);
        let header = |e: std::io::Error| Error::Corrupt(format!("truncated SCTR header: {e}"));
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| Error::Format("file too short for SCTR magic".into()))?;
        if &magic != TRACE_MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}, expected \"SCTR\"")));
        }
        let version = r.read_u16::<LittleEndian>().map_err(header)?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported SCTR version {version}")));
        }
        let s = r.read_u32::<LittleEndian>().map_err(header)? as usize;
        let n = r.read_u32::<LittleEndian>().map_err(header)? as usize;
        let pt_len = r.read_u16::<LittleEndian>().map_err(header)? as usize;
        if pt_len != PLAINTEXT_LEN {
            return Err(Error::Format(format!("unsupported plaintext length {pt_len}")));
        }
        let key_flag = r.read_u8().map_err(header)?;
        let known_key = match key_flag {
            0 => None,
            1 => {
                let mut k = [0u8; 16];
                r.read_exact(&mut k).map_err(header)?;
                Some(k)
            }
            f => return Err(Error::Format(format!("bad key flag {f}"))),
        };
        let record = PLAINTEXT_LEN + 4 * n;
        let payload = &bytes[r.position() as usize..];
        let expected = s
            .checked_mul(record)
            .ok_or_else(|| Error::Corrupt("header sizes overflow".into()))?;
        if payload.len() != expected {
            return Err(Error::Corrupt(format!(
                "payload has {} bytes, header promises {expected}",
                payload.len()
            )));
        }
        let mut plaintexts = Vec::with_capacity(s);
        let mut samples = Vec::with_capacity(s * n);
        for rec in payload.chunks_exact(record.max(1)).take(s) {
            let mut p = [0u8; 16];
            p.copy_from_slice(&rec[..PLAINTEXT_LEN]);
            plaintexts.push(p);
            samples.extend(
                rec[PLAINTEXT_LEN..]
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])),
            );
        }
        let samples = Array2::from_shape_vec((s, n), samples)
            .map_err(|e| Error::Corrupt(format!("sample matrix: {e}")))?;
        TraceSet::new(samples, plaintexts, known_key)
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    w.write_all(bytes).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_traces(path: impl AsRef<Path>) -> Result<TraceSet> {
    TraceSet::from_bytes(&read_file(path.as_ref())?)
}

pub fn save_traces(ts: &TraceSet, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &ts.to_bytes())
}

pub fn encode_features(features: ArrayView2<'_, f32>, plaintexts: &[Block]) -> Result<Vec<u8>> {
    if features.nrows() != plaintexts.len() {
        return Err(Error::Shape(format!(
            "{} feature rows but {} plaintexts",
            features.nrows(),
            plaintexts.len()
        )));
    }
    let mut out = Vec::with_capacity(14 + features.len() * 4 + plaintexts.len() * 16);
    out.extend_from_slice(FEATURE_MAGIC);
    out.write_u16::<LittleEndian>(FORMAT_VERSION).unwrap();
    out.write_u32::<LittleEndian>(features.nrows() as u32).unwrap();
    out.write_u32::<LittleEndian>(features.ncols() as u32).unwrap();
    for (p, row) in plaintexts.iter().zip(features.rows()) {
        out.extend_from_slice(p);
        for v in row {
            out.write_f32::<LittleEndian>(*v).unwrap();
        }
    }
    Ok(out)
}

pub fn decode_features(bytes: &[u8]) -> Result<(Array2<f32>, Vec<Block>)> {
    if bytes.len() < 14 {
        return Err(Error::Format("file too short for SCFT header".into()));
    }
    if &bytes[..4] != FEATURE_MAGIC {
        return Err(Error::Format(format!("bad magic {:?}, expected \"SCFT\"", &bytes[..4])));
    }
    let mut r = Cursor::new(&bytes[4..]);
    let version = r.read_u16::<LittleEndian>().unwrap();
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported SCFT version {version}")));
    }
    let s = r.read_u32::<LittleEndian>().unwrap() as usize;
    let d = r.read_u32::<LittleEndian>().unwrap() as usize;
    let payload = &bytes[14..];
    let record = PLAINTEXT_LEN + 4 * d;
    if Some(payload.len()) != s.checked_mul(record) {
        return Err(Error::Corrupt(format!(
            "payload has {} bytes, header promises {s} records of {record}",
            payload.len()
        )));
    }
    let mut plaintexts = Vec::with_capacity(s);
    let mut data = Vec::with_capacity(s * d);
    for rec in payload.chunks_exact(record).take(s) {
        let mut p = [0u8; 16];
        p.copy_from_slice(&rec[..PLAINTEXT_LEN]);
        plaintexts.push(p);
        for c in rec[PLAINTEXT_LEN..].chunks_exact(4) {
            let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            if !v.is_finite() {
                return Err(Error::Data(format!("non-finite feature {v}")));
            }
            data.push(v);
        }
    }
    let data = Array2::from_shape_vec((s, d), data)
        .map_err(|e| Error::Corrupt(format!("feature matrix: {e}")))?;
    Ok((data, plaintexts))
}

pub fn save_feature_file(path: impl AsRef<Path>, features: ArrayView2<'_, f32>, plaintexts: &[Block]) -> Result<()> {
    write_file(path.as_ref(), &encode_features(features, plaintexts)?)
}

pub fn load_feature_file(path: impl AsRef<Path>) -> Result<(Array2<f32>, Vec<Block>)> {
    decode_features(&read_file(path.as_ref())?)
}

/// Positions and length of the 16 per-S-box measurement windows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WindowSpec {
    pub positions: [usize; NUM_SBOX],
    pub length: usize,
    pub jitter_halfwidth: usize,
}

impl WindowSpec {
    /// Windows of `length` samples centred on consecutive clock cycles that
    /// start at `first_clock` and last `clock_len` samples each.
    pub fn for_clocks(first_clock: usize, clock_len: usize, length: usize, jitter_halfwidth: usize) -> Result<Self> {
        if length < clock_len {
            return Err(Error::Argument(format!(
                "window length {length} shorter than the clock cycle {clock_len}"
            )));
        }
        let lead = (length - clock_len) / 2;
        if lead > first_clock {
            return Err(Error::Bounds(format!(
                "window lead-in {lead} runs before the start of the trace"
            )));
        }
        let positions = std::array::from_fn(|i| first_clock + clock_len * i - lead);
        Ok(WindowSpec {
            positions,
            length,
            jitter_halfwidth,
        })
    }

    /// `l >= l_c + 2h`: every jittered window still covers its clock.
    pub fn covers_clock(&self, clock_len: usize) -> bool {
        self.length >= clock_len + 2 * self.jitter_halfwidth
    }

    /// Checks that every window stays inside a trace of `n` samples even at
    /// the worst-case jitter.
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.length == 0 {
            return Err(Error::Argument("window length must be positive".into()));
        }
        let h = self.jitter_halfwidth;
        for (i, &r) in self.positions.iter().enumerate() {
            if r < h || r + h + self.length > n {
                return Err(Error::Bounds(format!(
                    "window {i} at {r} with length {} and jitter {h} exceeds trace of {n} samples",
                    self.length
                )));
            }
        }
        Ok(())
    }
}

/// Per-(trace, byte) windows cut out of a [`TraceSet`], trace-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct SubTraceSet {
    windows: Array2<f32>,
    trace_index: Vec<u32>,
    byte_index: Vec<u8>,
    offsets: Vec<i32>,
    plaintexts: Vec<Block>,
}

impl SubTraceSet {
    /// Builds a set directly from windows; used by tests and by callers that
    /// assemble sub-traces themselves.
    pub fn from_parts(windows: Array2<f32>, byte_index: Vec<u8>, plaintexts: Vec<Block>) -> Result<Self> {
        let m = windows.nrows();
        if byte_index.len() != m || plaintexts.len() != m {
            return Err(Error::Shape(format!(
                "{m} windows, {} byte indices, {} plaintexts",
                byte_index.len(),
                plaintexts.len()
            )));
        }
        if byte_index.iter().any(|b| *b as usize >= NUM_SBOX) {
            return Err(Error::Argument("byte index above 15".into()));
        }
        Ok(SubTraceSet {
            windows,
            trace_index: (0..m as u32).collect(),
            byte_index,
            offsets: vec![0; m],
            plaintexts,
        })
    }

    pub fn len(&self) -> usize {
        self.windows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn window_len(&self) -> usize {
        self.windows.ncols()
    }

    pub fn windows(&self) -> ArrayView2<'_, f32> {
        self.windows.view()
    }

    pub fn window(&self, k: usize) -> ArrayView1<'_, f32> {
        self.windows.row(k)
    }

    pub fn trace_indices(&self) -> &[u32] {
        &self.trace_index
    }

    pub fn byte_indices(&self) -> &[u8] {
        &self.byte_index
    }

    /// Jitter offset applied to each window.
    pub fn offsets(&self) -> &[i32] {
        &self.offsets
    }

    /// Full plaintext of the trace each window came from.
    pub fn plaintexts(&self) -> &[Block] {
        &self.plaintexts
    }

    /// Plaintext byte `P_i` for each window.
    pub fn labels(&self) -> Vec<u8> {
        self.plaintexts
            .iter()
            .zip(&self.byte_index)
            .map(|(p, i)| p[*i as usize])
            .collect()
    }

    fn select(&self, keep: &[usize]) -> SubTraceSet {
        SubTraceSet {
            windows: self.windows.select(Axis(0), keep),
            trace_index: keep.iter().map(|k| self.trace_index[*k]).collect(),
            byte_index: keep.iter().map(|k| self.byte_index[*k]).collect(),
            offsets: keep.iter().map(|k| self.offsets[*k]).collect(),
            plaintexts: keep.iter().map(|k| self.plaintexts[*k]).collect(),
        }
    }

    /// The windows of S-box `byte`, in trace order.
    pub fn for_byte(&self, byte: usize) -> SubTraceSet {
        let keep: Vec<usize> = (0..self.len())
            .filter(|k| self.byte_index[*k] as usize == byte)
            .collect();
        self.select(&keep)
    }

    /// Windows whose source trace index is below `n`.
    pub fn first_traces(&self, n: usize) -> SubTraceSet {
        let keep: Vec<usize> = (0..self.len())
            .filter(|k| (self.trace_index[*k] as usize) < n)
            .collect();
        self.select(&keep)
    }

    /// The first `n` windows.
    pub fn prefix(&self, n: usize) -> SubTraceSet {
        let keep: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&keep)
    }
}

/// Draws the jitter offsets `s_{j,i}` for `num_traces` traces, trace-major.
pub fn draw_jitter(num_traces: usize, halfwidth: usize, seed: u64) -> Vec<i32> {
    let h = halfwidth as i32;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..num_traces * NUM_SBOX)
        .map(|_| if h == 0 { 0 } else { rng.random_range(-h..=h) })
        .collect()
}

/// Cuts all 16 windows out of every trace.
pub fn extract_windows(ts: &TraceSet, spec: &WindowSpec, jitter_seed: Option<u64>) -> Result<SubTraceSet> {
    let all: Vec<usize> = (0..NUM_SBOX).collect();
    extract_windows_for(ts, spec, jitter_seed, &all)
}

/// Like [`extract_windows`], restricted to the S-boxes in `bytes`. The jitter
/// stream is always drawn for all 16 windows, so offsets do not depend on the
/// selection.
pub fn extract_windows_for(
    ts: &TraceSet,
    spec: &WindowSpec,
    jitter_seed: Option<u64>,
    bytes: &[usize],
) -> Result<SubTraceSet> {
    spec.validate(ts.samples_per_trace())?;
    if let Some(b) = bytes.iter().find(|b| **b >= NUM_SBOX) {
        return Err(Error::Argument(format!("byte index {b} above 15")));
    }
    let s = ts.num_traces();
    let offsets = match (spec.jitter_halfwidth, jitter_seed) {
        (0, _) => vec![0; s * NUM_SBOX],
        (h, Some(seed)) => draw_jitter(s, h, seed),
        (_, None) => {
            return Err(Error::Argument(
                "jittered windows need a jitter seed".into(),
            ))
        }
    };
    let l = spec.length;
    let m = s * bytes.len();
    let mut windows = Array2::<f32>::zeros((m, l));
    let mut trace_index = Vec::with_capacity(m);
    let mut byte_index = Vec::with_capacity(m);
    let mut offs = Vec::with_capacity(m);
    let mut plaintexts = Vec::with_capacity(m);
    let mut row = 0;
    for j in 0..s {
        let trace = ts.trace(j);
        for &i in bytes {
            let off = offsets[j * NUM_SBOX + i];
            let start = (spec.positions[i] as i64 + off as i64) as usize;
            windows
                .row_mut(row)
                .assign(&trace.slice(ndarray::s![start..start + l]));
            trace_index.push(j as u32);
            byte_index.push(i as u8);
            offs.push(off);
            plaintexts.push(ts.plaintexts()[j]);
            row += 1;
        }
    }
    Ok(SubTraceSet {
        windows,
        trace_index,
        byte_index,
        offsets: offs,
        plaintexts,
    })
}

/// Column-wise min-max scaling to `[0, 1]`; constant columns map to 0.
pub fn minmax_normalize<T: Scalar>(features: ArrayView2<'_, T>) -> Result<Array2<T>> {
    if features.nrows() == 0 {
        return Err(Error::Argument("cannot normalize an empty feature matrix".into()));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite feature value".into()));
    }
    let mut out = features.to_owned();
    for mut col in out.columns_mut() {
        let lo = col.iter().copied().fold(T::infinity(), T::min);
        let hi = col.iter().copied().fold(T::neg_infinity(), T::max);
        let span = hi - lo;
        if span > T::zero() {
            col.mapv_inplace(|v| ((v - lo) / span).min(T::one()));
        } else {
            col.fill(T::zero());
        }
    }
    Ok(out)
}
