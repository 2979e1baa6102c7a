//! Little-endian binary encodings.
//!
//! Dataset files (`PARLDS1`):
//!
//! ```text
//! magic   b"PARLDS1"           7 bytes
//! version u16                  currently 1
//! count   u32
//! count × { len u32, sample[len] }
//! ```
//!
//! A sample is `width u16, height u16, style u16, task u8, provenance u8,
//! has_label u8, label f32`, then the class grid (one u8 per cell), the
//! instance grid (one u16 per cell), `records u16` records of
//! `id u16, class u8, x u16, y u16, w u16, h u16, affine 4×f32`, and the
//! pixels (three f32 per cell). Grids are row-major from row 0.
//!
//! Model containers (`PARLDM1`):
//!
//! ```text
//! magic   b"PARLDM1"           7 bytes
//! version u16                  currently 1
//! kind    u8                   see [`Kind`]
//! len     u32
//! body[len]
//! ```
//!
//! Model bodies store reals as f64; dataset samples store them as f32.

use std::io::{Read, Write};
use std::path::Path;

use crate::dat::AugmentationCandidate;
use crate::error::{Error, Result};
use crate::policy::{EvaluationReport, PolicyModel, TaskError, TrainingMeta};
use crate::style::{ClassAppearance, StyleModel};
use crate::world::{
    Affine, CellRect, ClassId, DrivingSample, Grid, InstanceMap, InstanceRecord, Provenance, Scenario, SemanticMap,
    StyleId, TaskType,
};

pub const DATASET_MAGIC: &[u8; 7] = b"PARLDS1";
pub const MODEL_MAGIC: &[u8; 7] = b"PARLDM1";
pub const VERSION: u16 = 1;

#[derive(Debug, Default, Clone)]
pub struct Encoder {
    pub buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn bytes(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }

    /// Length as u32, failing on overflow instead of truncating.
    pub fn len(&mut self, n: usize) -> Result<()> {
        let n = u32::try_from(n).map_err(|_| Error::Invalid(format!("length {n} exceeds u32")))?;
        self.u32(n);
        Ok(())
    }

    pub fn count16(&mut self, n: usize) -> Result<()> {
        let n = u16::try_from(n).map_err(|_| Error::Invalid(format!("count {n} exceeds u16")))?;
        self.u16(n);
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Decoder<'a> {
    bytes: &'a [u8],
    pos: usize,
}

macro_rules! take_le {
    ($name:ident, $t:ty) => {
        pub fn $name(&mut self) -> Result<$t> {
            let b = self.take(std::mem::size_of::<$t>())?;
            Ok(<$t>::from_le_bytes(b.try_into().expect("sized slice")))
        }
    };
}

impl<'a> Decoder<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Decoder { bytes, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Decode(format!("truncated: need {n} bytes at offset {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    take_le!(u8, u8);
    take_le!(u16, u16);
    take_le!(u32, u32);
    take_le!(u64, u64);
    take_le!(f32, f32);
    take_le!(f64, f64);

    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::Decode(format!("{} trailing bytes", self.remaining())));
        }
        Ok(())
    }

    /// A u32 length that must fit in what is left of the input.
    pub fn len(&mut self, min_item: usize) -> Result<usize> {
        let n = self.u32()? as usize;
        if n.saturating_mul(min_item.max(1)) > self.remaining() {
            return Err(Error::Decode(format!("length {n} exceeds remaining input")));
        }
        Ok(n)
    }
}

/// Types with a binary encoding.
pub trait Wire: Sized {
    fn encode(&self, e: &mut Encoder) -> Result<()>;
    fn decode(d: &mut Decoder<'_>) -> Result<Self>;

    fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut e = Encoder::new();
        self.encode(&mut e)?;
        Ok(e.buf)
    }

    /// Decodes the whole slice; trailing bytes are an error.
    fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut d = Decoder::new(bytes);
        let v = Self::decode(&mut d)?;
        d.finish()?;
        Ok(v)
    }
}

fn class(d: &mut Decoder<'_>) -> Result<ClassId> {
    let b = d.u8()?;
    ClassId::from_index(b as usize).ok_or_else(|| Error::Decode(format!("class id {b} out of range")))
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Decode(format!("{what} is not finite")))
    }
}

fn dims(d: &mut Decoder<'_>) -> Result<(usize, usize)> {
    let w = d.u16()? as usize;
    let h = d.u16()? as usize;
    if w == 0 || h == 0 {
        return Err(Error::Decode("zero grid dimension".into()));
    }
    Ok((w, h))
}

fn encode_dims(e: &mut Encoder, w: usize, h: usize) -> Result<()> {
    e.count16(w)?;
    e.count16(h)
}

fn encode_classes(e: &mut Encoder, s: &SemanticMap) {
    for c in s.classes.iter() {
        e.u8(c.index() as u8);
    }
}

fn decode_classes(d: &mut Decoder<'_>, w: usize, h: usize) -> Result<SemanticMap> {
    let cells = (0..w * h).map(|_| class(d)).collect::<Result<Vec<_>>>()?;
    let grid = Grid::from_vec(w, h, cells).expect("sized");
    SemanticMap::new(grid).map_err(|e| Error::Decode(e.to_string()))
}

fn encode_record(e: &mut Encoder, r: &InstanceRecord) -> Result<()> {
    e.u16(r.id);
    e.u8(r.class.index() as u8);
    for v in [r.bbox.x, r.bbox.y, r.bbox.w, r.bbox.h] {
        e.count16(v)?;
    }
    for v in [
        r.affine.translate_x,
        r.affine.translate_y,
        r.affine.scale_x,
        r.affine.scale_y,
    ] {
        e.f32(v);
    }
    Ok(())
}

fn decode_record(d: &mut Decoder<'_>) -> Result<InstanceRecord> {
    let id = d.u16()?;
    let class = class(d)?;
    let bbox = CellRect {
        x: d.u16()? as usize,
        y: d.u16()? as usize,
        w: d.u16()? as usize,
        h: d.u16()? as usize,
    };
    let affine = Affine {
        translate_x: d.f32()?,
        translate_y: d.f32()?,
        scale_x: d.f32()?,
        scale_y: d.f32()?,
    };
    Ok(InstanceRecord {
        id,
        class,
        bbox,
        affine,
    })
}

fn encode_records(e: &mut Encoder, records: &[InstanceRecord]) -> Result<()> {
    e.count16(records.len())?;
    records.iter().try_for_each(|r| encode_record(e, r))
}

fn decode_records(d: &mut Decoder<'_>) -> Result<Vec<InstanceRecord>> {
    let n = d.u16()? as usize;
    (0..n).map(|_| decode_record(d)).collect()
}

fn encode_instances(e: &mut Encoder, i: &InstanceMap) -> Result<()> {
    for &v in i.grid.iter() {
        e.u16(v);
    }
    encode_records(e, &i.records)
}

fn decode_instances(d: &mut Decoder<'_>, w: usize, h: usize) -> Result<InstanceMap> {
    let cells = (0..w * h).map(|_| d.u16()).collect::<Result<Vec<_>>>()?;
    let grid = Grid::from_vec(w, h, cells).expect("sized");
    let records = decode_records(d)?;
    let m = InstanceMap { grid, records };
    m.validate().map_err(|e| Error::Decode(e.to_string()))?;
    Ok(m)
}

/// Semantic and instance maps with shared dimensions.
fn encode_layout(e: &mut Encoder, s: &SemanticMap, i: &InstanceMap) -> Result<()> {
    if (s.width(), s.height()) != (i.grid.width(), i.grid.height()) {
        return Err(Error::Invalid("layout grids disagree on dimensions".into()));
    }
    encode_dims(e, s.width(), s.height())?;
    encode_classes(e, s);
    encode_instances(e, i)
}

fn decode_layout(d: &mut Decoder<'_>) -> Result<(SemanticMap, InstanceMap)> {
    let (w, h) = dims(d)?;
    let s = decode_classes(d, w, h)?;
    let i = decode_instances(d, w, h)?;
    Ok((s, i))
}

impl Wire for Scenario {
    fn encode(&self, e: &mut Encoder) -> Result<()> {
        encode_dims(e, self.width(), self.height())?;
        e.u16(self.style.0);
        for px in self.pixels.iter() {
            for &c in px {
                e.f32(c);
            }
        }
        Ok(())
    }

    fn decode(d: &mut Decoder<'_>) -> Result<Self> {
        let (w, h) = dims(d)?;
        let style = StyleId(d.u16()?);
        let cells = (0..w * h)
            .map(|_| Ok([d.f32()?, d.f32()?, d.f32()?]))
            .collect::<Result<Vec<_>>>()?;
        let s = Scenario {
            pixels: Grid::from_vec(w, h, cells).expect("sized"),
            style,
        };
        s.validate().map_err(|e| Error::Decode(e.to_string()))?;
        Ok(s)
    }
}

impl Wire for DrivingSample {
    fn encode(&self, e: &mut Encoder) -> Result<()> {
        self.validate()?;
        let (w, h) = (self.semantic.width(), self.semantic.height());
        encode_dims(e, w, h)?;
        e.u16(self.scenario.style.0);
        e.u8(self.task.index() as u8);
        e.u8(self.provenance.index() as u8);
        e.u8(self.label.is_some() as u8);
        e.f32(self.label.unwrap_or(0.0));
        encode_classes(e, &self.semantic);
        encode_instances(e, &self.instances)?;
        for px in self.scenario.pixels.iter() {
            for &c in px {
                e.f32(c);
            }
        }
        Ok(())
    }

    fn decode(d: &mut Decoder<'_>) -> Result<Self> {
        let (w, h) = dims(d)?;
        let style = StyleId(d.u16()?);
        let t = d.u8()?;
        let task = TaskType::from_index(t as usize).ok_or_else(|| Error::Decode(format!("task tag {t}")))?;
        let p = d.u8()?;
        let provenance =
            Provenance::from_index(p as usize).ok_or_else(|| Error::Decode(format!("provenance tag {p}")))?;
        let has_label = match d.u8()? {
            0 => false,
            1 => true,
            b => return Err(Error::Decode(format!("label flag {b}"))),
        };
        let label = d.f32()?;
        let semantic = decode_classes(d, w, h)?;
        let instances = decode_instances(d, w, h)?;
        let cells = (0..w * h)
            .map(|_| Ok([d.f32()?, d.f32()?, d.f32()?]))
            .collect::<Result<Vec<_>>>()?;
        let s = DrivingSample {
            scenario: Scenario {
                pixels: Grid::from_vec(w, h, cells).expect("sized"),
                style,
            },
            semantic,
            instances,
            label: has_label.then_some(label),
            task,
            provenance,
        };
        s.validate().map_err(|e| Error::Decode(e.to_string()))?;
        Ok(s)
    }
}

impl Wire for StyleModel {
    fn encode(&self, e: &mut Encoder) -> Result<()> {
        e.u16(self.style.0);
        e.u64(self.texture_seed);
        for slot in &self.palette {
            match slot {
                None => e.u8(0),
                Some(a) => {
                    e.u8(1);
                    a.mean.iter().for_each(|&m| e.f32(m));
                    e.f32(a.spread);
                }
            }
        }
        Ok(())
    }

    fn decode(d: &mut Decoder<'_>) -> Result<Self> {
        let style = StyleId(d.u16()?);
        let texture_seed = d.u64()?;
        let mut palette = [None; ClassId::COUNT];
        for slot in &mut palette {
            *slot = match d.u8()? {
                0 => None,
                1 => {
                    let mean = [d.f32()?, d.f32()?, d.f32()?];
                    let spread = d.f32()?;
                    if mean.iter().chain([&spread]).any(|v| !v.is_finite()) || spread < 0.0 {
                        return Err(Error::Decode("palette entry not finite".into()));
                    }
                    Some(ClassAppearance { mean, spread })
                }
                b => return Err(Error::Decode(format!("palette flag {b}"))),
            };
        }
        Ok(StyleModel {
            style,
            palette,
            texture_seed,
        })
    }
}

impl Wire for PolicyModel {
    fn encode(&self, e: &mut Encoder) -> Result<()> {
        self.validate()?;
        e.f64(self.lambda);
        e.len(self.meta.samples)?;
        for &n in &self.meta.provenance {
            e.len(n)?;
        }
        e.count16(self.weights.len())?;
        self.weights.iter().for_each(|&w| e.f64(w));
        Ok(())
    }

    fn decode(d: &mut Decoder<'_>) -> Result<Self> {
        let lambda = d.f64()?;
        let samples = d.u32()? as usize;
        let provenance = [d.u32()? as usize, d.u32()? as usize, d.u32()? as usize];
        let n = d.u16()? as usize;
        let weights = (0..n).map(|_| d.f64()).collect::<Result<Vec<_>>>()?;
        let m = PolicyModel {
            weights,
            lambda,
            meta: TrainingMeta { samples, provenance },
        };
        m.validate().map_err(|e| Error::Decode(e.to_string()))?;
        Ok(m)
    }
}

impl Wire for EvaluationReport {
    fn encode(&self, e: &mut Encoder) -> Result<()> {
        e.len(self.count)?;
        e.f64(self.mae);
        e.f64(self.failure_rate);
        e.f64(self.fail_threshold);
        e.len(self.unperceived)?;
        for t in &self.per_task {
            e.len(t.count)?;
            e.f64(t.mae);
            e.f64(t.failure_rate);
        }
        Ok(())
    }

    fn decode(d: &mut Decoder<'_>) -> Result<Self> {
        let count = d.u32()? as usize;
        let mae = finite(d.f64()?, "mae")?;
        let failure_rate = finite(d.f64()?, "failure rate")?;
        let fail_threshold = finite(d.f64()?, "fail threshold")?;
        let unperceived = d.u32()? as usize;
        let mut per_task = Vec::with_capacity(3);
        for task in TaskType::ALL {
            per_task.push(TaskError {
                task,
                count: d.u32()? as usize,
                mae: finite(d.f64()?, "task mae")?,
                failure_rate: finite(d.f64()?, "task failure rate")?,
            });
        }
        Ok(EvaluationReport {
            per_task: per_task.try_into().expect("three tasks"),
            count,
            mae,
            failure_rate,
            fail_threshold,
            unperceived,
        })
    }
}

impl Wire for AugmentationCandidate {
    fn encode(&self, e: &mut Encoder) -> Result<()> {
        encode_layout(e, &self.semantic, &self.instances)?;
        encode_records(e, &self.inserted)?;
        e.u64(self.source_sample_id);
        e.u8(self.score.is_some() as u8);
        e.f64(self.score.unwrap_or(0.0));
        Ok(())
    }

    fn decode(d: &mut Decoder<'_>) -> Result<Self> {
        let (semantic, instances) = decode_layout(d)?;
        let inserted = decode_records(d)?;
        let source_sample_id = d.u64()?;
        let has = d.u8()?;
        let score = d.f64()?;
        let score = match has {
            0 => None,
            1 => Some(finite(score, "score")?),
            b => return Err(Error::Decode(format!("score flag {b}"))),
        };
        Ok(AugmentationCandidate {
            semantic,
            instances,
            inserted,
            source_sample_id,
            score,
        })
    }
}

impl Wire for (SemanticMap, InstanceMap) {
    fn encode(&self, e: &mut Encoder) -> Result<()> {
        encode_layout(e, &self.0, &self.1)
    }

    fn decode(d: &mut Decoder<'_>) -> Result<Self> {
        decode_layout(d)
    }
}

impl<T: Wire> Wire for Vec<T> {
    fn encode(&self, e: &mut Encoder) -> Result<()> {
        e.len(self.len())?;
        self.iter().try_for_each(|v| v.encode(e))
    }

    fn decode(d: &mut Decoder<'_>) -> Result<Self> {
        let n = d.len(1)?;
        (0..n).map(|_| T::decode(d)).collect()
    }
}

impl Wire for f64 {
    fn encode(&self, e: &mut Encoder) -> Result<()> {
        e.f64(*self);
        Ok(())
    }

    fn decode(d: &mut Decoder<'_>) -> Result<Self> {
        d.f64()
    }
}

impl<T: Wire> Wire for Option<T> {
    fn encode(&self, e: &mut Encoder) -> Result<()> {
        match self {
            None => e.u8(0),
            Some(v) => {
                e.u8(1);
                v.encode(e)?;
            }
        }
        Ok(())
    }

    fn decode(d: &mut Decoder<'_>) -> Result<Self> {
        match d.u8()? {
            0 => Ok(None),
            1 => Ok(Some(T::decode(d)?)),
            b => Err(Error::Decode(format!("option flag {b}"))),
        }
    }
}

/// Body kinds of a `PARLDM1` container.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Kind {
    Policy = 1,
    Style = 2,
    Report = 3,
    Upload = 4,
    AugmentedSet = 5,
    LabelRequest = 6,
    LabelResponse = 7,
    SharedModel = 8,
    FineTuneAck = 9,
}

impl Kind {
    pub const ALL: [Kind; 9] = [
        Kind::Policy,
        Kind::Style,
        Kind::Report,
        Kind::Upload,
        Kind::AugmentedSet,
        Kind::LabelRequest,
        Kind::LabelResponse,
        Kind::SharedModel,
        Kind::FineTuneAck,
    ];

    pub fn from_u8(b: u8) -> Option<Kind> {
        Self::ALL.into_iter().find(|k| *k as u8 == b)
    }
}

/// Wraps `body` in a `PARLDM1` container.
pub fn container(kind: Kind, body: &[u8]) -> Result<Vec<u8>> {
    let mut e = Encoder::new();
    e.bytes(MODEL_MAGIC);
    e.u16(VERSION);
    e.u8(kind as u8);
    e.len(body.len())?;
    e.bytes(body);
    Ok(e.buf)
}

/// Reads a container header, checks magic, version and kind, and returns
/// the body. The container must span exactly `bytes`.
pub fn open_container(bytes: &[u8], expected: Kind) -> Result<&[u8]> {
    let mut d = Decoder::new(bytes);
    if d.take(7)? != MODEL_MAGIC {
        return Err(Error::Decode("bad model container magic".into()));
    }
    let v = d.u16()?;
    if v != VERSION {
        return Err(Error::Decode(format!("unsupported container version {v}")));
    }
    let k = d.u8()?;
    match Kind::from_u8(k) {
        Some(kind) if kind == expected => {}
        Some(kind) => {
            return Err(Error::Decode(format!(
                "container holds {kind:?}, expected {expected:?}"
            )))
        }
        None => return Err(Error::Decode(format!("unknown container kind {k}"))),
    }
    let n = d.len(1)?;
    let body = d.take(n)?;
    d.finish()?;
    Ok(body)
}

pub fn encode_model<T: Wire>(kind: Kind, value: &T) -> Result<Vec<u8>> {
    container(kind, &value.to_bytes()?)
}

pub fn decode_model<T: Wire>(kind: Kind, bytes: &[u8]) -> Result<T> {
    T::from_bytes(open_container(bytes, kind)?)
}

pub fn encode_dataset(samples: &[DrivingSample]) -> Result<Vec<u8>> {
    let mut e = Encoder::new();
    e.bytes(DATASET_MAGIC);
    e.u16(VERSION);
    e.len(samples.len())?;
    for s in samples {
        let body = s.to_bytes()?;
        e.len(body.len())?;
        e.bytes(&body);
    }
    Ok(e.buf)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Vec<DrivingSample>> {
    let mut d = Decoder::new(bytes);
    if d.take(7)? != DATASET_MAGIC {
        return Err(Error::Decode("bad dataset magic".into()));
    }
    let v = d.u16()?;
    if v != VERSION {
        return Err(Error::Decode(format!("unsupported dataset version {v}")));
    }
    let n = d.len(4)?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let len = d.len(1)?;
        out.push(DrivingSample::from_bytes(d.take(len)?)?);
    }
    d.finish()?;
    Ok(out)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::File::create(path)?.write_all(bytes)?;
    Ok(())
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    Ok(buf)
}

pub fn save_dataset(path: &Path, samples: &[DrivingSample]) -> Result<()> {
    write_file(path, &encode_dataset(samples)?)
}

pub fn load_dataset(path: &Path) -> Result<Vec<DrivingSample>> {
    decode_dataset(&read_file(path)?)
}

/// JSON mirror of a dataset file.
pub fn dataset_json(samples: &[DrivingSample]) -> Result<String> {
    #[derive(serde::Serialize)]
    struct Doc<'a> {
        magic: &'static str,
        version: u16,
        count: usize,
        samples: &'a [DrivingSample],
    }
    Ok(serde_json::to_string_pretty(&Doc {
        magic: "PARLDS1",
        version: VERSION,
        count: samples.len(),
        samples,
    })?)
}

pub fn save_model<T: Wire>(path: &Path, kind: Kind, value: &T) -> Result<()> {
    write_file(path, &encode_model(kind, value)?)
}

pub fn load_model<T: Wire>(path: &Path, kind: Kind) -> Result<T> {
    decode_model(kind, &read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{World, WorldParams};

    fn sample() -> DrivingSample {
        let w = World::with_builtin_styles(WorldParams::default(), 2).unwrap();
        w.generate(StyleId(1), TaskType::AvoidCars, 5).unwrap()
    }

    #[test]
    fn dataset_round_trip() {
        let s = vec![sample(), sample()];
        let bytes = encode_dataset(&s).unwrap();
        assert_eq!(&bytes[..7], b"PARLDS1");
        assert_eq!(&bytes[7..9], &1u16.to_le_bytes());
        assert_eq!(&bytes[9..13], &2u32.to_le_bytes());
        assert_eq!(decode_dataset(&bytes).unwrap(), s);
    }

    #[test]
    fn truncation_is_a_decode_error() {
        let bytes = encode_dataset(&[sample()]).unwrap();
        for cut in [0, 5, 12, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(decode_dataset(&bytes[..cut]), Err(Error::Decode(_))));
        }
    }

    #[test]
    fn container_kind_is_checked() {
        let m = PolicyModel::constant(0.5);
        let bytes = encode_model(Kind::Policy, &m).unwrap();
        assert_eq!(decode_model::<PolicyModel>(Kind::Policy, &bytes).unwrap(), m);
        assert!(decode_model::<PolicyModel>(Kind::Style, &bytes).is_err());
    }

    #[test]
    fn style_round_trip() {
        let s = StyleModel::builtin(StyleId(3));
        assert_eq!(StyleModel::from_bytes(&s.to_bytes().unwrap()).unwrap(), s);
    }
}
