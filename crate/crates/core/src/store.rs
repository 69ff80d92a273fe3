//! The vector-sequence store: ingestion, next-delta materialization and the
//! binary shard format.
//!
//! A [`Shard`] is built by a single writer through [`Shard::ingest_sequence`].
//! Once handed to a [`Corpus`] it is sealed: the corpus only exposes shared
//! references, so any number of readers may query it concurrently.
//!
//! Records are stored column-wise. Vectors and deltas are 32-bit floats; a
//! record's delta is `fl32(next - this)`, computed once at ingestion.

use std::fs::File;
use std::io::{BufRead, BufWriter, Read, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

pub const MAGIC: &[u8; 4] = b"VSDB";
pub const FORMAT_VERSION: u8 = 0x01;
/// magic + version + dim + record_count + sequence_count
pub const HEADER_LEN: usize = 4 + 1 + 4 + 8 + 8;

/// Location of one record: shard number and record index inside the shard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RecordRef {
    pub shard: u32,
    pub index: u32,
}

impl RecordRef {
    pub fn new(shard: u32, index: u32) -> Self {
        Self { shard, index }
    }
}

/// Owned copy of a stored record.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorRecord {
    pub seq_id: u32,
    pub position: u32,
    pub vector: Vec<f32>,
    pub delta: Option<Vec<f32>>,
}

/// Borrowed view of a stored record.
#[derive(Debug, Clone, Copy)]
pub struct RecordView<'a> {
    pub seq_id: u32,
    pub position: u32,
    pub vector: &'a [f32],
    pub delta: Option<&'a [f32]>,
}

impl RecordView<'_> {
    pub fn to_owned(&self) -> VectorRecord {
        VectorRecord {
            seq_id: self.seq_id,
            position: self.position,
            vector: self.vector.to_vec(),
            delta: self.delta.map(<[f32]>::to_vec),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Shard {
    dim: usize,
    seq_ids: Vec<u32>,
    positions: Vec<u32>,
    has_delta: Vec<bool>,
    vectors: Vec<f32>,
    // zero-filled for records without a delta
    deltas: Vec<f32>,
    // indexed by seq_id
    sequences: Vec<Range<usize>>,
}

impl Shard {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            seq_ids: Vec::new(),
            positions: Vec::new(),
            has_delta: Vec::new(),
            vectors: Vec::new(),
            deltas: Vec::new(),
            sequences: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.seq_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seq_ids.is_empty()
    }

    pub fn sequence_count(&self) -> usize {
        self.sequences.len()
    }

    /// Appends one sequence and returns its newly assigned id.
    ///
    /// Record `p` gets `delta = vectors[p + 1] - vectors[p]`; the last record
    /// has no delta.
    pub fn ingest_sequence<V: AsRef<[f32]>>(&mut self, vectors: &[V]) -> Result<u32> {
        if vectors.is_empty() {
            return Err(Error::EmptySequence);
        }
        for v in vectors {
            check_dim(self.dim, v.as_ref().len())?;
        }
        let seq_id = u32::try_from(self.sequences.len())
            .map_err(|_| Error::param("shard holds too many sequences"))?;
        let start = self.len();
        let last = vectors.len() - 1;
        for (p, v) in vectors.iter().enumerate() {
            let v = v.as_ref();
            self.seq_ids.push(seq_id);
            self.positions.push(p as u32);
            self.vectors.extend_from_slice(v);
            if p < last {
                let next = vectors[p + 1].as_ref();
                self.deltas.extend(next.iter().zip(v).map(|(n, c)| n - c));
                self.has_delta.push(true);
            } else {
                self.deltas.extend(std::iter::repeat_n(0.0, self.dim));
                self.has_delta.push(false);
            }
        }
        self.sequences.push(start..self.len());
        Ok(seq_id)
    }

    pub fn vector(&self, index: usize) -> &[f32] {
        &self.vectors[index * self.dim..(index + 1) * self.dim]
    }

    pub fn delta(&self, index: usize) -> Option<&[f32]> {
        self.has_delta[index].then(|| &self.deltas[index * self.dim..(index + 1) * self.dim])
    }

    pub fn has_delta(&self, index: usize) -> bool {
        self.has_delta[index]
    }

    pub fn record(&self, index: usize) -> RecordView<'_> {
        RecordView {
            seq_id: self.seq_ids[index],
            position: self.positions[index],
            vector: self.vector(index),
            delta: self.delta(index),
        }
    }

    /// The flat `len * dim` vector matrix.
    pub fn vectors(&self) -> &[f32] {
        &self.vectors
    }

    pub(crate) fn delta_flags(&self) -> &[bool] {
        &self.has_delta
    }

    pub fn sequence_range(&self, seq_id: u32) -> Result<Range<usize>> {
        self.sequences
            .get(seq_id as usize)
            .cloned()
            .ok_or(Error::NotFound(seq_id as u64))
    }

    /// Records of one sequence in position order.
    pub fn get_sequence(&self, seq_id: u32) -> Result<Vec<VectorRecord>> {
        let range = self.sequence_range(seq_id)?;
        Ok(range.map(|i| self.record(i).to_owned()).collect())
    }

    /// Number of records without a delta; equals the sequence count.
    pub fn absent_delta_count(&self) -> usize {
        self.has_delta.iter().filter(|h| !**h).count()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn write_to<W: Write>(&self, out: &mut W) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&[FORMAT_VERSION])?;
        out.write_all(&(self.dim as u32).to_le_bytes())?;
        out.write_all(&(self.len() as u64).to_le_bytes())?;
        out.write_all(&(self.sequences.len() as u64).to_le_bytes())?;
        for i in 0..self.len() {
            out.write_all(&self.seq_ids[i].to_le_bytes())?;
            out.write_all(&self.positions[i].to_le_bytes())?;
            out.write_all(&[self.has_delta[i] as u8])?;
            for x in self.vector(i) {
                out.write_all(&x.to_le_bytes())?;
            }
            if let Some(delta) = self.delta(i) {
                for x in delta {
                    out.write_all(&x.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(HEADER_LEN + self.vectors.len() * 8 + self.len() * 9);
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    /// Parses and validates a serialized shard. Every structural violation is
    /// reported with the byte offset where it was detected.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(format_err(0, "bad magic bytes"));
        }
        let version = cur.u8()?;
        if version != FORMAT_VERSION {
            return Err(format_err(4, format!("unsupported version {version}")));
        }
        let dim_offset = cur.pos;
        let dim = cur.u32()? as usize;
        let record_count = cur.u64()?;
        let sequence_count = cur.u64()?;
        if dim == 0 && record_count > 0 {
            return Err(format_err(dim_offset as u64, "zero dimension with records"));
        }
        // each record needs at least 9 + 4 * dim bytes
        let min_record = 9 + 4 * dim as u64;
        let remaining = (bytes.len() - cur.pos) as u64;
        if record_count.saturating_mul(min_record) > remaining {
            return Err(format_err(
                bytes.len() as u64,
                format!("truncated: header declares {record_count} records of dim {dim}"),
            ));
        }

        let n = record_count as usize;
        let mut shard = Shard::new(dim);
        shard.seq_ids.reserve(n);
        shard.positions.reserve(n);
        shard.has_delta.reserve(n);
        shard.vectors.reserve(n * dim);
        shard.deltas.reserve(n * dim);

        for i in 0..n {
            let rec_offset = cur.pos as u64;
            let seq_id = cur.u32()?;
            let position = cur.u32()?;
            let flag_offset = cur.pos as u64;
            let has_delta = match cur.u8()? {
                0 => false,
                1 => true,
                other => return Err(format_err(flag_offset, format!("bad has_delta flag {other}"))),
            };
            for _ in 0..dim {
                shard.vectors.push(cur.f32()?);
            }
            if has_delta {
                for _ in 0..dim {
                    shard.deltas.push(cur.f32()?);
                }
            } else {
                shard.deltas.extend(std::iter::repeat_n(0.0, dim));
            }

            // sequences must be dense, contiguous and position-ordered
            let expected_seq = match shard.seq_ids.last() {
                Some(&prev) if !shard.has_delta[i - 1] => prev + 1,
                Some(&prev) => prev,
                None => 0,
            };
            let expected_pos = match shard.positions.last() {
                Some(&prev) if shard.has_delta[i - 1] => prev + 1,
                _ => 0,
            };
            if seq_id != expected_seq || position != expected_pos {
                return Err(format_err(
                    rec_offset,
                    format!(
                        "record {i} is (seq {seq_id}, pos {position}), expected (seq {expected_seq}, pos {expected_pos})"
                    ),
                ));
            }
            if position == 0 {
                shard.sequences.push(i..i);
            }
            shard.sequences.last_mut().expect("sequence opened").end = i + 1;
            shard.seq_ids.push(seq_id);
            shard.positions.push(position);
            shard.has_delta.push(has_delta);
        }
        if cur.pos != bytes.len() {
            return Err(format_err(cur.pos as u64, "trailing bytes after last record"));
        }
        if shard.has_delta.last() == Some(&true) {
            return Err(format_err(bytes.len() as u64, "last sequence ends with a delta"));
        }
        if shard.sequences.len() as u64 != sequence_count {
            return Err(format_err(
                (4 + 1 + 4 + 8) as u64,
                format!(
                    "header declares {sequence_count} sequences, records hold {}",
                    shard.sequences.len()
                ),
            ));
        }
        Ok(shard)
    }
}

fn format_err(offset: u64, message: impl Into<String>) -> Error {
    Error::Format { offset, message: message.into() }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(format_err(self.pos as u64, format!("truncated: need {n} more bytes")));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// A sealed, read-only set of shards sharing one dimension.
#[derive(Debug, Clone)]
pub struct Corpus {
    dim: usize,
    shards: Vec<Shard>,
}

impl Corpus {
    pub fn new(shards: Vec<Shard>) -> Result<Self> {
        let dim = shards
            .first()
            .map(Shard::dim)
            .ok_or_else(|| Error::param("a corpus needs at least one shard"))?;
        for shard in &shards {
            check_dim(dim, shard.dim())?;
        }
        Ok(Self { dim, shards })
    }

    pub fn single(shard: Shard) -> Self {
        Self { dim: shard.dim(), shards: vec![shard] }
    }

    pub fn load(paths: &[impl AsRef<Path>]) -> Result<Self> {
        let shards = paths.iter().map(Shard::load).collect::<Result<Vec<_>>>()?;
        Self::new(shards)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shards(&self) -> &[Shard] {
        &self.shards
    }

    pub fn shard(&self, shard: u32) -> &Shard {
        &self.shards[shard as usize]
    }

    pub fn len(&self) -> usize {
        self.shards.iter().map(Shard::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn record(&self, r: RecordRef) -> RecordView<'_> {
        self.shard(r.shard).record(r.index as usize)
    }

    /// The vector following `r` in its sequence, if any.
    pub fn next_vector(&self, r: RecordRef) -> Option<&[f32]> {
        let shard = self.shard(r.shard);
        let i = r.index as usize;
        shard.has_delta(i).then(|| shard.vector(i + 1))
    }

    /// All record refs in (shard, index) order.
    pub fn refs(&self) -> impl Iterator<Item = RecordRef> + '_ {
        self.shards.iter().enumerate().flat_map(|(s, shard)| {
            (0..shard.len() as u32).map(move |i| RecordRef::new(s as u32, i))
        })
    }
}

/// One line of the ingestion format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceLine {
    pub id: String,
    pub vectors: Vec<Vec<f32>>,
    /// Fields other than `id` and `vectors`, kept for shard-key routing.
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

/// Maps an external string id to the shard and seq_id it was stored under.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdMapping {
    pub id: String,
    pub shard: u32,
    pub seq_id: u32,
}

/// Reads ingestion JSON Lines. Blank lines are skipped; errors carry the
/// 1-based line number.
pub fn read_sequences_jsonl<R: BufRead>(reader: R) -> Result<Vec<SequenceLine>> {
    Ok(read_jsonl_numbered(reader)?.into_iter().map(|(_, l)| l).collect())
}

/// Parses every non-blank line as `T`, paired with its 1-based line number.
pub fn read_jsonl_numbered<T: serde::de::DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<(usize, T)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: T =
            serde_json::from_str(&line).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
        out.push((i + 1, parsed));
    }
    Ok(out)
}

/// Ingests parsed lines into a single shard. Dimension errors are reported
/// against the offending line.
pub fn build_shard(lines: &[SequenceLine]) -> Result<(Shard, Vec<IdMapping>)> {
    let dim = lines
        .iter()
        .find_map(|l| l.vectors.first().map(Vec::len))
        .ok_or_else(|| Error::param("input holds no vectors"))?;
    let mut shard = Shard::new(dim);
    let mut ids = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        let seq_id = shard.ingest_sequence(&line.vectors).map_err(|e| Error::Parse {
            line: i + 1,
            message: format!("sequence {:?}: {e}", line.id),
        })?;
        ids.push(IdMapping { id: line.id.clone(), shard: 0, seq_id });
    }
    Ok((shard, ids))
}
