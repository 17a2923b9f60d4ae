//! Record files and corpus manifests.
//!
//! Two record encodings share one logical layout (sampling rate, op number,
//! time offset, named channels of equal length, f32 samples):
//!
//! * CSV: `# key=value` header lines (`format`, `version`, `fs_hz`,
//!   `op_number`, `t0_offset_ms`), a column-name row, then one row per sample.
//!   A channel that ends early leaves its trailing cells empty.
//! * binary, little-endian throughout:
//!
//! ```text
//! "CBKM"                magic, 4 bytes
//! u16                   version (1)
//! f64                   sampling rate, Hz
//! u16                   channel count C
//! C x (u16 len, utf-8)  channel names
//! i64                   op number
//! f64                   t0 offset, ms
//! C x (u64 n, n x f32)  channel samples, in name order
//! ```
//!
//! Channel names map to roles (vibration, contact A/B/C) through a
//! [`ChannelMap`], so external layouts only need a different map.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::eval::StageBounds;
use crate::ground_truth::{ContactChannel, Pole};
use crate::record::OperationRecord;

pub const MAGIC: &[u8; 4] = b"CBKM";
pub const FORMAT_VERSION: u16 = 1;
pub const CORPUS_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordFormat {
    Csv,
    #[default]
    Bin,
}

impl RecordFormat {
    pub fn extension(self) -> &'static str {
        match self {
            RecordFormat::Csv => "csv",
            RecordFormat::Bin => "bin",
        }
    }
}

impl FromStr for RecordFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(RecordFormat::Csv),
            "bin" => Ok(RecordFormat::Bin),
            other => Err(Error::config(format!("unknown record format {other:?}"))),
        }
    }
}

/// Channel name for each role.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelMap {
    pub vibration: String,
    #[serde(rename = "contact_A")]
    pub contact_a: String,
    #[serde(rename = "contact_B")]
    pub contact_b: String,
    #[serde(rename = "contact_C")]
    pub contact_c: String,
}

impl Default for ChannelMap {
    fn default() -> Self {
        Self {
            vibration: "vibration".into(),
            contact_a: "contact_A".into(),
            contact_b: "contact_B".into(),
            contact_c: "contact_C".into(),
        }
    }
}

impl ChannelMap {
    pub fn contact(&self, pole: Pole) -> &str {
        match pole {
            Pole::A => &self.contact_a,
            Pole::B => &self.contact_b,
            Pole::C => &self.contact_c,
        }
    }
}

/// Decoded file content before role mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordFile {
    pub version: u16,
    pub fs_hz: f64,
    pub op_number: i64,
    pub t0_offset_ms: f64,
    pub channels: Vec<(String, Vec<f32>)>,
}

impl RecordFile {
    fn validate(&self) -> Result<()> {
        if !(self.fs_hz.is_finite() && self.fs_hz > 0.0) {
            return Err(Error::data(format!("sampling rate {} is not positive", self.fs_hz)));
        }
        if !self.t0_offset_ms.is_finite() {
            return Err(Error::data("t0 offset is not finite"));
        }
        if self.channels.is_empty() {
            return Err(Error::data("record has no channels"));
        }
        let (first_name, first) = &self.channels[0];
        for (name, data) in &self.channels {
            if data.is_empty() {
                return Err(Error::data(format!("channel {name:?} is empty")));
            }
            if data.len() != first.len() {
                return Err(Error::data(format!(
                    "channel {name:?} has {} samples but {first_name:?} has {}",
                    data.len(),
                    first.len()
                )));
            }
            if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
                return Err(Error::data(format!("channel {name:?} non-finite sample at {pos}")));
            }
        }
        let mut names: Vec<&str> = self.channels.iter().map(|(n, _)| n.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::data(format!("duplicate channel name {:?}", w[0])));
        }
        Ok(())
    }

    fn channel(&self, name: &str) -> Option<&[f32]> {
        self.channels.iter().find(|(n, _)| n == name).map(|(_, d)| d.as_slice())
    }

    pub fn from_record(rec: &OperationRecord, map: &ChannelMap) -> Result<Self> {
        rec.validate()?;
        let narrow = |xs: &[f64]| xs.iter().map(|&v| v as f32).collect::<Vec<f32>>();
        let mut channels = vec![(map.vibration.clone(), narrow(rec.vibration.samples()))];
        let mut contacts: Vec<&ContactChannel> = rec.contacts.iter().collect();
        contacts.sort_by_key(|c| c.pole);
        for ch in contacts {
            channels.push((map.contact(ch.pole).to_string(), narrow(&ch.voltage)));
        }
        let file = Self {
            version: FORMAT_VERSION,
            fs_hz: rec.sampling_rate_hz(),
            op_number: rec.op_number,
            t0_offset_ms: rec.vibration.t0_offset_ms(),
            channels,
        };
        file.validate()?;
        Ok(file)
    }

    pub fn into_record(self, map: &ChannelMap) -> Result<OperationRecord> {
        let widen = |xs: &[f32]| xs.iter().map(|&v| v as f64).collect::<Vec<f64>>();
        let vib = self
            .channel(&map.vibration)
            .ok_or_else(|| Error::data(format!("record has no vibration channel {:?}", map.vibration)))?;
        let vibration = Waveform::with_offset(widen(vib), self.fs_hz, self.t0_offset_ms)?;
        let contacts = Pole::ALL
            .iter()
            .filter_map(|&pole| {
                self.channel(map.contact(pole)).map(|d| ContactChannel {
                    pole,
                    voltage: widen(d),
                    sampling_rate_hz: self.fs_hz,
                    t0_offset_ms: self.t0_offset_ms,
                })
            })
            .collect();
        OperationRecord::new(self.op_number, vibration, contacts)
    }

    pub fn encode(&self, format: RecordFormat) -> Result<Vec<u8>> {
        self.validate()?;
        Ok(match format {
            RecordFormat::Bin => self.encode_bin(),
            RecordFormat::Csv => self.encode_csv().into_bytes(),
        })
    }

    fn encode_bin(&self) -> Vec<u8> {
        let samples: usize = self.channels.iter().map(|(_, d)| d.len()).sum();
        let mut out = Vec::with_capacity(64 + 4 * samples);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&self.fs_hz.to_le_bytes());
        out.extend_from_slice(&(self.channels.len() as u16).to_le_bytes());
        for (name, _) in &self.channels {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
        }
        out.extend_from_slice(&self.op_number.to_le_bytes());
        out.extend_from_slice(&self.t0_offset_ms.to_le_bytes());
        for (_, data) in &self.channels {
            out.extend_from_slice(&(data.len() as u64).to_le_bytes());
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    fn encode_csv(&self) -> String {
        use std::fmt::Write;
        let n = self.channels[0].1.len();
        let mut out = String::with_capacity(16 * n * self.channels.len() + 128);
        let _ = writeln!(out, "# format=cbkm-csv");
        let _ = writeln!(out, "# version={}", self.version);
        let _ = writeln!(out, "# fs_hz={}", self.fs_hz);
        let _ = writeln!(out, "# op_number={}", self.op_number);
        let _ = writeln!(out, "# t0_offset_ms={}", self.t0_offset_ms);
        let names: Vec<&str> = self.channels.iter().map(|(n, _)| n.as_str()).collect();
        let _ = writeln!(out, "{}", names.join(","));
        for i in 0..n {
            for (c, (_, data)) in self.channels.iter().enumerate() {
                if c > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{}", data[i]);
            }
            out.push('\n');
        }
        out
    }

    /// Decodes either format, picked by the leading magic bytes.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let file = if bytes.starts_with(MAGIC) {
            decode_bin(bytes)?
        } else {
            decode_csv(bytes)?
        };
        if file.version != FORMAT_VERSION {
            return Err(Error::parse(4, format!("unsupported format version {}", file.version)));
        }
        file.validate().map_err(|e| match e {
            Error::Data(m) => Error::parse(0, m),
            other => other,
        })?;
        Ok(file)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::parse(
                self.pos as u64,
                format!("truncated {what}: need {n} bytes, {} left", self.bytes.len() - self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array(what)?))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array(what)?))
    }

    fn i64(&mut self, what: &str) -> Result<i64> {
        Ok(i64::from_le_bytes(self.array(what)?))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array(what)?))
    }
}

fn decode_bin(bytes: &[u8]) -> Result<RecordFile> {
    let mut r = Reader { bytes, pos: 0 };
    r.take(4, "magic")?;
    let version = r.u16("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::parse(4, format!("unsupported format version {version}")));
    }
    let fs_at = r.pos as u64;
    let fs_hz = r.f64("sampling rate")?;
    if !(fs_hz.is_finite() && fs_hz > 0.0) {
        return Err(Error::parse(fs_at, format!("sampling rate {fs_hz} is not positive")));
    }
    let count = r.u16("channel count")? as usize;
    let mut names = Vec::with_capacity(count);
    for _ in 0..count {
        let len = r.u16("channel name length")? as usize;
        let at = r.pos as u64;
        let raw = r.take(len, "channel name")?;
        let name = std::str::from_utf8(raw).map_err(|_| Error::parse(at, "channel name is not valid UTF-8"))?;
        names.push(name.to_string());
    }
    let op_number = r.i64("op number")?;
    let t0_offset_ms = r.f64("t0 offset")?;
    let mut channels = Vec::with_capacity(count);
    for name in names {
        let at = r.pos as u64;
        let n = r.u64("sample count")?;
        let remaining = (bytes.len() - r.pos) as u64;
        if n.checked_mul(4).is_none_or(|need| need > remaining) {
            return Err(Error::parse(
                at,
                format!("channel {name:?} declares {n} samples but only {remaining} bytes remain"),
            ));
        }
        let data_at = r.pos;
        let raw = r.take(n as usize * 4, "samples")?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
            .collect();
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::parse(
                (data_at + 4 * pos) as u64,
                format!("channel {name:?} non-finite sample at index {pos}"),
            ));
        }
        channels.push((name, data));
    }
    if r.pos != bytes.len() {
        return Err(Error::parse(
            r.pos as u64,
            format!("{} trailing bytes after channel data", bytes.len() - r.pos),
        ));
    }
    Ok(RecordFile {
        version,
        fs_hz,
        op_number,
        t0_offset_ms,
        channels,
    })
}

fn decode_csv(bytes: &[u8]) -> Result<RecordFile> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::parse(e.valid_up_to() as u64, "record is neither binary nor UTF-8 CSV"))?;
    let mut version = None;
    let mut fs_hz = None;
    let mut op_number = None;
    let mut t0_offset_ms = 0.0;
    let mut names: Option<Vec<String>> = None;
    let mut columns: Vec<Vec<f32>> = Vec::new();
    // a channel that has ended (empty cell) must stay empty
    let mut ended: Vec<bool> = Vec::new();

    let mut offset = 0usize;
    for raw_line in text.split_inclusive('\n') {
        let at = offset as u64;
        offset += raw_line.len();
        let line = raw_line.trim_end_matches(['\n', '\r']);
        if line.trim().is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            if names.is_some() {
                return Err(Error::parse(at, "header line after column names"));
            }
            let Some((key, value)) = meta.split_once('=') else {
                continue;
            };
            let value = value.trim();
            let bad = |what: &str| Error::parse(at, format!("invalid {what} {value:?}"));
            match key.trim() {
                "format" if value != "cbkm-csv" => return Err(bad("format")),
                "version" => version = Some(value.parse::<u16>().map_err(|_| bad("version"))?),
                "fs_hz" => fs_hz = Some(value.parse::<f64>().map_err(|_| bad("fs_hz"))?),
                "op_number" => op_number = Some(value.parse::<i64>().map_err(|_| bad("op_number"))?),
                "t0_offset_ms" => t0_offset_ms = value.parse::<f64>().map_err(|_| bad("t0_offset_ms"))?,
                _ => {}
            }
            continue;
        }
        let Some(cols) = &names else {
            let parsed: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
            if parsed.iter().any(|n| n.is_empty()) {
                return Err(Error::parse(at, "empty channel name in column header"));
            }
            columns = vec![Vec::new(); parsed.len()];
            ended = vec![false; parsed.len()];
            names = Some(parsed);
            continue;
        };
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() > cols.len() {
            return Err(Error::parse(
                at,
                format!("row has {} cells for {} channels", cells.len(), cols.len()),
            ));
        }
        for c in 0..cols.len() {
            let cell = cells.get(c).map(|s| s.trim()).unwrap_or("");
            if cell.is_empty() {
                ended[c] = true;
                continue;
            }
            if ended[c] {
                return Err(Error::parse(at, format!("channel {:?} resumes after a gap", cols[c])));
            }
            let v: f32 = cell
                .parse()
                .map_err(|_| Error::parse(at, format!("channel {:?}: bad number {cell:?}", cols[c])))?;
            if !v.is_finite() {
                return Err(Error::parse(at, format!("channel {:?}: non-finite sample", cols[c])));
            }
            columns[c].push(v);
        }
    }

    let names = names.ok_or_else(|| Error::parse(offset as u64, "missing column header"))?;
    let version = version.ok_or_else(|| Error::parse(0, "missing version header"))?;
    let fs_hz = fs_hz.ok_or_else(|| Error::parse(0, "missing fs_hz header"))?;
    let op_number = op_number.ok_or_else(|| Error::parse(0, "missing op_number header"))?;
    if let Some(c) = (1..names.len()).find(|&c| columns[c].len() != columns[0].len()) {
        return Err(Error::parse(
            0,
            format!(
                "channel length mismatch: {:?} has {} samples but {:?} has {}",
                names[c],
                columns[c].len(),
                names[0],
                columns[0].len()
            ),
        ));
    }
    Ok(RecordFile {
        version,
        fs_hz,
        op_number,
        t0_offset_ms,
        channels: names.into_iter().zip(columns).collect(),
    })
}

pub fn read_record(path: &Path, map: &ChannelMap) -> Result<OperationRecord> {
    let bytes = fs::read(path)?;
    RecordFile::decode(&bytes)?.into_record(map)
}

pub fn write_record(rec: &OperationRecord, path: &Path, format: RecordFormat, map: &ChannelMap) -> Result<()> {
    let bytes = RecordFile::from_record(rec, map)?.encode(format)?;
    fs::write(path, bytes)?;
    Ok(())
}

/// Injected key moments of a synthetic operation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truths {
    pub t1_ms: f64,
    pub t2_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub op_number: i64,
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truths: Option<Truths>,
}

/// Corpus index: `{corpus_version, fs_hz, ops: [{op_number, path, truths?}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub corpus_version: u32,
    pub fs_hz: f64,
    pub ops: Vec<ManifestEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage_bounds: Option<StageBounds>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<serde_json::Value>,
}

impl Manifest {
    pub fn validate(&self) -> Result<()> {
        if self.corpus_version != CORPUS_VERSION {
            return Err(Error::data(format!(
                "unsupported corpus version {}",
                self.corpus_version
            )));
        }
        if !(self.fs_hz.is_finite() && self.fs_hz > 0.0) {
            return Err(Error::data("manifest fs_hz must be positive"));
        }
        if let Some(w) = self.ops.windows(2).find(|w| w[0].op_number >= w[1].op_number) {
            return Err(Error::data(format!(
                "manifest op numbers must strictly increase ({} then {})",
                w[0].op_number, w[1].op_number
            )));
        }
        Ok(())
    }
}

/// A manifest plus the directory its relative paths resolve against.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub root: PathBuf,
    pub manifest: Manifest,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl Corpus {
    /// Opens `path` as a manifest file or as a directory holding `manifest.json`.
    pub fn open(path: &Path) -> Result<Self> {
        let file = if path.is_dir() {
            path.join(MANIFEST_FILE)
        } else {
            path.to_path_buf()
        };
        let manifest: Manifest = serde_json::from_slice(&fs::read(&file)?)?;
        manifest.validate()?;
        let root = file.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { root, manifest })
    }

    pub fn record_path(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.path)
    }

    pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<PathBuf> {
        manifest.validate()?;
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(manifest)? + "\n")?;
        Ok(path)
    }
}
