//! Reading and writing the engine's files: COCO image indexes, binary depth
//! maps, oracle detection lists and the caption-record JSONL output.
//!
//! Depth maps use a small fixed layout:
//!
//! | offset | size | content                          |
//! |--------|------|----------------------------------|
//! | 0      | 4    | magic `DCED`                     |
//! | 4      | 1    | version `0x01`                   |
//! | 5      | 4    | width, u32 little-endian         |
//! | 9      | 4    | height, u32 little-endian        |
//! | 13     | 4·w·h| f32 little-endian values, row-major |

use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::model::{BoundingBox, CaptionRecord, DepthMap, Detection, DetectionSource, ImageRef};

pub const DEPTH_MAGIC: &[u8; 4] = b"DCED";
pub const DEPTH_VERSION: u8 = 0x01;
pub const DEPTH_HEADER_LEN: usize = 13;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("index error in {path}: {detail}")]
    Index { path: PathBuf, detail: String },
    #[error("format error in {path}: {detail}")]
    Format { path: PathBuf, detail: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl DatasetError {
    fn io(path: &Path, source: io::Error) -> Self {
        DatasetError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn format(path: &Path, detail: impl Into<String>) -> Self {
        DatasetError::Format {
            path: path.to_path_buf(),
            detail: detail.into(),
        }
    }

    fn index(path: &Path, detail: impl Into<String>) -> Self {
        DatasetError::Index {
            path: path.to_path_buf(),
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetIndex {
    pub images: Vec<ImageRef>,
    /// Directory image file names are relative to.
    pub root: PathBuf,
}

impl DatasetIndex {
    pub fn with_root(mut self, root: impl Into<PathBuf>) -> Self {
        self.root = root.into();
        self
    }

    pub fn image_path(&self, image: &ImageRef) -> PathBuf {
        self.root.join(&image.file_name)
    }
}

#[derive(Deserialize)]
struct CocoFile {
    images: Vec<serde_json::Value>,
}

/// Reads the `images` section of a COCO annotation file. Other sections are ignored.
pub fn load_coco_index(path: &Path) -> Result<DatasetIndex, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
    parse_coco_index(&text, path)
}

fn parse_coco_index(text: &str, path: &Path) -> Result<DatasetIndex, DatasetError> {
    let coco: CocoFile = serde_json::from_str(text)
        .map_err(|e| DatasetError::index(path, format!("malformed JSON: {e}")))?;
    let mut seen = HashSet::new();
    let mut images = Vec::with_capacity(coco.images.len());
    for (n, entry) in coco.images.iter().enumerate() {
        let uint = |field: &str| -> Result<u64, DatasetError> {
            entry.get(field).and_then(|v| v.as_u64()).ok_or_else(|| {
                DatasetError::index(
                    path,
                    format!("images[{n}]: missing or non-integer field \"{field}\""),
                )
            })
        };
        let id = uint("id")?;
        let file_name = entry
            .get("file_name")
            .and_then(|v| v.as_str())
            .filter(|s| !s.is_empty())
            .ok_or_else(|| {
                DatasetError::index(path, format!("images[{n}] (id {id}): missing field \"file_name\""))
            })?;
        let dim = |field: &str| -> Result<u32, DatasetError> {
            let v = uint(field)?;
            u32::try_from(v).ok().filter(|v| *v > 0).ok_or_else(|| {
                DatasetError::index(path, format!("images[{n}] (id {id}): {field} must be a positive u32"))
            })
        };
        let (width, height) = (dim("width")?, dim("height")?);
        if !seen.insert(id) {
            return Err(DatasetError::index(path, format!("duplicate image id {id}")));
        }
        images.push(ImageRef::new(id, file_name, width, height));
    }
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(DatasetIndex { images, root })
}

pub fn encode_depth_map(map: &DepthMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(DEPTH_HEADER_LEN + 4 * map.values().len());
    out.extend_from_slice(DEPTH_MAGIC);
    out.push(DEPTH_VERSION);
    out.extend_from_slice(&map.width().to_le_bytes());
    out.extend_from_slice(&map.height().to_le_bytes());
    for v in map.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decodes the binary depth layout. `origin` only labels errors.
pub fn decode_depth_map(bytes: &[u8], origin: &Path) -> Result<DepthMap, DatasetError> {
    if bytes.len() < DEPTH_HEADER_LEN {
        return Err(DatasetError::format(origin, "truncated depth header"));
    }
    if &bytes[..4] != DEPTH_MAGIC {
        return Err(DatasetError::format(origin, "bad magic, expected DCED"));
    }
    if bytes[4] != DEPTH_VERSION {
        return Err(DatasetError::format(
            origin,
            format!("unsupported depth format version {}", bytes[4]),
        ));
    }
    let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let (width, height) = (u32_at(5), u32_at(9));
    let count = width as usize * height as usize;
    let payload = &bytes[DEPTH_HEADER_LEN..];
    if payload.len() != count * 4 {
        return Err(DatasetError::format(
            origin,
            format!(
                "payload has {} bytes, header promises {width}x{height} floats ({} bytes)",
                payload.len(),
                count * 4
            ),
        ));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    DepthMap::new(width, height, values).map_err(|e| DatasetError::format(origin, e.to_string()))
}

pub fn load_depth_map(path: &Path) -> Result<DepthMap, DatasetError> {
    let bytes = std::fs::read(path).map_err(|e| DatasetError::io(path, e))?;
    decode_depth_map(&bytes, path)
}

pub fn write_depth_map(path: &Path, map: &DepthMap) -> Result<(), DatasetError> {
    std::fs::write(path, encode_depth_map(map)).map_err(|e| DatasetError::io(path, e))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OracleDetection {
    #[serde(rename = "box")]
    bbox: BoundingBox,
    category: String,
    confidence: f64,
    #[serde(default)]
    source: Option<DetectionSource>,
}

#[derive(Deserialize)]
struct OracleLine {
    image_id: u64,
    detections: Vec<OracleDetection>,
}

/// Reads per-image ground-truth detections, one JSON object per line.
pub fn load_oracle_detections(path: &Path) -> Result<BTreeMap<u64, Vec<Detection>>, DatasetError> {
    let file = File::open(path).map_err(|e| DatasetError::io(path, e))?;
    let mut out: BTreeMap<u64, Vec<Detection>> = BTreeMap::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| DatasetError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: OracleLine = serde_json::from_str(&line)
            .map_err(|e| DatasetError::format(path, format!("line {line_no}: {e}")))?;
        let entry = out.entry(parsed.image_id).or_default();
        for d in parsed.detections {
            if !(0.0..=1.0).contains(&d.confidence) {
                return Err(DatasetError::format(
                    path,
                    format!("line {line_no}: confidence {} outside [0,1]", d.confidence),
                ));
            }
            if d.category.is_empty() {
                return Err(DatasetError::format(path, format!("line {line_no}: empty category")));
            }
            if matches!(d.source, Some(s) if s != DetectionSource::OracleFile) {
                return Err(DatasetError::format(
                    path,
                    format!("line {line_no}: source must be \"oracle_file\""),
                ));
            }
            entry.push(Detection::new(d.bbox, d.category, d.confidence, DetectionSource::OracleFile));
        }
    }
    Ok(out)
}

/// A line of a record file that did not parse.
#[derive(Debug, Clone, PartialEq)]
pub struct MalformedLine {
    /// 1-based line number.
    pub line: usize,
    /// Byte offset of the start of the line.
    pub offset: u64,
    pub error: String,
}

/// Streaming reader over a record JSONL file.
pub struct RecordReader<R> {
    inner: R,
    line: usize,
    offset: u64,
    buf: String,
}

impl<R: BufRead> RecordReader<R> {
    pub fn new(inner: R) -> Self {
        RecordReader {
            inner,
            line: 0,
            offset: 0,
            buf: String::new(),
        }
    }
}

impl<R: BufRead> Iterator for RecordReader<R> {
    type Item = io::Result<Result<CaptionRecord, MalformedLine>>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            let start = self.offset;
            let n = match self.inner.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(n) => n,
                Err(e) => return Some(Err(e)),
            };
            self.offset += n as u64;
            self.line += 1;
            let text = self.buf.trim();
            if text.is_empty() {
                continue;
            }
            return Some(Ok(serde_json::from_str(text).map_err(|e| MalformedLine {
                line: self.line,
                offset: start,
                error: e.to_string(),
            })));
        }
    }
}

#[derive(Debug, Default)]
pub struct RecordScan {
    pub records: Vec<CaptionRecord>,
    pub malformed: Vec<MalformedLine>,
}

/// Reads every record in file order, collecting malformed lines alongside.
pub fn read_records(path: &Path) -> Result<RecordScan, DatasetError> {
    let file = File::open(path).map_err(|e| DatasetError::io(path, e))?;
    let mut scan = RecordScan::default();
    for item in RecordReader::new(BufReader::new(file)) {
        match item.map_err(|e| DatasetError::io(path, e))? {
            Ok(r) => scan.records.push(r),
            Err(m) => scan.malformed.push(m),
        }
    }
    Ok(scan)
}

/// Appends records to a JSONL file, one write per line.
pub struct RecordWriter {
    file: File,
    path: PathBuf,
}

impl RecordWriter {
    pub fn open_append(path: &Path) -> Result<Self, DatasetError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| DatasetError::io(path, e))?;
        Ok(RecordWriter {
            file,
            path: path.to_path_buf(),
        })
    }

    pub fn append(&mut self, record: &CaptionRecord) -> Result<(), DatasetError> {
        let mut line = serde_json::to_string(record)
            .map_err(|e| DatasetError::format(&self.path, e.to_string()))?;
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|e| DatasetError::io(&self.path, e))
    }
}

pub fn write_records(path: &Path, records: &[CaptionRecord]) -> Result<(), DatasetError> {
    let mut w = RecordWriter::open_append(path)?;
    records.iter().try_for_each(|r| w.append(r))
}

/// If the final line of a record file is malformed (typically a write cut
/// short by a crash), truncates the file to drop it and returns the report.
pub fn truncate_malformed_tail(path: &Path) -> Result<Option<MalformedLine>, DatasetError> {
    let scan_file = File::open(path).map_err(|e| DatasetError::io(path, e))?;
    let mut last = None;
    for item in RecordReader::new(BufReader::new(scan_file)) {
        last = Some(item.map_err(|e| DatasetError::io(path, e))?);
    }
    match last {
        Some(Err(bad)) => {
            let file = OpenOptions::new()
                .write(true)
                .open(path)
                .map_err(|e| DatasetError::io(path, e))?;
            file.set_len(bad.offset).map_err(|e| DatasetError::io(path, e))?;
            Ok(Some(bad))
        }
        _ => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coco_index_examples() {
        let p = Path::new("/data/ann.json");
        let idx = parse_coco_index(
            r#"{"images":[{"id":1,"file_name":"a.jpg","width":640,"height":480}],"annotations":[]}"#,
            p,
        )
        .unwrap();
        assert_eq!(idx.images, vec![ImageRef::new(1, "a.jpg", 640, 480)]);
        assert_eq!(idx.root, Path::new("/data"));

        let err = parse_coco_index(r#"{"images":[{"id":1,"file_name":"a.jpg","height":480}]}"#, p)
            .unwrap_err();
        assert!(matches!(err, DatasetError::Index { .. }));
        assert!(err.to_string().contains("width"));

        let dup = r#"{"images":[{"id":1,"file_name":"a.jpg","width":1,"height":1},
                               {"id":1,"file_name":"b.jpg","width":1,"height":1}]}"#;
        assert!(parse_coco_index(dup, p).unwrap_err().to_string().contains("duplicate"));
        assert!(matches!(parse_coco_index("{", p), Err(DatasetError::Index { .. })));
    }

    #[test]
    fn depth_decode_examples() {
        let p = Path::new("d.dced");
        let one = DepthMap::new(1, 1, vec![3.5]).unwrap();
        let bytes = encode_depth_map(&one);
        assert_eq!(bytes.len(), 17);
        assert_eq!(&bytes[..5], b"DCED\x01");
        assert_eq!(decode_depth_map(&bytes, p).unwrap().values(), &[3.5]);

        let mut bad = bytes.clone();
        bad[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode_depth_map(&bad, p), Err(DatasetError::Format { .. })));

        let four = encode_depth_map(&DepthMap::uniform(2, 2, 1.0).unwrap());
        assert!(matches!(decode_depth_map(&four[..four.len() - 4], p), Err(DatasetError::Format { .. })));

        let mut nan = encode_depth_map(&one);
        nan[13..17].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(decode_depth_map(&nan, p), Err(DatasetError::Format { .. })));
    }

    #[test]
    fn oracle_detection_examples() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("o.jsonl");
        std::fs::write(&p, "").unwrap();
        assert!(load_oracle_detections(&p).unwrap().is_empty());

        std::fs::write(
            &p,
            r#"{"image_id":3,"detections":[{"box":[0,0,4,4],"category":"dog","confidence":0.9,"source":"oracle_file"}]}"#,
        )
        .unwrap();
        let m = load_oracle_detections(&p).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m[&3][0].source, DetectionSource::OracleFile);

        std::fs::write(
            &p,
            "\n{\"image_id\":3,\"detections\":[{\"box\":[0,0,4,4],\"category\":\"dog\",\"confidence\":1.5}]}\n",
        )
        .unwrap();
        let err = load_oracle_detections(&p).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }
}
