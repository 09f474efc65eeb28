//! Image archive ingestion.
//!
//! Archives (`.zip`, or `.tar` optionally gzip-compressed) are unpacked in
//! memory, every regular file is either accepted as an image patch or
//! reported as a warning, and the accepted patches are sorted by filename.
//! Ground truth may come from a `labels.csv` inside the archive and/or a
//! separately supplied manifest; the separate one wins per filename.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{self, Cursor, Read};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ids::{DatasetId, PatchId};
use crate::model::ClassLabel;

/// Basename of the ground-truth table recognised inside an archive.
pub const EMBEDDED_MANIFEST: &str = "labels.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageFormat {
    Png,
    Jpeg,
}

impl fmt::Display for ImageFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ImageFormat::Png => "png",
            ImageFormat::Jpeg => "jpeg",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub width: u32,
    pub height: u32,
    pub format: ImageFormat,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ImageError {
    #[error("unsupported image format")]
    UnsupportedFormat,
    #[error("truncated image")]
    TruncatedImage,
    #[error("invalid image header: {0}")]
    InvalidHeader(&'static str),
}

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0D, 0x0A, 0x1A, 0x0A];
const JPEG_SOI: [u8; 2] = [0xFF, 0xD8];

fn be_u32(b: &[u8]) -> u32 {
    u32::from_be_bytes([b[0], b[1], b[2], b[3]])
}

fn be_u16(b: &[u8]) -> u16 {
    u16::from_be_bytes([b[0], b[1]])
}

/// Reads image dimensions and format from the container structure without
/// decoding pixel data. The chunk/segment layout is walked far enough to
/// detect truncation.
pub fn validate_image(bytes: &[u8]) -> Result<ImageInfo, ImageError> {
    if bytes.is_empty() {
        return Err(ImageError::TruncatedImage);
    }
    if bytes.starts_with(&PNG_SIGNATURE) {
        return png_info(bytes);
    }
    if bytes.starts_with(&JPEG_SOI) {
        return jpeg_info(bytes);
    }
    // A short prefix of a known signature is a cut-off file, not a foreign one.
    if PNG_SIGNATURE.starts_with(bytes) || JPEG_SOI.starts_with(bytes) {
        return Err(ImageError::TruncatedImage);
    }
    Err(ImageError::UnsupportedFormat)
}

fn png_info(bytes: &[u8]) -> Result<ImageInfo, ImageError> {
    // signature(8) + length(4) + "IHDR"(4) + width(4) + height(4)
    if bytes.len() < 24 {
        return Err(ImageError::TruncatedImage);
    }
    if &bytes[12..16] != b"IHDR" || be_u32(&bytes[8..12]) != 13 {
        return Err(ImageError::InvalidHeader("first PNG chunk is not IHDR"));
    }
    let width = be_u32(&bytes[16..20]);
    let height = be_u32(&bytes[20..24]);
    if width == 0 || height == 0 {
        return Err(ImageError::InvalidHeader("zero PNG dimension"));
    }

    let mut pos = 8usize;
    loop {
        if pos + 8 > bytes.len() {
            return Err(ImageError::TruncatedImage);
        }
        let len = be_u32(&bytes[pos..pos + 4]) as usize;
        let kind = &bytes[pos + 4..pos + 8];
        let end = pos
            .checked_add(12)
            .and_then(|p| p.checked_add(len))
            .ok_or(ImageError::InvalidHeader("PNG chunk length overflow"))?;
        if end > bytes.len() {
            return Err(ImageError::TruncatedImage);
        }
        if kind == b"IEND" {
            break;
        }
        pos = end;
    }

    Ok(ImageInfo {
        width,
        height,
        format: ImageFormat::Png,
    })
}

fn is_sof(marker: u8) -> bool {
    matches!(marker, 0xC0..=0xCF) && !matches!(marker, 0xC4 | 0xC8 | 0xCC)
}

fn jpeg_info(bytes: &[u8]) -> Result<ImageInfo, ImageError> {
    let mut pos = 2usize;
    let (width, height) = loop {
        if pos + 2 > bytes.len() {
            return Err(ImageError::TruncatedImage);
        }
        if bytes[pos] != 0xFF {
            return Err(ImageError::InvalidHeader("expected JPEG marker"));
        }
        let marker = bytes[pos + 1];
        match marker {
            // fill byte
            0xFF => {
                pos += 1;
                continue;
            }
            0x01 | 0xD0..=0xD7 => {
                pos += 2;
                continue;
            }
            0xD9 | 0xDA => return Err(ImageError::InvalidHeader("no JPEG frame header")),
            _ => {}
        }
        if pos + 4 > bytes.len() {
            return Err(ImageError::TruncatedImage);
        }
        let seg_len = be_u16(&bytes[pos + 2..pos + 4]) as usize;
        if seg_len < 2 {
            return Err(ImageError::InvalidHeader("JPEG segment length"));
        }
        if is_sof(marker) {
            // length(2) precision(1) height(2) width(2)
            if pos + 9 > bytes.len() {
                return Err(ImageError::TruncatedImage);
            }
            let height = be_u16(&bytes[pos + 5..pos + 7]) as u32;
            let width = be_u16(&bytes[pos + 7..pos + 9]) as u32;
            break (width, height);
        }
        pos += 2 + seg_len;
    };
    if width == 0 || height == 0 {
        return Err(ImageError::InvalidHeader("zero JPEG dimension"));
    }
    if !bytes.ends_with(&[0xFF, 0xD9]) {
        return Err(ImageError::TruncatedImage);
    }
    Ok(ImageInfo {
        width,
        height,
        format: ImageFormat::Jpeg,
    })
}

/// SHA-256 of a file's raw bytes.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ContentHash([u8; 32]);

impl ContentHash {
    pub fn of(bytes: &[u8]) -> Self {
        let digest = Sha256::digest(bytes);
        let mut out = [0u8; 32];
        out.copy_from_slice(digest.as_slice());
        Self(out)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let raw = hex::decode(s).ok()?;
        let arr: [u8; 32] = raw.try_into().ok()?;
        Some(Self(arr))
    }
}

impl fmt::Debug for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ContentHash({})", self.to_hex())
    }
}

impl fmt::Display for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for ContentHash {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for ContentHash {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        ContentHash::from_hex(&s).ok_or_else(|| serde::de::Error::custom("invalid sha-256 hex"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImagePatch {
    pub patch_id: PatchId,
    pub filename: String,
    pub width: u32,
    pub height: u32,
    pub format: ImageFormat,
    pub content_hash: ContentHash,
    #[serde(default)]
    pub ground_truth: Option<ClassLabel>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub dataset_id: DatasetId,
    pub name: String,
    pub patches: Vec<ImagePatch>,
    pub created_at: DateTime<Utc>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn patch_index(&self, patch_id: &PatchId) -> Option<usize> {
        self.patches.iter().position(|p| &p.patch_id == patch_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchiveFormat {
    Zip,
    /// POSIX tar; gzip compression is detected from the magic bytes.
    Tar,
}

impl ArchiveFormat {
    /// Guesses the container from a filename extension.
    pub fn from_filename(name: &str) -> Option<Self> {
        let lower = name.to_ascii_lowercase();
        if lower.ends_with(".zip") {
            Some(ArchiveFormat::Zip)
        } else if lower.ends_with(".tar") || lower.ends_with(".tar.gz") || lower.ends_with(".tgz")
        {
            Some(ArchiveFormat::Tar)
        } else {
            None
        }
    }
}

impl std::str::FromStr for ArchiveFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "zip" => Ok(ArchiveFormat::Zip),
            "tar" | "tgz" | "tar.gz" => Ok(ArchiveFormat::Tar),
            other => Err(format!("unknown archive format {other:?}")),
        }
    }
}

/// Filename to ground-truth label table.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub rows: BTreeMap<String, ClassLabel>,
}

impl Manifest {
    /// Parses `filename,label` rows. A leading header row with exactly those
    /// column names is skipped.
    pub fn from_csv(bytes: &[u8]) -> Result<Self, IngestError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(false)
            .trim(csv::Trim::All)
            .from_reader(bytes);
        let mut rows = BTreeMap::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| IngestError::ManifestMismatch(format!("unreadable: {e}")))?;
            if rec.len() != 2 {
                return Err(IngestError::ManifestMismatch(format!(
                    "row {} has {} columns, expected 2",
                    i + 1,
                    rec.len()
                )));
            }
            let (file, label) = (&rec[0], &rec[1]);
            if i == 0 && file.eq_ignore_ascii_case("filename") && label.eq_ignore_ascii_case("label")
            {
                continue;
            }
            if file.is_empty() || label.is_empty() {
                return Err(IngestError::ManifestMismatch(format!(
                    "row {} has an empty cell",
                    i + 1
                )));
            }
            rows.insert(normalize_path(file), ClassLabel::new(label));
        }
        Ok(Self { rows })
    }

    /// Rows of `other` replace rows of `self` with the same filename.
    pub fn overridden_by(mut self, other: &Manifest) -> Self {
        for (k, v) in &other.rows {
            self.rows.insert(k.clone(), v.clone());
        }
        self
    }
}

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    /// Separately uploaded ground truth.
    pub manifest: Option<Manifest>,
    /// Fail unless every patch ends up with a ground-truth label.
    pub require_ground_truth: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum SkipReason {
    /// The entry was consumed as the embedded ground-truth table.
    ManifestFile,
    UnsupportedFormat,
    TruncatedImage,
    InvalidImage { detail: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestWarning {
    pub entry: String,
    #[serde(flatten)]
    pub reason: SkipReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub dataset: Dataset,
    pub warnings: Vec<IngestWarning>,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("archive is empty")]
    EmptyInput,
    #[error("corrupt archive: {0}")]
    CorruptArchive(String),
    #[error("archive contains no valid images")]
    EmptyDataset,
    #[error("duplicate filename {0:?}")]
    DuplicateFilename(String),
    #[error("manifest mismatch: {0}")]
    ManifestMismatch(String),
    #[error("storing {filename}: {source}")]
    Sink {
        filename: String,
        #[source]
        source: io::Error,
    },
}

fn normalize_path(path: &str) -> String {
    let mut p = path.trim().replace('\\', "/");
    while let Some(rest) = p.strip_prefix("./") {
        p = rest.to_owned();
    }
    p.trim_start_matches('/').to_owned()
}

fn basename(path: &str) -> &str {
    path.rsplit('/').next().unwrap_or(path)
}

/// Regular-file entries of an archive, in archive order.
fn read_entries(bytes: &[u8], format: ArchiveFormat) -> Result<Vec<(String, Vec<u8>)>, IngestError> {
    let corrupt = |e: &dyn fmt::Display| IngestError::CorruptArchive(e.to_string());
    let mut out = Vec::new();
    match format {
        ArchiveFormat::Zip => {
            let mut zip = zip::ZipArchive::new(Cursor::new(bytes)).map_err(|e| corrupt(&e))?;
            for i in 0..zip.len() {
                let mut file = zip.by_index(i).map_err(|e| corrupt(&e))?;
                if !file.is_file() {
                    continue;
                }
                let name = normalize_path(file.name());
                let mut data = Vec::with_capacity(file.size() as usize);
                file.read_to_end(&mut data).map_err(|e| corrupt(&e))?;
                out.push((name, data));
            }
        }
        ArchiveFormat::Tar => {
            let reader: Box<dyn Read + '_> = if bytes.starts_with(&[0x1F, 0x8B]) {
                Box::new(flate2::read::GzDecoder::new(bytes))
            } else {
                Box::new(bytes)
            };
            let mut archive = tar::Archive::new(reader);
            for entry in archive.entries().map_err(|e| corrupt(&e))? {
                let mut entry = entry.map_err(|e| corrupt(&e))?;
                if !entry.header().entry_type().is_file() {
                    continue;
                }
                let path = entry.path().map_err(|e| corrupt(&e))?;
                let name = normalize_path(&path.to_string_lossy());
                let mut data = Vec::new();
                entry.read_to_end(&mut data).map_err(|e| corrupt(&e))?;
                out.push((name, data));
            }
        }
    }
    Ok(out)
}

fn patch_id_for(filename: &str, hash: &ContentHash) -> PatchId {
    let mut h = Sha256::new();
    h.update(filename.as_bytes());
    h.update([0u8]);
    h.update(hash.as_bytes());
    let digest = h.finalize();
    PatchId::new(hex::encode(&digest.as_slice()[..8]))
}

/// Ingests an archive and registers nothing; see [`ingest_archive_with`].
pub fn ingest_archive(
    bytes: &[u8],
    format: ArchiveFormat,
    name: &str,
    options: &IngestOptions,
) -> Result<IngestReport, IngestError> {
    ingest_archive_with(bytes, format, name, options, |_, _| Ok(()))
}

/// Ingests an archive, handing each accepted patch and its raw bytes to
/// `sink` (typically a blob store) in filename order.
pub fn ingest_archive_with<F>(
    bytes: &[u8],
    format: ArchiveFormat,
    name: &str,
    options: &IngestOptions,
    mut sink: F,
) -> Result<IngestReport, IngestError>
where
    F: FnMut(&ImagePatch, &[u8]) -> io::Result<()>,
{
    if bytes.is_empty() {
        return Err(IngestError::EmptyInput);
    }
    let entries = read_entries(bytes, format)?;

    let mut seen = BTreeSet::new();
    for (path, _) in &entries {
        if !seen.insert(path.as_str()) {
            return Err(IngestError::DuplicateFilename(path.clone()));
        }
    }

    let mut warnings = Vec::new();
    let mut embedded: Option<Manifest> = None;
    let mut accepted: Vec<(ImagePatch, Vec<u8>)> = Vec::new();

    for (path, data) in entries {
        if basename(&path) == EMBEDDED_MANIFEST {
            if embedded.is_some() {
                return Err(IngestError::ManifestMismatch(format!(
                    "more than one {EMBEDDED_MANIFEST} in archive"
                )));
            }
            embedded = Some(Manifest::from_csv(&data)?);
            warnings.push(IngestWarning {
                entry: path,
                reason: SkipReason::ManifestFile,
            });
            continue;
        }
        match validate_image(&data) {
            Ok(info) => {
                let content_hash = ContentHash::of(&data);
                let patch = ImagePatch {
                    patch_id: patch_id_for(&path, &content_hash),
                    filename: path,
                    width: info.width,
                    height: info.height,
                    format: info.format,
                    content_hash,
                    ground_truth: None,
                };
                accepted.push((patch, data));
            }
            Err(err) => {
                let reason = match err {
                    ImageError::UnsupportedFormat => SkipReason::UnsupportedFormat,
                    ImageError::TruncatedImage => SkipReason::TruncatedImage,
                    ImageError::InvalidHeader(d) => SkipReason::InvalidImage {
                        detail: d.to_owned(),
                    },
                };
                warnings.push(IngestWarning {
                    entry: path,
                    reason,
                });
            }
        }
    }

    if accepted.is_empty() {
        return Err(IngestError::EmptyDataset);
    }
    accepted.sort_by(|a, b| a.0.filename.cmp(&b.0.filename));

    let manifest = match (embedded, &options.manifest) {
        (Some(e), Some(s)) => Some(e.overridden_by(s)),
        (Some(e), None) => Some(e),
        (None, Some(s)) => Some(s.clone()),
        (None, None) => None,
    };
    if let Some(manifest) = manifest {
        apply_manifest(&mut accepted, &manifest)?;
    }
    if options.require_ground_truth {
        let missing: Vec<&str> = accepted
            .iter()
            .filter(|(p, _)| p.ground_truth.is_none())
            .map(|(p, _)| p.filename.as_str())
            .collect();
        if !missing.is_empty() {
            return Err(IngestError::ManifestMismatch(format!(
                "{} patches lack a ground-truth row (first: {})",
                missing.len(),
                missing[0]
            )));
        }
    }

    for (patch, data) in &accepted {
        sink(patch, data).map_err(|source| IngestError::Sink {
            filename: patch.filename.clone(),
            source,
        })?;
    }

    Ok(IngestReport {
        dataset: Dataset {
            dataset_id: DatasetId::new(uuid::Uuid::new_v4().to_string()),
            name: name.to_owned(),
            patches: accepted.into_iter().map(|(p, _)| p).collect(),
            created_at: crate::time::now_millis(),
        },
        warnings,
    })
}

/// Rows match a patch by exact path, or by basename when exactly one patch
/// has that basename.
fn apply_manifest(
    patches: &mut [(ImagePatch, Vec<u8>)],
    manifest: &Manifest,
) -> Result<(), IngestError> {
    for (file, label) in &manifest.rows {
        let idx = match patches.iter().position(|(p, _)| &p.filename == file) {
            Some(i) => i,
            None => {
                let hits: Vec<usize> = patches
                    .iter()
                    .enumerate()
                    .filter(|(_, (p, _))| basename(&p.filename) == file)
                    .map(|(i, _)| i)
                    .collect();
                match hits.as_slice() {
                    [one] => *one,
                    [] => {
                        return Err(IngestError::ManifestMismatch(format!(
                            "manifest names {file:?}, which is not an image in the archive"
                        )))
                    }
                    _ => {
                        return Err(IngestError::ManifestMismatch(format!(
                            "manifest name {file:?} is ambiguous"
                        )))
                    }
                }
            }
        };
        patches[idx].0.ground_truth = Some(label.clone());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_bytes_are_truncated() {
        assert_eq!(validate_image(&[]), Err(ImageError::TruncatedImage));
    }

    #[test]
    fn signature_prefix_is_truncated() {
        assert_eq!(validate_image(&PNG_SIGNATURE[..5]), Err(ImageError::TruncatedImage));
        assert_eq!(validate_image(&[0xFF]), Err(ImageError::TruncatedImage));
    }

    #[test]
    fn foreign_bytes_are_unsupported() {
        assert_eq!(validate_image(b"GIF89a......"), Err(ImageError::UnsupportedFormat));
        assert_eq!(validate_image(b"x"), Err(ImageError::UnsupportedFormat));
    }

    #[test]
    fn hand_built_png_header() {
        let mut b = PNG_SIGNATURE.to_vec();
        b.extend_from_slice(&13u32.to_be_bytes());
        b.extend_from_slice(b"IHDR");
        b.extend_from_slice(&128u32.to_be_bytes());
        b.extend_from_slice(&128u32.to_be_bytes());
        b.extend_from_slice(&[8, 6, 0, 0, 0]);
        b.extend_from_slice(&[0; 4]); // crc, unchecked
        assert_eq!(validate_image(&b), Err(ImageError::TruncatedImage));
        b.extend_from_slice(&0u32.to_be_bytes());
        b.extend_from_slice(b"IEND");
        b.extend_from_slice(&[0; 4]);
        assert_eq!(
            validate_image(&b),
            Ok(ImageInfo {
                width: 128,
                height: 128,
                format: ImageFormat::Png
            })
        );
    }

    #[test]
    fn manifest_csv_with_and_without_header() {
        let m = Manifest::from_csv(b"filename,label\na.png,normal\n./b.png, atypical \n").unwrap();
        assert_eq!(m.rows.len(), 2);
        assert_eq!(m.rows["b.png"], ClassLabel::new("atypical"));
        let m = Manifest::from_csv(b"a.png,normal\n").unwrap();
        assert_eq!(m.rows.len(), 1);
        assert!(Manifest::from_csv(b"a.png\n").is_err());
    }

    #[test]
    fn separate_manifest_wins() {
        let embedded = Manifest::from_csv(b"a.png,x\nb.png,y\n").unwrap();
        let separate = Manifest::from_csv(b"a.png,z\n").unwrap();
        let merged = embedded.overridden_by(&separate);
        assert_eq!(merged.rows["a.png"].as_str(), "z");
        assert_eq!(merged.rows["b.png"].as_str(), "y");
    }

    #[test]
    fn path_normalization() {
        assert_eq!(normalize_path("./dir/a.png"), "dir/a.png");
        assert_eq!(normalize_path("/a.png"), "a.png");
        assert_eq!(basename("dir/sub/a.png"), "a.png");
    }

    #[test]
    fn empty_input_rejected() {
        assert!(matches!(
            ingest_archive(&[], ArchiveFormat::Zip, "x", &IngestOptions::default()),
            Err(IngestError::EmptyInput)
        ));
    }

    #[test]
    fn garbage_zip_is_corrupt() {
        assert!(matches!(
            ingest_archive(b"not a zip at all", ArchiveFormat::Zip, "x", &IngestOptions::default()),
            Err(IngestError::CorruptArchive(_))
        ));
    }

    #[test]
    fn archive_format_from_filename() {
        assert_eq!(ArchiveFormat::from_filename("x.ZIP"), Some(ArchiveFormat::Zip));
        assert_eq!(ArchiveFormat::from_filename("x.tar.gz"), Some(ArchiveFormat::Tar));
        assert_eq!(ArchiveFormat::from_filename("x.rar"), None);
    }
}
