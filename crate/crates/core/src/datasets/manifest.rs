use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::DatasetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Mpox,
    OtherSkin,
    Normal,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Mpox, Label::OtherSkin, Label::Normal];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Mpox => "mpox",
            Label::OtherSkin => "other_skin",
            Label::Normal => "normal",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Label::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Real,
    Synthetic,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Real => "real",
            Source::Synthetic => "synthetic",
        }
    }
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "real" => Ok(Source::Real),
            "synthetic" => Ok(Source::Synthetic),
            other => Err(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(other.to_string()),
        }
    }
}

/// One labeled image. `sha256` is lowercase hex, `phash` a 16-digit hex
/// difference hash.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub path: String,
    pub label: Label,
    pub source: Source,
    pub sha256: String,
    pub phash: String,
    #[serde(default)]
    pub split: Option<Split>,
}

impl SampleRecord {
    pub fn phash_bits(&self) -> Result<u64, DatasetError> {
        u64::from_str_radix(&self.phash, 16).map_err(|_| DatasetError::Invalid(format!("record {}: bad phash {:?}", self.id, self.phash)))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub records: Vec<SampleRecord>,
    /// Free-text source notes; serialized as leading `#` lines.
    pub provenance: String,
}

impl DatasetManifest {
    pub fn new(records: Vec<SampleRecord>) -> Result<Self, DatasetError> {
        let m = Self {
            records,
            provenance: String::new(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let mut ids = HashSet::new();
        let mut paths = HashSet::new();
        for r in &self.records {
            if !ids.insert(r.id.as_str()) {
                return Err(DatasetError::Invalid(format!("duplicate id {:?}", r.id)));
            }
            if !paths.insert(r.path.as_str()) {
                return Err(DatasetError::Invalid(format!("duplicate path {:?}", r.path)));
            }
            if r.source == Source::Synthetic && r.label != Label::Mpox {
                return Err(DatasetError::Invalid(format!(
                    "record {:?}: synthetic images are only allowed for the mpox class",
                    r.id
                )));
            }
            if r.source == Source::Synthetic && matches!(r.split, Some(Split::Val | Split::Test)) {
                return Err(DatasetError::Invalid(format!(
                    "record {:?}: synthetic images may not be in val or test",
                    r.id
                )));
            }
            if r.sha256.len() != 64 || !r.sha256.bytes().all(|b| b.is_ascii_hexdigit()) {
                return Err(DatasetError::Invalid(format!("record {:?}: bad sha256", r.id)));
            }
            r.phash_bits()?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &SampleRecord> {
        self.records.iter().filter(move |r| r.split == Some(split))
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for line in self.provenance.lines() {
            writeln!(w, "# {line}")?;
        }
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = Vec::new();
        self.write_jsonl(&mut out).expect("writing to memory");
        String::from_utf8(out).expect("utf-8")
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, DatasetError> {
        let mut records = Vec::new();
        let mut provenance = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if let Some(note) = trimmed.strip_prefix('#') {
                provenance.push(note.strip_prefix(' ').unwrap_or(note).to_string());
                continue;
            }
            if trimmed.is_empty() {
                continue;
            }
            let record = serde_json::from_str(trimmed).map_err(|e| DatasetError::Parse { line: i + 1, message: e.to_string() })?;
            records.push(record);
        }
        let m = Self {
            records,
            provenance: provenance.join("\n"),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let f = std::fs::File::open(path.as_ref()).map_err(|e| DatasetError::io(path.as_ref(), e))?;
        Self::read_jsonl(std::io::BufReader::new(f))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        let f = std::fs::File::create(path.as_ref()).map_err(|e| DatasetError::io(path.as_ref(), e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_jsonl(&mut w)?;
        w.flush()?;
        Ok(())
    }
}
