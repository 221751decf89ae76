use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub image: PathBuf,
    pub gts: Vec<PathBuf>,
}

impl ManifestEntry {
    /// File stem of the image, used as the sample id.
    pub fn id(&self) -> String {
        self.image
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }
}

/// Sample list: one `image<TAB>gt[,gt...]` line per sample. Relative paths
/// resolve against the manifest's directory. A `# split=train|test` line
/// tags the split; other `#` lines are comments.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    pub split: Option<Split>,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn parse(text: &str, base: &Path, origin: &Path) -> Result<Self> {
        let mut split = None;
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(tag) = comment.trim().strip_prefix("split=") {
                    split = Some(tag.trim().parse()?);
                }
                continue;
            }
            let bad = |what: &str| Error::format(origin, format!("line {}: {what}", lineno + 1));
            let (image, gts) = line.split_once('\t').ok_or_else(|| bad("expected image<TAB>gt"))?;
            let gts: Vec<PathBuf> = gts
                .split(',')
                .map(str::trim)
                .filter(|g| !g.is_empty())
                .map(|g| base.join(g))
                .collect();
            if image.trim().is_empty() || gts.is_empty() {
                return Err(bad("missing image or ground-truth path"));
            }
            entries.push(ManifestEntry {
                image: base.join(image.trim()),
                gts,
            });
        }
        Ok(Manifest { split, entries })
    }

    /// Reads a manifest and checks that every referenced file exists.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let m = Self::parse(&text, base, path)?;
        for p in m.entries.iter().flat_map(|e| std::iter::once(&e.image).chain(&e.gts)) {
            if !p.is_file() {
                return Err(Error::io(
                    p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "referenced file not found"),
                ));
            }
        }
        Ok(m)
    }

    /// Serialises with paths written relative to `base` where possible.
    pub fn to_text(&self, base: &Path) -> String {
        let rel = |p: &Path| p.strip_prefix(base).unwrap_or(p).display().to_string();
        let mut out = String::new();
        if let Some(s) = self.split {
            out += &format!("# split={s}\n");
        }
        for e in &self.entries {
            let gts: Vec<String> = e.gts.iter().map(|g| rel(g)).collect();
            out += &format!("{}\t{}\n", rel(&e.image), gts.join(","));
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new(""));
        std::fs::write(path, self.to_text(base)).map_err(|e| Error::io(path, e))
    }
}
