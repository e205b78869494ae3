//! Buffered output tree, written only once every stage has succeeded.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

pub struct Outputs {
    root: PathBuf,
    fingerprint: String,
    files: Vec<(PathBuf, String)>,
}

impl Outputs {
    pub fn new(root: &Path, fingerprint: &str) -> Self {
        Outputs {
            root: root.to_path_buf(),
            fingerprint: fingerprint.to_string(),
            files: Vec::new(),
        }
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Adds a text file whose first line is the `# fingerprint=` comment.
    pub fn text(&mut self, relative: impl Into<PathBuf>, body: &str) {
        let contents = format!("# fingerprint={}\n{body}", self.fingerprint);
        self.files.push((relative.into(), contents));
    }

    /// Adds a JSON document that already carries the fingerprint as a field.
    pub fn json(&mut self, relative: impl Into<PathBuf>, body: String) {
        let mut body = body;
        if !body.ends_with('\n') {
            body.push('\n');
        }
        self.files.push((relative.into(), body));
    }

    pub fn names(&self) -> impl Iterator<Item = &Path> {
        self.files.iter().map(|(p, _)| p.as_path())
    }

    /// Writes every file, in insertion order. On failure the files written by
    /// this call are removed again.
    pub fn commit(self) -> Result<Vec<PathBuf>> {
        let mut written = Vec::with_capacity(self.files.len());
        for (relative, contents) in &self.files {
            let path = self.root.join(relative);
            let result = path
                .parent()
                .map_or(Ok(()), std::fs::create_dir_all)
                .and_then(|()| std::fs::write(&path, contents));
            if let Err(e) = result {
                for done in &written {
                    let _ = std::fs::remove_file(done);
                }
                return Err(e).with_context(|| format!("cannot write {}", path.display()));
            }
            written.push(path);
        }
        Ok(written)
    }
}
