use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};

use qlc_core::grading::{HistoryError, HistoryEvent, LearnerHistory};
use thiserror::Error;

use crate::submission::Submission;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("data directory {dir}: {source}")]
    Io { dir: PathBuf, source: io::Error },
    #[error("{file}: {source}")]
    History { file: PathBuf, source: HistoryError },
    #[error("{file}: {source}")]
    Submission {
        file: PathBuf,
        source: serde_json::Error,
    },
}

/// Flat-file persistence: `history.jsonl` plus one JSON document per
/// submission under `submissions/`.
#[derive(Debug, Clone)]
pub struct Store {
    history_path: PathBuf,
    submissions_dir: PathBuf,
}

/// Everything read back at startup.
#[derive(Debug, Default)]
pub struct Loaded {
    pub history: LearnerHistory,
    pub submissions: BTreeMap<String, Submission>,
}

impl Store {
    pub fn open(data_dir: &Path) -> Result<(Self, Loaded), StoreError> {
        let io_err = |source| StoreError::Io {
            dir: data_dir.to_owned(),
            source,
        };
        let store = Self {
            history_path: data_dir.join("history.jsonl"),
            submissions_dir: data_dir.join("submissions"),
        };
        fs::create_dir_all(&store.submissions_dir).map_err(io_err)?;

        let history = match File::open(&store.history_path) {
            Ok(f) => LearnerHistory::from_jsonl(BufReader::new(f)).map_err(|source| {
                StoreError::History {
                    file: store.history_path.clone(),
                    source,
                }
            })?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => LearnerHistory::new(),
            Err(e) => return Err(io_err(e)),
        };

        let mut submissions = BTreeMap::new();
        for entry in fs::read_dir(&store.submissions_dir).map_err(io_err)? {
            let path = entry.map_err(io_err)?.path();
            if path.extension().is_none_or(|x| x != "json") {
                continue;
            }
            let text = fs::read_to_string(&path).map_err(io_err)?;
            let submission: Submission =
                serde_json::from_str(&text).map_err(|source| StoreError::Submission {
                    file: path.clone(),
                    source,
                })?;
            submissions.insert(submission.submission_id.clone(), submission);
        }
        Ok((
            store,
            Loaded {
                history,
                submissions,
            },
        ))
    }

    /// Writes the whole document to a temporary file, then renames it into
    /// place.
    pub fn save_submission(&self, submission: &Submission) -> io::Result<()> {
        let path = self
            .submissions_dir
            .join(format!("{}.json", submission.submission_id));
        let tmp = path.with_extension("json.tmp");
        let mut f = File::create(&tmp)?;
        f.write_all(&serde_json::to_vec_pretty(submission).map_err(io::Error::other)?)?;
        f.sync_all()?;
        fs::rename(tmp, path)
    }

    pub fn append_history(&self, event: &HistoryEvent) -> io::Result<()> {
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.history_path)?;
        f.write_all(event.to_json_line().as_bytes())?;
        f.sync_data()
    }
}
