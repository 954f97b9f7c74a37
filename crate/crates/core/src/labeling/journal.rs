//! Append-only JSON-lines journal of session events, with optional
//! snapshots to shorten replay.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use super::{JournalEntry, LabelingSession};
use crate::error::{Error, Result};

#[derive(Debug)]
pub struct Journal {
    path: PathBuf,
    file: File,
}

impl Journal {
    /// Starts a new journal. Fails if the file already exists.
    pub fn create(path: impl AsRef<Path>, first: &JournalEntry) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new().append(true).create_new(true).open(&path)?;
        let mut j = Self { path, file };
        j.append(first)?;
        Ok(j)
    }

    /// Opens an existing journal for appending and returns its entries. A
    /// torn final line (crash mid-write) is dropped from the file.
    pub fn open(path: impl AsRef<Path>) -> Result<(Self, Vec<JournalEntry>)> {
        let path = path.as_ref().to_path_buf();
        let (entries, good_len) = read_entries(&path)?;
        let mut file = OpenOptions::new().read(true).append(true).open(&path)?;
        if file.metadata()?.len() != good_len {
            file.set_len(good_len)?;
        }
        if good_len > 0 {
            let mut last = [0u8];
            file.seek(SeekFrom::Start(good_len - 1))?;
            file.read_exact(&mut last)?;
            if last[0] != b'\n' {
                file.write_all(b"\n")?;
            }
        }
        Ok((Self { path, file }, entries))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends and syncs one entry.
    pub fn append(&mut self, entry: &JournalEntry) -> Result<()> {
        let mut line = serde_json::to_vec(entry)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.sync_data()?;
        Ok(())
    }
}

/// Parses journal lines. Returns the entries and the byte length of the
/// intact prefix.
pub fn read_entries(path: &Path) -> Result<(Vec<JournalEntry>, u64)> {
    parse_entries(BufReader::new(File::open(path)?))
}

/// Reader form of [`read_entries`].
pub fn parse_entries<R: BufRead>(mut reader: R) -> Result<(Vec<JournalEntry>, u64)> {
    let mut entries = Vec::new();
    let mut good = 0u64;
    let mut buf = String::new();
    let mut lineno = 0u64;
    loop {
        buf.clear();
        let n = reader.read_line(&mut buf)?;
        if n == 0 {
            break;
        }
        lineno += 1;
        let complete = buf.ends_with('\n');
        if buf.trim().is_empty() {
            if complete {
                good += n as u64;
            }
            continue;
        }
        match serde_json::from_str::<JournalEntry>(buf.trim_end()) {
            Ok(e) => {
                entries.push(e);
                good += n as u64;
            }
            // torn tail: whatever was written without its newline
            Err(_) if !complete => break,
            Err(e) => return Err(Error::parse(lineno, e.to_string())),
        }
    }
    if entries.is_empty() {
        return Err(Error::Empty("journal"));
    }
    Ok((entries, good))
}

/// Writes a snapshot atomically next to its final path.
pub fn write_snapshot(path: impl AsRef<Path>, session: &LabelingSession) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("tmp");
    let mut f = File::create(&tmp)?;
    f.write_all(&session.to_canonical_json()?)?;
    f.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Rebuilds a session from a journal, starting from a snapshot when one is
/// given and consistent with the journal.
pub fn load_session(journal: &[JournalEntry], snapshot: Option<&Path>) -> Result<LabelingSession> {
    if let Some(p) = snapshot.filter(|p| p.exists()) {
        let bytes = fs::read(p)?;
        let mut session: LabelingSession = serde_json::from_slice(&bytes)?;
        let covered = journal.iter().take_while(|e| e.seq <= session.last_seq).count();
        if covered as u64 == session.last_seq {
            for e in &journal[covered..] {
                session.apply(e)?;
            }
            return Ok(session);
        }
    }
    LabelingSession::replay(journal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeling::tests::{canonical_prediction, spec, t0};
    use crate::labeling::EditOp;
    use chrono::Duration;

    fn session_with_log(dir: &Path) -> (LabelingSession, PathBuf) {
        let pred = canonical_prediction();
        let (mut s, first) =
            LabelingSession::from_seeds(spec("s"), &pred, vec!["r3".into(), "r1".into()], t0()).unwrap();
        let path = dir.join("s.jsonl");
        let mut j = Journal::create(&path, &first).unwrap();
        let t = s.tasks[0].task_id.clone();
        j.append(&s.lease_task(&t, "ann", t0(), Duration::minutes(15)).unwrap()).unwrap();
        j.append(&s.apply_edit(&t, "ann", EditOp::Remove, &"r5".into(), t0()).unwrap()).unwrap();
        (s, path)
    }

    #[test]
    fn replay_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let (s, path) = session_with_log(dir.path());
        let (_, entries) = Journal::open(&path).unwrap();
        let back = load_session(&entries, None).unwrap();
        assert_eq!(back.to_canonical_json().unwrap(), s.to_canonical_json().unwrap());
        assert!(Journal::create(&path, &entries[0]).is_err());
    }

    #[test]
    fn torn_tail_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let (mut s, path) = session_with_log(dir.path());
        let intact = fs::metadata(&path).unwrap().len();
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"v\":1,\"seq\":4,\"at\":\"20").unwrap();
        drop(f);
        let (mut j, entries) = Journal::open(&path).unwrap();
        assert_eq!(entries.len(), 3);
        assert_eq!(fs::metadata(&path).unwrap().len(), intact);
        let t = s.tasks[0].task_id.clone();
        j.append(&s.finalize(&t, "ann", t0()).unwrap()).unwrap();
        let (_, entries) = Journal::open(&path).unwrap();
        assert_eq!(load_session(&entries, None).unwrap(), s);
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let (_, path) = session_with_log(dir.path());
        let text = fs::read_to_string(&path).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines.insert(1, "not json");
        fs::write(&path, lines.join("\n") + "\n").unwrap();
        assert!(matches!(Journal::open(&path), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn snapshot_then_tail() {
        let dir = tempfile::tempdir().unwrap();
        let (mut s, path) = session_with_log(dir.path());
        let snap = dir.path().join("s.snapshot.json");
        write_snapshot(&snap, &s).unwrap();
        let (mut j, _) = Journal::open(&path).unwrap();
        let t = s.tasks[0].task_id.clone();
        j.append(&s.finalize(&t, "ann", t0()).unwrap()).unwrap();
        let (_, entries) = Journal::open(&path).unwrap();
        assert_eq!(load_session(&entries, Some(&snap)).unwrap(), s);
        assert_eq!(load_session(&entries, Some(&dir.path().join("missing"))).unwrap(), s);
    }
}
