//! Embedded SQLite persistence.
//!
//! A single writer connection serializes all writes; each [`Store::write`]
//! call is one immediate transaction. Readers get their own connections and
//! a snapshot that lasts for the whole [`Store::read`] call, so exports never
//! observe a half-written response.

mod records;
mod schema;
mod tx;

use std::path::{Path, PathBuf};
use std::time::Duration;

use parking_lot::Mutex;
use rusqlite::{Connection, OpenFlags, TransactionBehavior};
use thiserror::Error;

use crate::domain::TaskId;
use crate::export::ExportDocument;

pub use records::{Session, SessionState, TaskRecord, TaskSummary};
pub use tx::{StoreTx, SubmitStage};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("cannot open store at {path}: {source}")]
    Open { path: PathBuf, source: rusqlite::Error },
    #[error("store schema version {0} is not supported by this build")]
    UnsupportedVersion(i64),
    #[error("storage failure: {0}")]
    Sqlite(#[from] rusqlite::Error),
    #[error("corrupt record: {0}")]
    Corrupt(String),
    #[error("an open or submitted session already exists for this assignment")]
    DuplicateAssignment,
    #[error("task {0} not found")]
    TaskNotFound(TaskId),
}

impl From<serde_json::Error> for StoreError {
    fn from(e: serde_json::Error) -> Self {
        StoreError::Corrupt(e.to_string())
    }
}

const BUSY_TIMEOUT: Duration = Duration::from_secs(10);

enum Readers {
    /// Read-only connections to the same file, reused across calls.
    File {
        path: PathBuf,
        idle: Mutex<Vec<Connection>>,
    },
    /// In-memory databases are private to one connection; reads share the writer.
    Shared,
}

pub struct Store {
    writer: Mutex<Connection>,
    readers: Readers,
}

impl Store {
    /// Opens or creates the database file.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let open_err = |source| StoreError::Open {
            path: path.clone(),
            source,
        };
        let conn = Connection::open(&path).map_err(open_err)?;
        conn.pragma_update(None, "journal_mode", "WAL").map_err(open_err)?;
        conn.pragma_update(None, "synchronous", "FULL").map_err(open_err)?;
        let store = Self::init(
            conn,
            Readers::File {
                path: path.clone(),
                idle: Mutex::new(Vec::new()),
            },
        )
        .map_err(|e| match e {
            StoreError::Sqlite(source) => StoreError::Open {
                path: path.clone(),
                source,
            },
            other => other,
        })?;
        Ok(store)
    }

    pub fn open_in_memory() -> Result<Self, StoreError> {
        Self::init(Connection::open_in_memory()?, Readers::Shared)
    }

    fn init(conn: Connection, readers: Readers) -> Result<Self, StoreError> {
        conn.busy_timeout(BUSY_TIMEOUT)?;
        conn.pragma_update(None, "foreign_keys", true)?;
        let version: i64 = conn.pragma_query_value(None, "user_version", |r| r.get(0))?;
        match version {
            0 => {
                conn.execute_batch(&format!(
                    "BEGIN IMMEDIATE; {} PRAGMA user_version = {}; COMMIT;",
                    schema::CREATE,
                    schema::VERSION
                ))?;
            }
            schema::VERSION => {}
            other => return Err(StoreError::UnsupportedVersion(other)),
        }
        Ok(Self {
            writer: Mutex::new(conn),
            readers,
        })
    }

    /// Runs `f` inside one write transaction, committing only if it returns `Ok`.
    ///
    /// An error or a panic inside `f` rolls everything back.
    pub fn write<T, E>(&self, f: impl FnOnce(&StoreTx<'_>) -> Result<T, E>) -> Result<T, E>
    where
        E: From<StoreError>,
    {
        let mut conn = self.writer.lock();
        let tx = conn
            .transaction_with_behavior(TransactionBehavior::Immediate)
            .map_err(StoreError::from)?;
        let out = f(&StoreTx::new(&tx))?;
        tx.commit().map_err(StoreError::from)?;
        Ok(out)
    }

    /// Runs `f` against one consistent snapshot.
    pub fn read<T, E>(&self, f: impl FnOnce(&StoreTx<'_>) -> Result<T, E>) -> Result<T, E>
    where
        E: From<StoreError>,
    {
        match &self.readers {
            Readers::Shared => {
                let mut conn = self.writer.lock();
                let tx = conn.transaction().map_err(StoreError::from)?;
                f(&StoreTx::new(&tx))
            }
            Readers::File { path, idle } => {
                let pooled = idle.lock().pop();
                let mut conn = match pooled {
                    Some(c) => c,
                    None => open_reader(path)?,
                };
                let out = {
                    let tx = conn.transaction().map_err(StoreError::from)?;
                    f(&StoreTx::new(&tx))
                };
                idle.lock().push(conn);
                out
            }
        }
    }

    pub fn allocate_pk(&self, model: &str) -> Result<i64, StoreError> {
        self.write(|tx| tx.allocate_pk(model))
    }

    pub fn export_document(&self, task_id: &TaskId) -> Result<ExportDocument, StoreError> {
        self.read(|tx| tx.export_document(task_id))
    }
}

fn open_reader(path: &Path) -> Result<Connection, StoreError> {
    let conn = Connection::open_with_flags(
        path,
        OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX | OpenFlags::SQLITE_OPEN_URI,
    )?;
    conn.busy_timeout(BUSY_TIMEOUT)?;
    Ok(conn)
}
