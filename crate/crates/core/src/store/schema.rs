pub(super) const VERSION: i64 = 1;

pub(super) const CREATE: &str = "
CREATE TABLE tasks (
    seq        INTEGER PRIMARY KEY AUTOINCREMENT,
    task_id    TEXT NOT NULL UNIQUE,
    record     TEXT NOT NULL
);

CREATE TABLE pk_sequences (
    model      TEXT PRIMARY KEY,
    last_pk    INTEGER NOT NULL
);

CREATE TABLE sessions (
    token          TEXT PRIMARY KEY,
    task_id        TEXT NOT NULL REFERENCES tasks(task_id),
    worker_id      TEXT NOT NULL,
    assignment_id  TEXT NOT NULL,
    hit_id         TEXT NOT NULL,
    turk_submit_to TEXT NOT NULL,
    seed           INTEGER NOT NULL,
    started_at     INTEGER NOT NULL,
    state          TEXT NOT NULL CHECK (state IN ('open', 'submitted', 'abandoned'))
);
CREATE UNIQUE INDEX sessions_live_assignment
    ON sessions(task_id, assignment_id) WHERE state <> 'abandoned';
CREATE INDEX sessions_open_started ON sessions(started_at) WHERE state = 'open';

CREATE TABLE events (
    id       INTEGER PRIMARY KEY AUTOINCREMENT,
    token    TEXT NOT NULL REFERENCES sessions(token),
    kind     TEXT NOT NULL,
    t_ms     INTEGER NOT NULL,
    payload  TEXT NOT NULL
);
CREATE INDEX events_by_session ON events(token, id);

CREATE TABLE batches (
    token     TEXT NOT NULL REFERENCES sessions(token),
    batch_seq INTEGER NOT NULL,
    ack       TEXT NOT NULL,
    PRIMARY KEY (token, batch_seq)
);

CREATE TABLE responses (
    pk            INTEGER PRIMARY KEY,
    token         TEXT NOT NULL UNIQUE REFERENCES sessions(token),
    task_id       TEXT NOT NULL REFERENCES tasks(task_id),
    worker_id     TEXT NOT NULL,
    assignment_id TEXT NOT NULL,
    hit_id        TEXT NOT NULL,
    seed          INTEGER NOT NULL,
    submitted_at  INTEGER NOT NULL
);
CREATE INDEX responses_by_task ON responses(task_id, pk);

CREATE TABLE step_answers (
    pk            INTEGER PRIMARY KEY,
    general_model INTEGER NOT NULL REFERENCES responses(pk),
    step_id       TEXT NOT NULL,
    value         TEXT NOT NULL
);
CREATE INDEX step_answers_by_response ON step_answers(general_model, pk);

CREATE TABLE auditor_rows (
    model         TEXT NOT NULL,
    pk            INTEGER NOT NULL,
    general_model INTEGER NOT NULL REFERENCES responses(pk),
    kind          TEXT NOT NULL,
    fields        TEXT NOT NULL,
    PRIMARY KEY (model, pk)
);
CREATE INDEX auditor_rows_by_response ON auditor_rows(general_model, kind, pk);

CREATE TABLE fingerprints (
    general_model             INTEGER PRIMARY KEY REFERENCES responses(pk),
    total_time_ms             INTEGER NOT NULL,
    clicks_count              INTEGER NOT NULL,
    keypress_count            INTEGER NOT NULL,
    resize_count              INTEGER NOT NULL,
    mouse_sample_count        INTEGER NOT NULL,
    mouse_path_px             REAL NOT NULL,
    mouse_net_displacement_px REAL NOT NULL,
    focus_loss_count          INTEGER NOT NULL,
    unfocused_ms              INTEGER NOT NULL,
    dwell_mean_ms             REAL NOT NULL,
    dwell_median_ms           REAL NOT NULL,
    dwell_max_ms              INTEGER NOT NULL
);
";
