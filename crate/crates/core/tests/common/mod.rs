#![allow(dead_code, clippy::manual_range_contains, clippy::type_complexity)]

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use tower::ServiceExt;

use sqlreflect::matcher::{InterventionType, SqlEvent};
use sqlreflect::reflection::{Origin, Reflection};
use sqlreflect::scheduler::{ClockMode, DrainMode, SchedulerConfig, SchedulerState};
use sqlreflect::session::SessionState;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn ev(session: &str, task: u8, ts: f64, sql: &str) -> SqlEvent {
    SqlEvent {
        session_id: session.into(),
        task_id: task,
        author: None,
        timestamp: ts,
        raw_sql: sql.into(),
    }
}

/// Session with `setup` recorded at t=0,1,2...
pub fn state_after(setup: &[&str]) -> SessionState {
    let mut state = SessionState::new("s", SchedulerConfig::default()).unwrap();
    for (i, sql) in setup.iter().enumerate() {
        state.record_command(ev("s", 1, i as f64, sql)).unwrap();
    }
    state
}

// Reference prompt/output rows, transcribed cell by cell.

pub const ROW1_SQL: &str = "alter table result modify salary INT";
pub const ROW1_SETUP: &str = "CREATE TABLE result (emp_no INT, salary VARCHAR(20))";
pub const ROW1_OUTPUT: &str = "Compare tradeoffs of using VARCHAR vs INT";

pub const ROW2_CREATION: &str = "CREATE TABLE result2 AS (SELECT employees.emp_no, \
employees.first_name, employees.last_name, \
dept_emp_list.dept_name, titles.title \
FROM employees INNER JOIN dept_emp_list \
ON employees.emp_no=dept_emp_list.emp_no \
INNER JOIN titles \
ON dept_emp_list.emp_no=titles.emp_no )";
pub const ROW2_SQL: &str = "CREATE INDEX idx_1 ON result2 (dept_name, title)";
pub const ROW2_PROMPT: &str = "Look at the following SQL table creation command:
CREATE TABLE result2 AS (SELECT employees.emp_no,
employees.first_name, employees.last_name,
dept_emp_list.dept_name, titles.title
FROM employees INNER JOIN dept_emp_list
ON employees.emp_no=dept_emp_list.emp_no
INNER JOIN titles
ON dept_emp_list.emp_no=titles.emp_no )
Now look at this command to create a composite index:
CREATE INDEX idx_1 ON result2 (dept_name, title)
Generate three plausible alternative composite
indices, including variants that switch the column
order from the original command. Just generate the
alternatives don't write any text or explanations:";
pub const ROW2_OUTPUT: [&str; 3] = [
    "CREATE INDEX idx_2 ON result2 (title, dept_name);",
    "CREATE INDEX idx_3 ON result2 (emp_no, dept_name);",
    "CREATE INDEX idx_4 ON result2 (dept_name, emp_no);",
];

pub const ROW3_CREATION: &str = "CREATE TABLE task2 (SELECT e.*, d.dept_no, \
d.dept_name, t.title, t.from_date, t.to_date \
FROM employees AS e JOIN dept_emp_list AS d \
ON e.emp_no=d.emp_no JOIN titles AS t \
ON t.emp_no=d.emp_no)";
pub const ROW3_SQL: &str = "CREATE INDEX title_index ON task2(title)";
pub const ROW3_PROMPT: &str = "Look at the following SQL table creation command:
CREATE TABLE task2 (SELECT e.*, d.dept_no,
d.dept_name, t.title, t.from_date, t.to_date
FROM employees AS e JOIN dept_emp_list AS d
ON e.emp_no=d.emp_no JOIN titles AS t
ON t.emp_no=d.emp_no)
Now look at this command to create a single column index:
CREATE INDEX title_index ON task2(title)
Generate exactly one plausible composite index and
exactly one single column index for optimizing the
query. Just generate the alternatives don't write any
text or explanations:";
pub const ROW3_OUTPUT: [&str; 2] = [
    "CREATE INDEX title_dept_index ON task2(title, dept_name)",
    "CREATE INDEX from_date_index ON task2(from_date)",
];

pub const ROW4_SQL: &str = "SELECT e.first_name, e.last_name, s.from_date, s.to_date FROM salaries s \
INNER JOIN employees e ON s.emp_no = e.emp_no WHERE s.salary > 100000";
pub const ROW4_OUTPUT: &str = "CREATE TABLE high_earning_employees AS  (SELECT e.emp_no, e.first_name, \
e.last_name, s.from_date, s.to_date FROM salaries s INNER JOIN employees e ON s.emp_no = e.emp_no \
WHERE s.salary > 100000);";

pub const ROW5_SQL: &str = "CREATE TABLE emp_title_dept AS (SELECT e.emp_no, e.first_name, e.last_name, t.title, \
d.dept_no FROM employees e INNER JOIN dept_emp_list d ON e.emp_no = d.emp_no INNER JOIN titles t \
ON d.emp_no = t.emp_no)";
pub const ROW5_OUTPUT: &str = "CREATE TABLE emp_title_dept AS (SELECT e.emp_no, e.first_name, e.last_name, \
t.title, d.dept_no FROM employees e INNER JOIN titles t ON e.emp_no = t.emp_no)";

pub const ROWS: [(&str, InterventionType); 5] = [
    (ROW1_SQL, InterventionType::DatatypeComparison),
    (ROW2_SQL, InterventionType::CompositeIndColOrder),
    (ROW3_SQL, InterventionType::CompositeVsMultiSingle),
    (ROW4_SQL, InterventionType::DenormalizationWhen),
    (ROW5_SQL, InterventionType::TableChoiceDenormalization),
];

/// Statements that must not trigger anything.
pub const NEGATIVE: [&str; 30] = [
    "SELECT * FROM employees",
    "SELECT emp_no, first_name FROM employees WHERE emp_no = 10001",
    "select count(*) from salaries group by emp_no having count(*) > 3",
    "SELECT DISTINCT title FROM titles ORDER BY title LIMIT 10",
    "SELECT e.first_name FROM employees e WHERE e.emp_no IN (SELECT emp_no FROM titles)",
    "SELECT 1",
    "SELECT now()",
    "SELECT a.x FROM a, b WHERE a.id = b.id",
    "SELECT * FROM employees e LEFT JOIN salaries s ON e.emp_no = s.emp_no",
    "SELECT * FROM titles t LEFT OUTER JOIN employees e ON t.emp_no = e.emp_no",
    "SELECT * FROM a RIGHT JOIN b ON a.id = b.id",
    "ALTER TABLE employees ADD COLUMN middle_name VARCHAR(20)",
    "ALTER TABLE employees DROP COLUMN middle_name",
    "ALTER TABLE employees RENAME TO staff",
    "ALTER TABLE employees ADD PRIMARY KEY (emp_no)",
    "ALTER TABLE salaries RENAME COLUMN salary TO amount",
    "CREATE TABLE high_paid AS SELECT * FROM salaries WHERE salary > 100000",
    "CREATE TABLE copy_emp AS (SELECT emp_no, first_name FROM employees)",
    "create table t2 as select a, b from t1",
    "CREATE TABLE recent AS SELECT * FROM titles WHERE to_date > '2000-01-01'",
    "CREATE TABLE agg AS (SELECT emp_no, max(salary) m FROM salaries GROUP BY emp_no)",
    "CREATE TABLE t (a INT, b VARCHAR(10))",
    "INSERT INTO employees (emp_no, first_name) VALUES (1, 'Ann')",
    "UPDATE salaries SET salary = salary * 1.1 WHERE emp_no = 1",
    "DELETE FROM titles WHERE to_date < '1990-01-01'",
    "DROP TABLE result2",
    "DROP INDEX idx_1 ON result2",
    "SHOW TABLES",
    "DESCRIBE employees",
    "-- CREATE INDEX idx ON t (a, b)",
];

// Naive transcription of the pacing rules, kept deliberately flat so it
// can serve as an oracle for SchedulerState.

#[derive(Debug, Clone, Copy)]
pub enum Op {
    Offer(InterventionType, f64),
    Tick(f64),
    SetTask(u8, f64),
}

pub struct Reference {
    tau: f64,
    head_clock: bool,
    timer: bool,
    task: u8,
    last: Option<f64>,
    queue: Vec<(String, InterventionType, f64)>,
}

impl Reference {
    pub fn new(cfg: SchedulerConfig) -> Self {
        Reference {
            tau: cfg.tau_s,
            head_clock: cfg.clock == ClockMode::HeadTrigger,
            timer: matches!(cfg.drain, DrainMode::Timer { .. }),
            task: 1,
            last: None,
            queue: vec![],
        }
    }

    fn gap_ok(&self, now: f64) -> bool {
        if self.head_clock && !self.queue.is_empty() {
            return now - self.queue[0].2 > self.tau;
        }
        match self.last {
            None => true,
            Some(l) => now - l > self.tau,
        }
    }

    pub fn run(&mut self, ops: &[Op]) -> Vec<String> {
        let mut out = vec![];
        let mut n = 0;
        for op in ops {
            match *op {
                Op::Offer(ty, now) => {
                    n += 1;
                    let id = format!("r{n}");
                    if self.task == 3 {
                        self.last = Some(now);
                        out.push(format!("show_now {id}"));
                        continue;
                    }
                    let ok = self.gap_ok(now);
                    let mut same = false;
                    for q in &self.queue {
                        if q.1 == ty {
                            same = true;
                        }
                    }
                    if same && ok {
                        let head = self.queue.remove(0);
                        self.last = Some(now);
                        out.push(format!("show_queued {}", head.0));
                    } else if same {
                        out.push("dropped".into());
                    } else if ok {
                        self.last = Some(now);
                        out.push(format!("show_now {id}"));
                    } else {
                        self.queue.push((id, ty, now));
                        out.push("queued".into());
                    }
                }
                Op::Tick(now) => {
                    if self.timer && !self.queue.is_empty() && self.gap_ok(now) {
                        let head = self.queue.remove(0);
                        self.last = Some(now);
                        out.push(format!("tick {}", head.0));
                    } else {
                        out.push("tick -".into());
                    }
                }
                Op::SetTask(t, now) => {
                    if t < 1 || t > 3 || t < self.task {
                        out.push("task error".into());
                    } else if t == self.task {
                        out.push("task []".into());
                    } else {
                        self.task = t;
                        let mut ids = vec![];
                        if t == 3 {
                            for q in self.queue.drain(..) {
                                ids.push(q.0);
                                self.last = Some(now);
                            }
                        }
                        out.push(format!("task [{}]", ids.join(" ")));
                    }
                }
            }
        }
        out
    }
}

pub fn reflection(id: String, t: InterventionType, at: f64) -> Reflection {
    Reflection {
        id,
        intervention: t,
        session_id: "s".into(),
        task_id: 1,
        trigger_event: 0,
        trigger_sql: String::new(),
        message: String::new(),
        alternatives: vec![],
        origin: Origin::StaticFallback,
        created_at: at,
        shown_at: None,
    }
}

/// The same ops through the real scheduler, rendered like `Reference::run`.
pub fn run_real(cfg: SchedulerConfig, ops: &[Op]) -> Vec<String> {
    let mut s = SchedulerState::new(cfg).unwrap();
    let mut out = vec![];
    let mut n = 0;
    for op in ops {
        match *op {
            Op::Offer(ty, now) => {
                n += 1;
                let d = s.offer(reflection(format!("r{n}"), ty, now), now);
                out.push(match d.shown() {
                    Some(r) => format!("{} {}", d.label(), r.id),
                    None => d.label().to_string(),
                });
            }
            Op::Tick(now) => out.push(match s.tick(now) {
                Some(r) => format!("tick {}", r.id),
                None => "tick -".into(),
            }),
            Op::SetTask(t, now) => out.push(match s.set_task(t, now) {
                Ok(rs) => format!("task [{}]", rs.iter().map(|r| r.id.as_str()).collect::<Vec<_>>().join(" ")),
                Err(_) => "task error".into(),
            }),
        }
    }
    out
}

// Scripted eight-command session: every intervention type, one queued,
// one dropped, and a task-3 flush, with tau = 300.

pub enum Step {
    Cmd(f64, &'static str),
    Task(f64, u8),
}

pub const SCRIPT: [Step; 9] = [
    Step::Cmd(0.0, "CREATE TABLE result2 AS (SELECT employees.emp_no, employees.first_name, dept_emp_list.dept_name, titles.title FROM employees INNER JOIN dept_emp_list ON employees.emp_no=dept_emp_list.emp_no INNER JOIN titles ON dept_emp_list.emp_no=titles.emp_no)"),
    Step::Cmd(30.0, "SELECT dept_name, count(*) FROM result2 GROUP BY dept_name"),
    Step::Cmd(60.0, "CREATE INDEX idx_1 ON result2 (dept_name, title)"),
    Step::Cmd(120.0, "CREATE INDEX idx_2 ON result2 (emp_no, title)"),
    Step::Cmd(180.0, "ALTER TABLE result2 MODIFY title VARCHAR(100)"),
    Step::Cmd(240.0, "CREATE INDEX title_index ON result2 (title)"),
    Step::Task(400.0, 3),
    Step::Cmd(420.0, "SELECT e.first_name, e.last_name, s.from_date FROM salaries s INNER JOIN employees e ON s.emp_no = e.emp_no WHERE s.salary > 100000"),
    Step::Cmd(500.0, "SELECT * FROM result2 WHERE title = 'Engineer'"),
];

pub async fn call(app: &Router, method: &str, uri: &str, body: Option<String>) -> (StatusCode, String) {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    let req = req.body(body.map_or_else(Body::empty, Body::from)).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

/// Run `SCRIPT` against a fresh session; returns the session id and the
/// transcript (one request/response pair per line).
pub async fn run_script(app: &Router) -> (String, String) {
    let (status, body) = call(app, "POST", "/v1/sessions", Some(r#"{"group_id":"Group 1","tau_s":300}"#.into())).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    let id = serde_json::from_str::<serde_json::Value>(&body).unwrap()["session_id"]
        .as_str()
        .unwrap()
        .to_string();
    let mut transcript = format!("POST /v1/sessions -> {body}\n");
    for step in &SCRIPT {
        let (uri, req) = match step {
            Step::Cmd(ts, sql) => (
                format!("/v1/sessions/{id}/commands"),
                serde_json::json!({ "sql": sql, "ts": ts }).to_string(),
            ),
            Step::Task(ts, task) => (
                format!("/v1/sessions/{id}/task"),
                serde_json::json!({ "task_id": task, "ts": ts }).to_string(),
            ),
        };
        let (status, body) = call(app, "POST", &uri, Some(req.clone())).await;
        assert_eq!(status, StatusCode::OK, "{body}");
        transcript.push_str(&format!("POST {uri} {req} -> {body}\n"));
    }
    let (_, body) = call(app, "GET", &format!("/v1/sessions/{id}/reflections"), None).await;
    transcript.push_str(&format!("GET reflections -> {body}\n"));
    (id, transcript)
}

/// Minimal OpenAI-style completions endpoint. Each request pops the next
/// scripted reply; the last one repeats.
#[derive(Clone)]
pub struct Stub {
    pub replies: Arc<Vec<(u16, String)>>,
    pub hits: Arc<AtomicUsize>,
    pub bodies: Arc<Mutex<Vec<(Option<String>, String)>>>,
}

impl Stub {
    pub fn text(status: u16, text: &str) -> (u16, String) {
        (status, serde_json::json!({ "choices": [{ "text": text }] }).to_string())
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

pub async fn spawn_stub(replies: Vec<(u16, String)>) -> (String, Stub) {
    use axum::extract::State;
    use axum::http::HeaderMap;
    use axum::routing::post;

    let stub = Stub {
        replies: Arc::new(replies),
        hits: Arc::new(AtomicUsize::new(0)),
        bodies: Arc::new(Mutex::new(vec![])),
    };
    async fn handler(State(stub): State<Stub>, headers: HeaderMap, body: String) -> (StatusCode, String) {
        let n = stub.hits.fetch_add(1, Ordering::SeqCst);
        let auth = headers.get("authorization").map(|v| v.to_str().unwrap().to_string());
        stub.bodies.lock().unwrap().push((auth, body));
        let (status, text) = stub.replies[n.min(stub.replies.len() - 1)].clone();
        (StatusCode::from_u16(status).unwrap(), text)
    }
    let app = Router::new().route("/v1/completions", post(handler)).with_state(stub.clone());
    let listener = tokio::net::TcpListener::bind(SocketAddr::from(([127, 0, 0, 1], 0))).await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    (format!("http://{addr}/v1"), stub)
}
