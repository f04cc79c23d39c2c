use axum::response::Html;
use turkey_core::export::escape_text;
use turkey_core::TaskId;

/// Page that boots the browser runner. It only names the task; the runner
/// fetches the bundle itself, so loading the page opens no session.
pub(crate) fn render(task_id: &TaskId, name: &str) -> Html<String> {
    let id = escape_text(task_id.as_str());
    let title = escape_text(name);
    Html(format!(
        r#"<!DOCTYPE html>
<html lang="en">
<head>
<meta charset="utf-8">
<meta name="viewport" content="width=device-width, initial-scale=1">
<title>{title}</title>
<link rel="stylesheet" href="/runner/runner.css">
</head>
<body>
<main id="turkey-runner" data-task-id="{id}"></main>
<noscript>This task requires JavaScript.</noscript>
<script type="module" src="/runner/runner.js"></script>
</body>
</html>
"#
    ))
}
