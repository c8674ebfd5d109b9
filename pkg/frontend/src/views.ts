/** Pure view renderers: data in, HTML string out. No fetches, no DOM
 *  access, so every view is unit-testable as a string. */

import type {
  AttemptView,
  GradeTable,
  Metrics,
  OverviewRow,
  SubmissionDetail,
} from "./api.js";

export function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

/** Minimal markup rendering for task and feedback texts: bold, italics,
 *  inline code, paragraphs. LaTeX fragments are passed through untouched so
 *  a math renderer can pick them up. */
export function renderMarkup(text: string): string {
  let html = escapeHtml(text);
  html = html.replace(/`([^`]+)`/g, "<code>$1</code>");
  html = html.replace(/\*\*([^*]+)\*\*/g, "<strong>$1</strong>");
  html = html.replace(/\*([^*]+)\*/g, "<em>$1</em>");
  return html
    .split(/\n{2,}/)
    .map((block) => `<p>${block.replaceAll("\n", "<br>")}</p>`)
    .join("");
}

export function formatScore(value: number | null): string {
  if (value === null) return "–";
  return (Math.round(value * 100) / 100).toString();
}

/** Green for full marks through red for zero; neutral for ungraded. */
export function scoreColor(fraction: number | null): string {
  if (fraction === null) return "#e8e8e8";
  const clamped = Math.max(0, Math.min(1, fraction));
  const hue = Math.round(clamped * 120);
  return `hsl(${hue}, 70%, 82%)`;
}

export function renderLogin(error?: string): string {
  const notice = error ? `<p class="error" data-role="login-error">${escapeHtml(error)}</p>` : "";
  return `
  <section data-view="login">
    <h1>Sign in</h1>
    ${notice}
    <form data-role="login-form">
      <label>User <input name="user_id" autocomplete="username"></label>
      <label>Password <input name="secret" type="password" autocomplete="current-password"></label>
      <button type="submit">Sign in</button>
    </form>
  </section>`;
}

export function renderPermissionNotice(code: string, what: string): string {
  return `
  <section data-view="permission-notice">
    <h1>Not available</h1>
    <p>Your role may not open ${escapeHtml(what)} (<code>${escapeHtml(code)}</code>).</p>
  </section>`;
}

export function renderErrorNotice(message: string): string {
  return `
  <section data-view="error">
    <h1>Something went wrong</h1>
    <p>${escapeHtml(message)}</p>
  </section>`;
}

export function renderCourses(courses: { course: string; roles: string[] }[]): string {
  const items = courses
    .map(
      (c) =>
        `<li><a href="#" data-action="open-course" data-course="${escapeHtml(c.course)}">` +
        `${escapeHtml(c.course)}</a> <small>(${c.roles.map(escapeHtml).join(", ")})</small></li>`,
    )
    .join("");
  return `
  <section data-view="courses">
    <h1>Courses</h1>
    <ul>${items || "<li>No enrollments.</li>"}</ul>
  </section>`;
}

export function deadlineLabel(deadline: string | null, now: Date): string {
  if (!deadline) return "no deadline";
  const due = new Date(deadline);
  const ms = due.getTime() - now.getTime();
  if (ms < 0) return "closed";
  const hours = Math.floor(ms / 3_600_000);
  if (hours >= 48) return `due in ${Math.floor(hours / 24)} days`;
  if (hours >= 1) return `due in ${hours} h`;
  return `due in ${Math.max(1, Math.round(ms / 60_000))} min`;
}

export function renderOverview(course: string, rows: OverviewRow[], now: Date): string {
  const cards = rows
    .map((row) => {
      const closed = row.deadline !== null && new Date(row.deadline).getTime() < now.getTime();
      const score =
        row.effective_score === null
          ? `<span class="pending">not graded</span>`
          : `<span class="badge" data-role="score-badge">${formatScore(row.effective_score)} / ${formatScore(row.max_points)}</span>`;
      return `
      <tr data-role="exercise-row" data-exercise="${escapeHtml(row.name)}"${closed ? ' class="closed"' : ""}>
        <td>${escapeHtml(row.name)}${closed ? ' <span data-role="closed-marker">[closed]</span>' : ""}</td>
        <td>${score}</td>
        <td>${row.attempts_used} / ${row.n_tries}</td>
        <td>${escapeHtml(deadlineLabel(row.deadline, now))}</td>
      </tr>`;
    })
    .join("");
  return `
  <section data-view="overview" data-course="${escapeHtml(course)}">
    <h1>${escapeHtml(course)}: exercises</h1>
    <table>
      <thead><tr><th>Exercise</th><th>Score</th><th>Attempts</th><th>Deadline</th></tr></thead>
      <tbody>${cards}</tbody>
    </table>
  </section>`;
}

export function renderGradeTable(table: GradeTable, metrics?: Metrics | null): string {
  const header = table.exercises
    .map((e) => `<th>${escapeHtml(e.name)}<br><small>${formatScore(e.max_points)} pts</small></th>`)
    .join("");
  const body = table.students
    .map((student, i) => {
      const cells = (table.cells[i] ?? [])
        .map((cell, j) => {
          const exercise = table.exercises[j]!;
          const fraction =
            cell.effective_score === null || exercise.max_points === 0
              ? null
              : cell.effective_score / exercise.max_points;
          const flag = cell.needs_review
            ? ' <span data-role="needs-review" title="needs review">&#9888;</span>'
            : "";
          return (
            `<td data-action="open-cell" data-student="${escapeHtml(student)}" ` +
            `data-exercise="${escapeHtml(exercise.name)}" style="background:${scoreColor(fraction)}">` +
            `${formatScore(cell.effective_score)}${flag}</td>`
          );
        })
        .join("");
      return `<tr><th>${escapeHtml(student)}</th>${cells}</tr>`;
    })
    .join("");
  const means = table.exercises
    .map((_, j) => {
      const scores = table.cells
        .map((row) => row[j])
        .filter((c): c is NonNullable<typeof c> => !!c && c.effective_score !== null)
        .map((c) => c.effective_score as number);
      if (!scores.length) return "<td>–</td>";
      const mean = scores.reduce((a, b) => a + b, 0) / scores.length;
      return `<td data-role="exercise-mean">${formatScore(mean)}</td>`;
    })
    .join("");
  const latency =
    metrics && metrics.average_feedback_latency_s !== null
      ? `<p data-role="latency">Average feedback latency: ${metrics.average_feedback_latency_s.toFixed(1)} s over ${metrics.graded_submissions} graded submissions.</p>`
      : "";
  return `
  <section data-view="grade-table" data-course="${escapeHtml(table.course)}">
    <h1>${escapeHtml(table.course)}: grades</h1>
    ${latency}
    <table>
      <thead><tr><th>Student</th>${header}</tr></thead>
      <tbody>${body}</tbody>
      <tfoot><tr><th>mean</th>${means}</tr></tfoot>
    </table>
  </section>`;
}

function renderAttempt(attempt: AttemptView, maxPoints: number, canOverride: boolean): string {
  const tests = attempt.test_results
    .map(
      (t) =>
        `<li><strong>${escapeHtml(t.question)}</strong> — ${escapeHtml(t.reply)} ` +
        `(${formatScore(t.points)} pts${t.status === "ok" ? "" : `, ${escapeHtml(t.status)}`})</li>`,
    )
    .join("");
  const tutorBlock =
    attempt.tutor_score !== null
      ? `<p data-role="tutor-grade">Tutor: ${formatScore(attempt.tutor_score)} / ${formatScore(maxPoints)}</p>
         <div data-role="tutor-feedback">${renderMarkup(attempt.tutor_feedback ?? "")}</div>`
      : "";
  const overrideForm = canOverride
    ? `
    <form data-role="override-form" data-submission="${escapeHtml(attempt.submission_id)}" data-max="${maxPoints}">
      <label>Score <input name="score" type="number" step="0.01" min="0" max="${maxPoints}"></label>
      <label>Feedback <textarea name="feedback"></textarea></label>
      <button type="submit">Override grade</button>
      <span class="error" data-role="override-error"></span>
    </form>`
    : "";
  return `
  <article data-role="attempt" data-attempt="${attempt.attempt_index}">
    <h3>Attempt ${attempt.attempt_index}
      ${attempt.needs_review ? '<span data-role="needs-review">&#9888; needs review</span>' : ""}
    </h3>
    <pre data-role="content">${escapeHtml(attempt.content)}</pre>
    ${tests ? `<ul data-role="test-results">${tests}</ul>` : ""}
    <p data-role="ai-grade">Automatic grade: ${formatScore(attempt.ai_score)} / ${formatScore(maxPoints)}</p>
    <div data-role="ai-feedback">${renderMarkup(attempt.ai_feedback)}</div>
    ${tutorBlock}
    ${overrideForm}
  </article>`;
}

export function renderDetail(detail: SubmissionDetail, canOverride: boolean): string {
  const attempts = detail.attempts
    .map((attempt) => renderAttempt(attempt, detail.max_points, canOverride))
    .join("");
  return `
  <section data-view="detail" data-course="${escapeHtml(detail.course)}"
           data-exercise="${escapeHtml(detail.exercise)}" data-student="${escapeHtml(detail.student)}">
    <h1>${escapeHtml(detail.exercise)} — ${escapeHtml(detail.student)}</h1>
    <div data-role="task">${renderMarkup(detail.task)}</div>
    ${attempts || "<p>No attempts yet.</p>"}
  </section>`;
}

export function renderStatus(metrics: Metrics): string {
  const avg =
    metrics.average_feedback_latency_s === null
      ? "no graded submissions yet"
      : `${metrics.average_feedback_latency_s.toFixed(1)} s average, ` +
        `${metrics.median_feedback_latency_s!.toFixed(1)} s median`;
  return `
  <section data-view="status">
    <h1>Service status</h1>
    <p>Feedback latency: ${escapeHtml(avg)} (${metrics.graded_submissions} graded submissions).</p>
  </section>`;
}
