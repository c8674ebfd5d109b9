import { describe, expect, it } from "vitest";

import {
  deadlineLabel,
  escapeHtml,
  formatScore,
  renderDetail,
  renderGradeTable,
  renderMarkup,
  renderOverview,
  scoreColor,
} from "../src/views.js";
import type { GradeTable, SubmissionDetail } from "../src/api.js";

const NOW = new Date("2026-05-04T12:00:00Z");

function overviewRow(overrides: Record<string, unknown> = {}) {
  return {
    name: "integrals",
    deadline: null,
    n_tries: 3,
    attempts_used: 0,
    effective_score: null,
    max_points: 4,
    needs_review: false,
    ex_type: "text",
    ...overrides,
  } as never;
}

describe("escapeHtml / renderMarkup", () => {
  it("escapes injection attempts", () => {
    expect(escapeHtml("<script>alert(1)</script>")).not.toContain("<script>");
  });

  it("renders bold, italics and code", () => {
    const html = renderMarkup("a **bold** and *soft* `x=1`");
    expect(html).toContain("<strong>bold</strong>");
    expect(html).toContain("<em>soft</em>");
    expect(html).toContain("<code>x=1</code>");
  });

  it("keeps latex fragments verbatim", () => {
    expect(renderMarkup("solve $\\int x^2 dx$")).toContain("$\\int x^2 dx$");
  });
});

describe("overview", () => {
  it("renders one row per exercise with attempts x/n", () => {
    const html = renderOverview("numerics", [overviewRow(), overviewRow({ name: "series" })], NOW);
    expect(html.match(/data-role="exercise-row"/g)).toHaveLength(2);
    expect(html).toContain("0 / 3");
  });

  it("shows a score badge once graded", () => {
    const html = renderOverview("numerics", [overviewRow({ effective_score: 2.5 })], NOW);
    expect(html).toContain('data-role="score-badge"');
    expect(html).toContain("2.5 / 4");
  });

  it("marks past-deadline exercises closed", () => {
    const html = renderOverview(
      "numerics",
      [overviewRow({ deadline: "2026-05-01T00:00:00Z" })],
      NOW,
    );
    expect(html).toContain('data-role="closed-marker"');
    expect(deadlineLabel("2026-05-01T00:00:00Z", NOW)).toBe("closed");
  });

  it("counts down future deadlines", () => {
    expect(deadlineLabel("2026-05-07T12:00:00Z", NOW)).toBe("due in 3 days");
    expect(deadlineLabel("2026-05-04T15:00:00Z", NOW)).toBe("due in 3 h");
  });
});

describe("grade table", () => {
  const table: GradeTable = {
    course: "numerics",
    exercises: [{ name: "integrals", max_points: 4 }],
    students: ["stu", "sue"],
    cells: [
      [{ effective_score: 4, needs_review: false, attempts_used: 1 }],
      [{ effective_score: 1, needs_review: true, attempts_used: 2 }],
    ],
  };

  it("renders students x exercises with color-scaled cells", () => {
    const html = renderGradeTable(table);
    expect(html.match(/data-action="open-cell"/g)).toHaveLength(2);
    expect(html).toContain(scoreColor(1)); // full marks cell
    expect(html).toContain(scoreColor(0.25));
  });

  it("flags needs_review cells", () => {
    expect(renderGradeTable(table)).toContain('data-role="needs-review"');
  });

  it("adds a per-exercise mean row", () => {
    const html = renderGradeTable(table);
    expect(html).toContain('data-role="exercise-mean"');
    expect(html).toContain(">2.5</td>"); // (4 + 1) / 2
  });

  it("color scale runs green to red", () => {
    expect(scoreColor(1)).toContain("hsl(120");
    expect(scoreColor(0)).toContain("hsl(0");
    expect(scoreColor(null)).toBe("#e8e8e8");
  });
});

describe("detail", () => {
  const detail: SubmissionDetail = {
    course: "numerics",
    exercise: "integrals",
    student: "stu",
    task: "Integrate **x^2**.",
    max_points: 4,
    attempts: [
      {
        submission_id: "sub-1",
        attempt_index: 1,
        content: "my <answer>",
        submitted_at: "2026-05-04T10:00:00Z",
        test_results: [
          { test_id: "t1", question: "Showed work?", reply: "YES", points: 1, status: "ok" },
        ],
        ai_score: 3,
        ai_feedback: "Good **start**.",
        tutor_score: 2.5,
        tutor_feedback: "Partial credit.",
        needs_review: false,
        effective_score: 2.5,
        feedback_latency_s: 1.5,
      },
    ],
  };

  it("shows AI and tutor grades side by side", () => {
    const html = renderDetail(detail, true);
    expect(html).toContain("Automatic grade: 3 / 4");
    expect(html).toContain("Tutor: 2.5 / 4");
    expect(html).toContain("<strong>start</strong>");
  });

  it("escapes student content", () => {
    expect(renderDetail(detail, true)).toContain("my &lt;answer&gt;");
  });

  it("offers the override form only to reviewers", () => {
    expect(renderDetail(detail, true)).toContain('data-role="override-form"');
    expect(renderDetail(detail, false)).not.toContain('data-role="override-form"');
  });

  it("lists test results", () => {
    const html = renderDetail(detail, false);
    expect(html).toContain("Showed work?");
    expect(html).toContain("YES");
  });
});

describe("formatScore", () => {
  it("rounds to two decimals for display", () => {
    expect(formatScore(2.5)).toBe("2.5");
    expect(formatScore(1 / 3)).toBe("0.33");
    expect(formatScore(null)).toBe("–");
  });
});
