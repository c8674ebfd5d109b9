import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { Console, DEFAULT_POLL_INTERVAL_MS } from "../src/controller.js";
import { COURSE, MockServer } from "./mock_server.js";

let server: MockServer;
let rendered: string;
let scheduled: { fn: () => void; ms: number; cancelled: boolean }[];

function makeConsole(): Console {
  server = new MockServer();
  rendered = "";
  scheduled = [];
  const api = new ApiClient("", server.fetch);
  return new Console(
    api,
    (html) => {
      rendered = html;
    },
    {
      schedule: (fn, ms) => {
        const entry = { fn, ms, cancelled: false };
        scheduled.push(entry);
        return () => {
          entry.cancelled = true;
        };
      },
      now: () => new Date("2026-05-04T12:00:00Z"),
    },
  );
}

describe("session flow", () => {
  beforeEach(() => makeConsole());

  it("starts on the login view", async () => {
    makeConsole();
    expect(rendered).toContain('data-view="login"');
  });

  it("lands on the course list after login", async () => {
    const console_ = makeConsole();
    await console_.login("tom", "tompw");
    expect(rendered).toContain('data-view="courses"');
    expect(rendered).toContain("numerics");
  });

  it("expired session redirects to login", async () => {
    const console_ = makeConsole();
    await console_.login("tom", "tompw");
    server.tokens.clear(); // server forgets the session
    await console_.showGradeTable(COURSE);
    expect(rendered).toContain('data-view="login"');
    expect(rendered).toContain("Session expired");
  });
});

describe("grade table polling", () => {
  it("schedules polling at the configured interval", async () => {
    const console_ = makeConsole();
    await console_.login("tom", "tompw");
    await console_.showGradeTable(COURSE);
    expect(scheduled).toHaveLength(1);
    expect(scheduled[0]!.ms).toBe(DEFAULT_POLL_INTERVAL_MS);
  });

  it("a new grade appears within one polling tick", async () => {
    const console_ = makeConsole();
    await console_.login("tom", "tompw");
    await console_.showGradeTable(COURSE);
    expect(rendered).not.toContain(">4<"); // stu currently has 3
    server.attempts["stu"]![0]!.effective_score = 4; // grading finished meanwhile
    await console_.pollTick();
    expect(rendered).toContain(">4");
  });

  it("leaving the grade table stops polling", async () => {
    const console_ = makeConsole();
    await console_.login("tom", "tompw");
    await console_.showGradeTable(COURSE);
    await console_.showDetail(COURSE, "integrals", "stu");
    expect(scheduled[0]!.cancelled).toBe(true);
  });

  it("shows the latency telemetry to tutors", async () => {
    const console_ = makeConsole();
    await console_.login("tom", "tompw");
    await console_.showGradeTable(COURSE);
    expect(rendered).toContain('data-role="latency"');
    expect(rendered).toContain("1.2 s");
  });
});

describe("override round trip", () => {
  it("rejects out-of-range scores client-side (no request sent)", async () => {
    const console_ = makeConsole();
    await console_.login("tom", "tompw");
    const sent = server.requests.length;
    const message = await console_.submitOverride("sub-1", 7, "too high", 4);
    expect(message).toContain("between 0 and 4");
    expect(server.requests.length).toBe(sent); // nothing posted
  });

  it("round-trips an override and refreshes the detail pane", async () => {
    const console_ = makeConsole();
    await console_.login("tom", "tompw");
    await console_.showDetail(COURSE, "integrals", "stu");
    const error = await console_.submitOverride("sub-1", 2.5, "partial credit", 4, {
      course: COURSE,
      exercise: "integrals",
      student: "stu",
    });
    expect(error).toBeNull();
    expect(rendered).toContain("Tutor: 2.5 / 4");
    expect(rendered).toContain("partial credit");
    expect(rendered).toContain("Automatic grade: 3 / 4"); // AI grade preserved in history

    // ... and the grade table reflects it on the next poll
    await console_.showGradeTable(COURSE);
    expect(rendered).toContain(">2.5");
  });

  it("concurrent override: the server's answer wins on reconcile", async () => {
    const console_ = makeConsole();
    await console_.login("tom", "tompw");
    await console_.showDetail(COURSE, "integrals", "stu");
    // another tutor changes the grade behind our back
    server.attempts["stu"]![0]!.tutor_score = 1;
    server.attempts["stu"]![0]!.effective_score = 1;
    const error = await console_.submitOverride("sub-1", 3.5, "mine", 4, {
      course: COURSE,
      exercise: "integrals",
      student: "stu",
    });
    expect(error).toBeNull();
    expect(rendered).toContain("Tutor: 3.5 / 4"); // last write wins, reconciled from the server
  });
});
