/** For every (route x role) pair the console must end up on the allowed
 *  view or a permission notice — matching the server's documented
 *  authorization matrix, with the scripted mock enforcing the schema. */

import { beforeEach, describe, expect, it } from "vitest";

import schema from "../../docs/rest-schema.json";
import { ApiClient } from "../src/api.js";
import { Console } from "../src/controller.js";
import { COURSE, MockServer } from "./mock_server.js";

const ROLES = ["stu", "tom", "ada", "uma"] as const;

let server: MockServer;
let rendered: string;

function makeConsole(): Console {
  server = new MockServer();
  rendered = "";
  const api = new ApiClient("", server.fetch);
  return new Console(api, (html) => {
    rendered = html;
  }, { schedule: () => () => {}, now: () => new Date("2026-05-04T12:00:00Z") });
}

function viewOf(html: string): string {
  const match = html.match(/data-view="([^"]+)"/);
  return match?.[1] ?? "none";
}

function allowedFor(route: keyof typeof schema.routes, user: string): boolean {
  const allowed: string[] = schema.routes[route].allowed_roles;
  if (allowed.includes("public") || allowed.includes("authenticated")) return true;
  const roles = server.accounts[user]?.roles ?? [];
  return roles.some((r) => allowed.includes(r));
}

describe("route x role matrix", () => {
  beforeEach(() => {
    makeConsole();
  });

  it("login succeeds for every account and fails for bad credentials", async () => {
    for (const user of ROLES) {
      const console_ = makeConsole();
      expect(await console_.login(user, server.accounts[user]!.secret)).toBe(true);
    }
    const console_ = makeConsole();
    expect(await console_.login("stu", "wrong")).toBe(false);
    expect(viewOf(rendered)).toBe("login");
    expect(rendered).toContain("data-role=\"login-error\"");
  });

  it("overview: enrolled roles see it, the unenrolled get a notice", async () => {
    for (const user of ROLES) {
      const console_ = makeConsole();
      await console_.login(user, server.accounts[user]!.secret);
      await console_.showOverview(COURSE);
      const expected = allowedFor("overview", user) ? "overview" : "permission-notice";
      expect(viewOf(rendered), `overview as ${user}`).toBe(expected);
    }
  });

  it("grade table: tutors and admins only", async () => {
    for (const user of ROLES) {
      const console_ = makeConsole();
      await console_.login(user, server.accounts[user]!.secret);
      await console_.showGradeTable(COURSE);
      const expected = allowedFor("grades", user) ? "grade-table" : "permission-notice";
      expect(viewOf(rendered), `grades as ${user}`).toBe(expected);
      console_.stopPolling();
    }
  });

  it("detail: self access for students, full access for reviewers", async () => {
    const expectations: Record<string, string> = {
      stu: "detail", // own submissions
      tom: "detail",
      ada: "detail",
      uma: "permission-notice",
    };
    for (const user of ROLES) {
      const console_ = makeConsole();
      await console_.login(user, server.accounts[user]!.secret);
      await console_.showDetail(COURSE, "integrals", "stu");
      expect(viewOf(rendered), `detail of stu as ${user}`).toBe(expectations[user]!);
    }
    // a student asking for someone else's detail is denied
    const console_ = makeConsole();
    await console_.login("sue", "suepw");
    await console_.showDetail(COURSE, "integrals", "stu");
    expect(viewOf(rendered)).toBe("permission-notice");
  });

  it("override: students get a denial message, tutors succeed", async () => {
    const consoleStu = makeConsole();
    await consoleStu.login("stu", "stupw");
    const denied = await consoleStu.submitOverride("sub-1", 2, "no", 4);
    expect(denied).toBeTruthy();

    const consoleTom = makeConsole();
    await consoleTom.login("tom", "tompw");
    const ok = await consoleTom.submitOverride("sub-1", 2, "fixed", 4);
    expect(ok).toBeNull();
  });

  it("status/metrics: any authenticated session", async () => {
    for (const user of ROLES) {
      const console_ = makeConsole();
      await console_.login(user, server.accounts[user]!.secret);
      await console_.showStatus();
      expect(viewOf(rendered), `status as ${user}`).toBe("status");
    }
  });

  it("denied views render a notice, never a blank page", async () => {
    const console_ = makeConsole();
    await console_.login("stu", "stupw");
    await console_.showGradeTable(COURSE);
    expect(rendered.trim().length).toBeGreaterThan(0);
    expect(rendered).toContain("Not available");
  });
});
