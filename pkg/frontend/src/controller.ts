/** View-state machine: decides what to fetch and which view to render.
 *  Rendering is a callback (the app passes a DOM sink, tests capture the
 *  string), the clock/poll timer is injectable, and every denied request
 *  lands on a permission notice — never a blank page. */

import { ApiClient, ApiError, type GradeTable, type Metrics } from "./api.js";
import {
  renderCourses,
  renderDetail,
  renderErrorNotice,
  renderGradeTable,
  renderLogin,
  renderOverview,
  renderPermissionNotice,
  renderStatus,
} from "./views.js";

export const DEFAULT_POLL_INTERVAL_MS = 10_000;

export type View = "login" | "courses" | "overview" | "grade-table" | "detail" | "status";

export interface ViewState {
  userId: string | null;
  activeCourse: string | null;
  activeView: View;
  pollIntervalMs: number;
}

type Scheduler = (fn: () => void, ms: number) => () => void;

const intervalScheduler: Scheduler = (fn, ms) => {
  const id = setInterval(fn, ms);
  return () => clearInterval(id);
};

export interface ConsoleOptions {
  pollIntervalMs?: number;
  schedule?: Scheduler;
  now?: () => Date;
}

export class Console {
  state: ViewState;
  roles: Map<string, string[]> = new Map();
  private stopPoll: (() => void) | null = null;
  private schedule: Scheduler;
  private now: () => Date;

  constructor(
    private api: ApiClient,
    private render: (html: string) => void,
    options: ConsoleOptions = {},
  ) {
    this.schedule = options.schedule ?? intervalScheduler;
    this.now = options.now ?? (() => new Date());
    this.state = {
      userId: null,
      activeCourse: null,
      activeView: "login",
      pollIntervalMs: options.pollIntervalMs ?? DEFAULT_POLL_INTERVAL_MS,
    };
    this.render(renderLogin());
  }

  private show(view: View, html: string): void {
    if (view !== "grade-table") this.stopPolling();
    this.state.activeView = view;
    this.render(html);
  }

  /** 401 -> back to login; 403 -> permission notice; else error notice. */
  private fail(error: unknown, what: string): void {
    if (error instanceof ApiError) {
      if (error.status === 401) {
        this.stopPolling();
        this.state.userId = null;
        this.api.token = null;
        this.show("login", renderLogin("Session expired, sign in again."));
        return;
      }
      if (error.status === 403 || error.status === 404) {
        this.show(this.state.activeView, renderPermissionNotice(error.code, what));
        return;
      }
      this.show(this.state.activeView, renderErrorNotice(error.message));
      return;
    }
    this.show(this.state.activeView, renderErrorNotice(String(error)));
  }

  async login(userId: string, secret: string): Promise<boolean> {
    try {
      const reply = await this.api.login(userId, secret);
      this.state.userId = reply.user_id;
    } catch (error) {
      if (error instanceof ApiError) {
        this.show("login", renderLogin(error.message));
        return false;
      }
      throw error;
    }
    await this.showCourses();
    return true;
  }

  async showCourses(): Promise<void> {
    try {
      const reply = await this.api.courses();
      this.roles = new Map(reply.courses.map((c) => [c.course, c.roles]));
      this.show("courses", renderCourses(reply.courses));
    } catch (error) {
      this.fail(error, "the course list");
    }
  }

  async showOverview(course: string): Promise<void> {
    try {
      const reply = await this.api.overview(course);
      this.state.activeCourse = course;
      this.show("overview", renderOverview(course, reply.exercises, this.now()));
    } catch (error) {
      this.fail(error, `the overview of ${course}`);
    }
  }

  async showGradeTable(course: string): Promise<void> {
    try {
      const table = await this.api.grades(course);
      const metrics = await this.metricsOrNull();
      this.state.activeCourse = course;
      this.stopPolling();
      this.state.activeView = "grade-table";
      this.render(renderGradeTable(table, metrics));
      this.stopPoll = this.schedule(() => void this.pollTick(), this.state.pollIntervalMs);
    } catch (error) {
      this.fail(error, `the grade table of ${course}`);
    }
  }

  /** One polling step; re-renders the grade table when it is on screen. */
  async pollTick(): Promise<void> {
    if (this.state.activeView !== "grade-table" || !this.state.activeCourse) return;
    try {
      const table: GradeTable = await this.api.grades(this.state.activeCourse);
      const metrics = await this.metricsOrNull();
      this.render(renderGradeTable(table, metrics));
    } catch (error) {
      this.fail(error, "the grade table");
    }
  }

  stopPolling(): void {
    if (this.stopPoll) {
      this.stopPoll();
      this.stopPoll = null;
    }
  }

  private async metricsOrNull(): Promise<Metrics | null> {
    try {
      return await this.api.metrics();
    } catch {
      return null;
    }
  }

  async showStatus(): Promise<void> {
    try {
      this.show("status", renderStatus(await this.api.metrics()));
    } catch (error) {
      this.fail(error, "the service status");
    }
  }

  private canOverride(course: string): boolean {
    const roles = this.roles.get(course) ?? [];
    return roles.includes("tutor") || roles.includes("admin");
  }

  async showDetail(course: string, exercise: string, student: string): Promise<void> {
    try {
      const detail = await this.api.detail(course, exercise, student);
      this.state.activeCourse = course;
      this.show("detail", renderDetail(detail, this.canOverride(course)));
    } catch (error) {
      this.fail(error, `the submissions of ${student}`);
    }
  }

  /** Client-side validation; returns an error text instead of POSTing when
   *  the score is out of range. */
  validateOverride(score: number, maxPoints: number): string | null {
    if (Number.isNaN(score)) return "Enter a score.";
    if (score < 0 || score > maxPoints) return `Score must lie between 0 and ${maxPoints}.`;
    return null;
  }

  async submitOverride(
    submissionId: string,
    score: number,
    feedback: string,
    maxPoints: number,
    location?: { course: string; exercise: string; student: string },
  ): Promise<string | null> {
    const invalid = this.validateOverride(score, maxPoints);
    if (invalid) return invalid; // nothing sent
    try {
      await this.api.override(submissionId, score, feedback);
    } catch (error) {
      if (error instanceof ApiError) return error.message;
      throw error;
    }
    // reconcile with the server's authoritative state; the grade table
    // itself catches up within one polling interval
    if (location && this.state.activeView === "detail") {
      await this.showDetail(location.course, location.exercise, location.student);
    }
    return null;
  }
}
