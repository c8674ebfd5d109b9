/** Typed client for the documented REST schema (docs/rest-schema.json).
 *  Every call goes through one request helper; no endpoint outside the
 *  schema is ever contacted. */

export interface LoginReply {
  token: string;
  user_id: string;
  display_name: string;
  expires_at: string;
}

export interface CourseEntry {
  course: string;
  roles: string[];
}

export interface OverviewRow {
  name: string;
  deadline: string | null;
  n_tries: number;
  attempts_used: number;
  effective_score: number | null;
  max_points: number;
  needs_review: boolean;
  ex_type: string;
}

export interface GradeCell {
  effective_score: number | null;
  needs_review: boolean;
  attempts_used: number;
}

export interface GradeTable {
  course: string;
  exercises: { name: string; max_points: number }[];
  students: string[];
  cells: GradeCell[][];
}

export interface TestResultView {
  test_id: string;
  question: string;
  reply: string;
  points: number;
  status: string;
}

export interface AttemptView {
  submission_id: string;
  attempt_index: number;
  content: string;
  submitted_at: string;
  test_results: TestResultView[];
  ai_score: number | null;
  ai_feedback: string;
  tutor_score: number | null;
  tutor_feedback: string | null;
  needs_review: boolean;
  effective_score: number | null;
  feedback_latency_s: number | null;
}

export interface SubmissionDetail {
  course: string;
  exercise: string;
  student: string;
  task: string;
  max_points: number;
  attempts: AttemptView[];
}

export interface OverrideReply {
  submission_id: string;
  ai_score: number | null;
  ai_feedback: string;
  tutor_score: number;
  tutor_feedback: string;
  effective_score: number;
  needs_review: boolean;
}

export interface Metrics {
  graded_submissions: number;
  average_feedback_latency_s: number | null;
  median_feedback_latency_s: number | null;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message || code);
  }
}

export class ApiClient {
  token: string | null = null;

  constructor(
    private baseUrl: string = "",
    private fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = {};
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    if (body !== undefined) headers["Content-Type"] = "application/json";
    const response = await this.fetchImpl(this.baseUrl + path, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    let payload: unknown = null;
    try {
      payload = await response.json();
    } catch {
      payload = null;
    }
    if (!response.ok) {
      const err = (payload ?? {}) as { code?: string; message?: string };
      throw new ApiError(response.status, err.code ?? "error", err.message ?? "request failed");
    }
    return payload as T;
  }

  async login(userId: string, secret: string): Promise<LoginReply> {
    const reply = await this.request<LoginReply>("POST", "/api/login", {
      user_id: userId,
      secret,
    });
    this.token = reply.token;
    return reply;
  }

  courses(): Promise<{ courses: CourseEntry[] }> {
    return this.request("GET", "/api/courses");
  }

  overview(course: string): Promise<{ course: string; exercises: OverviewRow[] }> {
    return this.request("GET", `/api/courses/${encodeURIComponent(course)}/overview`);
  }

  grades(course: string): Promise<GradeTable> {
    return this.request("GET", `/api/courses/${encodeURIComponent(course)}/grades`);
  }

  detail(course: string, exercise: string, student: string): Promise<SubmissionDetail> {
    return this.request(
      "GET",
      `/api/courses/${encodeURIComponent(course)}/exercises/${encodeURIComponent(exercise)}/students/${encodeURIComponent(student)}`,
    );
  }

  override(submissionId: string, score: number, feedback: string): Promise<OverrideReply> {
    return this.request("POST", `/api/submissions/${encodeURIComponent(submissionId)}/override`, {
      score,
      feedback,
    });
  }

  metrics(): Promise<Metrics> {
    return this.request("GET", "/api/metrics");
  }
}
