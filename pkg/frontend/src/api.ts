// Typed client for the flywheel HTTP API. All server state is the truth;
// the console never caches anything it could lose on reload.

export interface Task {
  task_id: string;
  image_url: string;
  mask_url: string;
  question_id: number;
  question_text: string;
  vocabulary: string[];
}

export interface TasksResponse {
  tasks: Task[];
  outstanding: number;
}

export interface Progress {
  iteration: number;
  accuracy: Record<string, number>;
  accuracy_history: Record<string, number>[];
  manual_label_count: Record<string, number>;
  manual_history: Record<string, number>[];
  selected_categories: number[];
  awaiting: boolean;
  tasks_outstanding: number;
  threshold: number;
}

export interface AnswerResult {
  accepted: string[];
  rejected: { task_id: string; reason: string }[];
}

export interface AdvanceResult {
  iteration: number;
  awaiting: boolean;
  mean_accuracy: number;
  done: boolean;
}

export type FetchFn = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(private fetchFn: FetchFn, private base = "") {}

  private async get<T>(path: string): Promise<T> {
    const res = await this.fetchFn(this.base + path);
    if (!res.ok) throw new Error(`GET ${path} -> ${res.status}`);
    return (await res.json()) as T;
  }

  progress(): Promise<Progress> {
    return this.get<Progress>("/api/progress");
  }

  tasks(limit: number): Promise<TasksResponse> {
    return this.get<TasksResponse>(`/api/tasks?limit=${limit}`);
  }

  async answers(items: { task_id: string; attribute: string }[]): Promise<AnswerResult> {
    const res = await this.fetchFn(this.base + "/api/answers", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(items),
    });
    if (!res.ok) throw new Error(`POST /api/answers -> ${res.status}`);
    return (await res.json()) as AnswerResult;
  }

  async advance(): Promise<AdvanceResult> {
    const res = await this.fetchFn(this.base + "/api/iteration/advance", { method: "POST" });
    if (res.status === 409) throw new ConflictError("labels still outstanding");
    if (!res.ok) throw new Error(`POST /api/iteration/advance -> ${res.status}`);
    return (await res.json()) as AdvanceResult;
  }
}

export class ConflictError extends Error {}
