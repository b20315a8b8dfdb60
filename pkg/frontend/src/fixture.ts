// In-memory double of the flywheel server implementing the same lease and
// exactly-once semantics: the contract tests run the console against this.

import { FetchFn } from "./api.js";

interface FixtureTask {
  task_id: string;
  sample_id: string;
  question_id: number;
  question_text: string;
  vocabulary: string[];
  answer: string | null;
}

export interface FixtureOptions {
  leaseSeconds?: number;
  iterations?: number;
  tasksPerIteration?: number;
}

export class FixtureServer {
  now = 0;
  iteration = 0;
  awaiting = true;
  tasks: FixtureTask[] = [];
  leases = new Map<string, number>();
  answeredLog: string[] = [];
  accuracyHistory: Record<string, number>[] = [{ "1": 0.4, "2": 0.7 }];
  manualHistory: Record<string, number>[] = [];
  private leaseSeconds: number;
  private maxIterations: number;
  private tasksPerIteration: number;

  constructor(opts: FixtureOptions = {}) {
    this.leaseSeconds = opts.leaseSeconds ?? 600;
    this.maxIterations = opts.iterations ?? 2;
    this.tasksPerIteration = opts.tasksPerIteration ?? 5;
    this.queueRound();
  }

  private queueRound() {
    this.tasks = [];
    for (let i = 0; i < this.tasksPerIteration; i++) {
      this.tasks.push({
        task_id: `${this.iteration}:s${i}:1`,
        sample_id: `s${i}`,
        question_id: 1,
        question_text: "what color is the top?",
        vocabulary: ["black", "red", "green", "blue"],
        answer: null,
      });
    }
    this.awaiting = true;
  }

  outstanding(): FixtureTask[] {
    return this.tasks.filter((t) => t.answer === null);
  }

  fetchFn: FetchFn = async (url, init) => {
    const method = init?.method ?? "GET";
    const json = (body: unknown, status = 200) =>
      new Response(JSON.stringify(body), { status, headers: { "content-type": "application/json" } });

    if (url.endsWith("/api/progress")) {
      return json({
        iteration: this.iteration,
        accuracy: this.accuracyHistory[this.accuracyHistory.length - 1],
        accuracy_history: this.accuracyHistory,
        manual_label_count: {},
        manual_history: this.manualHistory,
        selected_categories: [1],
        awaiting: this.awaiting,
        tasks_outstanding: this.outstanding().length,
        threshold: 0.85,
      });
    }
    if (url.includes("/api/tasks")) {
      const limit = Number(new URL(url, "http://x").searchParams.get("limit") ?? 10);
      const leased = [];
      for (const task of this.outstanding()) {
        if (leased.length >= limit) break;
        const expiry = this.leases.get(task.task_id) ?? -1;
        if (expiry > this.now) continue;
        this.leases.set(task.task_id, this.now + this.leaseSeconds);
        leased.push({
          task_id: task.task_id,
          image_url: `/api/images/${task.sample_id}`,
          mask_url: `/api/masks/${task.sample_id}`,
          question_id: task.question_id,
          question_text: task.question_text,
          vocabulary: task.vocabulary,
        });
      }
      return json({ tasks: leased, outstanding: this.outstanding().length });
    }
    if (url.endsWith("/api/answers") && method === "POST") {
      const items = JSON.parse(String(init?.body)) as { task_id: string; attribute: string }[];
      const accepted: string[] = [];
      const rejected: { task_id: string; reason: string }[] = [];
      for (const item of items) {
        const task = this.tasks.find((t) => t.task_id === item.task_id);
        if (!task) {
          rejected.push({ task_id: item.task_id, reason: "unknown_task" });
          continue;
        }
        if (task.answer !== null) {
          rejected.push({ task_id: item.task_id, reason: "already_answered" });
          continue;
        }
        const expiry = this.leases.get(item.task_id);
        if (expiry === undefined || expiry <= this.now) {
          rejected.push({ task_id: item.task_id, reason: "expired_lease" });
          continue;
        }
        if (!task.vocabulary.includes(item.attribute)) {
          rejected.push({ task_id: item.task_id, reason: "invalid_attribute" });
          continue;
        }
        task.answer = item.attribute;
        this.answeredLog.push(item.task_id);
        accepted.push(item.task_id);
      }
      return json({ accepted, rejected });
    }
    if (url.endsWith("/api/iteration/advance") && method === "POST") {
      if (this.outstanding().length > 0) {
        return json({ detail: "labels still outstanding" }, 409);
      }
      this.manualHistory.push({ "1": this.tasks.length });
      this.iteration += 1;
      const acc = Math.min(1, 0.4 + 0.3 * this.iteration);
      this.accuracyHistory.push({ "1": acc, "2": 0.7 + 0.1 * this.iteration });
      this.leases.clear();
      if (this.iteration < this.maxIterations) {
        this.queueRound();
      } else {
        this.tasks = [];
        this.awaiting = false;
      }
      return json({
        iteration: this.iteration,
        awaiting: this.awaiting,
        mean_accuracy: acc,
        done: !this.awaiting,
      });
    }
    return json({ detail: "not found" }, 404);
  };
}
