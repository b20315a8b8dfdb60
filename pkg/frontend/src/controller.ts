// Headless console controller: the task loop and its bookkeeping, with the
// DOM kept behind a render callback so the logic is testable end to end.
// Stateless across reloads by design: every piece of truth lives on the
// server, and a submitted task id is never submitted twice.

import { ApiClient, ConflictError, Progress, Task } from "./api.js";

export interface ViewState {
  current: Task | null;
  queueSize: number;
  progress: Progress | null;
  notice: string | null;
  canAdvance: boolean;
  done: boolean;
}

export class ConsoleController {
  private queue: Task[] = [];
  private submitted = new Set<string>();
  view: ViewState = {
    current: null,
    queueSize: 0,
    progress: null,
    notice: null,
    canAdvance: false,
    done: false,
  };

  constructor(
    private api: ApiClient,
    private onRender: (view: ViewState) => void = () => {},
    private batchSize = 8,
  ) {}

  private render() {
    this.view.current = this.queue[0] ?? null;
    this.onRender(this.view);
  }

  async refresh(): Promise<void> {
    const progress = await this.api.progress();
    this.view.progress = progress;
    this.view.queueSize = progress.tasks_outstanding;
    this.view.canAdvance = progress.awaiting && progress.tasks_outstanding === 0;
    this.view.done = !progress.awaiting;
    if (this.queue.length === 0 && progress.tasks_outstanding > 0) {
      const res = await this.api.tasks(this.batchSize);
      this.queue = res.tasks.filter((t) => !this.submitted.has(t.task_id));
      this.view.queueSize = res.outstanding;
    }
    this.render();
  }

  /** Submit the chosen option for the task at the head of the queue. */
  async answerCurrent(optionIndex: number): Promise<void> {
    const task = this.queue[0];
    if (!task) return;
    if (optionIndex < 0 || optionIndex >= task.vocabulary.length) return;
    if (this.submitted.has(task.task_id)) {
      this.queue.shift();
      this.render();
      return;
    }
    const result = await this.api.answers([
      { task_id: task.task_id, attribute: task.vocabulary[optionIndex] },
    ]);
    this.queue.shift();
    if (result.accepted.includes(task.task_id)) {
      this.submitted.add(task.task_id);
      this.view.notice = null;
    } else {
      const reason = result.rejected.find((r) => r.task_id === task.task_id)?.reason;
      if (reason === "expired_lease") {
        // the lease lapsed: the task re-queues server-side, tell the operator
        this.view.notice = `lease expired for ${task.task_id}; task re-queued`;
      } else if (reason === "already_answered") {
        this.submitted.add(task.task_id);
      } else {
        this.view.notice = `answer rejected (${reason ?? "unknown"})`;
      }
    }
    await this.refresh();
  }

  async advance(): Promise<boolean> {
    try {
      const result = await this.api.advance();
      this.view.notice = null;
      this.view.done = result.done;
      this.submitted.clear();
      await this.refresh();
      return true;
    } catch (err) {
      if (err instanceof ConflictError) {
        this.view.notice = "labels still outstanding";
        await this.refresh();
        return false;
      }
      throw err;
    }
  }
}
