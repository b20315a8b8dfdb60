// DOM glue: renders the current task card, the answer buttons, queue badge,
// notices, and the progress chart; polls the server every two seconds.

import { ApiClient } from "./api.js";
import { renderChart } from "./chart.js";
import { ConsoleController, ViewState } from "./controller.js";
import { bindHotkeys } from "./hotkeys.js";

const POLL_MS = 2000;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function render(view: ViewState, controller: ConsoleController) {
  el<HTMLSpanElement>("queue-badge").textContent = String(view.queueSize);
  el<HTMLDivElement>("notice").textContent = view.notice ?? "";
  el<HTMLDivElement>("notice").style.display = view.notice ? "block" : "none";

  const card = el<HTMLDivElement>("task-card");
  const advanceBtn = el<HTMLButtonElement>("advance");
  advanceBtn.disabled = !view.canAdvance;

  if (view.done) {
    card.innerHTML = "<p>flywheel complete: every category cleared the trigger</p>";
  } else if (!view.current) {
    card.innerHTML = "<p>no leased tasks; waiting for the queue</p>";
  } else {
    const t = view.current;
    const options = t.vocabulary
      .map(
        (word, i) =>
          `<button class="option" data-index="${i}"><kbd>${i + 1}</kbd> ${word}</button>`,
      )
      .join(" ");
    card.innerHTML = `
      <div class="imgwrap">
        <img id="task-image" src="${t.image_url}" width="256" alt="sample"/>
        <img id="task-mask" src="${t.mask_url}" width="256" alt="mask overlay"
             style="display:none;position:absolute;left:0;top:0;opacity:0.5"/>
      </div>
      <label><input type="checkbox" id="mask-toggle"/> highlight parts</label>
      <p class="question">${t.question_text}</p>
      <div class="options">${options}</div>`;
    card.querySelectorAll<HTMLButtonElement>("button.option").forEach((btn) => {
      btn.onclick = () => controller.answerCurrent(Number(btn.dataset.index));
    });
    const toggle = card.querySelector<HTMLInputElement>("#mask-toggle");
    const mask = card.querySelector<HTMLImageElement>("#task-mask");
    if (toggle && mask) {
      toggle.onchange = () => (mask.style.display = toggle.checked ? "block" : "none");
    }
  }

  if (view.progress) {
    el<HTMLDivElement>("chart").innerHTML = renderChart(view.progress);
    el<HTMLSpanElement>("iteration").textContent = String(view.progress.iteration);
  }
}

export function start() {
  const api = new ApiClient((url, init) => fetch(url, init));
  const controller = new ConsoleController(api, (view) => render(view, controller));
  bindHotkeys(
    window,
    (i) => void controller.answerCurrent(i),
    () => void controller.advance(),
  );
  el<HTMLButtonElement>("advance").onclick = () => void controller.advance();

  const poll = async () => {
    try {
      await controller.refresh();
      el<HTMLDivElement>("stale").style.display = "none";
    } catch {
      el<HTMLDivElement>("stale").style.display = "block";
    }
  };
  void poll();
  setInterval(poll, POLL_MS);
}

if (typeof document !== "undefined" && document.getElementById("task-card")) {
  start();
}
