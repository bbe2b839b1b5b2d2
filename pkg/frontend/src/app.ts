/** DOM wiring for the labeling console: session setup form, batch cards with
 * audio players and spectrogram heatmaps, class picker (keyboard 0-9 on the
 * focused card), submission, progress, and the final accuracy table. */

import { ServiceApi } from "./api.js";
import { LabelingSession } from "./controller.js";
import { drawSpectrogram } from "./spectrogram.js";

const api = new ServiceApi("");
let session: LabelingSession | null = null;

const root = document.getElementById("app") as HTMLElement;

function el(tag: string, cls?: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  if (cls) node.className = cls;
  if (text !== undefined) node.textContent = text;
  return node;
}

function render(): void {
  if (!session) return renderSetup();
  root.replaceChildren();
  root.appendChild(header());
  switch (session.state) {
    case "loading":
    case "waiting":
      root.appendChild(spinner());
      break;
    case "labeling":
      root.appendChild(batchView());
      break;
    case "done":
      root.appendChild(doneView());
      break;
    case "error":
      root.appendChild(errorBanner());
      break;
  }
}

function renderSetup(): void {
  root.replaceChildren();
  const form = el("div", "setup");
  form.appendChild(el("h1", undefined, "Labeling console"));
  const datasetInput = el("input") as HTMLInputElement;
  datasetInput.placeholder = "dataset name (as configured on the server)";
  datasetInput.id = "dataset";
  const startBtn = el("button", "primary", "Start session") as HTMLButtonElement;
  startBtn.onclick = async () => {
    startBtn.disabled = true;
    try {
      session = await LabelingSession.create(
        api,
        { dataset: datasetInput.value || "tones" },
        { onChange: render },
      );
      session.retry();
    } catch (err) {
      alert(`could not create session: ${err}`);
      startBtn.disabled = false;
    }
  };
  form.append(datasetInput, startBtn);
  root.replaceChildren(form);
}

function header(): HTMLElement {
  const s = session!;
  const bar = el("div", "header");
  bar.appendChild(el("span", "title", "Labeling console"));
  bar.appendChild(el("span", "stat", `round ${s.round}/${s.totalRounds}`));
  bar.appendChild(el("span", "stat", `${s.labeled} labeled`));
  if (s.lastAccuracy !== null) {
    bar.appendChild(el("span", "stat", `accuracy ${(s.lastAccuracy * 100).toFixed(1)}%`));
  }
  return bar;
}

function spinner(): HTMLElement {
  const box = el("div", "waiting");
  box.appendChild(el("div", "spin"));
  box.appendChild(el("p", undefined, "model is selecting / retraining..."));
  return box;
}

function errorBanner(): HTMLElement {
  const s = session!;
  const box = el("div", "error-banner");
  box.appendChild(el("p", undefined, `request failed: ${s.lastError ?? "unknown error"}`));
  const retry = el("button", "primary", "Retry") as HTMLButtonElement;
  retry.onclick = () => s.retry();
  box.appendChild(retry);
  return box;
}

function batchView(): HTMLElement {
  const s = session!;
  const wrap = el("div", "batch");
  const list = el("div", "cards");
  s.items.forEach((item, idx) => {
    const card = el("div", "card" + (item.flagged ? " flagged" : ""));
    card.tabIndex = 0;
    card.appendChild(el("div", "card-id", `${idx + 1}. ${item.id}`));

    const canvas = el("canvas", "spect") as HTMLCanvasElement;
    drawSpectrogram(canvas, item.spectrogram);
    card.appendChild(canvas);

    if (item.audioUrl) {
      const audio = el("audio") as HTMLAudioElement;
      audio.controls = true;
      audio.src = item.audioUrl;
      card.appendChild(audio);
    }

    const picker = el("div", "picker");
    s.classes.forEach((name, cls) => {
      const btn = el("button",
        "class-btn" + (item.chosen === cls ? " chosen" : ""),
        `${cls}: ${name}`) as HTMLButtonElement;
      btn.onclick = () => s.setLabel(item.id, cls);
      picker.appendChild(btn);
    });
    card.appendChild(picker);

    card.onkeydown = (ev) => {
      const digit = Number.parseInt(ev.key, 10);
      if (!Number.isNaN(digit) && digit < s.classes.length) {
        s.setLabel(item.id, digit);
      }
    };
    list.appendChild(card);
  });
  wrap.appendChild(list);

  const submit = el("button", "primary submit",
    `Submit labels (${s.labeledCount}/${s.items.length})`) as HTMLButtonElement;
  submit.disabled = !s.canSubmit;
  submit.onclick = () => void s.submit();
  wrap.appendChild(submit);
  return wrap;
}

function doneView(): HTMLElement {
  const s = session!;
  const box = el("div", "done");
  box.appendChild(el("h2", undefined, "Campaign complete"));
  if (s.finalAccuracy !== null) {
    box.appendChild(el("p", undefined,
      `final test accuracy ${(s.finalAccuracy * 100).toFixed(1)}% with ${s.labeled} labels`));
  }
  const table = el("table", "metrics");
  const head = el("tr");
  ["round", "labeled", "accuracy"].forEach((h) => head.appendChild(el("th", undefined, h)));
  table.appendChild(head);
  for (const row of s.metrics) {
    const tr = el("tr");
    tr.appendChild(el("td", undefined, String(row.round)));
    tr.appendChild(el("td", undefined, String(row.labeled)));
    tr.appendChild(el("td", undefined, (row.accuracy * 100).toFixed(1) + "%"));
    table.appendChild(tr);
  }
  box.appendChild(table);
  return box;
}

render();
