// Progress chart as a deterministic SVG string: bars for manual label
// counts per iteration, lines for per-category accuracy, dashed rule at
// the trigger threshold.

import { Progress } from "./api.js";

const W = 640;
const H = 320;
const PAD = 36;

const COLORS = [
  "#4477aa", "#ee6677", "#228833", "#ccbb44", "#66ccee",
  "#aa3377", "#bbbbbb", "#994455", "#997700", "#004488",
];

function colorFor(i: number): string {
  return COLORS[i % COLORS.length];
}

export function renderChart(progress: Progress): string {
  const history = progress.accuracy_history;
  const manual = progress.manual_history;
  const iterations = history.length;
  const categories = Array.from(
    new Set(history.flatMap((h) => Object.keys(h))),
  ).sort((a, b) => Number(a) - Number(b));

  const x = (it: number) =>
    PAD + ((W - 2 * PAD) * (iterations <= 1 ? 0.5 : it / (iterations - 1)));
  const yAcc = (v: number) => H - PAD - (H - 2 * PAD) * v;
  const maxCount = Math.max(1, ...manual.map((m) =>
    Object.values(m).reduce((a, b) => Math.max(a, b), 0)));
  const yCount = (v: number) => (H - 2 * PAD) * (v / maxCount) * 0.4;

  const parts: string[] = [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${W}" height="${H}" viewBox="0 0 ${W} ${H}">`,
    `<rect width="${W}" height="${H}" fill="white"/>`,
  ];

  // manual-count bars, grouped per iteration
  manual.forEach((counts, it) => {
    const group = categories.filter((c) => (counts[c] ?? 0) > 0);
    const bw = Math.max(2, 24 / Math.max(1, group.length));
    group.forEach((cat, k) => {
      const h = yCount(counts[cat] ?? 0);
      const cx = x(it) + (k - group.length / 2) * bw;
      parts.push(
        `<rect x="${cx.toFixed(1)}" y="${(H - PAD - h).toFixed(1)}" width="${bw.toFixed(1)}" ` +
          `height="${h.toFixed(1)}" fill="${colorFor(categories.indexOf(cat))}" opacity="0.35"/>`,
      );
    });
  });

  // accuracy lines
  categories.forEach((cat, ci) => {
    const pts = history
      .map((h, it) => (cat in h ? `${x(it).toFixed(1)},${yAcc(h[cat]).toFixed(1)}` : null))
      .filter((p): p is string => p !== null);
    if (pts.length > 0) {
      parts.push(
        `<polyline points="${pts.join(" ")}" fill="none" stroke="${colorFor(ci)}" stroke-width="1.5"/>`,
      );
    }
  });

  // threshold rule and axes
  const yThr = yAcc(progress.threshold).toFixed(1);
  parts.push(
    `<line x1="${PAD}" y1="${yThr}" x2="${W - PAD}" y2="${yThr}" stroke="black" stroke-dasharray="4 3"/>`,
    `<line x1="${PAD}" y1="${H - PAD}" x2="${W - PAD}" y2="${H - PAD}" stroke="black"/>`,
    `<line x1="${PAD}" y1="${PAD}" x2="${PAD}" y2="${H - PAD}" stroke="black"/>`,
    `<text x="${PAD}" y="${PAD - 10}" font-size="11">accuracy per category (lines) / manual labels (bars)</text>`,
  );
  for (let it = 0; it < iterations; it++) {
    parts.push(
      `<text x="${x(it).toFixed(1)}" y="${H - PAD + 16}" font-size="10" text-anchor="middle">${it}</text>`,
    );
  }
  parts.push("</svg>");
  return parts.join("\n");
}
