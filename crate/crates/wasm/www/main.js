import init, { identifyDemo, subspaceDemo } from "./pkg/frsid_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function frame(canvas, title) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.fillStyle = "#000";
  ctx.fillText(title, 8, 14);
  return ctx;
}

function dot(ctx, x, y, color, r = 3) {
  ctx.fillStyle = color;
  ctx.beginPath();
  ctx.arc(x, y, r, 0, 2 * Math.PI);
  ctx.fill();
}

function drawPoles(canvas, truth, est) {
  const ctx = frame(canvas, "poles (black true, red estimated)");
  const c = canvas.width / 2, s = canvas.width * 0.4;
  ctx.strokeStyle = "#999";
  ctx.beginPath();
  ctx.arc(c, c, s, 0, 2 * Math.PI);
  ctx.stroke();
  truth.forEach((z) => dot(ctx, c + s * z.re, c - s * z.im, "#000", 4));
  est.forEach((z) => dot(ctx, c + s * z.re, c - s * z.im, "#d00", 2));
}

function drawLogBars(canvas, values, title) {
  const ctx = frame(canvas, title);
  const lo = -16, hi = Math.log10(Math.max(...values, 1e-300));
  const w = (canvas.width - 20) / values.length, h = canvas.height - 30;
  values.forEach((v, i) => {
    const t = (Math.log10(Math.max(v, 1e-16)) - lo) / (hi - lo + 1e-12);
    ctx.fillStyle = "#36c";
    ctx.fillRect(10 + i * w, 20 + h * (1 - t), Math.max(w - 1, 1), h * t);
  });
}

function drawLines(canvas, series, title) {
  const ctx = frame(canvas, title);
  const all = series.flatMap((s) => s.y);
  const lo = Math.min(...all), hi = Math.max(...all);
  const h = canvas.height - 30, w = canvas.width - 20;
  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.beginPath();
    s.y.forEach((v, i) => {
      const x = 10 + (w * i) / (s.y.length - 1);
      const y = 20 + h * (1 - (v - lo) / (hi - lo || 1));
      i ? ctx.lineTo(x, y) : ctx.moveTo(x, y);
    });
    ctx.stroke();
  }
}

function runIdentify() {
  const r = JSON.parse(identifyDemo(num("n"), num("m"), num("p"), num("nt"), num("snr"), num("q"), num("l"), num("seed")));
  drawPoles($("poles"), r.true_poles, r.est_poles);
  drawLogBars($("sv"), r.singular_values, "singular values (log)");
  drawLines($("resp"), [{ y: r.y_true, color: "#000" }, { y: r.y_est, color: "#d00" }], "validation output, channel 1");
  $("identify-out").textContent =
    `order ${r.order}   NEE ${r.nee === null ? "-" : r.nee.toExponential(3)}   validation MSE ${r.mse.toExponential(3)}` +
    (r.warnings.length ? "\n" + r.warnings.join("\n") : "");
}

function runSubspace() {
  const pts = JSON.parse(subspaceDemo(num("rows"), num("rank"), num("cols"), num("width"), num("seed")));
  drawLines($("rankplot"), [{ y: pts.map((p) => p.rank), color: "#36c" }], "rank of sketched matrix vs sketch width");
  $("subspace-out").textContent = pts
    .map((p) => `N_c ${String(p.n_c).padStart(3)}  rank ${String(p.rank).padStart(3)}  distance ${p.distance.toExponential(2)}`)
    .join("\n");
}

function guarded(f) {
  return () => {
    $("status").textContent = "";
    try {
      f();
    } catch (e) {
      $("status").textContent = String(e);
    }
  };
}

await init();
$("run-identify").onclick = guarded(runIdentify);
$("run-subspace").onclick = guarded(runSubspace);
guarded(runIdentify)();
