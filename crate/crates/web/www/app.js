import init, { simulate, hypotheses, m4_search } from "./pkg/caginalp_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function nonlinearity() {
  const kind = $("nl-kind").value;
  const p1 = num("nl-p1"), p2 = num("nl-p2");
  switch (kind) {
    case "hoffman_jiang": return { kind, a: p1, b: p2 };
    case "power_law": return { kind, r1: p1, r2: p2 };
    case "linear": return { kind, slope: p1 };
    default: return { kind };
  }
}

function cosine(prefix) {
  return { kind: "cosine", mean: num(prefix + "-mean"), amplitude: num(prefix + "-amp"), modes: [num(prefix + "-k")] };
}

function call(fn, request, out) {
  try {
    return JSON.parse(fn(JSON.stringify(request)));
  } catch (e) {
    out.textContent = String(e.message ?? e);
    out.className = "err";
    return null;
  }
}

// Draws each series as a polyline over a shared bounding box.
function plot(canvas, x, series, opts = {}) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 36;
  ctx.clearRect(0, 0, w, h);
  const ys = series.flatMap((s) => s.y).filter(Number.isFinite);
  if (!ys.length) return;
  let lo = opts.ymin ?? Math.min(...ys), hi = opts.ymax ?? Math.max(...ys);
  if (hi - lo < 1e-12) { lo -= 1; hi += 1; }
  const x0 = x[0], x1 = x[x.length - 1];
  const px = (v) => pad + ((v - x0) / (x1 - x0)) * (w - 2 * pad);
  const py = (v) => h - pad + ((lo - v) / (hi - lo)) * (h - 2 * pad);

  ctx.strokeStyle = "#999";
  ctx.fillStyle = "#333";
  ctx.font = "11px sans-serif";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  if (lo < 0 && hi > 0) {
    ctx.beginPath(); ctx.moveTo(pad, py(0)); ctx.lineTo(w - pad, py(0)); ctx.stroke();
  }
  ctx.fillText(hi.toPrecision(3), 2, pad + 4);
  ctx.fillText(lo.toPrecision(3), 2, h - pad + 4);
  ctx.fillText(x0.toPrecision(3), pad, h - pad + 14);
  ctx.fillText(x1.toPrecision(3), w - pad - 24, h - pad + 14);

  series.forEach((s, i) => {
    ctx.strokeStyle = s.color;
    ctx.beginPath();
    s.y.forEach((v, k) => {
      const yv = Math.min(Math.max(v, lo), hi);
      k ? ctx.lineTo(px(x[k]), py(yv)) : ctx.moveTo(px(x[k]), py(yv));
    });
    ctx.stroke();
    ctx.fillStyle = s.color;
    ctx.fillText(s.label, w - pad - 80, pad + 14 + 13 * i);
  });
  if (opts.marker) {
    ctx.fillStyle = "#c00";
    ctx.beginPath();
    ctx.arc(px(opts.marker[0]), py(Math.min(Math.max(opts.marker[1], lo), hi)), 4, 0, 2 * Math.PI);
    ctx.fill();
  }
}

let sim = null;

function drawFrame() {
  if (!sim) return;
  const k = num("frame");
  $("frame-t").textContent = `t = ${sim.t[k].toFixed(4)}`;
  const all = sim.u.flat().concat(sim.phi.flat());
  plot($("profiles"), sim.x, [
    { y: sim.u[k], color: "#c0392b", label: "u" },
    { y: sim.phi[k], color: "#2471a3", label: "φ" },
  ], { ymin: Math.min(...all), ymax: Math.max(...all) });
}

function runSimulation() {
  const info = $("sim-info");
  info.className = "";
  info.textContent = "running…";
  const request = {
    nodes: num("nodes"), dt: num("dt"), t_end: num("tend"), latent_heat: num("latent"),
    nonlinearity: nonlinearity(), u0: cosine("u"), phi0: cosine("phi"),
    method: $("method").value, frames: 80,
  };
  const started = performance.now();
  const res = call(simulate, request, info);
  if (!res) return;
  sim = res;
  $("frame").max = res.t.length - 1;
  $("frame").value = res.t.length - 1;
  drawFrame();
  plot($("norms"), res.t, [
    { y: res.u_l2, color: "#c0392b", label: "‖u‖₂" },
    { y: res.phi_l2, color: "#2471a3", label: "‖φ‖₂" },
  ]);
  const drift = Math.max(...res.conserved.map((c) => Math.abs(c - res.conserved[0])));
  info.textContent = `${res.method}, ${res.iterations} iterations, ` +
    `max drift of ∫(u + lφ) = ${drift.toExponential(2)}, ${(performance.now() - started).toFixed(0)} ms`;
}

function runHypotheses() {
  const out = $("h-out");
  out.className = "";
  const res = call(hypotheses, { nonlinearity: nonlinearity(), box: num("h-box"), samples: num("h-samples") }, out);
  if (!res) return;
  plot($("curve"), res.curve.z, [{ y: res.curve.f, color: "#1e8449", label: "F(z)" }]);
  out.textContent = res.reports
    .map((r) => `${r.hypothesis.padEnd(9)} ${r.verdict.padEnd(13)} ${r.constant_estimate ?? "-"}${r.note ? "  (" + r.note + ")" : ""}`)
    .join("\n");
}

function runSearch() {
  const out = $("m4-out");
  out.className = "";
  const request = {
    nonlinearity: nonlinearity(), alpha: num("m4-alpha"), beta: num("m4-beta"),
    p: num("m4-p"), r: num("m4-r"), box: num("m4-box"),
  };
  const res = call(m4_search, request, out);
  if (!res) return;
  const w = res.witness;
  const gap = res.gap.f.map((g) => Math.sign(g) * Math.log10(1 + Math.abs(g)));
  plot($("gap"), res.gap.z, [{ y: gap, color: "#7d3c98", label: "signed log₁₀(1+|lhs−rhs|)" }],
    w && w.z >= 0 ? { marker: [w.z, Math.sign(w.lhs - w.rhs) * Math.log10(1 + Math.abs(w.lhs - w.rhs))] } : {});
  out.textContent = w
    ? `violated at z = ${w.z}: lhs = ${w.lhs}, rhs = ${w.rhs}`
    : "no violation found in the search box";
}

await init();
$("run").addEventListener("click", runSimulation);
$("frame").addEventListener("input", drawFrame);
$("check").addEventListener("click", runHypotheses);
$("search").addEventListener("click", runSearch);
