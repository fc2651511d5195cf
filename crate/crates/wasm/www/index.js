import init, { phase_curves, arm_trajectories, fringe } from "./pkg/gravphase_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => parseFloat($(id).value);
const colors = ["#1f5fa8", "#c0392b", "#2e8b57", "#888"];

function rows(flat, width) {
  const out = [];
  for (let i = 0; i + width <= flat.length; i += width) out.push(Array.from(flat.slice(i, i + width)));
  return out;
}

// series: [[x, y], ...] per line
function plot(series, xlabel, ylabel, names) {
  const c = $("plot"), g = c.getContext("2d");
  g.clearRect(0, 0, c.width, c.height);
  const pts = series.flat();
  let [x0, x1] = [Math.min(...pts.map((p) => p[0])), Math.max(...pts.map((p) => p[0]))];
  let [y0, y1] = [Math.min(...pts.map((p) => p[1])), Math.max(...pts.map((p) => p[1]))];
  if (y1 - y0 < 1e-12) { y0 -= 0.05; y1 += 0.05; }
  const pad = 50, w = c.width - 2 * pad, h = c.height - 2 * pad;
  const X = (x) => pad + ((x - x0) / (x1 - x0)) * w;
  const Y = (y) => pad + h - ((y - y0) / (y1 - y0)) * h;
  g.strokeStyle = "#000";
  g.strokeRect(pad, pad, w, h);
  g.fillStyle = "#000";
  g.fillText(xlabel, pad + w / 2 - 20, c.height - 10);
  g.fillText(ylabel, 5, pad - 10);
  g.fillText(y1.toPrecision(3), 5, pad + 4);
  g.fillText(y0.toPrecision(3), 5, pad + h);
  g.fillText(x0.toPrecision(3), pad, pad + h + 15);
  g.fillText(x1.toPrecision(3), pad + w - 30, pad + h + 15);
  series.forEach((s, k) => {
    g.strokeStyle = colors[k % colors.length];
    g.beginPath();
    s.forEach(([x, y], i) => (i ? g.lineTo(X(x), Y(y)) : g.moveTo(X(x), Y(y))));
    g.stroke();
    g.fillStyle = g.strokeStyle;
    g.fillText(names[k], pad + w - 120, pad + 15 + 15 * k);
  });
}

function run(f) {
  $("status").textContent = "computing...";
  setTimeout(() => {
    try {
      f();
      $("status").textContent = "";
    } catch (e) {
      $("status").textContent = String(e);
    }
  }, 10);
}

$("curves").onclick = () => run(() => {
  const r = rows(phase_curves(num("apex"), num("radius"), 5), 3);
  plot([r.map((x) => [x[0], x[1]]), r.map((x) => [x[0], x[2]])], "P1", "delta phi (rad)", ["quantum", "semiclassical"]);
  $("table").textContent = "P1      quantum     semiclassical\n" +
    r.map((x) => `${x[0].toFixed(2)}  ${x[1].toFixed(5)}  ${x[2].toFixed(5)}`).join("\n");
});

$("paths").onclick = () => run(() => {
  const r = rows(arm_trajectories(num("apex"), num("radius"), num("p1")), 5);
  const names = ["upper arm", "lower arm", "centre of mass", "ring"];
  plot(names.map((_, k) => r.map((x) => [x[0], x[k + 1]])), "t (s)", "z (m)", names);
  $("table").textContent = `${r.length} samples, falling frame, z up`;
});

$("fringe").onclick = () => run(() => {
  const flat = fringe(num("apex"), num("radius"), num("p1"), 64);
  const [fit, contrast] = flat.slice(-2);
  const r = rows(flat.slice(0, -2), 2);
  plot([r], "reference phase (rad)", "P(d1)", ["port d1"]);
  $("table").textContent = `fitted phase ${fit.toFixed(6)} rad, contrast ${contrast.toFixed(4)}`;
});

await init();
