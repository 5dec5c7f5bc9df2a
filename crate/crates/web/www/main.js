import init, { Device } from "./pkg/kerrsim_web.js";

const $ = (id) => document.getElementById(id);
const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
let device;
let held = [];

function readDevice() {
  try {
    device = new Device(+$("wr").value, +$("ki").value, +$("ke").value, +$("kk").value);
    $("gamma").value = device.gamma_khz().toFixed(3);
    $("status").textContent = "";
    return true;
  } catch (e) {
    $("status").textContent = e.message ?? String(e);
    return false;
  }
}

function axes(ctx, box, xr, yr, xlabel, ylabel) {
  const { x0, y0, w, h } = box;
  ctx.strokeStyle = "#888";
  ctx.strokeRect(x0, y0, w, h);
  ctx.fillStyle = "#333";
  ctx.font = "12px sans-serif";
  for (let i = 0; i <= 4; i++) {
    const xv = xr[0] + ((xr[1] - xr[0]) * i) / 4;
    const yv = yr[0] + ((yr[1] - yr[0]) * i) / 4;
    ctx.fillText(xv.toFixed(0), x0 + (w * i) / 4 - 10, y0 + h + 15);
    ctx.fillText(yv.toFixed(2), 4, y0 + h - (h * i) / 4 + 4);
  }
  ctx.fillText(xlabel, x0 + w / 2 - 30, y0 + h + 30);
  ctx.fillText(ylabel, x0 + 4, y0 - 6);
}

function plotLines(canvas, series, xlabel, ylabel, yFloor) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const box = { x0: 50, y0: 20, w: canvas.width - 70, h: canvas.height - 60 };
  const xs = series.flatMap((s) => s.pts.map((p) => p[0]));
  const ys = series.flatMap((s) => s.pts.map((p) => p[1]));
  const xr = [Math.min(...xs), Math.max(...xs)];
  const yr = [yFloor ?? Math.min(...ys), Math.max(...ys) * 1.02];
  axes(ctx, box, xr, yr, xlabel, ylabel);
  const sx = (x) => box.x0 + ((x - xr[0]) / (xr[1] - xr[0])) * box.w;
  const sy = (y) => box.y0 + box.h - ((y - yr[0]) / (yr[1] - yr[0])) * box.h;
  series.forEach((s, k) => {
    ctx.strokeStyle = COLORS[k % COLORS.length];
    ctx.beginPath();
    s.pts.forEach(([x, y], i) => (i ? ctx.lineTo(sx(x), sy(y)) : ctx.moveTo(sx(x), sy(y))));
    ctx.stroke();
    ctx.fillStyle = ctx.strokeStyle;
    ctx.fillText(s.label, box.x0 + box.w - 160, box.y0 + 16 + 14 * k);
  });
}

function pairs(flat, n) {
  const out = [];
  for (let i = 0; i < 2 * n; i += 2) out.push([flat[i], flat[i + 1]]);
  return out;
}

function drawS21() {
  const power = +$("s21-power").value;
  const backend = $("s21-backend").value;
  $("s21-power-v").value = power;
  try {
    const flat = device.s21_curve(power, backend, 121);
    const curve = { label: `${backend} ${power} dBm`, pts: pairs(flat, flat.length / 2) };
    held = $("s21-hold").checked ? [...held, curve].slice(-COLORS.length) : [curve];
    plotLines($("s21"), held, "detuning from ω_r − K (kHz)", "|S21|", 0);
  } catch (e) {
    $("status").textContent = e.message ?? String(e);
  }
}

function drawWigner() {
  const power = +$("w-power").value;
  $("w-power-v").value = power;
  const n = 121;
  let w;
  try {
    w = device.wigner_map(power, n);
  } catch (e) {
    $("status").textContent = e.message ?? String(e);
    return;
  }
  const half = w[n * n];
  const canvas = $("wigner");
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(n, n);
  let peak = 0;
  for (let i = 0; i < n * n; i++) peak = Math.max(peak, Math.abs(w[i]));
  // rows are x, columns p; draw x to the right and p upward
  for (let ix = 0; ix < n; ix++) {
    for (let ip = 0; ip < n; ip++) {
      const v = w[ix * n + ip] / peak;
      const o = 4 * ((n - 1 - ip) * n + ix);
      img.data[o] = v > 0 ? 255 : Math.round(255 * (1 + v));
      img.data[o + 1] = Math.round(255 * (1 - Math.abs(v)));
      img.data[o + 2] = v < 0 ? 255 : Math.round(255 * (1 - v));
      img.data[o + 3] = 255;
    }
  }
  const tmp = new OffscreenCanvas(n, n);
  tmp.getContext("2d").putImageData(img, 0, 0);
  ctx.imageSmoothingEnabled = true;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.drawImage(tmp, 0, 0, canvas.width, canvas.height);
  ctx.fillStyle = "#333";
  ctx.fillText(`x, p ∈ [−${half.toFixed(1)}, ${half.toFixed(1)}]`, 8, 16);
}

function drawSqueeze() {
  const power = +$("q-power").value;
  $("q-power-v").value = power;
  const n = 180;
  let s;
  try {
    s = device.squeeze_scan(power, n);
  } catch (e) {
    $("status").textContent = e.message ?? String(e);
    return;
  }
  const deg = 180 / Math.PI;
  const pts = pairs(s, n).map(([t, d]) => [t * deg, d]);
  const [thetaMin, duMin] = s.slice(2 * n);
  $("q-min").value = `minimum ${duMin.toFixed(4)} at θ = ${(thetaMin * deg).toFixed(1)}°`;
  plotLines($("squeeze"), [
    { label: "Δu / Δu(coherent)", pts },
    { label: "coherent", pts: [[-90, 1], [90, 1]] },
  ], "θ (degrees)", "relative spread");
}

function redrawAll() {
  if (!readDevice()) return;
  held = [];
  drawS21();
  drawWigner();
  drawSqueeze();
}

await init();
for (const id of ["wr", "ki", "ke", "kk"]) $(id).addEventListener("change", redrawAll);
$("s21-power").addEventListener("change", drawS21);
$("s21-backend").addEventListener("change", drawS21);
$("w-power").addEventListener("change", drawWigner);
$("q-power").addEventListener("change", drawSqueeze);
redrawAll();
