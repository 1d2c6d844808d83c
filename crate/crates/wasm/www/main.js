import init, { theta_c, free_energy_curve, MetropolisDemo, BreatherDemo } from "./pkg/dnls_wasm.js";

const $ = (id) => document.getElementById(id);

function heat(canvas, masses, side) {
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(side, side);
  let max = 0;
  for (const m of masses) max = Math.max(max, m);
  const scale = Math.log1p(max) || 1;
  masses.forEach((m, i) => {
    const v = Math.log1p(m) / scale;
    img.data[4 * i] = 255 * Math.min(1, 2 * v);
    img.data[4 * i + 1] = 255 * Math.max(0, 2 * v - 1);
    img.data[4 * i + 2] = 80 * (1 - v);
    img.data[4 * i + 3] = 255;
  });
  const off = new OffscreenCanvas(side, side);
  off.getContext("2d").putImageData(img, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(off, 0, 0, canvas.width, canvas.height);
}

function drawCurve() {
  const b = parseFloat($("curve-b").value);
  $("curve-b-val").textContent = b.toFixed(2);
  const betaMax = 6 / (b * b);
  const pts = free_energy_curve(b, betaMax, 400);
  const canvas = $("curve");
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height, pad = 36;
  ctx.clearRect(0, 0, w, h);
  let fMin = Infinity, fMax = -Infinity;
  for (let i = 0; i < pts.length; i += 3) { fMin = Math.min(fMin, pts[i + 1]); fMax = Math.max(fMax, pts[i + 1]); }
  const x = (beta) => pad + (w - 2 * pad) * beta / betaMax;
  const yF = (f) => h - pad - (h - 2 * pad) * (f - fMin) / (fMax - fMin || 1);
  const yA = (a) => h - pad - (h - 2 * pad) * a;
  const line = (color, yOf, k) => {
    ctx.strokeStyle = color; ctx.beginPath();
    for (let i = 0; i < pts.length; i += 3) ctx[i ? "lineTo" : "moveTo"](x(pts[i]), yOf(pts[i + k]));
    ctx.stroke();
  };
  ctx.lineWidth = 2;
  line("#1f5fa8", yF, 1);
  line("#c0392b", yA, 2);
  ctx.fillStyle = "#222";
  ctx.fillText("beta", w - pad, h - 10);
  ctx.fillStyle = "#1f5fa8"; ctx.fillText("F(beta, B)", pad, 14);
  ctx.fillStyle = "#c0392b"; ctx.fillText("a/B", pad + 90, 14);
  const bc = theta_c() / (b * b);
  ctx.strokeStyle = "#999"; ctx.setLineDash([4, 4]); ctx.lineWidth = 1;
  ctx.beginPath(); ctx.moveTo(x(bc), pad); ctx.lineTo(x(bc), h - pad); ctx.stroke(); ctx.setLineDash([]);
}

let chain = null;
function resetChain() {
  const side = parseInt($("mc-side").value, 10);
  chain = new MetropolisDemo(side, parseFloat($("mc-theta").value), 16, BigInt(Date.now() % 1e6));
  chain.side = side;
}

function chainFrame() {
  chain.sweep(4);
  heat($("mc"), chain.masses(), chain.side);
  $("mc-out").textContent =
    `theta          ${chain.theta().toFixed(3)}\n` +
    `M1/N           ${chain.mass_fraction().toFixed(4)}\n` +
    `a/B (n -> inf) ${chain.fraction_exact().toFixed(4)}\n` +
    `H/n            ${chain.energy_density().toFixed(2)}`;
  requestAnimationFrame(chainFrame);
}

let breather = null;
function breatherFrame() {
  if (!breather) return;
  breather.advance(40, parseFloat($("br-dt").value));
  heat($("br"), breather.masses(), breather.side());
  $("br-out").textContent =
    `t              ${breather.time().toFixed(2)}\n` +
    `mode           ${breather.mode_vertex()} (start ${breather.start_vertex()})\n` +
    `mode changes   ${breather.mode_changes()}\n` +
    `M1/N           ${breather.mass_fraction().toFixed(4)}\n` +
    `|N(t)/N(0)-1|  ${breather.power_drift().toExponential(2)}`;
  requestAnimationFrame(breatherFrame);
}

await init();
$("thetac").textContent = theta_c().toFixed(6);
$("curve-b").addEventListener("input", drawCurve);
drawCurve();

$("mc-theta").addEventListener("input", () => {
  $("mc-theta-val").textContent = $("mc-theta").value;
  chain.set_theta(parseFloat($("mc-theta").value));
});
$("mc-side").addEventListener("change", resetChain);
$("mc-reset").addEventListener("click", resetChain);
resetChain();
requestAnimationFrame(chainFrame);

$("br-start").addEventListener("click", () => {
  const running = breather !== null;
  breather?.free();
  breather = new BreatherDemo(16, parseFloat($("br-theta").value), 8, BigInt(Date.now() % 1e6), 400);
  if (!running) requestAnimationFrame(breatherFrame);
});
