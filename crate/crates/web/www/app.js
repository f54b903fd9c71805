import init, { decodeWav, synthUtterance, enhanceSsdrc, fitPsychometric, anovaOneway } from "./pkg/wssdrc_web.js";

const RATE = 16000;
const $ = (id) => document.getElementById(id);
let audioCtx = null;
let original = null;
let enhanced = null;

function show(id, text, isError = false) {
  const el = $(id);
  el.textContent = text;
  el.className = isError ? "out err" : "out";
}

function play(samples) {
  audioCtx ??= new AudioContext();
  const buf = audioCtx.createBuffer(1, samples.length, RATE);
  buf.copyToChannel(Float32Array.from(samples), 0);
  const src = audioCtx.createBufferSource();
  src.buffer = buf;
  src.connect(audioCtx.destination);
  src.start();
}

// x and y ranges, then a list of {xs, ys, color, dots}
function plot(canvas, [x0, x1], [y0, y1], series, { logX = false, xLabel = "", yLabel = "" } = {}) {
  const g = canvas.getContext("2d");
  const W = canvas.width, H = canvas.height, L = 50, B = 30;
  const fx = logX ? Math.log10 : (v) => v;
  const px = (x) => L + ((fx(x) - fx(x0)) / (fx(x1) - fx(x0))) * (W - L - 10);
  const py = (y) => H - B - ((y - y0) / (y1 - y0)) * (H - B - 10);
  g.clearRect(0, 0, W, H);
  g.strokeStyle = "#999";
  g.strokeRect(L, 10, W - L - 10, H - B - 10);
  g.fillStyle = "#444";
  g.font = "11px sans-serif";
  g.fillText(xLabel, W / 2, H - 5);
  g.fillText(yLabel, 2, 20);
  g.fillText(String(y0), 2, H - B);
  g.fillText(String(y1), 2, 20 + 12);
  for (const s of series) {
    g.strokeStyle = g.fillStyle = s.color;
    g.beginPath();
    s.xs.forEach((x, i) => {
      if (x < x0 || x > x1) return;
      const y = Math.min(Math.max(s.ys[i], y0), y1);
      if (s.dots) g.fillRect(px(x) - 3, py(y) - 3, 6, 6);
      else i === 0 ? g.moveTo(px(x), py(y)) : g.lineTo(px(x), py(y));
    });
    if (!s.dots) g.stroke();
  }
}

function runEnhance(samples) {
  try {
    const r = JSON.parse(enhanceSsdrc(samples, RATE));
    original = samples;
    enhanced = r.samples;
    $("play-in").disabled = $("play-out").disabled = false;
    const all = r.input_spectrum.level_db.concat(r.output_spectrum.level_db).filter((v, i) => i > 0);
    const top = Math.ceil(Math.max(...all) / 10) * 10;
    plot($("spec"), [50, 8000], [top - 80, top], [
      { xs: r.input_spectrum.freq_hz, ys: r.input_spectrum.level_db, color: "#999" },
      { xs: r.output_spectrum.freq_hz, ys: r.output_spectrum.level_db, color: "#16c" },
    ], { logX: true, xLabel: "Hz", yLabel: "dB" });
    show("enh-out",
      `${(samples.length / RATE).toFixed(2)} s\n` +
      `high/low band energy ratio gain  x${r.tilt_gain.toFixed(2)}\n` +
      `envelope std  ${r.envelope_std_in_db.toFixed(2)} dB -> ${r.envelope_std_out_db.toFixed(2)} dB\n` +
      `energy change ${r.energy_change_db.toExponential(2)} dB`);
  } catch (e) {
    show("enh-out", String(e), true);
  }
}

function runFit() {
  try {
    const points = $("points").value.trim().split("\n").filter((l) => l.trim())
      .map((l) => l.split(/[,\s]+/).filter(Boolean).map(Number));
    const r = JSON.parse(fitPsychometric(JSON.stringify({ points })));
    const xs = r.curve.map((p) => p[0]);
    plot($("curve"), [xs[0], xs[xs.length - 1]], [0, 1], [
      { xs, ys: r.curve.map((p) => p[1]), color: "#16c" },
      { xs: points.map((p) => p[0]), ys: points.map((p) => p[1]), color: "#c41", dots: true },
    ], { xLabel: "SNR (dB)", yLabel: "p" });
    show("fit-out",
      `midpoint ${r.midpoint_db.toFixed(2)} dB, slope ${r.slope.toFixed(3)} /dB\n` +
      `SRT (nearest tested SNR) ${r.srt_db} dB`);
  } catch (e) {
    show("fit-out", String(e), true);
  }
}

function runAnova() {
  try {
    const groups = $("groups").value.trim().split("\n").filter((l) => l.trim())
      .map((l) => l.split(/[,\s]+/).filter(Boolean).map(Number));
    const r = JSON.parse(anovaOneway(JSON.stringify(groups)));
    show("anova-out",
      `F(${r.df_between}, ${r.df_within}) = ${r.f_value.toFixed(3)}\n` +
      `p = ${r.p_value.toExponential(3)}\n` +
      `SS between ${r.ss_between.toFixed(2)}, SS within ${r.ss_within.toFixed(2)}`);
  } catch (e) {
    show("anova-out", String(e), true);
  }
}

await init();
let seed = 1;
$("synth").onclick = () => runEnhance(synthUtterance(seed++, 2.0));
$("wav").onchange = async (ev) => {
  const f = ev.target.files[0];
  if (!f) return;
  try {
    runEnhance(decodeWav(new Uint8Array(await f.arrayBuffer())));
  } catch (e) {
    show("enh-out", String(e), true);
  }
};
$("play-in").onclick = () => play(original);
$("play-out").onclick = () => play(enhanced);
$("fit").onclick = runFit;
$("anova").onclick = runAnova;
runFit();
runAnova();
