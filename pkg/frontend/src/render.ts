// Canvas rendering of the planar world. Red = contact enabled, blue =
// disabled, pulsing while a transition is in progress.

import { Camera, worldToCanvas } from "./input.js";
import { StateMsg } from "./protocol.js";

const COLORS = {
  table: "#f4f1ea",
  box: "#8a8d91",
  boxEdge: "#55585c",
  target: "#2e9e4f",
  enabled: "#d64045",
  disabled: "#3a7bd5",
  support: "rgba(46, 158, 79, 0.25)",
  supportEdge: "#2e9e4f",
  reach: "rgba(58, 123, 213, 0.35)",
  reachSupported: "rgba(214, 64, 69, 0.30)",
  marker: "#e3a008",
  ghost: "rgba(58, 123, 213, 0.45)",
  text: "#2b2b2b",
};

function tracePolygon(ctx: CanvasRenderingContext2D, cam: Camera, ring: number[][]) {
  ctx.beginPath();
  ring.forEach(([x, y], i) => {
    const [px, py] = worldToCanvas(cam, x, y);
    if (i === 0) ctx.moveTo(px, py);
    else ctx.lineTo(px, py);
  });
  ctx.closePath();
}

export function effectorColor(state: StateMsg["effectors"][number], nowMs: number): string {
  const base =
    state.mode === "enabled" || state.mode === "enabling" ? COLORS.enabled : COLORS.disabled;
  if (state.mode === "enabling" || state.mode === "disabling") {
    // Pulse while the transition runs.
    const phase = 0.5 + 0.5 * Math.sin(nowMs / 90);
    return phase > 0.5 ? base : "#ffffff";
  }
  return base;
}

export function render(
  ctx: CanvasRenderingContext2D,
  cam: Camera,
  state: StateMsg | null,
  connected: boolean,
  nowMs: number,
  selected: number,
): void {
  const { canvas } = ctx;
  ctx.fillStyle = COLORS.table;
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  if (state === null || !connected) {
    ctx.fillStyle = "rgba(20, 20, 20, 0.55)";
    ctx.fillRect(0, 0, canvas.width, canvas.height);
    ctx.fillStyle = "#ffffff";
    ctx.font = "24px sans-serif";
    ctx.textAlign = "center";
    ctx.fillText(
      connected ? "waiting for state…" : "disconnected",
      canvas.width / 2,
      canvas.height / 2,
    );
    return;
  }

  // Reach disks around the base.
  const [bx, by] = state.base;
  for (const [radius, color] of [
    [state.reach_supported, COLORS.reachSupported],
    [state.reach_free, COLORS.reach],
  ] as [number, string][]) {
    const [px, py] = worldToCanvas(cam, bx, by);
    ctx.beginPath();
    ctx.setLineDash([6, 6]);
    ctx.arc(px, py, radius * cam.scale, 0, 2 * Math.PI);
    ctx.strokeStyle = color;
    ctx.lineWidth = 1.5;
    ctx.stroke();
    ctx.setLineDash([]);
  }

  // Support regions.
  for (const [cx, cy, r] of state.supports) {
    const [px, py] = worldToCanvas(cam, cx, cy);
    ctx.beginPath();
    ctx.arc(px, py, r * cam.scale, 0, 2 * Math.PI);
    ctx.fillStyle = COLORS.support;
    ctx.fill();
    ctx.strokeStyle = COLORS.supportEdge;
    ctx.lineWidth = 1;
    ctx.stroke();
  }

  // Target outline then box.
  for (const part of state.target.parts) {
    tracePolygon(ctx, cam, part);
    ctx.strokeStyle = COLORS.target;
    ctx.lineWidth = 2;
    ctx.setLineDash([5, 4]);
    ctx.stroke();
    ctx.setLineDash([]);
  }
  for (const part of state.box.parts) {
    tracePolygon(ctx, cam, part);
    ctx.fillStyle = COLORS.box;
    ctx.fill();
    ctx.strokeStyle = COLORS.boxEdge;
    ctx.lineWidth = 1.5;
    ctx.stroke();
  }

  // Marker.
  {
    const [px, py] = worldToCanvas(cam, state.marker.x, state.marker.y);
    ctx.beginPath();
    ctx.arc(px, py, 5, 0, 2 * Math.PI);
    ctx.fillStyle = COLORS.marker;
    ctx.fill();
  }

  // Ghost polylines of the policy's predicted horizon.
  if (state.ghost) {
    ctx.strokeStyle = COLORS.ghost;
    ctx.lineWidth = 2;
    for (const line of state.ghost) {
      ctx.beginPath();
      line.forEach(([x, y], i) => {
        const [px, py] = worldToCanvas(cam, x, y);
        if (i === 0) ctx.moveTo(px, py);
        else ctx.lineTo(px, py);
      });
      ctx.stroke();
    }
  }

  // Effectors.
  state.effectors.forEach((eff, i) => {
    const [px, py] = worldToCanvas(cam, eff.x, eff.y);
    ctx.beginPath();
    ctx.arc(px, py, eff.radius * cam.scale, 0, 2 * Math.PI);
    ctx.fillStyle = effectorColor(eff, nowMs);
    ctx.fill();
    ctx.strokeStyle = i === selected ? "#000000" : "#666666";
    ctx.lineWidth = i === selected ? 3 : 1;
    ctx.stroke();
    if (eff.mode === "enabling" || eff.mode === "disabling") {
      ctx.fillStyle = COLORS.text;
      ctx.font = "12px sans-serif";
      ctx.textAlign = "center";
      ctx.fillText(`${eff.transition_remaining.toFixed(1)}s`, px, py - eff.radius * cam.scale - 6);
    }
    if (state.owned_effector === i) {
      ctx.fillStyle = COLORS.text;
      ctx.font = "11px sans-serif";
      ctx.textAlign = "center";
      ctx.fillText("you", px, py + 4);
    }
  });

  // HUD.
  ctx.fillStyle = COLORS.text;
  ctx.font = "14px monospace";
  ctx.textAlign = "left";
  const hud = [
    `t=${state.episode_clock.toFixed(1)}s  mode=${state.mode}  task=${state.task}`,
    state.task.startsWith("push") ? `error=${state.push_error.toFixed(2)}` : "",
    state.recording ? "● REC" : "",
  ].filter(Boolean);
  hud.forEach((line, i) => ctx.fillText(line, 12, 22 + 18 * i));
}
