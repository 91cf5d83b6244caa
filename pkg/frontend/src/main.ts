// Cockpit entry point: wires the websocket, pointer teleoperation, session
// controls, and the render loop.

import { canvasToWorld, DEFAULT_GAINS, DragState, dragToVelocity, fitCamera } from "./input.js";
import { connect } from "./net.js";
import { render } from "./render.js";
import { makeViewState, takeLatest } from "./view.js";

const TELEOP_HZ = 30;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function main() {
  const canvas = el<HTMLCanvasElement>("scene");
  const ctx = canvas.getContext("2d")!;
  const toast = el<HTMLDivElement>("toast");
  const view = makeViewState();

  const proto = location.protocol === "https:" ? "wss" : "ws";
  const conn = connect(`${proto}://${location.host}/ws`, view, (msg) => {
    if (msg.type === "error") showToast(msg.message);
    if (msg.type === "ack") showToast(`${msg.of} ok` + (msg.detail ? `: ${msg.detail}` : ""));
  });

  let toastTimer = 0;
  function showToast(text: string) {
    toast.textContent = text;
    toast.style.opacity = "1";
    window.clearTimeout(toastTimer);
    toastTimer = window.setTimeout(() => (toast.style.opacity = "0"), 2500);
  }

  let selected = 0;
  const drag: DragState = { active: false, anchor: [0, 0], current: [0, 0] };
  let cam = fitCamera(canvas.width, canvas.height);

  function resize() {
    canvas.width = canvas.clientWidth;
    canvas.height = canvas.clientHeight;
    cam = fitCamera(canvas.width, canvas.height);
  }
  window.addEventListener("resize", resize);
  resize();

  canvas.addEventListener("pointerdown", (ev) => {
    const world = canvasToWorld(cam, ev.offsetX, ev.offsetY);
    const state = takeLatest(view);
    if (state) {
      // Clicking near an effector selects it.
      let best = -1;
      let bestD = 0.06;
      state.effectors.forEach((eff, i) => {
        const d = Math.hypot(eff.x - world[0], eff.y - world[1]);
        if (d < bestD) {
          best = i;
          bestD = d;
        }
      });
      if (best >= 0) selected = best;
    }
    drag.active = true;
    drag.anchor = world;
    drag.current = world;
    canvas.setPointerCapture(ev.pointerId);
  });
  canvas.addEventListener("pointermove", (ev) => {
    if (drag.active) drag.current = canvasToWorld(cam, ev.offsetX, ev.offsetY);
  });
  const endDrag = () => {
    drag.active = false;
  };
  canvas.addEventListener("pointerup", endDrag);
  canvas.addEventListener("pointercancel", endDrag);

  window.addEventListener("keydown", (ev) => {
    if (ev.key === " ") {
      conn.send({ type: "contact_toggle", effector: selected });
      ev.preventDefault();
    } else if (ev.key >= "1" && ev.key <= "4") {
      selected = Number(ev.key) - 1;
    }
  });

  // Teleop stream at 30 Hz; zero-velocity frames keep the dead-man alive
  // while the pointer is down.
  window.setInterval(() => {
    const [vx, vy] = dragToVelocity(drag, DEFAULT_GAINS);
    conn.send({
      type: "teleop",
      effector: selected,
      vx,
      vy,
      wz: 0,
      timestamp: performance.now() / 1000,
    });
  }, 1000 / TELEOP_HZ);

  // Session controls.
  el<HTMLButtonElement>("mode-teleop").onclick = () =>
    conn.send({ type: "mode", mode: "teleoperation" });
  el<HTMLButtonElement>("mode-auto").onclick = () =>
    conn.send({ type: "mode", mode: "autonomous" });
  el<HTMLButtonElement>("mode-shared").onclick = () =>
    conn.send({ type: "mode", mode: "shared", owned_effector: selected });
  el<HTMLButtonElement>("rec-start").onclick = () =>
    conn.send({ type: "record", action: "start" });
  el<HTMLButtonElement>("rec-stop").onclick = () => conn.send({ type: "record", action: "stop" });
  el<HTMLButtonElement>("rec-discard").onclick = () =>
    conn.send({ type: "record", action: "discard" });
  el<HTMLButtonElement>("reset").onclick = () => {
    const task = el<HTMLSelectElement>("task").value as "reach" | "push-t" | "push-u";
    const seed = Number(el<HTMLInputElement>("seed").value) || 0;
    conn.send({ type: "episode", action: "reset", task, seed });
  };

  function frame(nowMs: number) {
    render(ctx, cam, takeLatest(view), view.connected, nowMs, selected);
    requestAnimationFrame(frame);
  }
  requestAnimationFrame(frame);
}

main();
