// Pointer-to-velocity teleoperation mapping. A drag away from the stick
// anchor commands a planar velocity proportional to the drag vector, capped
// at the configured maximum. Pure functions so the mapping is unit-testable.

export interface TeleopGains {
  gain: number; // (m/s) per meter of drag in world units
  maxSpeed: number; // m/s
  deadzone: number; // meters of drag ignored
}

export const DEFAULT_GAINS: TeleopGains = { gain: 2.0, maxSpeed: 0.25, deadzone: 0.004 };

export interface DragState {
  active: boolean;
  anchor: [number, number]; // world coordinates at pointer-down
  current: [number, number];
}

export function dragToVelocity(drag: DragState, gains: TeleopGains): [number, number] {
  if (!drag.active) return [0, 0];
  const dx = drag.current[0] - drag.anchor[0];
  const dy = drag.current[1] - drag.anchor[1];
  const len = Math.hypot(dx, dy);
  if (len <= gains.deadzone) return [0, 0];
  let vx = dx * gains.gain;
  let vy = dy * gains.gain;
  const speed = Math.hypot(vx, vy);
  if (speed > gains.maxSpeed) {
    vx *= gains.maxSpeed / speed;
    vy *= gains.maxSpeed / speed;
  }
  return [vx, vy];
}

// Canvas <-> world transform. World y points away from the robot (up on
// screen), so the canvas y axis is flipped.

export interface Camera {
  scale: number; // pixels per meter
  cx: number; // canvas x of world origin
  cy: number; // canvas y of world origin
}

export function worldToCanvas(cam: Camera, x: number, y: number): [number, number] {
  return [cam.cx + x * cam.scale, cam.cy - y * cam.scale];
}

export function canvasToWorld(cam: Camera, px: number, py: number): [number, number] {
  return [(px - cam.cx) / cam.scale, (cam.cy - py) / cam.scale];
}

export function fitCamera(width: number, height: number): Camera {
  // Table span of interest: x in [-0.75, 0.75], y in [-0.15, 1.0].
  const scale = Math.min(width / 1.5, height / 1.15);
  return { scale, cx: width / 2, cy: height * 0.92 };
}
