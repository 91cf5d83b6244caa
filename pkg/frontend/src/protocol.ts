// Wire protocol types mirroring the bridge service. Unknown inbound frames
// are dropped by the guard rather than crashing the render loop.

export const PROTOCOL_VERSION = 1;

export interface EffectorState {
  x: number;
  y: number;
  heading: number;
  radius: number;
  mode: "disabled" | "enabling" | "enabled" | "disabling";
  transition_remaining: number;
  contact_cmd: number;
  tau: number;
}

export interface MarkerState {
  x: number;
  y: number;
  heading: number;
  age: number;
}

export interface StateMsg {
  type: "state";
  version: number;
  t: number;
  mode: string;
  owned_effector: number | null;
  recording: boolean;
  task: string;
  box: { parts: number[][][] };
  box_pose: number[];
  target: { parts: number[][][] };
  effectors: EffectorState[];
  supports: number[][];
  marker: MarkerState;
  push_error: number;
  reach_free: number;
  reach_supported: number;
  base: number[];
  episode_clock: number;
  ghost: number[][][] | null;
}

export interface HelloMsg {
  type: "hello";
  version: number;
  n_effectors: number;
  task: string;
  mode: string;
}

export interface AckMsg {
  type: "ack";
  of: string;
  detail: string;
}

export interface ErrorMsg {
  type: "error";
  message: string;
}

export type ServerMsg = StateMsg | HelloMsg | AckMsg | ErrorMsg;

export type ClientMsg =
  | { type: "teleop"; effector: number; vx: number; vy: number; wz: number; timestamp: number }
  | { type: "mode"; mode: "teleoperation" | "autonomous" | "shared"; owned_effector?: number }
  | { type: "record"; action: "start" | "stop" | "discard" }
  | { type: "episode"; action: "reset"; task: "reach" | "push-t" | "push-u"; seed: number }
  | { type: "contact_toggle"; effector: number };

const SERVER_TYPES = new Set(["state", "hello", "ack", "error"]);

export function parseServerMsg(raw: string): ServerMsg | null {
  let obj: unknown;
  try {
    obj = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof obj !== "object" || obj === null) return null;
  const t = (obj as { type?: unknown }).type;
  if (typeof t !== "string" || !SERVER_TYPES.has(t)) return null;
  if (t === "state") {
    const s = obj as StateMsg;
    if (!Array.isArray(s.effectors) || !s.box || !Array.isArray(s.box.parts)) return null;
  }
  return obj as ServerMsg;
}

export function encodeClientMsg(msg: ClientMsg): string {
  return JSON.stringify(msg);
}
