// Latest-wins state mailbox: the render loop always reads the freshest
// snapshot and stale frames are simply replaced before they are drawn.

import { StateMsg } from "./protocol.js";

export interface ViewState {
  latest: StateMsg | null;
  connected: boolean;
  lastError: string;
  lastAck: string;
  framesReceived: number;
  framesDropped: number;
}

export function makeViewState(): ViewState {
  return {
    latest: null,
    connected: false,
    lastError: "",
    lastAck: "",
    framesReceived: 0,
    framesDropped: 0,
  };
}

export function pushState(view: ViewState, msg: StateMsg): void {
  if (view.latest !== null && view.latest.t >= msg.t) {
    view.framesDropped += 1;
    if (view.latest.t > msg.t) return; // out-of-order frame: keep the newer one
  }
  if (view.latest !== null) view.framesDropped += 0;
  view.latest = msg;
  view.framesReceived += 1;
}

export function takeLatest(view: ViewState): StateMsg | null {
  return view.latest;
}
