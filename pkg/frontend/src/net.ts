// Websocket connection with automatic reconnect and a latest-wins mailbox.

import { ClientMsg, encodeClientMsg, parseServerMsg, ServerMsg } from "./protocol.js";
import { pushState, ViewState } from "./view.js";

export interface Connection {
  send: (msg: ClientMsg) => boolean;
  close: () => void;
}

export function connect(
  url: string,
  view: ViewState,
  onMsg?: (msg: ServerMsg) => void,
): Connection {
  let ws: WebSocket | null = null;
  let closed = false;

  const open = () => {
    ws = new WebSocket(url);
    ws.onopen = () => {
      view.connected = true;
    };
    ws.onmessage = (ev: MessageEvent) => {
      const msg = parseServerMsg(String(ev.data));
      if (msg === null) return;
      if (msg.type === "state") pushState(view, msg);
      else if (msg.type === "error") view.lastError = msg.message;
      else if (msg.type === "ack") view.lastAck = `${msg.of}: ${msg.detail}`;
      if (onMsg) onMsg(msg);
    };
    ws.onclose = () => {
      view.connected = false;
      if (!closed) setTimeout(open, 1000);
    };
    ws.onerror = () => ws?.close();
  };
  open();

  return {
    send: (msg: ClientMsg) => {
      if (ws !== null && ws.readyState === WebSocket.OPEN) {
        ws.send(encodeClientMsg(msg));
        return true;
      }
      return false;
    },
    close: () => {
      closed = true;
      ws?.close();
    },
  };
}
