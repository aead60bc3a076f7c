"""HTTP server exposing the mock backends over the same wire contract as live ones.

Routes (POST, JSON):
  /v1/chat/completions  {"model", "messages": [{role, content}], "temperature"}
                        -> {"choices": [{"message": {"role": "assistant", "content": ...}}]}
  /v1/detect            {"image": base64 PNG, "queries": [...], "image_id"?}
                        -> [{"box": [x_min, y_min, x_max, y_max], "score", "label"}]
"""
from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .language import ChatPrompt, Message, MockLlm, MockVlm

logger = logging.getLogger(__name__)

CHAT_PATH = "/v1/chat/completions"
DETECT_PATH = "/v1/detect"


def _handler(llm: MockLlm | None, vlm: MockVlm | None):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, fmt, *args):
            logger.debug(fmt, *args)

        def _reply(self, code: int, doc) -> None:
            body = json.dumps(doc).encode("utf-8")
            self.send_response(code)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_POST(self):
            try:
                n = int(self.headers.get("Content-Length", 0))
                req = json.loads(self.rfile.read(n) or b"{}")
            except (ValueError, json.JSONDecodeError):
                return self._reply(400, {"error": "invalid JSON"})
            if self.path == CHAT_PATH and llm is not None:
                try:
                    msgs = tuple(Message(m["role"], m["content"]) for m in req["messages"])
                    prompt = ChatPrompt(msgs)
                except (KeyError, TypeError, ValueError) as exc:
                    return self._reply(400, {"error": str(exc)})
                content = llm.complete(prompt)
                return self._reply(200, {"choices": [{"message": {"role": "assistant", "content": content}}]})
            if self.path == DETECT_PATH and vlm is not None:
                if "image" not in req or not isinstance(req.get("queries"), list):
                    return self._reply(400, {"error": "need image and queries"})
                dets = vlm.detect(None, req["queries"], image_id=req.get("image_id"))
                return self._reply(200, [{"box": list(d.box), "score": d.score, "label": d.label} for d in dets])
            return self._reply(404, {"error": f"no route {self.path}"})

    return Handler


def make_server(llm: MockLlm | None, vlm: MockVlm | None, host: str = "127.0.0.1", port: int = 0):
    return ThreadingHTTPServer((host, port), _handler(llm, vlm))


def serve_in_background(llm, vlm, host: str = "127.0.0.1", port: int = 0):
    """Start a server thread; returns ``(server, base_url)``. Call ``server.shutdown()`` to stop."""
    server = make_server(llm, vlm, host, port)
    threading.Thread(target=server.serve_forever, daemon=True).start()
    h, p = server.server_address[:2]
    return server, f"http://{h}:{p}"
