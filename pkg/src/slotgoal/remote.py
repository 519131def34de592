"""HTTP image-edit backend and a local stub server speaking the same contract.

Wire contract (JSON over HTTP POST):

    request   {"image": <base64 PNG>, "prompt": <string>}
    response  {"image": <base64 PNG>}

Credentials, if any, are sent as ``Authorization: Bearer <key>`` where the
key comes from the SLOTGOAL_API_KEY environment variable unless passed in.
"""

from __future__ import annotations

import base64
import http.client
import io
import json
import os
import socket
import threading
import urllib.error
import urllib.request
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable

import numpy as np
from PIL import Image

API_KEY_ENV = "SLOTGOAL_API_KEY"
PROMPT_TEMPLATE = (
    "The image shows a robot workspace with a tray of slots. Instruction: {instruction} "
    "Render a single small solid blue sphere marker at the described slot; change nothing else."
)


class BackendError(RuntimeError):
    def __init__(self, message: str, endpoint: str = "", detail: str = ""):
        self.endpoint = endpoint
        self.detail = detail
        super().__init__(f"{message} [{endpoint}]" + (f": {detail}" if detail else ""))


class TransportError(BackendError):
    """Network-level failure: refused, reset, timed out, dropped."""


class DimensionMismatch(BackendError):
    """The returned image was resized, which breaks pixel alignment with the depth map."""


class BackendRefusal(BackendError):
    """Malformed, non-200, or image-less response."""


def encode_png(rgb: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(rgb, dtype=np.uint8)).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_png(data: str) -> np.ndarray:
    raw = base64.b64decode(data, validate=True)
    with Image.open(io.BytesIO(raw)) as im:
        return np.array(im.convert("RGB"))


class RemoteBackend:
    """Single-flight client: concurrent ``ground`` calls are serialized."""

    def __init__(self, endpoint: str, timeout: float = 60.0, api_key: str | None = None,
                 prompt_template: str = PROMPT_TEMPLATE):
        self.endpoint = endpoint
        self.timeout = timeout
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.prompt_template = prompt_template
        self._lock = threading.Lock()

    def prompt(self, instruction_text: str) -> str:
        return self.prompt_template.format(instruction=instruction_text)

    def ground(self, head_rgb: np.ndarray, instruction_text: str) -> np.ndarray:
        body = json.dumps({"image": encode_png(head_rgb), "prompt": self.prompt(instruction_text)}).encode()
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        req = urllib.request.Request(self.endpoint, data=body, headers=headers, method="POST")
        with self._lock:
            try:
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    payload = resp.read()
            except urllib.error.HTTPError as e:
                raise BackendRefusal("backend returned an error status", self.endpoint, f"HTTP {e.code}") from e
            except (urllib.error.URLError, http.client.HTTPException, OSError) as e:
                raise TransportError("request failed", self.endpoint, repr(e)) from e
        try:
            doc = json.loads(payload)
            edited = decode_png(doc["image"])
        except (ValueError, KeyError, TypeError, OSError) as e:
            raise BackendRefusal("malformed response", self.endpoint, repr(e)) from e
        if edited.shape != head_rgb.shape:
            raise DimensionMismatch(
                "edited image size differs from input", self.endpoint,
                f"sent {head_rgb.shape[1]}x{head_rgb.shape[0]}, got {edited.shape[1]}x{edited.shape[0]}",
            )
        return edited


def remote_backend(endpoint: str, **kwargs) -> RemoteBackend:
    return RemoteBackend(endpoint, **kwargs)


# ---------------------------------------------------------------------------
# stub server

DROP = object()
Responder = Callable[[np.ndarray, str], object]


def echo(image: np.ndarray, prompt: str):
    return image


def resize_to(width: int, height: int) -> Responder:
    def respond(image, prompt):
        return np.array(Image.fromarray(image).resize((width, height)))
    return respond


def drop(image, prompt):
    return DROP


def status(code: int) -> Responder:
    """Answer every request with a bare HTTP error status."""
    return lambda image, prompt: code


class _Handler(BaseHTTPRequestHandler):
    server: "StubServer"

    def log_message(self, fmt, *args):
        pass

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        try:
            doc = json.loads(self.rfile.read(length))
            image = decode_png(doc["image"])
            prompt = str(doc["prompt"])
        except (ValueError, KeyError, TypeError, OSError):
            self.send_error(400, "expected {image, prompt}")
            return
        self.server.requests.append({"prompt": prompt, "authorization": self.headers.get("Authorization")})
        result = self.server.responder(image, prompt)
        if result is DROP:
            self.close_connection = True
            self.connection.shutdown(socket.SHUT_RDWR)
            return
        if isinstance(result, int):
            self.send_error(result)
            return
        body = json.dumps({"image": encode_png(result)}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


class StubServer(ThreadingHTTPServer):
    """Local server implementing the wire contract with a pluggable responder.

    A responder returns an RGB array to send back, ``DROP`` to cut the
    connection without answering, or an int to reply with that HTTP status.

    Usable as a context manager; ``url`` is ready once the block is entered.
    """

    daemon_threads = True

    def __init__(self, responder: Responder = echo, host: str = "127.0.0.1", port: int = 0):
        super().__init__((host, port), _Handler)
        self.responder = responder
        self.requests: list[dict] = []  # {"prompt", "authorization"} per accepted request
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}/edit"

    def start(self) -> "StubServer":
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self.shutdown()
        self.server_close()
        if self._thread:
            self._thread.join()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
