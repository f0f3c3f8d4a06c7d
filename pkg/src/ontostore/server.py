"""Run the HTTP app in a background thread (tests, benchmarks, follower setups)."""
from __future__ import annotations

import threading
import time

import uvicorn

from .api import create_app
from .engine.platform import Platform


class ServerThread:
    """A uvicorn server on an ephemeral localhost port."""

    def __init__(self, platform: Platform, host: str = "127.0.0.1", port: int = 0):
        self.platform = platform
        config = uvicorn.Config(create_app(platform), host=host, port=port, log_level="warning", access_log=False)
        self.server = uvicorn.Server(config)
        self.thread = threading.Thread(target=self.server.run, daemon=True, name="http")

    def start(self, timeout: float = 10.0) -> "ServerThread":
        self.thread.start()
        deadline = time.monotonic() + timeout
        while not self.server.started:
            if not self.thread.is_alive() or time.monotonic() > deadline:
                raise RuntimeError("HTTP server failed to start")
            time.sleep(0.01)
        return self

    @property
    def url(self) -> str:
        host, port = self.server.servers[0].sockets[0].getsockname()[:2]
        return f"http://{host}:{port}"

    def stop(self) -> None:
        self.server.should_exit = True
        self.thread.join(timeout=10)

    def __enter__(self) -> "ServerThread":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


__all__ = ["ServerThread"]
