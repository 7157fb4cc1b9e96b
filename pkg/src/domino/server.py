"""Line-delimited JSON protocol over TCP for driving the environment.

One connection owns one episode lifecycle. Requests are single JSON
objects, one per line (UTF-8, newline 0x0A, at most 1 MiB):

    {"request": "spec"}
    {"request": "reset", "seed": 7}
    {"request": "step", "action": [0.25, -0.5]}
    {"request": "close"}

Replies are {"ok": true, "payload": ...} or
{"error": true, "code": ..., "message": ...}; protocol errors leave the
session usable. Handlers share no mutable state, so concurrent
connections hold fully independent episodes.
"""

from __future__ import annotations

import json
import logging
import socketserver
import threading

import numpy as np

from .env import EpisodeConfig, EpisodeFinishedError, OscillatorEnv
from .topology import partition_leaves

MAX_LINE = 1 << 20

log = logging.getLogger("domino.server")


def _ok(payload):
    return {"ok": True, "payload": payload}


def _err(code, message):
    return {"error": True, "code": code, "message": message}


def spec_payload(config: EpisodeConfig):
    leaves = partition_leaves(config.network).leaves
    return {
        "n_nodes": config.network.n_nodes,
        "leaves": list(leaves),
        "obs_len": 2 * config.network.n_nodes,
        "action_len": len(leaves),
        "action_low": -1.0,
        "action_high": 1.0,
        "kick_interval": config.kick_interval,
        "horizon": config.horizon,
    }


class _Handler(socketserver.StreamRequestHandler):

    def handle(self):
        env = OscillatorEnv(self.server.episode_config,
                            seed=self.server.base_seed)
        has_episode = False
        while True:
            try:
                line = self.rfile.readline(MAX_LINE + 1)
            except (ConnectionError, OSError):
                return
            if not line:
                return
            if len(line) > MAX_LINE:
                # drain the oversized message up to its newline, then keep
                # the session alive
                while not line.endswith(b"\n"):
                    line = self.rfile.readline(MAX_LINE + 1)
                    if not line:
                        return
                self._send(_err("bad_request", "message exceeds 1 MiB"))
                continue
            try:
                msg = json.loads(line.decode("utf-8"))
                if not isinstance(msg, dict):
                    raise ValueError("request must be a JSON object")
            except (ValueError, UnicodeDecodeError) as e:
                self._send(_err("bad_request", f"malformed request: {e}"))
                continue

            kind = msg.get("request")
            if kind == "close":
                self._send(_ok("bye"))
                return
            if kind == "spec":
                self._send(_ok(spec_payload(self.server.episode_config)))
            elif kind == "reset":
                seed = msg.get("seed")
                if seed is not None and not isinstance(seed, int):
                    self._send(_err("bad_request", "seed must be an integer"))
                    continue
                obs = env.reset(seed=seed)
                has_episode = True
                self._send(_ok({"obs": obs.tolist()}))
            elif kind == "step":
                if not has_episode:
                    self._send(_err("no_episode",
                                    "reset before stepping"))
                    continue
                action = msg.get("action")
                if (not isinstance(action, list)
                        or len(action) != env.n_leaves
                        or not all(isinstance(x, (int, float))
                                   and np.isfinite(x) for x in action)):
                    self._send(_err(
                        "bad_action",
                        f"action must be {env.n_leaves} finite numbers"))
                    continue
                try:
                    result = env.step(np.asarray(action, dtype=float))
                except EpisodeFinishedError:
                    has_episode = False
                    self._send(_err("no_episode",
                                    "episode finished; reset required"))
                    continue
                self._send(_ok({
                    "obs": result.obs.tolist(),
                    "reward": result.reward,
                    "terminated": result.terminated,
                    "truncated": result.truncated,
                    "info": {
                        "energies": result.info["energies"].tolist(),
                        "time": result.info["time"],
                    },
                }))
            else:
                self._send(_err("bad_request",
                                f"unknown request {kind!r}"))

    def _send(self, obj):
        try:
            self.wfile.write(json.dumps(obj).encode("utf-8") + b"\n")
        except (ConnectionError, OSError):
            pass


class EnvServer(socketserver.ThreadingTCPServer):
    """TCP server owning an episode configuration; one env per connection."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, config: EpisodeConfig, host="127.0.0.1", port=0,
                 seed=0):
        super().__init__((host, port), _Handler)
        self.episode_config = config
        self.base_seed = seed

    @property
    def address(self):
        return self.server_address

    def serve_background(self):
        """Start serving on a daemon thread; returns the thread."""
        t = threading.Thread(target=self.serve_forever, daemon=True)
        t.start()
        return t


class EnvClient:
    """Minimal line-protocol client (used by tests and demos)."""

    def __init__(self, host, port, timeout=10.0):
        import socket

        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.rfile = self.sock.makefile("rb")

    def request(self, obj):
        self.sock.sendall(json.dumps(obj).encode("utf-8") + b"\n")
        line = self.rfile.readline()
        if not line:
            raise ConnectionError("server closed the connection")
        return json.loads(line.decode("utf-8"))

    def spec(self):
        return self.request({"request": "spec"})

    def reset(self, seed=None):
        msg = {"request": "reset"}
        if seed is not None:
            msg["seed"] = seed
        return self.request(msg)

    def step(self, action):
        return self.request({"request": "step",
                             "action": [float(a) for a in action]})

    def close(self):
        try:
            self.request({"request": "close"})
        except (ConnectionError, OSError):
            pass
        self.sock.close()
