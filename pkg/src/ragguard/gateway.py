"""Operator surface: JSON HTTP service and the outbound LLM client.

The service exposes signal extraction and routing decisions over three
endpoints (POST /v1/signals, POST /v1/decide, GET /healthz). Model state
(the projection-head checkpoint) is immutable after load; requests are
independent, so the threading server needs no locks. When an LLM endpoint
is configured it is used for the answerability probe and for generating an
answer from the hard prompt; if it times out or errors, the response
degrades to signals-only instead of failing.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import requests

from .decoupler import EncoderPair, load_checkpoint
from .embed import EMBED_URL_ENV, EmbedConfig, embed_batch
from .errors import (
    ConfigError,
    GeneratorUnavailableError,
    ProtocolError,
    ProviderError,
    RagGuardError,
)
from .policy import PolicyConfig, decide, decision_log_row
from .signals import (
    ConflictSignals,
    LlmProbeProvider,
    SyntheticOracleProvider,
    format_signal_row,
    render_hard_prompt,
    sigma_fact,
    sigma_sem,
)

LLM_URL_ENV = "TCR_LLM_URL"


@dataclass
class GatewayConfig:
    embed_url: str | None = None
    llm_url: str | None = None
    llm_model: str = "default"
    checkpoint_path: str = "checkpoint.tcrw"
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    listen_addr: str = "127.0.0.1:8080"
    request_timeout: float = 10.0
    embed_dim: int = 256
    embed_seed: int = 0
    ans_seed: int = 0
    ans_noise: float = 0.1
    template_id: str = "v1"
    max_retries: int = 2

    def __post_init__(self):
        if self.request_timeout <= 0:
            raise ConfigError("request_timeout must be positive")

    @classmethod
    def from_file(cls, path: str | Path | None = None, **overrides) -> "GatewayConfig":
        """JSON config with environment-variable overrides."""
        data: dict = {}
        if path is not None:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        policy = PolicyConfig(**data.pop("policy", {}))
        data.update(overrides)
        data.setdefault("embed_url", None)
        data.setdefault("llm_url", None)
        if os.environ.get(EMBED_URL_ENV):
            data["embed_url"] = os.environ[EMBED_URL_ENV]
        if os.environ.get(LLM_URL_ENV):
            data["llm_url"] = os.environ[LLM_URL_ENV]
        return cls(policy=policy, **data)

    def host_port(self) -> tuple[str, int]:
        host, _, port = self.listen_addr.rpartition(":")
        return host or "127.0.0.1", int(port)


def llm_generate(prompt: str, cfg: GatewayConfig) -> str:
    """Single-turn chat completion; at most two retries on timeouts."""
    if not cfg.llm_url:
        raise ConfigError("no LLM endpoint configured")
    body = {
        "model": cfg.llm_model,
        "messages": [{"role": "user", "content": prompt}],
    }
    last_exc: Exception | None = None
    for _ in range(1 + cfg.max_retries):
        try:
            resp = requests.post(cfg.llm_url, json=body, timeout=cfg.request_timeout)
        except (requests.Timeout, requests.ConnectionError) as exc:
            last_exc = exc
            continue
        except requests.RequestException as exc:
            raise GeneratorUnavailableError(f"LLM request failed: {exc}") from exc
        if resp.status_code != 200:
            raise GeneratorUnavailableError(
                f"LLM endpoint returned {resp.status_code}"
            )
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"malformed LLM response: {exc}") from exc
    raise GeneratorUnavailableError(f"LLM endpoint unreachable: {last_exc}")


class GatewayService:
    """Loads the checkpoint once, then answers signal/decide requests."""

    def __init__(self, cfg: GatewayConfig):
        self.cfg = cfg
        self.state = "loading"
        self.pair: EncoderPair | None = None
        self.checkpoint_hash = ""
        self._embed_cfg = EmbedConfig(
            url=cfg.embed_url, dim=cfg.embed_dim, seed=cfg.embed_seed,
            timeout=cfg.request_timeout,
        )
        self._synthetic = SyntheticOracleProvider(seed=cfg.ans_seed, noise=cfg.ans_noise)

    def load(self) -> None:
        blob = Path(self.cfg.checkpoint_path).read_bytes()
        self.checkpoint_hash = hashlib.sha256(blob).hexdigest()
        self.pair = load_checkpoint(self.cfg.checkpoint_path)
        self.state = "ready"

    def health(self) -> tuple[int, dict]:
        if self.state != "ready":
            return 503, {"status": self.state, "checkpoint_hash": None}
        return 200, {"status": "ready", "checkpoint_hash": self.checkpoint_hash}

    def _answerability(self, query: str, query_id: str) -> tuple[float, bool]:
        """Score plus a degraded flag when the LLM probe had to fall back."""
        if self.cfg.llm_url:
            probe = LlmProbeProvider(
                generate=lambda prompt: llm_generate(prompt, self.cfg)
            )
            try:
                return probe.score(query, query_id=query_id), False
            except (ProviderError, GeneratorUnavailableError, ProtocolError):
                return self._synthetic.score(query, query_id=query_id), True
        return self._synthetic.score(query, query_id=query_id), False

    def signal_response(self, query: str, context: str, query_id: str = "") -> dict:
        if self.state != "ready":
            raise RagGuardError("service not ready")
        started = time.perf_counter()
        q_embed, c_embed = embed_batch([query, context], self._embed_cfg)
        ans, degraded = self._answerability(query, query_id)
        sig = ConflictSignals(
            sigma_sem=sigma_sem(q_embed, c_embed, self.pair),
            sigma_fact=sigma_fact(q_embed, c_embed, self.pair),
            sigma_ans=ans,
            query_id=query_id,
        )
        decision = decide(sig, self.cfg.policy)
        hard_prompt = render_hard_prompt(sig, self.cfg.template_id)
        answer = None
        if self.cfg.llm_url and not degraded:
            try:
                answer = llm_generate(
                    f"{hard_prompt}\nQuestion: {query}\nContext: {context}", self.cfg
                )
            except (GeneratorUnavailableError, ProtocolError):
                degraded = True
        return {
            "signals": format_signal_row(sig),
            "decision": decision_log_row(query_id, decision, self.cfg.policy),
            "hard_prompt": hard_prompt,
            "answer": answer,
            "degraded": degraded,
            "latency_ms": (time.perf_counter() - started) * 1000.0,
        }

    def decide_response(self, body: dict) -> tuple[int, dict]:
        required = ("sigma_sem", "sigma_fact", "sigma_ans")
        missing = [k for k in required if k not in body]
        if missing:
            return 400, {"error": f"missing keys {missing}"}
        vals = {}
        for key in required:
            v = body[key]
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                return 400, {"error": f"{key} must be a number"}
            vals[key] = float(v)
        if not -1.0 <= vals["sigma_sem"] <= 1.0 or not -1.0 <= vals["sigma_fact"] <= 1.0:
            return 422, {"error": "sigma_sem and sigma_fact must be in [-1, 1]"}
        if not 0.0 <= vals["sigma_ans"] <= 1.0:
            return 422, {"error": "sigma_ans must be in [0, 1]"}
        sig = ConflictSignals(
            sigma_sem=vals["sigma_sem"], sigma_fact=vals["sigma_fact"],
            sigma_ans=vals["sigma_ans"], query_id=str(body.get("query_id", "")),
        )
        decision = decide(sig, self.cfg.policy)
        return 200, decision_log_row(sig.query_id, decision, self.cfg.policy)


class _Handler(BaseHTTPRequestHandler):
    service: GatewayService  # set by make_server

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _read_json(self) -> dict | None:
        try:
            length = int(self.headers.get("Content-Length", "0"))
            raw = self.rfile.read(length)
            body = json.loads(raw.decode("utf-8"))
        except (ValueError, UnicodeDecodeError):
            return None
        return body if isinstance(body, dict) else None

    def do_GET(self):
        if self.path == "/healthz":
            status, payload = self.service.health()
            self._send(status, payload)
        else:
            self._send(404, {"error": "unknown endpoint"})

    def do_POST(self):
        if self.service.state != "ready":
            self._send(503, {"error": "checkpoint loading"})
            return
        body = self._read_json()
        if self.path == "/v1/signals":
            if body is None or "query" not in body or "context" not in body:
                self._send(400, {"error": "body must be JSON with query and context"})
                return
            if not isinstance(body["query"], str) or not isinstance(body["context"], str):
                self._send(400, {"error": "query and context must be strings"})
                return
            try:
                payload = self.service.signal_response(
                    body["query"], body["context"], str(body.get("query_id", ""))
                )
            except RagGuardError as exc:
                self._send(503, {"error": str(exc)})
                return
            self._send(200, payload)
        elif self.path == "/v1/decide":
            if body is None:
                self._send(400, {"error": "body must be a JSON object"})
                return
            status, payload = self.service.decide_response(body)
            self._send(status, payload)
        else:
            self._send(404, {"error": "unknown endpoint"})


def make_server(service: GatewayService, host: str, port: int) -> ThreadingHTTPServer:
    handler = type("BoundHandler", (_Handler,), {"service": service})
    return ThreadingHTTPServer((host, port), handler)


def serve(cfg: GatewayConfig) -> None:
    """Load the checkpoint and serve until interrupted."""
    service = GatewayService(cfg)
    host, port = cfg.host_port()
    server = make_server(service, host, port)
    service.load()
    try:
        server.serve_forever()
    finally:
        server.server_close()
