"""Provider-agnostic chat gateway: live HTTP backend, record/replay, scripted.

Request construction is a pure function of (turns, tool specs, model config),
and the cassette key is a stable hash of that normalized request, so replaying
a recorded run is deterministic and needs no network access.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path

from ._util import canonical_json, stable_hash

# Turn roles
SYSTEM = "system"
USER = "user"
ASSISTANT = "assistant"
SELF_THOUGHT = "self_thought"
TOOL_CALL = "tool_call"
TOOL_RESULT = "tool_result"

ROLES = (SYSTEM, USER, ASSISTANT, SELF_THOUGHT, TOOL_CALL, TOOL_RESULT)

CHARS_PER_TOKEN = 4.0


class GatewayError(Exception):
    pass


class ContextExceeded(GatewayError):
    """Estimated context is over the model limit; callers treat this as trajectory termination."""


class ReplayMiss(GatewayError):
    """Request hash not found in the cassette."""


class ScriptExhausted(GatewayError):
    """The scripted backend ran out of queued replies."""


@dataclass
class ChatTurn:
    role: str
    content: str = ""
    tool_name: str | None = None
    tool_arguments: dict | None = None
    author: str = ""
    phase: str | None = None

    def to_record(self) -> dict:
        rec: dict = {"role": self.role, "content": self.content}
        if self.tool_name is not None:
            rec["tool_name"] = self.tool_name
            rec["tool_arguments"] = self.tool_arguments
        if self.author:
            rec["author"] = self.author
        if self.phase is not None:
            rec["phase"] = self.phase
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "ChatTurn":
        return cls(
            role=rec["role"],
            content=rec.get("content", ""),
            tool_name=rec.get("tool_name"),
            tool_arguments=rec.get("tool_arguments"),
            author=rec.get("author", ""),
            phase=rec.get("phase"),
        )


@dataclass
class ModelConfig:
    model_id: str = "scripted"
    temperature: float = 0.0
    max_context_tokens: int = 128_000
    max_retries: int = 2

    def __post_init__(self) -> None:
        if self.max_context_tokens <= 0:
            raise ValueError("max_context_tokens must be positive")


def count_context(turns: list[ChatTurn]) -> float:
    """Portable token estimate: total characters divided by four.

    Returned as a float so the estimate is strictly monotone in text length;
    backends that report exact usage can refine it.
    """
    chars = 0
    for turn in turns:
        chars += len(turn.content)
        if turn.tool_arguments is not None:
            chars += len(canonical_json(turn.tool_arguments))
        if turn.tool_name:
            chars += len(turn.tool_name)
    return chars / CHARS_PER_TOKEN


def _wire_messages(turns: list[ChatTurn]) -> list[dict]:
    """Map turns onto chat-completions messages with deterministic tool-call ids."""
    messages: list[dict] = []
    call_counter = 0
    for turn in turns:
        if turn.role == SYSTEM:
            messages.append({"role": "system", "content": turn.content})
        elif turn.role == USER:
            messages.append({"role": "user", "content": turn.content})
        elif turn.role in (ASSISTANT, SELF_THOUGHT):
            messages.append({"role": "assistant", "content": turn.content})
        elif turn.role == TOOL_CALL:
            call_counter += 1
            messages.append(
                {
                    "role": "assistant",
                    "content": turn.content or None,
                    "tool_calls": [
                        {
                            "id": f"call-{call_counter}",
                            "type": "function",
                            "function": {
                                "name": turn.tool_name,
                                "arguments": canonical_json(turn.tool_arguments or {}),
                            },
                        }
                    ],
                }
            )
        elif turn.role == TOOL_RESULT:
            messages.append(
                {"role": "tool", "tool_call_id": f"call-{call_counter}", "content": turn.content}
            )
        else:
            raise ValueError(f"unknown turn role {turn.role!r}")
    return messages


def build_request(turns: list[ChatTurn], tool_specs: list[dict], config: ModelConfig) -> dict:
    """Pure normalized request; also the cassette hashing input."""
    request = {
        "model": config.model_id,
        "temperature": config.temperature,
        "messages": _wire_messages(turns),
    }
    if tool_specs:
        request["tools"] = [
            {"type": "function", "function": spec} for spec in tool_specs
        ]
    return request


def request_key(request: dict) -> str:
    return stable_hash(request)


@dataclass
class RawReply:
    content: str = ""
    tool_calls: list[dict] = field(default_factory=list)
    usage: dict | None = None

    def to_record(self) -> dict:
        rec: dict = {"content": self.content, "tool_calls": self.tool_calls}
        if self.usage is not None:
            rec["usage"] = self.usage
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "RawReply":
        return cls(
            content=rec.get("content") or "",
            tool_calls=rec.get("tool_calls") or [],
            usage=rec.get("usage"),
        )


class ScriptedBackend:
    """Pops queued replies in order; raises ScriptExhausted when empty."""

    def __init__(self, replies: list):
        self._queue = [self._normalize(r) for r in replies]
        self.calls = 0

    @staticmethod
    def _normalize(reply) -> RawReply:
        if isinstance(reply, RawReply):
            return reply
        if isinstance(reply, str):
            return RawReply(content=reply)
        if isinstance(reply, dict):
            if "tool" in reply:
                return RawReply(
                    tool_calls=[{"name": reply["tool"], "arguments": reply.get("arguments", {})}]
                )
            return RawReply(
                content=reply.get("content", ""), tool_calls=reply.get("tool_calls", [])
            )
        raise TypeError(f"cannot script reply of type {type(reply)!r}")

    def request(self, request: dict) -> RawReply:
        if not self._queue:
            raise ScriptExhausted(f"scripted backend exhausted after {self.calls} calls")
        self.calls += 1
        return self._queue.pop(0)


class LiveBackend:
    """Chat-completions HTTP client. Endpoint and key come from the environment
    unless given explicitly (SQLMENTOR_API_BASE, SQLMENTOR_API_KEY)."""

    def __init__(
        self,
        base_url: str | None = None,
        api_key: str | None = None,
        timeout_s: float = 120.0,
        max_retries: int = 3,
    ):
        self.base_url = (base_url or os.environ.get("SQLMENTOR_API_BASE", "")).rstrip("/")
        self.api_key = api_key or os.environ.get("SQLMENTOR_API_KEY", "")
        if not self.base_url:
            raise GatewayError("live backend needs a base URL (SQLMENTOR_API_BASE)")
        self.timeout_s = timeout_s
        self.max_retries = max_retries

    def request(self, request: dict) -> RawReply:
        import httpx

        last_error: Exception | None = None
        for _ in range(self.max_retries):
            try:
                response = httpx.post(
                    f"{self.base_url}/chat/completions",
                    json=request,
                    headers={"Authorization": f"Bearer {self.api_key}"},
                    timeout=self.timeout_s,
                )
                response.raise_for_status()
                body = response.json()
                message = body["choices"][0]["message"]
                tool_calls = []
                for call in message.get("tool_calls") or []:
                    tool_calls.append(
                        {
                            "name": call["function"]["name"],
                            "arguments": json.loads(call["function"]["arguments"] or "{}"),
                        }
                    )
                return RawReply(
                    content=message.get("content") or "",
                    tool_calls=tool_calls,
                    usage=body.get("usage"),
                )
            except Exception as exc:  # noqa: BLE001 - transport errors retry
                last_error = exc
        raise GatewayError(f"live request failed after {self.max_retries} retries: {last_error}")


class RecordingBackend:
    """Wraps any backend and appends (key, request, response) to a cassette."""

    _append_locks: dict[str, threading.Lock] = {}
    _registry_lock = threading.Lock()

    def __init__(self, inner, cassette_path: str | Path):
        self.inner = inner
        self.cassette_path = Path(cassette_path)
        self.cassette_path.parent.mkdir(parents=True, exist_ok=True)
        with RecordingBackend._registry_lock:
            self._lock = RecordingBackend._append_locks.setdefault(
                str(self.cassette_path), threading.Lock()
            )

    def request(self, request: dict) -> RawReply:
        reply = self.inner.request(request)
        entry = {"key": request_key(request), "request": request, "response": reply.to_record()}
        with self._lock, self.cassette_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, ensure_ascii=False, sort_keys=True) + "\n")
        return reply


class ReplayBackend:
    """Answers by request-hash lookup in a recorded cassette. No network."""

    def __init__(self, cassette_path: str | Path):
        self.cassette_path = Path(cassette_path)
        self._responses: dict[str, list[RawReply]] = {}
        self._cursor: dict[str, int] = {}
        self.entries: list[dict] = []
        for line in self.cassette_path.read_text(encoding="utf-8").splitlines():
            entry = json.loads(line)
            self.entries.append(entry)
            self._responses.setdefault(entry["key"], []).append(
                RawReply.from_record(entry["response"])
            )

    def request(self, request: dict) -> RawReply:
        key = request_key(request)
        if key not in self._responses:
            raise ReplayMiss(f"no cassette entry for request hash {key[:12]}…")
        replies = self._responses[key]
        index = self._cursor.get(key, 0)
        # repeated identical requests replay successive recorded responses,
        # sticking on the last one
        reply = replies[min(index, len(replies) - 1)]
        self._cursor[key] = index + 1
        return reply

    def recorded_usages(self) -> list[tuple[dict, dict]]:
        """(request, usage) pairs for every entry whose response carried usage."""
        return [
            (e["request"], e["response"]["usage"])
            for e in self.entries
            if e["response"].get("usage")
        ]


_CORRECTIVE_NOTE = (
    "You attempted multiple tool calls in one turn. Do these actions one at a time: "
    "reply again with a single tool call or a single message."
)


class ChatGateway:
    """Single entry point used by agents; enforces context and one-tool-call limits."""

    def __init__(self, backend, config: ModelConfig | None = None):
        self.backend = backend
        self.config = config or ModelConfig()

    def chat(
        self,
        turns: list[ChatTurn],
        tool_specs: list[dict] | None = None,
        config: ModelConfig | None = None,
    ) -> ChatTurn:
        cfg = config or self.config
        if not turns:
            raise GatewayError("chat called with no turns")
        if count_context(turns) > cfg.max_context_tokens:
            raise ContextExceeded(
                f"estimated {count_context(turns):.0f} tokens exceeds limit {cfg.max_context_tokens}"
            )
        specs = tool_specs or []
        request = build_request(turns, specs, cfg)
        reply = self.backend.request(request)
        if len(reply.tool_calls) > 1:
            corrected = turns + [ChatTurn(role=SYSTEM, content=_CORRECTIVE_NOTE)]
            reply = self.backend.request(build_request(corrected, specs, cfg))
            if len(reply.tool_calls) > 1:
                raise GatewayError("backend returned multiple tool calls twice")
        if reply.tool_calls:
            call = reply.tool_calls[0]
            return ChatTurn(
                role=TOOL_CALL,
                content=reply.content,
                tool_name=call["name"],
                tool_arguments=call["arguments"],
            )
        return ChatTurn(role=ASSISTANT, content=reply.content)
