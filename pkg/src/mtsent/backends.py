"""LLM backends: a chat-completion HTTP client and a scripted mock.

Both expose ``complete(prompt, logprobs=False, meta=None)`` returning a
:class:`BackendResponse`. ``meta`` is a (instance_id, template_id, epoch)
triple; the HTTP backend ignores it, the mock uses it to look up canned
responses.
"""

import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Optional

import requests


class BackendError(RuntimeError):
    """Transport or protocol failure talking to a backend."""


@dataclass(frozen=True)
class BackendResponse:
    text: str
    token_logprobs: Optional[tuple] = None  # ((token, logprob), ...)
    reported_confidence: Optional[float] = None

    def __post_init__(self):
        if self.token_logprobs is not None:
            tl = tuple((str(t), float(lp)) for t, lp in self.token_logprobs)
            for t, lp in tl:
                if lp > 0.0:
                    raise ValueError(
                        f"token {t!r} has positive logprob {lp}"
                    )
            object.__setattr__(self, "token_logprobs", tl)
        if self.reported_confidence is not None:
            c = float(self.reported_confidence)
            if not 0.0 <= c <= 1.0:
                raise ValueError(f"reported confidence {c} outside [0, 1]")
            object.__setattr__(self, "reported_confidence", c)


# Confidence self-reports are requested as a trailing "Confidence: 0.xx"
# line; this pattern is the single parsing authority for that line.
CONFIDENCE_LINE = re.compile(
    r"^\s*Confidence:\s*([01](?:\.\d+)?)\s*$", re.MULTILINE | re.IGNORECASE
)


def parse_reported_confidence(text):
    m = CONFIDENCE_LINE.search(text)
    if m is None:
        return None
    return float(m.group(1))


class HttpBackend:
    """JSON-over-HTTP chat-completion client.

    Request: {model, messages: [{role, content}], logprobs, temperature: 0}.
    The response must carry choices[0].message.content and, when logprobs
    were requested, choices[0].logprobs.content as a list of
    {token, logprob} objects. API key read from LLM_API_KEY.
    """

    MAX_RETRIES = 3

    def __init__(self, url, model="default", timeout=60.0, retry_base=0.5,
                 session=None):
        self.url = url
        self.model = model
        self.timeout = timeout
        self.retry_base = retry_base
        self._session = session or requests.Session()

    def complete(self, prompt, logprobs=False, meta=None):
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "logprobs": bool(logprobs),
            "temperature": 0,
        }
        headers = {"Content-Type": "application/json"}
        key = os.environ.get("LLM_API_KEY")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        last_err = None
        for attempt in range(self.MAX_RETRIES):
            try:
                resp = self._session.post(
                    self.url, json=payload, headers=headers,
                    timeout=self.timeout,
                )
                if resp.status_code >= 500:
                    raise BackendError(f"server error {resp.status_code}")
                if resp.status_code != 200:
                    # 4xx is not retryable: the request itself is wrong.
                    raise BackendError(
                        f"backend returned {resp.status_code}: {resp.text[:200]}"
                    ) from None
                return self._parse(resp.json(), logprobs)
            except (requests.RequestException, BackendError) as e:
                if isinstance(e, BackendError) and "server error" not in str(e):
                    raise
                last_err = e
                if attempt + 1 < self.MAX_RETRIES:
                    time.sleep(self.retry_base * (2 ** attempt))
        raise BackendError(
            f"backend unreachable after {self.MAX_RETRIES} attempts: {last_err}"
        )

    @staticmethod
    def _parse(obj, want_logprobs):
        try:
            choice = obj["choices"][0]
            text = choice["message"]["content"]
        except (KeyError, IndexError, TypeError) as e:
            raise BackendError(f"malformed completion response: {e!r}") from e
        tl = None
        lp = choice.get("logprobs")
        if want_logprobs and lp:
            content = lp.get("content") or []
            tl = tuple((d["token"], d["logprob"]) for d in content)
        return BackendResponse(
            text=text,
            token_logprobs=tl,
            reported_confidence=parse_reported_confidence(text),
        )


@dataclass
class _ScriptEntry:
    text: Optional[str]
    token_logprobs: Optional[tuple]
    confidence: Optional[float]
    error: Optional[str]


class MockBackend:
    """Deterministic backend driven by a JSONL script file.

    Each line: {"instance_id": ..., "template_id": ..., "epoch": int|null,
    "text": ...} plus optional "token_logprobs": [[token, logprob], ...],
    "confidence": float, "error": "..." (raises instead of answering).
    epoch null matches any epoch not covered by an exact entry. Lookup is
    by the meta triple passed to complete(); calls are logged under a lock
    so augmentation may run multi-threaded.
    """

    def __init__(self, script_path):
        self._table = {}
        self._lock = threading.Lock()
        self.calls = []
        with open(script_path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as e:
                    raise ValueError(
                        f"{script_path}:{lineno}: malformed JSON ({e.msg})"
                    ) from e
                key = (
                    str(obj["instance_id"]),
                    str(obj["template_id"]),
                    obj.get("epoch"),
                )
                tl = obj.get("token_logprobs")
                self._table[key] = _ScriptEntry(
                    text=obj.get("text"),
                    token_logprobs=tuple(map(tuple, tl)) if tl else None,
                    confidence=obj.get("confidence"),
                    error=obj.get("error"),
                )

    def complete(self, prompt, logprobs=False, meta=None):
        if meta is None:
            raise BackendError("mock backend requires meta=(id, template, epoch)")
        instance_id, template_id, epoch = meta
        with self._lock:
            self.calls.append((instance_id, template_id, epoch))
        entry = self._table.get((str(instance_id), str(template_id), epoch))
        if entry is None:
            entry = self._table.get((str(instance_id), str(template_id), None))
        if entry is None:
            raise BackendError(
                f"mock script has no entry for instance {instance_id!r} "
                f"template {template_id!r} epoch {epoch}"
            )
        if entry.error:
            raise BackendError(
                f"scripted failure for instance {instance_id!r}: {entry.error}"
            )
        reported = entry.confidence
        if reported is None and entry.text:
            reported = parse_reported_confidence(entry.text)
        return BackendResponse(
            text=entry.text or "",
            token_logprobs=entry.token_logprobs if logprobs else None,
            reported_confidence=reported,
        )

    def call_count(self, instance_id=None, template_id=None):
        with self._lock:
            calls = list(self.calls)
        n = 0
        for iid, tid, _ in calls:
            if instance_id is not None and iid != instance_id:
                continue
            if template_id is not None and tid != template_id:
                continue
            n += 1
        return n
