"""Prompts for the part-selection LLM, backend clients and offline mock backends.

Two backends are involved: an LLM that names the object part to grasp (or
avoid), and an open-vocabulary detector that grounds that part name as a box
in the object image. Both are reached through small JSON-over-HTTP contracts
or replaced by table-driven mocks.
"""
from __future__ import annotations

import base64
import csv
import io
import json
import logging
import os
import re
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .projection import BoundingBox2D, BoxOutsideImage, Mode

logger = logging.getLogger(__name__)

SYSTEM_PROMPT = "You are an intelligent robotic arm."
GRASP_TEMPLATE = "If you want to pick up {article} {object}, which part makes the most sense to grasp? Name one part."
AVOID_TEMPLATE = (
    "Consider you are an intelligent robotic arm. "
    "If you want to pick up {article} {object}, which part you should avoid touching? Answer in one word."
)
MAX_LABEL_CHARS = 128
MAX_PART_WORDS = 5
DEFAULT_THRESHOLD = 0.1


class LanguageError(Exception):
    pass


class InvalidLabel(LanguageError):
    pass


class BackendUnavailable(LanguageError):
    pass


class MalformedResponse(LanguageError):
    pass


class NoDetection(LanguageError):
    pass


class FixtureParseError(LanguageError):
    pass


@dataclass(frozen=True)
class PartQuery:
    object_label: str
    mode: Mode = Mode.GRASP

    def __post_init__(self):
        label = (self.object_label or "").strip()
        if not label:
            raise InvalidLabel("object label is empty")
        if len(label) > MAX_LABEL_CHARS:
            raise InvalidLabel(f"object label longer than {MAX_LABEL_CHARS} characters")
        object.__setattr__(self, "object_label", label)
        object.__setattr__(self, "mode", Mode(self.mode))


@dataclass(frozen=True)
class Message:
    role: str
    content: str


@dataclass(frozen=True)
class ChatPrompt:
    messages: tuple[Message, ...]

    def __post_init__(self):
        roles = [m.role for m in self.messages]
        if roles != ["system", "user"]:
            raise ValueError(f"expected one system then one user message, got {roles}")

    @property
    def system(self) -> str:
        return self.messages[0].content

    @property
    def user(self) -> str:
        return self.messages[1].content

    def to_wire(self) -> list[dict]:
        return [{"role": m.role, "content": m.content} for m in self.messages]


@dataclass(frozen=True)
class PartAnswer:
    part_label: str
    raw_response: str


def article(label: str, literal: bool = False) -> str:
    """``an`` before a vowel letter, ``a`` otherwise; ``literal`` always gives ``an``."""
    if literal:
        return "an"
    return "an" if label[:1].lower() in "aeiou" else "a"


def _prompt(query: PartQuery, template: str, literal: bool) -> ChatPrompt:
    user = template.format(article=article(query.object_label, literal), object=query.object_label)
    return ChatPrompt((Message("system", SYSTEM_PROMPT), Message("user", user)))


def build_grasp_prompt(query: PartQuery | str, literal: bool = False) -> ChatPrompt:
    if isinstance(query, str):
        query = PartQuery(query, Mode.GRASP)
    return _prompt(query, GRASP_TEMPLATE, literal)


def build_avoid_prompt(query: PartQuery | str, literal: bool = False) -> ChatPrompt:
    if isinstance(query, str):
        query = PartQuery(query, Mode.AVOID)
    return _prompt(query, AVOID_TEMPLATE, literal)


def build_prompt(query: PartQuery, literal: bool = False) -> ChatPrompt:
    if query.mode is Mode.AVOID:
        return build_avoid_prompt(query, literal)
    return build_grasp_prompt(query, literal)


_PROMPT_PATTERNS = [
    (Mode.GRASP, re.compile(r"^If you want to pick up an? (.+), which part makes the most sense to grasp\? Name one part\.$")),
    (
        Mode.AVOID,
        re.compile(
            r"^Consider you are an intelligent robotic arm\. If you want to pick up an? (.+), "
            r"which part you should avoid touching\? Answer in one word\.$"
        ),
    ),
]


def parse_prompt(prompt: ChatPrompt) -> PartQuery | None:
    """Recover the query from a prompt built by this module (``None`` if foreign)."""
    for mode, pat in _PROMPT_PATTERNS:
        m = pat.match(prompt.user)
        if m:
            return PartQuery(m.group(1), mode)
    return None


_ARTICLES = {"the", "a", "an"}
_EDGE_JUNK = " \t\"'`*_.,;:!?()[]"


def _normalize_once(text: str) -> str:
    words = text.lower().strip(_EDGE_JUNK).split()
    while words and words[0] in _ARTICLES:
        words = words[1:]
    return " ".join(words[:MAX_PART_WORDS]).strip(_EDGE_JUNK)


def normalize_part_label(text: str) -> str:
    """First non-blank line, lowercased, articles and edge punctuation removed, at most 5 words."""
    line = next((ln for ln in (text or "").splitlines() if ln.strip()), "")
    label = _normalize_once(line)
    for _ in range(MAX_PART_WORDS + 2):
        nxt = _normalize_once(label)
        if nxt == label:
            break
        label = nxt
    return label


# ---------------------------------------------------------------- backends


@dataclass(frozen=True)
class Detection:
    box: tuple[float, float, float, float]
    score: float
    label: str


class MockLlm:
    """Answers from a fixed (object_label, mode) -> part table."""

    def __init__(self, table: dict[tuple[str, Mode], str]):
        self._table = {(k.casefold(), Mode(m)): v for (k, m), v in table.items()}

    @classmethod
    def from_csv(cls, path) -> "MockLlm":
        table: dict[tuple[str, Mode], str] = {}
        for i, row in enumerate(_read_table(path, ("object_label", "mode", "part_label")), 2):
            try:
                key = (row["object_label"].strip(), Mode(row["mode"].strip().lower()))
            except ValueError as exc:
                raise FixtureParseError(f"{path}:{i}: {exc}") from exc
            part = row["part_label"].strip()
            if not key[0] or not part:
                raise FixtureParseError(f"{path}:{i}: empty field")
            if table.get(key, part) != part:
                raise FixtureParseError(f"{path}:{i}: conflicting entry for {key}")
            table[key] = part
        return cls(table)

    def complete(self, prompt: ChatPrompt) -> str:
        query = parse_prompt(prompt)
        if query is None:
            return ""
        return self._table.get((query.object_label.casefold(), query.mode), "")


class MockVlm:
    """Detections from a fixed (image_id, part_label) -> boxes table."""

    def __init__(self, rows: list[tuple[str, Detection]]):
        self._rows = list(rows)

    @classmethod
    def from_csv(cls, path) -> "MockVlm":
        cols = ("image_id", "part_label", "x_min", "y_min", "x_max", "y_max", "confidence")
        rows = []
        for i, row in enumerate(_read_table(path, cols), 2):
            try:
                box = tuple(float(row[c]) for c in ("x_min", "y_min", "x_max", "y_max"))
                score = float(row["confidence"])
            except ValueError as exc:
                raise FixtureParseError(f"{path}:{i}: {exc}") from exc
            rows.append((row["image_id"].strip(), Detection(box, score, row["part_label"].strip())))
        return cls(rows)

    def detect(self, image, queries: list[str], image_id: str | None = None) -> list[Detection]:
        wanted = {q.casefold() for q in queries}
        return [d for img, d in self._rows if img == image_id and d.label.casefold() in wanted]


def _read_table(path, required) -> list[dict]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            missing = set(required) - set(reader.fieldnames or ())
            if missing:
                raise FixtureParseError(f"{path}: missing columns {sorted(missing)}")
            return list(reader)
    except OSError as exc:
        raise FixtureParseError(f"cannot read {path}: {exc}") from exc


def _post_json(url: str, payload: dict, token: str | None, timeout: float, retries: int):
    body = json.dumps(payload).encode("utf-8")
    headers = {"Content-Type": "application/json"}
    if token:
        headers["Authorization"] = f"Bearer {token}"
    last: Exception | None = None
    for attempt in range(retries + 1):
        req = urllib.request.Request(url, data=body, headers=headers, method="POST")
        try:
            with urllib.request.urlopen(req, timeout=timeout) as resp:
                raw = resp.read()
            break
        except urllib.error.HTTPError as exc:
            if exc.code < 500:
                raise BackendUnavailable(f"{url} rejected the request: HTTP {exc.code}") from exc
            last = exc
        except (urllib.error.URLError, TimeoutError, ConnectionError) as exc:
            last = exc
        if attempt < retries:
            time.sleep(min(0.05 * 2**attempt, 1.0))
    else:
        raise BackendUnavailable(f"{url} unreachable after {retries + 1} attempt(s): {last}")
    try:
        return json.loads(raw)
    except json.JSONDecodeError as exc:
        raise MalformedResponse(f"{url} returned invalid JSON") from exc


def _token(env_name: str | None) -> str | None:
    return os.environ.get(env_name) if env_name else None


class HttpLlm:
    """Chat-completions style client; temperature is pinned to 0."""

    def __init__(self, endpoint: str, model: str = "", token_env: str | None = None, timeout=30.0, retries=2):
        self.endpoint, self.model, self.token_env = endpoint, model, token_env
        self.timeout, self.retries = timeout, retries

    def complete(self, prompt: ChatPrompt) -> str:
        payload = {"model": self.model, "messages": prompt.to_wire(), "temperature": 0}
        doc = _post_json(self.endpoint, payload, _token(self.token_env), self.timeout, self.retries)
        try:
            choice = doc["choices"][0]
            content = choice["message"]["content"] if "message" in choice else choice["text"]
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse("response has no first choice text") from exc
        if not isinstance(content, str):
            raise MalformedResponse("choice content is not text")
        return content


def encode_png(image) -> str:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(np.asarray(image, dtype=np.uint8)).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


class HttpVlm:
    def __init__(self, endpoint: str, token_env: str | None = None, timeout=30.0, retries=2):
        self.endpoint, self.token_env = endpoint, token_env
        self.timeout, self.retries = timeout, retries

    def detect(self, image, queries: list[str], image_id: str | None = None) -> list[Detection]:
        payload = {"image": encode_png(image), "queries": list(queries)}
        if image_id is not None:
            payload["image_id"] = image_id
        doc = _post_json(self.endpoint, payload, _token(self.token_env), self.timeout, self.retries)
        if not isinstance(doc, list):
            raise MalformedResponse("detector response must be a list")
        try:
            return [Detection(tuple(float(x) for x in d["box"]), float(d["score"]), str(d.get("label", ""))) for d in doc]
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedResponse(f"bad detection record: {exc}") from exc


# ---------------------------------------------------------------- operations


def query_part(backend, prompt: ChatPrompt) -> PartAnswer:
    raw = backend.complete(prompt)
    label = normalize_part_label(raw)
    if not label:
        raise MalformedResponse(f"empty part answer for prompt {prompt.user!r}")
    return PartAnswer(label, raw)


def ground_part(
    backend, image, part_label: str, threshold: float = DEFAULT_THRESHOLD, image_id: str | None = None
) -> BoundingBox2D:
    """Highest-scoring detection of ``part_label`` at or above ``threshold``, clamped to the image."""
    image = np.asarray(image)
    if image.ndim < 2 or image.size == 0:
        raise ValueError("image is empty")
    if not part_label.strip():
        raise InvalidLabel("part label is empty")
    height, width = image.shape[:2]
    dets = backend.detect(image, [part_label], image_id=image_id)
    kept = []
    for d in dets:
        if d.score < threshold or (d.label and d.label.casefold() != part_label.casefold()):
            continue
        try:
            box = BoundingBox2D(*d.box, confidence=min(max(d.score, 0.0), 1.0), label=part_label)
            kept.append(box.clamped(width, height))
        except (ValueError, BoxOutsideImage):
            logger.warning("ignoring unusable detection %s", d)
    if not kept:
        raise NoDetection(f"no detection of {part_label!r} with score >= {threshold}")
    if len(kept) > 1:
        logger.warning("%d detections of %r above threshold; using the most confident", len(kept), part_label)
    # stable sort keeps backend order among equal scores
    return sorted(kept, key=lambda b: -b.confidence)[0]


# ---------------------------------------------------------------- config


@dataclass(frozen=True)
class EndpointConfig:
    endpoint: str | None = None
    model: str = ""
    token_env: str | None = None
    mock: Path | None = None

    @classmethod
    def from_dict(cls, d: dict, base: Path) -> "EndpointConfig":
        mock = d.get("mock")
        return cls(
            endpoint=d.get("endpoint"),
            model=d.get("model", ""),
            token_env=d.get("token_env"),
            mock=(base / mock) if mock else None,
        )


@dataclass(frozen=True)
class BackendConfig:
    llm: EndpointConfig = field(default_factory=EndpointConfig)
    vlm: EndpointConfig = field(default_factory=EndpointConfig)
    timeout: float = 30.0
    retries: int = 2

    def __post_init__(self):
        if not self.timeout > 0 or self.retries < 0:
            raise ValueError("timeout must be > 0 and retries >= 0")

    @classmethod
    def from_dict(cls, d: dict, base: Path = Path(".")) -> "BackendConfig":
        for ep in (d.get("llm", {}), d.get("vlm", {})):
            if "token" in ep or "api_key" in ep:
                raise ValueError("tokens must be passed through an environment variable (token_env)")
        return cls(
            llm=EndpointConfig.from_dict(d.get("llm", {}), base),
            vlm=EndpointConfig.from_dict(d.get("vlm", {}), base),
            timeout=float(d.get("timeout", 30.0)),
            retries=int(d.get("retries", 2)),
        )

    def make_llm(self):
        if self.llm.mock is not None:
            return MockLlm.from_csv(self.llm.mock)
        if not self.llm.endpoint:
            raise ValueError("llm backend needs an endpoint or a mock table")
        return HttpLlm(self.llm.endpoint, self.llm.model, self.llm.token_env, self.timeout, self.retries)

    def make_vlm(self):
        if self.vlm.mock is not None:
            return MockVlm.from_csv(self.vlm.mock)
        if not self.vlm.endpoint:
            raise ValueError("vlm backend needs an endpoint or a mock table")
        return HttpVlm(self.vlm.endpoint, self.vlm.token_env, self.timeout, self.retries)
