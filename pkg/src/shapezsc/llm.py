"""Language-model shaping selection: prompt assembly, providers, response parsing."""
from __future__ import annotations

import json
import os
import re
import socket
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Protocol, Sequence

from .errors import EmptyData, ExhaustedRetries, ProviderTimeout, ProviderUnreachable, ValidationError
from .kitchen.env import FEATURE_NAMES
from .shaping import ShapingSet, ShapingVector, validate_shaping_set
from .surrogate import ResultRecord

PROMPT_TEMPLATE = """\
Attached are two files.
1: Part of the code for the Overcooked reinforcement learning environment, which has multiple possible shaped rewards.
2: Training results from training populations of agents using specific reward shaping weights.

I want you to propose to me, given the attached 2 files, a set of {p} reward shaping weights (using the same 6 shaped infos as the results file). I want you to prioritize two things.
1: The diversity of your proposed reward shaping weights (not making them too similar to each other). You would prefer to propose a set of {p} weights that will create a set of {p} diverse policies.
2: The estimated performances of your proposed weights.

Propose to me a format like this:
[{{params...}}, {{params...}}, ...]
"""

RESULTS_HEADER = "[Attached results file:]"
CODE_HEADER = "[Attached Overcooked Environment Code]"


@dataclass(frozen=True)
class PromptBundle:
    instruction_text: str
    results_blob: str
    env_code_blob: str
    requested_count: int

    @property
    def text(self) -> str:
        return (
            f"{self.instruction_text}\n{RESULTS_HEADER}\n\n{self.results_blob}\n\n"
            f"{CODE_HEADER}\n\n{self.env_code_blob}\n"
        )


def build_prompt(data: Sequence[ResultRecord], env_code: str, p: int) -> PromptBundle:
    if p < 1:
        raise ValueError(f"requested count must be >= 1, got {p}")
    if not data:
        raise EmptyData("prompt needs at least one result record")
    blob = json.dumps([r.to_json() for r in data], indent=2)
    return PromptBundle(PROMPT_TEMPLATE.format(p=p), blob, env_code, p)


def default_env_code() -> str:
    """Curated environment excerpt shipped with the package for prompts."""
    return resources.files("shapezsc.kitchen").joinpath("kernels.py").read_text()


# --- parsing -----------------------------------------------------------------

@dataclass(frozen=True)
class ParseFailure:
    kind: str  # MissingArray | WrongCount | UnknownKey | MissingKey | OutOfRange | NonNumeric
    detail: str
    position: int | None = None  # object index within the array, when known
    value: object = None

    def __str__(self) -> str:
        where = f" at entry {self.position}" if self.position is not None else ""
        return f"{self.kind}{where}: {self.detail}"


@dataclass
class LlmResponse:
    raw_text: str
    parsed: ShapingSet | None
    failure: ParseFailure | None = None
    rationale_text: str = ""


def _first_array(raw: str):
    """Decode the first top-level JSON array in ``raw``; returns (value, end) or None."""
    decoder = json.JSONDecoder()
    for m in re.finditer(r"\[", raw):
        try:
            value, end = decoder.raw_decode(raw, m.start())
        except json.JSONDecodeError:
            continue
        if isinstance(value, list):
            return value, end
    return None


def _number(v):
    if isinstance(v, bool):
        return None
    if isinstance(v, (int, float)):
        return float(v)
    if isinstance(v, str):
        try:
            return float(v.strip())
        except ValueError:
            return None
    return None


def parse_response(raw: str, p: int) -> ShapingSet | ParseFailure:
    """Extract and validate exactly ``p`` shaping objects from provider text.

    Leading fence text (e.g. ``json``) and trailing prose are ignored; all
    failures come back as a ParseFailure value rather than an exception.
    """
    found = _first_array(raw)
    if found is None:
        return ParseFailure("MissingArray", "no JSON array found in response")
    items, _ = found
    if len(items) != p:
        return ParseFailure("WrongCount", f"expected {p} entries, found {len(items)}", value=len(items))
    shapings = []
    for i, obj in enumerate(items):
        if not isinstance(obj, dict):
            return ParseFailure("NonNumeric", "entry is not an object", i, obj)
        unknown = [k for k in obj if k not in FEATURE_NAMES]
        if unknown:
            return ParseFailure("UnknownKey", f"unknown key {unknown[0]!r}", i, unknown[0])
        missing = [k for k in FEATURE_NAMES if k not in obj]
        if missing:
            return ParseFailure("MissingKey", f"missing key {missing[0]!r}", i, missing[0])
        weights = []
        for k in FEATURE_NAMES:
            v = _number(obj[k])
            if v is None:
                return ParseFailure("NonNumeric", f"{k} = {obj[k]!r} is not numeric", i, k)
            weights.append(v)
        problems = validate_shaping_set([weights])
        if problems:
            k = FEATURE_NAMES[problems[0].feature_index]
            return ParseFailure("OutOfRange", f"{k} = {problems[0].value} outside [0, 10]", i, k)
        shapings.append(ShapingVector(tuple(weights)))
    return ShapingSet(shapings, "LLM")


def format_response(shapings: ShapingSet, rationale: str = "") -> str:
    """Render a set the way a provider is asked to answer (inverse of parse_response)."""
    body = json.dumps([s.to_dict() for s in shapings.shapings], indent=2)
    return f"json{body}\n{rationale}".rstrip() + "\n"


# --- providers ---------------------------------------------------------------

class Provider(Protocol):
    def complete(self, text: str) -> str: ...


Transport = Callable[[str, dict, bytes, float], bytes]


def urllib_transport(url: str, headers: dict, body: bytes, timeout: float) -> bytes:
    req = urllib.request.Request(url, data=body, headers=headers, method="POST")
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return resp.read()
    except (socket.timeout, TimeoutError) as exc:
        raise ProviderTimeout(f"{url}: no response within {timeout}s") from exc
    except urllib.error.HTTPError as exc:
        raise ProviderUnreachable(f"{url}: HTTP {exc.code}") from exc
    except urllib.error.URLError as exc:
        if isinstance(exc.reason, (socket.timeout, TimeoutError)):
            raise ProviderTimeout(f"{url}: no response within {timeout}s") from exc
        raise ProviderUnreachable(f"{url}: {exc.reason}") from exc
    except OSError as exc:
        raise ProviderUnreachable(f"{url}: {exc}") from exc


@dataclass
class ProviderConfig:
    mode: str = "Fixture"  # Live | Fixture
    endpoint: str = ""
    model_name: str = ""
    api_key_env_var: str = "SHAPEZSC_LLM_API_KEY"
    timeout: float = 60.0
    fixture_path: str | None = None
    extra_headers: dict = field(default_factory=dict)

    def problems(self) -> list[str]:
        out = []
        if self.mode == "Live":
            if not self.endpoint:
                out.append("Live mode needs an endpoint")
            if not os.environ.get(self.api_key_env_var):
                out.append(f"Live mode needs environment variable {self.api_key_env_var}")
        elif self.mode == "Fixture":
            if not self.fixture_path or not Path(self.fixture_path).is_file():
                out.append(f"Fixture mode needs a readable fixture file, got {self.fixture_path!r}")
        else:
            out.append(f"unknown provider mode {self.mode!r}")
        return out

    @classmethod
    def from_json(cls, d: dict) -> "ProviderConfig":
        allowed = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - allowed
        if unknown:
            raise ValidationError(f"unknown provider config keys {sorted(unknown)}")
        return cls(**d)


class FixtureProvider:
    """Replays a stored provider response; never touches the network."""

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def complete(self, text: str) -> str:
        return self.path.read_text()


class HttpProvider:
    """Chat-completion style POST: ``{model, messages: [{role: user, content}]}``.

    The reply is read from the first text block found under ``content``
    (message-list style) or ``choices[0].message.content``.
    """

    def __init__(self, cfg: ProviderConfig, transport: Transport = urllib_transport):
        self.cfg = cfg
        self.transport = transport

    def complete(self, text: str) -> str:
        payload = {
            "model": self.cfg.model_name,
            "max_tokens": 4096,
            "messages": [{"role": "user", "content": text}],
        }
        key = os.environ.get(self.cfg.api_key_env_var, "")
        headers = {
            "content-type": "application/json",
            "authorization": f"Bearer {key}",
            "x-api-key": key,
            **self.cfg.extra_headers,
        }
        raw = self.transport(self.cfg.endpoint, headers, json.dumps(payload).encode(), self.cfg.timeout)
        return extract_text(json.loads(raw))


def extract_text(doc) -> str:
    if isinstance(doc, dict):
        content = doc.get("content")
        if isinstance(content, list):
            for block in content:
                if isinstance(block, dict) and isinstance(block.get("text"), str):
                    return block["text"]
        if isinstance(content, str):
            return content
        choices = doc.get("choices")
        if isinstance(choices, list) and choices:
            msg = choices[0].get("message", {})
            if isinstance(msg.get("content"), str):
                return msg["content"]
    raise ProviderUnreachable("provider reply has no text block")


def make_provider(cfg: ProviderConfig, transport: Transport = urllib_transport) -> Provider:
    problems = cfg.problems()
    if problems:
        raise ValidationError("; ".join(problems))
    if cfg.mode == "Fixture":
        return FixtureProvider(cfg.fixture_path)
    return HttpProvider(cfg, transport)


def llm_select(cfg: ProviderConfig, data: Sequence[ResultRecord], env_code: str, p: int,
               max_retries: int = 2, transport: Transport = urllib_transport,
               responses: list | None = None) -> ShapingSet:
    """Prompt the provider until a valid set of ``p`` shapings comes back.

    Each parse failure is summarized and appended to the next prompt. Every
    attempt is recorded in ``responses`` when a list is supplied.
    """
    provider = make_provider(cfg, transport)
    prompt = build_prompt(data, env_code, p).text
    failure = None
    for _attempt in range(max_retries + 1):
        text = prompt
        if failure is not None:
            text += (f"\nYour previous answer could not be used ({failure}). "
                     f"Reply with exactly {p} objects using only the keys {', '.join(FEATURE_NAMES)}, "
                     f"each value between 0 and 10.\n")
        raw = provider.complete(text)
        result = parse_response(raw, p)
        if isinstance(result, ShapingSet):
            if responses is not None:
                responses.append(LlmResponse(raw, result, None, _rationale(raw)))
            return result
        failure = result
        if responses is not None:
            responses.append(LlmResponse(raw, None, failure, _rationale(raw)))
    raise ExhaustedRetries(failure)


def _rationale(raw: str) -> str:
    found = _first_array(raw)
    return raw[found[1]:].strip() if found else raw.strip()


def example_fixture_path() -> Path:
    return Path(str(resources.files("shapezsc").joinpath("data", "llm_response_example.txt")))


def example_results_path() -> Path:
    return Path(str(resources.files("shapezsc").joinpath("data", "example_results.json")))
