"""Text-generation backends and sampling-campaign orchestration.

Two interchangeable backends sit behind one ``complete()`` interface: an
HTTP client for any completion-style endpoint, and a deterministic mock
that fabricates annotated German medical sentences with configurable
defect rates so the downstream cleansing pipeline can be exercised
offline with exact expected counts.

A campaign fans completion requests out over a small worker pool and
persists the results as raw-sample JSONL, one record per line:

    {"sample_index": int, "text": str,
     "provenance": {"temperature": float, "top_p": float,
                    "max_tokens": int, "seed": int, "backend_id": str}}

Records are committed in sample_index order regardless of completion
order, so re-runs with the same spec and seed are byte-identical.
"""

from __future__ import annotations

import json
import logging
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Protocol, Sequence

import requests

from ._util import atomic_write
from .corpus import DataFormatError, SampleProvenance
from .markup import RawSample
from .prompting import Prompt
from .sampling import SamplingParams, next_unit

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger(__name__)

_MASK64 = (1 << 64) - 1

API_KEY_ENV = "SYNTHNER_API_KEY"


class BackendError(RuntimeError):
    """A completion request failed for one sample; the campaign continues."""


class AuthError(BackendError):
    """Credential rejected or missing; fatal for the whole campaign."""


class ConfigError(ValueError):
    """The campaign config file is missing or malformed."""


@dataclass(frozen=True)
class CampaignStage:
    """One homogeneous block of samples drawn with fixed parameters."""

    n_samples: int
    params: SamplingParams

    def __post_init__(self) -> None:
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")


@dataclass(frozen=True)
class CampaignSpec:
    stages: tuple[CampaignStage, ...]
    prompt: Prompt
    backend_id: str

    @property
    def total_samples(self) -> int:
        return sum(s.n_samples for s in self.stages)


def default_stages(seed: int, *, max_tokens: int = 768) -> tuple[CampaignStage, ...]:
    """The toolkit's default sampling plan.

    1000 samples at temperature 0.8 plus 100 at temperature 0.9, both
    with top-p 0.9 and a 768-token budget.
    """
    return (
        CampaignStage(1000, SamplingParams(0.8, 0.9, max_tokens, seed)),
        CampaignStage(100, SamplingParams(0.9, 0.9, max_tokens, seed)),
    )


class CompletionBackend(Protocol):
    def complete(self, prompt: str, params: SamplingParams) -> str: ...


# --------------------------------------------------------------------------
# Mock backend


_SLOT = re.compile(r"\{([^{}]+)\}")

# Defects are mutually exclusive per sentence: one uniform draw is matched
# against cumulative rate thresholds in this fixed priority order, so a
# later defect's effective probability is clipped if the rates sum past 1.
_DEFECT_ORDER = (
    "missing_close",
    "invalid_syntax",
    "unknown_label",
    "no_annotation",
    "duplicate",
)


@dataclass(frozen=True)
class MockProfile:
    """Generation recipe for the deterministic fake model.

    Templates are literal sentence text with ``{Label}`` slots; each slot
    is filled from the matching lexicon and wrapped in a class tag.
    ``duplicate_pool`` holds finished markup sentences that the duplicate
    defect re-emits verbatim so collisions actually occur across samples.
    """

    templates: tuple[str, ...]
    lexicons: Mapping[str, tuple[str, ...]]
    rate_missing_close: float = 0.0
    rate_invalid_syntax: float = 0.0
    rate_unknown_label: float = 0.0
    rate_no_annotation: float = 0.0
    rate_duplicate: float = 0.0
    foreign_label: str = "Symptom"
    duplicate_pool: tuple[str, ...] = ()
    sentences_per_sample: int = 10

    def __post_init__(self) -> None:
        for name in _DEFECT_ORDER:
            rate = getattr(self, "rate_" + name)
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"rate_{name} must be in [0, 1]")
        if not self.templates:
            raise ValueError("at least one template is required")
        if self.sentences_per_sample < 1:
            raise ValueError("sentences_per_sample must be >= 1")
        if self.rate_duplicate > 0 and not self.duplicate_pool:
            raise ValueError("duplicate_pool required when rate_duplicate > 0")
        if not self.foreign_label:
            raise ValueError("foreign_label must be non-empty")
        for template in self.templates:
            for label in _SLOT.findall(template):
                if not self.lexicons.get(label):
                    raise ValueError(f"no lexicon for slot {label!r}")

    def rate(self, name: str) -> float:
        return getattr(self, "rate_" + name)


_DEFAULT_TEMPLATES = (
    "Der Patient erhält {Medikation} {Dosis} bei {Diagnose}.",
    "Bei {Diagnose} wurde die Therapie mit {Medikation} {Dosis} fortgesetzt.",
    "Unter {Medikation} {Dosis} war die {Diagnose} rückläufig.",
    "Wir begannen eine Behandlung mit {Medikation} {Dosis}.",
    "Die Patientin stellte sich mit {Diagnose} vor.",
    "Wegen {Diagnose} wurde {Medikation} {Dosis} angesetzt.",
    "Nach Gabe von {Medikation} besserte sich die {Diagnose} deutlich.",
    "Fortführung von {Medikation} {Dosis} bei bekannter {Diagnose}.",
)

_DEFAULT_LEXICONS: Mapping[str, tuple[str, ...]] = {
    "Medikation": (
        "Pantoprazol",
        "Ibuprofen",
        "Metformin",
        "Ramipril",
        "Amoxicillin",
        "Simvastatin",
        "Torasemid",
        "Prednisolon",
        "Clopidogrel",
        "Insulin glargin",
    ),
    "Dosis": (
        "40 mg 1-0-0",
        "600 mg p.o.",
        "500 mg 1-0-1",
        "5 mg täglich",
        "875/125 mg 1-1-1",
        "20 mg zur Nacht",
        "10 mg 1-0-0",
        "50 mg morgens",
        "75 mg 1-0-0",
        "12 IE abends",
    ),
    "Diagnose": (
        "Hypertonie",
        "Diabetes mellitus Typ 2",
        "Pneumonie",
        "Refluxösophagitis",
        "Hyperlipidämie",
        "Herzinsuffizienz",
        "Harnwegsinfekt",
        "Gonarthrose",
        "Vorhofflimmern",
        "Anämie",
    ),
}

_DEFAULT_DUPLICATE_POOL = (
    '<s>Der Patient erhält <class="Medikation">Pantoprazol</class> '
    '<class="Dosis">40 mg 1-0-0</class> bei '
    '<class="Diagnose">Refluxösophagitis</class>.</s>',
    '<s>Die Patientin stellte sich mit <class="Diagnose">Pneumonie</class> vor.</s>',
    '<s>Wir begannen eine Behandlung mit <class="Medikation">Metformin</class> '
    '<class="Dosis">500 mg 1-0-1</class>.</s>',
)


def default_mock_profile(**overrides) -> MockProfile:
    """A ready-to-use profile over the Medikation/Dosis/Diagnose labels."""
    base = dict(
        templates=_DEFAULT_TEMPLATES,
        lexicons=_DEFAULT_LEXICONS,
        duplicate_pool=_DEFAULT_DUPLICATE_POOL,
    )
    base.update(overrides)
    return MockProfile(**base)


def _draw_index(state: int, n: int) -> tuple[int, int]:
    u, state = next_unit(state)
    return min(int(u * n), n - 1), state


def _pick_defect(profile: MockProfile, u: float) -> str | None:
    acc = 0.0
    for name in _DEFECT_ORDER:
        acc += profile.rate(name)
        if u < acc:
            return name
    return None


class MockBackend:
    """Deterministic stand-in for the language model.

    The prompt is accepted for interface parity and ignored; output is a
    self-anchored document in which every sentence begins with ``<s>``.
    All randomness comes from the pinned generator seeded with
    ``params.seed``, so equal (profile, params) calls are byte-identical.
    The token budget is approximated with whitespace tokens and applied
    at whole-sentence granularity, so truncation never adds defects the
    profile did not inject.
    """

    def __init__(self, profile: MockProfile):
        self.profile = profile

    def complete(self, prompt: str, params: SamplingParams) -> str:
        profile = self.profile
        state = params.seed & _MASK64
        sentences: list[str] = []
        for _ in range(profile.sentences_per_sample):
            sentence, state = self._emit_sentence(state)
            sentences.append(sentence)
        kept: list[str] = []
        budget = params.max_tokens
        for sentence in sentences:
            cost = len(sentence.split())
            if kept and cost > budget:
                break
            kept.append(sentence)
            budget -= cost
            if budget <= 0:
                break
        return "\n".join(kept)

    def _emit_sentence(self, state: int) -> tuple[str, int]:
        profile = self.profile
        u, state = next_unit(state)
        defect = _pick_defect(profile, u)
        if defect == "duplicate":
            i, state = _draw_index(state, len(profile.duplicate_pool))
            return profile.duplicate_pool[i], state
        i, state = _draw_index(state, len(profile.templates))
        template = profile.templates[i]
        parts: list[str] = []
        cursor = 0
        first_slot = True
        for m in _SLOT.finditer(template):
            parts.append(template[cursor : m.start()])
            label = m.group(1)
            j, state = _draw_index(state, len(profile.lexicons[label]))
            form = profile.lexicons[label][j]
            if defect == "no_annotation":
                parts.append(form)
            else:
                if defect == "unknown_label" and first_slot:
                    label = profile.foreign_label
                parts.append(f'<class="{label}">{form}</class>')
            first_slot = False
            cursor = m.end()
        parts.append(template[cursor:])
        body = "".join(parts)
        if defect == "invalid_syntax":
            body = "</class>" + body
        close = "" if defect == "missing_close" else "</s>"
        return "<s>" + body + close, state


# --------------------------------------------------------------------------
# HTTP backend


class HttpBackend:
    """Client for a completion-style endpoint.

    Sends ``{"prompt", "max_tokens", "temperature", "top_p", "n": 1}``
    (plus ``"model"`` when configured) and expects
    ``{"choices": [{"text": str}]}`` back. The credential comes from the
    ``SYNTHNER_API_KEY`` environment variable unless passed explicitly.

    Transport failures and 5xx/429 responses are retried with exponential
    backoff, at most ``max_attempts`` tries total. 401/403 raise
    :class:`AuthError`. A well-formed completion is never retried; a
    malformed response body is recorded as an empty completion with a
    logged diagnostic rather than retried, so the transport layer can
    never duplicate samples.
    """

    def __init__(
        self,
        url: str,
        model: str | None = None,
        *,
        api_key: str | None = None,
        timeout: float = 120.0,
        max_attempts: int = 5,
        backoff_base: float = 0.5,
        sleep: Callable[[float], None] = time.sleep,
    ):
        key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        if not key:
            raise AuthError(f"no API credential: set {API_KEY_ENV}")
        self.url = url
        self.model = model
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self._sleep = sleep
        self._headers = {"Authorization": f"Bearer {key}"}

    def complete(self, prompt: str, params: SamplingParams) -> str:
        payload: dict = {
            "prompt": prompt,
            "max_tokens": params.max_tokens,
            "temperature": params.temperature,
            "top_p": params.top_p,
            "n": 1,
        }
        if self.model is not None:
            payload["model"] = self.model
        last_error: Exception | None = None
        for attempt in range(1, self.max_attempts + 1):
            if attempt > 1:
                self._sleep(self.backoff_base * 2 ** (attempt - 2))
            try:
                response = self._post(payload)
            except requests.RequestException as exc:
                last_error = exc
                log.warning("transport error (attempt %d): %s", attempt, exc)
                continue
            if response.status_code in (401, 403):
                raise AuthError(f"credential rejected: HTTP {response.status_code}")
            if response.status_code == 429 or response.status_code >= 500:
                last_error = BackendError(f"HTTP {response.status_code}")
                log.warning("retryable HTTP %d (attempt %d)", response.status_code, attempt)
                continue
            if response.status_code != 200:
                raise BackendError(f"HTTP {response.status_code}: {response.text[:200]}")
            return self._extract_text(response)
        raise BackendError(
            f"transport failure after {self.max_attempts} attempts: {last_error}"
        )

    def _post(self, payload: dict) -> requests.Response:
        return requests.post(
            self.url, json=payload, headers=self._headers, timeout=self.timeout
        )

    @staticmethod
    def _extract_text(response: requests.Response) -> str:
        try:
            body = response.json()
            text = body["choices"][0]["text"]
        except (ValueError, LookupError, TypeError):
            log.warning("malformed completion response; recording empty sample")
            return ""
        if not isinstance(text, str):
            log.warning("completion text is not a string; recording empty sample")
            return ""
        return text


# --------------------------------------------------------------------------
# Raw-sample JSONL


def raw_sample_to_record(s: RawSample) -> dict:
    p = s.provenance
    return {
        "sample_index": s.sample_index,
        "text": s.text,
        "provenance": {
            "temperature": p.temperature,
            "top_p": p.top_p,
            "max_tokens": p.max_tokens,
            "seed": p.seed,
            "backend_id": p.backend_id,
        },
    }


def record_to_raw_sample(rec: dict) -> RawSample:
    try:
        prov = rec["provenance"]
        provenance = SampleProvenance(
            sample_index=rec["sample_index"],
            temperature=prov["temperature"],
            top_p=prov["top_p"],
            seed=prov["seed"],
            backend_id=prov["backend_id"],
            max_tokens=prov["max_tokens"],
        )
        return RawSample(rec["sample_index"], rec["text"], provenance)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"bad raw-sample record: {exc}") from exc


def write_raw_samples(samples: Iterable[RawSample], path) -> None:
    """Atomic rewrite in sample_index order."""
    ordered = sorted(samples, key=lambda s: s.sample_index)
    with atomic_write(path) as f:
        for s in ordered:
            f.write(json.dumps(raw_sample_to_record(s), ensure_ascii=False) + "\n")


def read_raw_samples(path) -> list[RawSample]:
    """Tolerates unsorted files (e.g. after an interrupted campaign)."""
    samples: dict[int, RawSample] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            sample = record_to_raw_sample(rec)
            samples[sample.sample_index] = sample
    return [samples[i] for i in sorted(samples)]


# --------------------------------------------------------------------------
# Campaign orchestration


def _campaign_jobs(spec: CampaignSpec) -> list[tuple[int, SamplingParams]]:
    """Global sample indices with per-sample derived seeds.

    The stream seed is stage seed XOR global index; indices are globally
    sequential across stages, so streams never collide even when stages
    share a seed.
    """
    jobs: list[tuple[int, SamplingParams]] = []
    base = 0
    for stage in spec.stages:
        for i in range(stage.n_samples):
            index = base + i
            jobs.append((index, replace(stage.params, seed=stage.params.seed ^ index)))
        base += stage.n_samples
    return jobs


def run_campaign(
    spec: CampaignSpec,
    backend: CompletionBackend,
    out_path,
    *,
    workers: int = 2,
    resume: bool = False,
) -> list[RawSample]:
    """Issue every completion in the campaign and persist the results.

    Completed samples are appended to ``out_path`` in sample_index order
    as they commit (crash durability), then the file is atomically
    rewritten as the canonical sorted merge, so the bytes at rest never
    depend on worker count or on fresh-vs-resumed execution.

    With ``resume=True``, indices already present in ``out_path`` are
    kept and only the missing ones are requested. Individual sample
    failures are logged and leave gaps; :class:`AuthError` aborts.
    """
    existing: dict[int, RawSample] = {}
    if resume and os.path.exists(out_path):
        existing = {s.sample_index: s for s in read_raw_samples(out_path)}
    jobs = [(i, p) for i, p in _campaign_jobs(spec) if i not in existing]

    def one(index: int, params: SamplingParams) -> RawSample:
        text = backend.complete(spec.prompt.text, params)
        provenance = SampleProvenance(
            sample_index=index,
            temperature=params.temperature,
            top_p=params.top_p,
            seed=params.seed,
            backend_id=spec.backend_id,
            max_tokens=params.max_tokens,
        )
        return RawSample(index, text, provenance)

    results: dict[int, RawSample] = {}
    # Fresh runs truncate so a crash can never leave stale records behind
    # for a later resume to merge.
    mode = "a" if resume else "w"
    with open(out_path, mode, encoding="utf-8") as sink:
        pending: dict[int, RawSample | None] = {}
        order = [i for i, _ in jobs]
        commit_at = 0

        def commit_ready() -> None:
            # Single-owner writer: only the submitting thread appends.
            nonlocal commit_at
            while commit_at < len(order) and order[commit_at] in pending:
                sample = pending.pop(order[commit_at])
                if sample is not None:
                    sink.write(
                        json.dumps(raw_sample_to_record(sample), ensure_ascii=False)
                        + "\n"
                    )
                    sink.flush()
                commit_at += 1

        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            futures = {pool.submit(one, i, p): i for i, p in jobs}
            try:
                for future in futures:
                    index = futures[future]
                    try:
                        sample = future.result()
                    except AuthError:
                        raise
                    except BackendError as exc:
                        log.warning("sample %d failed: %s", index, exc)
                        pending[index] = None
                    else:
                        results[index] = sample
                        pending[index] = sample
                    commit_ready()
            except AuthError:
                for f in futures:
                    f.cancel()
                raise

    merged = dict(existing)
    merged.update(results)
    ordered = [merged[i] for i in sorted(merged)]
    write_raw_samples(ordered, out_path)
    return ordered


# --------------------------------------------------------------------------
# Campaign config file


@dataclass(frozen=True)
class CampaignConfig:
    """Parsed campaign config: backend choice, stages, run knobs."""

    backend_kind: str
    stages: tuple[CampaignStage, ...]
    backend_id: str
    output: str
    concurrency: int = 2
    url: str | None = None
    model: str | None = None
    examples: str | None = None
    mock_profile: MockProfile | None = None
    mock_overrides: Mapping[str, object] = field(default_factory=dict)


def load_campaign_config(path, *, default_seed: int | None = None) -> CampaignConfig:
    """Read a TOML campaign file.

    Top-level keys: ``backend`` ("mock" or "http"), ``output``,
    ``seed`` (default for stages), ``concurrency``, ``backend_id``,
    ``examples``, plus ``url``/``model`` for http. Each ``[[stages]]``
    table needs ``n_samples``, ``temperature``, ``top_p``, ``max_tokens``
    and may override ``seed``. An optional ``[mock]`` table carries
    :class:`MockProfile` overrides (defect rates, sentences_per_sample).
    """
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read campaign config: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc

    kind = data.get("backend")
    if kind not in ("mock", "http"):
        raise ConfigError("backend must be 'mock' or 'http'")
    output = data.get("output")
    if not isinstance(output, str) or not output:
        raise ConfigError("output path is required")
    base_seed = data.get("seed", default_seed)
    raw_stages = data.get("stages")
    if not isinstance(raw_stages, list) or not raw_stages:
        raise ConfigError("at least one [[stages]] table is required")
    stages = []
    for n, table in enumerate(raw_stages):
        if not isinstance(table, dict):
            raise ConfigError(f"stages[{n}] must be a table")
        seed = table.get("seed", base_seed)
        if seed is None:
            raise ConfigError(f"stages[{n}]: no seed given and no top-level seed")
        try:
            stages.append(
                CampaignStage(
                    n_samples=table["n_samples"],
                    params=SamplingParams(
                        temperature=table["temperature"],
                        top_p=table["top_p"],
                        max_tokens=table["max_tokens"],
                        seed=seed,
                    ),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"stages[{n}]: {exc}") from exc

    url = data.get("url")
    if kind == "http" and not url:
        raise ConfigError("http backend requires a url")
    backend_id = data.get("backend_id") or data.get("model") or kind

    mock_profile = None
    mock_overrides: dict = {}
    if kind == "mock":
        table = data.get("mock", {})
        if not isinstance(table, dict):
            raise ConfigError("[mock] must be a table")
        mock_overrides = dict(table)
        try:
            mock_profile = default_mock_profile(**mock_overrides)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[mock]: {exc}") from exc

    return CampaignConfig(
        backend_kind=kind,
        stages=tuple(stages),
        backend_id=backend_id,
        output=output,
        concurrency=int(data.get("concurrency", 2)),
        url=url,
        model=data.get("model"),
        examples=data.get("examples"),
        mock_profile=mock_profile,
        mock_overrides=mock_overrides,
    )


def build_backend(config: CampaignConfig) -> CompletionBackend:
    if config.backend_kind == "mock":
        assert config.mock_profile is not None
        return MockBackend(config.mock_profile)
    return HttpBackend(config.url, config.model)
