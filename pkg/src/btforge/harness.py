"""Batch evaluation of candidate trees against a dataset, plus corpus mutation.

Candidates are raw documents keyed by sample id, supplied either as a JSONL
file of ``{"id": ..., "bt": <text or object>}`` records or as a directory of
``<id>.json`` files. The literal ``"self"`` evaluates each sample's own tree.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .metrics import MetricsReport, SampleOutcome, aggregate, tree_metrics
from .model import (
    COMPOSITES,
    JsonError,
    KeyErrorReport,
    dumps_min,
    lower,
    parse_document,
    serialize_minified,
    to_raw,
)
from .oracle import DatasetSample, derive_seed
from .sim import SimParams, run
from .validate import validate

MUTATION_KINDS = ("truncate-json", "drop-key", "name-on-composite", "nest-same-kind",
                  "unknown-primitive", "remove-offset")


class MissingCandidate(KeyError):
    def __init__(self, sample_id: Any):
        super().__init__(f"no candidate document for sample {sample_id!r}")
        self.sample_id = sample_id


def load_candidates(path: str | os.PathLike) -> dict[str, str]:
    p = Path(path)
    out: dict[str, str] = {}
    if p.is_dir():
        for f in sorted(p.glob("*.json")):
            out[f.stem] = f.read_text(encoding="utf-8")
        return out
    with open(p, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            bt = rec["bt"]
            out[str(rec["id"])] = bt if isinstance(bt, str) else json.dumps(bt)
    return out


def evaluate_document(sample: DatasetSample, text: str, params: SimParams | None = None,
                      strict_offset: bool = False, record_trace: bool = False) -> SampleOutcome:
    """parse -> lower -> validate -> execute for one candidate document.

    Execution only happens when the document parses and lowers cleanly.
    """
    try:
        raw = parse_document(text)
    except JsonError as exc:
        return SampleOutcome(sample.index, parse_ok=False, error=str(exc))
    try:
        bt = lower(raw, sample.spec)
    except KeyErrorReport as exc:
        return SampleOutcome(sample.index, parse_ok=True, key_errors=len(exc.entries), error=str(exc))
    report = validate(bt, sample.spec, strict_offset=strict_offset)
    result = run(bt, sample.scene, sample.spec, sample.goals, params, record_trace=record_trace)
    return SampleOutcome(sample.index, parse_ok=True, key_errors=0, validation=report,
                         metrics=tree_metrics(bt), execution=result, task_success=result.success,
                         error=result.error)


def _evaluate_one(args: tuple) -> SampleOutcome:
    sample, text, params, strict = args
    out = evaluate_document(sample, text, params, strict)
    if out.execution is not None:
        # traces and worlds are bulky and not needed after aggregation
        out.execution.trace = []
    return out


@dataclass
class Evaluation:
    report: MetricsReport
    outcomes: list[SampleOutcome]

    def outcomes_jsonl(self) -> str:
        return "".join(json.dumps(o.to_json(), separators=(",", ":")) + "\n" for o in self.outcomes)


def evaluate(samples: Sequence[DatasetSample], candidates: Mapping[str, str] | str = "self",
             params: SimParams | None = None, strict_offset: bool | None = None,
             label: str = "corpus", jobs: int = 1) -> Evaluation:
    """Evaluate every sample; ``strict_offset`` defaults to True only for ``"self"``."""
    self_eval = isinstance(candidates, str) and candidates == "self"
    if strict_offset is None:
        strict_offset = self_eval
    work = []
    for s in samples:
        if self_eval:
            text = serialize_minified(s.target_bt)
        else:
            assert not isinstance(candidates, str)
            key = str(s.index)
            if key not in candidates:
                raise MissingCandidate(s.index)
            text = candidates[key]
        work.append((s, text, params, strict_offset))
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_evaluate_one, work, chunksize=16))
    else:
        outcomes = [_evaluate_one(w) for w in work]
    outcomes.sort(key=lambda o: o.sample_id)
    return Evaluation(aggregate(outcomes, label=label), outcomes)


# --------------------------------------------------------------------------- mutation


def _composite_paths(raw: dict, path: tuple[int, ...] = ()) -> list[tuple[int, ...]]:
    out = []
    if raw.get("type") in {k.value for k in COMPOSITES}:
        out.append(path)
        for i, c in enumerate(raw["children"]):
            out += _composite_paths(c, path + (i,))
    return out


def _leaf_paths(raw: dict, path: tuple[int, ...] = ()) -> list[tuple[int, ...]]:
    if "children" not in raw:
        return [path]
    out = []
    for i, c in enumerate(raw["children"]):
        out += _leaf_paths(c, path + (i,))
    return out


def _at(raw: dict, path: Sequence[int]) -> dict:
    for i in path:
        raw = raw["children"][i]
    return raw


def mutate_document(raw: dict, kind: str, rng: np.random.Generator, key: str | None = None) -> str:
    """Apply one mutation to a (deep-copied) raw tree and return document text."""
    raw = json.loads(json.dumps(raw))
    if kind == "truncate-json":
        text = dumps_min(raw)
        cut = int(rng.integers(1, max(2, len(text) - 1)))
        return text[:cut]
    if kind == "drop-key":
        if key is None:
            key = ("type", "children", "name")[int(rng.integers(3))]
        if key == "children":
            target = _at(raw, _choice(_composite_paths(raw), rng))
        elif key == "name":
            target = _at(raw, _choice(_leaf_paths(raw), rng))
        elif key == "type":
            paths = _composite_paths(raw) + _leaf_paths(raw)
            target = _at(raw, _choice(sorted(paths), rng))
        else:
            raise ValueError(f"drop-key supports type/children/name, not {key!r}")
        del target[key]
        return dumps_min(raw)
    if kind == "name-on-composite":
        target = _at(raw, _choice(_composite_paths(raw), rng))
        target["name"] = "phase"
        return dumps_min(raw)
    if kind == "nest-same-kind":
        parent_path = _choice(_composite_paths(raw), rng)
        parent = _at(raw, parent_path)
        i = int(rng.integers(len(parent["children"])))
        parent["children"][i] = {"type": parent["type"], "children": [parent["children"][i]]}
        return dumps_min(raw)
    if kind == "unknown-primitive":
        actions = [p for p in _leaf_paths(raw) if _at(raw, p)["type"] == "Action"]
        _at(raw, _choice(actions, rng))["name"] = "EngageVacuum"
        return dumps_min(raw)
    if kind == "remove-offset":
        leaves = [_at(raw, p) for p in _leaf_paths(raw)]
        offsets = [l for l in leaves if l.get("name") == "MovePose"
                   and any("+z=" in a for a in l.get("args", []))]
        if not offsets:
            return dumps_min(raw)
        label = offsets[0]["args"][0].split("+z=")[0]
        # strip every offset on this label so the first approach becomes direct
        for leaf in leaves:
            if "args" in leaf:
                leaf["args"] = [label if a.split("+z=")[0] == label else a for a in leaf["args"]]
        return dumps_min(raw)
    raise ValueError(f"unknown mutation kind {kind!r}")


def _choice(items: Sequence, rng: np.random.Generator):
    if not items:
        raise ValueError("nothing to mutate")
    return items[int(rng.integers(len(items)))]


def mutate_corpus(samples: Sequence[DatasetSample], kind: str, rate: float, seed: int,
                  key: str | None = None) -> list[dict]:
    """Candidate records where exactly ``round(rate * n)`` samples are mutated.

    Which samples get mutated is a seeded permutation, so the selection is
    nested across rates: every sample mutated at rate r is also mutated at any
    higher rate with the same seed.
    """
    if kind not in MUTATION_KINDS:
        raise ValueError(f"unknown mutation kind {kind!r}; expected one of {MUTATION_KINDS}")
    if not 0.0 <= rate <= 1.0:
        raise ValueError("rate must lie in [0, 1]")
    n = len(samples)
    k = int(round(rate * n))
    order = np.random.default_rng(derive_seed(seed, "select", kind)).permutation(n)
    chosen = set(int(i) for i in order[:k])
    records = []
    for pos, s in enumerate(samples):
        raw = to_raw(s.target_bt)
        if pos in chosen:
            rng = np.random.default_rng(derive_seed(seed, kind, s.index))
            text = mutate_document(raw, kind, rng, key)
        else:
            text = dumps_min(raw)
        records.append({"id": s.index, "bt": text, "mutated": pos in chosen})
    return records


def write_jsonl(records: Iterable[Mapping], fh) -> None:
    for r in records:
        fh.write(dumps_min(r) + "\n")
