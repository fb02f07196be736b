"""Command-line entry point: ``btforge <subcommand> ...``.

Precedence for tunables is flag > ``--config`` JSON > built-in default. The
config document may hold ``sim``, ``scene`` and ``oracle`` sections whose keys
mirror :class:`SimParams`, :class:`SceneConfig` and :class:`OracleConfig`.

Exit codes: 0 ok, 1 execution failure, 2 validation violations, 3 key errors,
4 invalid JSON, 5 timeout, 64 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from dataclasses import fields, replace
from pathlib import Path
from typing import Any, Callable, Sequence

from .harness import MUTATION_KINDS, MissingCandidate, evaluate, load_candidates, mutate_corpus
from .metrics import report_csv, report_table, tree_metrics
from .model import (
    JsonError,
    KeyErrorReport,
    SystemSpecification,
    dumps_min,
    gripper_spec,
    lower,
    parse_document,
)
from .oracle import DatasetBuildError, DatasetSample, OracleConfig, iter_dataset, load_dataset
from .scene import Scene, SceneConfig, render_schematic
from .sim import Perturbation, SimParams, run
from .validate import validate

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_VIOLATIONS = 2
EXIT_KEY_ERRORS = 3
EXIT_BAD_JSON = 4
EXIT_TIMEOUT = 5
EXIT_USAGE = 64

log = logging.getLogger("btforge")


class UsageError(Exception):
    """Bad flags or unreadable inputs; maps to exit code 64."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # type: ignore[override]
        self.print_usage(sys.stderr)
        raise UsageError(message)


def atomic_write(path: str | os.PathLike, text: str) -> None:
    """Write via a sibling temp file and rename, so no partial file survives an error."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc


def _read_json(path: str) -> Any:
    try:
        return json.loads(_read_text(path))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path} is not valid JSON: {exc}") from exc


# --------------------------------------------------------------------------- config


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    cfg = _read_json(path)
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    unknown = set(cfg) - {"sim", "scene", "oracle"}
    if unknown:
        raise UsageError(f"unknown config sections {sorted(unknown)}")
    return cfg


def _sim_params(args: argparse.Namespace) -> SimParams:
    section = dict(args.config.get("sim", {}))
    known = {f.name for f in fields(SimParams)}
    bad = set(section) - known
    if bad:
        raise UsageError(f"unknown sim keys {sorted(bad)}")
    if getattr(args, "max_ticks", None) is not None:
        section["max_ticks"] = args.max_ticks
    if getattr(args, "stale_metadata", False):
        section["update_metadata"] = False
    try:
        return SimParams(**section)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad sim config: {exc}") from exc


def _scene_config(args: argparse.Namespace) -> SceneConfig:
    try:
        cfg = SceneConfig.from_json(args.config.get("scene", {}))
        if getattr(args, "objects", None) is not None:
            cfg = replace(cfg, n_objects=tuple(args.objects))
        return cfg
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad scene config: {exc}") from exc


def _oracle_config(args: argparse.Namespace) -> OracleConfig:
    section = dict(args.config.get("oracle", {}))
    if getattr(args, "kinds", None):
        section["kind_weights"] = {k: 1.0 for k in args.kinds}
    if getattr(args, "descend_mode", None):
        section["descend_mode"] = args.descend_mode
    try:
        cfg = OracleConfig.from_json(section)
        cfg.weights()
        return cfg
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad oracle config: {exc}") from exc


def _dataset(path: str) -> list[DatasetSample]:
    try:
        return load_dataset(path)
    except OSError as exc:
        raise UsageError(f"cannot read dataset {path}: {exc}") from exc
    except DatasetBuildError as exc:
        raise UsageError(f"corrupt dataset record at line {exc.index}: {exc.cause}") from exc


def _emit(obj: Any) -> None:
    print(json.dumps(obj, indent=2, sort_keys=False))


# --------------------------------------------------------------------------- subcommands


def cmd_generate(args: argparse.Namespace) -> int:
    scene_cfg, oracle_cfg = _scene_config(args), _oracle_config(args)
    try:
        lines = [s.to_jsonl() for s in iter_dataset(args.n, args.seed, scene_cfg, oracle_cfg)]
    except DatasetBuildError as exc:
        log.error("%s", exc)
        return EXIT_FAILURE
    atomic_write(args.out, "".join(lines))
    log.info("wrote %d samples to %s", len(lines), args.out)
    return EXIT_OK


def _spec_from(path: str | None) -> SystemSpecification:
    if path is None:
        return gripper_spec()
    raw = _read_json(path)
    # a dataset record carries its spec under "spec"
    if isinstance(raw, dict) and "spec" in raw and "actions" not in raw:
        raw = raw["spec"]
    try:
        return SystemSpecification.from_json(raw)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"bad system specification {path}: {exc}") from exc


def _lower_file(path: str, spec: SystemSpecification | None):
    """Return (tree, exit_code, payload); tree is None when the document is rejected."""
    text = _read_text(path)
    try:
        raw = parse_document(text)
    except JsonError as exc:
        return None, EXIT_BAD_JSON, {"json_valid": False, "error": str(exc)}
    try:
        return lower(raw, spec), EXIT_OK, {"json_valid": True}
    except KeyErrorReport as exc:
        return None, EXIT_KEY_ERRORS, {"json_valid": True,
                                       "key_errors": [e.to_json() for e in exc.entries]}


def cmd_validate(args: argparse.Namespace) -> int:
    spec = _spec_from(args.spec)
    bt, code, payload = _lower_file(args.file, spec)
    if bt is None:
        _emit(payload)
        return code
    report = validate(bt, spec, strict_offset=args.strict)
    if args.jsonl:
        sys.stdout.write(report.jsonl())
    else:
        _emit({**payload, "key_errors": [], **report.to_json()})
    return EXIT_OK if report.schema_compliant() else EXIT_VIOLATIONS


def cmd_metrics(args: argparse.Namespace) -> int:
    spec = _spec_from(args.spec) if args.spec else None
    bt, code, payload = _lower_file(args.file, spec)
    if bt is None:
        _emit(payload)
        return code
    _emit(tree_metrics(bt).to_json())
    return EXIT_OK


def _find_sample(samples: Sequence[DatasetSample], sample_id: str) -> DatasetSample:
    for s in samples:
        if str(s.index) == sample_id:
            return s
    raise UsageError(f"no sample with id {sample_id!r}")


def _perturbations(path: str | None) -> list[Perturbation]:
    if path is None:
        return []
    raw = _read_json(path)
    if isinstance(raw, dict):
        raw = raw.get("perturbations", [raw])
    try:
        return [Perturbation.from_json(p) for p in raw]
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"bad perturbation script {path}: {exc}") from exc


def cmd_execute(args: argparse.Namespace) -> int:
    sample = _find_sample(_dataset(args.dataset), args.id)
    params = _sim_params(args)
    bt = sample.target_bt
    if args.bt:
        bt, code, payload = _lower_file(args.bt, sample.spec)
        if bt is None:
            _emit(payload)
            return code
    result = run(bt, sample.scene, sample.spec, sample.goals, params,
                 _perturbations(args.perturb), record_trace=True)
    if args.trace:
        atomic_write(args.trace, result.trace_jsonl())
    _emit(result.summary())
    return result.exit_code


def cmd_evaluate(args: argparse.Namespace) -> int:
    samples = _dataset(args.dataset)
    if args.candidates == "self":
        candidates: Any = "self"
    else:
        try:
            candidates = load_candidates(args.candidates)
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise UsageError(f"cannot load candidates {args.candidates}: {exc}") from exc
    strict = True if args.strict else (False if args.lenient else None)
    try:
        ev = evaluate(samples, candidates, _sim_params(args), strict_offset=strict,
                      label=args.label or Path(args.candidates).stem, jobs=args.jobs)
    except MissingCandidate as exc:
        raise UsageError(str(exc.args[0])) from exc
    table = report_table([ev.report])
    print(table, end="")
    if args.out:
        out = Path(args.out)
        atomic_write(out / "report.csv", report_csv([ev.report]))
        atomic_write(out / "report.txt", table)
        atomic_write(out / "outcomes.jsonl", ev.outcomes_jsonl())
    return EXIT_OK


def cmd_mutate(args: argparse.Namespace) -> int:
    samples = _dataset(args.dataset)
    try:
        records = mutate_corpus(samples, args.kind, args.rate, args.seed, args.key)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    atomic_write(args.out, "".join(dumps_min(r) + "\n" for r in records))
    log.info("mutated %d of %d samples", sum(r["mutated"] for r in records), len(records))
    return EXIT_OK


def cmd_render(args: argparse.Namespace) -> int:
    raw = _read_json(args.scene)
    if isinstance(raw, dict) and "scene" in raw:
        raw = raw["scene"]
    try:
        scene = Scene.from_json(raw)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"bad scene {args.scene}: {exc}") from exc
    atomic_write(args.out, render_schematic(scene))
    return EXIT_OK


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="btforge", description="JSON behavior-tree toolkit.")
    p.add_argument("--config", help="JSON config with sim/scene/oracle sections")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name: str, fn: Callable[[argparse.Namespace], int], help_: str):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=fn)
        return sp

    g = add("generate", cmd_generate, "build an oracle dataset as JSONL")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True, help="output JSONL path")
    g.add_argument("--objects", type=int, nargs=2, metavar=("MIN", "MAX"))
    g.add_argument("--kinds", nargs="+", help="restrict to these task kinds, uniformly")
    g.add_argument("--descend-mode", choices=("pose", "movedown"))

    v = add("validate", cmd_validate, "parse, lower and validate one BT document")
    v.add_argument("file")
    v.add_argument("--spec", help="system specification JSON (default: built-in vocabulary)")
    v.add_argument("--strict", action="store_true", help="offset findings count as violations")
    v.add_argument("--jsonl", action="store_true", help="print violations as JSONL")

    m = add("metrics", cmd_metrics, "structural metrics of one BT document")
    m.add_argument("file")
    m.add_argument("--spec")

    e = add("execute", cmd_execute, "run one dataset sample in the simulator")
    e.add_argument("--dataset", required=True)
    e.add_argument("--id", required=True)
    e.add_argument("--perturb", help="JSON list of perturbations")
    e.add_argument("--trace", help="write the tick trace as JSONL here")
    e.add_argument("--bt", help="execute this document instead of the sample's tree")
    e.add_argument("--stale-metadata", action="store_true",
                   help="do not refresh object labels after perturbations")
    e.add_argument("--max-ticks", type=int)

    ev = add("evaluate", cmd_evaluate, "evaluate candidates against a dataset")
    ev.add_argument("--dataset", required=True)
    ev.add_argument("--candidates", required=True, help='JSONL file, directory, or "self"')
    ev.add_argument("--out", help="directory for report.csv, report.txt, outcomes.jsonl")
    ev.add_argument("--label")
    ev.add_argument("--jobs", type=int, default=1)
    ev.add_argument("--max-ticks", type=int)
    strictness = ev.add_mutually_exclusive_group()
    strictness.add_argument("--strict", action="store_true")
    strictness.add_argument("--lenient", action="store_true")

    mu = add("mutate", cmd_mutate, "write a mutated candidate corpus")
    mu.add_argument("--dataset", required=True)
    mu.add_argument("--kind", required=True, choices=MUTATION_KINDS)
    mu.add_argument("--rate", type=float, required=True)
    mu.add_argument("--seed", type=int, required=True)
    mu.add_argument("--out", required=True)
    mu.add_argument("--key", choices=("type", "children", "name"), help="key for drop-key")

    r = add("render", cmd_render, "draw a scene as SVG")
    r.add_argument("--scene", required=True, help="scene JSON or a dataset record")
    r.add_argument("--out", required=True)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("BTFORGE_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        args.config = _load_config(args.config)
        return args.func(args)
    except UsageError as exc:
        print(f"btforge: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
