"""Metric table for every mutation kind across a range of rates.

    python scripts/mutation_sweep.py --n 100 --seed 8 --out results/mutations.csv
"""

import argparse
from pathlib import Path

from btforge.harness import MUTATION_KINDS, evaluate, mutate_corpus
from btforge.metrics import report_csv, report_table
from btforge.oracle import build_dataset


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=100)
    ap.add_argument("--seed", type=int, default=8)
    ap.add_argument("--rates", type=float, nargs="+", default=[0.1, 0.3, 0.5, 1.0])
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()

    ds = build_dataset(args.n, args.seed)
    reports = [evaluate(ds, "self", label="self", jobs=args.jobs).report]
    for kind in MUTATION_KINDS:
        for rate in args.rates:
            recs = mutate_corpus(ds, kind, rate, args.seed)
            cands = {str(r["id"]): r["bt"] for r in recs}
            # offset findings are only violations in strict mode
            strict = kind == "remove-offset"
            reports.append(evaluate(ds, cands, strict_offset=strict, label=f"{kind}@{rate:g}",
                                    jobs=args.jobs).report)
    print(report_table(reports), end="")
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(report_csv(reports))


if __name__ == "__main__":
    main()
