"""Displacement, stale-metadata and forced-release runs on pick-and-place samples.

    python scripts/perturbation_study.py --n 100 --seed 5 --out results/perturb.json
"""

import argparse
import json
from pathlib import Path

from btforge.sim import SimParams
from btforge.studies import displacement_study, pick_place_samples, release_study


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=100)
    ap.add_argument("--seed", type=int, default=5)
    ap.add_argument("--distance", type=float, default=0.05)
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()

    samples = pick_place_samples(args.n, args.seed)
    results = {
        "displace": displacement_study(samples, args.distance).to_json(),
        "displace_stale": displacement_study(samples, args.distance,
                                             SimParams(update_metadata=False)).to_json(),
        "force_release": release_study(samples).to_json(),
    }
    for name, r in results.items():
        print(f"{name:15s} success {r['success_rate']:6.1f}%  ticks {r['mean_ticks']:7.2f}"
              f"  (baseline {r['baseline_mean_ticks']:.2f})")
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(json.dumps(results, indent=2) + "\n")


if __name__ == "__main__":
    main()
