#!/usr/bin/env python3
"""Recompute ASR and AvgSim of a batch directory from its per-pair records.

Reads <batch>/records/*.json only, so it is independent of the metrics the
batch itself wrote into report.json.
"""

import argparse
import json
import pathlib
import sys

THRESHOLD = 0.5


def recompute(batch_dir):
    sims = []
    for path in sorted(pathlib.Path(batch_dir, "records").glob("*.json")):
        rec = json.loads(path.read_text())
        ev = rec.get("evaluation")
        if rec.get("ok") and ev is not None:
            sims.append((ev["sim_adv_target"], ev["sim_adv_source"]))
    if not sims:
        return {}
    n = len(sims)
    return {
        "targeted": {
            "asr": sum(t > THRESHOLD for t, _ in sims) / n,
            "avg_sim": sum(t for t, _ in sims) / n,
            "n_pairs": n,
        },
        "untargeted": {
            "asr": sum(s < THRESHOLD for _, s in sims) / n,
            "avg_sim": sum(s for _, s in sims) / n,
            "n_pairs": n,
        },
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("batch_dir")
    args = parser.parse_args(argv)
    json.dump(recompute(args.batch_dir), sys.stdout, indent=2)
    print()


if __name__ == "__main__":
    main()
