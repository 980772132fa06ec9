#!/usr/bin/env python3
"""Synthetic benchmark: segmentation scores plus level-1/level-2 accuracy means.

    python3 scripts/run_synthetic_benchmark.py --work /tmp/bench --seeds 7 8 9 10 11
"""
import argparse
import json
import tempfile
import time

from pcgkit import benchmark
from pcgkit.config import load_config
from pcgkit.evaluation import format_seg_table
from pcgkit.features import Layout


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawTextHelpFormatter)
    ap.add_argument("--work", help="working directory (default: a temporary one)")
    ap.add_argument("--config")
    ap.add_argument("--seeds", type=int, nargs="+", default=list(benchmark.SEEDS))
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--json", help="also write the numbers here")
    args = ap.parse_args()

    cfg = load_config(args.config)
    work = args.work or tempfile.mkdtemp(prefix="pcgkit-bench-")
    t0 = time.perf_counter()
    b = benchmark.build(work, cfg, args.jobs)
    print(f"corpus: {b.corpus_dir} ({len(b.recordings)} recordings, {len(b.table)} cycles)")
    print(format_seg_table(b.seg_scores))

    out = {"segmentation": {k: v.to_dict() for k, v in b.seg_scores.items()}, "accuracy": {}}
    for level in (1, 2):
        for lay in (Layout.TD40, Layout.FULL100):
            acc = benchmark.mean_accuracies(b.table, level, lay, args.seeds, cfg=cfg, jobs=args.jobs)
            out["accuracy"][f"L{level}_{lay.value}"] = acc
            print(f"level {level} {lay.value:<8}" + "".join(f"{k:>13} {v:6.2f}" for k, v in acc.items()))
    print(f"\n{len(args.seeds)} seed(s), {time.perf_counter() - t0:.1f} s")
    if args.json:
        with open(args.json, "w") as f:
            json.dump(out, f, indent=1, sort_keys=True)


if __name__ == "__main__":
    main()
