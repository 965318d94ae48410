"""Run every shipped sweep config and the lower-bound experiment; write CSV and JSON summaries."""

import argparse
import json
import time
from pathlib import Path

from offline_plugin.experiments import horizon_sweep, load_config, lower_bound_experiment, run_sweep

ROOT = Path(__file__).resolve().parents[1]
SWEEPS = ("thm41", "horizon", "horizon_random", "opo", "linear")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default=str(ROOT / "results"))
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--only", nargs="*", default=None, help="subset of config stems to run")
    args = ap.parse_args()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    for stem in args.only or SWEEPS + ("lower_bound",):
        cfg = load_config(ROOT / "configs" / f"{stem}.cfg")
        t0 = time.perf_counter()
        if stem == "lower_bound":
            rep = lower_bound_experiment(cfg.H[0], cfg.K, cfg.replications, seed=cfg.seed, c1=cfg.instance.c1,
                                         threads=args.threads)
            (out / "lower_bound.json").write_text(json.dumps(rep.summary(), indent=2) + "\n")
            line = f"slope {rep.fit.slope:.3f}" if rep.fit else "no fit"
        else:
            if cfg.budget == "fixed_Kdm":
                res, _ = horizon_sweep(cfg, threads=args.threads)
            else:
                res = run_sweep(cfg, threads=args.threads)
            (out / f"{stem}.csv").write_text(res.csv_text())
            (out / f"{stem}.summary.json").write_text(res.summary_json())
            parts = []
            if res.fit:
                parts.append(f"slope {res.fit.slope:.3f} +- {res.fit.stderr:.3f}")
            if res.flatness is not None:
                parts.append(f"flatness {res.flatness:.3f}")
            parts.append("medians " + ", ".join(f"{c.median:.4g}" for c in res.cells))
            line = "; ".join(parts)
        print(f"{stem}: {line} [{time.perf_counter() - t0:.1f} s]")


if __name__ == "__main__":
    main()
