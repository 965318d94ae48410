"""Regenerate the instances shipped for `offline-plugin verify` and the golden sweep CSV."""

import argparse
import json
from pathlib import Path

from offline_plugin.experiments import load_config, run_sweep
from offline_plugin.hard_instances import (
    bounded_reward_random_instance,
    hard_pair,
    lower_bound_c0,
    opo_hard_instance,
    ope_hard_instance,
    reference_instance,
)
from offline_plugin.linear import generate_linear_instance

ROOT = Path(__file__).resolve().parents[1]


def instances() -> dict:
    H, n = 8, 1000
    p1, p2 = hard_pair(H, n)
    c0 = lower_bound_c0(1.0, H)
    return {
        "reference_uniform": reference_instance().to_json(),
        "terminal_reward": bounded_reward_random_instance(4, 2, 4, seed=3, style="terminal").to_json(),
        "ope_two_state": ope_hard_instance(4, 0.75).to_json(),
        "opo_four_state_p1": opo_hard_instance(H, p1, c0, n).to_json(),
        "opo_four_state_p2": opo_hard_instance(H, p2, c0, n).to_json(),
        "linear_d2": generate_linear_instance(2, 2, 3, 2, seed=11).to_json(),
        "linear_d4": generate_linear_instance(8, 2, 4, 4, seed=11).to_json(),
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--skip-sweep", action="store_true")
    args = ap.parse_args()
    out = ROOT / "src" / "offline_plugin" / "golden"
    out.mkdir(parents=True, exist_ok=True)
    for name, obj in instances().items():
        (out / f"{name}.json").write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")
        print("wrote", out / f"{name}.json")
    if not args.skip_sweep:
        res = run_sweep(load_config(ROOT / "configs" / "thm41.cfg"))
        dest = ROOT / "tests" / "golden" / "thm41.csv"
        dest.write_text(res.csv_text())
        print("wrote", dest)


if __name__ == "__main__":
    main()
