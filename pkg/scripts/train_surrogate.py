#!/usr/bin/env python3
"""Train the jet-control policy on the surrogate and print progress.

Example:
    python scripts/train_surrogate.py --envs 4 --episodes 150 --seed 1 --out runs/demo
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from afcrl import orchestrator as orch
from afcrl.coupling import IoStrategy
from afcrl.env import EnvConfig
from afcrl.ppo import PpoHyper


def main() -> int:
    parser = argparse.ArgumentParser(
        description=__doc__, formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    parser.add_argument("--envs", type=int, default=4)
    parser.add_argument("--episodes", type=int, default=150)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--out", default=None)
    args = parser.parse_args()

    plan = orch.ParallelPlan(n_envs=args.envs, mode=orch.REAL)
    cfg = EnvConfig()
    t0 = time.perf_counter()
    result = orch.run_training(plan, cfg, PpoHyper(), args.episodes,
                               IoStrategy(mode="disabled"), args.seed,
                               out_dir=args.out)
    for rep in result.history:
        if rep.episode_index % 10 == 0 or rep.episode_index == args.episodes - 1:
            print(f"episode {rep.episode_index:4d}  reward {rep.mean_reward:+.4f}  "
                  f"mean_cd {rep.mean_cd:.4f}")
    tail = result.history[-20:]
    cd = sum(r.mean_cd for r in tail) / len(tail)
    print(f"\nlast-20 mean drag: {cd:.4f}  "
          f"({100 * (cfg.cd_ref - cd) / cfg.cd_ref:.1f}% below reference "
          f"{cfg.cd_ref}) in {time.perf_counter() - t0:.0f}s")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
