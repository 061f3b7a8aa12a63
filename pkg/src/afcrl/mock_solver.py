"""Stand-in external solver for exercising the file-coupling adapter.

Behaves like one solver instance covering a single actuation period: it
reads the input bundle and action file from ``in/``, advances the
oscillator by one actuation period at the commanded jet velocity, and
leaves the resulting bundle in ``out/``. Oscillator state persists in
``state.txt`` between invocations, mirroring a solver restarting from
its last field dump.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import coupling, env


def _load_state(path: Path, config: env.EnvConfig) -> env.SurrogateState:
    if path.is_file():
        x, y, v_jet, steps = path.read_text().split()
        return env.SurrogateState(
            x=float(x), y=float(y), v_jet=float(v_jet), t=int(steps) * config.dt,
            actuation_index=int(steps) // config.steps_per_actuation,
            steps=int(steps), rng=None,
        )
    r = config.limit_cycle_radius
    return env.SurrogateState(x=r, y=0.0, v_jet=0.0, t=0.0, actuation_index=0,
                              steps=0, rng=None)


def _save_state(path: Path, state: env.SurrogateState) -> None:
    path.write_text(f"{state.x!r} {state.y!r} {state.v_jet!r} {state.steps}\n")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--io", choices=[coupling.BASELINE, coupling.OPTIMIZED],
                        default=coupling.OPTIMIZED)
    parser.add_argument("--payload-baseline", type=int, default=5_242_880)
    parser.add_argument("--payload-optimized", type=int, default=1_258_291)
    parser.add_argument("--workdir", default=".")
    parser.add_argument("--sleep", type=float, default=0.0,
                        help="stall before doing anything (timeout testing)")
    parser.add_argument("--fail", action="store_true", help="exit with an error")
    args = parser.parse_args(argv)

    if args.sleep > 0:
        time.sleep(args.sleep)
    if args.fail:
        print("mock solver instructed to fail", file=sys.stderr)
        return 1

    workdir = Path(args.workdir)
    strategy = coupling.IoStrategy(
        mode=args.io,
        baseline_payload_bytes=args.payload_baseline,
        optimized_payload_bytes=args.payload_optimized,
    )
    config = env.EnvConfig()
    bundle_in = coupling.read_bundle(workdir / "in", strategy)
    v_jet = coupling.read_action(workdir / "in", strategy)

    state = _load_state(workdir / "state.txt", config)
    state.v_jet = v_jet
    x, y = state.x, state.y
    steps = state.steps
    rows = np.empty((config.steps_per_actuation, 3))
    for i in range(config.steps_per_actuation):
        x, y = env._rk4_xy(x, y, v_jet, config)
        steps += 1
        r2 = x * x + y * y
        rows[i, 0] = steps * config.dt
        rows[i, 1] = config.cd_base + config.kappa * r2
        rows[i, 2] = config.c_l * x
    new_state = env.SurrogateState(
        x=x, y=y, v_jet=v_jet, t=steps * config.dt,
        actuation_index=state.actuation_index + 1, steps=steps, rng=None,
    )
    _save_state(workdir / "state.txt", new_state)

    bundle_out = coupling.ActuationBundle(
        episode_index=bundle_in.episode_index,
        actuation_index=bundle_in.actuation_index,
        probes=env.observe(new_state, config),
        rows=rows,
        jet_velocity=v_jet,
    )
    coupling.write_bundle(workdir / "out", bundle_out, strategy)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
