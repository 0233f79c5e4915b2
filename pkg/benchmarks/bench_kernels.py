"""Time the numba kernels against the numpy fallback.

Each path runs in its own interpreter because QDSPS_DISABLE_NUMBA is read at
import time.  The numba timing excludes compilation (one warm-up call first).

    python benchmarks/bench_kernels.py [--ntraj 500] [--preset short-dichromatic]
"""
import argparse
import json
import os
import subprocess
import sys
import textwrap

PROBE = textwrap.dedent(
    """
    import json, sys, time
    from qdsps import _accel
    from qdsps.master import GROUND, oracle_fom
    from qdsps.phonons import PhononParams
    from qdsps.presets import build_preset, get_preset
    from qdsps.propagation import emitter_channels
    from qdsps.pulses import QubitParams
    from qdsps.trajectories import run_ensemble

    preset, n = sys.argv[1], int(sys.argv[2])
    q = QubitParams()
    e = build_preset(get_preset(preset))
    ch = emitter_channels(e, q, PhononParams())
    tail = 12.0 / q.gamma
    run_ensemble(e, ch, 2, 0, tail)          # warm-up and map build
    oracle_fom(e, ch, q.gamma, tail)
    t0 = time.perf_counter()
    run_ensemble(e, ch, n, 1, tail)
    t1 = time.perf_counter()
    oracle_fom(e, ch, q.gamma, tail)
    t2 = time.perf_counter()
    print(json.dumps({"numba": _accel.HAS_NUMBA, "traj_s": t1 - t0, "oracle_s": t2 - t1}))
    """
)


def run(disable: bool, preset: str, n: int) -> dict:
    env = dict(os.environ, QDSPS_DISABLE_NUMBA="1" if disable else "0")
    out = subprocess.run([sys.executable, "-c", PROBE, preset, str(n)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="short-dichromatic")
    ap.add_argument("--ntraj", type=int, default=500)
    a = ap.parse_args()
    fast = run(False, a.preset, a.ntraj)
    slow = run(True, a.preset, a.ntraj)
    print(f"preset {a.preset}, {a.ntraj} trajectories")
    print(f"{'':12s}{'numba':>10s}{'numpy':>10s}{'speed-up':>10s}")
    for key, label in (("traj_s", "ensemble"), ("oracle_s", "oracle")):
        print(f"{label:12s}{fast[key]:10.2f}{slow[key]:10.2f}{slow[key] / fast[key]:10.1f}x")
    if not fast["numba"]:
        print("(numba not importable: both columns are the numpy path)")


if __name__ == "__main__":
    main()
