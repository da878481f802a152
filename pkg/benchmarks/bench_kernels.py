"""Time each hot kernel in its numba and numpy flavours.

    python3 benchmarks/bench_kernels.py [--repeat N]

Numba timings exclude the first (compiling) call. Results agree across
flavours or the script exits nonzero.
"""

import argparse
import sys
import timeit

import numpy as np

from trisieve import kernels, rpc
from trisieve.rng import stream
from trisieve.sieve import choose_theta
from trisieve.sphere import epsilon_for, sample_unit_vectors


def cases():
    g = stream(0, "bench")
    d = 24
    pts = sample_unit_vectors(200_000, d, g)
    x, y = sample_unit_vectors(2, d, g)
    yield "band_hits d=24 n=2e5", kernels._band_hits_nb, kernels._band_hits_np, (pts, x, 0.3, 0.4)
    yield ("wedge_hits d=24 n=2e5", kernels._wedge_hits_nb, kernels._wedge_hits_np,
           (pts, x, y, 0.3, 0.4, 0.3, 0.4))

    code = rpc.sample_rpc(24, 4, 16**4, 1, g)
    probes = sample_unit_vectors(200, 24, g)

    def decode(search):
        return lambda: [rpc.decode_ids(code, p, 0.35, 0.05, search=search).size for p in probes]

    yield "decode d=24 b=4 M=65536 x200", decode(kernels._decode_nb), decode(kernels._decode_np), None

    d = 14
    eps = epsilon_for(d)
    ct, ctp = choose_theta(eps)
    lst = sample_unit_vectors(400, d, g)
    yield ("tsol d=14 m=400", kernels._tsol_nb, kernels._tsol_np,
           (lst, ct - eps, ct + eps, ctp - eps, ctp + eps, True, 1))


def _result(fn, args):
    out = fn() if args is None else fn(*args)
    return out[1] if isinstance(out, tuple) else out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    print(f"{'kernel':32} {'numba s':>10} {'numpy s':>10} {'speedup':>8}")
    mismatch = False
    for name, nb, np_, call_args in cases():
        same = _result(nb, call_args) == _result(np_, call_args)  # also warms the jit
        mismatch |= not same
        t_nb = min(timeit.repeat(lambda: _result(nb, call_args), number=1, repeat=args.repeat))
        t_np = min(timeit.repeat(lambda: _result(np_, call_args), number=1, repeat=args.repeat))
        print(f"{name:32} {t_nb:10.4f} {t_np:10.4f} {t_np / t_nb:8.1f}x{'' if same else '  MISMATCH'}")
    return 1 if mismatch else 0


if __name__ == "__main__":
    sys.exit(main())
