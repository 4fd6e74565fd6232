#!/usr/bin/env python3
"""Lazy vs naive rescaling on CryptoNets under P13.

Runs the same encrypted batch through both plans and prints wall time,
rescale counts and error against the cleartext forward pass.  The full-size
network takes several minutes in naive mode; pass --mini for a quick run.
"""

import argparse
import time

import numpy as np

from heinfer.ckks import keygen, preset
from heinfer.graph import (
    cryptonets,
    cryptonets_mini,
    decrypt_tensor,
    encrypt_tensor,
    execute,
    forward,
    plan_rescaling,
    synthetic_digits,
)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=64)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--mini", action="store_true", help="8x8 input network instead of 28x28")
    args = ap.parse_args()

    params = preset("P13")
    sk, rk = keygen(params, seed=1)
    model = cryptonets_mini() if args.mini else cryptonets()
    size = 8 if args.mini else 28
    batch, _ = synthetic_digits(args.batch, seed=2, size=size)
    x = encrypt_tensor(params, batch, sk, 3)
    clear = forward(model, batch)

    # first call compiles the kernels; keep it out of the timings
    execute(cryptonets_mini(), encrypt_tensor(params, batch[:1, :, :8, :8], sk, 4),
            plan_rescaling(cryptonets_mini(), params), params, relin_key=rk)

    times = {}
    print(f"{model.name} on {params.name}, batch {args.batch}, {args.threads} thread(s)")
    for mode in ("lazy", "naive"):
        plan = plan_rescaling(model, params, mode)
        t0 = time.perf_counter()
        res = execute(model, x, plan, params, relin_key=rk, threads=args.threads)
        times[mode] = time.perf_counter() - t0
        err = np.abs(decrypt_tensor(res.output, sk, args.batch) - clear).max()
        print(f"  {mode:<6} {times[mode]:8.2f} s  rescales {res.total_rescales:>7}  max error {err:.2e}")
        for node, n in res.rescales.items():
            if n:
                print(f"           {node:<6} {n:>7} rescales")
    print(f"  speedup {times['naive'] / times['lazy']:.2f}x")


if __name__ == "__main__":
    main()
