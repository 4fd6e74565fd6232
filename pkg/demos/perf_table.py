#!/usr/bin/env python3
"""Microbenchmark table for one or more presets (default: P12 P13)."""

import sys

from heinfer.bench import run_perf
from heinfer.ckks import preset

names = sys.argv[1:] or ["P12", "P13"]
for name in names:
    report = run_perf(preset(name), trials=200)
    print(f"\n{name}")
    print(report.to_table())
