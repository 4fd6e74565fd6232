"""Operation-level microbenchmarks and their report format."""

from __future__ import annotations

import csv
import io
import statistics
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .ckks import (
    EncryptionParameters,
    add,
    add_ct_pt_scalar,
    add_ct_pt_vector,
    decode,
    decrypt,
    encode_scalar,
    encode_vector,
    encrypt,
    encrypt_values,
    keygen,
    mul_ct_ct,
    mul_ct_pt_general,
    mul_ct_pt_scalar,
    relinearize,
    rescale,
    square,
)

WARMUP = 10
MIN_TRIALS = 100
DOT_WIDTH = 4
FIELDS = ("op", "preset", "mean_ns", "std_ns", "trials", "memory_words")

# optimized op -> baseline op
PAIRS = {
    "encode": ("encode_scalar", "encode_general"),
    "add_plain": ("add_plain_scalar", "add_plain_vector"),
    "multiply_plain": ("multiply_plain_scalar", "multiply_plain_vector"),
    "rescale": ("dot_lazy_rescale", "dot_naive_rescale"),
}


@dataclass
class BenchRow:
    op: str
    preset: str
    mean_ns: float
    std_ns: float
    trials: int
    memory_words: int


@dataclass
class BenchReport:
    rows: list[BenchRow] = field(default_factory=list)

    def row(self, op: str) -> BenchRow:
        for r in self.rows:
            if r.op == op:
                return r
        raise KeyError(op)

    def speedups(self) -> dict[str, float]:
        ops = {r.op for r in self.rows}
        return {
            name: self.row(base).mean_ns / self.row(fast).mean_ns
            for name, (fast, base) in PAIRS.items()
            if fast in ops and base in ops
        }

    def memory_factor(self) -> float | None:
        try:
            return self.row("encode_general").memory_words / self.row("encode_scalar").memory_words
        except KeyError:
            return None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=FIELDS, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow(asdict(r))
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "BenchReport":
        reader = csv.DictReader(io.StringIO(text))
        if tuple(reader.fieldnames or ()) != FIELDS:
            raise ValueError(f"unexpected columns {reader.fieldnames}")
        rows = [
            BenchRow(
                op=d["op"],
                preset=d["preset"],
                mean_ns=float(d["mean_ns"]),
                std_ns=float(d["std_ns"]),
                trials=int(d["trials"]),
                memory_words=int(d["memory_words"]),
            )
            for d in reader
        ]
        return cls(rows)

    def to_table(self) -> str:
        head = f"{'op':<24}{'preset':>7}{'mean (us)':>14}{'std (us)':>12}{'trials':>8}{'words':>10}"
        lines = [head, "-" * len(head)]
        for r in self.rows:
            lines.append(
                f"{r.op:<24}{r.preset:>7}{r.mean_ns / 1e3:>14.2f}{r.std_ns / 1e3:>12.2f}{r.trials:>8}{r.memory_words:>10}"
            )
        sp = self.speedups()
        if sp:
            lines.append("")
            for name, v in sp.items():
                lines.append(f"speedup {name:<16}{v:>8.2f}x")
        mf = self.memory_factor()
        if mf is not None:
            lines.append(f"scalar encoding memory factor {mf:.0f}")
        return "\n".join(lines)


def time_op(fn, trials: int, warmup: int = WARMUP) -> tuple[float, float]:
    """Mean and standard deviation in nanoseconds of ``trials`` calls."""
    for _ in range(warmup):
        fn()
    samples = []
    clock = time.perf_counter_ns
    for _ in range(trials):
        t0 = clock()
        fn()
        samples.append(clock() - t0)
    return statistics.fmean(samples), statistics.pstdev(samples)


def default_ops(params: EncryptionParameters) -> list[str]:
    ops = [
        "encode_general",
        "encode_scalar",
        "encrypt",
        "decrypt",
        "decode",
        "add",
        "add_plain_vector",
        "add_plain_scalar",
        "multiply_plain_vector",
        "multiply_plain_scalar",
    ]
    if params.max_level >= 2:
        ops += ["square", "multiply", "rescale", "dot_naive_rescale", "dot_lazy_rescale"]
    if params.special is not None:
        ops.append("relinearize")
    return ops


def run_perf(params: EncryptionParameters, trials: int = 1000, seed: int = 0, ops=None) -> BenchReport:
    if trials < MIN_TRIALS:
        raise ValueError(f"at least {MIN_TRIALS} trials are needed, got {trials}")
    ops = default_ops(params) if ops is None else list(ops)
    rng = np.random.default_rng(seed)
    sk, rk = keygen(params, seed=seed)
    n, L = params.poly_degree, params.max_level
    value = float(rng.uniform(-1, 1))
    x = rng.uniform(-1, 1, params.slots)
    ct = encrypt_values(params, x, sk, seed=seed + 1)
    ct2 = encrypt_values(params, rng.uniform(-1, 1, params.slots), sk, seed=seed + 2)
    vec = encode_vector(params, np.full(params.slots, value))
    sc = encode_scalar(params, value)
    pt_x = encode_vector(params, x)
    dec = decrypt(ct, sk)
    sq = square(ct) if L >= 2 else None
    weights, cts = [], []
    if L >= 2:
        # weight scale equal to the dropped prime keeps the rescaled scale unchanged
        weights = [encode_scalar(params, float(w), scale=params.top_prime(L)) for w in rng.uniform(-1, 1, DOT_WIDTH)]
        cts = [encrypt_values(params, rng.uniform(-1, 1, params.slots), sk, seed=seed + 10 + i) for i in range(DOT_WIDTH)]

    def naive_dot():
        acc = None
        for c, w in zip(cts, weights):
            t = rescale(mul_ct_pt_scalar(c, w))
            acc = t if acc is None else add(acc, t)
        return acc

    def lazy_dot():
        acc = None
        for c, w in zip(cts, weights):
            t = mul_ct_pt_scalar(c, w)
            acc = t if acc is None else add(acc, t)
        return rescale(acc)

    ct_words = 2 * L * n
    bench = {
        "encode_general": (lambda: encode_vector(params, np.full(params.slots, value)), n * L),
        "encode_scalar": (lambda: encode_scalar(params, value), L),
        "encrypt": (lambda: encrypt(params, pt_x, sk, seed), ct_words),
        "decrypt": (lambda: decrypt(ct, sk), n * L),
        "decode": (lambda: decode(dec), n * L),
        "add": (lambda: add(ct, ct2), ct_words),
        "add_plain_vector": (lambda: add_ct_pt_vector(ct, vec), n * L),
        "add_plain_scalar": (lambda: add_ct_pt_scalar(ct, sc), L),
        "multiply_plain_vector": (lambda: mul_ct_pt_general(ct, vec), n * L),
        "multiply_plain_scalar": (lambda: mul_ct_pt_scalar(ct, sc), L),
        "square": (lambda: square(ct), 3 * L * n),
        "multiply": (lambda: mul_ct_ct(ct, ct2), 3 * L * n),
        "relinearize": (lambda: relinearize(sq, rk), int(rk.data.size) if rk is not None else 0),
        "rescale": (lambda: rescale(ct), ct_words),
        "dot_naive_rescale": (naive_dot, DOT_WIDTH * L),
        "dot_lazy_rescale": (lazy_dot, DOT_WIDTH * L),
    }
    report = BenchReport()
    for op in ops:
        if op not in bench:
            raise ValueError(f"unknown benchmark {op!r}")
        fn, words = bench[op]
        mean, std = time_op(fn, trials)
        report.rows.append(BenchRow(op, params.name, mean, std, trials, words))
    return report
