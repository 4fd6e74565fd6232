"""Command-line entry points.

Exit codes: 0 ok, 2 usage, 3 validation, 4 transport, 5 tolerance exceeded.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bench import run_perf
from .ckks import (
    PRESET_NAMES,
    EvaluationError,
    KeyMaterialError,
    ParameterError,
    SerializationError,
    deserialize_relin_key,
    deserialize_secret_key,
    keygen,
    preset,
    serialize_relin_key,
    serialize_secret_key,
)
from .graph import (
    ExecutionError,
    ModelError,
    NonlinearityError,
    cryptonets,
    cryptonets_mini,
    cryptonets_relu,
    decrypt_tensor,
    encrypt_tensor,
    execute,
    forward,
    identity_model,
    load_model_files,
    plan_rescaling,
    relu_mlp,
    save_model_files,
    synthetic_digits,
    LocalNonlinearity,
)
from .protocol import (
    InferenceClient,
    InferenceServer,
    ProtocolError,
    RemoteError,
    TransportError,
    local_infer,
    measure_session,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_TRANSPORT = 4
EXIT_TOLERANCE = 5

SECRET_FILE = "secret.key"
RELIN_FILE = "relin.key"
META_FILE = "keys.json"

# remote error codes that reflect a bad request rather than a broken link
_VALIDATION_CODES = {"version", "preset", "model", "packing", "batch", "relin", "shape", "validation"}

ZOO = {
    "cryptonets": lambda seed: cryptonets(seed),
    "cryptonets-relu": lambda seed: cryptonets_relu(seed),
    "cryptonets-mini": lambda seed: cryptonets_mini(seed),
    "cryptonets-mini-relu": lambda seed: cryptonets_mini(seed, "relu"),
    "relu-mlp": lambda seed: relu_mlp(seed),
    "identity": lambda seed: identity_model(),
}

log = logging.getLogger("heinfer")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _preset_arg(name: str):
    try:
        return preset(name)
    except ParameterError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _positive(kind):
    def parse(raw):
        v = kind(raw)
        if v <= 0:
            raise argparse.ArgumentTypeError(f"{raw} must be positive")
        return v

    return parse


# ---------------------------------------------------------------- files


def _blob_path(manifest: Path) -> Path:
    return manifest.with_suffix(".bin")


def load_keys(key_dir: Path, params):
    meta_path = key_dir / META_FILE
    if not meta_path.exists():
        raise CliError(f"no keys in {key_dir}; run `heinfer keygen` first", EXIT_USAGE)
    meta = json.loads(meta_path.read_text())
    if meta["preset"] != params.name:
        raise CliError(f"keys in {key_dir} are for {meta['preset']}, not {params.name}", EXIT_VALIDATION)
    sk = deserialize_secret_key((key_dir / SECRET_FILE).read_bytes(), params)
    rk = None
    if (key_dir / RELIN_FILE).exists():
        rk = deserialize_relin_key((key_dir / RELIN_FILE).read_bytes(), params)
    return sk, rk


def save_input(path: Path, batch: np.ndarray, labels=None) -> None:
    arr = np.ascontiguousarray(batch, dtype="<f4")
    manifest = {"shape": list(arr.shape), "dtype": "float32"}
    if labels is not None:
        manifest["labels"] = [int(v) for v in labels]
    path.write_text(json.dumps(manifest, indent=1))
    _blob_path(path).write_bytes(arr.tobytes())


def load_input(path: Path) -> np.ndarray:
    if not path.exists():
        raise CliError(f"input {path} not found", EXIT_USAGE)
    manifest = json.loads(path.read_text())
    shape = tuple(int(v) for v in manifest["shape"])
    blob = _blob_path(path).read_bytes()
    if len(blob) != 4 * int(np.prod(shape)):
        raise CliError(f"{_blob_path(path)} holds {len(blob)} bytes, shape {list(shape)} needs {4 * int(np.prod(shape))}", EXIT_VALIDATION)
    return np.frombuffer(blob, dtype="<f4").reshape(shape).astype(np.float64)


def load_model(path: Path):
    if not path.exists():
        raise CliError(f"model {path} not found", EXIT_USAGE)
    return load_model_files(path, _blob_path(path))


# ---------------------------------------------------------------- commands


def cmd_keygen(args) -> int:
    out = Path(args.out_dir)
    params = args.preset
    targets = [out / SECRET_FILE, out / RELIN_FILE, out / META_FILE]
    existing = [p for p in targets if p.exists()]
    if existing and not args.force:
        raise CliError(f"{existing[0]} exists; pass --force to overwrite", EXIT_VALIDATION)
    out.mkdir(parents=True, exist_ok=True)
    for p in existing:
        p.unlink()
    sk, rk = keygen(params, seed=args.seed)
    (out / SECRET_FILE).write_bytes(serialize_secret_key(sk))
    if rk is not None:
        (out / RELIN_FILE).write_bytes(serialize_relin_key(rk))
    meta = {"preset": params.name, "seed": args.seed, "relin": rk is not None}
    (out / META_FILE).write_text(json.dumps(meta, indent=1))
    print(f"wrote {params.name} keys to {out} (relinearization key: {'yes' if rk is not None else 'no'})")
    return EXIT_OK


def cmd_perf(args) -> int:
    ops = args.ops.split(",") if args.ops else None
    report = run_perf(args.preset, trials=args.trials, seed=args.seed or 0, ops=ops)
    print(report.to_csv() if args.out == "csv" else report.to_table(), end="" if args.out == "csv" else "\n")
    return EXIT_OK


def cmd_make_model(args) -> int:
    model = ZOO[args.name](args.seed or 0)
    model.packing = args.packing
    model.check_packing(args.packing)
    path = Path(args.path)
    save_model_files(model, path, _blob_path(path))
    print(f"wrote {model.name} to {path} and {_blob_path(path)}")
    return EXIT_OK


def cmd_make_input(args) -> int:
    path = Path(args.path)
    if args.shape:
        shape = tuple(int(v) for v in args.shape.split(","))
        batch = np.random.default_rng(args.seed).uniform(-1, 1, (args.count,) + shape)
        save_input(path, batch)
    else:
        batch, labels = synthetic_digits(args.count, seed=args.seed or 0, size=args.size)
        save_input(path, batch, labels)
    print(f"wrote {args.count} samples to {path}")
    return EXIT_OK


def _print_outputs(outputs: np.ndarray, fmt: str) -> None:
    flat = outputs.reshape(outputs.shape[0], -1)
    if fmt == "csv":
        print("sample,argmax," + ",".join(f"y{i}" for i in range(flat.shape[1])))
        for s, row in enumerate(flat):
            print(f"{s},{int(np.argmax(row))}," + ",".join(f"{v:.8g}" for v in row))
        return
    for s, row in enumerate(flat[:16]):
        print(f"sample {s:>5}  argmax {int(np.argmax(row)):>3}  " + " ".join(f"{v:+.4f}" for v in row[:10]))
    if flat.shape[0] > 16:
        print(f"... {flat.shape[0] - 16} more samples")


def cmd_run(args) -> int:
    params = args.preset
    model = load_model(Path(args.model))
    model.check_packing(args.packing)
    if args.mode == "server":
        server = InferenceServer(model, params, threads=args.threads, mode=args.rescale)
        host, port = server.bind(args.host, args.port)
        print(f"serving {model.name} on {host}:{port} ({params.name})", flush=True)
        try:
            server.serve_forever(max_sessions=args.sessions)
        except KeyboardInterrupt:
            server.stop()
        return EXIT_OK
    batch = load_input(Path(args.input))
    sk, rk = load_keys(Path(args.keys), params)
    t0 = time.perf_counter()
    if args.mode == "local":
        outputs, _ = local_infer(model, params, sk, batch, rk, args.seed, args.packing, args.threads, args.rescale)
        report = None
    else:
        client = InferenceClient.connect(args.host, args.port, params, sk, rk, args.seed)
        try:
            client.handshake(model.name, args.packing, batch.shape[0])
            outputs = client.infer(batch)
        finally:
            client.close()
        report = measure_session(client)
    total = time.perf_counter() - t0
    _print_outputs(outputs, args.out)
    if args.out == "csv":
        return EXIT_OK
    print(f"total {total:.3f} s, amortized {1e3 * total / batch.shape[0]:.3f} ms/sample over {batch.shape[0]} samples")
    if report is not None:
        print(
            f"sent {report.bytes_sent} B, received {report.bytes_received} B, "
            f"interactive {report.interactive_bytes} B ({report.interactive_mb_per_image:.4f} MB/image)"
        )
        for layer, lat in report.layer_latency.items():
            print(f"  {layer:<8} " + "  ".join(f"{k} {v:.3f}" for k, v in lat.items()))
    return EXIT_OK


def corrupt_tensor(x, seed=0):
    """Scramble one limb of the first ciphertext; used to test the deviation check."""
    rng = np.random.default_rng(seed)
    data = x.data.copy()
    data[0, 0, 0] = rng.integers(0, x.moduli[0], data.shape[-1], dtype=np.uint64)
    return x.replace(data=data)


def compare(model, params, sk, rk, batch, seed=None, packing="real", threads=1, mode="lazy", corrupt=False):
    """Per-output max |encrypted - cleartext| over the batch."""
    x = encrypt_tensor(params, batch, sk, seed, packing)
    if corrupt:
        x = corrupt_tensor(x)
    plan = plan_rescaling(model, params, mode)
    result = execute(model, x, plan, params, LocalNonlinearity(params, sk, seed), rk, threads)
    enc = decrypt_tensor(result.output, sk, batch.shape[0])
    clear = forward(model, batch)
    return np.abs(enc - clear).reshape(batch.shape[0], -1).max(axis=0)


def cmd_compare(args) -> int:
    params = args.preset
    model = load_model(Path(args.model))
    model.check_packing(args.packing)
    batch = load_input(Path(args.input))
    sk, rk = load_keys(Path(args.keys), params)
    dev = compare(model, params, sk, rk, batch, args.seed, args.packing, args.threads, args.rescale, args.corrupt)
    if args.out == "csv":
        print("output,max_abs_deviation")
        for i, d in enumerate(dev):
            print(f"{i},{d:.6e}")
    else:
        for i, d in enumerate(dev):
            flag = "  EXCEEDS" if d > args.tolerance else ""
            print(f"output {i:>4}  max |enc - clear| = {d:.3e}{flag}")
        print(f"worst {dev.max():.3e} against tolerance {args.tolerance:g}")
    return EXIT_TOLERANCE if dev.max() > args.tolerance or not np.isfinite(dev).all() else EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--preset", type=_preset_arg, default="P13", help=f"one of {', '.join(PRESET_NAMES)}")
    common.add_argument("--seed", type=int, default=None, help="seed for all sampled randomness")
    common.add_argument("--out", choices=("table", "csv"), default="table")
    common.add_argument("-v", "--verbose", action="store_true")

    model_io = argparse.ArgumentParser(add_help=False)
    model_io.add_argument("--model", required=True, help="model manifest (.json, weights beside it as .bin)")
    model_io.add_argument("--input", help="input manifest (.json, data beside it as .bin)")
    model_io.add_argument("--keys", default="keys", help="directory written by keygen")
    model_io.add_argument("--packing", choices=("real", "complex"), default="real")
    model_io.add_argument("--threads", type=_positive(int), default=1)
    model_io.add_argument("--rescale", choices=("lazy", "naive"), default="lazy")

    p = argparse.ArgumentParser(prog="heinfer", description="Batch-packed CKKS inference.")
    p.add_argument("--version", action="version", version=f"heinfer {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    k = sub.add_parser("keygen", parents=[common], help="generate secret and relinearization keys")
    k.add_argument("--out-dir", default="keys")
    k.add_argument("--force", action="store_true", help="overwrite existing key files")
    k.set_defaults(func=cmd_keygen)

    b = sub.add_parser("perf", parents=[common], help="operation microbenchmarks")
    b.add_argument("--trials", type=_positive(int), default=1000)
    b.add_argument("--ops", help="comma-separated subset of benchmark names")
    b.set_defaults(func=cmd_perf)

    r = sub.add_parser("run", parents=[common, model_io], help="encrypted inference")
    r.add_argument("--mode", choices=("local", "server", "client"), default="local")
    r.add_argument("--host", default="127.0.0.1")
    r.add_argument("--port", type=int, default=7411)
    r.add_argument("--sessions", type=_positive(int), default=None, help="server: exit after this many sessions")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", parents=[common, model_io], help="encrypted vs cleartext deviation")
    c.add_argument("--tolerance", type=float, default=1e-2)
    c.add_argument("--corrupt", action="store_true", help="scramble one input ciphertext first")
    c.set_defaults(func=cmd_compare)

    m = sub.add_parser("make-model", parents=[common], help="write a reference network with seeded weights")
    m.add_argument("name", choices=sorted(ZOO))
    m.add_argument("--packing", choices=("real", "complex"), default="real")
    m.add_argument("--path", default="model.json", help="manifest to write (.bin beside it)")
    m.set_defaults(func=cmd_make_model)

    i = sub.add_parser("make-input", parents=[common], help="write synthetic digits or uniform samples")
    i.add_argument("--count", type=_positive(int), default=16)
    i.add_argument("--size", type=_positive(int), default=28)
    i.add_argument("--shape", help="comma-separated sample shape; uniform values instead of digits")
    i.add_argument("--path", default="input.json", help="manifest to write (.bin beside it)")
    i.set_defaults(func=cmd_make_input)
    return p


def _needs(args, *names):
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        raise CliError(f"--{missing[0]} is required here", EXIT_USAGE)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command in ("run", "compare") and getattr(args, "mode", "local") != "server":
            _needs(args, "input")
        return args.func(args)
    except CliError as exc:
        print(f"heinfer: {exc}", file=sys.stderr)
        return exc.code
    except RemoteError as exc:
        print(f"heinfer: server refused: {exc} [{exc.code}]", file=sys.stderr)
        return EXIT_VALIDATION if exc.code in _VALIDATION_CODES else EXIT_TRANSPORT
    except (TransportError, ProtocolError) as exc:
        print(f"heinfer: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except (
        ModelError,
        ParameterError,
        KeyMaterialError,
        SerializationError,
        EvaluationError,
        ExecutionError,
        NonlinearityError,
        ValueError,
    ) as exc:
        print(f"heinfer: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
