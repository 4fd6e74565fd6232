import csv
import io
import json
import socket
import threading
import time

import numpy as np
import pytest

from heinfer.cli import (
    EXIT_OK,
    EXIT_TOLERANCE,
    EXIT_TRANSPORT,
    EXIT_USAGE,
    EXIT_VALIDATION,
    load_input,
    main,
    save_input,
)


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["keygen", "--preset", "P11", "--seed", "3", "--out-dir", str(d / "k11")]) == 0
    assert main(["keygen", "--preset", "P13", "--seed", "3", "--out-dir", str(d / "k13")]) == 0
    assert main(["make-model", "relu-mlp", "--path", str(d / "mlp.json")]) == 0
    assert main(["make-model", "identity", "--path", str(d / "id.json")]) == 0
    assert main(["make-input", "--count", "5", "--shape", "6", "--seed", "1", "--path", str(d / "x6.json")]) == 0
    assert main(["make-input", "--count", "5", "--shape", "4", "--seed", "1", "--path", str(d / "x4.json")]) == 0
    return d


def test_keygen_files(workdir):
    k = workdir / "k11"
    assert (k / "secret.key").exists()
    assert not (k / "relin.key").exists()
    assert json.loads((k / "keys.json").read_text()) == {"preset": "P11", "seed": 3, "relin": False}


def test_keygen_deterministic(tmp_path, capsys):
    for d in ("a", "b"):
        assert run(capsys, "keygen", "--preset", "P12", "--seed", 11, "--out-dir", tmp_path / d)[0] == EXIT_OK
    for f in ("secret.key", "relin.key"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_keygen_refuses_overwrite(tmp_path, capsys):
    assert run(capsys, "keygen", "--preset", "P11", "--out-dir", tmp_path)[0] == EXIT_OK
    code, _, err = run(capsys, "keygen", "--preset", "P11", "--out-dir", tmp_path)
    assert code == EXIT_VALIDATION and "--force" in err
    assert run(capsys, "keygen", "--preset", "P11", "--out-dir", tmp_path, "--force")[0] == EXIT_OK


def test_bad_preset_is_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        main(["keygen", "--preset", "P10"])
    assert info.value.code == EXIT_USAGE


def test_input_round_trip(tmp_path):
    x = np.random.default_rng(0).uniform(-1, 1, (3, 2, 2)).astype(np.float32)
    save_input(tmp_path / "in.json", x, np.array([1, 2, 3]))
    assert np.array_equal(load_input(tmp_path / "in.json"), x)


def test_perf_csv(capsys):
    code, out, _ = run(
        capsys, "perf", "--preset", "P11", "--trials", 100, "--ops", "encode_general,encode_scalar", "--out", "csv"
    )
    assert code == EXIT_OK
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [r["op"] for r in rows] == ["encode_general", "encode_scalar"]
    assert int(rows[0]["memory_words"]) // int(rows[1]["memory_words"]) == 2048


def test_run_local_deterministic(workdir, capsys):
    args = ["run", "--preset", "P11", "--model", workdir / "mlp.json", "--input", workdir / "x6.json"]
    args += ["--keys", workdir / "k11", "--seed", 4, "--out", "csv"]
    first = run(capsys, *args)
    second = run(capsys, *args)
    assert first[0] == EXIT_OK and first[1] == second[1]
    rows = list(csv.DictReader(io.StringIO(first[1])))
    assert len(rows) == 5 and set(rows[0]) == {"sample", "argmax", "y0", "y1", "y2"}


def test_run_table_reports_timing(workdir, capsys):
    code, out, _ = run(
        capsys, "run", "--preset", "P11", "--model", workdir / "mlp.json", "--input", workdir / "x6.json",
        "--keys", workdir / "k11",
    )
    assert code == EXIT_OK and "amortized" in out


def test_run_needs_input(workdir, capsys):
    code, _, err = run(capsys, "run", "--preset", "P11", "--model", workdir / "mlp.json", "--keys", workdir / "k11")
    assert code == EXIT_USAGE and "--input" in err


def test_compare_identity(workdir, capsys):
    code, out, _ = run(
        capsys, "compare", "--preset", "P13", "--model", workdir / "id.json", "--input", workdir / "x4.json",
        "--keys", workdir / "k13", "--seed", 1, "--out", "csv",
    )
    assert code == EXIT_OK
    dev = [float(r["max_abs_deviation"]) for r in csv.DictReader(io.StringIO(out))]
    assert len(dev) == 4 and max(dev) < 1e-6


def test_compare_flags_corruption(workdir, capsys):
    code, out, _ = run(
        capsys, "compare", "--preset", "P11", "--model", workdir / "id.json", "--input", workdir / "x4.json",
        "--keys", workdir / "k11", "--corrupt",
    )
    assert code == EXIT_TOLERANCE and "EXCEEDS" in out


def test_complex_square_model_rejected(tmp_path, capsys):
    code, _, err = run(capsys, "make-model", "cryptonets-mini", "--packing", "complex", "--path", tmp_path / "m.json")
    assert code == EXIT_VALIDATION and "complex" in err


def test_wrong_key_preset(workdir, capsys):
    code, _, _ = run(
        capsys, "run", "--preset", "P12", "--model", workdir / "mlp.json", "--input", workdir / "x6.json",
        "--keys", workdir / "k11",
    )
    assert code == EXIT_VALIDATION


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_server_and_client(workdir, capsys):
    port = free_port()
    common = ["--preset", "P11", "--model", workdir / "mlp.json", "--port", port]
    done = {}
    argv = [str(a) for a in ["run", "--mode", "server", "--sessions", 2, *common]]
    server = threading.Thread(target=lambda: done.update(code=main(argv)))
    server.start()
    # wait for the listener; the probe counts as the first session
    for _ in range(100):
        try:
            socket.create_connection(("127.0.0.1", port), timeout=1).close()
            break
        except OSError:
            time.sleep(0.05)
    args = ["run", "--mode", "client", *common, "--input", workdir / "x6.json", "--keys", workdir / "k11", "--seed", 4]
    code, out, _ = run(capsys, *args, "--out", "csv")
    server.join(10)
    assert code == EXIT_OK and done["code"] == EXIT_OK
    local = run(
        capsys, "run", "--preset", "P11", "--model", workdir / "mlp.json", "--input", workdir / "x6.json",
        "--keys", workdir / "k11", "--seed", 4, "--out", "csv",
    )[1]
    assert [l for l in out.splitlines() if not l.startswith("serving")] == local.splitlines()


def test_server_traffic_report(workdir, capsys):
    port = free_port()
    common = ["--preset", "P11", "--model", workdir / "mlp.json", "--port", port]
    argv = [str(a) for a in ["run", "--mode", "server", "--sessions", 2, *common]]
    server = threading.Thread(target=main, args=(argv,))
    server.start()
    for _ in range(100):
        try:
            socket.create_connection(("127.0.0.1", port), timeout=1).close()
            break
        except OSError:
            time.sleep(0.05)
    code, out, _ = run(
        capsys, "run", "--mode", "client", *common, "--input", workdir / "x6.json", "--keys", workdir / "k11"
    )
    server.join(10)
    assert code == EXIT_OK
    assert "MB/image" in out and "relu" in out


def test_client_without_server(workdir, capsys):
    code, _, err = run(
        capsys, "run", "--mode", "client", "--preset", "P11", "--model", workdir / "mlp.json",
        "--input", workdir / "x6.json", "--keys", workdir / "k11", "--port", free_port(),
    )
    assert code == EXIT_TRANSPORT and "cannot reach" in err
