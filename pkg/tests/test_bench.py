import pytest

from heinfer.bench import FIELDS, BenchReport, BenchRow, default_ops, run_perf
from heinfer.ckks import preset


@pytest.fixture(scope="module")
def p11_report():
    ops = ["encode_general", "encode_scalar", "add_plain_vector", "add_plain_scalar"]
    return run_perf(preset("P11"), trials=100, seed=1, ops=ops)


def test_csv_round_trip(p11_report):
    text = p11_report.to_csv()
    assert text.splitlines()[0] == ",".join(FIELDS)
    back = BenchReport.from_csv(text)
    assert back.rows == p11_report.rows


def test_csv_rejects_other_columns():
    with pytest.raises(ValueError):
        BenchReport.from_csv("op,mean\nadd,1\n")


def test_memory_factor_is_degree(p11_report):
    assert p11_report.memory_factor() == preset("P11").poly_degree


def test_table_mentions_speedups(p11_report):
    table = p11_report.to_table()
    assert "speedup encode" in table and "memory factor 2048" in table
    assert set(p11_report.speedups()) == {"encode", "add_plain"}


def test_too_few_trials():
    with pytest.raises(ValueError):
        run_perf(preset("P11"), trials=99)


def test_unknown_op():
    with pytest.raises(ValueError, match="unknown benchmark"):
        run_perf(preset("P11"), trials=100, ops=["fft"])


def test_default_ops_follow_depth():
    assert "rescale" not in default_ops(preset("P11"))
    assert "relinearize" not in default_ops(preset("P11"))
    ops = default_ops(preset("P13"))
    assert {"rescale", "relinearize", "dot_lazy_rescale"} <= set(ops)


def test_row_lookup():
    r = BenchReport([BenchRow("add", "P11", 1.0, 0.0, 100, 8)])
    assert r.row("add").memory_words == 8
    with pytest.raises(KeyError):
        r.row("mul")
    assert r.memory_factor() is None
