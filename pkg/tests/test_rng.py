import numpy as np
import pytest

from mcmclab import markov_core as mc
from mcmclab import sampler as sa
from mcmclab.rng import RngStream, as_generator, block_sizes, run_blocks, worker_count


def test_same_stream_same_sequence():
    a = RngStream(42, 3).generator().random(100)
    b = RngStream(42, 3).generator().random(100)
    assert np.array_equal(a, b)


def test_distinct_streams_differ():
    draws = {(s, i): RngStream(s, i).generator().random(4).tobytes() for s in (0, 1) for i in (0, 1, 2)}
    assert len(set(draws.values())) == len(draws)


def test_substreams_independent():
    root = RngStream(7)
    x = root.substream(0).generator().random(200000)
    y = root.substream(1).generator().random(200000)
    assert abs(np.corrcoef(x, y)[0, 1]) <= 4 / np.sqrt(x.size)


def test_as_generator_inputs():
    assert isinstance(as_generator(None), np.random.Generator)
    assert as_generator(5).random() == RngStream(5).generator().random()
    g = np.random.default_rng(1)
    assert as_generator(g) is g


def test_block_sizes():
    assert block_sizes(10, 4) == [4, 4, 2]
    assert block_sizes(8, 4) == [4, 4]
    assert block_sizes(0, 4) == []


def test_run_blocks_order_independent_of_workers():
    fn = lambda i: RngStream(3).substream(i).generator().random()  # noqa: E731
    one = run_blocks(fn, 17, workers=1)
    many = run_blocks(fn, 17, workers=5)
    assert one == many


@pytest.mark.parametrize("value, expected", [("1", 1), ("3", 3), ("junk", None), ("0", None)])
def test_worker_count_env(monkeypatch, value, expected):
    monkeypatch.setenv("MCMCLAB_THREADS", value)
    n = worker_count()
    assert n >= 1
    if expected is not None:
        assert n == expected


def test_parallel_estimators_match(monkeypatch):
    P = np.array([[1 / 3, 2 / 3], [2 / 3, 1 / 3]])
    out = []
    for threads in ("1", "4"):
        monkeypatch.setenv("MCMCLAB_THREADS", threads)
        vol = sa.mc_volume(3, [sa.ball([0.5] * 3, 0.5)], 300000, RngStream(9))
        cp = mc.coupling_diagonal_time(P, [1, 0], [0.5, 0.5], 5, 40000, RngStream(9))
        out.append((vol.mean, cp.tail.tobytes()))
    assert out[0] == out[1]
