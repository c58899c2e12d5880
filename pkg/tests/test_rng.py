import numpy as np
from hypothesis import given, settings, strategies as st

from ktube.rng import PURPOSE_DRAW, PURPOSE_STEP, Stream, fill_uniforms, philox4x64

u64 = st.integers(min_value=0, max_value=2**64 - 1)


@given(u64, u64, st.lists(u64, min_size=4, max_size=4))
@settings(max_examples=50, deadline=None)
def test_philox_matches_numpy(k0, k1, ctr):
    key = np.array([k0, k1], dtype=np.uint64)
    # numpy increments the counter before producing a block
    start = np.array(ctr, dtype=np.uint64)
    gen = np.random.Philox(key=key, counter=start)
    raw = gen.random_raw(4)
    c = [np.uint64((ctr[0] + 1) % 2**64), *map(np.uint64, ctr[1:])]
    if ctr[0] == 2**64 - 1:  # carry into the next word
        c[1] = np.uint64((ctr[1] + 1) % 2**64)
    ours = philox4x64(c[0], c[1], c[2], c[3], key[0], key[1])
    assert list(raw) == [int(v) for v in ours]


@given(u64, st.integers(0, 2**32), st.integers(1, 17))
@settings(max_examples=50, deadline=None)
def test_uniforms_open_interval_and_pure(seed, event, width):
    a = np.empty(width)
    b = np.empty(width)
    k0, k1 = np.uint64(seed), np.uint64(3)
    fill_uniforms(k0, k1, np.uint64(event), np.uint64(0), np.uint64(PURPOSE_STEP), a)
    fill_uniforms(k0, k1, np.uint64(event), np.uint64(0), np.uint64(PURPOSE_STEP), b)
    assert np.array_equal(a, b)
    assert np.all((a > 0) & (a < 1))


def test_draw_many_equals_sequential_draws():
    s1, s2 = Stream(9, 4), Stream(9, 4)
    many = s1.draw_many(5, 3)
    seq = np.stack([s2.draw(3) for _ in range(5)])
    assert np.array_equal(many, seq)
    assert s1.counter == s2.counter == 5


def test_streams_with_different_keys_or_purposes_differ():
    a = Stream(1, 0).draw(8)
    assert not np.array_equal(a, Stream(1, 1).draw(8))
    assert not np.array_equal(a, Stream(2, 0).draw(8))
    assert not np.array_equal(a, Stream(1, 0).draw(8, PURPOSE_STEP))
    assert np.array_equal(a, Stream(1, 0).draw(8, PURPOSE_DRAW))


def test_uniformity():
    from scipy import stats

    u = Stream(5, 0).draw_many(20000, 5).ravel()
    assert stats.kstest(u, "uniform").pvalue > 1e-3


def test_numpy_generator_is_reproducible():
    g1 = Stream(3, 2).numpy_generator()
    g2 = Stream(3, 2).numpy_generator()
    assert np.array_equal(g1.integers(0, 100, 50), g2.integers(0, 100, 50))
    assert not np.array_equal(Stream(3, 2).numpy_generator().random(5), Stream(3, 1).numpy_generator().random(5))
