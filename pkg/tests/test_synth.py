import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latfuse.synth import KINDS, SynthSpec, generate, generate_pair

LATENT = (1, 4, 128, 128)
# Pearson correlation per channel of the seed-42 structured pair, computed once.
PAIR_CORRELATION_SEED42 = [0.9629332933568728, 0.9447817053099142, 0.9772622223623473, 0.9678611678362342]


def mean_abs_gradient(t):
    t = t.astype(np.float64)
    return (np.abs(np.diff(t, axis=2)).mean() + np.abs(np.diff(t, axis=3)).mean()) / 2


def channel_correlations(a, b):
    return [np.corrcoef(a[0, c].ravel(), b[0, c].ravel())[0, 1] for c in range(a.shape[1])]


@pytest.mark.parametrize("kind", KINDS)
def test_deterministic(kind):
    spec = SynthSpec(kind, (1, 3, 9, 11), seed=5)
    a1, b1 = generate_pair(spec)
    a2, b2 = generate_pair(spec)
    assert a1.tobytes() == a2.tobytes() and b1.tobytes() == b2.tobytes()
    assert generate(spec).tobytes() == a1.tobytes()


@pytest.mark.parametrize("kind", KINDS)
def test_seed_changes_output(kind):
    shape = (1, 2, 8, 8)
    assert generate(SynthSpec(kind, shape, 1)).tobytes() != generate(SynthSpec(kind, shape, 2)).tobytes()


def test_noise_matches_numpy_generator():
    # numpy's Generator.random builds doubles from the same 53 bits of each PCG64 word.
    x = generate(SynthSpec("noise", (1, 2, 4, 4), seed=9, dtype="float64"))
    bits = np.random.PCG64(np.random.SeedSequence(9, spawn_key=(0, 0)))
    u = np.random.Generator(bits).random(32)
    np.testing.assert_array_equal(x.ravel(), 2 * u - 1)


def test_noise_statistics():
    x = generate(SynthSpec("noise", LATENT, seed=42))
    assert x.min() >= -1 and x.max() <= 1
    assert abs(float(x.mean())) <= 0.05


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(KINDS), st.integers(0, 2 ** 64 - 1), st.floats(0.01, 10))
def test_amplitude_bounds(kind, seed, amp):
    base, refined = generate_pair(SynthSpec(kind, (1, 2, 6, 6), seed, amp, "float64"))
    # lowfreq is at most 1, highfreq and the refined member add up to half again.
    assert np.abs(base).max() <= 1.5 * amp
    assert np.abs(refined).max() <= 1.5 * amp


def test_pinned_pair_correlation():
    base, refined = generate_pair(SynthSpec("structured-pair", LATENT, seed=42))
    corr = channel_correlations(base, refined)
    np.testing.assert_allclose(corr, PAIR_CORRELATION_SEED42, rtol=1e-12)
    assert min(corr) >= 0.5


@pytest.mark.parametrize("seed", [0, 1, 7, 42, 123])
def test_detail_has_more_gradient_than_structure(seed):
    base, refined = generate_pair(SynthSpec("structured-pair", LATENT, seed=seed))
    assert mean_abs_gradient(refined - base) > mean_abs_gradient(base)
    assert min(channel_correlations(base, refined)) >= 0.5


def test_highfreq_adds_detail_to_lowfreq():
    low = generate(SynthSpec("lowfreq", LATENT, seed=3))
    high = generate(SynthSpec("highfreq", LATENT, seed=3))
    assert mean_abs_gradient(high - low) > mean_abs_gradient(low)


def test_independent_pair_members_differ():
    a, b = generate_pair(SynthSpec("noise", (1, 1, 8, 8), 0))
    assert not np.array_equal(a, b)


def test_dtype():
    assert generate(SynthSpec("lowfreq", (1, 1, 4, 4), dtype="float64")).dtype == np.float64
    assert generate(SynthSpec("lowfreq", (1, 1, 4, 4))).dtype == np.float32


@pytest.mark.parametrize("kwargs", [
    {"kind": "noise", "shape": (0, 1, 1, 1)},
    {"kind": "noise", "shape": (1, 1, 0, 4)},
    {"kind": "noise", "shape": (1, 4, 4)},
    {"kind": "pink", "shape": (1, 1, 1, 1)},
    {"kind": "noise", "shape": (1, 1, 1, 1), "seed": -1},
])
def test_invalid_spec(kwargs):
    with pytest.raises(ValueError):
        SynthSpec(**kwargs)
