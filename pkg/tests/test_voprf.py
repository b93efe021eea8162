import pytest
from hypothesis import given, strategies as st

from sidecar.crypto import pairing as pc
from sidecar.crypto import voprf


def test_unblinded_output_is_keyed_hash(rng):
    kp = voprf.KeyPair.generate(rng)
    st_ = voprf.blind(b"call", rng)
    v = voprf.unblind(voprf.evaluate(kp.sk, st_.x), st_)
    assert v == pc.h_to_group(b"call") * kp.sk
    assert voprf.verify_output(kp.pk, b"call", v)


@given(st.binary(max_size=32), st.integers(1, 2**128))
def test_output_independent_of_blinding(data, r):
    sk = pc.scalar_from_int(0xC0FFEE)
    a = voprf.blind(data, r=pc.scalar_from_int(r))
    b = voprf.blind(data, r=pc.scalar_from_int(r + 1))
    assert a.x != b.x
    assert voprf.unblind(voprf.evaluate(sk, a.x), a) == voprf.unblind(voprf.evaluate(sk, b.x), b)


def test_wrong_key_fails_verification(rng):
    kp, other = voprf.KeyPair.generate(rng), voprf.KeyPair.generate(rng)
    st_ = voprf.blind(b"call", rng)
    v = voprf.unblind(voprf.evaluate(other.sk, st_.x), st_)
    assert not voprf.verify_output(kp.pk, b"call", v)
    assert voprf.verify_many(kp.pk, b"call", [v, pc.h_to_group(b"call") * kp.sk]) == [False, True]


def test_zero_blinding_rejected():
    with pytest.raises(ValueError):
        voprf.blind(b"x", r=pc.scalar_from_int(0))


def test_evaluate_requires_group_element():
    with pytest.raises(pc.DecodeError):
        voprf.evaluate(pc.scalar_from_int(3), b"not a point")


def test_blinded_points_do_not_reveal_input():
    # lookup-table distinguisher on the first byte after the flag byte
    import random
    rng = random.Random(5)
    samples = [(m, pc.g1_to_bytes(voprf.blind(msg, rng).x)[1:2])
               for _ in range(10000) for m, msg in ((0, b"m1"), (1, b"m2"))]
    rng.shuffle(samples)
    train, test = samples[:10000], samples[10000:]
    votes: dict[bytes, list[int]] = {}
    for m, f in train:
        votes.setdefault(f[:1], [0, 0])[m] += 1
    guess = {k: int(v[1] > v[0]) for k, v in votes.items()}
    hits = sum(1 for m, f in test if guess.get(f[:1], 0) == m)
    assert abs(hits / len(test) - 0.5) < 0.03


@pytest.mark.parametrize("delta", [1, 2, 7, 2**64])
def test_verify_output_rejects_perturbed_values(rng, delta):
    kp = voprf.KeyPair.generate(rng)
    s = voprf.blind(b"call", rng)
    v = voprf.unblind(voprf.evaluate(kp.sk, s.x), s)
    assert voprf.verify_output(kp.pk, b"call", v)
    assert not voprf.verify_output(kp.pk, b"call", v + pc.h_to_group(b"call") * pc.scalar_from_int(delta))
    assert not voprf.verify_output(kp.pk, b"call", v + pc.G1_GEN * pc.scalar_from_int(delta))
    assert not voprf.verify_output(kp.pk, b"other", v)


def test_independent_parties_derive_same_value(rng):
    kp = voprf.KeyPair.generate(rng)
    outs = set()
    for _ in range(8):
        s = voprf.blind(b"shared call", rng)
        outs.add(pc.g1_to_bytes(voprf.unblind(voprf.evaluate(kp.sk, s.x), s)))
    assert len(outs) == 1
