import json

import numpy as np
import pytest
from scipy import stats

from tnvault.decomp import pad_noise, rht, rtd, tr_svd, tt_svd
from tnvault.errors import (
    FormatError,
    HashMismatch,
    MissingFragment,
    SeedCountMismatch,
    TooFewServers,
    TooManyServers,
)
from tnvault.formats import reconstruct
from tnvault.ops import tt_add
from tnvault.sharing import (
    ShareManifest,
    ShareSet,
    additive_to_tn,
    assign_servers,
    generate_shares,
    mode_permutations,
    permute_modes,
    reconstruct_from_shares,
    rep_from_shares,
    shares_from_rep,
    tn_to_additive,
    tt_sum,
)
from tnvault.synthetic import spectral_image


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(a)


@pytest.fixture
def secret(rng):
    return rng.standard_normal((6, 5, 4, 3))


@pytest.mark.parametrize("scheme,kw", [
    ("tt", {"eps": 0.1}),
    ("tr", {"eps": 0.1}),
    ("tucker", {"eps": 0.1}),
    ("ht", {"eps": 0.1}),
])
@pytest.mark.parametrize("permute", [False, True])
def test_round_trip_every_scheme(secret, scheme, kw, permute):
    shares, manifest, report = generate_shares(secret, scheme, n_servers=2, permute=permute, seed=5, **kw)
    assert len(shares) == len(manifest.fragments)
    assert rel(secret, reconstruct_from_shares(manifest, shares)) <= 0.1
    assert (manifest.permutation_seeds is not None) == permute


def test_image_three_servers():
    img = spectral_image(seed=2)
    shares, manifest, _ = generate_shares(img, "tt", eps=0.1, delta=0.05, n_servers=3, seed=1)
    assert len(manifest.fragments) == 3
    assert sorted(f.server_id for f in manifest.fragments) == [0, 1, 2]
    assert rel(img, reconstruct_from_shares(manifest, shares)) <= 0.1


def test_different_seeds_different_bytes_same_tensor(secret):
    s1, m1, _ = generate_shares(secret, "tt", eps=0.05, n_servers=2, seed=1)
    s2, m2, _ = generate_shares(secret, "tt", eps=0.05, n_servers=2, seed=2)
    assert {f.content_hash for f in m1.fragments}.isdisjoint({f.content_hash for f in m2.fragments})
    r1, r2 = reconstruct_from_shares(m1, s1), reconstruct_from_shares(m2, s2)
    assert np.linalg.norm(r1 - r2) <= 2 * 0.05 * np.linalg.norm(secret)


def test_fragment_ids_are_128_bit_and_unique(secret):
    _, m, _ = generate_shares(secret, "tucker", eps=0.2, n_servers=3, seed=1)
    ids = [f.fragment_id for f in m.fragments]
    assert len(set(ids)) == len(ids)
    assert all(len(i) == 32 and int(i, 16) >= 0 for i in ids)
    assert all(len(f.content_hash) == 64 for f in m.fragments)


def test_missing_fragment_named(secret):
    shares, m, _ = generate_shares(secret, "tt", eps=0.1, n_servers=2, seed=1)
    victim = m.fragments[1].fragment_id
    del shares.fragments[victim]
    with pytest.raises(MissingFragment) as ei:
        reconstruct_from_shares(m, shares)
    assert victim in str(ei.value)


@pytest.mark.parametrize("offset", [0, 7, -1])
def test_single_bit_flip_detected(secret, offset):
    shares, m, _ = generate_shares(secret, "tt", eps=0.1, n_servers=2, seed=1)
    fid = m.fragments[0].fragment_id
    blob = bytearray(shares.fragments[fid])
    blob[offset] ^= 0x01
    shares.fragments[fid] = bytes(blob)
    with pytest.raises(HashMismatch):
        reconstruct_from_shares(m, shares)


def test_server_count_limits(secret):
    with pytest.raises(TooFewServers):
        generate_shares(secret, "tt", eps=0.1, n_servers=1)
    with pytest.raises(TooManyServers):
        generate_shares(secret, "tt", eps=0.1, n_servers=5)
    with pytest.raises(TooFewServers):
        assign_servers(4, 1)


def test_assignment_modes():
    assert assign_servers(5, 2) == [0, 1, 0, 1, 0]
    rnd = assign_servers(6, 3, "random", seed=4)
    assert rnd == assign_servers(6, 3, "random", seed=4)
    assert all(a != b for a, b in zip(rnd, rnd[1:]))
    assert sorted(set(rnd)) == [0, 1, 2]


def test_manifest_json_round_trip_and_canonical(secret, tmp_path):
    shares, m, _ = generate_shares(secret, "ht", ranks=2, n_servers=3, permute=True, seed=3)
    text = m.to_json()
    assert text == json.dumps(json.loads(text), sort_keys=True, separators=(",", ":"))
    again = ShareManifest.from_json(text)
    assert again.to_json() == text
    assert again.structure["tree"] == m.structure["tree"]
    m.save(tmp_path / "x.manifest.json")
    shares.save(tmp_path / "frag")
    loaded = ShareSet.load(tmp_path / "frag", ShareManifest.load(tmp_path / "x.manifest.json"))
    assert np.array_equal(reconstruct_from_shares(again, loaded), reconstruct_from_shares(m, shares))


def test_manifest_rejects_bad_input():
    with pytest.raises(FormatError):
        ShareManifest.from_json("{not json")
    with pytest.raises(FormatError):
        ShareManifest.from_json(json.dumps({"scheme": "tt"}))
    with pytest.raises(FormatError):
        ShareManifest.from_json(json.dumps({"scheme": "tt", "fragments": [], "structure": {},
                                            "hash_algorithm": "md5"}))


@pytest.mark.parametrize("decomp", ["tt", "tr", "tucker", "ht"])
def test_permute_modes(rng, decomp):
    a = rng.standard_normal((4, 5, 3, 2))
    rep = {
        "tt": lambda: tt_svd(a, 1e-12, seed=1)[0],
        "tr": lambda: tr_svd(a, 1e-12, seed=1)[0],
        "tucker": lambda: rtd(a, (4, 5, 3, 2), seed=1)[0],
        "ht": lambda: rht(a, seed=1)[0],
    }[decomp]()
    seeds = [11, None, 13, 14]
    p = permute_modes(rep, seeds)
    perms = mode_permutations(rep.mode_sizes, seeds)
    assert np.abs(reconstruct(p) - reconstruct(rep)[np.ix_(*perms)]).max() <= 1e-12
    back = permute_modes(p, seeds, inverse=True)
    from tnvault.formats import rep_blocks
    for (_, _, x), (_, _, y) in zip(rep_blocks(rep), rep_blocks(back)):
        assert np.array_equal(x, y)
    ident = permute_modes(rep, [None] * 4)
    for (_, _, x), (_, _, y) in zip(rep_blocks(rep), rep_blocks(ident)):
        assert np.array_equal(x, y)
    with pytest.raises(SeedCountMismatch):
        permute_modes(rep, [1, 2])


def test_zero_slice_leakage_and_padding(rng):
    a = rng.standard_normal((5, 6, 4))
    a[2, :, :] = 0.0
    rep, _ = tt_svd(a, 1e-12, seed=3)
    g = rep.cores[0]
    # zero up to rounding in the factorization
    assert np.abs(g[:, 2, :]).max() <= 1e-12 * np.abs(g).max()
    padded, _ = tt_svd(pad_noise(a, 1, amplitude=1.0, seed=2), 1e-12, seed=3)
    h = padded.cores[0]
    assert np.abs(h[:, 2, :]).max() > 1e-3 * np.abs(h).max()


def test_shares_from_rep_keeps_structure(rng):
    rep, _ = tt_svd(rng.standard_normal((3, 4, 5)), 1e-12, seed=1)
    shares, m = shares_from_rep(rep, 3)
    out = rep_from_shares(m, shares)
    assert all(np.array_equal(x, y) for x, y in zip(rep.cores, out.cores))
    assert tuple(m.structure["ranks"]) == rep.ranks


# --- additive conversions ----------------------------------------------------


def test_additive_to_tn_two_shares(rng):
    t = rng.standard_normal((5, 6, 4))
    r = rng.standard_normal(t.shape)
    eps = 0.05
    tts = additive_to_tn([t - r, r], eps, seeds=[1, 2])
    got = reconstruct(tt_add(*tts))
    assert np.linalg.norm(got - t) <= 2 * eps * np.linalg.norm(t) + eps * (np.linalg.norm(t - r) + np.linalg.norm(r))


def test_additive_single_share_is_tt_svd(rng):
    t = rng.standard_normal((4, 5, 3))
    (one,) = additive_to_tn([t], 0.1, seeds=[7])
    ref, _ = tt_svd(t, 0.1, seed=7)
    assert all(np.array_equal(x, y) for x, y in zip(one.cores, ref.cores))


def test_additive_shares_summing_to_zero(rng):
    r = rng.standard_normal((4, 5, 3))
    eps = 0.1
    tts = additive_to_tn([r, -r], eps, seeds=[1, 2])
    assert np.linalg.norm(reconstruct(tt_sum(tts))) <= 2 * eps * 2 * np.linalg.norm(r)


def test_additive_shape_mismatch():
    from tnvault.errors import ShapeMismatch
    with pytest.raises(ShapeMismatch):
        additive_to_tn([np.ones((2, 3)), np.ones((3, 2))], 0.1)


def test_tn_to_additive(rng):
    rep, _ = tt_svd(rng.standard_normal((4, 5, 3)), 1e-12, seed=1)
    parts = tn_to_additive(rep, 3, seed=9)
    assert np.abs(sum(parts) - reconstruct(rep)).max() <= 1e-12
    again = tn_to_additive(rep, 3, seed=9)
    assert all(np.array_equal(x, y) for x, y in zip(parts, again))
    with pytest.raises(TooFewServers):
        tn_to_additive(rep, 1)


def test_tn_to_additive_masks_are_uniform_and_secret_independent(rng):
    small = rng.standard_normal((1, 10_000, 1))
    from tnvault.formats import TTRepresentation
    rep_a = TTRepresentation([small])
    rep_b = TTRepresentation([np.zeros_like(small)])
    mask_a = tn_to_additive(rep_a, 2, seed=42)[0].ravel()
    mask_b = tn_to_additive(rep_b, 2, seed=42)[0].ravel()
    # masks are drawn before the secret is looked at
    assert np.array_equal(mask_a, mask_b)
    assert stats.kstest(mask_a, stats.uniform(loc=-1, scale=2).cdf).pvalue > 1e-3
    assert abs(np.corrcoef(mask_a, small.ravel())[0, 1]) < 0.05
