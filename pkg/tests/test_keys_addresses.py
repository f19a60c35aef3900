"""Address derivation checked against independent recomputation, plus
signature backend behavior and frozen golden vectors."""

import hashlib
import itertools
import random
from pathlib import Path

import pytest

from bsa_sim.curve import N, NUMS_BASE, generator_mul, point_add
from bsa_sim.keys import (
    ADDRESS_KINDS,
    InvalidScalar,
    Keypair,
    MockScheme,
    SchnorrScheme,
    SingleAfterDelay,
    SpendPath,
    TweakData,
    TwoOfTwo,
    build_protocol_addresses,
    derive_nums_point,
    get_scheme,
    key_address_id,
    merkle_root,
    sign_digest,
    taproot_output_key,
    verify_signature,
)

GOLDEN = Path(__file__).parent / "golden" / "addresses.txt"


def sha(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def make_tweak_data(seed: str = "alpha", n_oracles: int = 3, t1: int = 6, t2: int = 10):
    scheme = SchnorrScheme()
    dep = scheme.keypair_from_seed(f"{seed}-dep".encode())
    to = scheme.keypair_from_seed(f"{seed}-to".encode())
    aos = tuple(
        scheme.keypair_from_seed(f"{seed}-ao-{i}".encode()).public
        for i in range(n_oracles)
    )
    return TweakData(
        dep_pk=dep.public,
        to_pk=to.public,
        ao_pks=aos,
        t1=t1,
        t2=t2,
        destination_chain_address=f"acct:{seed}".encode(),
        return_address=key_address_id(dep.public).encode(),
    )


# -- signature backends ------------------------------------------------------


def test_schnorr_round_trip():
    kp = SchnorrScheme().keypair_from_seed(b"signer")
    digest = sha(b"message")
    sig = sign_digest(kp, digest)
    assert verify_signature(kp.public, digest, sig)
    assert not verify_signature(kp.public, sha(b"other"), sig)


def test_schnorr_rejects_wrong_key():
    scheme = SchnorrScheme()
    a = scheme.keypair_from_seed(b"a")
    b = scheme.keypair_from_seed(b"b")
    digest = sha(b"payload")
    assert not verify_signature(b.public, digest, sign_digest(a, digest))


def test_schnorr_deterministic():
    scheme = SchnorrScheme()
    kp = scheme.keypair_from_seed(b"det")
    digest = sha(b"x")
    assert sign_digest(kp, digest) == sign_digest(kp, digest)
    assert scheme.keypair_from_seed(b"det").secret == kp.secret


def test_keypair_from_secret_matches_seed_derivation():
    for scheme in (SchnorrScheme(), MockScheme()):
        kp = scheme.keypair_from_seed(b"restore-me")
        again = scheme.keypair_from_secret(kp.secret)
        assert again.public == kp.public
        digest = sha(b"still works")
        assert verify_signature(again.public, digest, sign_digest(again, digest))


def test_schnorr_rejects_out_of_range_secret():
    with pytest.raises(InvalidScalar):
        SchnorrScheme().keypair_from_secret(0)
    with pytest.raises(InvalidScalar):
        SchnorrScheme().keypair_from_secret(N)


def test_mock_round_trip_and_foreign_signature():
    scheme = MockScheme()
    kp = scheme.keypair_from_seed(b"mock-signer")
    digest = sha(b"hello")
    sig = sign_digest(kp, digest)
    assert verify_signature(kp.public, digest, sig)
    # a point the mock registry never produced cannot verify anything
    stranger = SchnorrScheme().keypair_from_seed(b"stranger").public
    assert not verify_signature(stranger, digest, sig)


def test_verification_dispatches_on_signature_length():
    digest = sha(b"dispatch")
    schnorr = SchnorrScheme().keypair_from_seed(b"s")
    mock = MockScheme().keypair_from_seed(b"m")
    schnorr_sig = sign_digest(schnorr, digest)
    mock_sig = sign_digest(mock, digest)
    assert len(schnorr_sig) != len(mock_sig)
    assert not verify_signature(schnorr.public, digest, mock_sig)
    assert not verify_signature(mock.public, digest, schnorr_sig)


def test_get_scheme():
    assert get_scheme("schnorr").name == "schnorr"
    assert get_scheme("mock").name == "mock"
    with pytest.raises(KeyError):
        get_scheme("rsa")


# -- internal key derivation -------------------------------------------------


def test_internal_key_matches_independent_recomputation():
    td = make_tweak_data("internal")
    for kind in ADDRESS_KINDS:
        r = int.from_bytes(sha(kind.encode() + td.serialize()), "big") % N
        expected = point_add(NUMS_BASE, generator_mul(r))
        assert derive_nums_point(kind, td) == expected


def test_internal_keys_distinct_per_kind():
    td = make_tweak_data("kinds")
    points = {derive_nums_point(kind, td).compressed() for kind in ADDRESS_KINDS}
    assert len(points) == 4


def test_serialize_is_injective_on_field_order():
    # swapping two equal-length byte fields must change the serialization
    td = make_tweak_data("swap")
    swapped = TweakData(
        dep_pk=td.to_pk,
        to_pk=td.dep_pk,
        ao_pks=td.ao_pks,
        t1=td.t1,
        t2=td.t2,
        destination_chain_address=td.destination_chain_address,
        return_address=td.return_address,
    )
    assert td.serialize() != swapped.serialize()


# -- script tree -------------------------------------------------------------


def _leaves(n, seed="leaf"):
    kp = SchnorrScheme().keypair_from_seed(seed.encode())
    out = []
    for i in range(n):
        out.append(SpendPath(f"p{i}", SingleAfterDelay(kp.public, i + 1)))
    return out


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_merkle_root_permutation_invariant(n):
    leaves = _leaves(n)
    digests = [leaf.leaf_digest() for leaf in leaves]
    roots = {merkle_root(list(perm)) for perm in itertools.permutations(digests)}
    assert len(roots) == 1


def test_merkle_root_two_leaves_reference():
    a, b = (leaf.leaf_digest() for leaf in _leaves(2))
    left, right = sorted((a, b))
    assert merkle_root([a, b]) == sha(b"branch" + left + right)


def test_leaf_digest_reference():
    leaf = SpendPath("x", TwoOfTwo(generator_mul(5), generator_mul(7)))
    assert leaf.leaf_digest() == sha(b"leaf" + leaf.policy.encode())


def test_policy_encodings_differ():
    key = generator_mul(11)
    other = generator_mul(12)
    encodings = {
        TwoOfTwo(key, other).encode(),
        TwoOfTwo(other, key).encode(),
        SingleAfterDelay(key, 6).encode(),
        SingleAfterDelay(key, 7).encode(),
    }
    assert len(encodings) == 4


def test_output_key_matches_independent_recomputation():
    td = make_tweak_data("output")
    addresses = build_protocol_addresses(td)
    for addr in addresses.all():
        root = merkle_root([leaf.leaf_digest() for leaf in addr.leaves])
        t = int.from_bytes(sha(addr.internal_key.x.to_bytes(32, "big") + root), "big") % N
        expected = point_add(addr.internal_key, generator_mul(t))
        assert addr.merkle_root == root
        assert addr.output_key == expected


# -- the four instance addresses ---------------------------------------------


def test_leaf_layout():
    td = make_tweak_data("layout", n_oracles=3)
    addresses = build_protocol_addresses(td)
    assert [leaf.path_id for leaf in addresses.va.leaves] == ["dep_to"]
    assert [leaf.path_id for leaf in addresses.uta.leaves] == ["dep_to", "dep_delay"]
    challenge_ids = ["dep_ao_0", "dep_ao_1", "dep_ao_2", "to_delay"]
    assert [leaf.path_id for leaf in addresses.uca.leaves] == challenge_ids
    assert [leaf.path_id for leaf in addresses.rca.leaves] == challenge_ids


def test_challenge_addresses_differ_despite_same_leaves():
    td = make_tweak_data("uca-rca")
    addresses = build_protocol_addresses(td)
    assert addresses.uca.leaves == addresses.rca.leaves
    assert addresses.uca.address_id != addresses.rca.address_id


def test_delay_leaves_carry_configured_timelocks():
    td = make_tweak_data("delays", t1=9, t2=17)
    addresses = build_protocol_addresses(td)
    assert addresses.uta.leaf("dep_delay").policy.delay_blocks == 9
    assert addresses.uca.leaf("to_delay").policy.delay_blocks == 17


def field_variants(td: TweakData, rng: random.Random):
    """One changed copy of td per field."""
    scheme = SchnorrScheme()
    fresh = scheme.keypair_from_seed(rng.randbytes(16)).public
    yield TweakData(fresh, td.to_pk, td.ao_pks, td.t1, td.t2,
                    td.destination_chain_address, td.return_address)
    yield TweakData(td.dep_pk, fresh, td.ao_pks, td.t1, td.t2,
                    td.destination_chain_address, td.return_address)
    changed_aos = (fresh,) + td.ao_pks[1:]
    yield TweakData(td.dep_pk, td.to_pk, changed_aos, td.t1, td.t2,
                    td.destination_chain_address, td.return_address)
    yield TweakData(td.dep_pk, td.to_pk, td.ao_pks, td.t1 + 1, td.t2,
                    td.destination_chain_address, td.return_address)
    yield TweakData(td.dep_pk, td.to_pk, td.ao_pks, td.t1, td.t2 + 1,
                    td.destination_chain_address, td.return_address)
    yield TweakData(td.dep_pk, td.to_pk, td.ao_pks, td.t1, td.t2,
                    td.destination_chain_address + b"x", td.return_address)
    yield TweakData(td.dep_pk, td.to_pk, td.ao_pks, td.t1, td.t2,
                    td.destination_chain_address, td.return_address + b"x")


def address_ids(td: TweakData) -> list[str]:
    return [addr.address_id for addr in build_protocol_addresses(td).all()]


def test_any_field_change_moves_all_four_addresses():
    rng = random.Random(42)
    td = make_tweak_data("avalanche")
    base = address_ids(td)
    for variant in field_variants(td, rng):
        changed = address_ids(variant)
        assert all(a != b for a, b in zip(base, changed))


def test_addresses_stable_across_processes():
    td = make_tweak_data("golden", n_oracles=3, t1=6, t2=10)
    addresses = build_protocol_addresses(td)
    lines = [f"tweak_digest {td.digest_hex()}"]
    for addr in addresses.all():
        lines.append(
            f"{addr.kind} {addr.address_id}"
            f" internal={addr.internal_key.compressed().hex()}"
            f" root={addr.merkle_root.hex()}"
        )
    expected = GOLDEN.read_text().strip().splitlines()
    assert lines == expected
