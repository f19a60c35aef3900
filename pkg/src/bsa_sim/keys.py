"""Keys, signatures, provably unspendable internal keys, and the four
script addresses every protocol instance derives from its parameters.

Signature backends
------------------
Two interchangeable backends sit behind the same sign/verify interface:

* ``SchnorrScheme`` -- deterministic Schnorr-style signatures over
  secp256k1 (nonce derived from the secret and digest, 65-byte
  signature = compressed R point plus s scalar).
* ``MockScheme`` -- a keyed-hash signature for fast property tests.  The
  scheme keeps an in-process table of public points it generated so that
  verification can recompute the MAC; any (point, digest, sig) triple it
  did not produce fails verification.

Verification dispatches on signature length, so call sites never need to
know which backend produced a signature.

Addresses
---------
Each instance derives four script addresses (vault, unbond timelock,
unbond challenge, rebalance challenge).  The internal key of each is a
distinct unspendable point H + r*G where r commits to the address kind
and the full instance parameters; the output key commits additionally to
the script tree, so no key-path spend can ever exist and signing always
targets a named script leaf.
"""

from __future__ import annotations

import hashlib
import hmac as hmac_mod
from dataclasses import dataclass

from .curve import (
    N,
    NUMS_BASE,
    P,
    Point,
    decode_point,
    generator_mul,
    lift_x,
    point_add,
    point_mul,
)


class KeyError_(Exception):
    pass


class InvalidScalar(KeyError_):
    pass


def _sha(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def _encode_bytes(data: bytes) -> bytes:
    return len(data).to_bytes(4, "big") + data


# ---------------------------------------------------------------------------
# signature backends


@dataclass(frozen=True)
class Keypair:
    secret: int
    public: Point
    scheme: str  # "schnorr" | "mock"

    @property
    def public_hex(self) -> str:
        return self.public.compressed().hex()


class SchnorrScheme:
    name = "schnorr"

    def keypair_from_seed(self, seed: bytes) -> Keypair:
        counter = 0
        while True:
            secret = int.from_bytes(_sha(b"seckey" + seed + bytes([counter])), "big") % N
            if secret != 0:
                break
            counter += 1
        return Keypair(secret, generator_mul(secret), self.name)

    def keypair_from_secret(self, secret: int) -> Keypair:
        if not (0 < secret < N):
            raise InvalidScalar("secret out of range")
        return Keypair(secret, generator_mul(secret), self.name)

    def sign(self, secret: int, digest: bytes) -> bytes:
        if not (0 < secret < N):
            raise InvalidScalar("secret out of range")
        sk_bytes = secret.to_bytes(32, "big")
        counter = 0
        while True:
            k = int.from_bytes(_sha(b"nonce" + sk_bytes + digest + bytes([counter])), "big") % N
            if k != 0:
                break
            counter += 1
        r_point = generator_mul(k)
        public = generator_mul(secret)
        e = int.from_bytes(
            _sha(b"challenge" + r_point.compressed() + public.compressed() + digest), "big"
        ) % N
        s = (k + e * secret) % N
        return r_point.compressed() + s.to_bytes(32, "big")

    def verify(self, public: Point, digest: bytes, sig: bytes) -> bool:
        if len(sig) != 65:
            return False
        try:
            r_point = decode_point(sig[:33])
        except Exception:
            return False
        s = int.from_bytes(sig[33:], "big")
        if s >= N:
            return False
        e = int.from_bytes(
            _sha(b"challenge" + sig[:33] + public.compressed() + digest), "big"
        ) % N
        # s*G == R + e*P  =>  R == s*G - e*P
        check = point_add(generator_mul(s), point_mul(public, N - e))
        return check is not None and check == r_point


class MockScheme:
    name = "mock"

    # public point -> secret, filled at keypair generation so that verify
    # can recompute the MAC without the caller holding the secret
    _registry: dict[Point, int] = {}

    def keypair_from_seed(self, seed: bytes) -> Keypair:
        secret = int.from_bytes(_sha(b"mocksec" + seed), "big") % N or 1
        return self.keypair_from_secret(secret)

    def keypair_from_secret(self, secret: int) -> Keypair:
        if not (0 < secret < N):
            raise InvalidScalar("secret out of range")
        counter = 0
        while True:
            x = int.from_bytes(
                _sha(b"mockpub" + secret.to_bytes(32, "big") + bytes([counter])), "big"
            ) % P
            try:
                public = lift_x(x)
                break
            except Exception:
                counter += 1
        MockScheme._registry[public] = secret
        return Keypair(secret, public, self.name)

    def sign(self, secret: int, digest: bytes) -> bytes:
        if not (0 < secret < N):
            raise InvalidScalar("secret out of range")
        return hmac_mod.new(secret.to_bytes(32, "big"), b"mocksig" + digest, hashlib.sha256).digest()

    def verify(self, public: Point, digest: bytes, sig: bytes) -> bool:
        if len(sig) != 32:
            return False
        secret = MockScheme._registry.get(public)
        if secret is None:
            return False
        expected = hmac_mod.new(
            secret.to_bytes(32, "big"), b"mocksig" + digest, hashlib.sha256
        ).digest()
        return hmac_mod.compare_digest(expected, sig)


SCHEMES = {"schnorr": SchnorrScheme(), "mock": MockScheme()}


def get_scheme(name: str):
    return SCHEMES[name]


def sign_digest(keypair: Keypair, digest: bytes) -> bytes:
    return SCHEMES[keypair.scheme].sign(keypair.secret, digest)


def verify_signature(public: Point, digest: bytes, sig: bytes) -> bool:
    """Backend-agnostic verification; dispatches on signature length."""
    if len(sig) == 65:
        return SCHEMES["schnorr"].verify(public, digest, sig)
    if len(sig) == 32:
        return SCHEMES["mock"].verify(public, digest, sig)
    return False


# ---------------------------------------------------------------------------
# spend path policies


@dataclass(frozen=True)
class TwoOfTwo:
    key_a: Point
    key_b: Point

    def encode(self) -> bytes:
        return b"2of2" + self.key_a.compressed() + self.key_b.compressed()

    def keys(self) -> tuple[Point, ...]:
        return (self.key_a, self.key_b)


@dataclass(frozen=True)
class SingleAfterDelay:
    key: Point
    delay_blocks: int

    def __post_init__(self):
        if self.delay_blocks <= 0:
            raise ValueError("delay must be positive")

    def encode(self) -> bytes:
        return b"delay" + self.key.compressed() + self.delay_blocks.to_bytes(4, "big")

    def keys(self) -> tuple[Point, ...]:
        return (self.key,)


Policy = TwoOfTwo | SingleAfterDelay


@dataclass(frozen=True)
class SpendPath:
    path_id: str
    policy: Policy

    def leaf_digest(self) -> bytes:
        return _sha(b"leaf" + self.policy.encode())


# ---------------------------------------------------------------------------
# instance parameters


@dataclass(frozen=True)
class TweakData:
    """Everything the four instance addresses commit to."""

    dep_pk: Point
    to_pk: Point
    ao_pks: tuple[Point, ...]
    t1: int
    t2: int
    destination_chain_address: bytes
    return_address: bytes

    def __post_init__(self):
        if len(self.ao_pks) < 1:
            raise ValueError("need at least one arbitration key")
        if self.t1 <= 0 or self.t2 <= 0:
            raise ValueError("timelocks must be positive")

    def serialize(self) -> bytes:
        parts = [
            _encode_bytes(self.dep_pk.compressed()),
            _encode_bytes(self.to_pk.compressed()),
            len(self.ao_pks).to_bytes(2, "big"),
        ]
        parts.extend(pk.compressed() for pk in self.ao_pks)
        parts.append(self.t1.to_bytes(4, "big"))
        parts.append(self.t2.to_bytes(4, "big"))
        parts.append(_encode_bytes(self.destination_chain_address))
        parts.append(_encode_bytes(self.return_address))
        return b"".join(parts)

    def digest_hex(self) -> str:
        return _sha(b"tweakdata" + self.serialize()).hex()

    def to_dict(self) -> dict:
        return {
            "dep_pk": self.dep_pk.compressed().hex(),
            "to_pk": self.to_pk.compressed().hex(),
            "ao_pks": [pk.compressed().hex() for pk in self.ao_pks],
            "t1": self.t1,
            "t2": self.t2,
            "destination_chain_address": self.destination_chain_address.hex(),
            "return_address": self.return_address.hex(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TweakData":
        return cls(
            dep_pk=decode_point(bytes.fromhex(d["dep_pk"])),
            to_pk=decode_point(bytes.fromhex(d["to_pk"])),
            ao_pks=tuple(decode_point(bytes.fromhex(h)) for h in d["ao_pks"]),
            t1=d["t1"],
            t2=d["t2"],
            destination_chain_address=bytes.fromhex(d["destination_chain_address"]),
            return_address=bytes.fromhex(d["return_address"]),
        )


# ---------------------------------------------------------------------------
# internal key and output key derivation

ADDRESS_KINDS = ("VA", "UTA", "UCA", "RCA")


def derive_nums_point(kind_label: str, tweak_data: TweakData) -> Point:
    """Internal key for one address kind: H + r*G with r committing to the
    kind label and the full serialized instance parameters."""
    if kind_label not in ADDRESS_KINDS:
        raise KeyError_(f"unknown address kind {kind_label!r}")
    payload = kind_label.encode("ascii") + tweak_data.serialize()
    suffix = b""
    counter = 0
    while True:
        r = int.from_bytes(_sha(payload + suffix), "big") % N
        if r != 0:
            pt = point_add(NUMS_BASE, generator_mul(r))
            if pt is not None:
                return pt
        # unreachable in practice; re-hashing with a counter byte keeps the
        # derivation total
        suffix = bytes([counter])
        counter += 1


def merkle_root(leaf_digests: list[bytes]) -> bytes:
    """Order-independent tree over leaf digests: every level is sorted and
    adjacent pairs hash together; an odd digest is carried up unchanged."""
    if not leaf_digests:
        raise KeyError_("empty script tree")
    level = sorted(leaf_digests)
    while len(level) > 1:
        nxt = []
        for i in range(0, len(level) - 1, 2):
            left, right = sorted((level[i], level[i + 1]))
            nxt.append(_sha(b"branch" + left + right))
        if len(level) % 2 == 1:
            nxt.append(level[-1])
        level = sorted(nxt)
    return level[0]


def taproot_output_key(internal: Point, leaves: tuple[SpendPath, ...]) -> tuple[Point, bytes]:
    root = merkle_root([leaf.leaf_digest() for leaf in leaves])
    suffix = b""
    counter = 0
    while True:
        t = int.from_bytes(_sha(internal.x.to_bytes(32, "big") + root + suffix), "big") % N
        if t != 0:
            out = point_add(internal, generator_mul(t))
            if out is not None:
                return out, root
        suffix = bytes([counter])
        counter += 1


@dataclass(frozen=True)
class ProtocolAddress:
    kind: str
    internal_key: Point
    leaves: tuple[SpendPath, ...]
    merkle_root: bytes
    output_key: Point

    def __post_init__(self):
        ids = [leaf.path_id for leaf in self.leaves]
        if len(ids) != len(set(ids)):
            raise KeyError_("duplicate path ids in script tree")

    @property
    def address_id(self) -> str:
        return "p2tr:" + self.output_key.compressed().hex()

    def leaf(self, path_id: str) -> SpendPath | None:
        for leaf in self.leaves:
            if leaf.path_id == path_id:
                return leaf
        return None


def key_address_id(public: Point) -> str:
    return "key:" + public.compressed().hex()


@dataclass(frozen=True)
class InstanceAddresses:
    va: ProtocolAddress
    uta: ProtocolAddress
    uca: ProtocolAddress
    rca: ProtocolAddress

    def by_kind(self, kind: str) -> ProtocolAddress:
        return {"VA": self.va, "UTA": self.uta, "UCA": self.uca, "RCA": self.rca}[kind]

    def all(self) -> tuple[ProtocolAddress, ...]:
        return (self.va, self.uta, self.uca, self.rca)


def build_protocol_addresses(tweak_data: TweakData) -> InstanceAddresses:
    """Derive the four per-instance script addresses.

    Leaf layout:
      VA   cooperative 2-of-2 (depositor, operator)
      UTA  cooperative 2-of-2, plus depositor alone after T1
      UCA  2-of-2 (depositor, each arbitration key), plus operator alone after T2
      RCA  same shape as UCA
    """
    dep, to = tweak_data.dep_pk, tweak_data.to_pk

    va_leaves = (SpendPath("dep_to", TwoOfTwo(dep, to)),)
    uta_leaves = (
        SpendPath("dep_to", TwoOfTwo(dep, to)),
        SpendPath("dep_delay", SingleAfterDelay(dep, tweak_data.t1)),
    )
    challenge_leaves = tuple(
        SpendPath(f"dep_ao_{i}", TwoOfTwo(dep, ao)) for i, ao in enumerate(tweak_data.ao_pks)
    ) + (SpendPath("to_delay", SingleAfterDelay(to, tweak_data.t2)),)

    out = {}
    for kind, leaves in (
        ("VA", va_leaves),
        ("UTA", uta_leaves),
        ("UCA", challenge_leaves),
        ("RCA", challenge_leaves),
    ):
        internal = derive_nums_point(kind, tweak_data)
        output_key, root = taproot_output_key(internal, leaves)
        out[kind] = ProtocolAddress(kind, internal, leaves, root, output_key)
    return InstanceAddresses(va=out["VA"], uta=out["UTA"], uca=out["UCA"], rca=out["RCA"])
