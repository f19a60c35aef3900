"""Destination chain: a slot clock with periodic finality.

The contract registry lives on this chain.  Every ``finality_interval``
slots the chain emits a finalized checkpoint carrying a digest and a full
canonical snapshot of registry state; light clients (the arbitration
oracles) only ever read registry state through one of these snapshots.
Trusted checkpoints used for light-client resync are the same data
wrapped with an operator or self-attested signature.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from .keys import Keypair, Point, sign_digest, verify_signature


class DestChainError(Exception):
    pass


@dataclass(frozen=True)
class FinalizedCheckpoint:
    slot: int
    state_digest: str
    timestamp: int

    def encode(self) -> bytes:
        return (
            self.slot.to_bytes(8, "big")
            + bytes.fromhex(self.state_digest)
            + self.timestamp.to_bytes(8, "big")
        )


TO_SIGNER = "token_operator"
AO_SELF_SIGNER = "ao_self_attested"


@dataclass(frozen=True)
class SignedCheckpoint:
    checkpoint: FinalizedCheckpoint
    signer_kind: str  # TO_SIGNER | AO_SELF_SIGNER
    signer_public: Point
    signature: bytes

    def verify(self) -> bool:
        digest = hashlib.sha256(
            b"checkpoint" + self.signer_kind.encode() + self.checkpoint.encode()
        ).digest()
        return verify_signature(self.signer_public, digest, self.signature)


def sign_checkpoint(cp: FinalizedCheckpoint, keypair: Keypair, signer_kind: str) -> SignedCheckpoint:
    if signer_kind not in (TO_SIGNER, AO_SELF_SIGNER):
        raise DestChainError(f"unknown signer kind {signer_kind!r}")
    digest = hashlib.sha256(b"checkpoint" + signer_kind.encode() + cp.encode()).digest()
    return SignedCheckpoint(cp, signer_kind, keypair.public, sign_digest(keypair, digest))


@dataclass
class WspSchedule:
    """Weak subjectivity period as a step function of slot."""

    base: int
    steps: list[tuple[int, int]] = field(default_factory=list)  # (from_slot, wsp)

    def at(self, slot: int) -> int:
        wsp = self.base
        for from_slot, value in sorted(self.steps):
            if slot >= from_slot:
                wsp = value
        return wsp


class DestChain:
    def __init__(
        self,
        registry,
        finality_interval: int = 32,
        wsp_schedule: WspSchedule | None = None,
    ):
        if finality_interval <= 0:
            raise DestChainError("finality interval must be positive")
        self.registry = registry
        self.finality_interval = finality_interval
        self.wsp_schedule = wsp_schedule or WspSchedule(base=1344)
        self.slot = 0
        self.finalized: list[FinalizedCheckpoint] = []
        self.snapshots: dict[int, str] = {}  # finalized slot -> canonical snapshot
        registry.current_slot = 0
        self._finalize_at(0)

    @property
    def wsp_current(self) -> int:
        return self.wsp_schedule.at(self.slot)

    def _finalize_at(self, slot: int) -> FinalizedCheckpoint:
        snapshot = self.registry.export_snapshot()
        digest = hashlib.sha256(snapshot.encode()).hexdigest()
        cp = FinalizedCheckpoint(slot=slot, state_digest=digest, timestamp=slot)
        self.finalized.append(cp)
        self.snapshots[slot] = snapshot
        return cp

    def advance(self, n_slots: int) -> list[FinalizedCheckpoint]:
        """Move the slot clock forward, emitting one finalized checkpoint
        per finality interval crossed."""
        if n_slots < 1:
            raise DestChainError("advance needs at least one slot")
        start = self.slot
        self.slot += n_slots
        self.registry.current_slot = self.slot
        self.registry.apply_due_upgrades()
        new = []
        boundary = (start // self.finality_interval + 1) * self.finality_interval
        while boundary <= self.slot:
            new.append(self._finalize_at(boundary))
            boundary += self.finality_interval
        return new

    def latest_finalized(self) -> FinalizedCheckpoint:
        return self.finalized[-1]

    def snapshot_at(self, cp: FinalizedCheckpoint) -> str:
        try:
            return self.snapshots[cp.slot]
        except KeyError:
            raise DestChainError(f"no snapshot for slot {cp.slot}")
