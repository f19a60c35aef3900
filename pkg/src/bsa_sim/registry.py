"""Smart-contract registry on the destination chain.

Tracks one record per deposited UTXO (status lifecycle below), the token
ledger for the wrapped asset, perimeter adapters used for imbalance
detection, approved enclave version expiries, and timelock parameters
with delayed governance upgrades.

Status lifecycle (any other transition is refused):

    Registered --(operator, on mint)--> Active
    Registered --(owner, pre-mint exit)--> Rejected
    Active     --(owner, full burn)--> Withdrawn
    Active     --(operator, imbalance > 0 via mark_rebalance)--> SpentOnRebalance

``mark_rebalance`` is the only path into SpentOnRebalance: the contract
itself checks the claimed imbalance against balances it can see, so the
status is trustworthy for third parties.  Timelock units: t1 and t2 are
Bitcoin blocks, t3 is destination-chain slots; ``slots_per_block``
converts when the three are compared.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum

from .keys import Point, TweakData, decode_point, verify_signature


class RegistryError(Exception):
    pass


class DuplicateOutpoint(RegistryError):
    pass


class MissingPsbt(RegistryError):
    pass


class NotTO(RegistryError):
    pass


class NoImbalance(RegistryError):
    pass


class NotAPermutation(RegistryError):
    pass


class UnauthorizedTransition(RegistryError):
    pass


class SignatureInvalid(RegistryError):
    pass


class TimelockRelationViolated(RegistryError):
    pass


class UnknownRecord(RegistryError):
    pass


class LedgerError(RegistryError):
    pass


class UtxoStatus(Enum):
    REGISTERED = "registered"
    ACTIVE = "active"
    WITHDRAWN = "withdrawn"
    REJECTED = "rejected"
    SPENT_ON_REBALANCE = "spent_on_rebalance"


# transitions the generic status setter accepts: (from, to) -> caller rule
_ALLOWED_TRANSITIONS = {
    (UtxoStatus.REGISTERED, UtxoStatus.ACTIVE): "to",
    (UtxoStatus.REGISTERED, UtxoStatus.REJECTED): "owner",
    (UtxoStatus.ACTIVE, UtxoStatus.WITHDRAWN): "owner",
}

# the three stored rows that protect the depositor / enable arbitration
REQUIRED_PSBT_SLOTS = ("unbond_request", "unbond_resolve", "rebalance_resolve")


@dataclass
class UtxoRecord:
    outpoint: str  # "txid:index"
    owner: str  # destination-chain account of the depositor
    amount: int
    status: UtxoStatus
    tweak_digest: str
    psbts: dict[str, str] = field(default_factory=dict)  # transition -> canonical text
    rebalance_position: int = 0  # registration order within the owner's records

    def to_dict(self) -> dict:
        return {
            "outpoint": self.outpoint,
            "owner": self.owner,
            "amount": self.amount,
            "status": self.status.value,
            "tweak_digest": self.tweak_digest,
            "psbts": dict(sorted(self.psbts.items())),
            "rebalance_position": self.rebalance_position,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "UtxoRecord":
        return cls(
            outpoint=d["outpoint"],
            owner=d["owner"],
            amount=d["amount"],
            status=UtxoStatus(d["status"]),
            tweak_digest=d["tweak_digest"],
            psbts=dict(d["psbts"]),
            rebalance_position=d["rebalance_position"],
        )


@dataclass
class Adapter:
    adapter_id: str
    registered_at: int
    removal_effective_at: int | None = None
    balances: dict[str, int] = field(default_factory=dict)

    def in_perimeter(self, slot: int) -> bool:
        if slot < self.registered_at:
            return False
        return self.removal_effective_at is None or slot < self.removal_effective_at

    def balance_of(self, owner: str) -> int:
        return self.balances.get(owner, 0)


@dataclass
class RebalanceEvent:
    slot: int
    owner: str
    delta: int
    selected: list[tuple[str, int]]  # (outpoint, amount)
    over_seizure: int

    def to_dict(self) -> dict:
        return {
            "slot": self.slot,
            "owner": self.owner,
            "delta": self.delta,
            "selected": [list(s) for s in self.selected],
            "over_seizure": self.over_seizure,
        }


class TokenLedger:
    """Account-model ledger for the wrapped token."""

    def __init__(self):
        self.balances: dict[str, int] = {}
        self.total_minted = 0
        self.total_burned = 0
        self.log: list[dict] = []

    def balance(self, account: str) -> int:
        return self.balances.get(account, 0)

    def mint(self, account: str, amount: int) -> None:
        if amount <= 0:
            raise LedgerError("mint amount must be positive")
        self.balances[account] = self.balance(account) + amount
        self.total_minted += amount
        self.log.append({"op": "mint", "account": account, "amount": amount})

    def burn(self, account: str, amount: int) -> None:
        if amount <= 0:
            raise LedgerError("burn amount must be positive")
        if self.balance(account) < amount:
            raise LedgerError("insufficient balance to burn")
        self.balances[account] -= amount
        self.total_burned += amount
        self.log.append({"op": "burn", "account": account, "amount": amount})

    def transfer(self, src: str, dst: str, amount: int) -> None:
        if amount <= 0:
            raise LedgerError("transfer amount must be positive")
        if self.balance(src) < amount:
            raise LedgerError("insufficient balance")
        self.balances[src] -= amount
        self.balances[dst] = self.balance(dst) + amount
        self.log.append({"op": "transfer", "src": src, "dst": dst, "amount": amount})

    def outstanding(self) -> int:
        return self.total_minted - self.total_burned


def timelock_relation_holds(t1_blocks: int, t2_blocks: int, t3_slots: int, slots_per_block: int) -> bool:
    """Governance delay must strictly dominate the dispute window."""
    return t3_slots > (t1_blocks + t2_blocks) * slots_per_block


class Registry:
    def __init__(
        self,
        t1: int,
        t2: int,
        t3: int,
        slots_per_block: int,
        to_pubkey: Point,
        enforce_timelock_relation: bool = True,
    ):
        if min(t1, t2, t3, slots_per_block) <= 0:
            raise TimelockRelationViolated("timelock parameters must be positive")
        if enforce_timelock_relation and not timelock_relation_holds(t1, t2, t3, slots_per_block):
            raise TimelockRelationViolated(
                f"t3={t3} slots must exceed (t1+t2)={t1 + t2} blocks "
                f"* {slots_per_block} slots/block"
            )
        self.t1 = t1
        self.t2 = t2
        self.t3 = t3
        self.slots_per_block = slots_per_block
        self.to_pubkey = to_pubkey
        self.current_slot = 0
        self.records: dict[str, UtxoRecord] = {}
        self.tweaks: dict[str, dict] = {}  # digest -> TweakData.to_dict()
        self.orders: dict[str, list[int]] = {}  # owner -> permutation
        self.adapters: dict[str, Adapter] = {}
        self.versions: dict[str, tuple[int, str]] = {}  # pcr0 -> (expiry slot, sig hex)
        self.pending_upgrades: list[tuple[dict, int]] = []  # (change, effective slot)
        self.ledger = TokenLedger()
        self.claimable: dict[str, int] = {}  # owner -> over-seizure owed
        self.claim_paid: dict[str, int] = {}
        self.rebalance_events: list[RebalanceEvent] = []
        self.collaborative_pending: dict[str, int] = {}  # outpoint -> deadline block
        self._position_counter: dict[str, int] = {}  # owner -> next registration index

    # -- parameter helpers -------------------------------------------------

    def dispute_window_slots(self) -> int:
        return (self.t1 + self.t2) * self.slots_per_block

    # -- deposits ------------------------------------------------------------

    def store_tweak_data(self, tweak_data: TweakData) -> str:
        digest = tweak_data.digest_hex()
        self.tweaks[digest] = tweak_data.to_dict()
        return digest

    def get_tweak_data(self, digest: str) -> TweakData:
        if digest not in self.tweaks:
            raise UnknownRecord(f"no tweak data {digest}")
        return TweakData.from_dict(self.tweaks[digest])

    def register_deposit(self, record: UtxoRecord, caller: str = "to") -> None:
        if record.outpoint in self.records:
            raise DuplicateOutpoint(record.outpoint)
        if record.status is not UtxoStatus.REGISTERED:
            raise UnauthorizedTransition("new records start as Registered")
        missing = [slot for slot in REQUIRED_PSBT_SLOTS if slot not in record.psbts]
        if missing:
            raise MissingPsbt(", ".join(missing))
        if record.tweak_digest not in self.tweaks:
            raise UnknownRecord("tweak data must be stored before registering")
        record.rebalance_position = self._next_position(record.owner)
        self.records[record.outpoint] = record

    def _next_position(self, owner: str) -> int:
        position = self._position_counter.get(owner, 0)
        self._position_counter[owner] = position + 1
        return position

    def get_record(self, outpoint: str) -> UtxoRecord:
        if outpoint not in self.records:
            raise UnknownRecord(outpoint)
        return self.records[outpoint]

    def get_stored_psbt(self, outpoint: str, transition: str) -> str | None:
        return self.get_record(outpoint).psbts.get(transition)

    def activate_on_mint(self, outpoint: str, caller: str) -> None:
        """Operator flips Registered -> Active and mints the wrapped amount
        to the owner's destination account."""
        if caller != "to":
            raise NotTO(caller)
        record = self.get_record(outpoint)
        if record.status is not UtxoStatus.REGISTERED:
            raise UnauthorizedTransition(f"{record.status.value} -> active")
        record.status = UtxoStatus.ACTIVE
        self.ledger.mint(record.owner, record.amount)

    def set_utxo_status(self, outpoint: str, new_status: UtxoStatus, caller: str) -> None:
        record = self.get_record(outpoint)
        rule = _ALLOWED_TRANSITIONS.get((record.status, new_status))
        if rule is None:
            raise UnauthorizedTransition(f"{record.status.value} -> {new_status.value}")
        if rule == "to" and caller != "to":
            raise UnauthorizedTransition(f"{new_status.value} requires the operator")
        if rule == "owner" and caller != record.owner:
            raise UnauthorizedTransition(f"{new_status.value} requires the owner")
        record.status = new_status

    def burn_deposit(self, outpoint: str, caller: str) -> None:
        """Full per-UTXO burn: burns exactly the record amount and flips the
        record to Withdrawn.  Smaller burns via the ledger never change
        status."""
        record = self.get_record(outpoint)
        if caller != record.owner:
            raise UnauthorizedTransition("only the owner can burn for exit")
        if record.status is not UtxoStatus.ACTIVE:
            raise UnauthorizedTransition(f"burn on {record.status.value} record")
        self.ledger.burn(record.owner, record.amount)
        record.status = UtxoStatus.WITHDRAWN

    def reject_deposit(self, outpoint: str, caller: str) -> None:
        self.set_utxo_status(outpoint, UtxoStatus.REJECTED, caller)

    # -- imbalance and rebalancing ------------------------------------------

    def active_records(self, owner: str) -> list[UtxoRecord]:
        records = [
            r
            for r in self.records.values()
            if r.owner == owner and r.status is UtxoStatus.ACTIVE
        ]
        records.sort(key=lambda r: r.rebalance_position)
        return records

    def perimeter_balance(self, owner: str) -> tuple[int, int]:
        personal = self.ledger.balance(owner)
        defi = sum(
            a.balance_of(owner)
            for a in self.adapters.values()
            if a.in_perimeter(self.current_slot)
        )
        return personal, defi

    def detect_imbalance(self, owner: str) -> int:
        deposited = sum(r.amount for r in self.active_records(owner))
        personal, defi = self.perimeter_balance(owner)
        return max(0, deposited - (defi + personal))

    def set_rebalance_order(self, owner: str, permutation: list[int], caller: str) -> None:
        if caller != owner:
            raise UnauthorizedTransition("only the owner orders their own deposits")
        if sorted(permutation) != list(range(len(permutation))):
            raise NotAPermutation(str(permutation))
        self.orders[owner] = list(permutation)

    def ordered_active_records(self, owner: str) -> list[UtxoRecord]:
        records = self.active_records(owner)
        perm = self.orders.get(owner)
        if perm is None or len(perm) != len(records):
            # stale or absent permutation: registration order applies
            return records
        return [records[i] for i in perm]

    def select_for_rebalance(self, owner: str, delta: int) -> list[UtxoRecord]:
        """Shortest prefix of the owner-ordered active records whose sum
        covers delta."""
        selected: list[UtxoRecord] = []
        covered = 0
        for record in self.ordered_active_records(owner):
            selected.append(record)
            covered += record.amount
            if covered >= delta:
                return selected
        return selected

    def mark_rebalance(self, owner: str, delta: int, caller: str) -> RebalanceEvent:
        if caller != "to":
            raise NotTO(caller)
        if delta <= 0:
            raise NoImbalance("delta must be positive")
        if delta > self.detect_imbalance(owner):
            raise NoImbalance(f"claimed {delta}, observed {self.detect_imbalance(owner)}")
        selected = self.select_for_rebalance(owner, delta)
        total = sum(r.amount for r in selected)
        for record in selected:
            record.status = UtxoStatus.SPENT_ON_REBALANCE
        over = total - delta
        if over > 0:
            self.claimable[owner] = self.claimable.get(owner, 0) + over
        event = RebalanceEvent(
            slot=self.current_slot,
            owner=owner,
            delta=delta,
            selected=[(r.outpoint, r.amount) for r in selected],
            over_seizure=over,
        )
        self.rebalance_events.append(event)
        return event

    def record_claim_paid(self, owner: str, amount: int) -> None:
        owed = self.claimable.get(owner, 0)
        if amount <= 0 or amount > owed:
            raise RegistryError(f"claim payment {amount} vs owed {owed}")
        self.claimable[owner] = owed - amount
        self.claim_paid[owner] = self.claim_paid.get(owner, 0) + amount

    def request_collaborative(self, outpoint: str, deadline_block: int, caller: str) -> None:
        if caller != "to":
            raise NotTO(caller)
        self.get_record(outpoint)
        self.collaborative_pending[outpoint] = deadline_block

    def resplit_deposit(
        self,
        old_outpoint: str,
        new_records: list[UtxoRecord],
        caller: str,
    ) -> None:
        """Replace one active record with records for its split parts
        (cooperative rebalance).  Minted supply is untouched: the deposit
        merely changed outpoints, so the new records activate directly."""
        if caller != "to":
            raise NotTO(caller)
        old = self.get_record(old_outpoint)
        if old.status is not UtxoStatus.ACTIVE:
            raise UnauthorizedTransition("only active records can be resplit")
        if old_outpoint not in self.collaborative_pending:
            raise UnauthorizedTransition("no pending cooperative rebalance")
        if sum(r.amount for r in new_records) > old.amount:
            raise RegistryError("split exceeds the original amount")
        del self.records[old_outpoint]
        del self.collaborative_pending[old_outpoint]
        for record in new_records:
            if record.outpoint in self.records:
                raise DuplicateOutpoint(record.outpoint)
            missing = [s for s in REQUIRED_PSBT_SLOTS if s not in record.psbts]
            if missing:
                raise MissingPsbt(", ".join(missing))
            record.status = UtxoStatus.ACTIVE
            record.rebalance_position = self._next_position(record.owner)
            self.records[record.outpoint] = record

    # -- adapters --------------------------------------------------------------

    def adapter_admin(self, action: str, adapter_id: str, caller: str) -> None:
        if caller != "to":
            raise NotTO(caller)
        if action == "add":
            if adapter_id in self.adapters:
                raise RegistryError(f"adapter {adapter_id} already registered")
            self.adapters[adapter_id] = Adapter(adapter_id, registered_at=self.current_slot)
        elif action == "remove":
            adapter = self.adapters.get(adapter_id)
            if adapter is None:
                raise RegistryError(f"no adapter {adapter_id}")
            adapter.removal_effective_at = self.current_slot + self.t3
        else:
            raise RegistryError(f"unknown adapter action {action!r}")

    # -- enclave versions --------------------------------------------------------

    @staticmethod
    def version_payload(pcr0: str, expiry: int) -> bytes:
        return hashlib.sha256(
            b"version" + bytes.fromhex(pcr0) + expiry.to_bytes(8, "big")
        ).digest()

    def set_version_expiry(self, pcr0: str, expiry: int, signature: bytes) -> None:
        if not verify_signature(self.to_pubkey, self.version_payload(pcr0, expiry), signature):
            raise SignatureInvalid("version expiry needs a valid operator signature")
        self.versions[pcr0] = (expiry, signature.hex())

    def get_version_expiry(self, pcr0: str) -> int | None:
        entry = self.versions.get(pcr0)
        return entry[0] if entry else None

    # -- governance upgrades ---------------------------------------------------

    def schedule_upgrade(self, change: dict, caller: str) -> int:
        """Queue a parameter change; it becomes effective t3 slots from now.
        Timelock changes must keep the dispute/governance relation valid."""
        if caller != "to":
            raise NotTO(caller)
        t1 = change.get("t1", self.t1)
        t2 = change.get("t2", self.t2)
        t3 = change.get("t3", self.t3)
        if min(t1, t2, t3) <= 0 or not timelock_relation_holds(t1, t2, t3, self.slots_per_block):
            raise TimelockRelationViolated(str(change))
        effective_at = self.current_slot + self.t3
        self.pending_upgrades.append((dict(change), effective_at))
        return effective_at

    def apply_due_upgrades(self) -> None:
        still_pending = []
        for change, effective_at in self.pending_upgrades:
            if self.current_slot >= effective_at:
                self.t1 = change.get("t1", self.t1)
                self.t2 = change.get("t2", self.t2)
                self.t3 = change.get("t3", self.t3)
            else:
                still_pending.append((change, effective_at))
        self.pending_upgrades = still_pending

    # -- canonical snapshot ---------------------------------------------------

    def to_state_dict(self) -> dict:
        return {
            "params": {
                "t1": self.t1,
                "t2": self.t2,
                "t3": self.t3,
                "slots_per_block": self.slots_per_block,
            },
            "to_pubkey": self.to_pubkey.compressed().hex(),
            "current_slot": self.current_slot,
            "records": {k: self.records[k].to_dict() for k in sorted(self.records)},
            "tweaks": {k: self.tweaks[k] for k in sorted(self.tweaks)},
            "orders": {k: self.orders[k] for k in sorted(self.orders)},
            "adapters": {
                k: {
                    "adapter_id": a.adapter_id,
                    "registered_at": a.registered_at,
                    "removal_effective_at": a.removal_effective_at,
                    "balances": dict(sorted(a.balances.items())),
                }
                for k, a in sorted(self.adapters.items())
            },
            "versions": {k: list(self.versions[k]) for k in sorted(self.versions)},
            "pending_upgrades": self.pending_upgrades,
            "ledger": {
                "balances": dict(sorted(self.ledger.balances.items())),
                "total_minted": self.ledger.total_minted,
                "total_burned": self.ledger.total_burned,
                "log": self.ledger.log,
            },
            "claimable": dict(sorted(self.claimable.items())),
            "claim_paid": dict(sorted(self.claim_paid.items())),
            "rebalance_events": [e.to_dict() for e in self.rebalance_events],
            "collaborative_pending": dict(sorted(self.collaborative_pending.items())),
        }

    def export_snapshot(self) -> str:
        return json.dumps(self.to_state_dict(), sort_keys=True, separators=(",", ":"))

    def state_digest(self) -> str:
        return hashlib.sha256(self.export_snapshot().encode()).hexdigest()

    @classmethod
    def import_snapshot(cls, snapshot: str) -> "Registry":
        d = json.loads(snapshot)
        params = d["params"]
        reg = cls(
            t1=params["t1"],
            t2=params["t2"],
            t3=params["t3"],
            slots_per_block=params["slots_per_block"],
            to_pubkey=decode_point(bytes.fromhex(d["to_pubkey"])),
            enforce_timelock_relation=False,
        )
        reg.current_slot = d["current_slot"]
        reg.records = {k: UtxoRecord.from_dict(v) for k, v in d["records"].items()}
        for rec in reg.records.values():
            nxt = reg._position_counter.get(rec.owner, 0)
            reg._position_counter[rec.owner] = max(nxt, rec.rebalance_position + 1)
        reg.tweaks = dict(d["tweaks"])
        reg.orders = {k: list(v) for k, v in d["orders"].items()}
        for k, a in d["adapters"].items():
            reg.adapters[k] = Adapter(
                adapter_id=a["adapter_id"],
                registered_at=a["registered_at"],
                removal_effective_at=a["removal_effective_at"],
                balances=dict(a["balances"]),
            )
        reg.versions = {k: (v[0], v[1]) for k, v in d["versions"].items()}
        reg.pending_upgrades = [(dict(c), e) for c, e in d["pending_upgrades"]]
        reg.ledger.balances = dict(d["ledger"]["balances"])
        reg.ledger.total_minted = d["ledger"]["total_minted"]
        reg.ledger.total_burned = d["ledger"]["total_burned"]
        reg.ledger.log = list(d["ledger"]["log"])
        reg.claimable = dict(d["claimable"])
        reg.claim_paid = dict(d["claim_paid"])
        reg.rebalance_events = [
            RebalanceEvent(
                slot=e["slot"],
                owner=e["owner"],
                delta=e["delta"],
                selected=[tuple(s) for s in e["selected"]],
                over_seizure=e["over_seizure"],
            )
            for e in d["rebalance_events"]
        ]
        reg.collaborative_pending = dict(d["collaborative_pending"])
        return reg
