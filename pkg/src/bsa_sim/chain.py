"""Discrete-block UTXO ledger with script-path spends, relative
timelocks, a height-indexed fee market, and parent+child package
confirmation.

Weight is modeled as input_count + output_count.  A transaction id
commits to inputs (outpoints, path ids, sighash flags) and outputs but
not witnesses, so chained pre-signed transactions can reference each
other before any signature exists.

Signature digests:
  ALL                  sha256 over (all input outpoints, all outputs)
  ALL_ANYONECANPAY     sha256 over (own outpoint, all outputs)

Confirmation rule per block at required feerate ``rate``:
  * a tx with fee >= rate * weight confirms on its own;
  * otherwise, if a mempool child spends its anchor output and
    fee + child_fee >= rate * (weight + child_weight), parent and child
    confirm together (same block, parent first);
  * parents always confirm before children inside a block, and a spend
    of an output confirmed in the same block sees a zero-block delay
    (relative timelocks never pass same-block).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum

from .keys import (
    Point,
    ProtocolAddress,
    SingleAfterDelay,
    TwoOfTwo,
    key_address_id,
    verify_signature,
)


class ChainError(Exception):
    pass


class TxRejected(ChainError):
    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


class UnknownInput(TxRejected):
    def __init__(self, detail: str = ""):
        super().__init__("UnknownInput", detail)


class DoubleSpend(TxRejected):
    def __init__(self, detail: str = ""):
        super().__init__("DoubleSpend", detail)


class MalformedWitness(TxRejected):
    def __init__(self, detail: str = ""):
        super().__init__("MalformedWitness", detail)


class BadSignature(TxRejected):
    def __init__(self, detail: str = ""):
        super().__init__("BadSignature", detail)


class TimelockNotExpired(TxRejected):
    def __init__(self, detail: str = ""):
        super().__init__("TimelockNotExpired", detail)


class UnknownPath(TxRejected):
    def __init__(self, detail: str = ""):
        super().__init__("UnknownPath", detail)


class InvalidValue(TxRejected):
    def __init__(self, detail: str = ""):
        super().__init__("InvalidValue", detail)


class SighashFlag(Enum):
    ALL = "all"
    ALL_ANYONECANPAY = "all_anyonecanpay"


@dataclass(frozen=True)
class Outpoint:
    txid: str
    index: int

    def encode(self) -> bytes:
        return bytes.fromhex(self.txid) + self.index.to_bytes(4, "big")

    def __str__(self) -> str:
        return f"{self.txid}:{self.index}"


@dataclass
class TxInput:
    outpoint: Outpoint
    path_id: str
    flag: SighashFlag = SighashFlag.ALL
    witness: list[bytes] = field(default_factory=list)


@dataclass(frozen=True)
class TxOutput:
    address_id: str
    value: int

    def encode(self) -> bytes:
        addr = self.address_id.encode()
        return len(addr).to_bytes(2, "big") + addr + self.value.to_bytes(8, "big")


@dataclass
class SimTx:
    inputs: list[TxInput]
    outputs: list[TxOutput]
    anchor_index: int | None = None
    _txid: str | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not self.inputs:
            raise InvalidValue("transaction needs at least one input")
        for out in self.outputs:
            if out.value <= 0:
                raise InvalidValue("output values must be positive")
        if self.anchor_index is not None and not (0 <= self.anchor_index < len(self.outputs)):
            raise InvalidValue("anchor marker out of range")

    @property
    def weight(self) -> int:
        return len(self.inputs) + len(self.outputs)

    @property
    def txid(self) -> str:
        if self._txid is None:
            parts = [b"tx", len(self.inputs).to_bytes(2, "big")]
            for inp in self.inputs:
                pid = inp.path_id.encode()
                parts.append(inp.outpoint.encode())
                parts.append(len(pid).to_bytes(2, "big") + pid)
                parts.append(b"\x01" if inp.flag is SighashFlag.ALL_ANYONECANPAY else b"\x00")
            parts.append(len(self.outputs).to_bytes(2, "big"))
            parts.extend(out.encode() for out in self.outputs)
            parts.append(
                b"\xff" if self.anchor_index is None else self.anchor_index.to_bytes(1, "big")
            )
            self._txid = hashlib.sha256(b"".join(parts)).hexdigest()
        return self._txid

    def sighash(self, input_index: int) -> bytes:
        """Digest a signature for the given input commits to."""
        inp = self.inputs[input_index]
        out_blob = b"".join(out.encode() for out in self.outputs)
        if inp.flag is SighashFlag.ALL_ANYONECANPAY:
            return hashlib.sha256(b"sighash-acp" + inp.outpoint.encode() + out_blob).digest()
        in_blob = b"".join(i.outpoint.encode() for i in self.inputs)
        return hashlib.sha256(b"sighash-all" + in_blob + out_blob).digest()

    def output_sum(self) -> int:
        return sum(out.value for out in self.outputs)


@dataclass(frozen=True)
class Utxo:
    outpoint: Outpoint
    value: int
    address_id: str
    confirmed_height: int

    def __post_init__(self):
        if self.value <= 0:
            raise InvalidValue("utxo value must be positive")


@dataclass(frozen=True)
class KeyAddress:
    public: Point

    @property
    def address_id(self) -> str:
        return key_address_id(self.public)


@dataclass
class FeeSchedule:
    """Step function of block height; rate is sats per weight unit."""

    base_rate: int = 1
    steps: list[tuple[int, int]] = field(default_factory=list)  # (from_height, rate)

    def rate_at(self, height: int) -> int:
        rate = self.base_rate
        for from_height, step_rate in sorted(self.steps):
            if height >= from_height:
                rate = step_rate
        return rate


class BtcChain:
    def __init__(self, fee_schedule: FeeSchedule | None = None):
        self.height = 0
        self.fee_schedule = fee_schedule or FeeSchedule()
        self.utxo_set: dict[Outpoint, Utxo] = {}
        self.mempool: dict[str, SimTx] = {}
        self.mempool_arrival: dict[str, int] = {}
        self.addresses: dict[str, ProtocolAddress | KeyAddress] = {}
        self.history: list[tuple[int, SimTx]] = []
        self.tx_index: dict[str, SimTx] = {}
        self.spent_by: dict[Outpoint, str] = {}  # outpoint -> spending txid (confirmed)
        self._seed_counter = 0

    # -- address and utxo management -------------------------------------

    def register_address(self, addr: ProtocolAddress | KeyAddress) -> str:
        self.addresses[addr.address_id] = addr
        return addr.address_id

    def ensure_key_address(self, public: Point) -> str:
        addr = KeyAddress(public)
        self.addresses.setdefault(addr.address_id, addr)
        return addr.address_id

    def seed_utxo(self, address_id: str, value: int) -> Utxo:
        """Grant a fresh unspent output outside transaction validation
        (scenario setup only)."""
        if address_id not in self.addresses:
            raise ChainError(f"unknown address {address_id}")
        self._seed_counter += 1
        marker = hashlib.sha256(f"seed-{self._seed_counter}".encode()).hexdigest()
        utxo = Utxo(Outpoint(marker, 0), value, address_id, self.height)
        self.utxo_set[utxo.outpoint] = utxo
        return utxo

    def balance_of(self, address_id: str) -> int:
        return sum(u.value for u in self.utxo_set.values() if u.address_id == address_id)

    def utxos_at(self, address_id: str) -> list[Utxo]:
        out = [u for u in self.utxo_set.values() if u.address_id == address_id]
        out.sort(key=lambda u: (u.confirmed_height, str(u.outpoint)))
        return out

    # -- input resolution -------------------------------------------------

    def resolve_prevout(self, outpoint: Outpoint) -> tuple[TxOutput, int | None]:
        """Return (prev output, confirmed height or None if in mempool)."""
        utxo = self.utxo_set.get(outpoint)
        if utxo is not None:
            return TxOutput(utxo.address_id, utxo.value), utxo.confirmed_height
        parent = self.mempool.get(outpoint.txid)
        if parent is not None and outpoint.index < len(parent.outputs):
            return parent.outputs[outpoint.index], None
        if outpoint in self.spent_by:
            raise DoubleSpend(f"{outpoint} already spent by {self.spent_by[outpoint]}")
        raise UnknownInput(str(outpoint))

    def tx_fee(self, tx: SimTx) -> int:
        total_in = 0
        for inp in tx.inputs:
            prevout, _ = self.resolve_prevout(inp.outpoint)
            total_in += prevout.value
        return total_in - tx.output_sum()

    # -- witness validation ------------------------------------------------

    def _check_input(self, tx: SimTx, index: int, at_height: int | None) -> None:
        """Validate one input's path, witness, and (when at_height is given)
        relative timelock."""
        inp = tx.inputs[index]
        prevout, conf_height = self.resolve_prevout(inp.outpoint)
        spec = self.addresses.get(prevout.address_id)
        if spec is None:
            raise UnknownPath(f"no spending rules for {prevout.address_id}")
        digest = tx.sighash(index)

        if isinstance(spec, KeyAddress):
            if inp.path_id != "key":
                raise UnknownPath(f"{inp.path_id!r} on key address")
            if len(inp.witness) != 1:
                raise MalformedWitness("key spend needs exactly one signature")
            if not verify_signature(spec.public, digest, inp.witness[0]):
                raise BadSignature(f"input {index} key spend")
            return

        leaf = spec.leaf(inp.path_id)
        if leaf is None:
            raise UnknownPath(f"{inp.path_id!r} not in {spec.kind} tree")
        policy = leaf.policy
        if isinstance(policy, TwoOfTwo):
            if len(inp.witness) != 2:
                raise MalformedWitness("2-of-2 path needs exactly two signatures")
            for sig, key in zip(inp.witness, policy.keys()):
                if not verify_signature(key, digest, sig):
                    raise BadSignature(f"input {index} path {inp.path_id}")
        else:
            if len(inp.witness) != 1:
                raise MalformedWitness("delay path needs exactly one signature")
            if not verify_signature(policy.key, digest, inp.witness[0]):
                raise BadSignature(f"input {index} path {inp.path_id}")
            if at_height is not None:
                effective = conf_height if conf_height is not None else at_height
                if at_height - effective < policy.delay_blocks:
                    raise TimelockNotExpired(
                        f"input {index} needs {policy.delay_blocks} blocks, "
                        f"has {at_height - effective}"
                    )

    # -- mempool -----------------------------------------------------------

    def submit_tx(self, tx: SimTx) -> str:
        """Validate and admit a transaction to the mempool.

        Witness shape and signatures are checked here; relative timelocks
        are only checked at mining time since they can mature later.
        """
        if tx.txid in self.mempool or tx.txid in self.tx_index:
            raise TxRejected("Duplicate", tx.txid)
        spends: set[Outpoint] = set()
        for inp in tx.inputs:
            if inp.outpoint in spends:
                raise DoubleSpend("transaction spends an outpoint twice")
            spends.add(inp.outpoint)
            if inp.outpoint in self.spent_by:
                raise DoubleSpend(str(inp.outpoint))
            for other in self.mempool.values():
                if any(o.outpoint == inp.outpoint for o in other.inputs):
                    raise DoubleSpend(f"{inp.outpoint} already spent in mempool")
        if self.tx_fee(tx) < 0:
            raise InvalidValue("outputs exceed inputs")
        for i in range(len(tx.inputs)):
            self._check_input(tx, i, at_height=None)
        self.mempool[tx.txid] = tx
        self.mempool_arrival[tx.txid] = self.height
        return tx.txid

    def _anchor_child(self, tx: SimTx) -> SimTx | None:
        if tx.anchor_index is None:
            return None
        anchor_op = Outpoint(tx.txid, tx.anchor_index)
        for cand in self.mempool.values():
            if any(inp.outpoint == anchor_op for inp in cand.inputs):
                return cand
        return None

    def _spendable_now(self, tx: SimTx, height: int, in_block: dict[str, SimTx]) -> bool:
        for i, inp in enumerate(tx.inputs):
            utxo = self.utxo_set.get(inp.outpoint)
            if utxo is None:
                parent = in_block.get(inp.outpoint.txid)
                if parent is None or inp.outpoint.index >= len(parent.outputs):
                    return False
            try:
                # same-block parents count as confirmed at this height
                self._check_input_mining(tx, i, height, in_block)
            except TxRejected:
                return False
        return True

    def _check_input_mining(
        self, tx: SimTx, index: int, height: int, in_block: dict[str, SimTx]
    ) -> None:
        inp = tx.inputs[index]
        utxo = self.utxo_set.get(inp.outpoint)
        if utxo is not None:
            prevout = TxOutput(utxo.address_id, utxo.value)
            conf_height = utxo.confirmed_height
        else:
            parent = in_block[inp.outpoint.txid]
            prevout = parent.outputs[inp.outpoint.index]
            conf_height = height
        spec = self.addresses.get(prevout.address_id)
        if spec is None:
            raise UnknownPath(prevout.address_id)
        digest = tx.sighash(index)
        if isinstance(spec, KeyAddress):
            if len(inp.witness) != 1 or not verify_signature(spec.public, digest, inp.witness[0]):
                raise BadSignature("key spend")
            return
        leaf = spec.leaf(inp.path_id)
        if leaf is None:
            raise UnknownPath(inp.path_id)
        policy = leaf.policy
        if isinstance(policy, TwoOfTwo):
            if len(inp.witness) != 2:
                raise MalformedWitness("arity")
            for sig, key in zip(inp.witness, policy.keys()):
                if not verify_signature(key, digest, sig):
                    raise BadSignature(inp.path_id)
        else:
            if len(inp.witness) != 1 or not verify_signature(policy.key, digest, inp.witness[0]):
                raise BadSignature(inp.path_id)
            if height - conf_height < policy.delay_blocks:
                raise TimelockNotExpired(inp.path_id)

    def mine_block(self) -> list[str]:
        """Advance one block, confirming every mempool transaction whose
        own or anchor-package feerate meets the schedule."""
        self.height += 1
        height = self.height
        rate = self.fee_schedule.rate_at(height)
        chosen: list[SimTx] = []
        chosen_map: dict[str, SimTx] = {}
        order = sorted(self.mempool, key=lambda t: (self.mempool_arrival[t], t))

        changed = True
        while changed:
            changed = False
            for txid in order:
                if txid in chosen_map:
                    continue
                tx = self.mempool[txid]
                if not self._spendable_now(tx, height, chosen_map):
                    continue
                fee = self.tx_fee(tx)
                if fee >= rate * tx.weight:
                    chosen.append(tx)
                    chosen_map[txid] = tx
                    changed = True
                    continue
                child = self._anchor_child(tx)
                if child is not None and child.txid not in chosen_map:
                    trial = dict(chosen_map)
                    trial[txid] = tx
                    if self._spendable_now(child, height, trial):
                        pkg_fee = fee + self.tx_fee(child)
                        pkg_weight = tx.weight + child.weight
                        if pkg_fee >= rate * pkg_weight:
                            chosen.append(tx)
                            chosen_map[txid] = tx
                            chosen.append(child)
                            chosen_map[child.txid] = child
                            changed = True

        for tx in chosen:
            for inp in tx.inputs:
                self.utxo_set.pop(inp.outpoint, None)
                self.spent_by[inp.outpoint] = tx.txid
            for i, out in enumerate(tx.outputs):
                op = Outpoint(tx.txid, i)
                self.utxo_set[op] = Utxo(op, out.value, out.address_id, height)
            del self.mempool[tx.txid]
            del self.mempool_arrival[tx.txid]
            self.history.append((height, tx))
            self.tx_index[tx.txid] = tx

        # drop mempool entries that now conflict with a confirmed spend
        stale = [
            txid
            for txid, tx in self.mempool.items()
            if any(inp.outpoint in self.spent_by for inp in tx.inputs)
        ]
        for txid in stale:
            del self.mempool[txid]
            del self.mempool_arrival[txid]

        return [tx.txid for tx in chosen]

    def confirmed_at(self, height: int) -> list[SimTx]:
        return [tx for h, tx in self.history if h == height]

    def confirmations(self, txid: str) -> int:
        for h, tx in self.history:
            if tx.txid == txid:
                return self.height - h + 1
        return 0


def verify_spend(tx: SimTx, chain: BtcChain, at_height: int | None = None) -> bool:
    """Check all inputs of ``tx`` against the chain's spending rules at the
    given height (default: next block).  Raises a TxRejected subclass on
    the first violated rule; returns True when every input is valid."""
    height = chain.height + 1 if at_height is None else at_height
    for i in range(len(tx.inputs)):
        chain._check_input(tx, i, at_height=height)
    if chain.tx_fee(tx) < 0:
        raise InvalidValue("outputs exceed inputs")
    return True
