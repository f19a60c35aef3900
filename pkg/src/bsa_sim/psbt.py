"""Covenant emulation: pre-signed transaction templates, the deposit
setup ceremony, and the fee machinery (anchor children, appended fee
inputs).

Transition catalog (source -> destination, who signs, who executes,
how fees are topped up):

  unbond_request             VA  -> UTA        TO & Dep   exec Dep   anchor
  unbond_finalize            UTA -> Dep        Dep alone (after t1)  self
  unbond_challenge           UTA -> UCA        Dep & TO   exec TO    anchor
  unbond_resolve             UCA -> Dep        Dep & AO   exec AO    acp fee input
  unbond_resolve_expired     UCA -> TO         TO alone (after t2)   self
  rebalance_request          VA  -> RCA        Dep & TO   exec TO    anchor
  rebalance_resolve          RCA -> Dep        Dep & AO   exec AO    acp fee input
  rebalance_resolve_expired  RCA -> TO         TO alone (after t2)   self
  cooperative_unbond         VA  -> Dep        TO & Dep   exec Dep   anchor
  resplit                    VA  -> VA + VA    Dep & TO   exec TO    none

Templates commit the exact input value minus a creator-chosen base fee
(default 1 sat per weight unit).  Rows executed by an arbitration oracle
carry ANYONECANPAY|ALL signatures so a fee input can be appended without
re-signing; multi-party rows carry an anchor output at a configurable
dust value, spendable by the executor for child-pays-for-parent bumps.
A template's transaction id never covers witnesses, which is what lets
the ceremony chain templates off unbroadcast parents.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

from .attestation import Attestation, MockAttestationAuthority
from .chain import (
    BtcChain,
    Outpoint,
    SighashFlag,
    SimTx,
    TxInput,
    TxOutput,
    Utxo,
)
from .keys import (
    InstanceAddresses,
    Keypair,
    Point,
    TweakData,
    build_protocol_addresses,
    key_address_id,
    sign_digest,
    verify_signature,
)
from .registry import (
    Registry,
    TimelockRelationViolated,
    UtxoRecord,
    UtxoStatus,
    timelock_relation_holds,
)

DEFAULT_BASE_FEE_RATE = 1  # sats per weight unit committed at template time
DEFAULT_ANCHOR_VALUE = 330  # dust value carried by anchor outputs


class PsbtError(Exception):
    pass


class UnknownTransition(PsbtError):
    pass


class WrongSourceAddress(PsbtError):
    pass


class NotASigner(PsbtError):
    pass


class AlreadySigned(PsbtError):
    pass


class MissingCounterpartySig(PsbtError):
    pass


class FlagViolation(PsbtError):
    pass


class NoAnchor(PsbtError):
    pass


class InsufficientFunds(PsbtError):
    pass


class VerificationFailed(PsbtError):
    pass


class BadSplit(PsbtError):
    pass


class Transition(Enum):
    UNBOND_REQUEST = "unbond_request"
    UNBOND_FINALIZE = "unbond_finalize"
    UNBOND_CHALLENGE = "unbond_challenge"
    UNBOND_RESOLVE = "unbond_resolve"
    UNBOND_RESOLVE_EXPIRED = "unbond_resolve_expired"
    REBALANCE_REQUEST = "rebalance_request"
    REBALANCE_RESOLVE = "rebalance_resolve"
    REBALANCE_RESOLVE_EXPIRED = "rebalance_resolve_expired"
    COOPERATIVE_UNBOND = "cooperative_unbond"
    RESPLIT = "resplit"


@dataclass(frozen=True)
class TransitionSpec:
    source: str  # address kind the spent output must sit on
    dest: str  # "uta"|"uca"|"rca"|"va"|"dep_return"|"to_key"
    path: str  # leaf id; "dep_ao_*" resolves to the executing oracle's leaf
    signers: tuple[str, ...]  # roles that must sign ("dep"|"to"|"ao")
    creator: str | None
    stored_on: str | None  # "sar" | "to" | None
    executor: str  # "dep"|"to"|"ao"
    fee_mode: str  # "anchor"|"acp"|"self"|"none"


TRANSITION_SPECS: dict[Transition, TransitionSpec] = {
    Transition.UNBOND_REQUEST: TransitionSpec(
        "VA", "uta", "dep_to", ("to", "dep"), "to", "sar", "dep", "anchor"
    ),
    Transition.UNBOND_FINALIZE: TransitionSpec(
        "UTA", "dep_return", "dep_delay", ("dep",), None, None, "dep", "self"
    ),
    Transition.UNBOND_CHALLENGE: TransitionSpec(
        "UTA", "uca", "dep_to", ("dep", "to"), "dep", "to", "to", "anchor"
    ),
    Transition.UNBOND_RESOLVE: TransitionSpec(
        "UCA", "dep_return", "dep_ao_*", ("dep", "ao"), "dep", "sar", "ao", "acp"
    ),
    Transition.UNBOND_RESOLVE_EXPIRED: TransitionSpec(
        "UCA", "to_key", "to_delay", ("to",), None, None, "to", "self"
    ),
    Transition.REBALANCE_REQUEST: TransitionSpec(
        "VA", "rca", "dep_to", ("dep", "to"), "dep", "to", "to", "anchor"
    ),
    Transition.REBALANCE_RESOLVE: TransitionSpec(
        "RCA", "dep_return", "dep_ao_*", ("dep", "ao"), "dep", "sar", "ao", "acp"
    ),
    Transition.REBALANCE_RESOLVE_EXPIRED: TransitionSpec(
        "RCA", "to_key", "to_delay", ("to",), None, None, "to", "self"
    ),
    Transition.COOPERATIVE_UNBOND: TransitionSpec(
        "VA", "dep_return", "dep_to", ("to", "dep"), "to", None, "dep", "anchor"
    ),
    Transition.RESPLIT: TransitionSpec(
        "VA", "va", "dep_to", ("dep", "to"), "to", None, "to", "none"
    ),
}


@dataclass
class PsbtTemplate:
    transition: Transition
    outpoint: Outpoint
    input_value: int
    path_id: str
    flag: SighashFlag
    outputs: list[TxOutput]
    anchor_index: int | None
    creator: str | None
    intended_executor: str
    partial_sigs: dict[str, bytes] = field(default_factory=dict)  # pubkey hex -> sig

    def skeleton(self) -> SimTx:
        return SimTx(
            inputs=[TxInput(self.outpoint, self.path_id, self.flag)],
            outputs=list(self.outputs),
            anchor_index=self.anchor_index,
        )

    @property
    def txid(self) -> str:
        return self.skeleton().txid

    def sighash(self) -> bytes:
        return self.skeleton().sighash(0)

    @property
    def fee(self) -> int:
        return self.input_value - sum(o.value for o in self.outputs)

    def main_output(self) -> TxOutput:
        for i, out in enumerate(self.outputs):
            if i != self.anchor_index:
                return out
        raise PsbtError("template has no main output")

    def to_text(self) -> str:
        return json.dumps(
            {
                "transition": self.transition.value,
                "outpoint": [self.outpoint.txid, self.outpoint.index],
                "input_value": self.input_value,
                "path_id": self.path_id,
                "flag": self.flag.value,
                "outputs": [[o.address_id, o.value] for o in self.outputs],
                "anchor_index": self.anchor_index,
                "creator": self.creator,
                "intended_executor": self.intended_executor,
                "partial_sigs": {
                    k: v.hex() for k, v in sorted(self.partial_sigs.items())
                },
            },
            sort_keys=True,
            separators=(",", ":"),
        )

    @classmethod
    def from_text(cls, text: str) -> "PsbtTemplate":
        d = json.loads(text)
        return cls(
            transition=Transition(d["transition"]),
            outpoint=Outpoint(d["outpoint"][0], d["outpoint"][1]),
            input_value=d["input_value"],
            path_id=d["path_id"],
            flag=SighashFlag(d["flag"]),
            outputs=[TxOutput(a, v) for a, v in d["outputs"]],
            anchor_index=d["anchor_index"],
            creator=d["creator"],
            intended_executor=d["intended_executor"],
            partial_sigs={k: bytes.fromhex(v) for k, v in d["partial_sigs"].items()},
        )


@dataclass
class ProtocolInstance:
    """Everything public about one live deposit arrangement."""

    tweak_data: TweakData
    addresses: InstanceAddresses
    owner: str  # depositor's destination-chain account
    return_address_id: str
    to_key_address_id: str
    funding_txid: str
    deposits: dict[str, int]  # outpoint str -> value
    to_psbts: dict[str, dict[Transition, PsbtTemplate]]  # operator-held rows
    base_fee_rate: int = DEFAULT_BASE_FEE_RATE
    anchor_value: int = DEFAULT_ANCHOR_VALUE

    def address_kind_of(self, address_id: str) -> str | None:
        for addr in self.addresses.all():
            if addr.address_id == address_id:
                return addr.kind
        return None


def _role_pubkeys(tweak_data: TweakData, role: str) -> tuple[Point, ...]:
    if role == "dep":
        return (tweak_data.dep_pk,)
    if role == "to":
        return (tweak_data.to_pk,)
    if role == "ao":
        return tweak_data.ao_pks
    raise UnknownTransition(f"unknown role {role!r}")


def _dest_address_id(spec: TransitionSpec, instance_like) -> str:
    mapping = {
        "uta": instance_like.addresses.uta.address_id,
        "uca": instance_like.addresses.uca.address_id,
        "rca": instance_like.addresses.rca.address_id,
        "va": instance_like.addresses.va.address_id,
        "dep_return": instance_like.return_address_id,
        "to_key": instance_like.to_key_address_id,
    }
    return mapping[spec.dest]


def _executor_key_address(spec: TransitionSpec, instance_like) -> str:
    if spec.executor == "dep":
        return instance_like.return_address_id
    return instance_like.to_key_address_id


def build_psbt(
    transition: Transition,
    instance: ProtocolInstance,
    utxo: Utxo | tuple[Outpoint, int],
    value_split: list[int] | None = None,
    fee: int | None = None,
) -> PsbtTemplate:
    """Construct an unsigned template for one transition spending ``utxo``.

    The committed outputs are the transition's destination address for
    the full input value minus the base fee (and minus the anchor dust
    when the row carries an anchor).  ``value_split`` puts several main
    outputs at the destination address instead of one.
    """
    spec = TRANSITION_SPECS.get(transition)
    if spec is None:
        raise UnknownTransition(str(transition))
    if isinstance(utxo, Utxo):
        outpoint, value, source_addr = utxo.outpoint, utxo.value, utxo.address_id
    else:
        outpoint, value = utxo
        source_addr = instance.addresses.by_kind(spec.source).address_id
    expected_source = instance.addresses.by_kind(spec.source).address_id
    if source_addr != expected_source:
        raise WrongSourceAddress(f"{transition.value} must spend the {spec.source}")

    dest = _dest_address_id(spec, instance)
    has_anchor = spec.fee_mode == "anchor"
    n_main = len(value_split) if value_split else 1
    weight = 1 + n_main + (1 if has_anchor else 0)
    if fee is None:
        fee = instance.base_fee_rate * weight
    anchor_value = instance.anchor_value if has_anchor else 0

    if value_split is not None:
        if sum(value_split) != value - fee - anchor_value:
            raise BadSplit(
                f"split {value_split} must sum to {value - fee - anchor_value}"
            )
        main_values = list(value_split)
    else:
        main_values = [value - fee - anchor_value]
    if any(v <= 0 for v in main_values):
        raise InsufficientFunds(f"{transition.value} on value {value} leaves no output")

    outputs = [TxOutput(dest, v) for v in main_values]
    anchor_index = None
    if has_anchor:
        outputs.append(TxOutput(_executor_key_address(spec, instance), anchor_value))
        anchor_index = len(outputs) - 1

    flag = SighashFlag.ALL_ANYONECANPAY if spec.fee_mode == "acp" else SighashFlag.ALL
    return PsbtTemplate(
        transition=transition,
        outpoint=outpoint,
        input_value=value,
        path_id=spec.path,
        flag=flag,
        outputs=outputs,
        anchor_index=anchor_index,
        creator=spec.creator,
        intended_executor=spec.executor,
    )


def allowed_signers(psbt: PsbtTemplate, tweak_data: TweakData) -> list[Point]:
    spec = TRANSITION_SPECS[psbt.transition]
    keys: list[Point] = []
    for role in spec.signers:
        keys.extend(_role_pubkeys(tweak_data, role))
    return keys


def sign_psbt(psbt: PsbtTemplate, keypair: Keypair, tweak_data: TweakData) -> None:
    if all(keypair.public != pk for pk in allowed_signers(psbt, tweak_data)):
        raise NotASigner(f"{keypair.public_hex[:16]}... on {psbt.transition.value}")
    if keypair.public_hex in psbt.partial_sigs:
        raise AlreadySigned(psbt.transition.value)
    psbt.partial_sigs[keypair.public_hex] = sign_digest(keypair, psbt.sighash())


def verify_partial_sigs(psbt: PsbtTemplate, tweak_data: TweakData) -> bool:
    """Every stored partial signature must verify against a signer key."""
    digest = psbt.sighash()
    allowed = {pk.compressed().hex(): pk for pk in allowed_signers(psbt, tweak_data)}
    if not psbt.partial_sigs:
        return False
    for pub_hex, sig in psbt.partial_sigs.items():
        pk = allowed.get(pub_hex)
        if pk is None or not verify_signature(pk, digest, sig):
            return False
    return True


def _resolve_leaf(psbt: PsbtTemplate, executor: Keypair, tweak_data: TweakData) -> str:
    if psbt.path_id != "dep_ao_*":
        return psbt.path_id
    for i, ao_pk in enumerate(tweak_data.ao_pks):
        if executor.public == ao_pk:
            return f"dep_ao_{i}"
    # executor is not an oracle key: pick the leaf of whichever oracle signed
    for i, ao_pk in enumerate(tweak_data.ao_pks):
        if ao_pk.compressed().hex() in psbt.partial_sigs:
            return f"dep_ao_{i}"
    raise MissingCounterpartySig("no oracle signature to select a leaf")


def finalize_to_tx(
    psbt: PsbtTemplate,
    executor: Keypair,
    instance: ProtocolInstance,
) -> SimTx:
    """Countersign as the executor, assemble the witness for the right
    leaf, and return the broadcastable transaction."""
    tweak_data = instance.tweak_data
    spec = TRANSITION_SPECS[psbt.transition]
    if all(executor.public != pk for pk in allowed_signers(psbt, tweak_data)):
        raise NotASigner("executor is not a signer of this transition")

    # every required role other than the executor must already have signed
    for role in spec.signers:
        role_keys = _role_pubkeys(tweak_data, role)
        if any(executor.public == pk for pk in role_keys):
            continue
        if not any(pk.compressed().hex() in psbt.partial_sigs for pk in role_keys):
            raise MissingCounterpartySig(f"missing {role} signature")

    if executor.public_hex not in psbt.partial_sigs:
        psbt.partial_sigs[executor.public_hex] = sign_digest(executor, psbt.sighash())

    path_id = _resolve_leaf(psbt, executor, tweak_data)
    source = instance.addresses.by_kind(spec.source)
    leaf = source.leaf(path_id)
    if leaf is None:
        raise PsbtError(f"leaf {path_id} missing on {spec.source}")
    witness = []
    for pk in leaf.policy.keys():
        sig = psbt.partial_sigs.get(pk.compressed().hex())
        if sig is None:
            raise MissingCounterpartySig(f"no signature for leaf key on {path_id}")
        witness.append(sig)

    tx = SimTx(
        inputs=[TxInput(psbt.outpoint, path_id, psbt.flag, witness)],
        outputs=list(psbt.outputs),
        anchor_index=psbt.anchor_index,
    )
    return tx


def finalize_and_broadcast(
    psbt: PsbtTemplate,
    executor: Keypair,
    instance: ProtocolInstance,
    chain: BtcChain,
) -> SimTx:
    tx = finalize_to_tx(psbt, executor, instance)
    chain.submit_tx(tx)
    return tx


# ---------------------------------------------------------------------------
# fee machinery


def required_child_fee(f0: int, f_required: int, f_tilde_required: int) -> int:
    """Fee an anchor child must pay so parent and child clear together."""
    return max(0, f_required + f_tilde_required - f0)


def attach_cpfp_child(
    parent: SimTx,
    executor_utxo: Utxo,
    target_fee: int,
    executor: Keypair,
    chain: BtcChain,
) -> SimTx:
    """Spend the parent's anchor plus one executor-owned output, burning
    ``target_fee`` as fees; submits the child and returns it."""
    if parent.anchor_index is None:
        raise NoAnchor("parent carries no anchor output")
    anchor_out = parent.outputs[parent.anchor_index]
    executor_addr = key_address_id(executor.public)
    if anchor_out.address_id != executor_addr:
        raise NotASigner("anchor is not spendable by this executor")
    total_in = anchor_out.value + executor_utxo.value
    change = total_in - target_fee
    if change < 0:
        raise InsufficientFunds(f"need {target_fee}, inputs total {total_in}")
    outputs = [TxOutput(executor_addr, change)] if change > 0 else []
    child = SimTx(
        inputs=[
            TxInput(Outpoint(parent.txid, parent.anchor_index), "key", SighashFlag.ALL),
            TxInput(executor_utxo.outpoint, "key", SighashFlag.ALL),
        ],
        outputs=outputs,
    )
    for i in range(len(child.inputs)):
        child.inputs[i].witness = [sign_digest(executor, child.sighash(i))]
    chain.submit_tx(child)
    return child


def add_fee_input(tx: SimTx, fee_utxo: Utxo, keypair: Keypair) -> SimTx:
    """Append a fee input to a transaction whose existing signatures all
    use ANYONECANPAY; the whole fee utxo value becomes additional fee."""
    for inp in tx.inputs:
        if inp.flag is not SighashFlag.ALL_ANYONECANPAY:
            raise FlagViolation("existing inputs must be ANYONECANPAY to extend")
    if fee_utxo.address_id != key_address_id(keypair.public):
        raise NotASigner("fee utxo is not owned by the signing key")
    new_inputs = [
        TxInput(i.outpoint, i.path_id, i.flag, list(i.witness)) for i in tx.inputs
    ]
    new_inputs.append(
        TxInput(fee_utxo.outpoint, "key", SighashFlag.ALL_ANYONECANPAY)
    )
    bumped = SimTx(inputs=new_inputs, outputs=list(tx.outputs), anchor_index=tx.anchor_index)
    bumped.inputs[-1].witness = [sign_digest(keypair, bumped.sighash(len(new_inputs) - 1))]
    return bumped


# ---------------------------------------------------------------------------
# setup ceremony


@dataclass(frozen=True)
class AoIdentity:
    public: Point
    attestation: Attestation | None


def build_deposit_psbt_set(
    instance: ProtocolInstance,
    outpoint: Outpoint,
    value: int,
    dep_keypair: Keypair | None,
    to_keypair: Keypair | None,
) -> dict[Transition, PsbtTemplate]:
    """The five pre-signed templates guarding one deposit UTXO.

    The operator pre-signs the unbond request; the depositor pre-signs
    the challenge row and the three rows that protect them (rebalance
    request is operator-held, the two resolve rows go to the registry).
    """
    tweak = instance.tweak_data
    unbond_request = build_psbt(Transition.UNBOND_REQUEST, instance, (outpoint, value))
    uta_out = unbond_request.main_output()
    unbond_challenge = build_psbt(
        Transition.UNBOND_CHALLENGE,
        instance,
        (Outpoint(unbond_request.txid, 0), uta_out.value),
    )
    uca_out = unbond_challenge.main_output()
    unbond_resolve = build_psbt(
        Transition.UNBOND_RESOLVE,
        instance,
        (Outpoint(unbond_challenge.txid, 0), uca_out.value),
    )
    rebalance_request = build_psbt(Transition.REBALANCE_REQUEST, instance, (outpoint, value))
    rca_out = rebalance_request.main_output()
    rebalance_resolve = build_psbt(
        Transition.REBALANCE_RESOLVE,
        instance,
        (Outpoint(rebalance_request.txid, 0), rca_out.value),
    )
    if to_keypair is not None:
        sign_psbt(unbond_request, to_keypair, tweak)
    if dep_keypair is not None:
        for template in (unbond_challenge, unbond_resolve, rebalance_request, rebalance_resolve):
            sign_psbt(template, dep_keypair, tweak)
    return {
        Transition.UNBOND_REQUEST: unbond_request,
        Transition.UNBOND_CHALLENGE: unbond_challenge,
        Transition.UNBOND_RESOLVE: unbond_resolve,
        Transition.REBALANCE_REQUEST: rebalance_request,
        Transition.REBALANCE_RESOLVE: rebalance_resolve,
    }


def verify_psbt_against_instance(
    psbt: PsbtTemplate, instance: ProtocolInstance, outpoint: Outpoint, value: int
) -> bool:
    """Recompute the template from instance parameters and compare
    canonically (ignoring signatures), then check the signatures it does
    carry."""
    rebuilt = build_psbt(psbt.transition, instance, (outpoint, value))
    a, b = psbt.to_text(), rebuilt.to_text()
    a = json.loads(a)
    b = json.loads(b)
    a.pop("partial_sigs")
    b.pop("partial_sigs")
    if a != b:
        return False
    return verify_partial_sigs(psbt, instance.tweak_data)


def run_setup_ceremony(
    dep_keypair: Keypair,
    to_keypair: Keypair,
    ao_identities: list[AoIdentity],
    deposits: list[tuple[Utxo, int]],
    chain: BtcChain,
    registry: Registry,
    authority: MockAttestationAuthority,
    owner_account: str,
    expected_pcr0: str | None = None,
    base_fee_rate: int = DEFAULT_BASE_FEE_RATE,
    anchor_value: int = DEFAULT_ANCHOR_VALUE,
    confirm_and_mint: bool = True,
    sar_tamper=None,
) -> ProtocolInstance:
    """Run the deposit setup end to end.

    Ordering guarantees the depositor never funds before the registry
    holds the three rows that protect them, and the operator never sees
    a funded vault before holding the challenge row:

      0. depositor announces the outputs that will fund the vault
      1. operator pre-signs the unbond request; depositor pre-signs the
         challenge, rebalance request, and both resolve rows
      2. operator verifies the depositor's signatures, then posts the
         unbond request and the two resolve rows to the registry
      3. depositor verifies the registry rows match what they signed
      4. depositor broadcasts the funding transaction
      5. after 6 confirmations the operator activates the records and
         mints the wrapped amount

    Any verification failure aborts before step 4, so an aborted ceremony
    leaves nothing spendable at the vault.
    """
    if min(registry.t1, registry.t2, registry.t3) <= 0 or not timelock_relation_holds(
        registry.t1, registry.t2, registry.t3, registry.slots_per_block
    ):
        raise TimelockRelationViolated("governance delay must exceed the dispute window")

    for ident in ao_identities:
        att = ident.attestation
        if att is None:
            raise VerificationFailed("oracle missing an attestation")
        if not att.verify(authority.public):
            raise VerificationFailed("oracle attestation does not verify")
        if att.ao_pubkey != ident.public.compressed().hex():
            raise VerificationFailed("attestation binds a different oracle key")
        if expected_pcr0 is not None and att.pcr0 != expected_pcr0:
            raise VerificationFailed("oracle image measurement mismatch")

    tweak_data = TweakData(
        dep_pk=dep_keypair.public,
        to_pk=to_keypair.public,
        ao_pks=tuple(ident.public for ident in ao_identities),
        t1=registry.t1,
        t2=registry.t2,
        destination_chain_address=owner_account.encode(),
        return_address=key_address_id(dep_keypair.public).encode(),
    )
    addresses = build_protocol_addresses(tweak_data)
    for addr in addresses.all():
        chain.register_address(addr)
    return_addr = chain.ensure_key_address(dep_keypair.public)
    to_addr = chain.ensure_key_address(to_keypair.public)

    # step 0: the funding transaction (unsigned) fixes the vault outpoints
    source_total = 0
    funding_inputs = []
    for source, _amount in deposits:
        if source.address_id != return_addr:
            raise WrongSourceAddress("funding sources must be depositor key outputs")
        funding_inputs.append(TxInput(source.outpoint, "key", SighashFlag.ALL))
        source_total += source.value
    amounts = [amount for _, amount in deposits]
    if source_total < sum(amounts):
        raise InsufficientFunds("sources do not cover the deposit amounts")
    funding = SimTx(
        inputs=funding_inputs,
        outputs=[TxOutput(addresses.va.address_id, amount) for amount in amounts],
    )

    instance = ProtocolInstance(
        tweak_data=tweak_data,
        addresses=addresses,
        owner=owner_account,
        return_address_id=return_addr,
        to_key_address_id=to_addr,
        funding_txid=funding.txid,
        deposits={},
        to_psbts={},
        base_fee_rate=base_fee_rate,
        anchor_value=anchor_value,
    )

    # step 1: both parties pre-sign their rows
    psbt_sets: dict[str, dict[Transition, PsbtTemplate]] = {}
    for index, amount in enumerate(amounts):
        outpoint = Outpoint(funding.txid, index)
        psbt_sets[str(outpoint)] = build_deposit_psbt_set(
            instance, outpoint, amount, dep_keypair, to_keypair
        )

    # step 2a: operator checks the depositor's signatures and committed outputs
    for index, amount in enumerate(amounts):
        outpoint = Outpoint(funding.txid, index)
        per = psbt_sets[str(outpoint)]
        for transition in (Transition.REBALANCE_REQUEST, Transition.UNBOND_CHALLENGE):
            template = per[transition]
            if not verify_partial_sigs(template, tweak_data):
                raise VerificationFailed(f"bad depositor signature on {transition.value}")

    # step 2b: operator stores the registry rows
    registry.store_tweak_data(tweak_data)
    for index, amount in enumerate(amounts):
        outpoint = Outpoint(funding.txid, index)
        per = psbt_sets[str(outpoint)]
        stored = {
            Transition.UNBOND_REQUEST.value: per[Transition.UNBOND_REQUEST].to_text(),
            Transition.UNBOND_RESOLVE.value: per[Transition.UNBOND_RESOLVE].to_text(),
            Transition.REBALANCE_RESOLVE.value: per[Transition.REBALANCE_RESOLVE].to_text(),
        }
        if sar_tamper is not None:
            stored = sar_tamper(str(outpoint), stored)
        registry.register_deposit(
            UtxoRecord(
                outpoint=str(outpoint),
                owner=owner_account,
                amount=amount,
                status=UtxoStatus.REGISTERED,
                tweak_digest=tweak_data.digest_hex(),
                psbts=stored,
            )
        )

    # step 3: depositor verifies the registry rows byte for byte
    for index, amount in enumerate(amounts):
        outpoint = Outpoint(funding.txid, index)
        per = psbt_sets[str(outpoint)]
        for transition in (
            Transition.UNBOND_REQUEST,
            Transition.UNBOND_RESOLVE,
            Transition.REBALANCE_RESOLVE,
        ):
            stored_text = registry.get_stored_psbt(str(outpoint), transition.value)
            if stored_text != per[transition].to_text():
                for j in range(len(amounts)):
                    registry.reject_deposit(str(Outpoint(funding.txid, j)), owner_account)
                raise VerificationFailed(
                    f"registry copy of {transition.value} does not match"
                )

    # step 4: depositor funds the vault
    for i in range(len(funding.inputs)):
        funding.inputs[i].witness = [sign_digest(dep_keypair, funding.sighash(i))]
    chain.submit_tx(funding)

    instance.deposits = {
        str(Outpoint(funding.txid, i)): amount for i, amount in enumerate(amounts)
    }
    instance.to_psbts = {
        op: {
            Transition.UNBOND_CHALLENGE: per[Transition.UNBOND_CHALLENGE],
            Transition.REBALANCE_REQUEST: per[Transition.REBALANCE_REQUEST],
        }
        for op, per in psbt_sets.items()
    }

    # step 5: confirmations, activation, mint
    if confirm_and_mint:
        for _ in range(6):
            chain.mine_block()
        for op in instance.deposits:
            registry.activate_on_mint(op, caller="to")
    return instance


@dataclass
class ResplitOutcome:
    tx: SimTx
    new_deposits: list[tuple[Outpoint, int]]


def collaborative_resplit(
    instance: ProtocolInstance,
    outpoint: Outpoint,
    value: int,
    split_amounts: list[int],
    deadline_block: int,
    current_block: int,
    dep_keypair: Keypair | None,
    to_keypair: Keypair,
    chain: BtcChain,
    registry: Registry,
    fee: int = 0,
) -> ResplitOutcome | None:
    """Cooperative rebalance: split one vault output into parts so only
    the imbalanced amount moves.  Returns None when the depositor did not
    sign by the deadline (the caller then rebalances the full UTXO)."""
    if dep_keypair is None or current_block > deadline_block:
        return None
    resplit = build_psbt(
        Transition.RESPLIT, instance, (outpoint, value), value_split=split_amounts, fee=fee
    )
    sign_psbt(resplit, dep_keypair, instance.tweak_data)
    tx = finalize_and_broadcast(resplit, to_keypair, instance, chain)

    new_records = []
    new_deposits = []
    for i, amount in enumerate(split_amounts):
        new_op = Outpoint(tx.txid, i)
        per = build_deposit_psbt_set(instance, new_op, amount, dep_keypair, to_keypair)
        new_records.append(
            UtxoRecord(
                outpoint=str(new_op),
                owner=instance.owner,
                amount=amount,
                status=UtxoStatus.REGISTERED,
                tweak_digest=instance.tweak_data.digest_hex(),
                psbts={
                    Transition.UNBOND_REQUEST.value: per[Transition.UNBOND_REQUEST].to_text(),
                    Transition.UNBOND_RESOLVE.value: per[Transition.UNBOND_RESOLVE].to_text(),
                    Transition.REBALANCE_RESOLVE.value: per[
                        Transition.REBALANCE_RESOLVE
                    ].to_text(),
                },
            )
        )
        new_deposits.append((new_op, amount))
        instance.to_psbts[str(new_op)] = {
            Transition.UNBOND_CHALLENGE: per[Transition.UNBOND_CHALLENGE],
            Transition.REBALANCE_REQUEST: per[Transition.REBALANCE_REQUEST],
        }
    registry.resplit_deposit(str(outpoint), new_records, caller="to")
    del instance.deposits[str(outpoint)]
    instance.to_psbts.pop(str(outpoint), None)
    for new_op, amount in new_deposits:
        instance.deposits[str(new_op)] = amount
    return ResplitOutcome(tx=tx, new_deposits=new_deposits)
