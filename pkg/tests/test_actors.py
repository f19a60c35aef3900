"""Actor behavior driving the simulated protocol: wallet utilities, the
exit state machine with exact timelock timing, oracle-defended disputes,
and operator liquidation/repayment duties."""

import pytest

from bsa_sim.actors import (
    OracleActor,
    OracleBehavior,
    carve_fee_utxo,
    send_btc,
    spendable_utxos,
    spender_of,
)
from bsa_sim.chain import BtcChain, FeeSchedule, Outpoint
from bsa_sim.harness import legitimate_rebalance_config, liquidation_spans, run_scenario
from bsa_sim.keys import get_scheme
from bsa_sim.scenario import DepositorBehavior, OperatorBehavior, ScenarioConfig

SCHEME = get_scheme("mock")


# -- wallet helpers -----------------------------------------------------------


def funded_chain(value=10_000):
    chain = BtcChain(FeeSchedule(1))
    kp = SCHEME.keypair_from_seed(b"wallet")
    addr = chain.ensure_key_address(kp.public)
    chain.seed_utxo(addr, value)
    return chain, kp, addr


def test_carve_fee_utxo_exact_value():
    chain, kp, addr = funded_chain()
    utxo = carve_fee_utxo(chain, kp, 500)
    assert utxo is not None and utxo.value == 500
    chain.mine_block()
    values = sorted(u.value for u in chain.utxos_at(addr))
    assert values == [500, 10_000 - 500 - 3]


def test_carve_fee_utxo_without_funds():
    chain, kp, _ = funded_chain(value=100)
    assert carve_fee_utxo(chain, kp, 200) is None


def test_send_btc_with_change():
    chain, kp, addr = funded_chain()
    other = chain.ensure_key_address(SCHEME.keypair_from_seed(b"other").public)
    tx = send_btc(chain, kp, other, 1_000)
    assert tx is not None
    chain.mine_block()
    assert chain.balance_of(other) == 1_000
    assert chain.balance_of(addr) == 10_000 - 1_000 - 3
    assert send_btc(chain, kp, other, 10_000) is None


def test_spendable_utxos_excludes_mempool_pending():
    chain, kp, addr = funded_chain()
    assert len(spendable_utxos(chain, addr)) == 1
    other = chain.ensure_key_address(SCHEME.keypair_from_seed(b"other").public)
    tx = send_btc(chain, kp, other, 1_000)
    assert spendable_utxos(chain, addr) == []
    found = spender_of(chain, tx.inputs[0].outpoint)
    assert found is tx  # still in the mempool
    chain.mine_block()
    assert spender_of(chain, tx.inputs[0].outpoint).txid == tx.txid
    assert spender_of(chain, Outpoint(tx.txid, 0)) is None


def test_oracle_online_window_is_half_open():
    actor = OracleActor("o", oracle=None, behavior=OracleBehavior(offline=(5, 8)))
    assert actor.is_online(4)
    assert not actor.is_online(5)
    assert not actor.is_online(7)
    assert actor.is_online(8)
    assert OracleActor("p", None, OracleBehavior()).is_online(123)


# -- exit timing --------------------------------------------------------------


def conf_heights(world):
    return {tx.txid: h for h, tx in world.chain.history}


def exit_config(**kw) -> ScenarioConfig:
    base = dict(
        name="exit-timing",
        signature_scheme="mock",
        horizon_blocks=34,
        depositor=DepositorBehavior(exit_at=8),
    )
    base.update(kw)
    return ScenarioConfig(**base)


@pytest.mark.parametrize("t1", [4, 6, 9])
def test_honest_exit_confirms_exactly_after_t1(t1):
    result = run_scenario(exit_config(t1=t1))
    world = result.world
    conf = conf_heights(world)
    request = next(e for e in world.trace if e["action"] == "unbond_request")
    request_conf = conf[request["txid"]]
    finalize_txid = world.chain.spent_by[Outpoint(request["txid"], 0)]
    assert conf[finalize_txid] == request_conf + t1
    finalize = world.chain.tx_index[finalize_txid]
    instance = world.instances[0]
    assert finalize.outputs[0].address_id == instance.return_address_id
    assert any(e["action"] == "exit_complete" for e in world.trace)
    assert result.verdicts.depositor_safe
    assert result.verdicts.triple() == (True, True, True)
    # started at exit_at, done within t1 plus the reaction margin
    done = next(e for e in world.trace if e["action"] == "exit_complete")
    assert done["height"] <= 8 + t1 + world.params.margin_blocks


def test_unfairly_challenged_exit_resolved_by_oracles():
    t1, t2 = 6, 10
    config = exit_config(
        t1=t1,
        t2=t2,
        operator=OperatorBehavior(challenge_legitimate=True),
    )
    result = run_scenario(config)
    world = result.world
    conf = conf_heights(world)
    request = next(e for e in world.trace if e["action"] == "unbond_request")
    challenge_txid = world.chain.spent_by[Outpoint(request["txid"], 0)]
    resolve_txid = world.chain.spent_by[Outpoint(challenge_txid, 0)]
    resolve = world.chain.tx_index[resolve_txid]
    instance = world.instances[0]

    assert resolve.outputs[0].address_id == instance.return_address_id
    assert resolve.inputs[0].path_id.startswith("dep_ao_")
    assert any(e["action"] == "unbond_resolved" for e in world.trace)
    # resolved well before the operator's timeout leaf would unlock
    assert conf[resolve_txid] - conf[challenge_txid] < t2
    assert conf[resolve_txid] <= request["height"] + t1 + t2 + world.params.margin_blocks
    assert result.verdicts.depositor_safe


def test_theft_is_challenged_and_liquidated_on_timeout():
    t2 = 10
    config = exit_config(
        t2=t2,
        depositor=DepositorBehavior(exit_at=8, burn_before_exit=False),
    )
    result = run_scenario(config)
    world = result.world
    conf = conf_heights(world)
    request = next(e for e in world.trace if e["action"] == "unbond_request")
    challenge_txid = world.chain.spent_by[Outpoint(request["txid"], 0)]
    claim_txid = world.chain.spent_by[Outpoint(challenge_txid, 0)]
    claim = world.chain.tx_index[claim_txid]
    instance = world.instances[0]

    # oracles saw the live record and refused; the timeout leaf paid the operator
    refusals = [e for e in world.trace if e["action"] == "resolution_refused"]
    assert refusals and all(e["status"] == "active" for e in refusals)
    assert claim.inputs[0].path_id == "to_delay"
    assert claim.outputs[0].address_id == instance.to_key_address_id
    assert conf[claim_txid] == conf[challenge_txid] + t2
    assert result.verdicts.operator_safe
    assert result.verdicts.protocol_safe


# -- liquidation and repayment ------------------------------------------------


def test_legitimate_rebalance_liquidates_within_bound_and_repays():
    config = legitimate_rebalance_config()
    result = run_scenario(config)
    world = result.world
    registry = world.registry

    marked = next(e for e in world.trace if e["action"] == "rebalance_marked")
    assert marked["over_seizure"] == 1_000  # [7000] covers a 6000 hole

    spans = liquidation_spans(world)
    assert spans, "no liquidation completed"
    for start, end in spans:
        assert end - start == config.t2  # timeout leaf claimed exactly at maturity

    repaid = next(e for e in world.trace if e["action"] == "over_seizure_repaid")
    assert repaid["amount"] == 1_000
    assert registry.claimable.get(config.owner, 0) == 0
    assert registry.claim_paid[config.owner] == 1_000
    assert result.verdicts.triple() == (True, True, True)


def test_false_rebalance_is_defended_by_oracles():
    config = ScenarioConfig(
        name="false-rebalance",
        signature_scheme="mock",
        horizon_blocks=30,
        operator=OperatorBehavior(false_rebalance_at=10),
    )
    result = run_scenario(config)
    world = result.world
    assert any(e["action"] == "false_rebalance_request" for e in world.trace)
    assert any(e["action"] == "rebalance_resolved" for e in world.trace)
    request = next(e for e in world.trace if e["action"] == "false_rebalance_request")
    deposit_outpoint = request["outpoint"]
    record = world.registry.get_record(deposit_outpoint)
    # never marked: the registry still counts the deposit as live
    assert record.status.value == "active"
    assert result.verdicts.depositor_safe


def test_fee_spike_is_absorbed_by_cpfp():
    config = exit_config(fee_steps=[(6, 4)])
    result = run_scenario(config)
    world = result.world
    assert any(e["action"] == "cpfp_child" for e in world.trace)
    assert any(e["action"] == "exit_complete" for e in world.trace)
    assert result.verdicts.depositor_safe
