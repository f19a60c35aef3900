"""Scenario configuration: what a single simulation run looks like.

Scenario files use INI syntax.  Everything has a default, so the
smallest valid file is empty.  Example:

    [scenario]
    name = honest-exit

    [params]
    t1 = 6
    t2 = 10
    t3 = 1200
    slots_per_block = 50
    horizon_blocks = 40
    fee_base = 1
    fee_steps = 20:3, 30:1

    [deposit]
    owner = alice
    amounts = 7000, 3000

    [depositor]
    exit_at = 10
    burn_before_exit = true

    [operator]
    rebalance_at = none
    false_rebalance_at = none

    [oracle.0]
    offline = 12..20
    refuse = false
    leak = false

Unlisted oracles are honest; ``n_oracles`` in [params] sets how many
exist (default 3).
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

from .actors import DepositorBehavior, OperatorBehavior, OracleBehavior


class ScenarioError(Exception):
    pass


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    t1: int = 6
    t2: int = 10
    t3: int = 1200
    slots_per_block: int = 50
    t_op_blocks: int = 1
    margin_blocks: int = 6
    horizon_blocks: int = 40
    fee_base: int = 1
    fee_steps: list[tuple[int, int]] = field(default_factory=list)
    finality_interval: int = 32
    wsp_slots: int = 1344
    signature_scheme: str = "schnorr"
    n_oracles: int = 3
    owner: str = "alice"
    amounts: list[int] = field(default_factory=lambda: [10_000])
    fee_funds: int = 200_000
    depositor: DepositorBehavior = field(default_factory=DepositorBehavior)
    operator: OperatorBehavior = field(default_factory=OperatorBehavior)
    oracles: list[OracleBehavior] = field(default_factory=list)
    dest_halted_at: int | None = None
    expected_verdicts: tuple[bool, bool, bool] | None = None

    def __post_init__(self):
        while len(self.oracles) < self.n_oracles:
            self.oracles.append(OracleBehavior())
        if len(self.oracles) > self.n_oracles:
            self.n_oracles = len(self.oracles)


def _opt_int(value: str) -> int | None:
    value = value.strip().lower()
    if value in ("", "none", "never", "-"):
        return None
    return int(value)


def _bool(value: str) -> bool:
    value = value.strip().lower()
    if value in ("true", "yes", "on", "1"):
        return True
    if value in ("false", "no", "off", "0"):
        return False
    raise ScenarioError(f"not a boolean: {value!r}")


def _int_list(value: str) -> list[int]:
    return [int(part.strip()) for part in value.split(",") if part.strip()]


def _step_list(value: str) -> list[tuple[int, int]]:
    steps = []
    for part in value.split(","):
        part = part.strip()
        if not part:
            continue
        left, right = part.split(":")
        steps.append((int(left), int(right)))
    return steps


def _range(value: str) -> tuple[int, int] | None:
    value = value.strip().lower()
    if value in ("", "none", "-"):
        return None
    start, end = value.split("..")
    return (int(start), int(end))


def parse_scenario(text: str) -> ScenarioConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ScenarioError(f"bad scenario file: {exc}") from exc

    config = ScenarioConfig()

    if parser.has_section("scenario"):
        config.name = parser.get("scenario", "name", fallback=config.name)

    if parser.has_section("params"):
        p = parser["params"]
        config.t1 = p.getint("t1", config.t1)
        config.t2 = p.getint("t2", config.t2)
        config.t3 = p.getint("t3", config.t3)
        config.slots_per_block = p.getint("slots_per_block", config.slots_per_block)
        config.t_op_blocks = p.getint("t_op_blocks", config.t_op_blocks)
        config.margin_blocks = p.getint("margin_blocks", config.margin_blocks)
        config.horizon_blocks = p.getint("horizon_blocks", config.horizon_blocks)
        config.fee_base = p.getint("fee_base", config.fee_base)
        config.finality_interval = p.getint("finality_interval", config.finality_interval)
        config.wsp_slots = p.getint("wsp_slots", config.wsp_slots)
        config.signature_scheme = p.get("signature_scheme", config.signature_scheme)
        config.n_oracles = p.getint("n_oracles", config.n_oracles)
        config.fee_funds = p.getint("fee_funds", config.fee_funds)
        if "fee_steps" in p:
            config.fee_steps = _step_list(p["fee_steps"])
        if "dest_halted_at" in p:
            config.dest_halted_at = _opt_int(p["dest_halted_at"])

    if parser.has_section("deposit"):
        d = parser["deposit"]
        config.owner = d.get("owner", config.owner)
        if "amounts" in d:
            config.amounts = _int_list(d["amounts"])
            if not config.amounts or any(a <= 0 for a in config.amounts):
                raise ScenarioError("deposit amounts must be positive")

    if parser.has_section("depositor"):
        d = parser["depositor"]
        behavior = DepositorBehavior()
        if "exit_at" in d:
            behavior.exit_at = _opt_int(d["exit_at"])
        if "exit_deposit_index" in d:
            behavior.exit_deposit_index = _opt_int(d["exit_deposit_index"])
        if "burn_before_exit" in d:
            behavior.burn_before_exit = _bool(d["burn_before_exit"])
        if "use_leaked_key" in d:
            behavior.use_leaked_key = _bool(d["use_leaked_key"])
        if "leak_tokens_at" in d:
            behavior.leak_tokens_at = _opt_int(d["leak_tokens_at"])
        if "leak_token_amount" in d:
            behavior.leak_token_amount = int(d["leak_token_amount"])
        config.depositor = behavior

    if parser.has_section("operator"):
        o = parser["operator"]
        behavior = OperatorBehavior()
        if "challenge_thefts" in o:
            behavior.challenge_thefts = _bool(o["challenge_thefts"])
        if "challenge_legitimate" in o:
            behavior.challenge_legitimate = _bool(o["challenge_legitimate"])
        if "claim_expired" in o:
            behavior.claim_expired = _bool(o["claim_expired"])
        if "rebalance_at" in o:
            behavior.rebalance_at = _opt_int(o["rebalance_at"])
        if "false_rebalance_at" in o:
            behavior.false_rebalance_at = _opt_int(o["false_rebalance_at"])
        if "pay_over_seizure" in o:
            behavior.pay_over_seizure = _bool(o["pay_over_seizure"])
        if "provide_checkpoints" in o:
            behavior.provide_checkpoints = _bool(o["provide_checkpoints"])
        config.operator = behavior

    oracle_sections = sorted(
        s for s in parser.sections() if s.startswith("oracle.")
    )
    oracles: list[OracleBehavior] = []
    for section in oracle_sections:
        o = parser[section]
        behavior = OracleBehavior()
        if "offline" in o:
            behavior.offline = _range(o["offline"])
        if "refuse" in o:
            behavior.refuse_resolutions = _bool(o["refuse"])
        if "leak" in o:
            behavior.leak_secret = _bool(o["leak"])
        oracles.append(behavior)
    if oracles:
        config.oracles = oracles
        config.n_oracles = max(config.n_oracles, len(oracles))

    if parser.has_section("expect"):
        e = parser["expect"]
        config.expected_verdicts = (
            _bool(e.get("depositor_safe", "true")),
            _bool(e.get("operator_safe", "true")),
            _bool(e.get("protocol_safe", "true")),
        )

    config.__post_init__()
    return config


def load_scenario(path: str) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scenario(fh.read())
