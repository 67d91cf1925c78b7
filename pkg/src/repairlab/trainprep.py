"""Training-data exports and the preference objective.

Produces the three JSONL hand-off files consumed by downstream trainers:

* locator records  {"prompt", "target"} — stage-one supervision,
* modifier records {"prompt", "target", "origin"} — stage-two supervision,
  where the hybrid split contributes one record per gold-labeled instance and
  two per relabeled instance (one with the gold annotation, one with the
  predicted annotation),
* preference records {"prompt", "chosen", "rejected", "meta"} — mined pairs
  of a correct low-edit fix against an incorrect high-edit candidate.

The preference objective itself is implemented as a pure scalar function for
verification; no weights are updated here.
"""

from __future__ import annotations

import json
import logging
import math
import os
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

from . import tracefmt
from .corpus import RepairInstance
from .diffkit import DiffAnnotation, consistency
from .judge import RepairOutcome
from .modelgw import GatewayError, ModelGateway
from .promptkit import render_repair, render_self_debug
from .tracelink import TraceBundle

logger = logging.getLogger(__name__)

ORIGIN_D1 = "d1"
ORIGIN_D2_GOLD = "d2_gold"
ORIGIN_D2_PRED = "d2_pred"


@dataclass
class HybridSplit:
    """Seeded 1:k partition with predicted annotations over the second part."""

    d1: list[RepairInstance]
    d2_prime: list[tuple[RepairInstance, DiffAnnotation | None]]
    ratio: float


@dataclass(frozen=True)
class PreferencePair:
    """Preferred (correct, fewer edits) vs dispreferred (incorrect, more
    edits) candidate fixes sharing one repair context."""

    instance: RepairInstance
    preferred: str
    dispreferred: str
    consistency_preferred: float
    consistency_dispreferred: float
    verdicts_preferred: dict[str, str]
    verdicts_dispreferred: dict[str, str]


@dataclass(frozen=True)
class DpoPInputs:
    """Summed log-likelihoods of the preferred/dispreferred completions under
    the tuned model (star) and the frozen reference, plus hyperparameters."""

    logp_star_plus: float
    logp_star_minus: float
    logp_ref_plus: float
    logp_ref_minus: float
    beta: float = 0.1
    lam: float = 5.0

    def __post_init__(self) -> None:
        values = (self.logp_star_plus, self.logp_star_minus,
                  self.logp_ref_plus, self.logp_ref_minus, self.beta, self.lam)
        if not all(math.isfinite(v) for v in values):
            raise ValueError("preference-loss inputs must be finite")
        if any(v > 0 for v in values[:4]):
            raise ValueError("log-likelihoods cannot be positive")
        if self.beta <= 0 or self.lam <= 0:
            raise ValueError("beta and lambda must be positive")


def softplus(x: float) -> float:
    return max(x, 0.0) + math.log1p(math.exp(-abs(x)))


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _margin(inputs: DpoPInputs) -> float:
    r_plus = inputs.beta * (inputs.logp_star_plus - inputs.logp_ref_plus)
    r_minus = inputs.beta * (inputs.logp_star_minus - inputs.logp_ref_minus)
    penalty = inputs.lam * max(0.0, inputs.logp_ref_plus - inputs.logp_star_plus)
    return r_plus - r_minus - penalty


def dpo_positive_loss(inputs: DpoPInputs) -> float:
    """Preference loss with a penalty that keeps the preferred completion's
    likelihood from degrading below the reference.

    With implicit rewards r = beta * (log p_star - log p_ref) and penalty
    g = lambda * max(0, log p_ref(y+) - log p_star(y+)), the loss is
    -log sigmoid(r+ - r- - g), evaluated as softplus(-(r+ - r- - g)).
    """
    return softplus(-_margin(inputs))


def dpo_positive_grad(inputs: DpoPInputs) -> dict[str, float]:
    """Analytic partial derivatives with respect to each log-likelihood."""
    z = _margin(inputs)
    dloss_dz = -_sigmoid(-z)
    gate = 1.0 if inputs.logp_ref_plus > inputs.logp_star_plus else 0.0
    dz = {
        "logp_star_plus": inputs.beta + inputs.lam * gate,
        "logp_ref_plus": -inputs.beta - inputs.lam * gate,
        "logp_star_minus": -inputs.beta,
        "logp_ref_minus": inputs.beta,
    }
    return {name: dloss_dz * value for name, value in dz.items()}


# --- exports -----------------------------------------------------------------

def _atomic_write_jsonl(path: str | os.PathLike, records: Sequence[Mapping]) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps(record, ensure_ascii=True) for record in records]
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    os.replace(tmp, path)
    return len(lines)


def locator_record(
    instance: RepairInstance,
    bundle: TraceBundle | None,
    language: str = "Python",
) -> dict:
    if bundle is not None:
        io_text = tracefmt.render_io(bundle.io)
        trace_text = tracefmt.render_trace(instance.buggy_code, bundle.events).to_text()
    else:
        io_text = trace_text = None
    record = {
        "prompt": render_self_debug(
            instance.problem_statement, instance.buggy_code, io_text, trace_text, language
        ),
        "target": instance.diff_label.render(),
    }
    if bundle is None:
        record["flagged"] = True
    return record


def export_locator_records(
    instances: Sequence[RepairInstance],
    traces: Mapping[str, TraceBundle],
    path: str | os.PathLike,
    language: str = "Python",
) -> int:
    """One {prompt, target} record per instance, sorted by instance id.

    Instances with no trace bundle still export (the prompt carries the
    unavailability sentinel) but are flagged.
    """
    ordered = sorted(instances, key=lambda inst: inst.instance_id)
    records = [locator_record(inst, traces.get(inst.instance_id), language) for inst in ordered]
    return _atomic_write_jsonl(path, records)


def make_hybrid_split(
    instances: Sequence[RepairInstance],
    k: float,
    gateway: ModelGateway,
    seed: int,
    traces: Mapping[str, TraceBundle] | None = None,
    workers: int = 4,
) -> HybridSplit:
    """Seeded 1:k partition; the second part is relabeled by the gateway.

    |D1| = round(N / (1 + k)), remainder to D2. Every D2 instance is sent
    through the locator (in parallel up to ``workers``); a gateway failure or
    unparseable reply leaves the predicted annotation as None, which
    downstream exports tolerate.
    """
    if k <= 0:
        raise ValueError("split ratio k must be positive")
    traces = traces or {}
    ordered = sorted(instances, key=lambda inst: inst.instance_id)
    rng = random.Random(seed)
    rng.shuffle(ordered)
    d1_size = round(len(ordered) / (1 + k))
    d1 = ordered[:d1_size]
    d2 = ordered[d1_size:]

    def relabel(inst: RepairInstance) -> DiffAnnotation | None:
        try:
            return gateway.locate(inst, traces.get(inst.instance_id))
        except GatewayError as exc:
            logger.warning("locator failed on %s: %s", inst.instance_id, exc)
            return None

    if workers <= 1 or len(d2) <= 1:
        predictions = [relabel(inst) for inst in d2]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            predictions = list(pool.map(relabel, d2))
    return HybridSplit(d1=d1, d2_prime=list(zip(d2, predictions)), ratio=k)


def export_modifier_records(
    split: HybridSplit,
    path: str | os.PathLike,
    language: str = "Python",
) -> int:
    """Stage-two supervision: |D1| gold records plus two records per relabeled
    instance, so the total is |D1| + 2 * |D2'|."""
    records: list[dict] = []
    for inst in sorted(split.d1, key=lambda i: i.instance_id):
        records.append(
            {
                "prompt": render_repair(
                    inst.problem_statement, inst.buggy_code, inst.diff_label, language
                ),
                "target": inst.fixed_code,
                "origin": ORIGIN_D1,
            }
        )
    for inst, predicted in sorted(split.d2_prime, key=lambda pair: pair[0].instance_id):
        gold_prompt = render_repair(
            inst.problem_statement, inst.buggy_code, inst.diff_label, language
        )
        pred_prompt = render_repair(inst.problem_statement, inst.buggy_code, predicted, language)
        records.append({"prompt": gold_prompt, "target": inst.fixed_code, "origin": ORIGIN_D2_GOLD})
        records.append({"prompt": pred_prompt, "target": inst.fixed_code, "origin": ORIGIN_D2_PRED})
    return _atomic_write_jsonl(path, records)


def mine_preference_pairs(
    instances: Sequence[RepairInstance],
    candidates: Mapping[str, Sequence[str]],
    judge_fn: Callable[[RepairInstance, str], RepairOutcome],
) -> list[PreferencePair]:
    """Build (preferred, dispreferred) pairs from judged candidate fixes.

    Candidates that pass the whole suite are ranked by consistency descending;
    candidates that do not are ranked by consistency ascending. The pair is
    (best correct, worst-consistency incorrect); instances missing either side
    contribute nothing.
    """
    pairs: list[PreferencePair] = []
    for inst in sorted(instances, key=lambda i: i.instance_id):
        cands = list(candidates.get(inst.instance_id, ()))
        if len(cands) < 2:
            continue
        correct: list[tuple[float, int, str, RepairOutcome]] = []
        incorrect: list[tuple[float, int, str, RepairOutcome]] = []
        for idx, code in enumerate(cands):
            outcome = judge_fn(inst, code)
            score = consistency(inst.buggy_code, code)
            if outcome.after.all_pass():
                correct.append((score, idx, code, outcome))
            else:
                incorrect.append((score, idx, code, outcome))
        if not correct or not incorrect:
            continue
        best = max(correct, key=lambda item: (item[0], -item[1]))
        worst = min(incorrect, key=lambda item: (item[0], item[1]))
        pairs.append(
            PreferencePair(
                instance=inst,
                preferred=best[2],
                dispreferred=worst[2],
                consistency_preferred=best[0],
                consistency_dispreferred=worst[0],
                verdicts_preferred=best[3].after.as_dict(),
                verdicts_dispreferred=worst[3].after.as_dict(),
            )
        )
    return pairs


def export_preference_records(
    pairs: Sequence[PreferencePair],
    path: str | os.PathLike,
    language: str = "Python",
) -> int:
    records = []
    for pair in sorted(pairs, key=lambda p: p.instance.instance_id):
        inst = pair.instance
        records.append(
            {
                "prompt": render_repair(
                    inst.problem_statement, inst.buggy_code, inst.diff_label, language
                ),
                "chosen": pair.preferred,
                "rejected": pair.dispreferred,
                "meta": {
                    "consistency_chosen": round(pair.consistency_preferred, 6),
                    "consistency_rejected": round(pair.consistency_dispreferred, 6),
                },
            }
        )
    return _atomic_write_jsonl(path, records)
