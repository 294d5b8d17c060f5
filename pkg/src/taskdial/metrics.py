"""Evaluation metrics: state accuracy, task completion, BLEU, breakdowns.

State metrics compare normalized inform values. Task completion follows
the delexicalized-tag convention: a dialogue informs correctly when, for
every goal domain with constraints, a name/id tag was produced and the
stably-first entity matching the final predicted state satisfies the
goal; success additionally requires every requested slot's tag to appear.
All metrics are pure functions of replayed transcripts plus gold data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .kb import KB, normalize_value
from .ontology import DialogueState, Ontology


# -- dialogue state metrics -----------------------------------------------------------


def _inform_triples(state: DialogueState) -> frozenset:
    return frozenset(
        (d, s, normalize_value(" ".join(v)))
        for d, slots in state.inform.items()
        for s, v in slots.items()
    )


def joint_accuracy(pred_states, gold_states) -> float:
    """Fraction of turns whose full normalized inform set matches gold."""
    if len(pred_states) != len(gold_states):
        raise DataError(f"misaligned turn lists: {len(pred_states)} vs {len(gold_states)}")
    if not gold_states:
        return 0.0
    hits = sum(_inform_triples(p) == _inform_triples(g) for p, g in zip(pred_states, gold_states))
    return hits / len(gold_states)


def slot_accuracy(pred_states, gold_states, ontology: Ontology) -> float:
    """Per-(turn, valid inform pair) value accuracy, counting absent as "none"."""
    if len(pred_states) != len(gold_states):
        raise DataError(f"misaligned turn lists: {len(pred_states)} vs {len(gold_states)}")
    pairs = ontology.inform_pairs
    if not gold_states or not pairs:
        return 0.0
    hits = 0
    for p, g in zip(pred_states, gold_states):
        for d, s in pairs:
            pv = normalize_value(" ".join(p.value(d, s)))
            gv = normalize_value(" ".join(g.value(d, s)))
            hits += pv == gv
    return hits / (len(gold_states) * len(pairs))


def request_f1(pred_states, gold_states, ontology: Ontology) -> float:
    """Micro F1 over requested (domain, slot) pairs; 1.0 when both sides empty."""
    if len(pred_states) != len(gold_states):
        raise DataError(f"misaligned turn lists: {len(pred_states)} vs {len(gold_states)}")
    tp = fp = fn = 0
    for p, g in zip(pred_states, gold_states):
        p_set = {(d, s) for d, slots in p.request.items() for s in slots}
        g_set = {(d, s) for d, slots in g.request.items() for s in slots}
        tp += len(p_set & g_set)
        fp += len(p_set - g_set)
        fn += len(g_set - p_set)
    if tp + fp + fn == 0:
        return 1.0
    return 2 * tp / (2 * tp + fp + fn)


def act_exact_match(pred_act_sets, gold_act_sets) -> float:
    """Fraction of turns whose predicted act set equals gold exactly."""
    if len(pred_act_sets) != len(gold_act_sets):
        raise DataError("misaligned act lists")
    if not gold_act_sets:
        return 0.0
    hits = sum(set(p) == set(g) for p, g in zip(pred_act_sets, gold_act_sets))
    return hits / len(gold_act_sets)


# -- BLEU -----------------------------------------------------------------------------


def _ngram_table(tokens, n: int) -> dict:
    table: dict = {}
    for i in range(len(tokens) - n + 1):
        g = tuple(tokens[i : i + n])
        table[g] = table.get(g, 0) + 1
    return table


def corpus_bleu(candidates, references) -> float:
    """Corpus BLEU-4: modified n-gram precisions and brevity penalty, unsmoothed."""
    if len(candidates) != len(references):
        raise DataError(f"misaligned corpora: {len(candidates)} vs {len(references)}")
    if not candidates:
        return 0.0
    stats = np.zeros((4, 2), dtype=np.int64)  # per order: [clipped matches, candidate ngrams]
    cand_len = ref_len = 0
    for cand, ref in zip(candidates, references):
        cand, ref = list(cand), list(ref)
        cand_len += len(cand)
        ref_len += len(ref)
        for n in range(1, 5):
            c_tab = _ngram_table(cand, n)
            r_tab = _ngram_table(ref, n)
            for g, c in c_tab.items():
                stats[n - 1, 0] += c if c <= r_tab.get(g, 0) else r_tab.get(g, 0)
            stats[n - 1, 1] += len(cand) - n + 1 if len(cand) >= n else 0
    if cand_len == 0 or (stats == 0).any():
        return 0.0
    precision = 1.0
    for n in range(4):
        precision *= (stats[n, 0] / stats[n, 1]) ** 0.25
    brevity = 1.0 if cand_len > ref_len else float(np.exp(1.0 - ref_len / cand_len))
    return brevity * precision


# -- task completion ------------------------------------------------------------------


def _stable_rows(kb: KB, domain: str, state: DialogueState):
    columns = kb.table(domain).columns
    return sorted(
        kb.query_state(state, domain),
        key=lambda r: tuple(str(r.get(c, "")) for c in columns),
    )


def _requested_tag(ontology: Ontology, domain: str, slot_name: str) -> str:
    known = {s.name for s in ontology.slots}
    key = ontology.slot(slot_name).key if slot_name in known else slot_name
    return f"{domain}_{key}"


def inform_success(dialogues, kb: KB, ontology: Ontology):
    """(inform rate, success rate, dialogues scored, dialogues excluded).

    One dialogue informs when every goal domain with constraints and a DB
    table got a name/id tag in some system response and the stably-first
    entity matching the final predicted state satisfies the goal
    constraints; it succeeds when it informs and every goal-requested
    slot's tag appears in the system responses. Dialogues without goals
    are excluded and counted.
    """
    inform_hits = success_hits = scored = excluded = 0
    for record in dialogues:
        goal = record.goal or {}
        if not goal:
            excluded += 1
            continue
        scored += 1
        final_state = record.turns[-1].pred_state
        sys_tokens = set()
        for t in record.turns:
            sys_tokens.update(t.response_pred)

        inform_ok = all(
            _domain_informed(kb, domain, spec, final_state, sys_tokens)
            for domain, spec in goal.items()
        )
        success_ok = inform_ok and all(
            _requested_tag(ontology, domain, slot) in sys_tokens
            for domain, spec in goal.items()
            for slot in spec.get("requested", [])
        )
        inform_hits += inform_ok
        success_hits += success_ok
    if scored == 0:
        return 0.0, 0.0, 0, excluded
    return inform_hits / scored, success_hits / scored, scored, excluded


def _domain_informed(kb: KB, domain: str, spec: dict, final_state: DialogueState, sys_tokens: set) -> bool:
    constraints = spec.get("constraints", {})
    if not constraints or not kb.has_db(domain):
        return True  # nothing to offer (or no table to offer from, e.g. taxi)
    if f"{domain}_name" not in sys_tokens and f"{domain}_id" not in sys_tokens:
        return False
    offered = _stable_rows(kb, domain, final_state)
    if not offered:
        return False
    return offered[0] in kb.query(domain, dict(constraints))


# -- aggregate report -----------------------------------------------------------------


@dataclass
class EvalReport:
    """Everything one evaluation run produces."""

    mode: str
    overall: dict = field(default_factory=dict)
    per_domain: dict = field(default_factory=dict)
    by_dialogue_type: dict = field(default_factory=dict)
    per_turn_joint: list = field(default_factory=list)  # [(turn index, rate, count)]
    per_turn_bleu: list = field(default_factory=list)
    scored_dialogues: int = 0
    excluded_dialogues: int = 0

    def summary(self) -> dict:
        keys = ("joint_acc", "slot_acc", "request_f1", "inform", "success", "bleu", "act_match")
        return {k: self.overall[k] for k in keys if k in self.overall}

    def format_table(self) -> str:
        lines = [f"mode: {self.mode}"]
        width = max((len(k) for k in self.overall), default=0)
        for k in sorted(self.overall):
            lines.append(f"  {k:<{width}}  {self.overall[k]:.4f}")
        if self.per_domain:
            lines.append("per-domain:")
            for dom in sorted(self.per_domain):
                cells = "  ".join(f"{k}={v:.4f}" for k, v in sorted(self.per_domain[dom].items()))
                lines.append(f"  {dom:<12}  {cells}")
        if self.by_dialogue_type:
            lines.append("by dialogue type:")
            for kind in sorted(self.by_dialogue_type):
                cells = "  ".join(f"{k}={v:.4f}" for k, v in sorted(self.by_dialogue_type[kind].items()))
                lines.append(f"  {kind:<12}  {cells}")
        if self.excluded_dialogues:
            lines.append(f"goalless dialogues excluded from Inform/Success: {self.excluded_dialogues}")
        return "\n".join(lines)

    def to_tsv(self) -> str:
        rows = [("metric", "value")]
        rows += [(k, f"{v:.6f}") for k, v in sorted(self.overall.items())]
        for dom in sorted(self.per_domain):
            rows += [(f"{dom}.{k}", f"{v:.6f}") for k, v in sorted(self.per_domain[dom].items())]
        for kind in sorted(self.by_dialogue_type):
            rows += [(f"{kind}.{k}", f"{v:.6f}") for k, v in sorted(self.by_dialogue_type[kind].items())]
        return "\n".join("\t".join(r) for r in rows)

    def curves_tsv(self) -> dict:
        out = {}
        for name, curve in (("joint_by_turn", self.per_turn_joint), ("bleu_by_turn", self.per_turn_bleu)):
            lines = ["turn\tvalue"] + [f"{t}\t{v:.6f}" for t, v, _ in curve]
            out[name] = "\n".join(lines)
        return out


def _restrict(state: DialogueState, domain: str) -> DialogueState:
    return DialogueState(
        inform={domain: dict(state.inform.get(domain, {}))},
        request={domain: set(state.request.get(domain, set()))},
    )


def score_replay(dialogues, kb: KB, ontology: Ontology, mode: str) -> EvalReport:
    """Compute the mode-appropriate metric set over replayed dialogues."""
    report = EvalReport(mode=mode)
    flat = [(rec, t) for rec in dialogues for t in rec.turns]
    preds = [t.pred_state for _, t in flat]
    golds = [t.gold_state for _, t in flat]

    track_scored = mode in ("dst", "e2e")
    decode_scored = mode in ("c2t", "e2e")

    if track_scored:
        report.overall["joint_acc"] = joint_accuracy(preds, golds)
        report.overall["slot_acc"] = slot_accuracy(preds, golds, ontology)
        report.overall["request_f1"] = request_f1(preds, golds, ontology)

        for domain in ontology.domains:
            touched = [
                (p, g) for p, g in zip(preds, golds)
                if domain in g.domains_touched() or domain in p.domains_touched()
            ]
            if not touched:
                continue
            dp = [_restrict(p, domain) for p, _ in touched]
            dg = [_restrict(g, domain) for _, g in touched]
            sub = Ontology(
                domains=list(ontology.domains),
                slots=list(ontology.slots),
                pairs=[(d, s) for d, s in ontology.pairs if d == domain],
                acts=list(ontology.acts),
            )
            report.per_domain.setdefault(domain, {})
            report.per_domain[domain]["joint_acc"] = joint_accuracy(dp, dg)
            report.per_domain[domain]["slot_acc"] = slot_accuracy(dp, dg, sub)

        single = [r for r in dialogues if len(_goal_domains(r, ontology)) <= 1]
        multi = [r for r in dialogues if len(_goal_domains(r, ontology)) > 1]
        for kind, group in (("single-domain", single), ("multi-domain", multi)):
            if not group:
                continue
            gp = [t.pred_state for r in group for t in r.turns]
            gg = [t.gold_state for r in group for t in r.turns]
            report.by_dialogue_type[kind] = {
                "joint_acc": joint_accuracy(gp, gg),
                "slot_acc": slot_accuracy(gp, gg, ontology),
                "dialogues": float(len(group)),
            }

        by_turn: dict = {}
        for _, t in flat:
            by_turn.setdefault(t.turn_index, []).append(t)
        for idx in sorted(by_turn):
            group = by_turn[idx]
            rate = joint_accuracy([t.pred_state for t in group], [t.gold_state for t in group])
            report.per_turn_joint.append((idx, rate, len(group)))

    if decode_scored:
        cands = [t.response_pred for _, t in flat]
        refs = [t.response_gold for _, t in flat]
        report.overall["bleu"] = corpus_bleu(cands, refs)
        report.overall["act_match"] = act_exact_match(
            [t.pred_acts for _, t in flat], [t.gold_acts for _, t in flat]
        )
        inform, success, scored, excluded = inform_success(dialogues, kb, ontology)
        report.overall["inform"] = inform
        report.overall["success"] = success
        report.scored_dialogues = scored
        report.excluded_dialogues = excluded

        for domain in ontology.domains:
            group = [r for r in dialogues if _goal_domains(r, ontology) == {domain}]
            if not group or not kb.has_db(domain):
                continue
            inf, suc, n, _ = inform_success(group, kb, ontology)
            if n:
                report.per_domain.setdefault(domain, {})
                report.per_domain[domain]["inform"] = inf
                report.per_domain[domain]["success"] = suc

        by_turn = {}
        for _, t in flat:
            by_turn.setdefault(t.turn_index, []).append(t)
        for idx in sorted(by_turn):
            group = by_turn[idx]
            b = corpus_bleu([t.response_pred for t in group], [t.response_gold for t in group])
            report.per_turn_bleu.append((idx, b, len(group)))

    return report


def _goal_domains(record, ontology: Ontology) -> set:
    if record.goal:
        return {d for d in record.goal if d in ontology.domains}
    return {d for t in record.turns for d in t.gold_state.domains_touched()}


def evaluate_model(model, turns, kb: KB, beam_size: int = None) -> EvalReport:
    """Replay the corpus through the model and score it."""
    from .inference import replay_corpus

    dialogues = replay_corpus(model, turns, kb, beam_size=beam_size)
    return score_replay(dialogues, kb, model.ontology, model.cfg.mode)
