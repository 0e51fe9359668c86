import itertools
import json
from dataclasses import replace

import numpy as np
import pytest

from conftest import busy_history, history, profile
from marketguard.detection import (BASIS_COLD_START, BASIS_COMBINED, BASIS_EXPERT, BASIS_REPUTATION, BANNED, CLEAN,
                                   VERDICT_FRAUDULENT, VERDICT_INSUFFICIENT, VERDICT_NORMAL, ExpertInput, ExpertStore,
                                   FraudVerdict, FusionPolicy, PipelineContext, ReputationMatch, ReputationRecord,
                                   ReputationStore, SignalBundle, TrainingPool, apply_expert_labels, detect_all,
                                   detect_seller, dumps_bundle, fuse, ingest_expert_input, loads_bundle,
                                   reputation_match, score_verdicts)
from marketguard.errors import ConfigError, InvalidInputError, ManifestMismatchError, NotFoundError, \
    ReputationError
from marketguard.marketplace import LabeledSeller, Order
from marketguard.rules import RuleOutcome, default_ruleset
from marketguard.svm import FRAUDULENT, NORMAL


def banned(**kwargs):
    d = dict(display_name='Crooked Goods', address='9 Mill Street, Ashford', email_domain='crooked.example',
             tax_id='TX-BANNED', bank_account_hash='bank-banned')
    d.update(kwargs)
    return ReputationRecord(attributes=profile('B00001', **d), status=BANNED, recorded_at=1)


def outcome(score=0.0):
    return RuleOutcome(fired=(), aggregate_score=score, flagged=score >= 2.0)


def bundle(expert=None, reputation=None, has_history=True, svm=0.0, score=0.0):
    return SignalBundle(seller_id='T00001', rule_outcome=outcome(score), rule_threshold=2.0,
                        has_history=has_history, reputation=reputation, expert_verdict=expert,
                        svm_score=svm if has_history else None)


def expert_input(verdict='fraudulent', seller_id='T00001', expert_id='alice', recorded_at=10):
    return ExpertInput(seller_id=seller_id, verdict=verdict, expert_id=expert_id, recorded_at=recorded_at)


REPUTATION_HIT = ReputationMatch(record=banned(), matched_on=('tax_id',))


# ---------- reputation ----------

def test_strong_identifier_matches():
    p = profile('N00001', bank_account_hash='bank-banned')
    match = reputation_match([banned()], p)
    assert match is not None and match.strong
    assert match.matched_on == ('bank_account_hash',)


def test_one_weak_identifier_is_not_enough():
    assert reputation_match([banned()], profile('N00001', email_domain='crooked.example')) is None


def test_two_weak_identifiers_match_under_a_new_name():
    p = profile('N00001', address='9 MILL street,  Ashford', email_domain='Crooked.Example', display_name='Fresh Start')
    match = reputation_match([banned()], p)
    assert match is not None
    assert match.matched_on == ('address', 'email_domain')


def test_reordered_name_counts_as_the_same_name():
    p = profile('N00001', display_name='goods CROOKED', email_domain='crooked.example')
    assert reputation_match([banned()], p).matched_on == ('email_domain', 'display_name')


def test_clean_records_never_match():
    clean = ReputationRecord(attributes=banned().attributes, status=CLEAN)
    assert reputation_match([clean], profile('N00001', tax_id='TX-BANNED')) is None


def test_banned_records_are_immutable(tmp_path):
    path = str(tmp_path / 'reputation.ndjson')
    store = ReputationStore(path=path)
    store.add(banned())
    with pytest.raises(ReputationError):
        store.add(ReputationRecord(attributes=banned().attributes, status=CLEAN))
    assert len(ReputationStore.load(path)) == 1


# ---------- expert inputs ----------

def test_expert_input_lands_in_the_pool(tmp_path):
    store = ExpertStore.load(str(tmp_path / 'experts.ndjson'))
    pool = TrainingPool(histories=[history('T00001')])
    assert len(pool) == 0
    ack = ingest_expert_input(store, expert_input(), pool)
    assert ack.accepted and not ack.duplicate
    assert pool.labeled_sellers() == [LabeledSeller(history=history('T00001'), label=FRAUDULENT)]

    again = ingest_expert_input(store, expert_input(recorded_at=20), pool)
    assert again.duplicate and not again.accepted
    assert len(ExpertStore.load(store.path)) == 1


def test_expert_input_for_unknown_seller(tmp_path):
    store = ExpertStore(path=str(tmp_path / 'experts.ndjson'))
    with pytest.raises(NotFoundError):
        ingest_expert_input(store, expert_input(seller_id='NOPE'), TrainingPool(histories=[history()]))
    with pytest.raises(InvalidInputError):
        expert_input(seller_id='')


def test_latest_expert_label_wins_at_retraining():
    store = ExpertStore([expert_input('fraudulent', recorded_at=1), expert_input('normal', 'T00001', 'bob', 5)])
    pool = TrainingPool([LabeledSeller(history=history(), label=FRAUDULENT)])
    assert apply_expert_labels(pool, store) == 1
    assert pool.labeled_sellers()[0].label == NORMAL


# ---------- fusion ----------

def test_expert_decides_outright():
    v = fuse(bundle(expert=expert_input('fraudulent'), svm=-3.0), FusionPolicy())
    assert (v.verdict, v.confidence, v.basis) == (VERDICT_FRAUDULENT, 1.0, BASIS_EXPERT)
    v = fuse(bundle(expert=expert_input('normal'), reputation=REPUTATION_HIT, svm=5.0, score=4.0), FusionPolicy())
    assert (v.verdict, v.confidence) == (VERDICT_NORMAL, 1.0)


def test_cold_start_without_overrides():
    v = fuse(bundle(has_history=False), FusionPolicy())
    assert (v.verdict, v.confidence, v.basis) == (VERDICT_INSUFFICIENT, 0.0, BASIS_COLD_START)
    assert v.signal('svm') is None


def test_combined_score_arithmetic():
    v = fuse(bundle(svm=0.0, score=0.0), FusionPolicy())
    assert v.verdict == VERDICT_NORMAL
    assert v.confidence == pytest.approx(0.70)
    assert v.signal('combined') == pytest.approx(0.30)

    v = fuse(bundle(svm=0.0, score=2.0), FusionPolicy())
    assert v.verdict == VERDICT_FRAUDULENT
    assert v.confidence == pytest.approx(0.70)


def test_precedence_is_total():
    experts = (None, expert_input('fraudulent'), expert_input('normal'))
    for expert, reputation, has_history in itertools.product(experts, (None, REPUTATION_HIT), (True, False)):
        v = fuse(bundle(expert=expert, reputation=reputation, has_history=has_history, svm=1.0, score=1.0),
                 FusionPolicy())
        if expert is not None:
            assert v.basis == BASIS_EXPERT
            assert v.verdict == (VERDICT_FRAUDULENT if expert.verdict == 'fraudulent' else VERDICT_NORMAL)
        elif reputation is not None:
            assert (v.basis, v.verdict, v.confidence) == (BASIS_REPUTATION, VERDICT_FRAUDULENT, 0.95)
        elif not has_history:
            assert (v.basis, v.verdict) == (BASIS_COLD_START, VERDICT_INSUFFICIENT)
        else:
            assert v.basis == BASIS_COMBINED
            assert v.verdict in (VERDICT_FRAUDULENT, VERDICT_NORMAL)


def test_random_bundles():
    rng = np.random.default_rng(1000)
    policies = [FusionPolicy(), FusionPolicy(w_rules=1.0, w_svm=0.0, fusion_threshold=1.0),
                FusionPolicy(w_rules=0.0, w_svm=1.0, fusion_threshold=0.0)]
    for k in range(1000):
        expert = [None, expert_input('fraudulent'), expert_input('normal')][rng.integers(3)]
        reputation = REPUTATION_HIT if rng.random() < 0.3 else None
        has_history = bool(rng.random() < 0.8)
        b = bundle(expert=expert, reputation=reputation, has_history=has_history,
                   svm=float(rng.normal(scale=50.0)), score=float(rng.uniform(0, 10)))
        policy = policies[k % len(policies)]
        v = fuse(b, policy)
        assert 0.0 <= v.confidence <= 1.0
        if not has_history and expert is None and reputation is None:
            assert v.verdict == VERDICT_INSUFFICIENT
        if expert is not None:
            perturbed = bundle(expert=expert, reputation=REPUTATION_HIT if reputation is None else None,
                               has_history=not has_history, svm=float(rng.normal(scale=50.0)),
                               score=float(rng.uniform(0, 10)))
            assert fuse(perturbed, policy).verdict == v.verdict


def test_fusion_policy_validation():
    with pytest.raises(ConfigError):
        FusionPolicy(w_rules=-0.1, w_svm=1.1)
    with pytest.raises(ConfigError):
        FusionPolicy(w_rules=0.5, w_svm=0.6)
    with pytest.raises(ConfigError):
        FusionPolicy(fusion_threshold=1.5)


def test_svm_score_needs_history():
    with pytest.raises(InvalidInputError):
        SignalBundle(seller_id='T00001', rule_outcome=outcome(), rule_threshold=2.0, has_history=False,
                     svm_score=0.5)


def test_verdict_bounds():
    with pytest.raises(InvalidInputError):
        FraudVerdict(seller_id='T00001', verdict=VERDICT_NORMAL, confidence=1.5, basis=BASIS_COMBINED)
    v = FraudVerdict(seller_id='T00001', verdict=VERDICT_NORMAL, confidence=0.5, basis=BASIS_COMBINED,
                     contributing=[['rules', 0.5]])
    assert FraudVerdict.from_dict(json.loads(json.dumps(v.to_dict()))) == v


# ---------- model bundle and pipeline ----------

def test_bundle_document(small_bundle):
    text = dumps_bundle(small_bundle)
    again = loads_bundle(text)
    assert dumps_bundle(again) == text

    doc = json.loads(text)
    doc['manifest'] = doc['manifest'][:-1]
    with pytest.raises(ManifestMismatchError):
        loads_bundle(json.dumps(doc))

    doc = json.loads(text)
    doc['format'] = 'someone-else/1'
    with pytest.raises(InvalidInputError, match='unsupported model format'):
        loads_bundle(json.dumps(doc))


def context(bundle_, reputation=(), experts=None):
    return PipelineContext(bundle=bundle_, ruleset=default_ruleset(), reputation=reputation, experts=experts)


def test_cold_start_seller(small_bundle):
    v = detect_seller(context(small_bundle), history('N00001', tax_id=None, bank_account_hash=None))
    assert v.verdict == VERDICT_INSUFFICIENT


def test_banned_seller_is_caught_under_any_features(small_bundle):
    clean_looking = busy_history('N00002')
    reborn = history('N00002', records=clean_looking.records, tax_id='TX-BANNED')
    v = detect_seller(context(small_bundle, reputation=[banned()]), reborn)
    assert (v.verdict, v.basis) == (VERDICT_FRAUDULENT, BASIS_REPUTATION)


def test_expert_verdict_reaches_detection(small_bundle):
    experts = ExpertStore([expert_input('fraudulent', seller_id='N00003')])
    v = detect_seller(context(small_bundle, experts=experts), busy_history('N00003'))
    assert (v.verdict, v.basis) == (VERDICT_FRAUDULENT, BASIS_EXPERT)


def test_generated_cold_start_sellers_stay_insufficient(small_corpus, small_bundle):
    cold = [s.history for s in small_corpus if not s.history.of_kind(Order)]
    assert cold
    for v in detect_all(context(small_bundle), cold):
        assert v.verdict == VERDICT_INSUFFICIENT


def test_parallel_detection_keeps_order(small_corpus, small_bundle):
    histories = [s.history for s in small_corpus]
    ctx = context(small_bundle)
    assert detect_all(ctx, histories, workers=4) == detect_all(ctx, histories)


def test_manifest_mismatch_is_caught(small_bundle):
    with pytest.raises(ManifestMismatchError):
        context(replace(small_bundle, manifest=tuple(reversed(small_bundle.manifest))))


# ---------- metrics ----------

def verdicts_for(sellers, verdict_of):
    return [FraudVerdict(seller_id=s.history.seller_id, verdict=verdict_of(s), confidence=1.0, basis=BASIS_COMBINED)
            for s in sellers]


def test_perfect_and_blind_verdicts(small_corpus):
    perfect = verdicts_for(small_corpus, lambda s: VERDICT_FRAUDULENT if s.label == FRAUDULENT else VERDICT_NORMAL)
    m = score_verdicts(small_corpus, perfect)
    assert (m.precision, m.recall) == (1.0, 1.0)

    blind = verdicts_for(small_corpus, lambda s: VERDICT_NORMAL)
    m = score_verdicts(small_corpus, blind)
    assert m.recall == 0.0
    assert m.fn == 16


def test_insufficient_history_is_counted_apart(small_corpus):
    verdicts = verdicts_for(small_corpus, lambda s: VERDICT_INSUFFICIENT if not s.history.of_kind(Order)
                            else (VERDICT_FRAUDULENT if s.label == FRAUDULENT else VERDICT_NORMAL))
    m = score_verdicts(small_corpus, verdicts)
    assert m.insufficient == 8
    assert m.tp + m.fp + m.tn + m.fn == len(small_corpus) - 8
    with pytest.raises(NotFoundError):
        score_verdicts(small_corpus, verdicts[1:])
