import math

import numpy as np
import pytest

from marketguard.consts import DEFAULT_RULES, FEATURE_MANIFEST, RULES_FORMAT
from marketguard.errors import ConfigError
from marketguard.features import FeatureVector
from marketguard.rules import COMPARATORS, Rule, RuleSet, default_ruleset, evaluate, loads_ruleset, normalized_score

HEADER = '[ruleset]\nformat = %s\ndecision_threshold = %%s\n' % RULES_FORMAT


def features(**kwargs):
    d = dict(listing_accuracy=1.0, transaction_volume=40.0, sla_adherence=0.95, return_ratio=0.05,
             complaint_rate=0.05, customer_satisfaction=0.99, social_sentiment=0.3, has_history=True)
    d.update(kwargs)
    return FeatureVector(**d)


def rule_text(rule_id, feature, comparator, value, weight):
    return '\n[rule %s]\nfeature = %s\ncomparator = %s\nvalue = %s\nweight = %s\n' % (
        rule_id, feature, comparator, value, weight)


def test_default_ruleset_loads():
    ruleset = default_ruleset()
    assert ruleset.decision_threshold == 2.0
    assert [r.id for r in ruleset.rules] == ['high_return_ratio', 'late_shipping', 'complaint_pressure',
                                             'inaccurate_listings', 'negative_buzz']
    assert loads_ruleset(DEFAULT_RULES) == ruleset


def test_fired_weights_add_up():
    ruleset = default_ruleset()
    clean = evaluate(ruleset, features())
    assert clean.fired == () and clean.aggregate_score == 0.0 and not clean.flagged

    bad = evaluate(ruleset, features(return_ratio=0.3, sla_adherence=0.5, social_sentiment=-0.2))
    assert bad.fired == ('high_return_ratio', 'late_shipping', 'negative_buzz')
    assert bad.aggregate_score == 2.5
    assert bad.flagged
    assert normalized_score(bad, ruleset.decision_threshold) == 1.0
    assert normalized_score(evaluate(ruleset, features(return_ratio=0.3)), 2.0) == 0.5


def test_comparators():
    on_the_line = features(return_ratio=0.12)
    for comparator, expected in (('<', False), ('<=', True), ('>', False), ('>=', True), ('=', True)):
        rule = Rule(id='r', feature='return_ratio', comparator=comparator, threshold_value=0.12, weight=1.0)
        assert rule.fires(on_the_line) is expected, comparator


def test_random_rulesets_score_exactly():
    rng = np.random.default_rng(99)
    comparators = list(COMPARATORS)
    for _ in range(200):
        rules = []
        for k in range(int(rng.integers(0, 9))):
            rules.append(Rule(id='r%d' % k, feature=str(rng.choice(FEATURE_MANIFEST)),
                              comparator=str(rng.choice(comparators)),
                              threshold_value=float(np.round(rng.uniform(-1, 1), 2)),
                              weight=float(rng.uniform(0, 3))))
        ruleset = RuleSet(rules=rules, decision_threshold=float(rng.uniform(0, 5)))
        fv = features(**dict((name, float(np.round(rng.uniform(-1, 1), 2))) for name in FEATURE_MANIFEST))

        outcome = evaluate(ruleset, fv)
        expected = []
        for r in rules:
            x = getattr(fv, r.feature)
            if {'<': x < r.threshold_value, '<=': x <= r.threshold_value, '>': x > r.threshold_value,
                    '>=': x >= r.threshold_value, '=': abs(x - r.threshold_value) <= 1e-9}[r.comparator]:
                expected.append(r)
        assert outcome.fired == tuple(r.id for r in expected)
        assert outcome.aggregate_score == math.fsum(r.weight for r in expected)
        assert outcome.flagged == (outcome.aggregate_score >= ruleset.decision_threshold)


def test_zero_threshold_always_flags():
    ruleset = loads_ruleset(HEADER % '0')
    outcome = evaluate(ruleset, features())
    assert outcome.flagged
    assert normalized_score(outcome, 0.0) == 1.0


def test_duplicate_rule_id():
    text = HEADER % '1' + rule_text('a', 'return_ratio', '>', 0.1, 1) + rule_text('a', 'return_ratio', '>', 0.2, 1)
    with pytest.raises(ConfigError, match="duplicate rule id 'a'"):
        loads_ruleset(text)


def test_unknown_comparator():
    with pytest.raises(ConfigError, match='unsupported comparator'):
        loads_ruleset(HEADER % '1' + rule_text('a', 'return_ratio', '!=', 0.1, 1))


def test_all_violations_are_reported_together():
    text = HEADER % '-1' + rule_text('a', 'shoe_size', '>', 0.1, 1) + rule_text('b', 'return_ratio', '>', 0.1, -2)
    with pytest.raises(ConfigError) as e:
        loads_ruleset(text, source='rules.ini')
    message = str(e.value)
    assert message.startswith('rules.ini')
    assert "unknown feature 'shoe_size'" in message
    assert 'weight must be' in message
    assert 'decision_threshold' in message


def test_header_is_required():
    with pytest.raises(ConfigError, match=r'missing \[ruleset\]'):
        loads_ruleset(rule_text('a', 'return_ratio', '>', 0.1, 1))
    with pytest.raises(ConfigError, match='unsupported format'):
        loads_ruleset('[ruleset]\nformat = other/9\ndecision_threshold = 1\n')


def test_unicode_comparator_aliases():
    ruleset = loads_ruleset(HEADER % '1' + rule_text('a', 'sla_adherence', u'≤', 0.8, 1))
    assert ruleset.get('a').comparator == '<='


def random_rules(rng, prefix, n):
    return [Rule(id='%s%d' % (prefix, k), feature=str(rng.choice(FEATURE_MANIFEST)),
                 comparator=str(rng.choice(list(COMPARATORS))),
                 threshold_value=float(np.round(rng.uniform(-1, 1), 2)), weight=float(rng.uniform(0, 3)))
            for k in range(n)]


def random_features(rng):
    return features(**dict((name, float(np.round(rng.uniform(-1, 1), 2))) for name in FEATURE_MANIFEST))


def test_disjoint_rulesets_add_up():
    rng = np.random.default_rng(5)
    for _ in range(100):
        left = random_rules(rng, 'a', int(rng.integers(0, 6)))
        right = random_rules(rng, 'b', int(rng.integers(0, 6)))
        fv = random_features(rng)
        both = evaluate(RuleSet(rules=left + right), fv)
        parts = evaluate(RuleSet(rules=left), fv).aggregate_score + evaluate(RuleSet(rules=right), fv).aggregate_score
        assert both.aggregate_score == pytest.approx(parts, abs=1e-9)


def test_adding_a_rule_never_lowers_the_score():
    rng = np.random.default_rng(6)
    for _ in range(100):
        rules = random_rules(rng, 'r', int(rng.integers(0, 8)))
        extra = random_rules(rng, 'x', 1)
        fv = random_features(rng)
        before = evaluate(RuleSet(rules=rules, decision_threshold=1.0), fv)
        after = evaluate(RuleSet(rules=rules + extra, decision_threshold=1.0), fv)
        assert after.aggregate_score >= before.aggregate_score
        assert set(before.fired) <= set(after.fired)
        assert after.flagged or not before.flagged
