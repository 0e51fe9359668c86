"""
Weighted rules over extracted seller features.

A ruleset file is INI: one ``[ruleset]`` header section carrying the format
tag and ``decision_threshold``, then one ``[rule <id>]`` section per rule::

    [rule high_return_ratio]
    feature = return_ratio
    comparator = >
    value = 0.12
    weight = 1.0
    description = more than 12% of orders come back

Every fired rule adds its weight; the seller is flagged when the sum reaches
the threshold. Compound conditions are written as several rules.
"""
import configparser
import logging
import math
import operator
import re
from collections import OrderedDict
from dataclasses import dataclass
from typing import Tuple

from marketguard.consts import DEFAULT_RULES, FEATURE_MANIFEST, RULES_FORMAT
from marketguard.errors import ConfigError

log = logging.getLogger('marketguard')

HEADER_SECTION = 'ruleset'
RULE_PREFIX = 'rule '
EQ_TOL = 1e-9

COMPARATORS = OrderedDict([
    ('<', operator.lt),
    ('<=', operator.le),
    ('>', operator.gt),
    ('>=', operator.ge),
    ('=', lambda a, b: abs(a - b) <= EQ_TOL),
])
COMPARATOR_ALIASES = {u'≤': '<=', u'≥': '>='}

SECTION_REG = re.compile(r'^\s*\[([^\]]*)\]', flags=re.MULTILINE)


@dataclass(frozen=True)
class Rule(object):
    id: str
    feature: str
    comparator: str
    threshold_value: float
    weight: float
    description: str = ''

    def fires(self, features):
        return COMPARATORS[self.comparator](getattr(features, self.feature), self.threshold_value)

    def __str__(self):
        return '%s %s %g' % (self.feature, self.comparator, self.threshold_value)


def rule_violations(rule):
    v = []
    if not rule.id:
        v.append('rule with empty id')
    if rule.feature not in FEATURE_MANIFEST:
        v.append('rule %r: unknown feature %r' % (rule.id, rule.feature))
    if rule.comparator not in COMPARATORS:
        v.append('rule %r: unsupported comparator %r' % (rule.id, rule.comparator))
    if not math.isfinite(rule.threshold_value):
        v.append('rule %r: value must be finite' % rule.id)
    if not math.isfinite(rule.weight) or rule.weight < 0:
        v.append('rule %r: weight must be a finite number >= 0, got %r' % (rule.id, rule.weight))
    return v


@dataclass(frozen=True)
class RuleSet(object):
    rules: Tuple[Rule, ...] = ()
    decision_threshold: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, 'rules', tuple(self.rules))
        v = []
        seen = set()
        for rule in self.rules:
            if rule.id in seen:
                v.append('duplicate rule id %r' % rule.id)
            seen.add(rule.id)
            v.extend(rule_violations(rule))
        if not math.isfinite(self.decision_threshold) or self.decision_threshold < 0:
            v.append('decision_threshold must be a finite number >= 0, got %r' % (self.decision_threshold,))
        if v:
            raise ConfigError('invalid ruleset: ' + '; '.join(v))

    def get(self, rule_id):
        for rule in self.rules:
            if rule.id == rule_id:
                return rule


@dataclass(frozen=True)
class RuleOutcome(object):
    fired: Tuple[str, ...]
    aggregate_score: float
    flagged: bool


def evaluate(ruleset, features):
    fired = [r for r in ruleset.rules if r.fires(features)]
    score = math.fsum(r.weight for r in fired)
    return RuleOutcome(fired=tuple(r.id for r in fired), aggregate_score=score,
                       flagged=score >= ruleset.decision_threshold)


def normalized_score(outcome, decision_threshold):
    """aggregate / threshold, capped at 1; a zero threshold always saturates"""
    if decision_threshold <= 0:
        return 1.0
    return min(outcome.aggregate_score / decision_threshold, 1.0)


def _number(cp, section, key, violations, label):
    try:
        raw = cp.get(section, key)
    except configparser.NoOptionError:
        violations.append('%s: missing %r' % (label, key))
        return None
    try:
        return float(raw)
    except ValueError:
        violations.append('%s: %r is not a number: %r' % (label, key, raw))
        return None


def loads_ruleset(text, source='<text>'):
    violations = []
    ids = [s.strip() for s in SECTION_REG.findall(text)]
    for name, count in OrderedDict((s, ids.count(s)) for s in ids).items():
        if count > 1:
            if name.startswith(RULE_PREFIX):
                violations.append('duplicate rule id %r' % name[len(RULE_PREFIX):].strip())
            else:
                violations.append('duplicate section [%s]' % name)

    cp = configparser.RawConfigParser(strict=False)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as e:
        raise ConfigError('%s: %s' % (source, e))

    threshold = None
    if not cp.has_section(HEADER_SECTION):
        violations.append('missing [%s] section' % HEADER_SECTION)
    else:
        fmt = cp.get(HEADER_SECTION, 'format', fallback=None)
        if fmt != RULES_FORMAT:
            violations.append('unsupported format %r, expected %r' % (fmt, RULES_FORMAT))
        threshold = _number(cp, HEADER_SECTION, 'decision_threshold', violations, '[%s]' % HEADER_SECTION)
        if threshold is not None and (not math.isfinite(threshold) or threshold < 0):
            violations.append('decision_threshold must be a finite number >= 0, got %r' % threshold)

    rules = []
    for section in cp.sections():
        if section == HEADER_SECTION:
            continue
        if not section.startswith(RULE_PREFIX):
            violations.append('unknown section [%s]' % section)
            continue
        rule_id = section[len(RULE_PREFIX):].strip()
        label = 'rule %r' % rule_id
        feature = cp.get(section, 'feature', fallback='')
        comparator = cp.get(section, 'comparator', fallback='').strip()
        comparator = COMPARATOR_ALIASES.get(comparator, comparator)
        value = _number(cp, section, 'value', violations, label)
        weight = _number(cp, section, 'weight', violations, label)
        if value is None or weight is None:
            continue
        rule = Rule(id=rule_id, feature=feature.strip(), comparator=comparator, threshold_value=value,
                    weight=weight, description=cp.get(section, 'description', fallback='').strip())
        violations.extend(rule_violations(rule))
        rules.append(rule)

    if violations:
        raise ConfigError('%s: invalid ruleset: %s' % (source, '; '.join(OrderedDict.fromkeys(violations))))
    ruleset = RuleSet(rules=rules, decision_threshold=threshold)
    log.debug('loaded %d rules from %s', len(rules), source)
    return ruleset


def load_ruleset(path):
    with open(path) as f:
        return loads_ruleset(f.read(), source=path)


def default_ruleset():
    return loads_ruleset(DEFAULT_RULES, source='built-in ruleset')
