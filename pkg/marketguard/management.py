"""
Fraud management: FraudVerdicts -> marketplace actions on a confidence
ladder, the append-only actions ledger and the post-deadline grace review.
"""
import enum
import logging
import math
import os
from dataclasses import dataclass
from typing import Optional

from marketguard.consts import DAY
from marketguard.detection import BASIS_REPUTATION, VERDICT_FRAUDULENT, dumps_verdicts
from marketguard.errors import ConfigError, InvalidInputError, ParseError
from marketguard.utils import append_records, digest, read_records

log = logging.getLogger('marketguard')

REVIEW_PENDING = 'pending'
REVIEW_BAN = 'ban'
REVIEW_CLEAR = 'clear'
REVIEW_UNKNOWN = 'no-verdict'


class Action(enum.IntEnum):
    NoAction = 0
    Warn = 1
    SuspendWithGrace = 2
    Ban = 3


@dataclass(frozen=True)
class PolicyConfig(object):
    """
    Action ladder bands. Only the lower edges pick an action; warn_high and
    suspend_high are checked for ordering and nothing else. A confidence
    inside a gap between bands gets the rung below it.
    """
    warn_low: float = 0.5
    warn_high: float = 0.7
    suspend_low: float = 0.7
    suspend_high: float = 0.9
    ban_floor: float = 0.9
    grace_period_days: int = 14
    repeat_escalation: bool = True

    def __post_init__(self):
        edges = (self.warn_low, self.warn_high, self.suspend_low, self.suspend_high, self.ban_floor)
        if not all(isinstance(e, (int, float)) and math.isfinite(e) and 0 <= e <= 1 for e in edges):
            raise ConfigError('policy band edges must be numbers in [0, 1], got %r' % (edges,))
        if not (self.warn_low < self.warn_high <= self.suspend_low < self.suspend_high <= self.ban_floor):
            raise ConfigError('policy bands must be disjoint and ordered warn < suspend < ban, got '
                              'warn [%g, %g) suspend [%g, %g) ban >= %g' % edges)
        if isinstance(self.grace_period_days, bool) or not isinstance(self.grace_period_days, int) \
                or self.grace_period_days <= 0:
            raise ConfigError('grace_period_days must be a positive integer, got %r' % (self.grace_period_days,))

    def band_action(self, confidence):
        """highest rung whose lower edge the confidence reaches; gaps fall to the rung below"""
        if confidence >= self.ban_floor:
            return Action.Ban
        if confidence >= self.suspend_low:
            return Action.SuspendWithGrace
        if confidence >= self.warn_low:
            return Action.Warn
        return Action.NoAction


@dataclass(frozen=True)
class ActionDecision(object):
    seller_id: str
    action: Action
    decided_at: int
    deadline: Optional[int] = None
    rationale: str = ''
    batch: str = ''

    def __post_init__(self):
        object.__setattr__(self, 'action', Action(self.action))
        if (self.deadline is not None) != (self.action == Action.SuspendWithGrace):
            raise InvalidInputError('deadline is set exactly for SuspendWithGrace, got %s with deadline %r'
                                    % (self.action.name, self.deadline))

    def to_dict(self):
        return {'kind': 'action', 'seller_id': self.seller_id, 'action': self.action.name,
                'decided_at': self.decided_at, 'deadline': self.deadline, 'rationale': self.rationale,
                'batch': self.batch}

    @classmethod
    def from_dict(cls, d):
        return cls(seller_id=d['seller_id'], action=Action[d['action']], decided_at=d['decided_at'],
                   deadline=d.get('deadline'), rationale=d.get('rationale', ''), batch=d.get('batch', ''))


def decide_action(verdict, policy, prior_actions=(), now=0, batch=''):
    if verdict.verdict != VERDICT_FRAUDULENT:
        return ActionDecision(seller_id=verdict.seller_id, action=Action.NoAction, decided_at=now,
                              rationale='verdict %s' % verdict.verdict, batch=batch)

    if verdict.basis == BASIS_REPUTATION:
        action = Action.Ban
        rationale = 'matches a banned reputation record'
    else:
        action = policy.band_action(verdict.confidence)
        rationale = 'confidence %.3f in %s band' % (verdict.confidence, action.name)
        priors = [p for p in prior_actions if p.seller_id == verdict.seller_id
                  and p.action in (Action.Warn, Action.SuspendWithGrace)]
        if policy.repeat_escalation and priors and action != Action.NoAction and action < Action.Ban:
            action = Action(action + 1)
            rationale += ', escalated to %s after %d prior action(s)' % (action.name, len(priors))

    deadline = None
    if action == Action.SuspendWithGrace:
        deadline = now + policy.grace_period_days * DAY
    return ActionDecision(seller_id=verdict.seller_id, action=action, decided_at=now, deadline=deadline,
                          rationale=rationale, batch=batch)


def batch_digest(verdicts):
    return digest(dumps_verdicts(verdicts))


def load_ledger(path):
    """prior decisions, oldest first; a missing ledger is an empty one"""
    if not os.path.exists(path):
        return []
    ledger = []
    for ln, obj in read_records(path):
        if obj.get('kind') != 'action':
            raise ParseError('expected an action record, got kind %r' % obj.get('kind'), path=path, line=ln)
        try:
            ledger.append(ActionDecision.from_dict(obj))
        except (KeyError, TypeError, ValueError, InvalidInputError) as e:
            raise ParseError('invalid action record: %s' % e, path=path, line=ln)
    return ledger


def append_ledger(path, decisions):
    if decisions:
        append_records(path, [d.to_dict() for d in decisions])


def act_on_batch(verdicts, policy, ledger, now):
    """
    Decisions to append for one verdict batch. Sellers already acted on for
    the same batch are skipped, NoAction is never recorded. Returns
    (decisions, skipped seller ids).
    """
    batch = batch_digest(verdicts)
    done = set(d.seller_id for d in ledger if d.batch == batch)
    priors = list(ledger)
    decisions, skipped = [], []
    for v in verdicts:
        if v.seller_id in done:
            skipped.append(v.seller_id)
            continue
        decision = decide_action(v, policy, priors, now=now, batch=batch)
        if decision.action == Action.NoAction:
            continue
        decisions.append(decision)
        priors.append(decision)
        done.add(v.seller_id)
    if skipped:
        log.info('%d seller(s) already acted on for batch %s', len(skipped), batch[:12])
    return decisions, skipped


@dataclass(frozen=True)
class GraceReview(object):
    seller_id: str
    deadline: int
    status: str
    recommendation: Optional[Action] = None

    def to_dict(self):
        return {'kind': 'grace', 'seller_id': self.seller_id, 'deadline': self.deadline, 'status': self.status,
                'recommendation': self.recommendation.name if self.recommendation is not None else None}


def review_grace_periods(ledger, verdicts, now):
    """
    Re-checks every open suspension. Before the deadline it stays pending;
    after it a seller still judged Fraudulent is recommended for Ban and the
    rest are cleared. A later Ban closes the suspension.
    """
    latest = {}
    for d in ledger:
        latest[d.seller_id] = d
    current = dict((v.seller_id, v) for v in verdicts)
    reviews = []
    for sid, d in sorted(latest.items()):
        if d.action != Action.SuspendWithGrace:
            continue
        if now < d.deadline:
            reviews.append(GraceReview(seller_id=sid, deadline=d.deadline, status=REVIEW_PENDING))
        elif sid not in current:
            reviews.append(GraceReview(seller_id=sid, deadline=d.deadline, status=REVIEW_UNKNOWN))
        elif current[sid].verdict == VERDICT_FRAUDULENT:
            reviews.append(GraceReview(seller_id=sid, deadline=d.deadline, status=REVIEW_BAN,
                                       recommendation=Action.Ban))
        else:
            reviews.append(GraceReview(seller_id=sid, deadline=d.deadline, status=REVIEW_CLEAR,
                                       recommendation=Action.NoAction))
    return reviews
