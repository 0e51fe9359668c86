"""
Seller activity data: profiles, time-stamped activity records, the
newline-delimited dataset format and a seeded synthetic generator.

Timestamps are integer seconds since the epoch, UTC.
"""
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field, fields
from decimal import Decimal
from typing import ClassVar, Optional, Tuple

import numpy as np

from marketguard.consts import DAY, DEFAULT_EFFECT_SIZES, GENERATOR_EPOCH_END
from marketguard.errors import InvalidInputError, ParseError, ValidationError
from marketguard.svm import FRAUDULENT, NORMAL
from marketguard.utils import dumps_records, iter_records, write_text

log = logging.getLogger('marketguard')

PROFILE = 'profile'
LABEL = 'label'
RETURN_REASONS = ('defective', 'not_as_described', 'never_arrived', 'other')


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


@dataclass(frozen=True)
class SellerProfile(object):
    seller_id: str
    display_name: str
    address: str
    email_domain: str
    enrolled_at: int
    tax_id: Optional[str] = None
    bank_account_hash: Optional[str] = None

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d):
        names = [f.name for f in fields(cls)]
        unknown = set(d) - set(names)
        if unknown:
            raise ValueError('unknown profile fields %s' % ', '.join(sorted(unknown)))
        for name in ('seller_id', 'display_name', 'address', 'email_domain'):
            if not isinstance(d.get(name), str):
                raise ValueError('profile field %r must be a string' % name)
        for name in ('tax_id', 'bank_account_hash'):
            if d.get(name) is not None and not isinstance(d[name], str):
                raise ValueError('profile field %r must be a string or null' % name)
        if not _is_int(d.get('enrolled_at')):
            raise ValueError('profile field enrolled_at must be an integer timestamp')
        return cls(**d)


@dataclass(frozen=True)
class Listing(object):
    kind: ClassVar[str] = 'listing'
    occurred_at: int
    declared_attributes_ok: bool


@dataclass(frozen=True)
class Order(object):
    kind: ClassVar[str] = 'order'
    occurred_at: int
    amount: float
    promised_ship: int
    actual_ship: Optional[int] = None
    order_id: Optional[str] = None

    @property
    def shipped(self):
        return self.actual_ship is not None

    @property
    def on_time(self):
        return self.shipped and self.actual_ship <= self.promised_ship


@dataclass(frozen=True)
class Return(object):
    kind: ClassVar[str] = 'return'
    occurred_at: int
    order_ref: str
    reason: str


@dataclass(frozen=True)
class Complaint(object):
    kind: ClassVar[str] = 'complaint'
    occurred_at: int
    severity: int


@dataclass(frozen=True)
class SocialSignal(object):
    kind: ClassVar[str] = 'social'
    occurred_at: int
    sentiment: float
    mentions: int


RECORD_TYPES = OrderedDict((t.kind, t) for t in (Listing, Order, Return, Complaint, SocialSignal))

# field name -> (type check, message)
_FIELD_TYPES = {
    'occurred_at': (_is_int, 'an integer timestamp'),
    'declared_attributes_ok': (lambda v: isinstance(v, bool), 'a boolean'),
    'amount': (_is_number, 'a number'),
    'promised_ship': (_is_int, 'an integer timestamp'),
    'actual_ship': (lambda v: v is None or _is_int(v), 'an integer timestamp or null'),
    'order_id': (lambda v: v is None or isinstance(v, str), 'a string or null'),
    'order_ref': (lambda v: isinstance(v, str), 'a string'),
    'reason': (lambda v: isinstance(v, str), 'a string'),
    'severity': (_is_int, 'an integer'),
    'sentiment': (_is_number, 'a number'),
    'mentions': (_is_int, 'an integer'),
}


def record_to_dict(record):
    d = {f.name: getattr(record, f.name) for f in fields(record)}
    d['kind'] = record.kind
    return d


def record_from_dict(kind, d):
    cls = RECORD_TYPES[kind]
    names = [f.name for f in fields(cls)]
    unknown = set(d) - set(names)
    if unknown:
        raise ValueError('unknown %s fields %s' % (kind, ', '.join(sorted(unknown))))
    for f in fields(cls):
        if f.name not in d:
            if f.default is not None:
                raise ValueError('%s record is missing %r' % (kind, f.name))
            continue
        check, what = _FIELD_TYPES[f.name]
        if not check(d[f.name]):
            raise ValueError('%s field %r must be %s, got %r' % (kind, f.name, what, d[f.name]))
    return cls(**d)


def record_violations(record):
    """range checks for one record; empty list when valid"""
    v = []
    if isinstance(record, Order):
        if record.amount < 0:
            v.append('order amount %r is negative' % record.amount)
    elif isinstance(record, Return):
        if record.reason not in RETURN_REASONS:
            v.append('return reason %r not one of %s' % (record.reason, ', '.join(RETURN_REASONS)))
    elif isinstance(record, Complaint):
        if not 1 <= record.severity <= 5:
            v.append('complaint severity %r outside [1, 5]' % record.severity)
    elif isinstance(record, SocialSignal):
        if not -1.0 <= record.sentiment <= 1.0:
            v.append('sentiment %r outside [-1, 1]' % record.sentiment)
        if record.mentions < 0:
            v.append('mentions %r is negative' % record.mentions)
    return v


@dataclass(frozen=True)
class SellerHistory(object):
    profile: SellerProfile
    records: Tuple = ()
    window: Tuple[int, int] = (0, 0)

    def __post_init__(self):
        object.__setattr__(self, 'records', tuple(self.records))
        object.__setattr__(self, 'window', tuple(self.window))

    @property
    def seller_id(self):
        return self.profile.seller_id

    def of_kind(self, cls):
        return [r for r in self.records if isinstance(r, cls)]


@dataclass(frozen=True)
class LabeledSeller(object):
    history: SellerHistory
    label: int

    def __post_init__(self):
        if self.label not in (NORMAL, FRAUDULENT):
            raise InvalidInputError('label must be -1 or +1, got %r' % (self.label,))


@dataclass(frozen=True)
class ValidationReport(object):
    seller_id: str
    violations: Tuple[str, ...] = ()

    @property
    def ok(self):
        return not self.violations


def validate_history(history):
    v = []
    if not history.profile.seller_id:
        v.append('seller_id is empty')
    start, end = history.window
    if start > end:
        v.append('window start %d after end %d' % (start, end))
    for prev, cur in zip(history.records, history.records[1:]):
        if cur.occurred_at < prev.occurred_at:
            v.append('records not time-ordered')
            break
    for i, r in enumerate(history.records):
        if not start <= r.occurred_at <= end:
            v.append('record %d (%s at %d) outside window [%d, %d]' % (i, r.kind, r.occurred_at, start, end))
        v.extend('record %d: %s' % (i, msg) for msg in record_violations(r))
    return ValidationReport(seller_id=history.profile.seller_id, violations=tuple(v))


def _history_to_dicts(history, label=None):
    sid = history.seller_id
    d = history.profile.to_dict()
    d.update(kind=PROFILE, window=list(history.window))
    out = [d]
    for r in history.records:
        rd = record_to_dict(r)
        rd['seller_id'] = sid
        out.append(rd)
    if label is not None:
        out.append({'kind': LABEL, 'seller_id': sid, 'label': label})
    return out


def dumps_dataset(sellers):
    """sellers: SellerHistory or LabeledSeller items, written in the given order"""
    objs = []
    for s in sellers:
        if isinstance(s, LabeledSeller):
            objs.extend(_history_to_dicts(s.history, s.label))
        else:
            objs.extend(_history_to_dicts(s))
    return dumps_records(objs)


def save_histories(path, sellers):
    write_text(path, dumps_dataset(sellers))


def _parse_window(obj, path, ln):
    window = obj.get('window')
    if window is None:
        return None
    if not (isinstance(window, list) and len(window) == 2 and all(_is_int(w) for w in window)):
        raise ParseError('window must be [start, end] integer timestamps', path=path, line=ln)
    return tuple(window)


def parse_dataset(lines, path=None):
    """returns [(SellerHistory, label or None)] in order of profile appearance"""
    profiles = OrderedDict()
    windows = {}
    records = {}
    labels = {}
    orphans = []
    for ln, obj in iter_records(lines, path=path):
        obj = dict(obj)
        kind = obj.pop('kind', None)
        sid = obj.get('seller_id')
        if not isinstance(sid, str) or not sid:
            raise ParseError('record has no seller_id', path=path, line=ln)
        if kind == PROFILE:
            if sid in profiles:
                raise ValidationError('duplicate seller_id %r (line %d)' % (sid, ln))
            windows[sid] = _parse_window(obj, path, ln)
            obj.pop('window', None)
            try:
                profiles[sid] = SellerProfile.from_dict(obj)
            except (TypeError, ValueError) as e:
                raise ParseError(str(e), path=path, line=ln)
        elif kind == LABEL:
            label = obj.get('label')
            if label not in (NORMAL, FRAUDULENT) or isinstance(label, bool):
                raise ParseError('label must be -1 or 1, got %r' % (label,), path=path, line=ln)
            if sid in labels:
                raise ParseError('seller %r labeled twice' % sid, path=path, line=ln)
            labels[sid] = (ln, label)
        elif kind in RECORD_TYPES:
            obj.pop('seller_id')
            try:
                record = record_from_dict(kind, obj)
            except (TypeError, ValueError) as e:
                raise ParseError(str(e), path=path, line=ln)
            problems = record_violations(record)
            if problems:
                raise ParseError('; '.join(problems), path=path, line=ln)
            records.setdefault(sid, []).append(record)
        else:
            raise ParseError('unknown record kind %r' % (kind,), path=path, line=ln)

    for sid in list(records) + [s for s in labels]:
        if sid not in profiles:
            orphans.append(sid)
    if orphans:
        raise ValidationError('records for sellers without a profile',
                              ['%r' % s for s in OrderedDict.fromkeys(orphans)])

    out = []
    problems = []
    for sid, profile in profiles.items():
        recs = sorted(records.get(sid, []), key=lambda r: r.occurred_at)
        window = windows[sid]
        if window is None:
            times = [r.occurred_at for r in recs] or [profile.enrolled_at]
            window = (min(times), max(times))
        history = SellerHistory(profile=profile, records=recs, window=window)
        report = validate_history(history)
        problems.extend('%s: %s' % (sid, msg) for msg in report.violations)
        out.append((history, labels[sid][1] if sid in labels else None))
    if problems:
        raise ValidationError('invalid seller histories', problems)
    log.debug('parsed %d sellers from %s', len(out), path or '<text>')
    return out


def load_histories(path):
    with open(path) as f:
        return [h for h, _ in parse_dataset(f, path=path)]


def load_labeled(path):
    with open(path) as f:
        parsed = parse_dataset(f, path=path)
    missing = [h.seller_id for h, label in parsed if label is None]
    if missing:
        raise ValidationError('%s: unlabeled sellers' % path, missing)
    return [LabeledSeller(history=h, label=label) for h, label in parsed]


def load_dataset(path):
    """labeled sellers when every seller carries a label, bare histories otherwise"""
    with open(path) as f:
        parsed = parse_dataset(f, path=path)
    if parsed and all(label is not None for _, label in parsed):
        return [LabeledSeller(history=h, label=label) for h, label in parsed]
    return [h for h, _ in parsed]


def split_dataset(sellers, holdout_fraction, seed=0):
    """seeded, stratified by label; both parts keep the input order"""
    if not 0 <= holdout_fraction < 1:
        raise InvalidInputError('holdout_fraction must be in [0, 1), got %r' % (holdout_fraction,))
    rng = np.random.default_rng(seed)
    held = set()
    for label in (NORMAL, FRAUDULENT):
        idx = [i for i, s in enumerate(sellers) if s.label == label]
        n = int(round(len(idx) * holdout_fraction))
        held.update(idx[j] for j in rng.permutation(len(idx))[:n])
    train = [s for i, s in enumerate(sellers) if i not in held]
    holdout = [s for i, s in enumerate(sellers) if i in held]
    return train, holdout


def _default_effects():
    return dict(DEFAULT_EFFECT_SIZES)


@dataclass(frozen=True)
class GeneratorConfig(object):
    n_sellers: int = 500
    fraud_fraction: float = 0.2
    window_days: int = 90
    effect_sizes: dict = field(default_factory=_default_effects)
    rng_seed: int = 0
    cold_start_fraction: float = 0.04

    def __post_init__(self):
        if not _is_int(self.n_sellers) or self.n_sellers <= 0:
            raise InvalidInputError('n_sellers must be a positive integer, got %r' % (self.n_sellers,))
        if not _is_number(self.fraud_fraction) or not 0 <= self.fraud_fraction <= 1:
            raise InvalidInputError('fraud_fraction must be in [0, 1], got %r' % (self.fraud_fraction,))
        if not _is_number(self.cold_start_fraction) or not 0 <= self.cold_start_fraction <= 1:
            raise InvalidInputError('cold_start_fraction must be in [0, 1], got %r' % (self.cold_start_fraction,))
        if not _is_int(self.window_days) or self.window_days <= 0:
            raise InvalidInputError('window_days must be a positive integer, got %r' % (self.window_days,))
        if not _is_int(self.rng_seed) or self.rng_seed < 0:
            raise InvalidInputError('rng_seed must be an unsigned integer, got %r' % (self.rng_seed,))
        unknown = set(self.effect_sizes) - set(DEFAULT_EFFECT_SIZES)
        if unknown:
            raise InvalidInputError('unknown effect sizes %s' % ', '.join(sorted(unknown)))

    def effect(self, name):
        return float(self.effect_sizes.get(name, 0.0))

    @property
    def n_fraudulent(self):
        # decimal arithmetic, so 0.29 * 100 floors to 29
        return int(Decimal(repr(float(self.fraud_fraction))) * self.n_sellers)

    @property
    def n_cold_start(self):
        return int(Decimal(repr(float(self.cold_start_fraction))) * self.n_sellers)


FIRST_WORDS = ('Acme', 'Blue', 'Crown', 'Delta', 'Eagle', 'Globe', 'Harbor', 'Lotus', 'Metro', 'Nova', 'Orbit',
               'Pioneer', 'Quartz', 'River', 'Summit', 'Urban')
SECOND_WORDS = ('Traders', 'Goods', 'Outlet', 'Supply', 'Bazaar', 'Emporium', 'Mart', 'Depot', 'Store', 'Works')
STREETS = ('Market', 'Church', 'Station', 'Mill', 'Park', 'Bridge', 'Harbour', 'King', 'Queen', 'Cedar')
CITIES = ('Springfield', 'Riverton', 'Lakeside', 'Fairview', 'Greenville', 'Ashford')
DOMAINS = ('mail.example', 'post.example', 'inbox.example', 'shopmail.example')


def _uniform_time(rng, lo, hi):
    return int(rng.integers(lo, hi + 1))


def _synthetic_history(rng, sid, fraud, cold, start, end, config):
    e = config.effect if fraud else (lambda name: 0.0)
    if cold:
        enrolled = _uniform_time(rng, start, end - DAY)
    else:
        enrolled = start - int(rng.integers(30, 720)) * DAY
    profile = SellerProfile(
        seller_id=sid,
        display_name='%s %s' % (FIRST_WORDS[rng.integers(len(FIRST_WORDS))],
                                SECOND_WORDS[rng.integers(len(SECOND_WORDS))]),
        address='%d %s Street, %s' % (int(rng.integers(1, 999)), STREETS[rng.integers(len(STREETS))],
                                      CITIES[rng.integers(len(CITIES))]),
        email_domain='%s.%s' % (sid.lower(), DOMAINS[rng.integers(len(DOMAINS))]),
        enrolled_at=enrolled,
        tax_id='TX%08d' % int(rng.integers(10 ** 8)),
        bank_account_hash='%016x' % int(rng.integers(2 ** 62)),
    )
    active_from = max(start, enrolled)
    records = []

    p_ok = min(1.0, max(0.0, 0.95 - e('listing_accuracy')))
    for _ in range(1 + int(rng.poisson(8))):
        records.append(Listing(occurred_at=_uniform_time(rng, active_from, end),
                               declared_attributes_ok=bool(rng.random() < p_ok)))

    if not cold:
        p_unshipped = 0.01 + 0.3 * e('sla_adherence')
        p_on_time = min(1.0, max(0.0, 0.93 - e('sla_adherence')))
        p_return = min(1.0, 0.05 + e('return_ratio'))
        p_complaint = min(1.0, 0.03 + e('complaint_rate'))
        severities = (2, 6) if fraud else (1, 4)
        n_orders = max(1, int(rng.poisson(40 * (1 + e('transaction_volume')))))
        for k in range(n_orders):
            t = _uniform_time(rng, active_from, end - DAY)
            order_id = '%s-O%04d' % (sid, k + 1)
            promised = t + int(rng.integers(1, 4)) * DAY
            if rng.random() < p_unshipped:
                actual = None
            elif rng.random() < p_on_time:
                actual = promised - int(rng.integers(0, DAY))
            else:
                actual = promised + int(rng.integers(1, 6)) * DAY
            records.append(Order(occurred_at=t, amount=round(float(rng.lognormal(3.5, 0.6)), 2),
                                 promised_ship=promised, actual_ship=actual, order_id=order_id))
            if rng.random() < p_return:
                reasons = RETURN_REASONS if not fraud else RETURN_REASONS[1:3] * 2 + RETURN_REASONS
                records.append(Return(occurred_at=min(end, promised + int(rng.integers(2, 10)) * DAY),
                                      order_ref=order_id, reason=reasons[rng.integers(len(reasons))]))
            if rng.random() < p_complaint:
                records.append(Complaint(occurred_at=min(end, t + int(rng.integers(3, 15)) * DAY),
                                         severity=int(rng.integers(*severities))))

    mean_sentiment = 0.3 - e('social_sentiment')
    for _ in range(1 + int(rng.poisson(3))):
        sentiment = min(1.0, max(-1.0, float(rng.normal(mean_sentiment, 0.25))))
        records.append(SocialSignal(occurred_at=_uniform_time(rng, active_from, end),
                                    sentiment=round(sentiment, 4), mentions=1 + int(rng.poisson(5))))

    order = sorted(range(len(records)), key=lambda i: (records[i].occurred_at, i))
    return SellerHistory(profile=profile, records=[records[i] for i in order], window=(start, end))


def generate_synthetic(config):
    rng = np.random.default_rng(config.rng_seed)
    n = config.n_sellers
    fraud = set(rng.permutation(n)[:config.n_fraudulent].tolist())
    cold = set(rng.permutation(n)[:config.n_cold_start].tolist())
    end = GENERATOR_EPOCH_END
    start = end - config.window_days * DAY
    sellers = []
    for i in range(n):
        sid = 'S%05d' % (i + 1)
        history = _synthetic_history(rng, sid, i in fraud, i in cold, start, end, config)
        sellers.append(LabeledSeller(history=history, label=FRAUDULENT if i in fraud else NORMAL))
    log.debug('generated %d sellers, %d fraudulent, %d cold start', n, len(fraud), len(cold))
    return sellers
