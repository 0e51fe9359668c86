"""
Fraud detection: reputation data, expert inputs, the rules engine and the
SVM prediction are gathered per seller into a SignalBundle and fused into
one FraudVerdict.

Fusion precedence: an expert verdict decides outright, then a banned
reputation match, then cold start (no orders, no SVM score), and only then
the weighted mix of rule score and sigmoid(SVM decision value).
"""
import json
import logging
import math
import os
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Tuple

from marketguard.consts import FEATURE_MANIFEST, MANIFEST_VERSION, MODEL_FORMAT
from marketguard.errors import (ConfigError, InvalidInputError, ManifestMismatchError, NotFoundError, ParseError,
                                ReputationError)
from marketguard.features import ScalingParams, apply_scaling, extract, fit_scaling, scale_all
from marketguard.marketplace import LabeledSeller, SellerProfile
from marketguard.rules import evaluate, normalized_score
from marketguard.svm import FRAUDULENT, NORMAL, SvmModel, decision_value, kkt_violation, train_smo
from marketguard.utils import append_records, clamp, dumps_record, normalize_name, normalize_text, read_records, \
    sigmoid, write_text

log = logging.getLogger('marketguard')

BANNED = 'banned'
CLEAN = 'clean'
INTERNAL = 'internal'
EXTERNAL = 'external'

EXPERT_FRAUDULENT = 'fraudulent'
EXPERT_NORMAL = 'normal'

VERDICT_FRAUDULENT = 'Fraudulent'
VERDICT_NORMAL = 'Normal'
VERDICT_INSUFFICIENT = 'InsufficientHistory'
VERDICTS = (VERDICT_FRAUDULENT, VERDICT_NORMAL, VERDICT_INSUFFICIENT)

BASIS_EXPERT = 'expert'
BASIS_REPUTATION = 'reputation'
BASIS_COLD_START = 'cold_start'
BASIS_COMBINED = 'combined'

EXPERT_CONFIDENCE = 1.0
REPUTATION_CONFIDENCE = 0.95

STRONG_IDENTIFIERS = ('tax_id', 'bank_account_hash')
WEAK_IDENTIFIERS = ('address', 'email_domain', 'display_name')


# ---------- reputation ----------

@dataclass(frozen=True)
class ReputationRecord(object):
    attributes: SellerProfile
    status: str
    source: str = INTERNAL
    recorded_at: int = 0

    def __post_init__(self):
        if self.status not in (BANNED, CLEAN):
            raise InvalidInputError('reputation status must be banned or clean, got %r' % (self.status,))
        if self.source not in (INTERNAL, EXTERNAL):
            raise InvalidInputError('reputation source must be internal or external, got %r' % (self.source,))

    def to_dict(self):
        return {'kind': 'reputation', 'status': self.status, 'source': self.source,
                'recorded_at': self.recorded_at, 'profile': self.attributes.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(attributes=SellerProfile.from_dict(d['profile']), status=d['status'],
                   source=d.get('source', INTERNAL), recorded_at=d.get('recorded_at', 0))


@dataclass(frozen=True)
class ReputationMatch(object):
    record: ReputationRecord
    matched_on: Tuple[str, ...]

    @property
    def strong(self):
        return any(m in STRONG_IDENTIFIERS for m in self.matched_on)


def _weak_identifiers(profile):
    return {
        'address': normalize_text(profile.address),
        'email_domain': (profile.email_domain or '').strip().lower(),
        'display_name': normalize_name(profile.display_name),
    }


def reputation_match(db, profile):
    """
    A banned record matches on any shared strong identifier (tax id, bank
    account hash) or on at least two shared weak ones (address, email
    domain, normalized display name). Strong matches win over weak ones.
    """
    weak = _weak_identifiers(profile)
    best = None
    for record in db:
        if record.status != BANNED:
            continue
        other = record.attributes
        strong = tuple(k for k in STRONG_IDENTIFIERS
                       if getattr(profile, k) and getattr(profile, k) == getattr(other, k))
        if strong:
            return ReputationMatch(record=record, matched_on=strong)
        theirs = _weak_identifiers(other)
        shared = tuple(k for k in WEAK_IDENTIFIERS if weak[k] and weak[k] == theirs[k])
        if len(shared) >= 2 and best is None:
            best = ReputationMatch(record=record, matched_on=shared)
    return best


class ReputationStore(object):
    """append-only; a banned entry can never be superseded"""

    def __init__(self, records=(), path=None):
        self.path = path
        self.records = []
        for r in records:
            self._check(r)
            self.records.append(r)

    @classmethod
    def load(cls, path):
        records = []
        for ln, obj in read_records(path):
            if obj.get('kind') != 'reputation':
                raise ParseError('expected a reputation record, got kind %r' % obj.get('kind'), path=path, line=ln)
            try:
                records.append(ReputationRecord.from_dict(obj))
            except (KeyError, TypeError, ValueError, InvalidInputError) as e:
                raise ParseError('invalid reputation record: %s' % e, path=path, line=ln)
        log.debug('loaded %d reputation records from %s', len(records), path)
        return cls(records, path=path)

    def _check(self, record):
        sid = record.attributes.seller_id
        if record.status == CLEAN and any(r.status == BANNED and r.attributes.seller_id == sid
                                          for r in self.records):
            raise ReputationError('seller %s is banned; banned records are immutable' % sid)

    def add(self, record):
        self._check(record)
        self.records.append(record)
        if self.path:
            append_records(self.path, [record.to_dict()])

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)


# ---------- expert inputs and the training pool ----------

@dataclass(frozen=True)
class ExpertInput(object):
    seller_id: str
    verdict: str
    expert_id: str
    note: str = ''
    recorded_at: int = 0

    def __post_init__(self):
        if not self.seller_id:
            raise InvalidInputError('expert input needs a seller_id')
        if self.verdict not in (EXPERT_FRAUDULENT, EXPERT_NORMAL):
            raise InvalidInputError('expert verdict must be fraudulent or normal, got %r' % (self.verdict,))

    @property
    def key(self):
        return self.expert_id, self.seller_id, self.verdict

    @property
    def label(self):
        return FRAUDULENT if self.verdict == EXPERT_FRAUDULENT else NORMAL

    def to_dict(self):
        return {'kind': 'expert', 'seller_id': self.seller_id, 'verdict': self.verdict, 'expert_id': self.expert_id,
                'note': self.note, 'recorded_at': self.recorded_at}

    @classmethod
    def from_dict(cls, d):
        return cls(seller_id=d['seller_id'], verdict=d['verdict'], expert_id=d.get('expert_id', ''),
                   note=d.get('note', ''), recorded_at=d.get('recorded_at', 0))


class ExpertStore(object):
    """newline-delimited expert inputs; one writer at a time"""

    def __init__(self, inputs=(), path=None):
        self.path = path
        self.inputs = list(inputs)

    @classmethod
    def load(cls, path):
        if not os.path.exists(path):
            return cls(path=path)
        inputs = []
        for ln, obj in read_records(path):
            if obj.get('kind') != 'expert':
                raise ParseError('expected an expert record, got kind %r' % obj.get('kind'), path=path, line=ln)
            try:
                inputs.append(ExpertInput.from_dict(obj))
            except (KeyError, TypeError, InvalidInputError) as e:
                raise ParseError('invalid expert record: %s' % e, path=path, line=ln)
        return cls(inputs, path=path)

    def contains(self, expert_input):
        return any(i.key == expert_input.key for i in self.inputs)

    def append(self, expert_input):
        self.inputs.append(expert_input)
        if self.path:
            append_records(self.path, [expert_input.to_dict()])

    def latest_for(self, seller_id):
        latest = None
        for i in self.inputs:
            if i.seller_id == seller_id and (latest is None or i.recorded_at >= latest.recorded_at):
                latest = i
        return latest

    def __len__(self):
        return len(self.inputs)


class TrainingPool(object):
    """labeled sellers for the next (re)training, plus every known history"""

    def __init__(self, labeled=(), histories=()):
        self.histories = OrderedDict()
        self.labels = OrderedDict()
        for h in histories:
            self.histories[h.seller_id] = h
        for s in labeled:
            self.histories[s.history.seller_id] = s.history
            self.labels[s.history.seller_id] = s.label

    def label(self, seller_id, label):
        if seller_id not in self.histories:
            raise NotFoundError('unknown seller %r' % seller_id)
        self.labels[seller_id] = label

    def labeled_sellers(self):
        return [LabeledSeller(history=self.histories[sid], label=label) for sid, label in self.labels.items()]

    def __len__(self):
        return len(self.labels)


@dataclass(frozen=True)
class Acknowledgement(object):
    seller_id: str
    accepted: bool
    duplicate: bool = False


def ingest_expert_input(store, expert_input, pool):
    if expert_input.seller_id not in pool.histories:
        raise NotFoundError('unknown seller %r' % expert_input.seller_id)
    if store.contains(expert_input):
        log.debug('expert input %s already recorded', expert_input.key)
        return Acknowledgement(seller_id=expert_input.seller_id, accepted=False, duplicate=True)
    store.append(expert_input)
    pool.label(expert_input.seller_id, expert_input.label)
    return Acknowledgement(seller_id=expert_input.seller_id, accepted=True)


def apply_expert_labels(pool, store):
    """folds the latest expert verdict per known seller into the pool; returns how many"""
    applied = 0
    for sid in OrderedDict.fromkeys(i.seller_id for i in store.inputs):
        if sid in pool.histories:
            pool.label(sid, store.latest_for(sid).label)
            applied += 1
        else:
            log.warning('expert input for unknown seller %s ignored', sid)
    return applied


# ---------- fusion ----------

@dataclass(frozen=True)
class SignalBundle(object):
    seller_id: str
    rule_outcome: object
    rule_threshold: float
    has_history: bool
    reputation: Optional[ReputationMatch] = None
    expert_verdict: Optional[ExpertInput] = None
    svm_score: Optional[float] = None

    def __post_init__(self):
        if self.has_history != (self.svm_score is not None):
            raise InvalidInputError('svm_score must be present exactly when the seller has history')

    @property
    def reputation_hit(self):
        return self.reputation is not None


@dataclass(frozen=True)
class FusionPolicy(object):
    w_rules: float = 0.4
    w_svm: float = 0.6
    fusion_threshold: float = 0.5

    def __post_init__(self):
        for name in ('w_rules', 'w_svm', 'fusion_threshold'):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value) or value < 0:
                raise ConfigError('fusion %s must be a finite number >= 0, got %r' % (name, value))
        if abs(self.w_rules + self.w_svm - 1.0) > 1e-9:
            raise ConfigError('fusion weights must sum to 1, got %r + %r' % (self.w_rules, self.w_svm))
        if self.fusion_threshold > 1:
            raise ConfigError('fusion_threshold must be in [0, 1], got %r' % (self.fusion_threshold,))


@dataclass(frozen=True)
class FraudVerdict(object):
    seller_id: str
    verdict: str
    confidence: float
    basis: str
    contributing: Tuple[Tuple[str, object], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, 'contributing', tuple(tuple(c) for c in self.contributing))
        if self.verdict not in VERDICTS:
            raise InvalidInputError('unknown verdict %r' % (self.verdict,))
        if not 0.0 <= self.confidence <= 1.0:
            raise InvalidInputError('confidence %r outside [0, 1]' % (self.confidence,))

    def signal(self, name):
        for k, v in self.contributing:
            if k == name:
                return v

    def to_dict(self):
        return {'kind': 'verdict', 'seller_id': self.seller_id, 'verdict': self.verdict,
                'confidence': self.confidence, 'basis': self.basis,
                'contributing': [list(c) for c in self.contributing]}

    @classmethod
    def from_dict(cls, d):
        return cls(seller_id=d['seller_id'], verdict=d['verdict'], confidence=d['confidence'], basis=d['basis'],
                   contributing=d.get('contributing', ()))


def fuse(bundle, policy):
    outcome = bundle.rule_outcome
    if bundle.expert_verdict is not None:
        e = bundle.expert_verdict
        verdict = VERDICT_FRAUDULENT if e.verdict == EXPERT_FRAUDULENT else VERDICT_NORMAL
        return FraudVerdict(seller_id=bundle.seller_id, verdict=verdict, confidence=EXPERT_CONFIDENCE,
                            basis=BASIS_EXPERT, contributing=(('expert', e.verdict), ('expert_id', e.expert_id)))
    if bundle.reputation_hit:
        m = bundle.reputation
        return FraudVerdict(seller_id=bundle.seller_id, verdict=VERDICT_FRAUDULENT, confidence=REPUTATION_CONFIDENCE,
                            basis=BASIS_REPUTATION,
                            contributing=(('reputation', m.record.attributes.seller_id),
                                          ('matched_on', ','.join(m.matched_on))))
    if not bundle.has_history:
        return FraudVerdict(seller_id=bundle.seller_id, verdict=VERDICT_INSUFFICIENT, confidence=0.0,
                            basis=BASIS_COLD_START, contributing=(('rules', outcome.aggregate_score),))

    rule_part = normalized_score(outcome, bundle.rule_threshold)
    svm_part = sigmoid(bundle.svm_score)
    s = clamp(policy.w_rules * rule_part + policy.w_svm * svm_part, 0.0, 1.0)
    if s >= policy.fusion_threshold:
        verdict, confidence = VERDICT_FRAUDULENT, s
    else:
        verdict, confidence = VERDICT_NORMAL, 1.0 - s
    return FraudVerdict(seller_id=bundle.seller_id, verdict=verdict, confidence=confidence, basis=BASIS_COMBINED,
                        contributing=(('rules', rule_part), ('svm', bundle.svm_score), ('combined', s)))


# ---------- model bundle ----------

@dataclass(frozen=True)
class ModelBundle(object):
    """trained SVM plus the scaling and feature manifest it was trained under"""
    model: SvmModel
    scaling: ScalingParams
    manifest: Tuple[str, ...] = FEATURE_MANIFEST

    def to_document(self):
        return OrderedDict([
            ('format', MODEL_FORMAT),
            ('manifest_version', MANIFEST_VERSION),
            ('manifest', list(self.manifest)),
            ('scaling', self.scaling.to_dict()),
            ('svm', self.model.to_dict()),
        ])


def dumps_bundle(bundle):
    return json.dumps(bundle.to_document(), indent=2, allow_nan=False) + '\n'


def loads_bundle(text, source='<text>'):
    try:
        doc = json.loads(text)
    except ValueError as e:
        raise ParseError('model file is not a valid document: %s' % e, path=source)
    if not isinstance(doc, dict) or doc.get('format') != MODEL_FORMAT:
        raise InvalidInputError('%s: unsupported model format %r, expected %r'
                                % (source, isinstance(doc, dict) and doc.get('format'), MODEL_FORMAT))
    if doc.get('manifest_version') != MANIFEST_VERSION or tuple(doc.get('manifest', ())) != FEATURE_MANIFEST:
        raise ManifestMismatchError('%s: model was trained under manifest %s %s, extractor provides %s %s'
                                    % (source, doc.get('manifest_version'), doc.get('manifest'),
                                       MANIFEST_VERSION, list(FEATURE_MANIFEST)))
    try:
        scaling = ScalingParams.from_dict(doc['scaling'])
        model = SvmModel.from_dict(doc['svm'])
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError('model file is incomplete: %s' % e, path=source)
    return ModelBundle(model=model, scaling=scaling, manifest=tuple(doc['manifest']))


def save_bundle(path, bundle):
    write_text(path, dumps_bundle(bundle))


def load_bundle(path):
    with open(path) as f:
        return loads_bundle(f.read(), source=path)


@dataclass(frozen=True)
class TrainingSummary(object):
    bundle: ModelBundle
    n_used: int
    n_cold_start: int
    kkt_violation: float


def train_detector(sellers, kernel=None, config=None):
    """extract -> fit scaling -> scale -> SMO; sellers without orders are left out"""
    used = []
    vectors = []
    for s in sellers:
        v = extract(s.history)
        if v.has_history:
            used.append(s)
            vectors.append(v)
    if not vectors:
        raise InvalidInputError('no seller with order history to train on')
    scaling = fit_scaling(vectors)
    X = scale_all(scaling, vectors)
    y = [s.label for s in used]
    model = train_smo(X, y, kernel=kernel, config=config)
    violation = kkt_violation(model, X, y)
    log.debug('trained on %d sellers, %d support samples', len(used), model.n_support)
    return TrainingSummary(bundle=ModelBundle(model=model, scaling=scaling), n_used=len(used),
                           n_cold_start=len(sellers) - len(used), kkt_violation=violation)


# ---------- pipeline ----------

@dataclass
class PipelineContext(object):
    bundle: ModelBundle
    ruleset: object
    reputation: object = ()
    experts: Optional[ExpertStore] = None
    policy: FusionPolicy = field(default_factory=FusionPolicy)

    def __post_init__(self):
        check_manifest(self.bundle)


def check_manifest(bundle):
    if tuple(bundle.manifest) != FEATURE_MANIFEST or tuple(bundle.scaling.manifest) != FEATURE_MANIFEST:
        raise ManifestMismatchError('model manifest %s does not match extractor manifest %s'
                                    % (list(bundle.manifest), list(FEATURE_MANIFEST)))
    if bundle.model.dimension != len(FEATURE_MANIFEST):
        raise ManifestMismatchError('model expects %d features, extractor provides %d'
                                    % (bundle.model.dimension, len(FEATURE_MANIFEST)))


def collect_signals(context, history):
    features = extract(history)
    outcome = evaluate(context.ruleset, features)
    svm_score = None
    if features.has_history:
        svm_score = decision_value(context.bundle.model, apply_scaling(context.bundle.scaling, features))
    expert = context.experts.latest_for(history.seller_id) if context.experts is not None else None
    return SignalBundle(seller_id=history.seller_id, rule_outcome=outcome,
                        rule_threshold=context.ruleset.decision_threshold, has_history=features.has_history,
                        reputation=reputation_match(context.reputation, history.profile),
                        expert_verdict=expert, svm_score=svm_score)


def detect_seller(context, history):
    check_manifest(context.bundle)
    return fuse(collect_signals(context, history), context.policy)


def detect_all(context, histories, workers=1):
    """verdicts in input order; workers > 1 fans out over a thread pool"""
    if workers <= 1:
        return [detect_seller(context, h) for h in histories]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda h: detect_seller(context, h), histories))


def dumps_verdicts(verdicts):
    return ''.join(dumps_record(v.to_dict()) + '\n' for v in verdicts)


def load_verdicts(path):
    verdicts = []
    for ln, obj in read_records(path):
        if obj.get('kind') != 'verdict':
            raise ParseError('expected a verdict record, got kind %r' % obj.get('kind'), path=path, line=ln)
        try:
            verdicts.append(FraudVerdict.from_dict(obj))
        except (KeyError, TypeError, InvalidInputError) as e:
            raise ParseError('invalid verdict record: %s' % e, path=path, line=ln)
    return verdicts


# ---------- evaluation ----------

@dataclass(frozen=True)
class Metrics(object):
    tp: int
    fp: int
    tn: int
    fn: int
    insufficient_fraudulent: int
    insufficient_normal: int

    @property
    def precision(self):
        return self.tp / float(self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self):
        return self.tp / float(self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def insufficient(self):
        return self.insufficient_fraudulent + self.insufficient_normal

    def to_dict(self):
        return {'kind': 'metrics', 'tp': self.tp, 'fp': self.fp, 'tn': self.tn, 'fn': self.fn,
                'precision': self.precision, 'recall': self.recall,
                'insufficient_fraudulent': self.insufficient_fraudulent,
                'insufficient_normal': self.insufficient_normal}


def score_verdicts(labeled, verdicts):
    """confusion counts for the Fraudulent class; InsufficientHistory counted apart"""
    by_id = dict((v.seller_id, v) for v in verdicts)
    tp = fp = tn = fn = ins_f = ins_n = 0
    for s in labeled:
        v = by_id.get(s.history.seller_id)
        if v is None:
            raise NotFoundError('no verdict for seller %r' % s.history.seller_id)
        fraud = s.label == FRAUDULENT
        if v.verdict == VERDICT_INSUFFICIENT:
            if fraud:
                ins_f += 1
            else:
                ins_n += 1
        elif v.verdict == VERDICT_FRAUDULENT:
            if fraud:
                tp += 1
            else:
                fp += 1
        elif fraud:
            fn += 1
        else:
            tn += 1
    return Metrics(tp=tp, fp=fp, tn=tn, fn=fn, insufficient_fraudulent=ins_f, insufficient_normal=ins_n)
