"""
Seller history -> feature vector, and min-max scaling into the fixed-order
samples the SVM consumes. Index order is FEATURE_MANIFEST.
"""
from dataclasses import dataclass, fields
from typing import Tuple

import numpy as np

from marketguard.consts import FEATURE_MANIFEST, MANIFEST_VERSION
from marketguard.errors import InvalidInputError, ManifestMismatchError
from marketguard.marketplace import Complaint, Listing, Order, Return, SocialSignal
from marketguard.utils import clamp


@dataclass(frozen=True)
class FeatureVector(object):
    listing_accuracy: float
    transaction_volume: float
    sla_adherence: float
    return_ratio: float
    complaint_rate: float
    customer_satisfaction: float
    social_sentiment: float
    has_history: bool

    def values(self):
        return tuple(getattr(self, name) for name in FEATURE_MANIFEST)

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def extract(history):
    listings = history.of_kind(Listing)
    orders = history.of_kind(Order)
    n_returns = len(history.of_kind(Return))
    severity = sum(c.severity for c in history.of_kind(Complaint))
    signals = history.of_kind(SocialSignal)

    listing_accuracy = (sum(1 for l in listings if l.declared_attributes_ok) / float(len(listings))
                        if listings else 1.0)

    n = len(orders)
    if n:
        shipped = [o for o in orders if o.shipped]
        # orders exist but none left the warehouse: nothing met its promise
        sla_adherence = sum(1 for o in shipped if o.on_time) / float(len(shipped)) if shipped else 0.0
        return_ratio = min(1.0, n_returns / float(n))
        complaint_rate = severity / float(n)
    else:
        sla_adherence, return_ratio, complaint_rate = 1.0, 0.0, 0.0
    customer_satisfaction = 1.0 - clamp(complaint_rate / 5.0, 0.0, 1.0)

    mentions = sum(s.mentions for s in signals)
    if mentions:
        social_sentiment = sum(s.sentiment * s.mentions for s in signals) / float(mentions)
    elif signals:
        social_sentiment = sum(s.sentiment for s in signals) / float(len(signals))
    else:
        social_sentiment = 0.0

    return FeatureVector(
        listing_accuracy=listing_accuracy,
        transaction_volume=float(n),
        sla_adherence=sla_adherence,
        return_ratio=return_ratio,
        complaint_rate=complaint_rate,
        customer_satisfaction=customer_satisfaction,
        social_sentiment=clamp(social_sentiment, -1.0, 1.0),
        has_history=n > 0,
    )


@dataclass(frozen=True)
class ScalingParams(object):
    mins: Tuple[float, ...]
    maxs: Tuple[float, ...]
    manifest: Tuple[str, ...] = FEATURE_MANIFEST

    def __post_init__(self):
        object.__setattr__(self, 'mins', tuple(float(v) for v in self.mins))
        object.__setattr__(self, 'maxs', tuple(float(v) for v in self.maxs))
        object.__setattr__(self, 'manifest', tuple(self.manifest))
        if not (len(self.mins) == len(self.maxs) == len(self.manifest)):
            raise InvalidInputError('scaling params do not match the feature manifest')
        for name, lo, hi in zip(self.manifest, self.mins, self.maxs):
            if hi < lo:
                raise InvalidInputError('scaling for %s has max %r < min %r' % (name, hi, lo))

    def to_dict(self):
        return {'manifest_version': MANIFEST_VERSION, 'manifest': list(self.manifest),
                'mins': list(self.mins), 'maxs': list(self.maxs)}

    @classmethod
    def from_dict(cls, d):
        if d.get('manifest_version') != MANIFEST_VERSION or tuple(d.get('manifest', ())) != FEATURE_MANIFEST:
            raise ManifestMismatchError('feature manifest %s %s does not match %s %s'
                                        % (d.get('manifest_version'), d.get('manifest'),
                                           MANIFEST_VERSION, list(FEATURE_MANIFEST)))
        return cls(mins=d['mins'], maxs=d['maxs'], manifest=d['manifest'])


def fit_scaling(vectors):
    vectors = list(vectors)
    if not vectors:
        raise InvalidInputError('cannot fit scaling on an empty corpus')
    table = np.array([v.values() for v in vectors], dtype=float)
    return ScalingParams(mins=table.min(axis=0), maxs=table.max(axis=0))


def apply_scaling(params, v):
    out = np.empty(len(params.manifest))
    for i, (x, lo, hi) in enumerate(zip(v.values(), params.mins, params.maxs)):
        if hi == lo:
            out[i] = 0.5
        else:
            out[i] = clamp((x - lo) / (hi - lo), 0.0, 1.0)
    if not np.all(np.isfinite(out)):
        raise InvalidInputError('scaled sample is not finite')
    return out


def scale_all(params, vectors):
    return np.array([apply_scaling(params, v) for v in vectors]).reshape(-1, len(params.manifest))
