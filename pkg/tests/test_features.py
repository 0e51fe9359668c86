import numpy as np
import pytest

from conftest import START, busy_history, history
from marketguard.consts import DAY, FEATURE_MANIFEST, MANIFEST_VERSION
from marketguard.errors import InvalidInputError, ManifestMismatchError
from marketguard.features import ScalingParams, apply_scaling, extract, fit_scaling, scale_all
from marketguard.marketplace import Order, SocialSignal


def test_busy_seller_features():
    v = extract(busy_history(n_orders=10, late=2, returns=3, complaints=2, sentiment=-0.25))
    assert v.has_history
    assert v.transaction_volume == 10.0
    assert v.sla_adherence == pytest.approx(0.8)
    assert v.return_ratio == pytest.approx(0.3)
    assert v.complaint_rate == pytest.approx(0.6)
    assert v.customer_satisfaction == pytest.approx(1.0 - 0.6 / 5)
    assert v.social_sentiment == pytest.approx(-0.25)
    assert v.listing_accuracy == 1.0
    assert v.values() == tuple(getattr(v, name) for name in FEATURE_MANIFEST)


def test_cold_start_defaults():
    v = extract(history())
    assert not v.has_history
    assert v.transaction_volume == 0.0
    assert v.sla_adherence == 1.0
    assert v.return_ratio == 0.0
    assert v.complaint_rate == 0.0
    assert v.customer_satisfaction == 1.0
    assert v.listing_accuracy == 1.0
    assert v.social_sentiment == 0.0


def test_unshipped_orders_miss_the_sla():
    orders = [Order(occurred_at=START + k * DAY, amount=5.0, promised_ship=START + (k + 1) * DAY)
              for k in range(1, 4)]
    v = extract(history(records=orders))
    assert v.has_history
    assert v.sla_adherence == 0.0


def test_sentiment_is_mention_weighted():
    signals = [SocialSignal(occurred_at=START + DAY, sentiment=1.0, mentions=3),
               SocialSignal(occurred_at=START + 2 * DAY, sentiment=-1.0, mentions=1)]
    assert extract(history(records=signals)).social_sentiment == pytest.approx(0.5)
    silent = [SocialSignal(occurred_at=START + DAY, sentiment=0.4, mentions=0),
              SocialSignal(occurred_at=START + 2 * DAY, sentiment=-0.2, mentions=0)]
    assert extract(history(records=silent)).social_sentiment == pytest.approx(0.1)


def test_return_ratio_is_capped():
    v = extract(busy_history(n_orders=2, returns=3))
    assert v.return_ratio == 1.0


def test_scaling_lands_in_unit_interval():
    vectors = [extract(busy_history('T%05d' % k, n_orders=5 + k, late=k % 3, returns=k % 4, complaints=k % 2,
                                    sentiment=0.1 * (k - 4)))
               for k in range(8)]
    params = fit_scaling(vectors)
    X = scale_all(params, vectors)
    assert X.shape == (8, len(FEATURE_MANIFEST))
    assert np.all(X >= 0.0) and np.all(X <= 1.0)

    listing = FEATURE_MANIFEST.index('listing_accuracy')
    # every seller has accuracy 1.0: constant features map to the middle
    assert np.all(X[:, listing] == 0.5)

    outlier = extract(busy_history('T99999', n_orders=60, returns=50, sentiment=-1.0))
    assert np.all((apply_scaling(params, outlier) >= 0) & (apply_scaling(params, outlier) <= 1))


def test_scaling_needs_a_corpus():
    with pytest.raises(InvalidInputError):
        fit_scaling([])


def test_scaling_document_checks_manifest():
    params = fit_scaling([extract(busy_history())])
    assert ScalingParams.from_dict(params.to_dict()) == params
    doc = params.to_dict()
    doc['manifest'] = list(reversed(doc['manifest']))
    with pytest.raises(ManifestMismatchError):
        ScalingParams.from_dict(doc)
    doc = params.to_dict()
    doc['manifest_version'] = MANIFEST_VERSION + '-old'
    with pytest.raises(ManifestMismatchError) as e:
        ScalingParams.from_dict(doc)
    assert e.value.exit_code == 4


def test_more_returns_never_lower_the_return_ratio():
    ratios = [extract(busy_history(n_orders=5, returns=k)).return_ratio for k in range(9)]
    assert ratios == sorted(ratios)
    assert ratios[0] == 0.0 and ratios[-1] == 1.0


def test_fitted_scaling_never_clamps_its_own_corpus():
    vectors = [extract(busy_history('T%05d' % k, n_orders=3 + 2 * k, late=k % 4, returns=k % 3, complaints=k % 5,
                                    sentiment=0.2 * (k - 3)))
               for k in range(7)]
    params = fit_scaling(vectors)
    for v in vectors:
        for x, lo, hi, y in zip(v.values(), params.mins, params.maxs, apply_scaling(params, v)):
            assert y == (0.5 if hi == lo else (x - lo) / (hi - lo))
