import numpy as np
import pytest

from marketguard.consts import DAY, GENERATOR_EPOCH_END
from marketguard.detection import train_detector
from marketguard.marketplace import (Complaint, GeneratorConfig, LabeledSeller, Listing, Order, Return,
                                     SellerHistory, SellerProfile, SocialSignal, generate_synthetic)
from marketguard.svm import FRAUDULENT, NORMAL

END = GENERATOR_EPOCH_END
START = END - 90 * DAY


def profile(seller_id='T00001', **kwargs):
    d = dict(seller_id=seller_id, display_name='Acme Traders', address='1 Market Street, Springfield',
             email_domain='acme.example', enrolled_at=START - 100 * DAY, tax_id='TX%s' % seller_id,
             bank_account_hash='bank-%s' % seller_id)
    d.update(kwargs)
    return SellerProfile(**d)


def history(seller_id='T00001', records=(), **kwargs):
    records = sorted(records, key=lambda r: r.occurred_at)
    return SellerHistory(profile=profile(seller_id, **kwargs), records=records, window=(START, END))


def busy_history(seller_id='T00002', n_orders=10, late=0, returns=0, complaints=0, sentiment=0.5):
    """orders spread over the window, the first `late` shipped late"""
    records = [Listing(occurred_at=START + DAY, declared_attributes_ok=True)]
    for k in range(n_orders):
        t = START + (k + 2) * DAY
        promised = t + 2 * DAY
        actual = promised + DAY if k < late else promised - 3600
        records.append(Order(occurred_at=t, amount=20.0, promised_ship=promised, actual_ship=actual,
                             order_id='%s-O%d' % (seller_id, k)))
    for k in range(returns):
        records.append(Return(occurred_at=START + (k + 5) * DAY + 100, order_ref='%s-O%d' % (seller_id, k),
                              reason='defective'))
    for k in range(complaints):
        records.append(Complaint(occurred_at=START + (k + 6) * DAY + 200, severity=3))
    records.append(SocialSignal(occurred_at=START + 3 * DAY + 300, sentiment=sentiment, mentions=4))
    return history(seller_id, records)


@pytest.fixture
def two_points():
    return [(-1.0, 0.0), (1.0, 0.0)], [NORMAL, FRAUDULENT]


@pytest.fixture
def xor():
    return [(0.0, 0.0), (1.0, 1.0), (0.0, 1.0), (1.0, 0.0)], [NORMAL, NORMAL, FRAUDULENT, FRAUDULENT]


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope='session')
def small_corpus():
    return generate_synthetic(GeneratorConfig(n_sellers=80, rng_seed=7, cold_start_fraction=0.1))


@pytest.fixture(scope='session')
def small_bundle(small_corpus):
    return train_detector(small_corpus).bundle


@pytest.fixture
def labeled_pair():
    return [LabeledSeller(history=busy_history('T00010'), label=NORMAL),
            LabeledSeller(history=busy_history('T00011', late=6, returns=4, complaints=5, sentiment=-0.5),
                          label=FRAUDULENT)]
