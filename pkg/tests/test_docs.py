"""
The worked examples under docs/ must stay loadable.
"""
import os

from marketguard.detection import ReputationStore, reputation_match
from marketguard.features import extract
from marketguard.marketplace import RECORD_TYPES, load_histories, load_labeled
from marketguard.rules import default_ruleset, evaluate, load_ruleset
from marketguard.svm import FRAUDULENT, NORMAL

DOCS = os.path.join(os.path.dirname(os.path.abspath(__file__)), os.pardir, 'docs')


def doc(name):
    return os.path.join(DOCS, name)


def test_example_dataset_loads():
    sellers = load_labeled(doc('sellers.ndjson'))
    assert [s.history.seller_id for s in sellers] == ['D00001', 'D00002']
    assert [s.label for s in sellers] == [NORMAL, FRAUDULENT]
    kinds = set(r.kind for s in sellers for r in s.history.records)
    assert kinds == set(RECORD_TYPES)
    assert [h.seller_id for h in load_histories(doc('sellers.ndjson'))] == ['D00001', 'D00002']

    honest, shady = (extract(s.history) for s in sellers)
    assert honest.has_history and shady.has_history
    assert shady.sla_adherence == 0.0
    assert shady.return_ratio == 0.5
    assert shady.listing_accuracy == 0.0


def test_example_ruleset_is_the_default():
    ruleset = load_ruleset(doc('rules.ini'))
    assert ruleset == default_ruleset()
    sellers = load_labeled(doc('sellers.ndjson'))
    flagged = [evaluate(ruleset, extract(s.history)).flagged for s in sellers]
    assert flagged == [False, True]


def test_example_reputation_matches_the_shady_seller():
    db = ReputationStore.load(doc('reputation.ndjson'))
    assert len(db) == 1
    honest, shady = load_histories(doc('sellers.ndjson'))
    assert reputation_match(db, honest.profile) is None
    match = reputation_match(db, shady.profile)
    assert match.strong and match.matched_on == ('bank_account_hash',)
