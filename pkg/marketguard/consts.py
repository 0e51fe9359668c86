MODEL_FORMAT = 'marketguard-svm/1'
RULES_FORMAT = 'marketguard-rules/1'
MANIFEST_VERSION = 'marketguard-features/1'

DAY = 86400

# index order of every scaled Sample handed to the SVM
FEATURE_MANIFEST = (
    'listing_accuracy',
    'transaction_volume',
    'sla_adherence',
    'return_ratio',
    'complaint_rate',
    'customer_satisfaction',
    'social_sentiment',
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_TRAINING = 3
EXIT_MANIFEST = 4

# synthetic windows end here so generated files never depend on the clock
GENERATOR_EPOCH_END = 1700000000

DEFAULT_EFFECT_SIZES = {
    'listing_accuracy': 0.25,
    'transaction_volume': 0.3,
    'sla_adherence': 0.25,
    'return_ratio': 0.15,
    'complaint_rate': 0.12,
    'social_sentiment': 0.6,
}

DEFAULT_CONF_FILE = 'marketguard.conf'
DEFAULT_RULES_FILE = 'rules.ini'

DEFAULT_CONF_ITEMS = {
    'paths': {
        'dataset': 'sellers.ndjson',
        'ruleset': '',
        'model': 'model.json',
        'reputation': '',
        'experts': 'experts.ndjson',
        'ledger': 'actions.ndjson',
        'verdicts': 'verdicts.ndjson',
    },
    'svm': {
        'kernel': 'rbf',
        'c': '1.0',
        'gamma': '',
        'degree': '3',
        'offset': '1.0',
        'kkt_tol': '1e-3',
        'value_eps': '1e-8',
        'max_passes': '200',
    },
    'generator': {
        'n_sellers': '500',
        'fraud_fraction': '0.2',
        'window_days': '90',
        'cold_start_fraction': '0.04',
        'holdout_fraction': '0.3',
    },
    'fusion': {
        'w_rules': '0.4',
        'w_svm': '0.6',
        'fusion_threshold': '0.5',
    },
    'policy': {
        'warn_low': '0.5',
        'warn_high': '0.7',
        'suspend_low': '0.7',
        'suspend_high': '0.9',
        'ban_floor': '0.9',
        'grace_period_days': '14',
        'repeat_escalation': 'true',
    },
    'run': {
        'seed': '0',
        'output': 'human',
    },
}

DEFAULT_CONF = """\
# MarketGuard config file
# every key may be overridden by the matching command line flag

[paths]
dataset = {paths[dataset]}
# empty ruleset means the built-in illustrative rules
ruleset = {paths[ruleset]}
model = {paths[model]}
reputation = {paths[reputation]}
experts = {paths[experts]}
ledger = {paths[ledger]}
verdicts = {paths[verdicts]}

[svm]
# linear, polynomial or rbf
kernel = {svm[kernel]}
c = {svm[c]}
# empty gamma means 1/d
gamma = {svm[gamma]}
degree = {svm[degree]}
offset = {svm[offset]}
kkt_tol = {svm[kkt_tol]}
value_eps = {svm[value_eps]}
max_passes = {svm[max_passes]}

[generator]
n_sellers = {generator[n_sellers]}
fraud_fraction = {generator[fraud_fraction]}
window_days = {generator[window_days]}
cold_start_fraction = {generator[cold_start_fraction]}
holdout_fraction = {generator[holdout_fraction]}

[fusion]
w_rules = {fusion[w_rules]}
w_svm = {fusion[w_svm]}
fusion_threshold = {fusion[fusion_threshold]}

[policy]
warn_low = {policy[warn_low]}
warn_high = {policy[warn_high]}
suspend_low = {policy[suspend_low]}
suspend_high = {policy[suspend_high]}
ban_floor = {policy[ban_floor]}
grace_period_days = {policy[grace_period_days]}
repeat_escalation = {policy[repeat_escalation]}

[run]
seed = {run[seed]}
# human or machine
output = {run[output]}
""".format(**DEFAULT_CONF_ITEMS)

DEFAULT_RULES = """\
# MarketGuard ruleset, illustrative weights only
[ruleset]
format = {fmt}
decision_threshold = 2.0

[rule high_return_ratio]
feature = return_ratio
comparator = >
value = 0.12
weight = 1.0
description = more than 12% of orders come back

[rule late_shipping]
feature = sla_adherence
comparator = <
value = 0.8
weight = 1.0
description = fewer than 80% of shipped orders met the promised date

[rule complaint_pressure]
feature = complaint_rate
comparator = >
value = 0.3
weight = 1.0
description = severity-weighted complaints per order above 0.3

[rule inaccurate_listings]
feature = listing_accuracy
comparator = <
value = 0.8
weight = 0.5
description = listings frequently misdeclare attributes

[rule negative_buzz]
feature = social_sentiment
comparator = <
value = 0.0
weight = 0.5
description = social chatter about the seller is net negative
""".format(fmt=RULES_FORMAT)

