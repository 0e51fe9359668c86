# coding=utf-8
import jinja2

from marketguard.utils import warp_join

env = jinja2.Environment(autoescape=False, keep_trailing_newline=True, trim_blocks=True, lstrip_blocks=True)
env.filters['append_spaces'] = lambda s, n: s and ('\n' + ' ' * n).join(s.splitlines())
env.filters['g'] = lambda v: '%.4g' % v
env.filters['warp'] = lambda items, n=72: warp_join(', ', items, n=n)

TRAIN_TMPL = env.from_string(u'''\
Model:
    Kernel: {{ model.kernel }}
    C: {{ model.config.c|g }}
    Trained on: {{ summary.n_used }} sellers ({{ summary.n_cold_start }} without orders left out)
    Support vectors: {{ model.n_support }}
    KKT violation: {{ summary.kkt_violation|g }} (tolerance {{ model.config.kkt_tol|g }})
{% if experts %}
    Expert labels applied: {{ experts }}
{% endif %}
    File: {{ path }} ({{ size }})
''')

DETECT_TMPL = env.from_string(u'''\
{{ table }}

Summary:
{% for name, count in counts %}
    {{ name }}: {{ count }}
{% endfor %}
    Verdicts: {{ path }}
''')

METRICS_TMPL = env.from_string(u'''\
Fraudulent class ({{ metrics.tp + metrics.fp + metrics.tn + metrics.fn }} sellers scored):
    Precision: {{ metrics.precision|g }}
    Recall: {{ metrics.recall|g }}

    {{ confusion|append_spaces(4) }}

InsufficientHistory (not scored): {{ metrics.insufficient }}
    labeled fraudulent: {{ metrics.insufficient_fraudulent }}
    labeled normal: {{ metrics.insufficient_normal }}
''')

ACT_TMPL = env.from_string(u'''\
Ladder:
{% for name, count in ladder %}
    {{ name }}: {{ count }}
{% endfor %}
{% if skipped %}
    Already acted on for this batch: {{ skipped }}
{% endif %}
{% if pending %}

Pending grace deadlines:
    {{ pending|append_spaces(4) }}
{% endif %}
    Ledger: {{ path }}
''')

INFO_TMPL = env.from_string(u'''\
Config:
    File: {{ config.path or '(built-in defaults)' }}
    Seed: {{ config.seed }}
    Output: {{ config.output }}

Features ({{ manifest_version }}):
    {{ manifest|warp|append_spaces(4) }}

Ruleset:
    Rules: {{ ruleset.rules|length }}
    Decision threshold: {{ ruleset.decision_threshold|g }}

Model:
{% if model %}
    File: {{ model_path }} ({{ model_size }})
    Kernel: {{ model.kernel }}
    Support vectors: {{ model.n_support }}
{% else %}
    Not trained ({{ model_path }} missing)
{% endif %}
{% if verbose %}

Settings:
{% for section, key, value in config.items() %}
    [{{ section }}] {{ key }} = {{ value }}
{% endfor %}
{% endif %}
''')


def render_train(summary, path, size, experts=0):
    return TRAIN_TMPL.render(summary=summary, model=summary.bundle.model, path=path, size=size, experts=experts)


def render_detect(table, counts, path):
    return DETECT_TMPL.render(table=table, counts=counts, path=path)


def render_metrics(metrics, confusion):
    return METRICS_TMPL.render(metrics=metrics, confusion=confusion)


def render_act(ladder, skipped, pending, path):
    return ACT_TMPL.render(ladder=ladder, skipped=skipped, pending=pending, path=path)


def render_info(**context):
    return INFO_TMPL.render(**context)
