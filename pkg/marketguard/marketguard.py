import logging
import os
import time
from collections import Counter, OrderedDict

import click
import tabulate

from marketguard import __version__, templates
from marketguard.configuration import Config, OUTPUT_FORMATS
from marketguard.consts import DEFAULT_CONF_FILE, DEFAULT_RULES_FILE, FEATURE_MANIFEST, MANIFEST_VERSION
from marketguard.detection import (BANNED, CLEAN, EXPERT_FRAUDULENT, EXPERT_NORMAL, EXTERNAL, INTERNAL, VERDICTS,
                                   ExpertInput, ExpertStore, PipelineContext, ReputationRecord, ReputationStore,
                                   TrainingPool, apply_expert_labels, detect_all, dumps_verdicts, ingest_expert_input,
                                   load_bundle, load_verdicts, save_bundle, score_verdicts, train_detector)
from marketguard.errors import InvalidInputError, handle_error
from marketguard.management import Action, act_on_batch, append_ledger, load_ledger, review_grace_periods
from marketguard.marketplace import LabeledSeller, generate_synthetic, load_dataset, load_histories, load_labeled, \
    save_histories, split_dataset
from marketguard.rules import load_ruleset
from marketguard.svm import FRAUDULENT
from marketguard.utils import dumps_record, human_size, write_text

log = logging.getLogger('marketguard')
hdlr = logging.StreamHandler()
hdlr.setFormatter(logging.Formatter('[%(levelname)s] %(message)s'))
log.addHandler(hdlr)
log.setLevel(logging.INFO)


class OrderedGroup(click.Group):
    def __init__(self, name=None, commands=None, **attrs):
        super(OrderedGroup, self).__init__(name=name, commands=commands, **attrs)
        self.commands = self.commands or OrderedDict()

    def list_commands(self, ctx):
        return self.commands


CONTEXT_SETTINGS = dict(help_option_names=['-h', '--help'])


def emit(record):
    """one object per line in machine mode"""
    print(dumps_record(record))


def wrote(path):
    log.info('wrote %s (%s)', path, human_size(path))


def now_or_clock(now):
    return int(time.time()) if now is None else now


@click.group(cls=OrderedGroup, context_settings=CONTEXT_SETTINGS)
@click.version_option(__version__, '-V', '--version')
@click.option('-c', '--config', 'config_path', type=click.Path(dir_okay=False),
              help='config file (default ./%s when present)' % DEFAULT_CONF_FILE)
@click.option('--seed', type=int, help='seed for every random stream')
@click.option('-o', '--output', type=click.Choice(OUTPUT_FORMATS), help='human or machine (one object per line)')
@click.option('--debug', is_flag=True, default=False, help='debug logging and tracebacks')
@click.pass_context
@handle_error
def main(ctx, config_path, seed, output, debug):
    """
    MarketGuard, detect fraudulent marketplace sellers with rules, reputation
    data, expert inputs and an SVM
    """
    log.setLevel(logging.DEBUG if debug else logging.INFO)
    if ctx.invoked_subcommand == 'init':
        ctx.obj = Config(path=config_path)
        return
    config = Config.load(config_path)
    config.override('run', 'seed', seed)
    config.override('run', 'output', output)
    config.check()
    ctx.obj = config


@main.command()
@click.option('-f', '--force', is_flag=True, default=False, help='overwrite existing files')
@click.pass_obj
@handle_error
def init(config, force):
    """
    write the default config and the illustrative ruleset
    """
    for p in Config.init(path=config.path or DEFAULT_CONF_FILE, rules_path=DEFAULT_RULES_FILE, force=force):
        wrote(p)


@main.command()
@click.option('-d', '--dataset', help='output dataset file')
@click.option('-n', '--n-sellers', type=int, help='number of sellers')
@click.option('--fraud-fraction', type=float, help='share of planted fraudulent sellers')
@click.option('--window-days', type=int, help='observation window length')
@click.option('--cold-start-fraction', type=float, help='share of sellers without orders')
@click.pass_obj
@handle_error
def generate(config, dataset, n_sellers, fraud_fraction, window_days, cold_start_fraction):
    """
    generate a labeled synthetic dataset
    """
    config.override('paths', 'dataset', dataset)
    config.override('generator', 'n_sellers', n_sellers)
    config.override('generator', 'fraud_fraction', fraud_fraction)
    config.override('generator', 'window_days', window_days)
    config.override('generator', 'cold_start_fraction', cold_start_fraction)
    gen = config.generator_config()
    path = config.path_of('dataset')
    if not path:
        raise InvalidInputError('no dataset path configured')

    sellers = generate_synthetic(gen)
    save_histories(path, sellers)
    wrote(path)
    n_fraud = sum(1 for s in sellers if s.label == FRAUDULENT)
    if config.machine:
        emit({'kind': 'summary', 'sellers': len(sellers), 'fraudulent': n_fraud,
              'normal': len(sellers) - n_fraud, 'cold_start': gen.n_cold_start, 'path': path})
    else:
        print(tabulate.tabulate([('Fraudulent', n_fraud), ('Normal', len(sellers) - n_fraud),
                                 ('Total', len(sellers))], ('LABEL', 'SELLERS')))


@main.command()
@click.option('-d', '--dataset', help='labeled dataset to split')
@click.option('--holdout-fraction', type=float, help='share held out for evaluation')
@click.option('--train-out', required=True, help='training part')
@click.option('--holdout-out', required=True, help='held-out part')
@click.pass_obj
@handle_error
def split(config, dataset, holdout_fraction, train_out, holdout_out):
    """
    seeded stratified train/held-out split of a labeled dataset
    """
    config.override('paths', 'dataset', dataset)
    config.override('generator', 'holdout_fraction', holdout_fraction)
    path = config.require_path('dataset')
    train, holdout = split_dataset(load_labeled(path), config.holdout_fraction, seed=config.seed)
    save_histories(train_out, train)
    save_histories(holdout_out, holdout)
    wrote(train_out)
    wrote(holdout_out)
    if config.machine:
        emit({'kind': 'summary', 'train': len(train), 'holdout': len(holdout)})
    else:
        print(tabulate.tabulate([(train_out, len(train)), (holdout_out, len(holdout))], ('FILE', 'SELLERS')))


@main.command()
@click.option('-d', '--dataset', help='labeled training dataset')
@click.option('-m', '--model', help='model file to write')
@click.option('-k', '--kernel', type=click.Choice(('linear', 'polynomial', 'rbf')), help='kernel')
@click.option('--c', 'c', type=float, help='box constraint C')
@click.option('--gamma', type=float, help='rbf gamma (default 1/d)')
@click.option('--degree', type=int, help='polynomial degree')
@click.option('--kkt-tol', type=float, help='KKT tolerance')
@click.option('--max-passes', type=int, help='SMO pass budget')
@click.pass_obj
@handle_error
def train(config, dataset, model, kernel, c, gamma, degree, kkt_tol, max_passes):
    """
    train the SVM on a labeled dataset plus recorded expert labels
    """
    config.override('paths', 'dataset', dataset)
    config.override('paths', 'model', model)
    for key, value in (('kernel', kernel), ('c', c), ('gamma', gamma), ('degree', degree),
                       ('kkt_tol', kkt_tol), ('max_passes', max_passes)):
        config.override('svm', key, value)
    path = config.require_path('dataset')
    model_path = config.path_of('model')
    if not model_path:
        raise InvalidInputError('no model path configured')
    kernel_ = config.kernel(len(FEATURE_MANIFEST))
    train_config = config.train_config()

    pool = TrainingPool(load_labeled(path))
    experts = 0
    if config.path_of('experts'):
        experts = apply_expert_labels(pool, ExpertStore.load(config.path_of('experts')))
    summary = train_detector(pool.labeled_sellers(), kernel=kernel_, config=train_config)
    save_bundle(model_path, summary.bundle)
    wrote(model_path)

    m = summary.bundle.model
    if config.machine:
        emit({'kind': 'model', 'path': model_path, 'kernel': m.kernel.to_dict(), 'support_vectors': m.n_support,
              'trained_on': summary.n_used, 'kkt_violation': summary.kkt_violation,
              'expert_labels': experts})
    else:
        print(templates.render_train(summary, model_path, human_size(model_path), experts=experts), end='')


def _pipeline_context(config):
    model_path = config.require_path('model')
    bundle = load_bundle(model_path)
    ruleset = config.ruleset()
    reputation = ReputationStore.load(config.require_path('reputation')) if config.path_of('reputation') else ()
    experts = ExpertStore.load(config.path_of('experts')) if config.path_of('experts') else None
    return PipelineContext(bundle=bundle, ruleset=ruleset, reputation=reputation, experts=experts,
                           policy=config.fusion_policy())


@main.command()
@click.option('-d', '--dataset', help='sellers to judge (labels ignored)')
@click.option('-m', '--model', help='model file')
@click.option('-r', '--ruleset', help='ruleset file')
@click.option('--verdicts', help='verdicts file to write')
@click.option('--reputation', help='reputation database of banned sellers')
@click.option('-w', '--workers', type=int, default=1, show_default=True, help='detection threads')
@click.pass_obj
@handle_error
def detect(config, dataset, model, ruleset, verdicts, reputation, workers):
    """
    judge every seller in a dataset
    """
    config.override('paths', 'dataset', dataset)
    config.override('paths', 'model', model)
    config.override('paths', 'ruleset', ruleset)
    config.override('paths', 'verdicts', verdicts)
    config.override('paths', 'reputation', reputation)
    path = config.require_path('dataset')
    verdicts_path = config.path_of('verdicts')
    if not verdicts_path:
        raise InvalidInputError('no verdicts path configured')
    if workers < 1:
        raise InvalidInputError('--workers must be >= 1')
    context = _pipeline_context(config)

    histories = load_histories(path)
    results = detect_all(context, histories, workers=workers)
    write_text(verdicts_path, dumps_verdicts(results))
    wrote(verdicts_path)

    counts = Counter(v.verdict for v in results)
    if config.machine:
        print(dumps_verdicts(results), end='')
    else:
        table = tabulate.tabulate([(v.seller_id, v.verdict, '%.3f' % v.confidence, v.basis) for v in results],
                                  ('SELLER', 'VERDICT', 'CONFIDENCE', 'BASIS'))
        print(templates.render_detect(table, [(name, counts.get(name, 0)) for name in VERDICTS], verdicts_path),
              end='')


@main.command()
@click.option('-d', '--dataset', help='labeled dataset the verdicts were made on')
@click.option('--verdicts', help='verdicts file')
@click.pass_obj
@handle_error
def evaluate(config, dataset, verdicts):
    """
    precision and recall of verdicts against labels
    """
    config.override('paths', 'dataset', dataset)
    config.override('paths', 'verdicts', verdicts)
    path = config.require_path('dataset')
    verdicts_path = config.require_path('verdicts')
    metrics = score_verdicts(load_labeled(path), load_verdicts(verdicts_path))
    if config.machine:
        emit(metrics.to_dict())
    else:
        confusion = tabulate.tabulate([('Fraudulent', metrics.tp, metrics.fn), ('Normal', metrics.fp, metrics.tn)],
                                      ('LABEL \\ VERDICT', 'Fraudulent', 'Normal'))
        print(templates.render_metrics(metrics, confusion), end='')


@main.command()
@click.option('--verdicts', help='verdicts file')
@click.option('-l', '--ledger', help='actions ledger')
@click.option('--now', type=int, help='decision time, seconds since the epoch (default: clock)')
@click.pass_obj
@handle_error
def act(config, verdicts, ledger, now):
    """
    apply the action ladder to a verdict batch
    """
    config.override('paths', 'verdicts', verdicts)
    config.override('paths', 'ledger', ledger)
    verdicts_path = config.require_path('verdicts')
    ledger_path = config.path_of('ledger')
    if not ledger_path:
        raise InvalidInputError('no ledger path configured')
    policy = config.policy_config()
    batch = load_verdicts(verdicts_path)
    prior = load_ledger(ledger_path)
    now = now_or_clock(now)

    decisions, skipped = act_on_batch(batch, policy, prior, now)
    append_ledger(ledger_path, decisions)
    if decisions:
        log.info('appended %d action(s) to %s', len(decisions), ledger_path)

    if config.machine:
        for d in decisions:
            emit(d.to_dict())
        return
    counts = Counter(d.action for d in decisions)
    ladder = [(a.name, counts.get(a, 0)) for a in Action if a != Action.NoAction]
    pending = ''
    suspended = [d for d in decisions if d.action == Action.SuspendWithGrace]
    if suspended:
        pending = tabulate.tabulate([(d.seller_id, d.deadline, _iso(d.deadline)) for d in suspended],
                                    ('SELLER', 'DEADLINE', 'UTC'))
    print(templates.render_act(ladder, len(skipped), pending, ledger_path), end='')


def _iso(ts):
    return time.strftime('%Y-%m-%d %H:%M', time.gmtime(ts))


@main.command('grace-report')
@click.option('--verdicts', help='latest verdicts file')
@click.option('-l', '--ledger', help='actions ledger')
@click.option('--now', type=int, help='review time, seconds since the epoch (default: clock)')
@click.pass_obj
@handle_error
def grace_report(config, verdicts, ledger, now):
    """
    re-check suspended sellers whose grace period has run out
    """
    config.override('paths', 'verdicts', verdicts)
    config.override('paths', 'ledger', ledger)
    ledger_path = config.require_path('ledger')
    verdicts_path = config.require_path('verdicts')
    reviews = review_grace_periods(load_ledger(ledger_path), load_verdicts(verdicts_path), now_or_clock(now))
    if config.machine:
        for r in reviews:
            emit(r.to_dict())
        return
    print(tabulate.tabulate([(r.seller_id, _iso(r.deadline), r.status,
                              r.recommendation.name if r.recommendation is not None else '')
                             for r in reviews], ('SELLER', 'DEADLINE', 'STATUS', 'RECOMMENDATION')))


@main.command()
@click.argument('seller_id')
@click.argument('verdict', type=click.Choice((EXPERT_FRAUDULENT, EXPERT_NORMAL)))
@click.option('-e', '--expert-id', required=True, help='who made the call')
@click.option('--note', default='', help='free text')
@click.option('-d', '--dataset', help='dataset the seller comes from')
@click.option('--experts', help='expert input file')
@click.option('--now', type=int, help='record time, seconds since the epoch (default: clock)')
@click.pass_obj
@handle_error
def expert(config, seller_id, verdict, expert_id, note, dataset, experts, now):
    """
    record an expert verdict; it labels the seller at the next train
    """
    config.override('paths', 'dataset', dataset)
    config.override('paths', 'experts', experts)
    path = config.require_path('dataset')
    experts_path = config.path_of('experts')
    if not experts_path:
        raise InvalidInputError('no experts path configured')
    sellers = load_dataset(path)
    pool = TrainingPool([s for s in sellers if isinstance(s, LabeledSeller)],
                        histories=[s for s in sellers if not isinstance(s, LabeledSeller)])
    store = ExpertStore.load(experts_path)
    ack = ingest_expert_input(store, ExpertInput(seller_id=seller_id, verdict=verdict, expert_id=expert_id,
                                                 note=note, recorded_at=now_or_clock(now)), pool)
    if config.machine:
        emit({'kind': 'ack', 'seller_id': ack.seller_id, 'accepted': ack.accepted,
              'duplicate': ack.duplicate})
    elif ack.duplicate:
        log.info('already recorded, nothing to do')
    else:
        log.info('OK, %s marked %s; takes effect at the next train', seller_id, verdict)


@main.command()
@click.argument('seller_id')
@click.argument('status', type=click.Choice((BANNED, CLEAN)))
@click.option('--source', type=click.Choice((INTERNAL, EXTERNAL)), default=INTERNAL, show_default=True,
              help='who reported the seller')
@click.option('-d', '--dataset', help='dataset the seller profile comes from')
@click.option('--reputation', help='reputation database')
@click.option('--now', type=int, help='record time, seconds since the epoch (default: clock)')
@click.pass_obj
@handle_error
def reputation(config, seller_id, status, source, dataset, reputation, now):
    """
    add a seller profile to the reputation database
    """
    config.override('paths', 'dataset', dataset)
    config.override('paths', 'reputation', reputation)
    path = config.require_path('dataset')
    db_path = config.path_of('reputation')
    if not db_path:
        raise InvalidInputError('no reputation path configured, set [paths] reputation')
    profiles = dict((h.seller_id, h.profile) for h in load_histories(path))
    if seller_id not in profiles:
        raise InvalidInputError('seller %s is not in %s' % (seller_id, path))
    store = ReputationStore.load(db_path) if os.path.exists(db_path) else ReputationStore(path=db_path)
    record = ReputationRecord(attributes=profiles[seller_id], status=status, source=source,
                              recorded_at=now_or_clock(now))
    store.add(record)
    if config.machine:
        emit(record.to_dict())
    else:
        log.info('OK, %s recorded %s (%d records in %s)', seller_id, status, len(store), db_path)


@main.command('rules-check')
@click.argument('path', required=False)
@click.pass_obj
@handle_error
def rules_check(config, path):
    """
    validate a ruleset file and list its rules
    """
    ruleset = load_ruleset(path) if path else config.ruleset()
    if config.machine:
        for r in ruleset.rules:
            emit({'kind': 'rule', 'id': r.id, 'feature': r.feature, 'comparator': r.comparator,
                  'value': r.threshold_value, 'weight': r.weight})
        return
    print(tabulate.tabulate([(r.id, str(r), r.weight, r.description) for r in ruleset.rules],
                            ('ID', 'CONDITION', 'WEIGHT', 'DESCRIPTION')))
    print()
    print('decision threshold: %g' % ruleset.decision_threshold)
    log.info('OK')


@main.command()
@click.option('-v', '--verbose', is_flag=True, default=False, help='every configured setting')
@click.pass_obj
@handle_error
def info(config, verbose):
    """
    show config, feature manifest, ruleset and model
    """
    model_path = config.path_of('model')
    model, size = None, None
    if model_path and os.path.isfile(model_path):
        model = load_bundle(model_path).model
        size = human_size(model_path)
    print(templates.render_info(config=config, manifest=FEATURE_MANIFEST, manifest_version=MANIFEST_VERSION,
                                ruleset=config.ruleset(), model=model, model_path=model_path, model_size=size,
                                verbose=verbose), end='')


if __name__ == '__main__':
    main()
