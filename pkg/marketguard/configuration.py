import configparser
import logging
import os

from marketguard.consts import DEFAULT_CONF, DEFAULT_CONF_FILE, DEFAULT_CONF_ITEMS, DEFAULT_RULES, \
    DEFAULT_RULES_FILE, FEATURE_MANIFEST
from marketguard.detection import FusionPolicy
from marketguard.errors import ConfigError, InvalidInputError
from marketguard.management import PolicyConfig
from marketguard.marketplace import GeneratorConfig
from marketguard.rules import default_ruleset, load_ruleset
from marketguard.svm import Kernel, LINEAR, POLYNOMIAL, RBF, TrainConfig
from marketguard.utils import s2b, write_text

log = logging.getLogger('marketguard')

OUTPUT_FORMATS = ('human', 'machine')


class Config(object):
    """
    The single static config file, seeded with DEFAULT_CONF_ITEMS.
    Command line flags land here through ``override`` before any accessor
    is read.
    """

    def __init__(self, cp=None, path=None):
        if cp is None:
            cp = configparser.RawConfigParser()
            cp.read_dict(DEFAULT_CONF_ITEMS)
        self._cp = cp
        self.path = path

    @classmethod
    def load(cls, path=None):
        """
        path given: it must exist. No path: ./marketguard.conf when present,
        built-in defaults otherwise.
        """
        if path is None and os.path.isfile(DEFAULT_CONF_FILE):
            path = DEFAULT_CONF_FILE
        cp = configparser.RawConfigParser()
        cp.read_dict(DEFAULT_CONF_ITEMS)
        if path is not None:
            if not os.path.isfile(path):
                raise InvalidInputError('config file %s not found' % path)
            try:
                cp.read(path)
            except configparser.Error as e:
                raise ConfigError('%s: %s' % (path, e))
            log.debug('config loaded from %s', path)
        return cls(cp, path=path)

    @staticmethod
    def init(path=DEFAULT_CONF_FILE, rules_path=DEFAULT_RULES_FILE, force=False):
        """writes the default config and the illustrative ruleset; returns the written paths"""
        written = []
        for p, content in ((path, DEFAULT_CONF), (rules_path, DEFAULT_RULES)):
            if os.path.exists(p) and not force:
                raise InvalidInputError('%s already exists, use --force to overwrite' % p)
            write_text(p, content)
            written.append(p)
        return written

    def override(self, section, key, value):
        if value is None:
            return
        if not self._cp.has_section(section):
            self._cp.add_section(section)
        self._cp.set(section, key, str(value))

    def get(self, section, key):
        return self._cp.get(section, key).strip()

    def _typed(self, section, key, convert, what):
        raw = self.get(section, key)
        try:
            return convert(raw)
        except ValueError:
            raise ConfigError('[%s] %s must be %s, got %r' % (section, key, what, raw))

    def getfloat(self, section, key):
        return self._typed(section, key, float, 'a number')

    def getint(self, section, key):
        return self._typed(section, key, int, 'an integer')

    def getboolean(self, section, key):
        return self._typed(section, key, s2b, 'a boolean')

    # ---------- paths ----------

    def path_of(self, name):
        """configured path or None when left empty"""
        return self.get('paths', name) or None

    def require_path(self, name, what=None):
        p = self.path_of(name)
        if not p:
            raise InvalidInputError('no %s path configured, set [paths] %s' % (what or name, name))
        if not os.path.isfile(p):
            raise InvalidInputError('%s file %s not found' % (what or name, p))
        return p

    # ---------- run ----------

    @property
    def seed(self):
        seed = self.getint('run', 'seed')
        if seed < 0:
            raise ConfigError('[run] seed must be >= 0, got %d' % seed)
        return seed

    @property
    def output(self):
        output = self.get('run', 'output')
        if output not in OUTPUT_FORMATS:
            raise ConfigError('[run] output must be one of %s, got %r' % (', '.join(OUTPUT_FORMATS), output))
        return output

    @property
    def machine(self):
        return self.output == 'machine'

    def check(self):
        """fails on a broken [run] section before any command starts working"""
        return self.seed, self.output

    # ---------- svm ----------

    def kernel(self, dimension=len(FEATURE_MANIFEST)):
        variant = self.get('svm', 'kernel')
        try:
            if variant == LINEAR:
                return Kernel.linear()
            if variant == POLYNOMIAL:
                return Kernel.polynomial(degree=self.getint('svm', 'degree'), offset=self.getfloat('svm', 'offset'))
            if variant == RBF:
                gamma = self.getfloat('svm', 'gamma') if self.get('svm', 'gamma') else 1.0 / dimension
                return Kernel.rbf(gamma)
        except InvalidInputError as e:
            raise ConfigError('[svm] %s' % e)
        raise ConfigError('[svm] kernel must be linear, polynomial or rbf, got %r' % variant)

    def train_config(self):
        try:
            return TrainConfig(c=self.getfloat('svm', 'c'), kkt_tol=self.getfloat('svm', 'kkt_tol'),
                               value_eps=self.getfloat('svm', 'value_eps'),
                               max_passes=self.getint('svm', 'max_passes'), rng_seed=self.seed)
        except InvalidInputError as e:
            raise ConfigError('[svm] %s' % e)

    # ---------- generator ----------

    def generator_config(self):
        return GeneratorConfig(n_sellers=self.getint('generator', 'n_sellers'),
                               fraud_fraction=self.getfloat('generator', 'fraud_fraction'),
                               window_days=self.getint('generator', 'window_days'),
                               cold_start_fraction=self.getfloat('generator', 'cold_start_fraction'),
                               rng_seed=self.seed)

    @property
    def holdout_fraction(self):
        return self.getfloat('generator', 'holdout_fraction')

    # ---------- detection / management ----------

    def fusion_policy(self):
        return FusionPolicy(w_rules=self.getfloat('fusion', 'w_rules'), w_svm=self.getfloat('fusion', 'w_svm'),
                            fusion_threshold=self.getfloat('fusion', 'fusion_threshold'))

    def policy_config(self):
        return PolicyConfig(warn_low=self.getfloat('policy', 'warn_low'),
                            warn_high=self.getfloat('policy', 'warn_high'),
                            suspend_low=self.getfloat('policy', 'suspend_low'),
                            suspend_high=self.getfloat('policy', 'suspend_high'),
                            ban_floor=self.getfloat('policy', 'ban_floor'),
                            grace_period_days=self.getint('policy', 'grace_period_days'),
                            repeat_escalation=self.getboolean('policy', 'repeat_escalation'))

    def ruleset(self):
        p = self.path_of('ruleset')
        if p is None:
            return default_ruleset()
        return load_ruleset(self.require_path('ruleset'))

    def items(self):
        """(section, key, value) for every configured key, file order"""
        for section in self._cp.sections():
            for key, value in self._cp.items(section):
                yield section, key, value
