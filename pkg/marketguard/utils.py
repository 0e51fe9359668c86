import hashlib
import json
import math
import os
import re

import bitmath

from marketguard.errors import ParseError

NON_ALNUM_REG = re.compile(r'[^0-9a-z]+')


def mkdirs(path):
    if path and not os.path.exists(path):
        os.makedirs(path)


def ensure_parent(path):
    mkdirs(os.path.dirname(os.path.abspath(path)))


def warp_join(d, iterable, n=30, newline='\n'):
    lines = []
    if not iterable:
        return ''
    temp = ''
    for c in iterable:
        if temp and len(temp + c + d) > n:
            lines.append(temp)
            temp = ''
        temp += c + d
    if temp:
        lines.append(temp)
    return newline.join(lines)[:-len(d)]


def human_size(path):
    bitmath.format_string = "{value:.1f} {unit}"
    size = os.path.getsize(path)
    if not size:
        return '0 Byte'
    return str(bitmath.Byte(size).best_prefix(bitmath.NIST))


def s2b(s):
    if s is None:
        return
    if isinstance(s, bool):
        return s
    s = s.lower()
    if s in ('y', 'yes', 'on', '1', 'true', 't'):
        return True
    if s in ('n', 'no', 'off', '0', 'false', 'f'):
        return False
    raise ValueError('Unknown flag %s' % s)


def clamp(x, lo, hi):
    return max(lo, min(hi, x))


def sigmoid(t):
    if t >= 0:
        return 1.0 / (1.0 + math.exp(-t))
    z = math.exp(t)
    return z / (1.0 + z)


def normalize_text(s):
    """lowercase, punctuation folded to single spaces"""
    if not s:
        return ''
    return NON_ALNUM_REG.sub(' ', s.lower()).strip()


def normalize_name(s):
    """token-sorted form, so 'Acme Traders Ltd.' == 'ltd traders ACME'"""
    return ' '.join(sorted(normalize_text(s).split()))


def dumps_record(obj):
    return json.dumps(obj, sort_keys=True, separators=(',', ':'), allow_nan=False)


def dumps_records(objs):
    return ''.join(dumps_record(o) + '\n' for o in objs)


def iter_records(lines, path=None):
    """yields (line number, object) for every non-blank line"""
    for ln, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith('#'):
            continue
        try:
            obj = json.loads(line)
        except ValueError as e:
            raise ParseError('invalid record: %s' % e, path=path, line=ln)
        if not isinstance(obj, dict):
            raise ParseError('record must be an object', path=path, line=ln)
        yield ln, obj


def read_records(path):
    with open(path) as f:
        return list(iter_records(f, path=path))


def append_records(path, objs):
    ensure_parent(path)
    with open(path, 'a') as f:
        f.write(dumps_records(objs))


def write_text(path, text):
    ensure_parent(path)
    with open(path, 'w') as f:
        f.write(text)


def digest(text):
    return hashlib.sha256(text.encode('utf-8')).hexdigest()
