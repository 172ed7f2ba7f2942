import hashlib

from .types import *

try:
    import ujson as json
except ImportError:
    import json


class LogJson(dict):
    def __init__(self, short_message_=None, dictionary_=None, **kwargs):
        self.default_short_message = 'JSON ENTRY'
        if dictionary_ is None and isinstance(short_message_, dict):
            dictionary_, short_message_ = short_message_, None
        is_dict = isinstance(dictionary_, dict)
        self.short_message = str(short_message_) if short_message_ is not None else None
        if is_dict:
            super().__init__(dictionary_)
        else:
            super().__init__(**kwargs)

    def __str__(self):
        type_ = self.get('type')
        msg = self.short_message or type_ or self.default_short_message
        res = f"{msg}\t{json.dumps(make_native(self))}"
        return res


def args_to_str(args: tuple, kwargs: dict):
    ar = ', '.join(map(_short_repr, args))
    kw = ', '.join(f"{k}={_short_repr(v)}" for k, v in kwargs.items())
    return ar + (', ' if ar and kw else '') + kw


def _short_repr(value, limit=60):
    shape = getattr(value, 'shape', None)
    if shape is not None:
        return f"{type(value).__name__}{tuple(shape)}"
    text = repr(value)
    return text if len(text) <= limit else text[:limit - 3] + '...'


def __ify(data, apply_methods):
    for method in apply_methods:
        if hasattr(data, method):  # noqa
            return __ify(getattr(data, method)(), apply_methods)  # noqa
    T = type(data)
    if T is tuple or T is list:
        return [__ify(i, apply_methods) for i in data]
    if isinstance(data, dict):
        return {str(k): __ify(v, apply_methods) for k, v in data.items()}
    if isinstance(data, (set, frozenset)):
        return [__ify(i, apply_methods) for i in sorted(data)]
    if isinstance(data, datetime):
        return data.isoformat()
    return data


def make_native(data):
    """Convert nested namedtuples, numpy arrays and numpy scalars to JSON-ready python objects.

    :param data: Any nested structure returned by the package
    :return:
    """
    return __ify(data, ['_asdict', 'tolist'])


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for block in iter(lambda: f.read(1 << 16), b''):
            digest.update(block)
    return digest.hexdigest()


def derive_seed(root_seed: int, label: str) -> int:
    """Derive a stage seed from the root seed by labeled hashing.

    :param root_seed: The single root seed from config.
    :param label: Stage or component label, eg. 'cmf-fit'.
    :return: A 32-bit seed usable by numpy.random.default_rng.
    """
    h = hashlib.blake2b(f"{int(root_seed)}:{label}".encode(), digest_size=4)
    return int.from_bytes(h.digest(), 'big')
