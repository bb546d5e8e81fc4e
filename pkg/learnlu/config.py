"""
Run configuration: dataclasses for each command, YAML config files, and
key validation.

Values resolve with the precedence: dataclass defaults < config file
section < command-line flags.
"""
import dataclasses
from dataclasses import dataclass
from typing import Optional

from .data import read_yaml
from .exceptions import ConfigError

ANY = True

FORMAT_VERSION = 1

LOSSES = ('max', 'min', 'min-hat', 'combined', 'combined-exact')
AGGREGATIONS = ('mean', 'sum')
ACTIVATIONS = ('relu', 'tanh')
PRECONDITIONERS = ('none', 'jacobi', 'ilu0', 'learned')
CONFIG_SECTIONS = ('run', 'generate', 'train', 'model', 'eval', 'spectrum')


def check_keys(d, required, allowed=None, optional=None,
               descr="the configuration"):
    """
    Check that the keys of dictionary `d` are as expected, raising
    `ConfigError` on a mismatch.

    PARAMETERS
    ----------
    d : dict
       A dictionary to validate
    required : iterable
       Keys `d` must have.
    allowed : {iterable, ANY, None}
       If `ANY`, only required keys are checked. If an iterable, any key
       of `d` outside it is an error. If `None`, the allowed keys are
       `required` plus `optional`.
    optional : {iterable, None}, optional
       Keys `d` may have. Give at most one of `allowed` and `optional`.
    descr : string, optional
       A description of the object being validated, used in the error
       message.

    """
    if optional is not None and allowed is not None:
        raise ValueError("You may specify at most one of `allowed` and "
                         "`optional`")
    if allowed == ANY:
        pass
    elif allowed is not None:
        allowed = set(allowed)
        required_but_not_allowed = [r for r in required if r not in allowed]
        if len(required_but_not_allowed) > 0:
            raise ValueError("required keys %r are not allowed"
                             % required_but_not_allowed)
    elif optional is not None:
        allowed = set.union(set(optional), set(required))
    else:
        allowed = set(required)
    keyset = set(d.keys())
    missing = sorted(k for k in required if k not in keyset)
    unexpected = (
        sorted(k for k in keyset if k not in allowed)
        if allowed != ANY
        else []
    )
    if len(missing) > 0 or len(unexpected) > 0:
        raise ConfigError(
            "Key mismatch in %s. Missing required keys %r, "
            "found unexpected keys %r" %
            (descr, missing, unexpected)
        )


def check_all_in(collection, permissible, descr='the collection'):
    """
    Verify that all items in `collection` are in `permissible`.
    """
    permissible = set(permissible)
    unknown = sorted(item for item in collection if item not in permissible)
    if len(unknown) > 0:
        raise ConfigError("Unknown items %r in %s, expected some of %r"
                          % (unknown, descr, sorted(permissible)))


class _ConfigMixin(object):
    "Mapping conversion shared by all config dataclasses."

    @classmethod
    def field_names(cls):
        return [f.name for f in dataclasses.fields(cls)]

    @classmethod
    def from_mapping(cls, mapping, descr=None):
        mapping = dict(mapping or {})
        check_keys(mapping, required=[], optional=cls.field_names(),
                   descr=descr or cls.__name__)
        try:
            config = cls(**mapping)
        except TypeError as e:
            raise ConfigError("invalid %s: %s" % (descr or cls.__name__, e))
        config.validate()
        return config

    @classmethod
    def resolve(cls, file_section=None, flags=None, descr=None):
        """
        Merge a config-file section and command-line flags over the
        defaults. Flags set to `None` count as not given.
        """
        merged = dict(file_section or {})
        merged.update({k: v for k, v in (flags or {}).items()
                       if v is not None})
        return cls.from_mapping(merged, descr=descr)

    def to_mapping(self):
        return dataclasses.asdict(self)

    def replace(self, **changes):
        config = dataclasses.replace(self, **changes)
        config.validate()
        return config

    def validate(self):
        pass


def _positive(config, *names):
    for name in names:
        value = getattr(config, name)
        if not value > 0:
            raise ConfigError("%s.%s must be positive, got %r"
                              % (type(config).__name__, name, value))


def _nonnegative(config, *names):
    for name in names:
        value = getattr(config, name)
        if not value >= 0:
            raise ConfigError("%s.%s must be nonnegative, got %r"
                              % (type(config).__name__, name, value))


@dataclass(frozen=True)
class GenerateConfig(_ConfigMixin):
    grid: int = 20
    train: int = 50
    val: int = 5
    test: int = 5
    seed: int = 0
    offline_tol: float = 1e-11
    jobs: int = 1

    def validate(self):
        if self.grid < 2:
            raise ConfigError("grid side must be at least 2, got %r"
                              % self.grid)
        _positive(self, 'train', 'val', 'test', 'offline_tol', 'jobs')
        _nonnegative(self, 'seed')


@dataclass(frozen=True)
class ModelConfig(_ConfigMixin):
    layers: int = 3
    edge_hidden: int = 32
    node_hidden: int = 16
    eps: float = 1e-4
    aggregation: str = 'mean'
    activation: str = 'relu'
    seed: int = 0

    def validate(self):
        _positive(self, 'layers', 'edge_hidden', 'node_hidden', 'eps')
        check_all_in([self.aggregation], AGGREGATIONS, 'model.aggregation')
        check_all_in([self.activation], ACTIVATIONS, 'model.activation')


@dataclass(frozen=True)
class TrainConfig(_ConfigMixin):
    loss: str = 'max'
    alpha: float = 0.2
    lr: float = 0.001
    epochs: int = 100
    batch: int = 1
    clip: float = 1.0
    eps: float = 1e-4
    seed: int = 0
    hutchinson_samples: int = 1
    val_tol: float = 1e-8
    inner_tol: float = 1e-10
    jobs: int = 1
    reorthogonalize: bool = False

    def validate(self):
        check_all_in([self.loss], LOSSES, 'train.loss')
        _nonnegative(self, 'alpha', 'epochs', 'seed')
        _positive(self, 'lr', 'clip', 'eps', 'hutchinson_samples',
                  'val_tol', 'inner_tol', 'jobs')
        if self.batch != 1:
            raise ConfigError("only batch size 1 is supported, got %r"
                              % self.batch)


@dataclass(frozen=True)
class EvalConfig(_ConfigMixin):
    tol: float = 1e-8
    kmax: Optional[int] = None
    dense_cap: int = 2000
    bins: int = 60
    jobs: int = 1
    timings: bool = True
    check_bounds: bool = True
    reorthogonalize: bool = False

    def validate(self):
        _positive(self, 'tol', 'dense_cap', 'bins', 'jobs')
        if self.kmax is not None:
            _positive(self, 'kmax')


@dataclass(frozen=True)
class SpectrumConfig(_ConfigMixin):
    split: str = 'test'
    problem: int = 0
    dense_cap: int = 2000
    bins: int = 60
    edges_only: bool = False
    power_iters: int = 500
    power_tol: float = 1e-10

    def validate(self):
        check_all_in([self.split], ('train', 'val', 'test'), 'spectrum.split')
        _nonnegative(self, 'problem')
        _positive(self, 'dense_cap', 'bins', 'power_iters', 'power_tol')


@dataclass(frozen=True)
class RunConfig(_ConfigMixin):
    """
    Settings shared by every command. `seed`, `jobs` and `dense_cap` feed
    the command sections that have a field of the same name.
    """
    out: Optional[str] = None
    seed: Optional[int] = None
    jobs: Optional[int] = None
    dense_cap: Optional[int] = None

    def validate(self):
        if self.seed is not None:
            _nonnegative(self, 'seed')
        for name in ('jobs', 'dense_cap'):
            if getattr(self, name) is not None:
                _positive(self, name)

    def shared_for(self, config_cls):
        "The set values of this section that `config_cls` also has."
        names = set(config_cls.field_names())
        return {k: v for k, v in self.to_mapping().items()
                if k in names and v is not None}


def section_config(config_cls, file_config, section, flags=None):
    """
    Resolve `config_cls` from the `run` section, then the `section`
    section of a loaded config file, then command-line `flags`.
    """
    run = RunConfig.from_mapping(file_config.get('run'), descr='run section')
    merged = run.shared_for(config_cls)
    merged.update(file_config.get(section) or {})
    return config_cls.resolve(merged, flags,
                              descr='%s configuration' % section)


def load_config_file(path):
    """
    Read a YAML config file: a mapping from section name (`run`,
    `generate`, `train`, `model`, `eval`, `spectrum`) to key-value
    mappings. A missing path gives an empty config.
    """
    if path is None:
        return {}
    content = read_yaml(path) or {}
    if not isinstance(content, dict):
        raise ConfigError("config file %s must contain a mapping" % path)
    check_keys(content, required=[], optional=CONFIG_SECTIONS,
               descr="config file %s" % path)
    for section, values in content.items():
        if not isinstance(values, dict):
            raise ConfigError("section %r of config file %s must be a "
                              "mapping" % (section, path))
    return content


def parse_name_list(value, permissible, descr):
    """
    Parse a comma-separated flag (fire may hand us a string, a tuple or a
    list) into a list of names, validated against `permissible`.
    """
    if isinstance(value, str):
        names = [v.strip() for v in value.split(',') if v.strip()]
    else:
        names = [str(v).strip() for v in value]
    if not names:
        raise ConfigError("%s must name at least one item" % descr)
    check_all_in(names, permissible, descr)
    return names
