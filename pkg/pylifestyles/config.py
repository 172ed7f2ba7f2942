"""Pipeline configuration: one JSON file, one section per stage family, one root seed."""
import dataclasses
import hashlib
import json
from pathlib import Path

from . import const as _const
from . import helpers as _h
from .baselines import C_GRID
from .cmf import CmfConfig
from .core import LifestyleError
from .synth import SynthConfig
from .types import *


@dataclasses.dataclass
class DataConfig:
    cdr: str = 'data/cdr.csv'
    ccr: str = 'data/ccr.csv'
    towers: str = 'data/towers.csv'
    pois: str = 'data/pois.csv'
    amount_buckets: Optional[int] = None

    def errors(self) -> List[str]:
        if self.amount_buckets is not None and self.amount_buckets < 2:
            return [f"amount_buckets: must be >= 2 or null, got {self.amount_buckets!r}"]
        return []


@dataclasses.dataclass
class LdaConfig:
    behaviors: int = _const.SHOPPING_BEHAVIORS
    alpha: Optional[float] = None
    beta: float = _const.LDA_BETA
    iterations: int = _const.LDA_TRAIN_ITERATIONS
    infer_iterations: int = _const.LDA_INFER_ITERATIONS
    train_fraction: float = _const.LDA_TRAIN_FRACTION
    perplexity_grid: List[int] = dataclasses.field(default_factory=list)

    def errors(self) -> List[str]:
        errors = []
        if self.behaviors < 1:
            errors.append(f"behaviors: must be >= 1, got {self.behaviors!r}")
        if self.alpha is not None and not self.alpha > 0:
            errors.append(f"alpha: must be > 0 or null, got {self.alpha!r}")
        if not self.beta > 0:
            errors.append(f"beta: must be > 0, got {self.beta!r}")
        if self.iterations < 0 or self.infer_iterations < 0:
            errors.append("iterations: sweep counts must be >= 0")
        if not 0 < self.train_fraction < 1:
            errors.append(f"train_fraction: must be in (0, 1), got {self.train_fraction!r}")
        if any(k < 1 for k in self.perplexity_grid):
            errors.append("perplexity_grid: topic counts must be >= 1")
        return errors


@dataclasses.dataclass
class GeoConfig:
    threshold: float = _const.POI_FREQUENCY_THRESHOLD
    classes: int = _const.TOWER_CLASSES
    iterations: int = _const.LDA_TRAIN_ITERATIONS
    provider: str = 'file'
    url_template: Optional[str] = None
    api_key_env: Optional[str] = None
    rate_limit: float = 5.0
    max_retries: int = 3
    backoff_base: float = 0.5
    n_jobs: int = 1

    def errors(self) -> List[str]:
        errors = []
        if not 0 < self.threshold <= 1:
            errors.append(f"threshold: must be in (0, 1], got {self.threshold!r}")
        if self.classes < 1:
            errors.append(f"classes: must be >= 1, got {self.classes!r}")
        if self.provider not in ('file', 'http'):
            errors.append(f"provider: must be 'file' or 'http', got {self.provider!r}")
        if self.provider == 'http' and not self.url_template:
            errors.append("url_template: required when provider is 'http'")
        if not self.rate_limit > 0:
            errors.append(f"rate_limit: must be > 0, got {self.rate_limit!r}")
        if self.max_retries < 1:
            errors.append(f"max_retries: must be >= 1, got {self.max_retries!r}")
        if self.n_jobs == 0:
            errors.append("n_jobs: must be nonzero")
        return errors


@dataclasses.dataclass
class FeaturesConfig:
    """TF-IDF weighting has no knobs; the section is kept so the file layout names every stage."""

    def errors(self) -> List[str]:
        return []


@dataclasses.dataclass
class CmfSection:
    rank: int = 3
    lambda_u: float = 0.1
    lambda_s: float = 0.1
    lambda_m: float = 0.1
    gamma_s: float = 0.1
    gamma_m: float = 0.1
    tol: float = _const.CMF_TOL
    max_iter: int = _const.CMF_MAX_ITER
    inner_iter: int = _const.CMF_INNER_ITER
    center: bool = False
    clamp: bool = False
    rank_grid: List[int] = dataclasses.field(default_factory=lambda: list(_const.CMF_RANK_GRID))
    folds: int = _const.CV_FOLDS
    n_jobs: int = 1
    private_threshold: float = 0.05
    lifestyle_top_k: int = 3

    def model_config(self, seed: int, rank: int = None) -> CmfConfig:
        fields = {f.name for f in dataclasses.fields(CmfConfig)} - {'seed', 'rank'}
        return CmfConfig(rank=rank or self.rank, seed=seed, **{k: getattr(self, k) for k in fields})

    def errors(self) -> List[str]:
        errors = self.model_config(0).errors()
        if not self.rank_grid or any(r < 1 for r in self.rank_grid):
            errors.append("rank_grid: must be a nonempty list of ranks >= 1")
        if self.folds < 2:
            errors.append(f"folds: must be >= 2, got {self.folds!r}")
        if self.n_jobs == 0:
            errors.append("n_jobs: must be nonzero")
        if not 0 < self.private_threshold < 1:
            errors.append(f"private_threshold: must be in (0, 1), got {self.private_threshold!r}")
        return errors


@dataclasses.dataclass
class BaselinesConfig:
    lambda_grid: List[float] = dataclasses.field(default_factory=lambda: [10.0 ** e for e in range(1, -5, -1)])
    folds: int = 5
    C_grid: List[float] = dataclasses.field(default_factory=lambda: list(C_GRID))

    def errors(self) -> List[str]:
        errors = []
        if not self.lambda_grid or any(lam < 0 for lam in self.lambda_grid):
            errors.append("lambda_grid: must be a nonempty list of values >= 0")
        if self.folds < 2:
            errors.append(f"folds: must be >= 2, got {self.folds!r}")
        if not self.C_grid or any(not c > 0 for c in self.C_grid):
            errors.append("C_grid: must be a nonempty list of values > 0")
        return errors


@dataclasses.dataclass
class SynthSection:
    n: int = 500
    p: int = 100
    d: int = 20
    K: int = 5
    r: int = 3
    noise_sigma: float = 0.05
    private_factors_s: List[int] = dataclasses.field(default_factory=list)
    private_factors_m: List[int] = dataclasses.field(default_factory=list)
    side_m: float = 30_000.0
    days: int = 150

    def synth_config(self, seed: int) -> SynthConfig:
        return SynthConfig(n=self.n, p=self.p, d=self.d, K=self.K, r=self.r, noise_sigma=self.noise_sigma,
                           private_factors_s=tuple(self.private_factors_s),
                           private_factors_m=tuple(self.private_factors_m), seed=seed, side_m=self.side_m,
                           days=self.days)

    def errors(self) -> List[str]:
        return self.synth_config(0).errors()


_SECTIONS = {
    'data'     : DataConfig,
    'lda'      : LdaConfig,
    'geo'      : GeoConfig,
    'features' : FeaturesConfig,
    'cmf'      : CmfSection,
    'baselines': BaselinesConfig,
    'synth'    : SynthSection,
}


def _type_errors(section: str, instance) -> List[str]:
    errors = []
    defaults = type(instance)()
    for f in dataclasses.fields(instance):
        value, default = getattr(instance, f.name), getattr(defaults, f.name)
        if value is None or default is None:
            continue
        expected = (int, float) if isinstance(default, float) else type(default)
        if isinstance(default, bool):
            ok = isinstance(value, bool)
        else:
            ok = isinstance(value, expected) and not (isinstance(value, bool) and expected is not bool)
        if not ok:
            errors.append(f"{section}.{f.name}: expected {type(default).__name__}, got {type(value).__name__}")
    return errors


@dataclasses.dataclass
class Config:
    seed: int = 0
    data: DataConfig = dataclasses.field(default_factory=DataConfig)
    lda: LdaConfig = dataclasses.field(default_factory=LdaConfig)
    geo: GeoConfig = dataclasses.field(default_factory=GeoConfig)
    features: FeaturesConfig = dataclasses.field(default_factory=FeaturesConfig)
    cmf: CmfSection = dataclasses.field(default_factory=CmfSection)
    baselines: BaselinesConfig = dataclasses.field(default_factory=BaselinesConfig)
    synth: SynthSection = dataclasses.field(default_factory=SynthSection)

    @classmethod
    def from_dict(cls, raw: Mapping) -> 'Config':
        """Build and validate; every violation is collected and reported in one INVALID_CONFIG error."""
        errors = []
        if not isinstance(raw, Mapping):
            raise LifestyleError(_const.ERROR_CODE.INVALID_CONFIG, "Config must be a JSON object")
        for key in sorted(set(raw) - set(_SECTIONS) - {'seed'}):
            errors.append(f"{key}: unknown section")
        seed = raw.get('seed', 0)
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            errors.append(f"seed: must be an integer >= 0, got {seed!r}")
            seed = 0
        sections = {}
        for name, section_cls in _SECTIONS.items():
            values = raw.get(name, {})
            if not isinstance(values, Mapping):
                errors.append(f"{name}: must be an object")
                values = {}
            known = {f.name for f in dataclasses.fields(section_cls)}
            errors.extend(f"{name}.{key}: unknown field" for key in sorted(set(values) - known))
            section = section_cls(**{k: v for k, v in values.items() if k in known})
            type_errors = _type_errors(name, section)
            errors.extend(type_errors)
            if not type_errors:
                try:
                    errors.extend(f"{name}.{e}" for e in section.errors())
                except TypeError as e:
                    errors.append(f"{name}: {e}")
            sections[name] = section
        if errors:
            raise LifestyleError(_const.ERROR_CODE.INVALID_CONFIG,
                                 f"{len(errors)} config violations: " + '; '.join(errors))
        return cls(seed=seed, **sections)

    @classmethod
    def load(cls, path: PathLike = None) -> 'Config':
        if path is None:
            return cls()
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise LifestyleError(_const.ERROR_CODE.INVALID_CONFIG, f"Config file {path} does not exist")
        except json.JSONDecodeError as e:
            raise LifestyleError(_const.ERROR_CODE.INVALID_CONFIG, f"Config file {path} is not valid JSON: {e}")
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return _h.make_native(dataclasses.asdict(self))

    def digest(self) -> str:
        """sha256 of the canonical JSON form."""
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    def with_seed(self, seed: Optional[int]) -> 'Config':
        return self if seed is None else dataclasses.replace(self, seed=int(seed))

    def seed_for(self, label: str) -> int:
        return _h.derive_seed(self.seed, label)
