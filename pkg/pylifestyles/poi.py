"""POI providers: where the category multisets around each tower come from.

``FilePoiProvider`` reads a fixture and is the default. ``HttpPoiProvider`` queries a places API through a URL
template and is only used when configured.
"""
import io
import os
import threading
import time

import pandas as pd
import requests
from joblib import Parallel
from joblib import delayed

from . import const as _const
from .core import _logged_operation
from .core import flag
from .core import LifestyleError
from .core import log_info
from .core import require
from .geo import Triangulation
from .state import global_state as _state
from .types import *


class PoiProvider:
    """Interface: categories of the points of interest within ``radius`` meters of a tower site."""

    def categories(self, site: TowerSite, radius: float) -> List[str]:
        raise NotImplementedError


class FilePoiProvider(PoiProvider):
    """Serves POIs from a ``tower_id,category`` fixture.

    A row holds one category, or several joined by ``;``. The radius is ignored: the fixture already reflects it.
    """

    def __init__(self, source: Union[PathLike, io.IOBase, Mapping[str, Sequence[str]]]):
        if isinstance(source, Mapping):
            self._pois = {str(t): [str(c) for c in cats] for t, cats in source.items()}
        else:
            self._pois = self._read(source)
        self.missing = []

    @staticmethod
    def _read(source) -> Dict[str, List[str]]:
        frame = pd.read_csv(source, dtype=str, keep_default_na=False)
        missing = [c for c in _const.POI_COLUMNS if c not in frame.columns]
        if missing:
            raise LifestyleError(_const.ERROR_CODE.PARSE_ERROR, f"POI fixture lacks columns {missing}")
        pois = {}
        for tower_id, field in zip(frame['tower_id'].str.strip(), frame['category']):
            cats = [c.strip() for c in field.split(_const.POI_LIST_SEP) if c.strip()]
            pois.setdefault(tower_id, []).extend(cats)
        return pois

    def categories(self, site: TowerSite, radius: float) -> List[str]:
        if site.tower_id not in self._pois:
            self.missing.append(site.tower_id)
            flag(_const.ERROR_CODE.NOT_FOUND, f'Tower {site.tower_id} is absent from the POI fixture',
                 tower_id=site.tower_id)
            return []
        return list(self._pois[site.tower_id])


class TokenBucket:
    """Thread-safe rate limiter: ``rate`` tokens per second, bursts of up to ``capacity``."""

    def __init__(self, rate: float, capacity: float = 1.0, clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        require(rate > 0, _const.ERROR_CODE.INVALID_PARAMS, f"rate must be > 0, got {rate}")
        self.rate = float(rate)
        self.capacity = float(capacity)
        self._clock = clock
        self._sleep = sleep
        self._tokens = self.capacity
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self):
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
                self._last = now
                if self._tokens >= 1:
                    self._tokens -= 1
                    return
                wait = (1 - self._tokens) / self.rate
            self._sleep(wait)


class HttpPoiProvider(PoiProvider):
    """Places-API provider.

    :param url_template: URL with ``{lat}``, ``{lon}``, ``{radius}`` and optionally ``{key}`` placeholders.
    :param locations: tower_id -> (lat, lon); the projected site carries meters only.
    :param api_key_env: Name of the environment variable holding the API key.
    :param rate_limit: Requests per second across all worker threads.
    :param max_retries: Attempts per tower before giving up.
    :param backoff_base: First retry waits this many seconds, doubling each attempt.
    :param backoff_max: Upper bound on a single wait.
    """

    def __init__(self,
                 url_template: str,
                 locations: Mapping[str, Tuple[float, float]],
                 api_key_env: str = None,
                 rate_limit: float = 5.0,
                 max_retries: int = 3,
                 backoff_base: float = 0.5,
                 backoff_max: float = 8.0,
                 timeout: float = 10.0,
                 session: requests.Session = None,
                 sleep: Callable[[float], None] = time.sleep,
                 ):
        require(max_retries >= 1, _const.ERROR_CODE.INVALID_PARAMS, "max_retries must be >= 1")
        self.url_template = url_template
        self.locations = dict(locations)
        self.api_key = os.environ.get(api_key_env, '') if api_key_env else ''
        if api_key_env and not self.api_key:
            raise LifestyleError(_const.ERROR_CODE.INVALID_CONFIG, f"Environment variable {api_key_env} is not set")
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.backoff_max = backoff_max
        self.timeout = timeout
        self.session = session or requests.Session()
        self._sleep = sleep
        self._bucket = TokenBucket(rate_limit, sleep=sleep)

    def url(self, tower_id: str, radius: float) -> str:
        if tower_id not in self.locations:
            raise LifestyleError(_const.ERROR_CODE.NOT_FOUND, f"No coordinates for tower {tower_id}")
        lat, lon = self.locations[tower_id]
        return self.url_template.format(lat=lat, lon=lon, radius=int(round(radius)), key=self.api_key)

    @staticmethod
    def parse(payload: dict) -> List[str]:
        """Categories from a ``{"results": [{"types": [...]}, ...]}`` response."""
        return [str(t) for place in payload.get('results', []) for t in place.get('types', [])]

    def categories(self, site: TowerSite, radius: float) -> List[str]:
        url = self.url(site.tower_id, radius)
        last_err = None
        for attempt in range(self.max_retries):
            self._bucket.acquire()
            try:
                resp = self.session.get(url, timeout=self.timeout)
                resp.raise_for_status()
                return self.parse(resp.json())
            except (requests.RequestException, ValueError) as e:
                last_err = e
                if attempt + 1 < self.max_retries:
                    self._sleep(min(self.backoff_max, self.backoff_base * 2 ** attempt))
        raise LifestyleError(_const.ERROR_CODE.PROVIDER_FAILURE,
                             f"POI request for tower {site.tower_id} failed after {self.max_retries} attempts: "
                             f"{last_err}")


@_logged_operation()
def fetch_pois(provider: PoiProvider, site: TowerSite, radius: float) -> List[str]:
    require(radius > 0, _const.ERROR_CODE.INVALID_PARAMS, f"radius must be > 0, got {radius}")
    return provider.categories(site, radius)


@_logged_operation()
def fetch_all_pois(provider: PoiProvider,
                   triangulation: Triangulation,
                   radii: Mapping[str, float],
                   n_jobs: int = None,
                   ) -> Dict[str, List[str]]:
    """Category multiset for every tower, aliases included, fetched on a thread pool.

    Results are keyed by tower_id and independent of completion order.
    """
    n_jobs = n_jobs or _state.n_jobs
    sites = triangulation.sites
    found = Parallel(n_jobs=n_jobs, prefer='threads')(
        delayed(fetch_pois)(provider, s, radii[s.tower_id]) for s in sites)
    pois = {s.tower_id: cats for s, cats in zip(sites, found)}
    for alias, kept in sorted(triangulation.aliases.items()):
        pois[alias] = list(pois[kept])
    log_info('POIs Fetched', 'poi_fetch', towers=len(pois), pois=sum(map(len, pois.values())),
             empty=sum(1 for c in pois.values() if not c))
    return dict(sorted(pois.items()))
