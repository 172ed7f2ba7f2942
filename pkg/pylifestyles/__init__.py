from . import types
from .artifacts import require_stage
from .artifacts import write_manifest
from .baselines import classify_primary
from .baselines import lasso_cd
from .baselines import lasso_regression
from .baselines import primary_behavior
from .cmf import CmfConfig
from .cmf import CmfModel
from .cmf import RowMask
from .cmf import compare_views
from .cmf import cross_validate
from .cmf import fit as cmf_fit
from .cmf import lifestyle_report
from .cmf import predict_shopping
from .cmf import private_factors
from .config import Config
from .const import *
from .context import session
from .core import LifestyleError
from .features import MobilityMatrix
from .features import mobility_matrix
from .features import tfidf
from .geo import TowerClassMatrix
from .geo import Triangulation
from .geo import crawl_radii
from .geo import crawl_radius
from .geo import delaunay
from .geo import filter_frequent_categories
from .geo import tower_classes
from .geo import tower_sites
from .helpers import LogJson
from .helpers import make_native
from .ingest import Dataset
from .ingest import average_weekly_spend
from .ingest import build_dataset
from .ingest import build_mcc_documents
from .ingest import build_visit_matrix
from .ingest import load_towers
from .ingest import parse_ccr
from .ingest import parse_cdr
from .lda import TopicModel
from .log import get_logger
from .matrix import SparseCountMatrix
from .poi import FilePoiProvider
from .poi import HttpPoiProvider
from .poi import fetch_all_pois
from .poi import fetch_pois
from .synth import SynthConfig
from .synth import generate as generate_synthetic
from .synth import planted_views

__version__ = {
    'pylifestyles': '0.1.0',
}

__author__ = {
    'pylifestyles': 'pylifestyles developers',
}
