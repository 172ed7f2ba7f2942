import enum

# ingest
CDR_COLUMNS = ('user_id', 'tower_id', 'timestamp')
CCR_COLUMNS = ('user_id', 'mcc', 'amount', 'timestamp')
TOWER_COLUMNS = ('tower_id', 'lat', 'lon')
POI_COLUMNS = ('tower_id', 'category')
TRIPLET_COLUMNS = ('row_id', 'col_id', 'value')
AMOUNT_TOKEN_SEP = '@'
DAYS_PER_WEEK = 7
SECONDS_PER_DAY = 86_400

# lda
LDA_ALPHA_NUMERATOR = 50.0
LDA_BETA = 0.01
LDA_TRAIN_ITERATIONS = 1000
LDA_INFER_ITERATIONS = 200
LDA_TRAIN_FRACTION = 0.4
SHOPPING_BEHAVIORS = 5

# geo
EARTH_RADIUS_M = 6_371_008.8
POI_FREQUENCY_THRESHOLD = 0.25
TOWER_CLASSES = 20
POI_LIST_SEP = ';'

# cmf
CMF_TOL = 1e-6
CMF_MAX_ITER = 500
CMF_INNER_ITER = 10
CMF_RANK_GRID = tuple(range(2, 11))
CV_FOLDS = 10
INNER_FOLDS = 3
RIDGE_FLOOR = 1e-8

# report
TOP_K = 20

ROW_STOCHASTIC_TOL = 1e-9


class ERROR_CODE(enum.IntEnum):
    OK = 1  # generic success
    FAIL = -1  # generic fail
    INVALID_PARAMS = -2  # invalid arguments/parameters
    INVALID_CONFIG = -3  # config file or section failed validation
    EMPTY_INPUT = -4  # nothing to work on
    SHAPE_MISMATCH = -5  # matrix dimensions do not line up
    DEGENERATE_GEOMETRY = -6  # too few or collinear sites
    PARSE_ERROR = -7  # malformed input row
    NOT_FOUND = -8  # missing artifact or record
    PROVIDER_FAILURE = -9  # POI provider gave up after retries
    NON_FINITE = -10  # optimizer produced nan/inf


class EXIT_CODE(enum.IntEnum):
    SUCCESS = 0
    USAGE = 1
    RUNTIME = 2


class STAGE(str, enum.Enum):
    """Pipeline stages in dependency order."""
    SYNTH = 'synth'
    INGEST = 'ingest'
    LDA_SHOPPING = 'lda-shopping'
    TOWERS = 'towers'
    FEATURES = 'features'
    CMF_FIT = 'cmf-fit'
    CMF_CV = 'cmf-cv'
    COMPARE_VIEWS = 'compare-views'
    BASELINES = 'baselines'
    REPORT = 'report'


STAGE_REQUIRES = {
    STAGE.SYNTH        : (),
    STAGE.INGEST       : (),
    STAGE.LDA_SHOPPING : (STAGE.INGEST,),
    STAGE.TOWERS       : (STAGE.INGEST,),
    STAGE.FEATURES     : (STAGE.INGEST, STAGE.TOWERS),
    STAGE.CMF_FIT      : (STAGE.LDA_SHOPPING, STAGE.FEATURES),
    STAGE.CMF_CV       : (STAGE.LDA_SHOPPING, STAGE.FEATURES),
    STAGE.COMPARE_VIEWS: (STAGE.LDA_SHOPPING, STAGE.FEATURES),
    STAGE.BASELINES    : (STAGE.INGEST, STAGE.LDA_SHOPPING),
    STAGE.REPORT       : (STAGE.LDA_SHOPPING, STAGE.TOWERS, STAGE.CMF_FIT),
}
