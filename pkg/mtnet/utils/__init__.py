from .scorers import RankingScorer, acc_at_k, mrr
from .utils_fct import deep_update, setup_logging
