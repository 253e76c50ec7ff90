from .ranking_scorer import EvalReport, RankingScorer, acc_at_k, mrr, ranks
