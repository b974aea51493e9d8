"""Root-cause and remediation recommendation over a merged causal + knowledge graph."""

from .causal import Cpdag, PCDiscovery, chi_square_ci_test, discover
from .ckgraph import CkGraph, link_alerts_to_symptoms, traverse_to_symptoms
from .config import ConfigError, Settings, load_settings
from .evaluation import EvalReport, incident_search_baseline, leave_one_out_eval, rouge_1, rouge_l
from .forest import OutageClusterForest, top_k_precision
from .inference import InferenceQuery, Recommendation, infer, run_query
from .ingestion import (
    Alert,
    AlertLog,
    IndicatorMatrix,
    OutageReport,
    build_indicator_matrix,
    filter_columns,
    filter_rows,
    parse_alerts,
)
from .knowledge import CosineAgglomerative, KnowledgeGraph, build_kg, merge_clusters, select_optimal_k
from .pipeline import RootCauseRecommender, build_ck_graph
from .synth import ScenarioSpec, generate_alert_stream, generate_corpus, generate_outage_corpus, random_scenario
from .text import ExternalProvider, HashingEmbedder, LeadSummarizer

__version__ = "0.1.0"

__all__ = [
    "Alert", "AlertLog", "CkGraph", "ConfigError", "CosineAgglomerative", "Cpdag", "EvalReport",
    "ExternalProvider", "HashingEmbedder", "IndicatorMatrix", "InferenceQuery", "KnowledgeGraph",
    "LeadSummarizer", "OutageClusterForest", "OutageReport", "PCDiscovery", "Recommendation",
    "RootCauseRecommender", "ScenarioSpec", "Settings", "build_ck_graph", "build_indicator_matrix",
    "build_kg", "chi_square_ci_test", "discover", "filter_columns", "filter_rows",
    "generate_alert_stream", "generate_corpus", "generate_outage_corpus", "incident_search_baseline",
    "infer", "leave_one_out_eval", "link_alerts_to_symptoms", "load_settings", "merge_clusters",
    "parse_alerts", "random_scenario", "rouge_1", "rouge_l", "run_query", "select_optimal_k", "top_k_precision",
    "traverse_to_symptoms",
]
