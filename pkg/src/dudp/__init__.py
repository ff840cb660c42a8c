"""Data-curation, verifiable-reward, and evaluation toolkit for multimodal
ultrasound corpora."""

from .records import (DudpRecord, MaskRef, MediaRef, Measurement, RegionDescriptor,
                      SourceInfo, TaskCategory, canonicalize, gold_label,
                      mask_to_region_descriptor, partition_splits, read_corpus,
                      validate_record, write_corpus)
from .templates import QaTemplate, TemplateBank, build_starter_bank, load_template_bank
from .qagen import (QaPair, build_mcq, distill_answer, evolve_breadth, evolve_depth,
                    render_qa)
from .filterbank import FilterRuleConfig, FilterVerdict, JudgeScores, rule_filter, run_pipeline
from .rewards import (FormatSpec, ParsedAnswer, RewardSignal, extract_answer,
                      format_reward, group_advantages, outcome_reward, reward_batch)
from .metrics import (MetricReport, bleu, embed_sim, eval_run, rouge_l,
                      score_classification, score_regression, u2_score)
from .gateway import GatewayProfile, ModelGateway
from .review import ReviewService, ReviewTicket, RoundPolicy

__version__ = "0.1.0"

__all__ = [
    "DudpRecord", "MaskRef", "MediaRef", "Measurement", "RegionDescriptor",
    "SourceInfo", "TaskCategory", "canonicalize", "gold_label",
    "mask_to_region_descriptor", "partition_splits", "read_corpus",
    "validate_record", "write_corpus",
    "QaTemplate", "TemplateBank", "build_starter_bank", "load_template_bank",
    "QaPair", "build_mcq", "distill_answer", "evolve_breadth", "evolve_depth",
    "render_qa",
    "FilterRuleConfig", "FilterVerdict", "JudgeScores", "rule_filter", "run_pipeline",
    "FormatSpec", "ParsedAnswer", "RewardSignal", "extract_answer", "format_reward",
    "group_advantages", "outcome_reward", "reward_batch",
    "MetricReport", "bleu", "embed_sim", "eval_run", "rouge_l",
    "score_classification", "score_regression", "u2_score",
    "GatewayProfile", "ModelGateway",
    "ReviewService", "ReviewTicket", "RoundPolicy",
    "__version__",
]
