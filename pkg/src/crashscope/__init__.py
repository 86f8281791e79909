"""Automated crash discovery, reporting and replay over simulated app models."""

from .analyzer import FeatureMap, classify_contextual_features, rotatable_activities
from .appmodel import AppModel, CrashSignature, load_app_model, validate
from .explorer import ExplorationStrategy, all_strategies, explore
from .replay import generate_script, parse_script, replay
from .reporter import generate_report
from .simdevice import SimDevice

__all__ = [
    "AppModel",
    "CrashSignature",
    "ExplorationStrategy",
    "FeatureMap",
    "SimDevice",
    "all_strategies",
    "classify_contextual_features",
    "explore",
    "generate_report",
    "generate_script",
    "load_app_model",
    "parse_script",
    "replay",
    "rotatable_activities",
    "validate",
]
