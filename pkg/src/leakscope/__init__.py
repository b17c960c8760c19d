"""leakscope: side-channel discovery and few-shot leakage analysis."""

from .errors import LeakscopeError
from .traces import ChannelSpec, Dataset, SplitSpec, Trace, load_dataset, save_dataset, split_dataset
from .synth import ScenarioConfig, SyntheticChannelConfig, generate_dataset
from .rocket import FeatureMatrix, KernelBank, generate_kernels, transform_dataset
from .pca import Projection, fit_pca, project
from .classify import ClassifierBackendSpec, accuracy, fit_context, predict
from .discovery import (
    ChannelDatabase,
    ChannelDescriptor,
    DiscoveryConfig,
    EventSpec,
    KnowledgeBase,
    run_discovery,
)
from .analysis import AnalysisReport, PipelineConfig, run_analysis, run_exclusion_study, select_channels
from .defenses import DefenseSpec, evaluate_defense

__version__ = "0.1.0"

__all__ = [
    "LeakscopeError",
    "ChannelSpec",
    "Dataset",
    "SplitSpec",
    "Trace",
    "load_dataset",
    "save_dataset",
    "split_dataset",
    "ScenarioConfig",
    "SyntheticChannelConfig",
    "generate_dataset",
    "FeatureMatrix",
    "KernelBank",
    "generate_kernels",
    "transform_dataset",
    "Projection",
    "fit_pca",
    "project",
    "ClassifierBackendSpec",
    "accuracy",
    "fit_context",
    "predict",
    "ChannelDatabase",
    "ChannelDescriptor",
    "DiscoveryConfig",
    "EventSpec",
    "KnowledgeBase",
    "run_discovery",
    "AnalysisReport",
    "PipelineConfig",
    "run_analysis",
    "run_exclusion_study",
    "select_channels",
    "DefenseSpec",
    "evaluate_defense",
]
