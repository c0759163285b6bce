"""Orchestration package."""
from orchestration.graph import ErrorRecord, ExperimentOrchestrator

__all__ = ["ErrorRecord", "ExperimentOrchestrator"]
