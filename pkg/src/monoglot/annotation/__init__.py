from .campaign import (
    AnnotationError,
    AnnotationItem,
    AnnotationRecord,
    Campaign,
    ConflictError,
    ResolvedLabel,
    ValidationError,
    agreement_stats,
    export_dataset,
    load_campaign,
    resolve_agreement,
)
from .service import create_app

__all__ = [
    "AnnotationError",
    "AnnotationItem",
    "AnnotationRecord",
    "Campaign",
    "ConflictError",
    "ResolvedLabel",
    "ValidationError",
    "agreement_stats",
    "export_dataset",
    "load_campaign",
    "resolve_agreement",
    "create_app",
]
