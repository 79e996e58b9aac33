from .agreement import annotator_quality, krippendorff_alpha, pairwise_percent_agreement
from .assembly import (
    AssembledQuestion,
    Reannotate,
    Reject,
    adjudicate,
    assemble,
    read_assembled_jsonl,
    write_assembled_jsonl,
)
from .store import StoreConflict, ValidationError, ValidationStore
from .tasks import AnnotationResponse, AnnotationTask, make_reannotation_task, make_task

__all__ = [
    "AnnotationResponse",
    "AnnotationTask",
    "AssembledQuestion",
    "Reannotate",
    "Reject",
    "StoreConflict",
    "ValidationError",
    "ValidationStore",
    "adjudicate",
    "annotator_quality",
    "assemble",
    "krippendorff_alpha",
    "make_reannotation_task",
    "make_task",
    "pairwise_percent_agreement",
    "read_assembled_jsonl",
    "write_assembled_jsonl",
]
