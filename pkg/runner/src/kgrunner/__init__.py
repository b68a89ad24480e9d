"""kgrunner: thin adapter between probe/tensor wire formats and a local
transformer stack."""

from .answers import answer_records, read_probe_file, run_answers, score_options
from .errors import ModelLoadFailure, NoMatch, RunnerError, SchemaViolation
from .export import export_tensors, write_exchange_dir
from .fisher import export_fisher
from .model import LoadedModel, ModelRef, load_model, select_tensors

__version__ = "0.1.0"
