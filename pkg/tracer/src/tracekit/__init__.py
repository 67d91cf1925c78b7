"""Line tracer for standalone Python programs."""

from .runner import Limits, TraceResult, normalize_output, render_value, self_check, trace_run
from .schema import SCHEMA_VERSION, TRACE_SCHEMA

__version__ = "0.1.0"
