"""Read-only plotter for polyflow CSV output: standard report figures and a
one-page text summary.  Never recomputes physics; every number comes from
the delimited files."""

__version__ = "0.1.0"

from .report import ReportSpec, render_report

__all__ = ["ReportSpec", "render_report", "__version__"]
