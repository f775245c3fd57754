"""lads: agentic assistant for tabular ML tasks.

Routes natural-language queries between LLM-driven pipeline generation and
AutoML engine configuration, validates and repairs generated code in a
sandbox, and produces predictions, reusable code, normalized benchmark
scores and dual-audience reports.
"""

__version__ = "0.1.0"
