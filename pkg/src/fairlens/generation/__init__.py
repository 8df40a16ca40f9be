from fairlens.generation.adf import generate_adf
from fairlens.generation.aequitas import generate_aequitas
from fairlens.generation.compare import (COMPARE_COLUMNS, ENGINES, ComparisonRow, compare_engines,
                                         comparison_csv, run_engine)
from fairlens.generation.core import GenBudget, GenResult

__all__ = ["GenBudget", "GenResult", "generate_aequitas", "generate_adf", "compare_engines",
           "comparison_csv", "run_engine", "ENGINES", "COMPARE_COLUMNS", "ComparisonRow"]
