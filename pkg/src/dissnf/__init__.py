"""Normal forms and stability estimates for dissipative nearly-integrable systems."""
from .normalizer import NormalizationError, build_normal_form, classify
from .system import ConfigurationError, build_system, fixture

__all__ = ["ConfigurationError", "NormalizationError", "build_normal_form", "build_system", "classify", "fixture"]
__version__ = "0.1.0"
