"""Flow-based IoT camera detection with SHAP/LIME explanations."""

__version__ = "0.1.0"
