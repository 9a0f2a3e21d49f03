"""Interpretable linear-model pipeline for classifying VLP protein sequences
into 60-mer vs 180-mer stoichiometry."""

__version__ = "0.1.0"
