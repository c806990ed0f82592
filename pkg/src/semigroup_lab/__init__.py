"""Numerical laboratory for dynamics of free semigroup actions."""
from .words import Word, Itinerary, reverse, suffix_order, shift, symbolic_distance, enumerate_words, sample_words
from .systems import (CircleSystem, TorusSystem, ShiftSystem, FiniteSystem, SkewProduct,
                      apply_word, orbit_along, word_metric, expansiveness_witness, build_system)

__version__ = "0.1.0"
