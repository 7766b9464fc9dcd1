"""
boRank: document retrieval by Bayesian optimisation over an embedding space
"""

__version__ = '0.1.0'

__all__ = ['corpus', 'gp', 'oracle', 'search', 'evaluation', 'utils']
name = "boRank"
