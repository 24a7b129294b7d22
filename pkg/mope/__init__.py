# Mixture of pre-processing experts package
__version__ = '0.1'
