# fermidet - fermionic block-projection DPPs and alpha-determinantal limits
__version__ = "0.1.0"
