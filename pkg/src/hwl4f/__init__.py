"""Hardware-in-the-loop training of a simulated 4f optical correlator.

Modules: ``optics`` (device simulator), ``model`` (Fourier-conv CNN and
backends), ``trainers`` (BP, PEPITA, MEMPEPITA), ``flops`` (complexity
ledger), ``analysis`` (SSIM, seed aggregation, throughput), ``dataset``
(MNIST IDX and synthetic glyphs), ``config``/``experiment``/``cli``
(experiment runner).
"""

__version__ = "0.1.0"
