"""Workbench for adversarial examples against RF modulation classifiers.

Submodules:
    signal  -- modulated I/Q frame synthesis and channel impairments
    data    -- NN input representation, binary dataset format, splits
    model   -- small CNN with reverse-mode gradients, training, evaluation
    attack  -- FGSM and basic-iterative adversarial example generation
    detect  -- PAPR / softmax-entropy statistics and the KS two-sample test
    cli     -- `rfadex` command-line front end
"""

__version__ = "0.1.0"
