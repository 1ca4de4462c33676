"""advchain: HMC-based adversarial example generation and robust training.

Subpackages by capability:

* :mod:`advchain.tensor` - float64 tensors with reverse-mode gradients
* :mod:`advchain.models` - small MLP classifiers, ensembles, SGD, checkpoints
* :mod:`advchain.hmc` - generic Hamiltonian Monte Carlo over differentiable
  potentials (leapfrog integrator + Metropolis-Hastings correction)
* :mod:`advchain.attacks` - the FGSM family (FGSM, I-FGSM, PGD, MI-FGSM),
  AI-FGSM's accumulated-momentum update, and the HMCAM sampling attack
* :mod:`advchain.training` - PGD adversarial training and contrastive
  adversarial training (CAT)
* :mod:`advchain.data` - MNIST IDX parsing, synthetic blobs, splits
* :mod:`advchain.harness` - transferability matrices, sweeps, diversity and
  fewer-samples studies, reproducible result directories
* :mod:`advchain.cli` - command-line front end
"""

__version__ = "0.1.0"
