"""Finite-lattice laboratory for the integrated density of states of
magnetic Schroedinger operators with random potentials."""

from .operator import (BoxSpec, HermitianOperator, MagneticField,
                       build_hamiltonian, gauge_transform, magnetic_translate)
from .potential import (Covariance, CouplingDistribution, EnsembleSpec,
                        PotentialSample, Profile, check_moment_bound,
                        realization_seed, sample, sample_alloy,
                        sample_gaussian, sample_poisson, truncate)
from .spectral import (Spectrum, count_below, count_below_inertia, eigensystem,
                       eigenvalues, heat_kernel, spectral_projector)
from .measure import (AtomicMeasure, indicator_hat, kernel_normalizer,
                      mollified_indicator_hat, smoothing_kernel, stieltjes,
                      tightness_profile, vague_distance)
from .ids import (IDSEstimate, ModelDims, bc_gap, default_energy_grid,
                  finite_volume_ids, gaussian_tail_check, landau_cluster_check,
                  landau_reference, localized_ids, support_spectrum_check,
                  tightness_check, truncation_sweep, weyl_check)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
