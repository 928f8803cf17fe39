"""Partial decay widths of few-fermion resonances from absorber-based Lindblad dynamics."""

from .fock import (BasisBudgetError, FockBasis, LindbladDissipator, SectorMap, SectorOperator,
                   SymmetryError, annihilator, build_basis, one_body_operator, two_body_operator)
from .model import (CAP, ECS, AntiHermitianParts, GaussianInteraction, GaussianWell, GridModel,
                    ModeHamiltonian, assemble_hamiltonian, cap_diagonal, contour, ecs_parts,
                    kinetic_matrix, mode_hamiltonian)
from .spectral import (AmbiguousTrajectoryError, ChannelState, NoChannelsError, NoStableResonanceError,
                       ResonanceState, Spectrum, SpectralError, StabilityRecord, channel_states,
                       diagonalize_sector, identify_resonance)
from .widths import (PartialWidthWarning, PopulationCurves, WidthReport, channel_amplitudes,
                     coherence_closed_form, kappa_matrix, partial_width_cap_grid,
                     partial_width_cap_orbital, partial_width_ecs, population_closed_form,
                     purity_closed_form, total_width)
from .lindblad import (BlockDensity, LindbladGenerator, OneBodySource, PairSource, StepSizeError,
                       TraceDriftError, Trajectory, build_generator, propagate, rate_oracle, rhs,
                       richardson_error, source_cap, source_ecs)

__version__ = "0.1.0"
