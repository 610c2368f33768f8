"""teleportsim: a polarization-qubit teleportation link over deployed
fiber, as a desk-scale stochastic simulator plus the exact analysis
pipeline used to evaluate such links.

The package splits along the experiment's own seams:

* :mod:`teleportsim.polarization` - single-qubit polarization algebra
* :mod:`teleportsim.sources` - weak-coherent and entangled-pair sources
* :mod:`teleportsim.bsm` - partial-indistinguishability interference and
  the heralded state transfer
* :mod:`teleportsim.fiber` - deployed-fiber loss, drift, crosstalk and
  polarization compensation
* :mod:`teleportsim.timetags` - detector model and streaming coincidence
  counting
* :mod:`teleportsim.tomography` - Stokes reconstruction, fidelity and
  Monte Carlo uncertainties
* :mod:`teleportsim.simulate` - end-to-end scenario execution
* :mod:`teleportsim.cli` - the ``teleportsim`` command
"""

from .polarization import (
    DensityMatrix,
    PolarizationState,
    StokesVector,
    WaveplateSetting,
    fidelity,
    measurement_axis,
    project,
    rho_to_stokes,
    stokes_to_rho,
    waveplate_unitary,
)
from .sources import (
    PairSourceConfig,
    WcsConfig,
    WernerState,
    sample_pair_emissions,
    sample_wcs_emissions,
    werner_from_fidelity,
)
from .bsm import (
    HeraldPovm,
    OverlapModel,
    average_fidelity,
    hom_scan,
    psi_minus_herald,
    teleport_conditional_state,
    visibility_to_zeta,
)
from .fiber import (
    CrosstalkConfig,
    DriftState,
    FiberConfig,
    apply_channel,
    compensate_polarization,
    evolve_drift,
    inject_background,
    transmission,
)
from .timetags import (
    CoincidenceCounter,
    CoincidenceWindow,
    DetectorConfig,
    count_coincidences,
    detect,
    estimate_visibility,
    read_tag_file,
    threefold_herald_counts,
    write_tag_file,
)
from .tomography import (
    BasisCounts,
    TargetMap,
    TomographyResult,
    evaluate_teleport_run,
    fidelity_with_mc,
    projection_schedule,
    reconstruct,
    stokes_from_counts,
)
from .scenarios import LinkConfig, load_scenario, validate_config
from .simulate import run_hom, run_teleport_counts

__version__ = "0.1.0"
