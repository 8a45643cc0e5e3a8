from .base_geometry import (BaseManifold, BasePoint, Covector, FinslerFamily, MetricKind, SpacetimeCurve,
                            SpacetimeEvent, SpacetimeVector, TangentVector, Topology, dual_gradient, dual_norm,
                            energy, eval_F, fd_fundamental_tensor, fundamental_tensor, legendre, lorentz_norm)
from .cone_structures import (CausalCharacter, ConeStructure, LorentzFinslerReport, LorentzFinslerSpace, G_eval,
                              check_lorentz_finsler_space, classify, cone_slice, doubled_slice, lorentz_finsler_space)
from .contact_layer import (ContactSample, ReebReport, Sky, SkyIsotopyReport, SkyVerdict, contact_form_eval,
                            contact_sample, contact_volume, dalpha, positivity_margin, positivity_margins, ray_distance,
                            reeb_field, sky, sky_isotopy, sky_isotopy_positivity, verify_reeb_conditions)
from .convex_duality import (Box, StarBody, convex_hull, hausdorff_distance, is_convex, lipschitz_estimate, polar,
                             quadratic_body, scaled, support_function, unit_ball)
from .correspondence import (CrossingReport, RoundtripReport, SliceGrid, cauchy_crossing_probe, cone_from_path,
                             finsler_from_cone_slices, flow_co_ball, path_from_cone, roundtrip_check)
from .dynamics import (ConeGeodesic, ContactHamiltonian, DualFinslerHamiltonian, GaugeHamiltonian, Normalization,
                       PositivePath, RayPoint, TimeReversedHamiltonian, Trajectory, cone_geodesic, integrate_cogeodesic,
                       integrate_rays, inverse_path_apply, lagrangian_geodesic, path_apply, path_transport)
from .scenario import Scenario, dump_scenario, load_scenario, parse_scenario
from .tasks import ScenarioRunner, run_scenario
from .utils import (AdmissibilityError, ConeContactError, DomainError, IntegrationError, NumericalError,
                    PathNotPositiveError, ScenarioError, StrongConvexityWarning)
