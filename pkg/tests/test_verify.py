import math

import pytest

from app.config import Settings, parse_config
from app.services.pipeline import build_context
from app.services.verify import cmd_verify

REDUCED = """
grid.points = 16
grid.half_width = 6.0
kernel.sigma_nodes = 8
kernel.split_m = 8
kernel.split_n = 8
dt = 0.05
"""

# checks whose outcome does not depend on resolving the grid
SUITE_CHECKS = {
    "operators": (
        {
            "equilibrium_identity",
            "equilibrium_identity_order",
            "loss_convolution_modes",
            "gain_nonnegative",
            "split_consistency",
            "galilean_equivariance",
            "angular_mass",
            "jacobian_identity",
            "carleman_cross_check",
        },
        {"loss_convolution_modes", "gain_nonnegative", "split_consistency", "galilean_equivariance", "angular_mass"},
    ),
    "conservation": (
        {
            "h_theorem_maxwellian",
            "h_theorem_disk",
            "h_theorem_double_bump",
            "conservation_drift",
            "mass_defect",
            "conservation_order",
            "bkw_oracle",
        },
        set(),
    ),
    "lp": ({"lp_differential_inequality", "lp_uniform_bound"}, set()),
    "smoothing": (
        {
            "gain_regularization",
            "angular_remainder_decay",
            "duhamel_regularization",
            "singularity_damping",
            "sobolev_interpolation",
            "indicator_h1_growth",
        },
        {"angular_remainder_decay", "sobolev_interpolation"},
    ),
    "decomposition": (
        {"smooth_part_nonnegative", "remainder_decay", "smooth_part_bounded"},
        {"smooth_part_nonnegative"},
    ),
    "equilibrium": (
        {"relaxation_monotone", "relaxation_rate", "gibbs_inequality", "maxwellian_lower_bound", "iterated_gain"},
        {"gibbs_inequality", "iterated_gain"},
    ),
}


def _context(tmp_path):
    return build_context(parse_config(REDUCED), Settings(), out=tmp_path / "out")


@pytest.mark.parametrize("suite", sorted(SUITE_CHECKS))
def test_suite_report_on_a_reduced_grid(tmp_path, suite):
    expected, robust = SUITE_CHECKS[suite]
    report, path = cmd_verify(suite, _context(tmp_path))
    assert report.suite == suite
    assert {check.name for check in report.checks} >= expected
    for check in report.checks:
        assert all(isinstance(value, float) for value in check.measured.values())
        if check.name in robust:
            assert check.passed, report.render_text()
    assert path.name == f"verify_{suite}.json"
    assert report.passed == all(check.passed for check in report.checks)


def test_angular_remainder_uses_a_resolving_quadrature(tmp_path):
    report, _ = cmd_verify("smoothing", _context(tmp_path))
    check = next(check for check in report.checks if check.name == "angular_remainder_decay")
    assert check.measured["sigma_count"] == 32.0
    assert check.measured["m8"] > check.measured["m16"] > check.measured["m32"]


def test_lp_report_flags_the_fit(tmp_path):
    report, _ = cmd_verify("lp", _context(tmp_path))
    fit = report.checks[0]
    assert {"c_plus", "k_minus", "theta", "violation", "slack", "degenerate"} <= set(fit.measured)
    if fit.measured["degenerate"]:
        assert not fit.passed
        assert math.isnan(report.checks[1].measured["bound"])


def test_conservation_reports_the_bkw_temporal_reference(tmp_path):
    report, _ = cmd_verify("conservation", _context(tmp_path))
    bkw = next(check for check in report.checks if check.name == "bkw_oracle")
    assert bkw.measured["reference_dt"] == 0.0025
    assert bkw.measured["fourth_moment_gap"] <= 1e-8
    order = next(check for check in report.checks if check.name == "conservation_order")
    assert order.measured["refined_points"] == 32.0
