from __future__ import annotations

import dataclasses
import logging

import numpy as np
import pandas as pd
import pytest

from src.analysis.diagnostics import (
    COERCIVITY_MIN,
    DiagnosticsReport,
    coercivity_constant,
    divergence_range_defect,
    hnorm_defect,
    infsup_checks,
    infsup_diagnostic,
    infsup_sweep,
    integral_identity_defect,
    mean_zero_transform,
    sample_coercivity,
    structural_diagnostics,
    trace_jumps,
    vertex_patch_sums,
    write_infsup,
)
from src.analysis.timestepping import build_problem
from src.discretization.dofs import DofHandler
from src.discretization.elements import MtwSpace
from src.discretization.forms import assemble_forms
from src.discretization.mesh import build_structured_mesh, classify_boundary
from src.discretization.params import ModelParams
from src.utils.exceptions import ConfigurationError


def test_structural_suite_passes(problem4):
    report = structural_diagnostics(problem4, n_pairs=10, n_samples=100)
    assert report.passed, report.render()
    assert len(report.checks) >= 14


def test_vertex_patch_sums(dofs4):
    np.testing.assert_array_equal(vertex_patch_sums(dofs4, np.ones(dofs4.n_pc)), 3.0)


def test_integral_identity(dofs4, params, rng):
    assert integral_identity_defect(dofs4, params, rng, n_pairs=20) <= 1e-12


def test_divergence_is_cellwise_constant(dofs4):
    assert divergence_range_defect(dofs4.space) <= 1e-10


def test_traces_are_continuous(dofs4):
    normal, tangential, _ = trace_jumps(dofs4.space)
    assert normal <= 1e-10
    assert tangential <= 1e-10


def test_flipped_orientation_breaks_normal_continuity():
    mesh = build_structured_mesh(3)
    e = int(mesh.interior_edges[0])
    minus = mesh.edge_to_tris[e, 1]
    k = int(np.flatnonzero(mesh.tri_to_edges[minus] == e)[0])
    signs = mesh.tri_edge_signs.copy()
    assert signs[minus, k] == -1
    signs[minus, k] = 1
    broken = MtwSpace(dataclasses.replace(mesh, tri_edge_signs=signs))
    normal, _, worst = trace_jumps(broken)
    assert normal > 1e-6
    assert worst == e


def test_mean_zero_transform(dofs4, rng):
    T = mean_zero_transform(dofs4)
    q = T @ rng.standard_normal(dofs4.n_p)
    assert dofs4.mesh.areas @ q[dofs4.n_pc :] == pytest.approx(0.0, abs=1e-13)
    np.testing.assert_allclose(T @ q, q, atol=1e-13)


def test_hnorm_assembly(forms4, rng):
    assert hnorm_defect(forms4, rng) <= 1e-12


def test_coercivity_default_gamma(forms4, rng):
    assert coercivity_constant(forms4, rng) >= COERCIVITY_MIN


def test_small_gamma_loses_coercivity(caplog):
    params = ModelParams(gamma=0.01)
    with caplog.at_level(logging.WARNING):
        constant = sample_coercivity(params, N=4)
    assert constant < COERCIVITY_MIN
    assert "increase gamma" in caplog.text


def test_coercivity_size_limit(rng):
    mesh = build_structured_mesh(9)
    forms = assemble_forms(DofHandler.build(mesh, classify_boundary(mesh)), ModelParams())
    with pytest.raises(ConfigurationError):
        coercivity_constant(forms, rng)


def test_infsup_inertia():
    problem = build_problem(ModelParams(beta=2.0, dt=0.1), 2)
    result = infsup_diagnostic(problem)
    assert result.n_negative == problem.dofs.n_p_free
    assert 0.0 < result.min_abs_eig <= result.max_abs_eig
    assert result.condition >= 1.0


def test_infsup_checks_on_table():
    good = pd.DataFrame({"min_abs_eig": [0.30, 0.35, 0.40]})
    assert infsup_checks(good).passed

    bad = infsup_checks(pd.DataFrame({"min_abs_eig": [0.01, 0.40]}))
    assert not bad.passed
    assert [c.name for c in bad.failures()] == ["inf-sup lower bound", "inf-sup spread"]
    assert "FAIL" in bad.render()


def test_report_render():
    report = DiagnosticsReport()
    report.add("ok", 0.0, 1e-12, True)
    report.add("broken", 1.0, 1e-12, False, "edge 3")
    lines = report.render().splitlines()
    assert lines[0].startswith("PASS")
    assert lines[1].startswith("FAIL")
    assert "edge 3" in lines[1]


def test_small_sweep_table(tmp_path):
    table = infsup_sweep(ModelParams(beta=2.0), N_list=(2,), nu_list=(0.3,), dt_list=(0.1,))
    assert list(table.columns) == [
        "beta", "dt", "nu", "N", "min_abs_eig", "max_abs_eig", "condition", "n_negative",
    ]
    path = write_infsup(table, tmp_path)
    assert pd.read_csv(path).shape == (1, 8)


@pytest.mark.slow
def test_full_infsup_sweep():
    table = infsup_sweep(ModelParams(beta=2.0, dt=1e-2))
    assert len(table) == 12
    report = infsup_checks(table)
    assert report.passed, report.render()
