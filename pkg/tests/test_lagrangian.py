import random

import pytest
import sympy

from mvfield import symcore
from mvfield.forms import AdaptedForm, volume
from mvfield.geometry import ChartSpec
from mvfield.jet import JetFieldJ1, Section, integral_section_residual, prolong_section
from mvfield.lagrangian import (
    Cancelled,
    Lagrangian,
    LagrangianError,
    Regularity,
    SingularVerdict,
    el_integrability_conditions,
    el_residual_on_section,
    el_system,
    eliminate,
    g_table,
    hessian,
    poincare_cartan,
    regularity,
    singular_algorithm,
    solve_regular,
    sopde_forcing_residuals,
)

from tests.helpers import random_poly


def chart(m=2, N=1):
    return ChartSpec.make([f"x{i}" for i in range(m)], [f"y{i}" for i in range(N)], jet=True)


def free_field(c, extra=0):
    dens = sum((c.v(A, mu) ** 2 for A in range(c.N) for mu in range(c.m)), sympy.Integer(0)) / 2
    return Lagrangian(c, dens + extra)


def zero(e):
    return symcore.is_zero(e) is symcore.Verdict.PROVEN_ZERO


def test_lagrangian_rejects_foreign_symbols():
    with pytest.raises(LagrangianError):
        Lagrangian(chart(), sympy.Symbol("z"))


# Poincare-Cartan

def test_free_particle_theta():
    c = chart(1, 1)
    pc = poincare_cartan(free_field(c))
    v = c.v(0, 0)
    assert pc.theta_L["y0"] == v
    assert symcore.normalize(pc.theta_L["x0"] + v ** 2 / 2) == 0
    assert pc.consistent


def test_potential_only_forms():
    c = chart(2, 1)
    f = c.parse("y0^3 + x0*y0")
    pc = poincare_cartan(Lagrangian(c, f))
    assert (pc.theta_L - volume(c).scaled(f)).is_zero()
    assert zero(pc.omega_L["y0", "x0", "x1"] + sympy.diff(f, "y0"))
    assert len(pc.omega_L.coeffs) == 1


def test_quadratic_omega_table():
    c = chart(2, 1)
    pc = poincare_cartan(free_field(c, c.parse("y0^2")))
    assert pc.consistent
    # dv0_0 ^ dy0 ^ dx1 carries -1, dy0 ^ d^2x carries -f'
    assert pc.omega_L["v0_0", "y0", "x1"] == -1
    assert zero(pc.omega_L["y0", "x0", "x1"] + 2 * sympy.Symbol("y0"))


def test_omega_consistency_random():
    rng = random.Random(21)
    for _ in range(8):
        c = chart(rng.randint(1, 2), rng.randint(1, 2))
        assert poincare_cartan(Lagrangian(c, random_poly(rng, c.coords, 3, terms=5))).consistent


# regularity

def test_regularity_examples():
    rep = regularity(free_field(chart(2, 1)))
    assert rep.verdict is Regularity.REGULAR and rep.det == 1
    assert hessian(free_field(chart(2, 2))) == sympy.eye(4)
    c = chart(1, 1)
    assert regularity(Lagrangian(c, c.v(0, 0))).verdict is Regularity.SINGULAR
    c = chart(2, 1)
    assert regularity(Lagrangian(c, c.v(0, 0) ** 2 / 2)).verdict is Regularity.SINGULAR


def test_pointwise_regularity_keeps_determinant():
    c = chart(1, 1)
    rep = regularity(Lagrangian(c, c.parse("y0*v0_0^2/2")))
    assert rep.verdict is Regularity.POINTWISE
    assert rep.det == sympy.Symbol("y0")


def test_hessian_is_symmetric():
    rng = random.Random(2)
    c = chart(2, 2)
    H = hessian(Lagrangian(c, random_poly(rng, c.coords, 3, terms=8)))
    assert H == H.T


# Euler-Lagrange system

def test_orthonormal_system():
    c = chart(2, 1)
    f = c.parse("y0^3")
    sys_ = el_system(free_field(c, f))
    (eq,) = sys_.equations()
    assert zero(eq - (sympy.Symbol("G0_00") + sympy.Symbol("G0_11") - 3 * sympy.Symbol("y0") ** 2))
    assert len(sys_.unknowns) == 4


def test_general_quadratic_system():
    c = chart(2, 1)
    a = [[2, 1], [1, 3]]
    dens = sum((sympy.Rational(a[i][j], 2) * c.v(0, i) * c.v(0, j) for i in range(2) for j in range(2)), sympy.Integer(0))
    (eq,) = el_system(Lagrangian(c, dens)).equations()
    G = sympy.symbols("G0_00 G0_01 G0_10 G0_11")
    assert zero(eq - (2 * G[0] + G[1] + G[2] + 3 * G[3]))


def test_potential_only_system_is_compatibility():
    c = chart(2, 1)
    sys_ = el_system(Lagrangian(c, c.parse("y0^2")))
    assert sys_.matrix.is_zero_matrix
    assert sys_.rhs[0] == 2 * sympy.Symbol("y0")


def test_sopde_forcing_in_regular_case():
    c = chart(2, 1)
    L = free_field(c, c.parse("y0^2"))
    v = [[c.v(0, mu) for mu in range(2)]]
    assert all(zero(e) for r in sopde_forcing_residuals(L, v) for e in r)
    bumped = [[c.v(0, 0) + c.parse("x1"), c.v(0, 1)]]
    assert not all(symcore.is_zero(e).zero for r in sopde_forcing_residuals(L, bumped) for e in r)


# regular solutions

@pytest.mark.parametrize("N, expected", [(1, 3), (2, 6), (3, 9)])
def test_free_count(N, expected):
    L = free_field(chart(2, N))
    assert solve_regular(el_system(L), regularity(L)).free_count == expected


def test_mechanics_is_unique():
    L = free_field(chart(1, 2), chart(1, 2).parse("y0*y1"))
    fam = solve_regular(el_system(L), regularity(L))
    assert fam.free_count == 0
    assert fam.particular == {"G0_00": sympy.Symbol("y1"), "G1_00": sympy.Symbol("y0")}


def test_diag_pivot_particular_solution():
    c = chart(2, 1)
    fam = solve_regular(el_system(free_field(c)), pivot="diag")
    assert fam.particular == {"G0_00": -sympy.Symbol("G0_11")}
    assert fam.free == ["G0_01", "G0_10", "G0_11"]


def test_pivot_policies_share_solution_set():
    c = chart(2, 1)
    sys_ = el_system(free_field(c, c.parse("y0^3")))
    for policy in ("diag", "last-diag", "auto"):
        fam = solve_regular(sys_, pivot=policy)
        assert fam.pivot_policy == policy
        rng = random.Random(1)
        assignment = {u: random_poly(rng, c.coords, 2) for u in fam.free}
        assert all(zero(r) for r in sys_.residual(fam.full(assignment)))


def test_bad_pivot_policy():
    c = chart(2, 1)
    with pytest.raises(LagrangianError):
        solve_regular(el_system(free_field(c)), pivot="nope")


def test_singular_system_refused():
    c = chart(2, 1)
    L = Lagrangian(c, c.v(0, 0))
    with pytest.raises(LagrangianError):
        solve_regular(el_system(L), regularity(L))


def test_elimination_is_cancellable():
    c = chart(2, 2)
    sys_ = el_system(free_field(c))
    rows = [({u: sys_.matrix[A, j] for j, u in enumerate(sys_.unknowns)}, sys_.rhs[A]) for A in range(2)]
    with pytest.raises(Cancelled):
        eliminate(rows, sys_.unknowns, symcore.DEFAULT_CONFIG, progress=lambda *_: False)


# integrability of Euler-Lagrange fields

def test_constant_assignment_is_integrable():
    c = chart(2, 1)
    L = free_field(c)
    fam = solve_regular(el_system(L))
    rep = el_integrability_conditions(L, fam, {"G0_01": 0, "G0_10": 0, "G0_11": 3})
    assert rep.all_zero


def test_asymmetric_assignment_fails_symmetry():
    c = chart(2, 1)
    L = free_field(c)
    fam = solve_regular(el_system(L))
    rep = el_integrability_conditions(L, fam, {"G0_01": 1, "G0_10": 0, "G0_11": 0})
    assert not rep.all_zero
    assert rep.symmetry[(0, 0, 1)] == -1


def test_generic_assignment_reports_pde_residuals():
    c = chart(2, 1)
    L = free_field(c)
    fam = solve_regular(el_system(L))
    rep = el_integrability_conditions(L, fam, {"G0_01": c.parse("y0"), "G0_10": c.parse("y0"), "G0_11": c.parse("x0*v0_1")})
    assert not rep.all_zero
    assert any(not symcore.is_zero(e).zero for e in rep.pde.values())


def test_assignment_must_cover_free_unknowns():
    c = chart(2, 1)
    L = free_field(c)
    with pytest.raises(LagrangianError):
        el_integrability_conditions(L, solve_regular(el_system(L)), {"G0_01": 0})


def test_integrable_field_gives_critical_sections():
    c = chart(2, 1)
    L = free_field(c, c.parse("-3*y0"))
    fam = solve_regular(el_system(L))
    assignment = {"G0_01": 0, "G0_10": 0, "G0_11": 1}
    assert el_integrability_conditions(L, fam, assignment).all_zero
    j = JetFieldJ1.sopde(c, g_table(c, fam.full(assignment)))
    phi = Section(c, [c.parse("-2*x0^2 + x1^2/2 + x0 - x1 + 7")])
    assert integral_section_residual(j, prolong_section(phi)).is_zero()
    assert all(zero(e) for e in el_residual_on_section(L, phi))


# singular algorithm

def test_singular_no_solution():
    c = chart(2, 1)
    st = singular_algorithm(Lagrangian(c, c.parse("y0")))
    assert st.verdict is SingularVerdict.NO_SOLUTION
    assert st.witness == "1"


def test_singular_null_lagrangian():
    c = chart(2, 1)
    st = singular_algorithm(Lagrangian(c, sympy.Integer(0)))
    assert st.verdict is SingularVerdict.FINAL_SUBMANIFOLD
    assert st.constraints == []


def test_singular_half_kinetic_pivot_structure():
    c = chart(2, 1)
    st = singular_algorithm(Lagrangian(c, c.v(0, 0) ** 2 / 2))
    assert st.verdict is SingularVerdict.FINAL_SUBMANIFOLD
    assert st.constraints == []
    assert st.pivots == ["G0_00"]
    assert st.solution["G0_00"] == 0


def test_singular_tangency_levels():
    c = ChartSpec.make(["t"], ["q1", "q2"], jet=True)
    L = Lagrangian(c, c.parse("v1_1^2/2 + q2^2/2 + q2*t"))
    st = singular_algorithm(L)
    assert st.verdict is SingularVerdict.FINAL_SUBMANIFOLD
    kinds = [lvl.kind for lvl in st.levels]
    assert kinds[0] == "compatibility" and "tangency" in kinds
    assert [lvl.level for lvl in st.levels] == list(range(1, len(st.levels) + 1))
    assert any(zero(e - c.parse("q2 + t")) or zero(e + c.parse("q2 + t")) for e in st.constraints)
    assert st.assumptions


def test_singular_two_step_mode():
    c = chart(2, 1)
    st = singular_algorithm(Lagrangian(c, c.v(0, 0) ** 2 / 2), mode="two-step")
    assert st.mode == "two-step" and st.verdict is SingularVerdict.FINAL_SUBMANIFOLD


# residual on sections

def test_el_residual_examples():
    c = chart(2, 1)
    L = free_field(c)
    assert el_residual_on_section(L, Section(c, [c.parse("3*x0 - 5*x1 + 1")])) == [0]
    Lf = free_field(c, c.parse("y0^2/2"))
    phi = Section(c, [c.parse("x0^2*x1")])
    (res,) = el_residual_on_section(Lf, phi)
    # residual is f'(phi) - laplacian(phi)
    assert zero(res - (c.parse("x0^2*x1") - 2 * sympy.Symbol("x1")))
    assert el_residual_on_section(Lagrangian(c, c.parse("x0^2")), phi) == [0]
