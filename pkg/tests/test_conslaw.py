import pytest

from adjforge import conslaw as CL
from adjforge import expr as X
from adjforge import suite
from adjforge.selfadjoint import Substitution


def doc_sys(name):
    doc = suite.document(name)
    return doc, doc.system()


def test_sine_gordon_translation_vector():
    doc, sys = doc_sys("sine_gordon")
    cv = CL.conserved_vector(sys, suite.substitution("sine_gordon", "d1"), doc.symmetries["X1"])
    assert CL.verify_conservation(cv, sys).passed
    red = CL.reduce_triviality(cv, sys)
    assert red.components == {"x": doc.expr("cos(u)"), "y": doc.expr("1/2*u_x^2")}


def test_reduced_vector_is_a_fixpoint():
    doc, sys = doc_sys("sine_gordon")
    cv = suite.vector("sine_gordon", "X1")
    assert CL.reduce_triviality(cv, sys).components == cv.components


def test_reduction_preserves_the_residual():
    doc, sys = doc_sys("boussinesq")
    cv = suite.vector("boussinesq", "vorticity")
    red = CL.reduce_triviality(cv, sys)
    assert not red["t"].terms
    assert X.is_zero(CL.divergence(cv, sys) - CL.divergence(red, sys))


def test_short_pulse_vector_and_multiplier():
    doc, sys = doc_sys("short_pulse")
    cv = CL.conserved_vector(sys, suite.substitution("short_pulse", "differential"), doc.symmetries["X3"])
    assert CL.equivalent(cv, suite.vector("short_pulse", "X3"), sys) is not None
    cert = CL.verify_conservation(suite.vector("short_pulse", "X3"), sys)
    assert cert.passed
    assert X.is_zero(cert.characteristic[0] + 2 * doc.expr("u_t - 1/2*u^2*u_x"))


def test_irrigation_vector():
    doc, sys = doc_sys("irrigation_sac")
    cv = CL.conserved_vector(sys, suite.substitution("irrigation_sac", "exp"), doc.symmetries["X"])
    assert CL.equivalent(cv, suite.vector("irrigation_sac", "X"), sys) is not None


def test_chaplygin_nonlocal_vector():
    doc, sys = doc_sys("chaplygin")
    cv = CL.conserved_vector(sys, suite.substitution("chaplygin", "galilean"), doc.symmetries["X7"])
    assert CL.verify_conservation(cv, sys).passed
    assert CL.reduce_triviality(cv, sys).components == {"t": doc.expr("-sigma*rho"), "x": doc.expr("-sigma*rho*v")}
    assert CL.equivalent(cv, suite.vector("chaplygin", "X7_galilean"), sys) == X.const(-1)


def test_chaplygin_trivial_vector_flagged():
    doc, sys = doc_sys("chaplygin")
    cv = CL.conserved_vector(sys, suite.substitution("chaplygin", "mass"), doc.symmetries["X7"])
    assert CL.reduce_triviality(cv, sys).trivial


def test_rejected_substitution():
    doc, sys = doc_sys("heat")
    with pytest.raises(CL.SubstitutionRejected):
        CL.conserved_vector(sys, suite.substitution("heat", "strict"), suite.document("kdv").symmetries["X1"])


def test_verification():
    doc, sys = doc_sys("kdv")
    assert CL.verify_conservation(suite.vector("kdv", "galilean"), sys).passed
    bad = CL.verify_conservation(suite.vector("kdv", "bogus"), sys)
    assert not bad.passed
    assert bad.residual == doc.expr("u_xxx + u*u_x - u_x")


def test_direct_multiplier_test():
    doc, sys = doc_sys("kdv")
    assert CL.direct_multiplier_test(sys, [doc.expr("x + t*u")])
    assert CL.direct_multiplier_test(sys, [X.ZERO])
    cdoc, csys = doc_sys("chaplygin")
    assert not CL.direct_multiplier_test(csys, [X.ZERO, cdoc.expr("sigma"), X.ZERO])
    assert CL.direct_residuals(csys, [X.ZERO, cdoc.expr("sigma"), X.ZERO])[0] == cdoc.expr("rho/p")


def test_constraints_for_the_mass_vector():
    doc, sys = doc_sys("chaplygin")
    rep = CL.emit_constraints(sys, suite.vector("chaplygin", "mass"))
    assert rep.constraints == [doc.expr("rho_t"), doc.expr("rho*v_x + rho_x*v")]
    assert rep.expected_rank == 4
    assert len(rep.equations) == 5


def test_constraints_for_irrigation():
    doc, sys = doc_sys("irrigation_sac")
    rep = CL.emit_constraints(sys, suite.vector("irrigation_sac", "X"))
    e = doc.expr("exp(a*t)")
    assert rep.constraints[0] == e * doc.expr("a*S(psi) + S'(psi)*psi_t")
    assert rep.constraints[1] == -e * doc.expr("a*(K(psi)*psi_xx + K'(psi)*psi_x^2)")


def test_zero_vector_adds_nothing():
    doc, sys = doc_sys("chaplygin")
    rep = CL.emit_constraints(sys, CL.as_vector(sys, {}))
    assert rep.constraints == [] and rep.equations == sys.equations


@pytest.mark.parametrize("key", sorted(suite.CHAPLYGIN_SOLUTIONS))
def test_chaplygin_closed_forms(key):
    sys = suite.system("chaplygin")
    assert CL.solution_passes(sys, suite.chaplygin_solution(key))


def test_solve_substitution_then_vector_round_trip():
    doc, sys = doc_sys("kdv")
    cv = CL.conserved_vector(sys, Substitution({"v": doc.expr("u")}, name="strict"), doc.symmetries["X1"])
    assert CL.verify_conservation(cv, sys).passed
