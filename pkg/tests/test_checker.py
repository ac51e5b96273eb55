"""Candidate verification: equalities, numeric scenarios, equilibrium concavity."""
from __future__ import annotations

import dataclasses

import pytest

from liukit.balance import BalanceLaw, EntropyDeclaration, ModelSpec
from liukit.checker import (
    CandidateSolution,
    CheckError,
    Condition,
    NumericScenario,
    binding_singularities,
    check,
    check_equalities,
    check_json_dict,
    check_text,
    max_entropy_at_equilibrium,
    run_scenario,
    validate_solution,
)
from liukit.expr import Expression, FuncSym, ParseContext, ZERO, parse
from liukit.jet import JetVariable, StateSpace
from liukit.liu import EvenForm, Restrictions, derive

RHO_X = JetVariable("rho", 0, 1)


def _replace_binding(solution: CandidateSolution, name: str, value) -> CandidateSolution:
    bindings = tuple(
        (sym, value if sym.name == name else expr) for sym, expr in solution.bindings
    )
    return dataclasses.replace(solution, bindings=bindings)


def _solution_ctx(model, solution) -> ParseContext:
    """Parsing context covering the model symbols plus the solution ansatz."""
    ctx = ParseContext(fields=model.ctx.fields, syms=dict(model.ctx.syms))
    for a in solution.ansatz:
        ctx.declare_sym(a.name, a.deps)
    return ctx


def _let_atom(scenario: NumericScenario, name: str):
    for atom, _value in scenario.lets:
        if getattr(atom, "name", None) == name:
            return atom
    raise KeyError(name)


def _scenario(solution: CandidateSolution, name: str) -> NumericScenario:
    for sc in solution.scenarios:
        if sc.name == name:
            return sc
    raise KeyError(name)


def _local_setup():
    u = JetVariable("u")
    ctx = ParseContext(fields=("u",))
    ctx.declare_sym("s", (u,))
    ctx.declare_sym("Js", (u,))
    ctx.declare_sym("a", (u,))
    ctx.declare_sym("c", (u,))
    e = lambda t: parse(t, ctx)
    model = ModelSpec(
        "local", ("u",), None, StateSpace(0, (u,)),
        (BalanceLaw("mass", e("u"), e("1/2*u^2")),),
        EntropyDeclaration("divergence", e("s"), e("Js"), e("1")),
        (ctx.sym("s"), ctx.sym("Js")), ctx,
    )
    return model, ctx, e


class TestValidateSolution:
    def test_fixture_solutions_validate(self, grade2_model, grade2_solution):
        validate_solution(grade2_model, grade2_solution)

    def test_unknown_binding_target(self, grade2_model, grade2_solution):
        bad = dataclasses.replace(
            grade2_solution,
            bindings=grade2_solution.bindings
            + ((grade2_model.ctx.declare_sym("extra", ()), ZERO),),
        )
        with pytest.raises(CheckError) as ei:
            validate_solution(grade2_model, bad)
        assert "not a model unknown" in str(ei.value)

    def test_missing_binding(self, grade2_model, grade2_solution):
        bad = dataclasses.replace(grade2_solution, bindings=grade2_solution.bindings[:-1])
        with pytest.raises(CheckError) as ei:
            validate_solution(grade2_model, bad)
        assert "unbound" in str(ei.value)

    def test_double_binding(self, grade2_model, grade2_solution):
        bad = dataclasses.replace(
            grade2_solution, bindings=grade2_solution.bindings + grade2_solution.bindings[-1:]
        )
        with pytest.raises(CheckError) as ei:
            validate_solution(grade2_model, bad)
        assert "bound twice" in str(ei.value)

    def test_derivative_binding_rejected(self, grade2_model, grade2_solution):
        sym = grade2_model.unknown("s")
        deriv = sym.bump(sym.deps[0])
        bad = dataclasses.replace(
            grade2_solution, bindings=grade2_solution.bindings[:-1] + ((deriv, ZERO),)
        )
        with pytest.raises(CheckError) as ei:
            validate_solution(grade2_model, bad)
        assert "base symbol" in str(ei.value)

    def test_dependency_mismatch_rejected(self, grade2_model, grade2_solution):
        narrow = FuncSym("Js", (JetVariable("rho"),))
        bindings = tuple(
            (narrow, expr) if sym.name == "Js" else (sym, expr)
            for sym, expr in grade2_solution.bindings
        )
        bad = dataclasses.replace(grade2_solution, bindings=bindings)
        with pytest.raises(CheckError) as ei:
            validate_solution(grade2_model, bad)
        assert "declared dependencies" in str(ei.value)


class TestCheckEqualities:
    def test_fixture_equalities_all_identical(self, grade2_report, grade2_solution):
        statuses, failures = check_equalities(grade2_report, grade2_solution)
        assert failures == []
        assert len(statuses) == 8
        assert all(st.status == "identical" for st in statuses)
        assert all(st.remainder.is_zero for st in statuses)

    def test_korteweg_equalities_all_identical(self, korteweg_report, korteweg_solution):
        statuses, failures = check_equalities(korteweg_report, korteweg_solution)
        assert failures == []
        assert len(statuses) == 6
        assert all(st.status == "identical" for st in statuses)

    def test_sign_flip_breaks_equalities(self, grade2_report, grade2_solution):
        flipped = None
        for sym, expr in grade2_solution.bindings:
            if sym.name == "Js":
                flipped = -expr
        bad = _replace_binding(grade2_solution, "Js", flipped)
        statuses, failures = check_equalities(grade2_report, bad)
        assert failures
        assert any(st.status == "failed" for st in statuses)
        assert any(not st.remainder.is_zero for st in statuses)

    def test_conditional_status_uses_declared_equality(self):
        model, ctx, e = _local_setup()
        report = derive(model)
        cond = Condition("fluxrate", "eq", e("D(c, u)"), e("u*D(a, u)"))
        sol = CandidateSolution(
            ansatz=(ctx.sym("a"), ctx.sym("c")),
            bindings=((ctx.sym("s"), e("a")), (ctx.sym("Js"), e("c"))),
            conditions=(cond,),
            scenarios=(),
        )
        statuses, failures = check_equalities(report, sol)
        assert failures == []
        assert len(statuses) == 1
        assert statuses[0].status == "conditional"
        assert statuses[0].conditions_used == ("fluxrate",)

    def test_failed_without_the_condition(self):
        model, ctx, e = _local_setup()
        report = derive(model)
        sol = CandidateSolution(
            ansatz=(ctx.sym("a"), ctx.sym("c")),
            bindings=((ctx.sym("s"), e("a")), (ctx.sym("Js"), e("c"))),
            conditions=(),
            scenarios=(),
        )
        statuses, failures = check_equalities(report, sol)
        assert statuses[0].status == "failed"
        assert failures and "does not vanish" in failures[0]


class TestRunScenario:
    def test_fourier_scenario_passes(self, grade2_model, grade2_report, grade2_solution):
        res = run_scenario(
            grade2_model, grade2_report, grade2_solution, _scenario(grade2_solution, "fourier")
        )
        assert res.as_expected and res.failure is None
        assert res.points == 64
        assert res.violations == 0
        assert res.min_residual >= -1e-9
        assert res.worst_minor is None  # the quadratic form vanishes when bound

    def test_violate_scenario_finds_witness(self, grade2_model, grade2_report, grade2_solution):
        res = run_scenario(
            grade2_model, grade2_report, grade2_solution, _scenario(grade2_solution, "counterflow")
        )
        assert res.expect == "violate"
        assert res.violations > 0
        assert res.as_expected and res.failure is None

    def test_deterministic_for_fixed_seed(self, grade2_model, grade2_report, grade2_solution):
        sc = _scenario(grade2_solution, "fourier")
        a = run_scenario(grade2_model, grade2_report, grade2_solution, sc)
        b = run_scenario(grade2_model, grade2_report, grade2_solution, sc)
        assert a == b

    def test_sample_count_override(self, grade2_model, grade2_report, grade2_solution):
        sc = _scenario(grade2_solution, "fourier")
        res = run_scenario(grade2_model, grade2_report, grade2_solution, sc, samples=16)
        assert res.points == 16

    def test_expected_violation_missing_is_a_failure(
        self, korteweg_model, korteweg_report, korteweg_solution
    ):
        sc = dataclasses.replace(_scenario(korteweg_solution, "fourier"), expect="violate")
        res = run_scenario(korteweg_model, korteweg_report, korteweg_solution, sc)
        assert not res.as_expected
        assert "expected a violation" in res.failure

    def test_declared_condition_violation_fails_hard(
        self, korteweg_model, korteweg_report, korteweg_solution
    ):
        sc = _scenario(korteweg_solution, "fourier")
        q2 = _let_atom(sc, "q2")
        lets = tuple((a, v) for a, v in sc.lets if a != q2) + (
            (q2, Expression.number(-1)),
        )
        bad = dataclasses.replace(sc, lets=lets)
        res = run_scenario(korteweg_model, korteweg_report, korteweg_solution, bad)
        assert res.failure is not None and "fails at sample" in res.failure
        assert not res.as_expected

    def test_missing_let_is_reported(self, grade2_model, grade2_report, grade2_solution):
        sc = _scenario(grade2_solution, "fourier")
        q1 = _let_atom(sc, "q1")
        pruned = dataclasses.replace(sc, lets=tuple((a, v) for a, v in sc.lets if a != q1))
        with pytest.raises(CheckError) as ei:
            run_scenario(grade2_model, grade2_report, grade2_solution, pruned)
        assert "q1" in str(ei.value) and "let" in str(ei.value)

    def test_unknown_range_variable_rejected(self, grade2_model, grade2_report, grade2_solution):
        sc = dataclasses.replace(
            _scenario(grade2_solution, "fourier"),
            ranges=((JetVariable("w"), 0.0, 1.0),),
        )
        with pytest.raises(CheckError) as ei:
            run_scenario(grade2_model, grade2_report, grade2_solution, sc)
        assert "unknown variable" in str(ei.value)

    def test_everywhere_singular_sampling_gives_up(
        self, grade2_model, grade2_report, grade2_solution
    ):
        sc = _scenario(grade2_solution, "fourier")
        q1 = _let_atom(sc, "q1")
        lets = tuple((a, v) for a, v in sc.lets if a != q1) + (
            (q1, parse("1/(rho_x - 1)", grade2_model.ctx)),
        )
        stuck = dataclasses.replace(sc, lets=lets, ranges=((RHO_X, 1.0, 1.0),))
        res = run_scenario(grade2_model, grade2_report, grade2_solution, stuck)
        assert res.failure is not None and "singular" in res.failure
        assert res.points == 0

    def test_even_forms_are_sampled(self, grade2_model, grade2_report):
        eps_xx = JetVariable("eps", 0, 2)
        empty = CandidateSolution((), (), (), ())

        def with_form(sign: int):
            form = EvenForm(4, (eps_xx,), (((4,), Expression.number(sign)),))
            restr = Restrictions((), None, (form,), ZERO)
            return dataclasses.replace(grade2_report, restrictions=restr)

        pos = run_scenario(
            grade2_model, with_form(1), empty,
            NumericScenario("quartic", 32, 11, 1e-9, "pass", (), ()),
        )
        assert pos.as_expected and pos.violations == 0
        assert pos.worst_minor is not None and pos.worst_minor >= 0.0
        neg = run_scenario(
            grade2_model, with_form(-1), empty,
            NumericScenario("quartic", 32, 11, 1e-9, "violate", (), ()),
        )
        assert neg.as_expected and neg.violations > 0
        assert neg.worst_minor < 0.0


class TestMaxEntropyAtEquilibrium:
    def test_fixture_confirmed(self, grade2_model, grade2_solution):
        res = max_entropy_at_equilibrium(grade2_model, grade2_solution)
        assert res.outcome == "confirmed"
        assert "negative semidefinite" in res.detail

    def test_wrong_sign_condition_refutes(self, grade2_model, grade2_solution):
        flipped_conditions = tuple(
            Condition(c.name, "ge", c.lhs, c.rhs) if c.name == "maxent" else c
            for c in grade2_solution.conditions
        )
        sol = dataclasses.replace(grade2_solution, conditions=flipped_conditions)
        res = max_entropy_at_equilibrium(grade2_model, sol)
        assert res.outcome == "refuted"
        assert "wrong sign" in res.detail

    def test_missing_sign_condition_is_undetermined(self, grade2_model, grade2_solution):
        kept = tuple(c for c in grade2_solution.conditions if c.name != "maxent")
        sol = dataclasses.replace(grade2_solution, conditions=kept)
        res = max_entropy_at_equilibrium(grade2_model, sol)
        assert res.outcome == "undetermined"
        assert "not decided" in res.detail

    def test_gradient_linear_entropy_refuted(self, grade2_model, grade2_solution):
        e = lambda t: parse(t, _solution_ctx(grade2_model, grade2_solution))
        sol = _replace_binding(grade2_solution, "s", e("s0 + s1*rho_x"))
        res = max_entropy_at_equilibrium(grade2_model, sol)
        assert res.outcome == "refuted"
        assert "not stationary" in res.detail

    def test_cubic_gradient_entropy_undetermined(self, grade2_model, grade2_solution):
        e = lambda t: parse(t, _solution_ctx(grade2_model, grade2_solution))
        sol = _replace_binding(grade2_solution, "s", e("s0 + s1*rho_x^3"))
        res = max_entropy_at_equilibrium(grade2_model, sol)
        assert res.outcome == "undetermined"
        assert "degree 3" in res.detail

    def test_gradient_free_entropy_confirmed(self, grade2_model, grade2_solution):
        e = lambda t: parse(t, _solution_ctx(grade2_model, grade2_solution))
        sol = _replace_binding(grade2_solution, "s", e("s0"))
        res = max_entropy_at_equilibrium(grade2_model, sol)
        assert res.outcome == "confirmed"
        assert "no gradient dependence" in res.detail

    def test_nonpolynomial_entropy_undetermined(self, grade2_model, grade2_solution):
        e = lambda t: parse(t, _solution_ctx(grade2_model, grade2_solution))
        sol = _replace_binding(grade2_solution, "s", e("s0/(1 + rho_x)"))
        res = max_entropy_at_equilibrium(grade2_model, sol)
        assert res.outcome == "undetermined"
        assert "not polynomial" in res.detail

    def test_local_state_space_vacuous(self):
        model, ctx, e = _local_setup()
        sol = CandidateSolution(
            ansatz=(ctx.sym("a"),),
            bindings=((ctx.sym("s"), e("a")), (ctx.sym("Js"), e("u*a"))),
            conditions=(),
            scenarios=(),
        )
        res = max_entropy_at_equilibrium(model, sol)
        assert res.outcome == "confirmed"
        assert "no gradient variables" in res.detail


class TestBindingSingularities:
    def test_grade2_records_the_gradient_flux(self, grade2_solution):
        assert binding_singularities(grade2_solution) == (("Jg", "rho_x"),)

    def test_korteweg_has_none(self, korteweg_solution):
        assert binding_singularities(korteweg_solution) == ()


class TestCheckDriver:
    def test_grade2_passes(self, grade2_model, grade2_report, grade2_solution):
        res = check(grade2_model, grade2_report, grade2_solution)
        assert res.ok
        assert res.failures == ()
        assert {s.name for s in res.scenarios} == {"fourier", "counterflow"}
        assert res.concavity.outcome == "confirmed"
        assert res.singularities == (("Jg", "rho_x"),)

    def test_korteweg_passes(self, korteweg_model, korteweg_report, korteweg_solution):
        res = check(korteweg_model, korteweg_report, korteweg_solution)
        assert res.ok
        assert {s.name for s in res.scenarios} == {"fourier", "coupled", "bigshear"}

    def test_broken_candidate_fails(self, grade2_model, grade2_report, grade2_solution):
        flipped = None
        for sym, expr in grade2_solution.bindings:
            if sym.name == "Js":
                flipped = -expr
        bad = _replace_binding(grade2_solution, "Js", flipped)
        res = check(grade2_model, grade2_report, bad)
        assert not res.ok
        assert any("does not vanish" in f for f in res.failures)

    def test_sample_override_reaches_scenarios(
        self, grade2_model, grade2_report, grade2_solution
    ):
        res = check(grade2_model, grade2_report, grade2_solution, samples=8)
        assert all(s.points == 8 for s in res.scenarios)


class TestCheckSerialization:
    def test_json_shape(self, grade2_model, grade2_report, grade2_solution):
        res = check(grade2_model, grade2_report, grade2_solution)
        d = check_json_dict(res)
        assert set(d) == {
            "model", "ok", "equalities", "scenarios", "concavity",
            "singularities", "failures",
        }
        assert d["ok"] is True
        sc = d["scenarios"][0]
        assert set(sc) == {
            "name", "expect", "points", "resamples", "minResidual",
            "worstMinor", "violations", "asExpected", "failure",
        }
        assert d["singularities"] == [{"unknown": "Jg", "jets": "rho_x"}]

    def test_text_rendering(self, grade2_model, grade2_report, grade2_solution):
        res = check(grade2_model, grade2_report, grade2_solution)
        txt = check_text(res)
        assert "check of model grade2: ok" in txt
        assert "singular binding: Jg is undefined where rho_x vanishes" in txt
        assert "scenario fourier" in txt
        assert "equilibrium concavity: confirmed" in txt

    def test_text_reports_failures(self, grade2_model, grade2_report, grade2_solution):
        flipped = None
        for sym, expr in grade2_solution.bindings:
            if sym.name == "Js":
                flipped = -expr
        bad = _replace_binding(grade2_solution, "Js", flipped)
        res = check(grade2_model, grade2_report, bad)
        txt = check_text(res)
        assert "FAILED" in txt
        assert "failures:" in txt
