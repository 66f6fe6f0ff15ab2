import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from avgkit.errors import (
    DomainError,
    ExprSyntaxError,
    NonConstantExponentError,
    ParseError,
    UnknownIdentifierError,
    VariableRangeError,
)
from avgkit.expr import (
    MAX_DEPTH,
    CompiledExprs,
    VectorField,
    apply_tensor,
    diff,
    evaluate,
    frechet_tensor,
    parse,
    to_source,
)


def ev(src, t=0.0, x=(0.0,), n=None):
    return evaluate(parse(src, n or len(x)), t, x)


class TestParse:
    def test_precedence_and_associativity(self):
        assert ev("1 + 2 * 3") == 7.0
        assert ev("2 ^ 3 ^ 2") == 64.0  # left-associative
        assert ev("-x1^2", x=(3.0,)) == -9.0
        assert ev("2 ^ -1") == 0.5
        assert ev("(1 - 2) - 3") == ev("1 - 2 - 3") == -4.0
        assert ev("8 / 4 / 2") == 1.0

    def test_pi_and_time(self):
        assert ev("pi") == math.pi
        assert ev("sin(t)", t=0.5) == math.sin(0.5)

    def test_functions(self):
        x = (0.7,)
        for name, fn in [("sin", math.sin), ("cos", math.cos), ("tan", math.tan),
                         ("exp", math.exp), ("log", math.log), ("sqrt", math.sqrt), ("abs", abs)]:
            assert ev(f"{name}(x1)", x=x) == fn(0.7)

    def test_scientific_literals(self):
        assert ev("1.5e-3 + 2E2 + .5") == 1.5e-3 + 200 + 0.5

    @pytest.mark.parametrize("src,err", [
        ("x0", VariableRangeError),
        ("x3", VariableRangeError),
        ("y", UnknownIdentifierError),
        ("sinh(t)", UnknownIdentifierError),
        ("x1 ^ x2", NonConstantExponentError),
        ("2 ^ t", NonConstantExponentError),
        ("1 +", ExprSyntaxError),
        ("(1", ExprSyntaxError),
        ("1 2", ExprSyntaxError),
        ("", ExprSyntaxError),
        ("1e999", ExprSyntaxError),
        ("x1 $ 2", ExprSyntaxError),
    ])
    def test_errors(self, src, err):
        with pytest.raises(err):
            parse(src, 2)

    def test_error_offsets_are_bytes(self):
        with pytest.raises(ParseError) as info:
            parse("x1 + é + y", 1)
        # 'é' is two bytes in UTF-8, so 'y' sits at byte 10
        assert info.value.offset in (5, 10)
        with pytest.raises(UnknownIdentifierError) as info:
            parse("x1 + zz", 1)
        assert info.value.offset == 5

    def test_invalid_utf8(self):
        with pytest.raises(ExprSyntaxError) as info:
            parse(b"x1 + \xff", 1)
        assert info.value.offset == 5

    def test_depth_limit(self):
        deep = "(" * (MAX_DEPTH + 10) + "1" + ")" * (MAX_DEPTH + 10)
        with pytest.raises(ParseError):
            parse(deep, 1)
        ok = "(" * 100 + "1" + ")" * 100
        assert evaluate(parse(ok, 1), 0.0, [0.0]) == 1.0

    def test_structural_equality(self):
        assert parse("x1*sin(t)", 1) == parse("x1 * sin( t )", 1)
        assert hash(parse("x1+1", 1)) == hash(parse("x1 + 1", 1))
        assert parse("x1+1", 1) != parse("1+x1", 1)


class TestEvaluate:
    @pytest.mark.parametrize("src,x", [
        ("1/x1", 0.0), ("log(x1)", 0.0), ("log(x1)", -1.0), ("sqrt(x1)", -1.0),
        ("x1^0.5", -2.0), ("x1^-1", 0.0), ("exp(x1)", 1000.0),
    ])
    def test_domain_errors(self, src, x):
        with pytest.raises(DomainError):
            evaluate(parse(src, 1), 0.0, [x])

    def test_compiled_matches_tree_walk(self, rng):
        exprs = [parse(s, 2) for s in ["x1*x2 + sin(t)", "exp(-x1^2)/(1 + x2^2)", "abs(x1 - x2)^1.5"]]
        for backend in ("numpy", "math"):
            fn = CompiledExprs(exprs, 2, backend)
            for _ in range(20):
                t, a, b = rng.uniform(-2, 2, 3)
                got = fn(t, [a, b])
                assert np.allclose(got, [evaluate(e, t, [a, b]) for e in exprs], rtol=1e-14)

    def test_compiled_broadcasts(self):
        fn = CompiledExprs([parse("x1 * cos(t)", 1), parse("2", 1)], 1)
        out = fn.stacked(np.linspace(0, 1, 5)[:, None], [np.array([1.0, 2.0])], (5, 2))
        assert out.shape == (2, 5, 2)
        assert np.all(out[1] == 2.0)

    def test_compiled_domain_error(self):
        fn = CompiledExprs([parse("log(x1)", 1)], 1)
        with pytest.raises(DomainError):
            fn(0.0, [np.array([1.0, -1.0])])


class TestSource:
    @pytest.mark.parametrize("src", [
        "-x1^2", "2^3^2", "x1 - (x2 - 1)", "-(-3)", "sin(t)*cos(2*t)/(1+x1^2)", "x1^-2.5", "1e-300*x2",
    ])
    def test_round_trip(self, src):
        e = parse(src, 2)
        again = parse(to_source(e), 2)
        for x in ([0.3, 1.7], [2.0, -0.4]):
            assert evaluate(again, 0.9, x) == evaluate(e, 0.9, x)


SYM = {"t": sp.Symbol("t"), "x1": sp.Symbol("x1"), "x2": sp.Symbol("x2")}


def to_sympy(src):
    return sp.sympify(src.replace("^", "**"), locals={"pi": sp.pi, **SYM})


class TestDiff:
    @pytest.mark.parametrize("src", [
        "x1^3*sin(x2)", "exp(x1*x2)/(1+x1^2)", "log(2 + cos(t)*x1)", "sqrt(1 + x1^2 + x2^2)",
        "tan(x1/3)", "x1^-2 * x2^2.5", "cos(t)^2 * x2", "-x1/(x2 + 3)",
    ])
    def test_matches_sympy(self, src, rng):
        e = parse(src, 2)
        ref = to_sympy(src)
        for var in ("t", "x1", "x2"):
            d = diff(e, var)
            dref = sp.lambdify((SYM["t"], SYM["x1"], SYM["x2"]), sp.diff(ref, SYM[var]))
            for _ in range(5):
                t, a, b = rng.uniform(0.2, 1.5, 3)
                assert evaluate(d, t, [a, b]) == pytest.approx(float(dref(t, a, b)), rel=1e-12, abs=1e-12)

    def test_trivial_folding(self):
        assert diff(parse("x1", 1), "t") == parse("0", 1)
        assert diff(parse("3*x1", 1), "x1") == parse("3", 1)

    def test_var_forms(self):
        e = parse("x1*x2", 2)
        assert diff(e, "x2") == diff(e, 2)


class TestFrechet:
    def test_tensor_contracts_like_directional_derivatives(self, rng):
        F = [parse("x1^2*x2 + sin(t)*x2^3", 2), parse("exp(x1 - x2)", 2)]
        z = np.array([0.3, -0.2])
        for m in (1, 2, 3):
            tensor = frechet_tensor(F, m, 0.4, z)
            assert tensor.shape == (2,) * (m + 1)
            v = rng.normal(size=2)
            # d^m/ds^m F(z + s v) at s = 0 by a polynomial fit in s
            s = np.linspace(-1e-2, 1e-2, 9)
            vals = np.array([[evaluate(f, 0.4, z + si * v) for f in F] for si in s])
            coeffs = np.polynomial.polynomial.polyfit(s, vals, 6)
            expected = coeffs[m] * math.factorial(m)
            got = apply_tensor(tensor, [v] * m)
            assert np.allclose(got, expected, rtol=1e-6, atol=1e-8)

    def test_symmetric(self):
        vf = VectorField([parse("x1*x2^2*x3", 3), parse("sin(x1*x2)", 3), parse("x3^4", 3)], 3)
        T3 = vf.tensor(3, 0.0, [0.5, 1.5, -1.0])
        for perm in [(0, 2, 1, 3), (0, 3, 2, 1), (0, 1, 3, 2)]:
            assert np.array_equal(T3, T3.transpose(perm))


atoms = st.sampled_from(["x1", "x2", "t", "1", "2.5", "pi", "0.5"])


@st.composite
def expressions(draw, depth=4):
    if depth == 0 or draw(st.booleans()):
        return draw(atoms)
    kind = draw(st.sampled_from(["bin", "neg", "call", "pow"]))
    if kind == "bin":
        op = draw(st.sampled_from("+-*"))
        return f"({draw(expressions(depth - 1))}{op}{draw(expressions(depth - 1))})"
    if kind == "neg":
        return f"-{draw(expressions(depth - 1))}"
    if kind == "pow":
        return f"({draw(expressions(depth - 1))})^{draw(st.integers(0, 3))}"
    return f"{draw(st.sampled_from(['sin', 'cos', 'exp']))}({draw(expressions(depth - 1))})"


@settings(max_examples=150, deadline=None)
@given(expressions())
def test_printed_form_reparses_to_same_values(src):
    e = parse(src, 2)
    again = parse(to_source(e), 2)
    try:
        v = evaluate(e, 0.3, [0.7, -0.4])
    except DomainError:
        return
    assert evaluate(again, 0.3, [0.7, -0.4]) == v


@settings(max_examples=100, deadline=None)
@given(expressions(), st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))
def test_derivative_agrees_with_central_difference(src, a, b):
    e = parse(src, 2)
    d = diff(e, "x1")
    h = 1e-5
    try:
        num = (evaluate(e, 0.3, [a + h, b]) - evaluate(e, 0.3, [a - h, b])) / (2 * h)
        sym = evaluate(d, 0.3, [a, b])
    except DomainError:
        return
    assert abs(sym - num) <= 1e-5 * (1 + abs(sym))


@settings(max_examples=300, deadline=None)
@given(st.text(alphabet="x12t()+-*/^. esincopqa0", max_size=30))
def test_parser_never_crashes(src):
    try:
        parse(src, 2)
    except ParseError:
        pass


class TestReferenceValues:
    def test_grammar_example_tree(self):
        assert parse("x1 + 2*sin(t)", 1) == parse("(x1) + ((2) * (sin((t))))", 1)
        e = parse("x1 + 2*sin(t)", 1)
        assert e.op == "+" and e.right.op == "*" and e.right.right.func == "sin"

    def test_unbalanced_paren_offset(self):
        with pytest.raises(ExprSyntaxError) as info:
            parse("(", 1)
        assert info.value.offset == 1

    def test_evaluations(self):
        assert evaluate(parse("x1*cos(t)", 1), 0.0, [3.0]) == 3.0
        assert evaluate(parse("t^2", 1), 2.0, []) == 4.0

    def test_derivatives(self):
        assert evaluate(diff(parse("x1^2", 1), "x1"), 0.0, [3.0]) == 6.0
        d = diff(parse("sin(t)*x2", 2), "x2")
        assert evaluate(d, 0.7, [1.0, 5.0]) == math.sin(0.7)
        # Richardson-extrapolated central difference of exp(x1*x2) in x1 at (1, 2)
        f = lambda a: math.exp(a * 2.0)  # noqa: E731
        cd = lambda h: (f(1 + h) - f(1 - h)) / (2 * h)  # noqa: E731
        richardson = (4 * cd(1e-3) - cd(2e-3)) / 3
        got = evaluate(diff(parse("exp(x1*x2)", 2), "x1"), 0.0, [1.0, 2.0])
        assert got == pytest.approx(richardson, rel=1e-9)
        assert got == pytest.approx(14.7781121978613, rel=1e-12)

    def test_frechet_small_cases(self):
        F = [parse("x1^2", 1)]
        assert np.array_equal(frechet_tensor(F, 0, 0.3, [5.0]), [25.0])
        v, w = 0.7, -1.3
        assert apply_tensor(frechet_tensor(F, 2, 0.3, [5.0]), [np.array([v]), np.array([w])])[0] == 2 * v * w
        G = [parse("x1*x2", 2), parse("x2^2", 2)]
        J = frechet_tensor(G, 1, 0.0, [3.0, 4.0])
        assert np.array_equal(J, [[4.0, 3.0], [0.0, 8.0]])
        assert np.array_equal(apply_tensor(J, [np.ones(2)]), [7.0, 8.0])

    def test_long_flat_sum_hashes_without_recursion(self):
        e = parse("+".join(["x1"] * 200), 1)
        assert hash(e) == hash(parse("+".join(["x1"] * 200), 1))
        assert evaluate(e, 0.0, [0.5]) == 100.0
