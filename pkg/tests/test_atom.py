import numpy as np
import pytest
from sympy import Rational
from sympy import sqrt as ssqrt
from sympy.physics.wigner import wigner_3j, wigner_6j

from birefsim.atom import (
    MHZ,
    RB87_D2_F1_FACTORS,
    AtomicLevel,
    LevelScheme,
    Transition,
    UnknownTransitionError,
    excited_label,
    find_transition,
    ground_label,
    rb87_d2_scheme,
    three_level_lambda,
    transition_operator,
)
from birefsim.quantum import HilbertSpace


def test_three_level_defaults():
    s = three_level_lambda()
    assert s.size == 3
    assert len(s.transitions) == 2
    assert s.decay_rates(0.0) == {}


def test_three_level_decay_channels():
    rates = three_level_lambda().decay_rates(2.0)
    assert set(rates) == {("e0", "u+"), ("e0", "u-")}
    assert sum(rates.values()) == pytest.approx(2.0)


def test_three_level_state_count():
    s = three_level_lambda()
    assert HilbertSpace.of(("atom", s.size), ("X", 2), ("Y", 2)).total_dim == 12


def test_three_level_legs():
    s = three_level_lambda()
    (pump,) = s.driven("pump")
    (cav,) = s.driven("cavity")
    assert (pump.ground, pump.excited) == ("u-", "e0")
    assert (cav.ground, cav.excited, cav.cavity_mode) == ("u+", "e0", "-")
    assert s.initial_state == "u-" and s.target_state == "u+"


def test_rb87_sqrt_5_24():
    s = rb87_d2_scheme()
    for m in (-1, 1):
        t = find_transition(s, ground_label(m), excited_label(1, 0))
        assert abs(t.relative_strength) == pytest.approx(np.sqrt(5 / 24), rel=1e-12)


def test_rb87_factors_match_wigner_symbols():
    # <F=1 mF | r_q | F' mF'> from the Wigner-Eckart theorem, J=1/2, J'=3/2, I=3/2
    J, I, F = 0.5, 1.5, 1
    R = Rational
    for (fp, mp, m), c in RB87_D2_F1_FACTORS.items():
        q = m - mp
        three = wigner_3j(fp, 1, F, mp, q, -m)
        six = wigner_6j(R(1, 2), R(3, 2), 1, fp, F, R(3, 2))
        val = (-1) ** (fp - 1 + mp) * ssqrt(2 * F + 1) * three * (-1) ** (fp + J + 1 + I) \
            * ssqrt((2 * fp + 1) * (2 * J + 1)) * six
        assert abs(float(abs(val)) - abs(c)) < 1e-12, (fp, mp, m)


def test_rb87_hyperfine_manifold_only():
    labels = rb87_d2_scheme().labels
    assert not any("F'=2" in lab or "F'=3" in lab for lab in labels)
    assert sum(lab.startswith("F'=") for lab in labels) == 4


def test_rb87_decay_branching_sums_to_one():
    s = rb87_d2_scheme()
    for lv in s.levels:
        if lv.kind == "excited":
            assert s.total_branching(lv.label) == pytest.approx(1.0, abs=1e-12)
    # F'=1 leaks 1/6 into F=2
    assert s.decay_branching[(excited_label(1, 0), "dark")] == pytest.approx(1 / 6)


def test_rb87_dark_toggle_conserves_total_decay():
    s = rb87_d2_scheme(include_dark=False)
    assert "dark" not in s.labels
    for lv in s.levels:
        if lv.kind == "excited":
            assert s.total_branching(lv.label) == pytest.approx(1.0, abs=1e-12)


def test_rb87_dark_population_non_increasing_outside_dark():
    from birefsim.dynamics import lindblad_rhs

    s = rb87_d2_scheme()
    n = s.size
    rng = np.random.default_rng(3)
    ops = []
    for (e, u), rate in s.decay_rates(1.0).items():
        m = np.zeros((n, n), complex)
        m[s.index(u), s.index(e)] = np.sqrt(2 * rate)
        ops.append(m)
    w = rng.random(n)
    rho = np.diag(w / w.sum()).astype(complex)
    d = lindblad_rhs(rho, np.zeros((n, n)), ops)
    dark = s.index("dark")
    assert np.real(np.trace(d)) == pytest.approx(0, abs=1e-12)
    assert np.real(d[dark, dark]) > 0
    assert np.real(np.trace(d)) - np.real(d[dark, dark]) < 0


def test_rb87_zeeman_energies():
    s = rb87_d2_scheme()
    e = dict(zip(s.labels, s.energies / MHZ))
    assert e[ground_label(-1)] - e[ground_label(1)] == pytest.approx(26.0)
    assert e[excited_label(0, 0)] == pytest.approx(-72.218)


def test_rb87_energy_overrides():
    s = rb87_d2_scheme(excited_shifts={excited_label(1, 1): 5.0 * MHZ})
    assert s.level(excited_label(1, 1)).energy == pytest.approx(5.0 * MHZ)
    with pytest.raises(ValueError):
        rb87_d2_scheme(excited_shifts={"F'=3,mF'=0": 0.0})


def test_rb87_emission_direction():
    minus = rb87_d2_scheme(emission="sigma-")
    plus = rb87_d2_scheme(emission="sigma+")
    assert (minus.initial_state, minus.target_state) == (ground_label(-1), ground_label(1))
    assert (plus.initial_state, plus.target_state) == (ground_label(1), ground_label(-1))


def test_transition_validation():
    with pytest.raises(ValueError):
        Transition("g", "e", "pi", 0.5, ("cavity",))
    with pytest.raises(ValueError):
        Transition("g", "e", "sigma+", 1.5)
    with pytest.raises(ValueError):
        LevelScheme("x", (AtomicLevel("g", 0, "ground"), AtomicLevel("g", 1, "excited")), ())


def test_dark_state_must_be_uncoupled():
    levels = (AtomicLevel("g", 0, "ground"), AtomicLevel("e", 1, "excited"), AtomicLevel("d", 0, "dark"))
    with pytest.raises(ValueError):
        LevelScheme("x", levels, (Transition("d", "e", "sigma+", 1.0),), dark_state="d")


def test_transition_operator_properties():
    s = rb87_d2_scheme()
    space = HilbertSpace.of(("atom", s.size), ("X", 2), ("Y", 2))
    t = find_transition(s, ground_label(-1), excited_label(1, 0))
    op = transition_operator(s, t, space)
    assert np.abs((op @ op).matrix).max() == 0
    assert np.linalg.norm(op.matrix, 2) == pytest.approx(abs(t.relative_strength))
    # the adjoint lowers excited to ground
    ket_e = np.zeros(s.size)
    ket_e[s.index(t.excited)] = 1
    full = np.kron(ket_e, np.kron([1, 0], [1, 0]))
    lowered = op.dag().matrix @ full
    ket_u = np.zeros(s.size)
    ket_u[s.index(t.ground)] = 1
    np.testing.assert_allclose(lowered, t.relative_strength * np.kron(ket_u, np.kron([1, 0], [1, 0])))


def test_unknown_transition():
    s = three_level_lambda()
    with pytest.raises(UnknownTransitionError):
        find_transition(s, "u+", "u-")
