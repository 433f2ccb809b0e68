import itertools

import numpy as np
import pytest

from transitshare import milp


# -- independent oracle: dense two-phase tableau simplex ----------------------

def simplex_oracle(c, a_ub, b_ub, a_eq=None, b_eq=None, maxiter=10_000):
    """Textbook two-phase simplex with Bland's rule; x >= 0 variables.

    Returns (status, objective) with status in {"optimal", "infeasible",
    "unbounded"}. Deliberately independent of the library implementation.
    """
    c = np.asarray(c, dtype=float)
    rows = []
    rhs = []
    n = len(c)
    n_slack = 0
    a_eq = [] if a_eq is None else list(a_eq)
    b_eq = [] if b_eq is None else list(b_eq)
    for row, b in zip(a_ub, b_ub):
        rows.append((np.asarray(row, dtype=float), float(b), True))
    for row, b in zip(a_eq, b_eq):
        rows.append((np.asarray(row, dtype=float), float(b), False))
    m = len(rows)
    n_slack = sum(1 for _, _, is_ub in rows if is_ub)
    total = n + n_slack + m          # original + slacks + artificials
    tab = np.zeros((m, total))
    b_col = np.zeros(m)
    slack_i = 0
    for i, (row, b, is_ub) in enumerate(rows):
        if b < 0:
            row, b = -row, -b
            is_flipped = True
        else:
            is_flipped = False
        tab[i, :n] = row
        if is_ub:
            tab[i, n + slack_i] = -1.0 if is_flipped else 1.0
            slack_i += 1
        tab[i, n + n_slack + i] = 1.0
        b_col[i] = b
    basis = [n + n_slack + i for i in range(m)]

    def pivot(obj):
        nonlocal tab, b_col, basis
        for _ in range(maxiter):
            red = obj - obj[basis] @ tab
            enter = next((j for j in range(total) if red[j] < -1e-9), None)
            if enter is None:
                return "optimal"
            ratios = [(b_col[i] / tab[i, enter], basis[i], i)
                      for i in range(m) if tab[i, enter] > 1e-9]
            if not ratios:
                return "unbounded"
            _, _, leave = min(ratios, key=lambda t: (t[0], t[1]))
            piv = tab[leave, enter]
            tab[leave] /= piv
            b_col[leave] /= piv
            for i in range(m):
                if i != leave and abs(tab[i, enter]) > 1e-12:
                    b_col[i] -= tab[i, enter] * b_col[leave]
                    tab[i] -= tab[i, enter] * tab[leave]
            basis[leave] = enter
        raise RuntimeError("simplex iteration limit")

    phase1 = np.zeros(total)
    phase1[n + n_slack:] = 1.0
    status = pivot(phase1)
    if status != "optimal" or phase1[basis] @ b_col > 1e-7:
        return "infeasible", None
    # drive any degenerate artificials out of the basis, dropping redundant rows
    keep = []
    for i in range(m):
        if basis[i] < n + n_slack:
            keep.append(i)
            continue
        enter = next((j for j in range(n + n_slack) if abs(tab[i, j]) > 1e-9), None)
        if enter is None:
            continue                      # redundant row
        piv = tab[i, enter]
        tab[i] /= piv
        b_col[i] /= piv
        for r in range(m):
            if r != i and abs(tab[r, enter]) > 1e-12:
                b_col[r] -= tab[r, enter] * b_col[i]
                tab[r] -= tab[r, enter] * tab[i]
        basis[i] = enter
        keep.append(i)
    if len(keep) < m:
        tab = tab[keep]
        b_col = b_col[keep]
        basis = [basis[i] for i in keep]
        m = len(keep)
    phase2 = np.zeros(total)
    phase2[:n] = c
    # forbid artificials from re-entering
    tab[:, n + n_slack:] = 0.0
    status = pivot(phase2)
    if status != "optimal":
        return status, None
    x = np.zeros(total)
    x[basis] = b_col
    return "optimal", float(c @ x[:n])


def _to_oracle_form(prob):
    """Fold variable upper bounds into <= rows (lb is always 0 in these tests)."""
    names = prob.variable_names()
    c = np.zeros(prob.num_vars)
    for j, v in prob._obj.items():
        c[j] = v
    a_ub, b_ub, a_eq, b_eq = [], [], [], []
    for con in prob._constraints:
        row = np.zeros(prob.num_vars)
        for j, v in con.coeffs.items():
            row[j] = v
        if con.sense == "<=":
            a_ub.append(row); b_ub.append(con.rhs)
        elif con.sense == ">=":
            a_ub.append(-row); b_ub.append(-con.rhs)
        else:
            a_eq.append(row); b_eq.append(con.rhs)
    for j, ub in enumerate(prob._ub):
        if np.isfinite(ub):
            row = np.zeros(prob.num_vars)
            row[j] = 1.0
            a_ub.append(row); b_ub.append(ub)
    return c, a_ub, b_ub, a_eq, b_eq


class TestSolveLp:
    def test_min_x_at_lower_constraint(self):
        prob = milp.MilpProblem()
        prob.add_var("x")
        prob.set_objective({"x": 1.0})
        prob.add_constraint({"x": 1.0}, ">=", 3.0)
        sol = milp.solve_lp(prob)
        assert sol.status == milp.OPTIMAL
        assert sol.objective == pytest.approx(3.0)
        assert sol["x"] == pytest.approx(3.0)

    def test_box_lp(self):
        prob = milp.MilpProblem()
        prob.add_var("x", ub=1.0)
        prob.add_var("y", ub=1.0)
        prob.set_objective({"x": -1.0, "y": -1.0})
        prob.add_constraint({"x": 1.0, "y": 1.0}, "<=", 1.0)
        sol = milp.solve_lp(prob)
        assert sol.objective == pytest.approx(-1.0)

    def test_infeasible_and_unbounded(self):
        prob = milp.MilpProblem()
        prob.add_var("x", ub=1.0)
        prob.add_constraint({"x": 1.0}, ">=", 2.0)
        assert milp.solve_lp(prob).status == milp.INFEASIBLE
        prob2 = milp.MilpProblem()
        prob2.add_var("x")
        prob2.set_objective({"x": -1.0})
        assert milp.solve_lp(prob2).status == milp.UNBOUNDED

    def test_random_lps_match_simplex_oracle(self):
        rng = np.random.default_rng(99)
        for trial in range(30):
            prob = milp.MilpProblem()
            n = 10
            for j in range(n):
                prob.add_var(f"x{j}", ub=float(rng.uniform(1, 5)))
            prob.set_objective({f"x{j}": float(rng.normal()) for j in range(n)})
            for i in range(10):
                coeffs = {f"x{j}": float(rng.normal()) for j in range(n)}
                prob.add_constraint(coeffs, "<=", float(rng.uniform(1, 10)))
            sol = milp.solve_lp(prob)
            assert sol.status == milp.OPTIMAL
            status, obj = simplex_oracle(*_to_oracle_form(prob))
            assert status == "optimal"
            assert sol.objective == pytest.approx(obj, abs=1e-6)


def brute_force_milp(prob):
    """Enumerate integer assignments, solving the continuous rest exactly."""
    kinds = prob.kinds()
    names = prob.variable_names()
    int_idx = [j for j, k in enumerate(kinds) if k != milp.CONTINUOUS]
    best = None
    ranges = [range(int(prob._lb[j]), int(prob._ub[j]) + 1) for j in int_idx]
    c, a_ub, b_ub, a_eq, b_eq = _to_oracle_form(prob)
    for combo in itertools.product(*ranges):
        fixed = dict(zip(int_idx, combo))
        eq_rows = list(a_eq)
        eq_rhs = list(b_eq)
        for j, val in fixed.items():
            row = np.zeros(prob.num_vars)
            row[j] = 1.0
            eq_rows.append(row)
            eq_rhs.append(float(val))
        status, obj = simplex_oracle(c, a_ub, b_ub, eq_rows, eq_rhs)
        if status == "optimal" and (best is None or obj < best - 1e-12):
            best = obj
    return best


class TestSolveMilp:
    def test_integral_lp_returned_directly(self):
        prob = milp.MilpProblem()
        prob.add_var("x", milp.INTEGER, 0, 10)
        prob.set_objective({"x": 1.0})
        prob.add_constraint({"x": 1.0}, ">=", 3.0)
        sol = milp.solve(prob)
        assert sol.status == milp.OPTIMAL
        assert sol["x"] == 3.0

    def test_binary_knapsack_toy(self):
        prob = milp.MilpProblem()
        prob.add_var("x1", milp.BINARY)
        prob.add_var("x2", milp.BINARY)
        prob.set_objective({"x1": -3.0, "x2": -2.0})
        prob.add_constraint({"x1": 1.0, "x2": 1.0}, "<=", 1.0)
        sol = milp.solve(prob)
        assert sol.objective == pytest.approx(-3.0)
        assert sol["x1"] == 1.0 and sol["x2"] == 0.0

    def test_random_instances_match_enumeration(self):
        rng = np.random.default_rng(4)
        for trial in range(25):
            prob = milp.MilpProblem()
            nb = int(rng.integers(2, 9))
            for j in range(nb):
                prob.add_var(f"b{j}", milp.BINARY)
            prob.add_var("u", ub=3.0)
            obj = {f"b{j}": float(rng.normal()) for j in range(nb)}
            obj["u"] = float(rng.normal())
            prob.set_objective(obj)
            for i in range(int(rng.integers(1, 7))):
                coeffs = {f"b{j}": float(rng.integers(-3, 4)) for j in range(nb)}
                coeffs["u"] = float(rng.integers(-2, 3))
                prob.add_constraint(coeffs, "<=", float(rng.integers(1, 6)))
            sol = milp.solve(prob)
            oracle = brute_force_milp(prob)
            assert oracle is not None and sol.status == milp.OPTIMAL
            assert sol.objective == pytest.approx(oracle, abs=1e-6)

    def test_relaxation_bound(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            prob = milp.MilpProblem()
            for j in range(5):
                prob.add_var(f"b{j}", milp.BINARY)
            prob.set_objective({f"b{j}": float(rng.normal()) for j in range(5)})
            prob.add_constraint({f"b{j}": 1.0 for j in range(5)}, "<=", 2.0)
            lp = milp.solve_lp(prob)
            ip = milp.solve(prob)
            assert lp.objective <= ip.objective + 1e-9

    def test_determinism(self):
        def build():
            prob = milp.MilpProblem()
            for j in range(6):
                prob.add_var(f"b{j}", milp.BINARY)
            prob.set_objective({f"b{j}": ((-1) ** j) * (j + 1) for j in range(6)})
            prob.add_constraint({f"b{j}": 1.0 for j in range(6)}, "<=", 3.0)
            return milp.solve(prob)

        a, b = build(), build()
        assert a.values == b.values
        assert a.node_count == b.node_count

    def test_feasibility_of_returned_solution(self):
        prob = milp.MilpProblem()
        prob.add_var("x", milp.INTEGER, 0, 9)
        prob.add_var("y")
        prob.set_objective({"x": 1.0, "y": 2.0})
        prob.add_constraint({"x": 1.0, "y": 1.0}, ">=", 3.5)
        sol = milp.solve(prob)
        assert prob.check(sol.values) == []

    def test_infeasible_status(self):
        prob = milp.MilpProblem()
        prob.add_var("x", milp.BINARY)
        prob.add_constraint({"x": 1.0}, ">=", 2.0)
        assert milp.solve(prob).status == milp.INFEASIBLE


class TestProblemSurface:
    def test_duplicate_variable_rejected(self):
        prob = milp.MilpProblem()
        prob.add_var("x")
        with pytest.raises(milp.MilpError):
            prob.add_var("x")

    def test_integer_needs_finite_bound(self):
        prob = milp.MilpProblem()
        with pytest.raises(milp.MilpError):
            prob.add_var("n", milp.INTEGER)

    def test_check_flags_violations(self):
        prob = milp.MilpProblem()
        prob.add_var("x", milp.BINARY)
        prob.add_constraint({"x": 1.0}, "<=", 0.5, name="half")
        bad = prob.check({"x": 1.0})
        assert "half" in bad

    def test_write_lp(self, tmp_path):
        prob = milp.MilpProblem("toy")
        prob.add_var("x", milp.BINARY)
        prob.add_var("y", ub=2.0)
        prob.set_objective({"x": -1.0, "y": 0.5})
        prob.add_constraint({"x": 1.0, "y": -1.0}, "<=", 1.0, name="cap")
        path = tmp_path / "toy.lp"
        prob.write_lp(path)
        text = path.read_text()
        assert "Minimize" in text and "cap:" in text and "General" in text
