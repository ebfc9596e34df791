"""Acceptance suite: one PASS/FAIL line per criterion.

Each test records its verdict with ``record_criterion`` before asserting, so
the summary at the end of the run lists every criterion even when some fail.
Tolerances are fixed in advance and are not tuned to the results.
"""
import math
import warnings

import numpy as np
import pytest
from scipy import stats

import oracles
from conftest import record_criterion, solve
from rotortomo.basis import HilbertSpace
from rotortomo.eigensolver import GroundStateSolution, amplitude_ratio
from rotortomo.estimators import energy_rbm
from rotortomo.experiments import commands
from rotortomo.experiments.config import resolve
from rotortomo.hamiltonian import build_hamiltonian, build_single_rotor_ops
from rotortomo.rbm import (
    GibbsChainState,
    RbmParameters,
    _mean_energy_gradient,
    effective_energy,
    exact_kl,
    exact_kl_gradient,
    exact_probabilities,
    gibbs_sample,
    labels_of,
)
from rotortomo.sampling import empirical_distribution, sample_exact, write_dataset
from rotortomo.signs import (
    epsilon_energy,
    epsilon_general,
    epsilon_projector_form,
    partition_signs,
    rectify,
    sign_metrics,
)

# amplitude ratios |psi(00..0)| / max |psi(other)| at ell_max = 5
REFERENCE_RATIOS = {(2, 1.0): 24.7, (3, 1.0): 10.3, (4, 1.0): 5.9, (2, 1.1): 274.1, (3, 1.1): 132.2, (4, 1.1): 86.6}


def _ratio(n, R, ell_max=5):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return amplitude_ratio(solve(n, ell_max, R)[1])


@pytest.mark.slow
def test_criterion_1_amplitude_ratios():
    got = {key: _ratio(*key) for key in REFERENCE_RATIOS}
    rel = {key: abs(got[key] - ref) / ref for key, ref in REFERENCE_RATIOS.items()}
    bad = [key for key in REFERENCE_RATIOS if rel[key] >= 0.05]
    parts = [f"N={n} R={R}: {got[(n, R)]:.1f} vs {REFERENCE_RATIOS[(n, R)]} ({100 * rel[(n, R)]:.1f}%)" for n, R in REFERENCE_RATIOS]
    detail = "; ".join(parts)
    if bad:
        # the reference R=1.1 row is compared against another separation for the record
        alt = ", ".join(f"N={n} R=1.5: {_ratio(n, 1.5):.1f}" for n in (2, 3, 4))
        detail += f" | for comparison {alt}"
    record_criterion("Criterion 1: reference amplitude ratios within 5%", not bad, detail)
    assert not bad


@pytest.mark.slow
def test_criterion_2_sign_structure_bounds():
    rows, ok = [], True
    for n in (2, 3, 4):
        for R in (1.0, 1.5, 2.0):
            H, sol = solve(n, 5, R)
            tau, eps = sign_metrics(sol, H)
            ratio = eps / sol.gap
            ok &= tau < 1e-4 and ratio < 1e-3
            rows.append(f"N={n} R={R}: tau-={tau:.2e} eps/gap={ratio:.2e}")
    record_criterion("Criterion 2: tau- < 1e-4 and eps/gap < 0.1% at ell_max=5", ok, "; ".join(rows))
    assert ok


@pytest.mark.slow
def test_criterion_3_truncation_flatness():
    tau = {L: sign_metrics(solve(4, L, 1.0)[1], solve(4, L, 1.0)[0])[0] for L in (4, 5)}
    change = abs(tau[5] - tau[4]) / tau[5]
    ok = change < 0.05
    detail = f"N=4 R=1.0: tau-(4)={tau[4]:.4e} tau-(5)={tau[5]:.4e} relative change {100 * change:.2f}%"
    record_criterion("Criterion 3: tau- flat from ell_max=4 to 5 (< 5%)", ok, detail)
    assert ok


def _identity_cases(rng):
    """50 small systems: random symmetric operators and rotor eigenstates."""
    cases = []
    for _ in range(25):
        dim = int(rng.integers(3, 40))
        A = rng.standard_normal((dim, dim))
        psi = rng.standard_normal(dim)
        cases.append((psi / np.linalg.norm(psi), A + A.T, None))
    for _ in range(25):
        n, ell_max = int(rng.integers(2, 4)), int(rng.integers(1, 3))
        H = build_hamiltonian(HilbertSpace(n, ell_max), float(rng.uniform(0.8, 3.0)))
        vals, vecs = np.linalg.eigh(H.to_dense())
        k = int(rng.integers(0, 6))
        # excited states carry sign structure; use their largest amplitude as reference
        sol = GroundStateSolution(vals[k], vals[k + 1], vecs[:, k], "dense", 0.0)
        cases.append((vecs[:, k], H, sol))
    return cases


def test_criterion_4_rectification_identities():
    worst = dict(norm=0.0, overlap=0.0, closed=0.0, eigen=0.0, diagonal=0.0)
    rng = np.random.default_rng(2024)
    for psi, A, sol in _identity_cases(rng):
        part = partition_signs(psi, int(np.argmax(np.abs(psi))))
        rect = rectify(psi, part)
        direct = epsilon_general(psi, A, part)
        worst["norm"] = max(worst["norm"], abs(part.tau_plus + part.tau_minus - 1))
        worst["overlap"] = max(worst["overlap"], abs(rect @ psi - (1 - 2 * part.tau_minus)))
        worst["closed"] = max(worst["closed"], abs(epsilon_projector_form(psi, A, part) - direct))
        if sol is not None:
            worst["eigen"] = max(worst["eigen"], abs(epsilon_energy(sol, A, part) - direct))
        diag = np.diag(rng.standard_normal(len(psi)))
        worst["diagonal"] = max(worst["diagonal"], abs(epsilon_general(psi, diag, part)))
        worst["diagonal"] = max(worst["diagonal"], abs(epsilon_projector_form(psi, diag, part)))
    ok = (
        worst["norm"] <= 1e-12
        and worst["overlap"] <= 1e-12
        and worst["closed"] <= 1e-9
        and worst["eigen"] <= 1e-9
        and worst["diagonal"] <= 1e-12
    )
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + " over 50 systems"
    record_criterion("Criterion 4: rectification identities", ok, detail)
    assert ok


def test_criterion_5_oracle_equivalence():
    apply_err = 0.0
    for n, ell_max, R in [(1, 2, 1.0), (2, 1, 1.0), (2, 2, 1.3), (3, 1, 0.9), (3, 2, 1.1)]:
        H = build_hamiltonian(HilbertSpace(n, ell_max), R)
        dense = oracles.dense_hamiltonian(n, ell_max, R)
        eye = np.eye(H.dim)
        apply_err = max(apply_err, np.abs(H.apply(eye) - dense).max())
    element_err = 0.0
    for ell_max in range(6):
        zq, pq = oracles.quadrature_matrices(ell_max)
        ops = build_single_rotor_ops(ell_max)
        element_err = max(element_err, np.abs(ops.z_mat - zq.real).max(), np.abs(ops.p_plus - pq.real).max())
    rows_match = True
    for n, ell_max, R in [(2, 2, 1.0), (3, 2, 1.7), (2, 3, 0.8)]:
        H = build_hamiltonian(HilbertSpace(n, ell_max), R)
        dense = oracles.dense_hamiltonian(n, ell_max, R)
        owner, new, _ = H.connected_batch(H.space.all_configs())
        cols = H.space.index(new)
        for row in range(H.dim):
            off = dense[row].copy()
            off[row] = 0.0
            rows_match &= np.array_equal(np.sort(cols[owner == row]), np.flatnonzero(np.abs(off) > 1e-14))
    ok = apply_err <= 1e-12 and element_err <= 1e-12 and rows_match
    detail = f"apply vs dense {apply_err:.1e}; elements vs quadrature {element_err:.1e}; rows match {rows_match}"
    record_criterion("Criterion 5: oracle equivalence", ok, detail)
    assert ok


def _random_params(n, nh, d, seed, scale=0.6):
    rng = np.random.default_rng(seed)
    return RbmParameters(rng.normal(0, scale, (n, nh, d)), rng.normal(0, scale, (n, d)), rng.normal(0, scale, nh))


def _fd_relative_error(f, x, grad, h):
    fd = np.empty_like(x)
    for k in range(len(x)):
        up, down = x.copy(), x.copy()
        up[k] += h
        down[k] -= h
        fd[k] = (f(up) - f(down)) / (2 * h)
    return np.max(np.abs(fd - grad)) / np.max(np.abs(grad))


def test_criterion_6_rbm_correctness():
    p = _random_params(2, 3, 4, seed=1)
    configs, _, joint = oracles.rbm_joint_table(p.W, p.b, p.c)
    marginal_err = np.abs(exact_probabilities(p) - joint.sum(axis=1)).max()

    sigma = np.eye(4)[[2, 1]]
    energy_grad = _mean_energy_gradient(p, sigma[None], None).to_vector()
    e_err = _fd_relative_error(lambda v: effective_energy(p.from_vector(v), sigma), p.to_vector(), energy_grad, 1e-6)
    q = np.random.default_rng(3).dirichlet(np.ones(16))
    kl_grad = exact_kl_gradient(p, q).to_vector()
    kl_err = _fd_relative_error(lambda v: exact_kl(p.from_vector(v), q), p.to_vector(), kl_grad, 1e-5)

    weight_err = 0.0
    for n, ell_max, R, seed in [(2, 2, 1.0, 0), (3, 1, 1.1, 1)]:
        space = HilbertSpace(n, ell_max)
        H = build_hamiltonian(space, R)
        pr = _random_params(n, 3, space.local_dim, seed, scale=0.5)
        probs = exact_probabilities(pr)
        est = energy_rbm(pr, space.all_configs(), H, weights=probs)
        weight_err = max(weight_err, abs(est.total - H.expectation(np.sqrt(probs))))

    tiny = _random_params(2, 3, 4, seed=2)
    samples = labels_of(gibbs_sample(tiny, GibbsChainState.all_zero(2, 4), 50, 100_000, seed=1))
    emp = np.bincount(HilbertSpace(2, 1).index(samples), minlength=16) / len(samples)
    tv = 0.5 * np.abs(emp - exact_probabilities(tiny)).sum()

    ok = marginal_err <= 1e-12 and e_err <= 1e-6 and kl_err <= 1e-6 and weight_err <= 1e-10 and tv < 0.01
    detail = (
        f"marginal {marginal_err:.1e}; energy gradient FD {e_err:.1e}; KL gradient FD {kl_err:.1e}; "
        f"exhaustive E_RBM {weight_err:.1e}; Gibbs TV {tv:.4f} (k=50, 1e5 chains)"
    )
    record_criterion("Criterion 6: RBM correctness suite", ok, detail)
    assert ok


# reconstruction runs: N=4 at ell_max=3 with the default (reference) hyperparameters
RECON_N, RECON_ELL, RECON_COUNT = 4, 3, 10**4


def _recon_data(R):
    H, sol = solve(RECON_N, RECON_ELL, R)
    return H, sol, sample_exact(sol, RECON_COUNT, seed=0)


@pytest.fixture(scope="module")
def reconstruction():
    """Up to three seeds at R=1.1 with n_h=4, stopping at the first success."""
    H, sol, ds = _recon_data(1.1)
    cfg = resolve("train", {"dataset": "unused"}, {})
    runs = []
    for seed in range(3):
        result = commands.train_once(ds, 4, cfg, seed, H, sol)
        runs.append((seed, result))
        if result.reached:
            break
    return H, sol, runs


@pytest.mark.slow
def test_criterion_7_end_to_end_reconstruction(reconstruction):
    _, _, runs = reconstruction
    ok = any(r.reached for _, r in runs)
    detail = "; ".join(
        f"seed {s}: reached={r.reached} epochs={r.epochs} best delta {r.best_delta:.4f} final {r.final_delta:.4f}"
        for s, r in runs
    )
    record_criterion("Criterion 7: N=4 R=1.1 n_h=4 reaches delta <= 0.05 for one of 3 seeds", ok, detail)
    assert ok


def _scan(command, R, flags, tmp):
    """First grid value of a scaling command that reached the target at separation R, or None."""
    path = tmp / f"data_{R}.txt"
    if not path.exists():
        write_dataset(_recon_data(R)[2], path)
    out = tmp / f"{command}_{R}"
    out.mkdir()
    cfg = resolve(command, {"dataset": str(path)}, flags)
    try:
        outcome = commands.COMMANDS[command](cfg, out)
    except commands.CriterionNotReached as exc:
        outcome = exc.outcome
    return outcome.summary["n_hidden_min" if command == "scale-hidden" else "data_size_min"]


def ordinal_holds(min_weak, min_strong):
    """Whether ``min_strong >= min_weak``; None when the scans cannot decide.

    A minimum of None means no grid point succeeded, so the true minimum lies
    above the grid. The claim is undecided only when the weak-coupling
    minimum is unknown.
    """
    if min_weak is None:
        return None
    return min_strong is None or min_strong >= min_weak


def test_ordinal_decision_table():
    assert ordinal_holds(3, 4) and ordinal_holds(3, 3) and ordinal_holds(3, None)
    assert ordinal_holds(4, 3) is False
    assert ordinal_holds(None, 2) is None and ordinal_holds(None, None) is None


@pytest.mark.slow
def test_criterion_8_ordinal_scaling(tmp_path):
    nh = {R: _scan("scale-hidden", R, {}, tmp_path) for R in (1.1, 1.0)}
    rows = [f"n_h,min(R={R}) = {v}" for R, v in nh.items()]
    hidden_ok = ordinal_holds(nh[1.1], nh[1.0])
    if None in nh.values():
        data_ok = None
        rows.append("data scans skipped: a hidden minimum lies above the grid")
    else:
        # each data scan uses one hidden unit more than that separation needs
        size = {R: _scan("scale-data", R, {"n_hidden": str(nh[R] + 1)}, tmp_path) for R in (1.1, 1.0)}
        rows += [f"|D|_min(R={R}) = {v} with n_h={nh[R] + 1}" for R, v in size.items()]
        data_ok = ordinal_holds(size[1.1], size[1.0])
    rows.append(f"hidden ordering {hidden_ok}, data ordering {data_ok} (None = undecided)")
    ok = hidden_ok is True and data_ok is True
    record_criterion("Criterion 8: n_h,min and |D|_min at R=1.0 not below R=1.1", ok, "; ".join(rows))
    assert ok


@pytest.mark.slow
def test_criterion_9_equilibration(reconstruction):
    H, sol, runs = reconstruction
    seed, result = min(runs, key=lambda sr: (not sr[1].reached, sr[1].final_delta))
    ks = resolve("equilibrate", {"checkpoint": "unused", "R": "1.1"}, {})["k_schedule"]
    rows = commands.equilibration_scan(result.params, H, sol.energy_0, sol.gap, ks, 10**4, seed=0)
    ok, parts = True, []
    for r in rows:
        if r.delta_s is None:
            ok = False
            parts.append(f"k={r.k}: no symmetric samples")
            continue
        sigma = math.hypot(r.delta_ns_stderr, r.delta_s_stderr)
        ok &= r.delta_s <= r.delta_ns + 3 * sigma
        parts.append(f"k={r.k}: dNS {r.delta_ns:.4f} dS {r.delta_s:.4f} fNS {r.f_ns:.4f}")
    ok &= rows[0].f_ns > 0
    source = f"seed {seed} model, final delta {result.final_delta:.4f}, reached={result.reached}"
    record_criterion(
        "Criterion 9: delta_S <= delta_NS + 3 sigma at all k, f_NS > 0 at small k", ok, source + "; " + "; ".join(parts)
    )
    assert ok


def _pooled_chisquare(counts, probs, min_expected=5.0):
    """Chi-square test with low-expectation bins pooled into one."""
    expected = probs * counts.sum()
    keep = expected >= min_expected
    obs = np.append(counts[keep], counts[~keep].sum())
    exp = np.append(expected[keep], expected[~keep].sum())
    if exp[-1] < min_expected:
        obs, exp = obs[:-1], exp[:-1]
        exp *= obs.sum() / exp.sum()
    return stats.chisquare(obs, exp)


def test_criterion_10_exact_sampler():
    H, sol = solve(2, 3, 1.0)
    ds = sample_exact(sol, 10**6, seed=0)
    probs = sol.amplitudes**2
    tv = 0.5 * np.abs(empirical_distribution(ds) - probs).sum()
    counts = np.bincount(ds.space.index(ds.samples), minlength=len(probs))
    result = _pooled_chisquare(counts, probs)
    ok = tv < 0.005 and result.pvalue >= 0.001
    detail = f"N=2 R=1.0 ell_max=3, 1e6 samples: TV {tv:.5f}, chi-square p {result.pvalue:.3f}"
    record_criterion("Criterion 10: exact sampler matches ED", ok, detail)
    assert ok
