import numpy as np
import pytest

from rotortomo.basis import HilbertSpace
from rotortomo.eigensolver import GroundStateSolution, ground_state
from rotortomo.hamiltonian import build_hamiltonian
from rotortomo.sampling import (
    DatasetFormatError,
    MeasurementDataset,
    empirical_distribution,
    read_dataset,
    sample_exact,
    write_dataset,
)


def _state(amplitudes, space):
    return GroundStateSolution(0.0, 1.0, np.asarray(amplitudes, float), "dense", 0.0, space, 1.0)


def test_delta_state_samples_only_the_reference():
    space = HilbertSpace(2, 1)
    psi = np.zeros(16)
    psi[0] = 1.0
    ds = sample_exact(_state(psi, space), 1000, seed=0)
    assert not ds.samples.any()


def test_two_state_frequencies_are_binomial():
    space = HilbertSpace(1, 1)
    psi = np.array([np.sqrt(0.5), 0.0, np.sqrt(0.5), 0.0])
    ds = sample_exact(_state(psi, space), 10**6, seed=3)
    freq = np.mean(ds.samples[:, 0] == 0)
    assert abs(freq - 0.5) < 5 * 0.0005
    assert set(np.unique(ds.samples)) == {0, 2}


def test_samples_are_deterministic_and_sharded(monkeypatch):
    sol = ground_state(build_hamiltonian(HilbertSpace(2, 2), 1.0))
    a = sample_exact(sol, 5000, seed=11)
    b = sample_exact(sol, 5000, seed=11)
    assert np.array_equal(a.samples, b.samples)
    import rotortomo.sampling as sampling

    monkeypatch.setattr(sampling, "SHARD_SIZE", 1000)
    c = sample_exact(sol, 2500, seed=11)
    # shard k draws from default_rng([seed, k]); the first shard is a prefix
    assert np.array_equal(c.samples[:1000], sample_exact(sol, 1000, seed=11).samples)
    assert not np.array_equal(c.samples[1000:2000], c.samples[:1000])


def test_empirical_distribution_approaches_exact():
    sol = ground_state(build_hamiltonian(HilbertSpace(2, 2), 1.0))
    ds = sample_exact(sol, 200_000, seed=5)
    emp = empirical_distribution(ds)
    assert emp.sum() == pytest.approx(1.0)
    assert 0.5 * np.abs(emp - sol.amplitudes**2).sum() < 0.01


def test_sample_exact_validates_inputs():
    space = HilbertSpace(1, 1)
    with pytest.raises(ValueError):
        sample_exact(_state([1.0, 1.0, 0.0, 0.0], space), 10, seed=0)
    with pytest.raises(ValueError):
        sample_exact(_state([1.0, 0.0, 0.0, 0.0], space), 0, seed=0)
    with pytest.raises(ValueError):
        sample_exact(_state([1.0, 0.0], space), 10, seed=0)
    with pytest.raises(ValueError):
        sample_exact(GroundStateSolution(0.0, 1.0, np.array([1.0]), "dense", 0.0), 10, seed=0)


def test_dataset_round_trip(tmp_path):
    sol = ground_state(build_hamiltonian(HilbertSpace(3, 2), 1.1))
    ds = sample_exact(sol, 300, seed=9)
    path = tmp_path / "d.txt"
    write_dataset(ds, path)
    back = read_dataset(path)
    assert (back.n_sites, back.ell_max, back.R, back.seed, back.source) == (3, 2, 1.1, 9, "exact")
    assert np.array_equal(back.samples, ds.samples)
    assert len(back.subset(10)) == 10 and np.array_equal(back.subset(10).samples, ds.samples[:10])


def _write(tmp_path, body, count=1, n_sites=2, ell_max=3):
    path = tmp_path / "bad.txt"
    head = f"# n_sites = {n_sites}\n# ell_max = {ell_max}\n# R = 1.1\n# seed = 0\n# count = {count}\n"
    path.write_text(head + body)
    return path


@pytest.mark.parametrize(
    "body,count,match",
    [
        ("0 16\n", 1, "out of range"),
        ("", 1, "declares 1"),
        ("0 1 2\n", 1, "expected 2 labels"),
        ("0 x\n", 1, "non-integer"),
        ("0 1\n0 1\n", 1, "declares 1"),
        ("0 1\n# late = 1\n", 1, "header after"),
    ],
)
def test_malformed_dataset_files(tmp_path, body, count, match):
    with pytest.raises(DatasetFormatError, match=match):
        read_dataset(_write(tmp_path, body, count))


def test_missing_header_key(tmp_path):
    path = tmp_path / "nohead.txt"
    path.write_text("# n_sites = 2\n# count = 0\n")
    with pytest.raises(DatasetFormatError, match="missing"):
        read_dataset(path)


def test_dataset_rejects_out_of_range_samples():
    with pytest.raises(ValueError):
        MeasurementDataset(2, 1, 1.0, 0, np.array([[0, 4]]))
