import numpy as np
import pytest
from pytest import mark

from src.sensing.attractors import (
    Attractor, AttractorSource, count_by_source, read_attractors, stack_attractors, write_attractors,
)
from src.utils.errors import ParameterError, SessionIOError


def _sample_set():
    return [
        Attractor((0.1, 0.0, -0.02), 0.4, AttractorSource.VISUAL),
        Attractor((0.0, 0.1 / 3.0, 0.05), 0.0123456789, "tactile"),
        Attractor((-0.1, 0.0, 0.0), 0.0, AttractorSource.TACTILE),
    ]


def test_attractor_is_read_only():
    a = Attractor([1.0, 2.0, 3.0], 0.2, "visual")
    assert a.source is AttractorSource.VISUAL
    with pytest.raises(ValueError):
        a.position[0] = 5.0


@mark.parametrize("u", [-0.01, 1.5, float("nan")])
def test_uncertainty_out_of_range(u):
    with pytest.raises(ParameterError):
        Attractor((0.0, 0.0, 0.0), u, "visual")


def test_non_finite_position():
    with pytest.raises(ParameterError):
        Attractor((0.0, np.inf, 0.0), 0.1, "visual")


def test_stack_and_count():
    positions, u = stack_attractors(_sample_set())
    assert positions.shape == (3, 3)
    assert u.tolist() == [0.4, 0.0123456789, 0.0]
    assert count_by_source(_sample_set()) == {"visual": 1, "tactile": 2}
    empty_p, empty_u = stack_attractors([])
    assert empty_p.shape == (0, 3) and empty_u.shape == (0,)


def test_file_round_trip_is_exact(tmp_path):
    path = tmp_path / "out" / "attractors.txt"
    assert write_attractors(str(path), _sample_set()) == 3
    first = path.read_text().splitlines()[0]
    assert first == "0.1 0.0 -0.02 0.4 visual"
    back = read_attractors(str(path))
    for a, b in zip(_sample_set(), back):
        assert np.array_equal(a.position, b.position)
        assert a.uncertainty == b.uncertainty
        assert a.source == b.source


def test_read_skips_comments(tmp_path):
    path = tmp_path / "a.txt"
    path.write_text("# recorded session\n\n0 0 0 0.5 tactile  # edge contact\n")
    (a,) = read_attractors(str(path))
    assert a.uncertainty == 0.5


@mark.parametrize("line", ["0 0 0 0.5", "0 0 0 0.5 sonar", "0 0 x 0.5 visual", "0 0 0 2 visual"])
def test_read_rejects_bad_lines(tmp_path, line):
    path = tmp_path / "bad.txt"
    path.write_text(line + "\n")
    with pytest.raises(ParameterError):
        read_attractors(str(path))


def test_read_missing_file(tmp_path):
    with pytest.raises(SessionIOError):
        read_attractors(str(tmp_path / "nope.txt"))
