"""
Tests for the bounded domain
"""

import math

import numpy as np
import pytest

from engine.exceptions import GeometryError
from engine.geometry import Domain, DomainKind


def test_contains_open_interval(interval):
    """Test that the interval is open"""
    assert interval.contains(1.0)
    assert not interval.contains(0.0)
    assert not interval.contains(math.pi)
    assert not interval.contains(-0.5)


def test_contains_dimension_mismatch(interval, square):
    """Test dimension checks"""
    with pytest.raises(GeometryError):
        interval.contains([1.0, 1.0])
    with pytest.raises(GeometryError):
        square.contains(1.0)


def test_invalid_bounds_rejected():
    """Test that degenerate domains are rejected"""
    with pytest.raises(GeometryError):
        Domain.interval(1.0, 1.0)
    with pytest.raises(GeometryError):
        Domain.rectangle(0.0, 1.0, 2.0, 1.0)
    with pytest.raises(GeometryError):
        Domain.from_bounds("interval", [0.0, 1.0, 2.0])


def test_basic_properties(square):
    """Test volume, lengths and diameter"""
    rect = Domain.from_bounds("rectangle", [0.0, 1.0, 0.0, 2.0])
    assert rect.kind is DomainKind.RECTANGLE
    assert rect.dimension == 2
    assert rect.volume == pytest.approx(2.0)
    assert rect.diameter == pytest.approx(math.sqrt(5.0))
    assert square.to_dict() == {"kind": "rectangle", "bounds": [0.0, math.pi, 0.0, math.pi]}


def test_dist_to_boundary(interval):
    """Test boundary distance on both domain kinds"""
    assert interval.dist_to_boundary(1.0) == pytest.approx(1.0)
    assert interval.dist_to_boundary(3.0) == pytest.approx(math.pi - 3.0)
    rect = Domain.rectangle(0.0, 1.0, 0.0, 2.0)
    assert rect.dist_to_boundary([0.3, 1.5]) == pytest.approx(0.3)
    assert rect.dist_to_boundary([0.6, 1.9]) == pytest.approx(0.1)
    with pytest.raises(GeometryError):
        interval.dist_to_boundary(4.0)


def test_dist_positive_iff_inside(square, rng):
    """Test that boundary distance is positive exactly inside"""
    points = rng.uniform(-0.5, math.pi + 0.5, size=(500, 2))
    inside = square.contains_many(points)
    dist = square.dist_to_boundary_many(points)
    assert np.array_equal(dist > 0, inside)


def test_project_to_boundary_interval(interval):
    """Test segment exit on the interval"""
    hit = interval.project_to_boundary(3.0, 3.2)
    assert hit[0] == math.pi
    hit = interval.project_to_boundary(0.05, -0.05)
    assert hit[0] == 0.0
    assert interval.segment_exit_fraction(0.05, -0.05) == pytest.approx(0.5)


def test_project_to_boundary_rectangle():
    """Test segment exit on the rectangle, including corner cutting"""
    rect = Domain.rectangle(0.0, 1.0, 0.0, 1.0)
    hit = rect.project_to_boundary([0.5, 0.5], [1.2, 0.6])
    assert hit[0] == 1.0
    assert hit[1] == pytest.approx(0.5 + 0.1 * 0.5 / 0.7)
    # leaves through y = 1 first
    hit = rect.project_to_boundary([0.9, 0.9], [1.05, 1.3])
    assert hit[1] == 1.0
    assert hit[0] == pytest.approx(0.9 + 0.15 * 0.25)
    assert rect.on_boundary(hit)
    with pytest.raises(GeometryError):
        rect.project_to_boundary([0.5, 0.5], [0.6, 0.6])


def test_face_point_fraction(interval):
    """Test bridge-hit interpolation"""
    hit, s = interval.face_point([0.02], [0.06], 0)
    assert hit[0] == 0.0
    assert s == pytest.approx(0.02 / 0.08)


def test_grid_and_uniform_samples(square, rng):
    """Test interior grids and uniform sampling"""
    grid = square.grid(8)
    assert grid.shape == (64, 2)
    assert square.contains_many(grid).all()
    samples = square.sample_uniform(rng, 1000)
    assert square.contains_many(samples).all()
