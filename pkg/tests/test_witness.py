import math

import numpy as np
import pytest

from config import Config
from conftest import MU2_01
from services import witness
from services.errors import InvalidArgument, NonConvergence, Unsupported
from services.kernels import KernelSpec, gram
from services.numerics import PsdVerdict, psd_check
from services.spaces import (
    Grassmannian,
    Hyperboloid,
    Projective,
    RevolutionTorus,
    Sphere,
    SpdStein,
    load_finite_metric,
)
from services.witness import (
    WitnessRequest,
    canonical_loop,
    certified_run,
    minimal_n_table,
    run_witness,
    witness_on_circle,
)


class TestCircleWitness:
    def test_n4_at_small_rate(self):
        report = witness_on_circle(1.0, 0.1, 64)
        assert report.found
        assert report.N == 4
        assert report.lambda_min == pytest.approx(MU2_01, abs=1e-12)
        assert report.route == 'circulant'

    def test_radius_rescales_rate(self):
        report = witness_on_circle(2.0, 0.025, 16)
        assert report.lambda_eff == pytest.approx(0.1)
        assert report.N == 4
        assert report.lambda_min == pytest.approx(MU2_01, abs=1e-12)

    def test_quarter_rate_needs_more_points(self):
        report = witness_on_circle(1.0, 0.25, 4)
        assert not report.found
        assert report.trace[0]['lambda_min'] > -Config.WITNESS_THRESHOLD

    def test_minimal_n_is_monotone(self):
        rows = minimal_n_table([0.1, 0.25, 0.5, 1.0], 1024)
        assert rows[0]['N'] == 4
        found = [r['N'] for r in rows if r['N'] is not None]
        assert found == sorted(found)
        assert len(found) == 4
        assert all(n % 4 == 0 for n in found)

    def test_n_max_too_small(self):
        with pytest.raises(InvalidArgument):
            witness_on_circle(1.0, 0.1, 2)


class TestCanonicalLoops:
    @pytest.mark.parametrize('space,length', [
        (Sphere(2), 2.0 * math.pi),
        (Projective(2), math.pi),
        (Grassmannian(1, 3), math.pi),
        (Grassmannian(2, 4), math.pi),
    ])
    def test_analytic_lengths(self, space, length):
        canon = canonical_loop(space)
        assert canon.length == pytest.approx(length)
        assert canon.homogeneous
        d = space.pairwise(canon.points(8)).values
        assert np.allclose(d, canon.restricted(8), atol=1e-12)

    def test_flat_torus(self, tall_torus):
        canon = canonical_loop(tall_torus)
        assert canon.length == pytest.approx(1.0)
        assert canon.descriptor()['class'] == [1, 0]

    @pytest.mark.parametrize('space', [SpdStein(2), Hyperboloid(2)])
    def test_no_canonical_loop(self, space):
        with pytest.raises(Unsupported):
            canonical_loop(space)


class TestRunWitness:
    def test_sphere_certified_at_n4(self):
        report = run_witness(WitnessRequest(Sphere(2), 0.1, n_max=64))
        assert report.found
        assert report.N == 4
        assert report.route == 'certified'
        assert report.certificate.inf_norm_delta < 1e-12
        assert report.certificate.certified_bound == pytest.approx(MU2_01, abs=1e-10)
        assert report.lambda_min == pytest.approx(MU2_01, abs=1e-10)
        assert len(report.points) == 4

    def test_direct_mode(self):
        report = run_witness(WitnessRequest(Sphere(3), 0.1, n_max=8, mode='direct'))
        assert report.route == 'direct'
        assert report.N == 4
        assert report.certificate is None
        assert report.lambda_min == pytest.approx(MU2_01, abs=1e-10)

    @pytest.mark.parametrize('space', [Projective(2), Grassmannian(1, 3)])
    def test_half_length_loops(self, space):
        expected = witness_on_circle(1.0, 0.025, 4).lambda_min
        report = run_witness(WitnessRequest(space, 0.1, n_max=16))
        assert report.N == 4
        assert report.lambda_eff == pytest.approx(0.025)
        assert report.lambda_min == pytest.approx(expected, abs=1e-9)

    def test_flat_torus_at_tuned_rate(self, unit_torus):
        lam = 0.1 * (2.0 * math.pi) ** 2
        report = run_witness(WitnessRequest(unit_torus, lam, n_max=16))
        assert report.found
        assert report.N == 4
        assert report.lambda_eff == pytest.approx(0.1)
        assert report.lambda_min == pytest.approx(MU2_01, abs=1e-9)
        assert report.epsilon_observed <= 1e-12

    def test_large_rate_not_found(self):
        report = run_witness(WitnessRequest(Sphere(2), 10.0, n_max=8))
        assert not report.found
        assert report.N is None
        assert [entry['N'] for entry in report.trace] == [4, 8]
        assert report.to_dict()['certificate'] is None

    def test_report_keys(self):
        data = run_witness(WitnessRequest(Sphere(2), 0.1, n_max=8)).to_dict()
        assert {'found', 'N', 'lambda_min', 'lambda_eff', 'loop', 'certificate',
                'epsilon_observed', 'points'} <= set(data)
        assert set(data['loop']) == {'kind', 'length', 'class'}
        assert set(data['certificate']) == {'lambda_min_ref', 'delta', 'bound', 'fires'}


class TestFiniteSpaces:
    def test_line_has_no_witness(self, tmp_path, generator):
        space = load_finite_metric(generator.line(tmp_path / 'line.txt'))
        report = run_witness(WitnessRequest(space, 1.0, n_max=64, mode='direct'))
        assert not report.found
        assert report.route == 'direct'
        assert report.trace[-1]['N'] == 64

    def test_certified_mode_rejected(self, tmp_path, generator):
        space = load_finite_metric(generator.line(tmp_path / 'line.txt', n=20))
        with pytest.raises(Unsupported):
            run_witness(WitnessRequest(space, 1.0, n_max=8, mode='certified'))

    def test_circle_file_matches_circulant(self, tmp_path, generator):
        space = load_finite_metric(generator.circle(tmp_path / 'circle.txt', n=4))
        report = run_witness(WitnessRequest(space, 0.1, n_max=4))
        assert report.N == 4
        assert report.lambda_min == pytest.approx(MU2_01, abs=1e-10)

    @pytest.mark.parametrize('lam', [0.1, 1.0, 10.0])
    def test_euclidean_cloud_is_psd(self, tmp_path, generator, lam):
        space = load_finite_metric(generator.euclidean_cloud(tmp_path / 'cloud.txt'))
        g = gram(space.pairwise(space.prefix(space.n)), KernelSpec(lam))
        assert psd_check(g.matrix, solver='lapack').lambda_min >= -1e-10 * space.n


class TestCertifiedRun:
    def test_n_must_be_multiple_of_four(self):
        with pytest.raises(InvalidArgument):
            certified_run(Sphere(2), 0.1, 6)

    def test_rate_too_large_does_not_fire(self):
        report = certified_run(Sphere(2), 10.0, 4)
        assert not report.certificate.fires
        assert report.lambda_min is None
        assert report.points == []

    def test_unconfirmed_firing_raises(self, monkeypatch):
        monkeypatch.setattr(witness, 'psd_check', lambda *args, **kwargs: PsdVerdict(False, 0.5, 1e-9))
        with pytest.raises(NonConvergence):
            certified_run(Sphere(2), 0.1, 4)

    def test_revolution_torus(self, monkeypatch):
        monkeypatch.setattr(Config, 'REV_TORUS_VERTICES', 64)
        witness._revolution_loop.cache_clear()
        surface = RevolutionTorus(3.0, 1.0)
        report = certified_run(surface, 0.025, 4)
        witness._revolution_loop.cache_clear()
        assert report.lambda_eff == pytest.approx(0.1, rel=0.02)
        assert report.loop['class'] == [1, 0]
        assert report.epsilon_observed <= 3.0 * surface.pitch
        assert report.certificate.inf_norm_delta < 0.0475
        assert report.certificate.fires
        assert report.lambda_min < 0


class TestRequestValidation:
    @pytest.mark.parametrize('kwargs', [
        dict(n_max=6), dict(n_max=0), dict(mode='fast'), dict(lam=0.0), dict(q=-1.0),
    ])
    def test_invalid(self, kwargs):
        params = dict(space=Sphere(2), lam=0.1)
        params.update(kwargs)
        with pytest.raises(InvalidArgument):
            WitnessRequest(**params)

    def test_default_n_max(self):
        assert WitnessRequest(Sphere(2), 0.1).n_max == Config.DEFAULT_N_MAX
