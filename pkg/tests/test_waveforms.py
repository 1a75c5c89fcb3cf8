import math

import numpy as np
import pytest

from kerdock_radar.src.core import waveforms as waveforms_module
from kerdock_radar.src.core.errors import DimensionError, WaveformError
from kerdock_radar.src.core.models import KerdockFamily
from kerdock_radar.src.core.waveforms import (
    alltop_waveforms,
    ambiguity_surface,
    external_waveforms,
    is_prime,
    kerdock_family,
    kerdock_waveforms,
    modulate,
    next_prime,
    shift_operator,
    timefreq_correlation,
    translate,
    verify_incoherence,
    verify_kerdock_properties,
)


class TestPrimes:
    def test_is_prime(self):
        assert [n for n in range(20) if is_prime(n)] == [2, 3, 5, 7, 11, 13, 17, 19]

    @pytest.mark.parametrize("n, expected", [(1, 3), (10, 11), (37, 37), (74, 79), (148, 149)])
    def test_next_prime(self, n, expected):
        assert next_prime(n) == expected


class TestShifts:
    def test_translate_delays(self):
        x = np.arange(5.0)
        np.testing.assert_array_equal(translate(x, 1), [4.0, 0.0, 1.0, 2.0, 3.0])

    def test_shift_operator_matches_translate_of_modulate(self, rng):
        x = rng.standard_normal(7) + 1j * rng.standard_normal(7)
        np.testing.assert_allclose(shift_operator(7, 3) @ x, translate(modulate(x, 3), 1), atol=1e-12)


class TestKerdockFamily:
    @pytest.mark.parametrize("p", [4, 2, 9, 259])
    def test_rejects_non_odd_primes(self, p):
        with pytest.raises(WaveformError, match="p must be an odd prime"):
            kerdock_family(p)

    def test_rejects_primes_above_limit(self):
        with pytest.raises(WaveformError, match="between"):
            kerdock_family(263)

    def test_repeated_calls_share_the_family(self):
        assert kerdock_family(7) is kerdock_family(7)

    def test_bases_are_read_only(self):
        family = kerdock_family(5)
        with pytest.raises(ValueError):
            family.bases[0, 0, 0] = 1.0

    def test_last_basis_is_identity(self):
        family = kerdock_family(7)
        np.testing.assert_array_equal(family.basis(7), np.eye(7))

    def test_first_basis_is_dft(self):
        p = 7
        family = kerdock_family(p)
        l = np.arange(p)
        expected = np.exp(-2j * np.pi * np.outer(l, l) / p) / math.sqrt(p)
        np.testing.assert_allclose(family.basis(0), expected, atol=1e-10)

    @pytest.mark.parametrize("p", [5, 11])
    def test_vectors_are_quadratic_chirps(self, p):
        family = kerdock_family(p)
        l = np.arange(p)
        for k in range(1, p):
            a = (k * pow(2, -1, p)) % p
            for j in range(p):
                u = family.vector(k, j)
                residual = u / u[0] * np.exp(-2j * np.pi * a * l**2 / p)
                steps = residual[1:] / residual[:-1]
                np.testing.assert_allclose(steps, steps[0], atol=1e-9)

    def test_first_entries_are_real_positive(self):
        family = kerdock_family(11)
        first = family.bases[:11, 0, :]
        np.testing.assert_allclose(first.imag, 0.0, atol=1e-12)
        assert np.all(first.real > 0)

    @pytest.mark.parametrize("p", [5, 7, 11, 13, 37])
    def test_all_properties_hold(self, p):
        report = verify_kerdock_properties(kerdock_family(p), tolerance=1e-10)
        assert report.passed, report.deviations
        assert report.cross_exhaustive == (p <= 13)

    def test_ambiguity_points_follow_slope(self):
        p = 7
        report = verify_kerdock_properties(kerdock_family(p))
        for k in range(p):
            expected = {((k * l) % p, l) for l in range(p)}
            assert set(report.ambiguity_points[k]) == expected
        assert set(report.ambiguity_points[p]) == {(f, 0) for f in range(p)}

    def test_report_saves_json(self, tmp_path):
        report = verify_kerdock_properties(kerdock_family(5))
        path = report.save_to_file(str(tmp_path))
        assert path.endswith("kerdock_p5_report.json")

    def test_replaced_column_breaks_unbiasedness(self, rng):
        bases = np.array(kerdock_family(7).bases)
        column = rng.standard_normal(7) + 1j * rng.standard_normal(7)
        bases[2][:, 3] = column / np.linalg.norm(column)
        report = verify_kerdock_properties(KerdockFamily(p=7, bases=bases))
        assert not report.properties["mutually_unbiased"]
        assert report.deviations["mub"] > 1e-3
        assert not report.passed

    def test_sampled_cross_check_memory_is_cubic(self, monkeypatch):
        p = 11
        sizes = []

        def recording_surface(u, v):
            surface = ambiguity_surface(u, v)
            sizes.append(surface.size)
            return surface

        monkeypatch.setattr(waveforms_module, "ambiguity_surface", recording_surface)
        report = verify_kerdock_properties(kerdock_family(p), exhaustive_cross=False)
        assert not report.cross_exhaustive
        assert report.properties["crosscorrelation"]
        assert max(sizes) <= (p + 1) * p * p

    def test_rebuild_after_cache_clear_is_identical(self):
        first = kerdock_family(11)
        kerdock_family.cache_clear()
        second = kerdock_family(11)
        assert second is not first
        np.testing.assert_array_equal(second.bases, first.bases)


class TestKerdockWaveforms:
    def test_columns_come_from_distinct_bases(self):
        family = kerdock_family(11)
        waveforms = kerdock_waveforms(family, n_tx=3, j_select=2)
        assert waveforms.columns.shape == (11, 3)
        assert waveforms.family_tag == "kerdock"
        for k in range(3):
            np.testing.assert_array_equal(waveforms.columns[:, k], family.vector(k, 2))

    def test_constant_modulus(self):
        waveforms = kerdock_waveforms(kerdock_family(13), n_tx=4)
        np.testing.assert_allclose(np.abs(waveforms.columns), 1 / math.sqrt(13), atol=1e-12)
        np.testing.assert_allclose(waveforms.papr(), 1 / math.sqrt(13), atol=1e-12)

    @pytest.mark.parametrize("n_tx", [0, 5, 6])
    def test_rejects_bad_counts(self, n_tx):
        with pytest.raises(WaveformError):
            kerdock_waveforms(kerdock_family(5), n_tx=n_tx)

    def test_rejects_bad_j_select(self):
        with pytest.raises(WaveformError, match="j_select"):
            kerdock_waveforms(kerdock_family(5), n_tx=2, j_select=5)


class TestAlltop:
    def test_rejects_p3(self):
        with pytest.raises(WaveformError):
            alltop_waveforms(3, 1)

    def test_single_waveform_is_incoherent(self):
        report = verify_incoherence(alltop_waveforms(11, 1), gamma=1.0)
        assert report.passed
        assert report.cross_max is None
        assert report.self_max == pytest.approx(1 / math.sqrt(11), abs=1e-10)

    @pytest.mark.parametrize("p", [5, 7, 13])
    def test_self_incoherent_at_unit_gamma(self, p):
        report = verify_incoherence(alltop_waveforms(p, 1), gamma=1.0)
        assert report.self_passed
        assert report.self_max == pytest.approx(1 / math.sqrt(p), abs=1e-10)

    def test_set_cross_terms_reach_unit_modulus(self):
        report = verify_incoherence(alltop_waveforms(11, 3), gamma=1.0)
        assert report.self_passed
        assert not report.cross_passed
        assert report.cross_max == pytest.approx(1.0, abs=1e-10)
        assert report.zero_doppler_cross_max <= 1 / math.sqrt(11) + 1e-10
        assert report.empirical_gamma == pytest.approx(math.sqrt(11), rel=1e-9)


class TestExternalWaveforms:
    def test_normalizes_columns(self, rng):
        columns = rng.standard_normal((7, 2)) + 1j * rng.standard_normal((7, 2))
        waveforms = external_waveforms(columns, gamma=2.0)
        np.testing.assert_allclose(np.linalg.norm(waveforms.columns, axis=0), 1.0)
        assert waveforms.family_tag == "external"
        assert waveforms.gamma == 2.0

    def test_rejects_zero_column(self):
        with pytest.raises(WaveformError, match="all-zero"):
            external_waveforms(np.zeros((5, 1)))


class TestAmbiguitySurface:
    def test_matches_direct_correlation(self, rng):
        p = 7
        u = rng.standard_normal(p) + 1j * rng.standard_normal(p)
        v = rng.standard_normal(p) + 1j * rng.standard_normal(p)
        surface = ambiguity_surface(u, v)
        for f in range(p):
            for l in range(p):
                assert surface[f, l] == pytest.approx(timefreq_correlation(u, v, f, l), abs=1e-10)

    def test_origin_is_inner_product(self, rng):
        u = rng.standard_normal(5) + 1j * rng.standard_normal(5)
        v = rng.standard_normal(5) + 1j * rng.standard_normal(5)
        assert ambiguity_surface(u, v)[0, 0] == pytest.approx(np.vdot(v, u), abs=1e-12)

    def test_rejects_length_mismatch(self):
        with pytest.raises(DimensionError):
            ambiguity_surface(np.ones(5), np.ones(7))

    def test_kerdock_autocorrelation_is_unit_on_slope(self):
        p = 11
        u = kerdock_family(p).vector(3, 4)
        moduli = np.abs(ambiguity_surface(u, u))
        for l in range(p):
            assert moduli[(3 * l) % p, l] == pytest.approx(1.0, abs=1e-10)
        assert np.sum(moduli > 1 - 1e-6) == p
