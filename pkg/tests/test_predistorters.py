import numpy as np
import pytest

from dpd_lab.predistorters import (MODEL_KINDS, build_model, hyper_generate,
                                   make_input_window, predistort_sample,
                                   predistort_signal, state_vector, window_matrix)
from dpd_lab.signals import ComplexSignal

FS = 200e6
DIMS = (36, 18, 12)


class TestBuildModel:
    def test_r2tdnn_param_count(self):
        model = build_model("R2TDNN", 8, DIMS)
        # 18*36+36 + 36*18+18 + 18*12+12 + 12*2+2
        assert len(model.main_params) == 684 + 666 + 228 + 26 == 1604

    def test_hn_param_counts(self):
        model = build_model("HN-R2TDNN", 8, DIMS, (36, 28))
        assert len(model.main_params) == 1604 - 26
        # 3*36+36 + 36*28+28 + 28*26+26
        assert len(model.hyper_params) == 144 + 1036 + 754 == 1934

    def test_hg_input_dimension(self):
        model = build_model("HG-R2TDNN", 8, DIMS)
        assert model.main_layers[0].in_dim == 21
        assert model.window_dim == 18

    def test_deterministic(self):
        a = build_model("SVDEN", 8, DIMS, seed=4)
        b = build_model("SVDEN", 8, DIMS, seed=4)
        assert np.array_equal(a.main_params, b.main_params)
        assert np.array_equal(a.shortcut, np.eye(2))

    def test_memory_eight_gives_paper_input_dim(self):
        assert build_model("R2TDNN", 8, DIMS).main_layers[0].in_dim == 2 * 8 + 2 == 18

    def test_missing_hyper_spec(self):
        with pytest.raises(ValueError, match="hyper"):
            build_model("HN-R2TDNN", 8, DIMS, None)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            build_model("MLP", 8, DIMS)


class TestStateVector:
    def test_grid_encoding(self):
        c = state_vector(20e6, -19.0, 40e6, -19.0)
        assert np.allclose(c, [0.5, 1.0, 1.0])

    def test_power_ratio_exceeds_one_for_lower_power(self):
        c = state_vector(40e6, -23.0, 40e6, -19.0)
        assert np.allclose(c, [1.0, 23 / 19, 23 / 19])
        assert np.all(c > 0)

    def test_zero_p_max_rejected(self):
        with pytest.raises(ValueError):
            state_vector(20e6, -19.0, 40e6, 0.0)


class TestWindows:
    def test_memoryless_window(self):
        sig = np.array([3 + 4j])
        assert np.array_equal(make_input_window(sig, 0, 0), [3.0, 4.0])

    def test_zero_history(self):
        sig = np.array([1 + 1j, 2 + 2j])
        assert np.array_equal(make_input_window(sig, 0, 2), [1, 1, 0, 0, 0, 0])

    def test_matches_index_oracle(self, rng):
        sig = rng.standard_normal(200) + 1j * rng.standard_normal(200)
        window = make_input_window(sig, 100, 8)
        for m in range(9):
            assert window[2 * m] == sig[100 - m].real
            assert window[2 * m + 1] == sig[100 - m].imag

    def test_window_matrix_rows_match(self, rng):
        sig = rng.standard_normal(64) + 1j * rng.standard_normal(64)
        mat = window_matrix(sig, 5)
        for n in (0, 3, 40, 63):
            assert np.array_equal(mat[n], make_input_window(sig, n, 5))

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            make_input_window(np.array([1 + 0j]), 1, 2)


class TestHyperGenerate:
    def test_zero_hyper_params_give_identity(self, random_signal):
        model = build_model("HN-R2TDNN", 8, DIMS, (36, 28), seed=1)
        model.hyper_params = np.zeros_like(model.hyper_params)
        w_r, b_r = hyper_generate(model, np.array([0.5, 1.0, 1.0]))
        assert np.all(w_r == 0) and np.all(b_r == 0)
        out = predistort_signal(model, random_signal, np.array([0.5, 1.0, 1.0]))
        assert np.array_equal(out.samples, random_signal.samples)

    def test_deterministic(self):
        model = build_model("HN-R2TDNN", 8, DIMS, (36, 28), seed=2)
        c = np.array([0.75, 1.1, 1.1])
        a = hyper_generate(model, c)
        b = hyper_generate(model, c)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_distinct_states_differ(self):
        model = build_model("HN-R2TDNN", 8, DIMS, (36, 28), seed=3)
        wa, ba = hyper_generate(model, np.array([0.5, 1.0, 1.0]))
        wb, bb = hyper_generate(model, np.array([1.0, 23 / 19, 23 / 19]))
        assert np.max(np.abs(np.concatenate([(wa - wb).ravel(), ba - bb]))) > 1e-9

    def test_wrong_kind(self):
        with pytest.raises(ValueError):
            hyper_generate(build_model("R2TDNN", 8, DIMS), np.zeros(3))


class TestPredistort:
    def test_r2tdnn_zero_params_identity_residual(self):
        model = build_model("R2TDNN", 2, (6, 4))
        model.main_params = np.zeros_like(model.main_params)
        window = make_input_window(np.array([0.3 - 0.2j]), 0, 2)
        assert predistort_sample(model, window) == (0.3, -0.2)

    def test_svden_zero_everything_gives_zero(self, rng):
        model = build_model("SVDEN", 2, (6, 4))
        model.main_params = np.zeros_like(model.main_params)
        model.shortcut = np.zeros((2, 2))
        window = rng.standard_normal(6)
        assert predistort_sample(model, window) == (0.0, 0.0)

    def test_hn_equals_r2tdnn_with_frozen_output_layer(self, rng):
        hn = build_model("HN-R2TDNN", 8, DIMS, (36, 28), seed=5)
        c = np.array([0.5, 1.0, 1.0])
        w_r, b_r = hyper_generate(hn, c)
        # compose independently: R2TDNN sharing the trunk, with the generated
        # output layer spliced into its parameter vector
        plain = build_model("R2TDNN", 8, DIMS, seed=5)
        plain.main_params = np.concatenate(
            [hn.main_params, w_r.reshape(-1), b_r])
        sig = ComplexSignal(0.4 * (rng.standard_normal(256) + 1j * rng.standard_normal(256)), FS)
        out_hn = predistort_signal(hn, sig, c)
        out_plain = predistort_signal(plain, sig)
        assert np.max(np.abs(out_hn.samples - out_plain.samples)) < 1e-12

    def test_signal_matches_per_sample_loop(self, rng):
        model = build_model("HG-R2TDNN", 4, (10, 6), seed=6)
        c = np.array([0.5, 1.0, 1.0])
        sig = ComplexSignal(0.3 * (rng.standard_normal(256) + 1j * rng.standard_normal(256)), FS)
        full = predistort_signal(model, sig, c)
        for n in (0, 1, 17, 100, 255):
            window = make_input_window(sig.samples, n, 4)
            s_i, s_q = predistort_sample(model, window, c)
            assert abs(full.samples[n] - (s_i + 1j * s_q)) < 1e-12

    def test_zero_input_zero_bias_model(self):
        model = build_model("R2TDNN", 2, (6, 4), seed=7)  # biases init to zero
        sig = ComplexSignal(np.zeros(32, dtype=complex) + 0j, FS)
        out = predistort_signal(model, sig)
        assert np.all(out.samples == 0)

    def test_window_shift_property(self, rng):
        model = build_model("R2TDNN", 3, (8, 4), seed=8)
        samples = rng.standard_normal(64) + 1j * rng.standard_normal(64)
        n = 30
        modified = samples.copy()
        modified[n - 4] += 1.0  # one sample beyond the window reach
        a = predistort_signal(model, ComplexSignal(samples, FS))
        b = predistort_signal(model, ComplexSignal(modified, FS))
        assert a.samples[n] == b.samples[n]

    def test_missing_state_rejected(self, rng):
        model = build_model("HN-R2TDNN", 2, (6, 4), (8,), seed=9)
        with pytest.raises(ValueError, match="state"):
            predistort_signal(model, ComplexSignal(rng.standard_normal(8) + 0j, FS))

    def test_identity_at_zero_output_layer_all_residual_kinds(self, rng):
        sig = ComplexSignal(0.5 * (rng.standard_normal(128) + 1j * rng.standard_normal(128)), FS)
        c = np.array([0.5, 1.0, 1.0])
        for kind in ("R2TDNN", "HG-R2TDNN"):
            model = build_model(kind, 8, DIMS, seed=10)
            w_sl, b_sl = model.main_layout.slices[-1]
            model.main_params[w_sl] = 0.0
            model.main_params[b_sl] = 0.0
            out = predistort_signal(model, sig, c if model.needs_state else None)
            assert np.array_equal(out.samples, sig.samples)


def test_pack_unpack_roundtrip(rng):
    for kind, hyper in (("R2TDNN", None), ("SVDEN", None), ("HN-R2TDNN", (8, 6))):
        model = build_model(kind, 3, (8, 5), hyper, seed=11)
        packed = model.pack_params()
        assert len(packed) == model.param_count
        noise = rng.standard_normal(len(packed))
        model.set_packed_params(packed + noise)
        assert np.allclose(model.pack_params(), packed + noise, rtol=0, atol=0)
