import json

import numpy as np
import pytest

import tactilab
from tactilab.errors import DegenerateTraceError, ParameterError, SchemaError
from tactilab.signals import (
    STANDARD_ACTIONS,
    ActionKind,
    ExploratoryAction,
    NoiseScales,
    ObjectSpec,
    SkinConfig,
    load_catalog,
    pressing,
    simulate,
    sliding,
    static_contact,
)

from conftest import QUIET


def make_object(**overrides):
    base = dict(
        id=1,
        stiffness_coeff=2.0,
        roughness_amp=0.1,
        roughness_freq=1.5,
        thermal_time_const=4.0,
        thermal_equilib_delta=-5.0,
        label="test object",
    )
    base.update(overrides)
    return ObjectSpec(**base)


class TestActions:
    def test_standard_action_table(self):
        # The seven bench actions and their parameter vectors.
        assert STANDARD_ACTIONS["P1"].params == (1.0, 3.0)
        assert STANDARD_ACTIONS["P2"].params == (2.0, 3.0)
        assert STANDARD_ACTIONS["S1"].params == (0.1, 1.0, 1.0)
        assert STANDARD_ACTIONS["S2"].params == (0.1, 5.0, 1.0)
        assert STANDARD_ACTIONS["S3"].params == (0.2, 1.0, 1.0)
        assert STANDARD_ACTIONS["S4"].params == (0.2, 5.0, 1.0)
        assert STANDARD_ACTIONS["C1"].params == (2.0, 15.0)
        assert STANDARD_ACTIONS["C1"].kind is ActionKind.STATIC_CONTACT

    def test_param_arity_enforced(self):
        with pytest.raises(ParameterError):
            ExploratoryAction(ActionKind.PRESSING, (1.0, 2.0, 3.0))
        with pytest.raises(ParameterError):
            ExploratoryAction(ActionKind.SLIDING, (1.0, 2.0))

    def test_params_strictly_positive(self):
        with pytest.raises(ParameterError):
            pressing(0.0, 3.0)
        with pytest.raises(ParameterError):
            sliding(0.1, -1.0, 1.0)


class TestSimulate:
    def test_zero_texture_noiseless_accels_are_zero(self):
        obj = make_object(roughness_amp=0.0)
        trace = simulate(obj, sliding(0.2, 5.0, 1.0), seed=3, noise=QUIET)
        assert np.all(trace.accels == 0.0)

    def test_determinism_bit_identical(self):
        obj = make_object()
        for action in STANDARD_ACTIONS.values():
            a = simulate(obj, action, seed=11)
            b = simulate(obj, action, seed=11)
            for x, y in ((a.forces, b.forces), (a.temps, b.temps), (a.accels, b.accels)):
                if x is None:
                    assert y is None
                else:
                    assert np.array_equal(x, y)

    def test_force_plateau_mean_analytic(self):
        # stiffness 2 N/mm at 2 mm depth with no noise -> exactly 4 N.
        obj = make_object(stiffness_coeff=2.0)
        trace = simulate(obj, pressing(2.0, 3.0), seed=0, noise=QUIET)
        assert trace.forces.mean() == pytest.approx(4.0, abs=1e-12)

    def test_plateau_monotone_in_stiffness_and_depth(self):
        means_k = [
            simulate(make_object(stiffness_coeff=k), pressing(1.5, 3.0), 0, noise=QUIET)
            .forces.mean()
            for k in (0.5, 1.0, 2.0, 4.0)
        ]
        assert all(a < b for a, b in zip(means_k, means_k[1:]))
        means_d = [
            simulate(make_object(), pressing(d, 3.0), 0, noise=QUIET).forces.mean()
            for d in (0.5, 1.0, 2.0)
        ]
        assert all(a < b for a, b in zip(means_d, means_d[1:]))

    def test_channel_contract_per_action_kind(self, sample_catalog):
        for obj in sample_catalog:
            for action in STANDARD_ACTIONS.values():
                trace = simulate(obj, action, 5, sample_catalog.skin, sample_catalog.noise)
                if action.kind is ActionKind.SLIDING:
                    assert trace.forces is None
                    assert trace.accels is not None and trace.temps is not None
                else:
                    assert trace.accels is None
                    assert trace.forces is not None and trace.temps is not None

    def test_trace_shapes(self):
        skin = SkinConfig()
        trace = simulate(make_object(), pressing(2.0, 3.0), 1, skin)
        assert trace.forces.shape == (21, 300)
        assert trace.temps.shape == (7, 300)
        slide = simulate(make_object(), sliding(0.2, 5.0, 1.0), 1, skin)
        assert slide.accels.shape == (7, 3, 100)

    def test_degenerate_trace_error(self):
        with pytest.raises(DegenerateTraceError):
            simulate(make_object(), pressing(1.0, 0.01), seed=0)

    def test_temperature_decays_toward_equilibrium(self):
        obj = make_object(thermal_time_const=2.0, thermal_equilib_delta=-6.0)
        trace = simulate(obj, static_contact(2.0, 15.0), 0, noise=QUIET)
        seq = trace.temps[0]
        assert seq[0] == pytest.approx(25.0, abs=1e-9)
        assert seq[-1] == pytest.approx(25.0 - 6.0, rel=1e-3)
        assert np.all(np.diff(seq) <= 0)


class TestObjectSpec:
    def test_nonpositive_parameters_rejected(self):
        with pytest.raises(SchemaError, match="stiffness_coeff"):
            make_object(stiffness_coeff=-1.0)
        with pytest.raises(SchemaError, match="roughness_freq"):
            make_object(roughness_freq=0.0)
        with pytest.raises(SchemaError, match="roughness_amp"):
            make_object(roughness_amp=-0.1)

    def test_equilib_delta_any_sign(self):
        make_object(thermal_equilib_delta=3.0)
        make_object(thermal_equilib_delta=-3.0)


class TestLoadCatalog:
    def test_sample_catalog_ships_fifteen_objects(self):
        catalog = load_catalog(tactilab.data_path("catalogs", "sample_catalog.json"))
        assert len(catalog) == 15
        assert sorted(obj.id for obj in catalog) == list(range(1, 16))

    def test_empty_object_list_rejected(self, tmp_path):
        path = tmp_path / "cat.json"
        path.write_text(json.dumps({"schema_version": 1, "objects": []}))
        with pytest.raises(SchemaError, match="objects"):
            load_catalog(path)

    def test_negative_stiffness_names_field(self, tmp_path):
        entry = {
            "id": 1,
            "stiffness_coeff": -1.0,
            "roughness_amp": 0.1,
            "roughness_freq": 1.0,
            "thermal_time_const": 1.0,
            "thermal_equilib_delta": 0.0,
        }
        path = tmp_path / "cat.json"
        path.write_text(json.dumps({"schema_version": 1, "objects": [entry]}))
        with pytest.raises(SchemaError, match="stiffness_coeff"):
            load_catalog(path)

    def test_duplicate_ids_rejected(self, tmp_path):
        entry = {
            "id": 7,
            "stiffness_coeff": 1.0,
            "roughness_amp": 0.1,
            "roughness_freq": 1.0,
            "thermal_time_const": 1.0,
            "thermal_equilib_delta": 0.0,
        }
        path = tmp_path / "cat.json"
        path.write_text(json.dumps({"schema_version": 1, "objects": [entry, dict(entry)]}))
        with pytest.raises(SchemaError, match="duplicate id 7"):
            load_catalog(path)

    def test_unknown_fields_rejected(self, tmp_path):
        path = tmp_path / "cat.json"
        path.write_text(json.dumps({"schema_version": 1, "objects": [], "extra": 1}))
        with pytest.raises(SchemaError, match="extra"):
            load_catalog(path)

    def test_missing_schema_version_rejected(self, tmp_path):
        path = tmp_path / "cat.json"
        path.write_text(json.dumps({"objects": []}))
        with pytest.raises(SchemaError, match="schema_version"):
            load_catalog(path)
