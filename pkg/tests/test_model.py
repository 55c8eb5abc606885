import copy
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contactfie.datagen import hopper_model_text
from contactfie.model import (ModelError, link_theta, load_model, model_from_dict, models_equal,
                              save_model, set_link_theta)
from conftest import arm_doc


def hopper_doc():
    return json.loads(hopper_model_text())


def test_hopper_structure(hopper):
    assert hopper.n_joints == 1
    assert hopper.nv == 4
    assert hopper.n_contacts == 1
    assert hopper.nu == 1
    assert hopper.links[1].joint == "prismatic"
    np.testing.assert_array_equal(hopper.actuation_matrix(), [[0], [0], [0], [1]])


def test_parent_order_error():
    doc = arm_doc()
    doc["links"][1]["parent"] = 1
    with pytest.raises(ModelError, match=r"\$\.links\[1\]\.parent"):
        model_from_dict(doc)
    doc = arm_doc()
    doc["links"][2]["parent"] = 2
    with pytest.raises(ModelError):
        model_from_dict(doc)


def test_zero_friction_rejected():
    doc = hopper_doc()
    doc["contacts"][0]["mu"] = 0.0
    with pytest.raises(ModelError, match="mu"):
        model_from_dict(doc)


def test_unknown_field_rejected_with_path():
    doc = hopper_doc()
    doc["links"][0]["colour"] = "red"
    with pytest.raises(ModelError, match=r"\$\.links\[0\]\.colour"):
        model_from_dict(doc)


def test_inconsistent_inertia_names_link():
    doc = hopper_doc()
    doc["links"][1]["inertia"]["Iz"] = 0.001
    with pytest.raises(ModelError, match="'leg'"):
        model_from_dict(doc)


def test_invalid_json_and_base_rules():
    with pytest.raises(ModelError):
        load_model("{not json")
    doc = hopper_doc()
    doc["links"][0]["joint"] = {"type": "revolute", "axis": [1.0]}
    with pytest.raises(ModelError, match="base"):
        model_from_dict(doc)
    doc = hopper_doc()
    doc["actuated"] = [True, False]
    with pytest.raises(ModelError, match="actuated"):
        model_from_dict(doc)
    doc = arm_doc()
    doc["links"][1]["joint"]["axis"] = [2.0]
    with pytest.raises(ModelError, match="axis"):
        model_from_dict(doc)


def test_round_trip(hopper, arm):
    for m in (hopper, arm):
        again = load_model(save_model(m))
        assert models_equal(m, again)
        assert save_model(again) == save_model(m)


def test_total_mass(hopper, arm):
    assert hopper.total_mass == pytest.approx(5.5)
    assert arm.total_mass == pytest.approx(sum(link.pi2[0] for link in arm.links))


def test_set_link_theta_identity_and_scaling(hopper):
    th = link_theta(hopper, 0)
    same = set_link_theta(hopper, 0, th)
    np.testing.assert_allclose(same.links[0].pi2, hopper.links[0].pi2, atol=1e-12)
    th[0] += np.log(2.0)
    bigger = set_link_theta(hopper, 0, th)
    assert bigger.links[0].pi2[0] == pytest.approx(4 * hopper.links[0].pi2[0], rel=1e-12)
    assert hopper.links[0].pi2[0] == 5.0          # original untouched
    with pytest.raises(IndexError):
        set_link_theta(hopper, 2, th)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 20.0), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.floats(1.05, 4.0))
def test_round_trip_random_inertia(m, cx, cy, factor):
    doc = copy.deepcopy(arm_doc())
    iz = factor * m * (cx * cx + cy * cy) + 0.01
    doc["links"][1]["inertia"] = {"m": m, "hx": m * cx, "hy": m * cy, "Iz": iz}
    model = model_from_dict(doc)
    assert models_equal(model, load_model(save_model(model)))
