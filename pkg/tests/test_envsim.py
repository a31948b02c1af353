import pytest

from deskgrid.envsim import (EnvState, create_env, parse_observation,
                             serialize_observation, task_suite)
from deskgrid.envsim.tasks import TaskSpec
from deskgrid.errors import EpisodeFinished, UnknownVerifier


def sheet_task(cells=None, max_steps=8, task_id="t1"):
    return TaskSpec(task_id, "sheet", {"cells": cells or {"A1": "Month", "B1": "Total"}},
                    max_steps, "sheet.cells")


def test_deterministic_reset():
    task = sheet_task()
    a = create_env(task, 7)
    b = create_env(task, 7)
    assert a.observation() == b.observation()
    assert a.state.step_count == 0
    assert "grid 8x8 empty" in a.observation()


def test_unknown_verifier_rejected():
    task = TaskSpec("t", "sheet", {}, 5, "missing")
    with pytest.raises(UnknownVerifier):
        create_env(task, 0)


def test_api_step_sets_cell():
    env = create_env(sheet_task(), 0)
    out = env.step("API sheet.set_cell(cell=A1,value=Month)")
    assert out.accepted and not out.malformed
    assert env.state.sheet.get("A1") == "Month"
    assert env.state.step_count == 1


def test_gui_matches_api_final_state():
    # oracle: replay both action sequences and diff the final app store
    task = sheet_task()
    via_api = create_env(task, 0)
    via_api.step("API sheet.set_cell(cell=A1,value=Month)")
    via_gui = create_env(task, 0)
    via_gui.step("CLICK(0,0)")
    via_gui.step('TYPE("Month")')
    assert via_gui.state.sheet.cells == via_api.state.sheet.cells


def test_malformed_not_accepted_but_counts_a_step():
    env = create_env(sheet_task(), 0)
    out = env.step("set_cell A1")
    assert out.malformed and not out.accepted
    assert env.state.step_count == 1
    assert env.state.sheet.cells == {}


def test_done_on_terminate_and_on_budget():
    env = create_env(sheet_task(max_steps=2), 0)
    assert not env.step("CLICK(0,0)").done
    assert env.step("CLICK(0,0)").done  # budget reached
    with pytest.raises(EpisodeFinished):
        env.step("DONE")

    env2 = create_env(sheet_task(), 0)
    assert env2.step("DONE").done


def test_verify_partial_credit():
    env = create_env(sheet_task(), 0)
    assert env.verify() == 0.0
    env.step("API sheet.set_cell(cell=A1,value=Month)")
    assert env.verify() == 0.5
    env.step("API sheet.set_cell(cell=B1,value=Total)")
    assert env.verify() == 1.0


def test_rejected_action_leaves_state_unchanged():
    env = create_env(sheet_task(), 0)
    before = env.state.to_json()
    out = env.step('TYPE("Month")')  # no focused cell yet
    assert not out.accepted
    after = env.state.to_json()
    assert EnvState.from_json(before).sheet.cells == EnvState.from_json(after).sheet.cells


def test_observation_deterministic_and_complete():
    env = create_env(sheet_task(), 3)
    env.step("API sheet.set_cell(cell=A1,value=Month)")
    obs1 = env.observation()
    obs2 = env.observation()
    assert obs1 == obs2
    assert obs1.count("A1=Month") == 1
    rebuilt = parse_observation(obs1)
    assert rebuilt.sheet.cells == env.state.sheet.cells
    assert rebuilt.focus == env.state.focus


def test_state_serialization_round_trip():
    env = create_env(task_suite("ablation")[3], 0)  # an os task
    env.step('KEY("ctrl+n")')
    env.step('TYPE("docs")')
    blob = env.state.to_json()
    assert EnvState.from_json(blob).to_json() == blob


@pytest.mark.parametrize("app,actions,checks", [
    ("files", ['API files.write(path=docs/a.txt,text=hi)'],
     lambda st: st.files.files["docs/a.txt"] == "hi" and "docs" in st.files.dirs),
    ("editor", ['API editor.insert(text=hello)'],
     lambda st: st.editor.text == "hello"),
    ("editor", ['API editor.append_line(text=a)', 'API editor.append_line(text=b)'],
     lambda st: st.editor.text == "a\nb"),
])
def test_api_semantics(app, actions, checks):
    verifier = {"files": "files.tree", "editor": "editor.text"}[app]
    task = TaskSpec("t", app, {}, 9, verifier)
    env = create_env(task, 0)
    for a in actions:
        assert env.step(a).accepted
    assert checks(env.state)


def test_gui_editor_case_flow():
    task = TaskSpec("t", "editor", {"case": "lower"}, 9, "editor.text",
                    {"text": "LOUD TEXT"})
    env = create_env(task, 0)
    assert env.step("CLICK(0,0)").accepted
    assert env.step('KEY("ctrl+a")').accepted
    assert env.step('KEY("ctrl+l")').accepted
    assert env.state.editor.text == "loud text"
    assert env.verify() == 1.0


def test_unregistered_api_rejected():
    env = create_env(sheet_task(), 0)
    out = env.step("API sheet.explode(cell=A1)")
    assert not out.accepted and not out.malformed
