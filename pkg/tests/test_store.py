from vortexmf.db.database import init_db, list_runs, record_run


def test_record_and_list_runs():
    init_db()
    run_id = record_run("mesh", "built", 0, {"mesh": "disk:64"}, '{"n_nodes": 64}', "0.1.0",
                        output_path="mesh.json", provenance=None, wall_time=0.01)
    assert run_id is not None
    rows = list_runs(limit=50, command="mesh")
    assert any(row["id"] == run_id for row in rows)
    stored = next(row for row in rows if row["id"] == run_id)
    assert stored["status"] == "built"
    assert stored["exit_code"] == 0
    assert stored["created_at"] is not None


def test_list_runs_filters_by_command():
    record_run("bubble", "solved", 0, {}, None, "0.1.0")
    assert all(row["command"] == "bubble" for row in list_runs(command="bubble"))
    assert len(list_runs(limit=1)) == 1
