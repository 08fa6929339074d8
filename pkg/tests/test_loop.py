from __future__ import annotations

import base64
import json
import math
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from cadloop.cloud import parse_cloud
from cadloop.dsl import DslRenderer, parse, random_program, render_mesh, to_text
from cadloop.loop import (
    BadResponse,
    BeamConfig,
    MissingKey,
    NoisyOracleEditor,
    OracleEditor,
    RemoteEditor,
    ScriptedEditor,
    TargetContext,
    Timeout,
    build_evidence,
    greedy_loop,
    run_loop,
    run_scan_track,
    stochastic_beam,
)

from .conftest import BOX_PROGRAM, HOLED_PROGRAM

GT = to_text(random_program(7, 3))


@pytest.fixture(scope="module")
def renderer():
    return lambda text: render_mesh(parse(text), 32)


@pytest.fixture(scope="module")
def target():
    return render_mesh(parse(GT), 32)


def ctx_for(mesh, tid="target"):
    return TargetContext(mesh, tid, cd_samples=2000, iou_resolution=32)


# --- evidence -----------------------------------------------------------------


def test_first_step_evidence(target):
    ev = build_evidence(ctx_for(target), None, "cross_modal", seed=1)
    assert ev.step == 1 and ev.prev_program is None
    assert np.all(ev.overlay.red == 0) and ev.overlay.green.max() > 0
    assert np.array_equal(ev.cloud.target_offsets, -ev.cloud.target_points)
    with pytest.raises(ValueError):
        build_evidence(ctx_for(target), ("x", None), "image", step=1)
    with pytest.raises(ValueError):
        build_evidence(ctx_for(target), None, "video")


def test_modalities_are_lazy_and_separate(target, renderer):
    ctx = ctx_for(target)
    prev = (BOX_PROGRAM, renderer(BOX_PROGRAM))
    pc = build_evidence(ctx, prev, "pointcloud")
    assert pc.overlay is None and pc.cloud is not None
    assert "grid" not in ctx.__dict__  # views were never rendered
    img = build_evidence(ctx, prev, "image")
    assert img.cloud is None and img.overlay.red.max() > 0


def test_invalid_previous_program_uses_null_prediction(target):
    ev = build_evidence(ctx_for(target), ("extrood", None), "cross_modal")
    assert ev.step == 2 and ev.prev_program == "extrood"
    assert np.all(ev.overlay.red == 0)
    assert np.all(ev.cloud.pred_points == 0)


def test_payload(target, renderer):
    ev = build_evidence(ctx_for(target, "t0"), (BOX_PROGRAM, renderer(BOX_PROGRAM)), "cross_modal", seed=3)
    doc = ev.to_payload("greedy", 3)
    assert doc["target_id"] == "t0" and doc["prev_program"] == BOX_PROGRAM
    assert base64.b64decode(doc["overlay_png_base64"])[:8] == b"\x89PNG\r\n\x1a\n"
    assert parse_cloud(base64.b64decode(doc["cloud_b64"])) == ev.cloud


# --- editors ------------------------------------------------------------------


def test_noisy_oracle(target):
    ev1 = build_evidence(ctx_for(target), None, "image")
    ev3 = build_evidence(ctx_for(target), (GT, None), "image", step=3)
    ed = NoisyOracleEditor(GT, 0.2, seed=4)
    assert ed(ev1) == ed(ev1) != GT
    assert ed(ev1, "sample", 0, 0) != ed(ev1, "sample", 0, 1)
    assert NoisyOracleEditor(GT, 0.0)(ev1) == GT
    gt = parse(GT).steps[0].height
    err1 = abs(parse(ed(ev1)).steps[0].height - gt)
    err3 = abs(parse(ed(ev3)).steps[0].height - gt)
    assert err3 <= 0.2 * 0.5**3 * 200 + 1e-9 and err1 <= 0.2 * 0.5 * 200 + 1e-9


def test_scripted_editor(tmp_path, target):
    path = tmp_path / "s.jsonl"
    path.write_text(json.dumps({"target_id": "target", "t": 1, "k": 0, "program": BOX_PROGRAM}) + "\n\n")
    ed = ScriptedEditor.from_file(path)
    ev = build_evidence(ctx_for(target), None, "image")
    assert ed(ev) == BOX_PROGRAM
    with pytest.raises(MissingKey):
        ed(ev, index=1)


class _Handler(BaseHTTPRequestHandler):
    def do_POST(self):  # noqa: N802
        doc = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        if doc["target_id"] == "fail":
            self.send_response(500)
            self.end_headers()
            return
        body = json.dumps({"program": BOX_PROGRAM if doc["step"] == 1 else doc["prev_program"]}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture()
def stub_server():
    srv = HTTPServer(("127.0.0.1", 0), _Handler)
    th = threading.Thread(target=srv.serve_forever, daemon=True)
    th.start()
    yield f"http://127.0.0.1:{srv.server_address[1]}/edit"
    srv.shutdown()
    srv.server_close()


def test_remote_editor(stub_server, renderer):
    box = renderer(BOX_PROGRAM)
    trace = greedy_loop(ctx_for(box), RemoteEditor(stub_server, timeout=5), renderer, BeamConfig(s=2, modality="cross_modal"))
    assert trace.best_so_far.program == BOX_PROGRAM and trace.render_count == 2
    with pytest.raises(BadResponse):
        RemoteEditor(stub_server)(build_evidence(ctx_for(box, "fail"), None, "image"))


def test_remote_editor_unreachable(target):
    ev = build_evidence(ctx_for(target), None, "image")
    with pytest.raises(Timeout):
        RemoteEditor("http://127.0.0.1:9/edit", timeout=0.5, retries=1)(ev)


# --- greedy -------------------------------------------------------------------


def test_greedy_with_oracle(target, renderer):
    trace = greedy_loop(ctx_for(target), OracleEditor(GT), renderer, BeamConfig(s=3))
    assert trace.render_count == 3 and trace.stopped_at is None
    assert trace.best_curve()[0] < 1e-9
    assert trace.best_so_far.step_born == 1  # ties keep the earliest candidate


def test_greedy_all_unparsable(target, renderer):
    r = DslRenderer(32)
    trace = greedy_loop(ctx_for(target), lambda ev, **kw: "not a program", r, BeamConfig(s=4))
    assert r.render_count == 0 and trace.render_count == 0
    assert trace.compile_attempts == 4 and not trace.has_best
    assert trace.best_curve() == [math.inf] * 4


def test_greedy_early_stop(target, renderer):
    ed = NoisyOracleEditor(GT, 0.2, seed=1)
    trace = greedy_loop(ctx_for(target), ed, renderer, BeamConfig(s=5, stop_threshold=1e9))
    assert trace.stopped_at == 2 and len(trace.steps) == 2


def test_greedy_feeds_latest_or_best(target, renderer):
    seen = []

    def ed(ev, **kw):
        seen.append(ev.prev_program)
        return [HOLED_PROGRAM, GT, BOX_PROGRAM, GT][ev.step - 1]

    greedy_loop(ctx_for(target), ed, renderer, BeamConfig(s=3))
    assert seen == [None, HOLED_PROGRAM, GT]
    seen.clear()
    greedy_loop(ctx_for(target), ed, renderer, BeamConfig(s=4, feed_best=True))
    assert seen == [None, HOLED_PROGRAM, GT, GT]


# --- beam ---------------------------------------------------------------------


def test_beam_render_budget(target, renderer):
    ed = NoisyOracleEditor(GT, 0.2, seed=2)
    trace = stochastic_beam(ctx_for(target), ed, renderer, BeamConfig(N=5, s=5))
    assert trace.render_count == 105
    assert [len(s) for s in trace.steps] == [5, 25, 25, 25, 25]
    curve = trace.best_curve()
    assert all(b <= a for a, b in zip(curve, curve[1:]))
    one = stochastic_beam(ctx_for(target), ed, renderer, BeamConfig(N=1, s=4))
    assert one.render_count == 4


def test_beam_is_deterministic(target, renderer):
    ed = NoisyOracleEditor(GT, 0.2, seed=3)
    cfg = BeamConfig(N=3, s=3, seed=9)
    a = stochastic_beam(ctx_for(target), ed, renderer, cfg)
    b = stochastic_beam(ctx_for(target), ed, renderer, BeamConfig(N=3, s=3, seed=9, workers=3))
    assert a.selection_key() == b.selection_key()
    assert a.to_json() == b.to_json()


def test_beam_degrades_after_an_all_invalid_step(target, renderer):
    responses = {("target", 1, k): GT for k in range(2)}
    responses.update({("target", 2, k): "junk" for k in range(2)})
    responses.update({("target", 3, k): BOX_PROGRAM for k in range(2)})
    trace = stochastic_beam(ctx_for(target), ScriptedEditor(responses), renderer, BeamConfig(N=2, s=3))
    assert trace.degraded_steps == [3]
    assert [len(s) for s in trace.steps] == [2, 4, 2]
    assert trace.best_so_far.program == GT
    assert json.loads(trace.to_json())["degraded_steps"] == [3]


def test_run_loop_modes(target, renderer):
    with pytest.raises(ValueError):
        run_loop(target, OracleEditor(GT), renderer, BeamConfig(), mode="dfs")
    with pytest.raises(ValueError):
        BeamConfig(N=0)


# --- scan track ---------------------------------------------------------------


def test_scan_track_never_selects_on_clean(target, renderer):
    scan = ctx_for(target.translated((1.5, 0, 0)), "t")
    ed = NoisyOracleEditor(GT, 0.2, seed=5)
    cfg = BeamConfig(N=2, s=2)
    a = run_scan_track(target, scan, ed, renderer, cfg, "beam")
    sentinel = render_mesh(parse(BOX_PROGRAM), 32)
    b = run_scan_track(sentinel, ctx_for(target.translated((1.5, 0, 0)), "t"), ed, renderer, cfg, "beam")
    assert a.trace.selection_key() == b.trace.selection_key()
    assert a.clean_reports != b.clean_reports
    assert len(a.clean_reports) == 2 and a.report.count == 1


def test_trace_json_without_iou(target, renderer):
    ctx = TargetContext(target, cd_samples=1000, with_iou=False)
    trace = greedy_loop(ctx, OracleEditor(GT), renderer, BeamConfig(s=1))
    assert json.loads(trace.to_json())["best_so_far"]["iou_percent"] is None
