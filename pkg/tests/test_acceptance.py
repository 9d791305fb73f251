"""End-to-end acceptance checks.

One test per contract item; each prints a single [acceptance] PASS/FAIL line
with the measured tolerances and runtimes, so a plain test log doubles as the
acceptance report. Oracles are written out inline (pair counting, set
partitions, reference grouping tables) so this file stands on its own.
"""

from __future__ import annotations

import json
import math
import re
import time
from contextlib import contextmanager

import numpy as np
import pytest
from fastapi.testclient import TestClient

from partcraft.backends.inversion import ddim_invert, redenoise
from partcraft.backends.scheduler import DeterministicScheduler
from partcraft.backends.synthetic import (
    PlantedScene,
    Rect,
    SyntheticBackend,
    make_scene,
)
from partcraft.config import PipelineConfig
from partcraft.document import PartSpec, RichPromptDocument
from partcraft.evaluation import ari, load_grouping, nmi
from partcraft.generation import generate
from partcraft.localization import (
    blended_noise,
    blended_noise_three_term,
    cluster_attention,
    localization_test,
    localize,
    run_base_diffusion,
    run_part_diffusion,
)
from partcraft.masks import Mask2D
from partcraft.service import create_app

from conftest import ACCEPTANCE_LINES, iou, mask_set_from_scene


@contextmanager
def criterion(name: str, info: dict):
    try:
        yield
    except Exception:
        ACCEPTANCE_LINES.append(f"[acceptance] FAIL {name}")
        print(ACCEPTANCE_LINES[-1])
        raise
    detail = "; ".join(f"{k}={v}" for k, v in info.items())
    ACCEPTANCE_LINES.append(f"[acceptance] PASS {name}: {detail}")
    print(ACCEPTANCE_LINES[-1])


# ---------------------------------------------------------------------------
# noise blending algebra
# ---------------------------------------------------------------------------

def test_blended_noise_forms_agree():
    info = {}
    with criterion("blended-noise forms agree on 1000 random instances", info):
        rng = np.random.default_rng(0)
        t0 = time.perf_counter()
        worst_pair = worst_oracle = 0.0
        for _ in range(1000):
            base = rng.standard_normal((3, 8, 8))
            part = rng.standard_normal((3, 8, 8))
            mask = Mask2D(rng.integers(0, 2, size=(8, 8)))
            alpha = float(rng.uniform(0.0, 1.0))
            two = blended_noise(base, part, mask, alpha)
            three = blended_noise_three_term(base, part, mask, alpha)
            m = alpha * mask.values[None, :, :]
            oracle = m * part + (1.0 - m) * base
            worst_pair = max(worst_pair, float(np.max(np.abs(two - three))))
            worst_oracle = max(worst_oracle, float(np.max(np.abs(two - oracle))))
        elapsed = time.perf_counter() - t0
        assert worst_pair <= 1e-6
        assert worst_oracle <= 1e-6
        assert elapsed < 5.0
        info.update(max_diff=f"{worst_pair:.2e}", runtime=f"{elapsed:.2f}s")


def test_zero_alpha_run_is_bit_identical_to_base():
    info = {}
    with criterion("alpha=0 blended run is bit-identical to base-only", info):
        t0 = time.perf_counter()
        scene = make_scene(["head", "wing", "tail"], seed=11)
        doc = RichPromptDocument(
            base_prompt=scene.base_prompt,
            object_token=scene.object_token,
            parts=tuple(PartSpec(name=n) for n in scene.parts),
        )
        cfg = PipelineConfig(num_steps=50, t_threshold=30, alpha_max=0.0, seed=11)
        backend = SyntheticBackend(scene, num_steps=50)
        blended = run_part_diffusion(doc, cfg, backend).image
        base = run_base_diffusion(doc, cfg, backend)
        elapsed = time.perf_counter() - t0
        assert np.array_equal(blended, base)
        assert elapsed < 5.0
        info.update(steps=50, identical=True, runtime=f"{elapsed:.2f}s")


# ---------------------------------------------------------------------------
# localization end to end
# ---------------------------------------------------------------------------

def test_random_scenes_localize_all_planted_parts():
    info = {}
    with criterion("50 random scenes: every planted part IoU >= 0.9, absent parts empty", info):
        pool = ["head", "wing", "tail", "leg", "crest"]
        cfg = PipelineConfig(num_steps=30, t_threshold=18, seed=7)
        t0 = time.perf_counter()
        worst = 1.0
        for i in range(50):
            n_parts = 2 + i % 4
            scene = make_scene(pool[:n_parts], seed=100 + i)
            doc = RichPromptDocument(
                base_prompt=scene.base_prompt,
                object_token=scene.object_token,
                parts=tuple(PartSpec(name=n) for n in [*pool[:n_parts], "horn"]),
            )
            backend = SyntheticBackend(scene, num_steps=cfg.num_steps)
            masks = localize(doc, cfg, backend)
            for name, rect in scene.parts.items():
                assert masks.localized[name], f"scene {i}: {name} not localized"
                score = iou(masks.part_masks[name].values, rect.indicator(scene.size))
                assert score >= 0.9, f"scene {i}: {name} IoU {score:.3f}"
                worst = min(worst, score)
            assert not masks.localized["horn"], f"scene {i}: absent part localized"
            assert masks.part_masks["horn"].is_empty()
        elapsed = time.perf_counter() - t0
        assert elapsed < 60.0
        info.update(scenes=50, worst_iou=f"{worst:.3f}", runtime=f"{elapsed:.1f}s")


def test_localization_threshold_boundary_cases():
    info = {}
    with criterion("localization threshold boundaries are exact", info):
        for k in (2, 3, 4, 5):
            uniform = np.full((32, 32), 1.0 / k)
            for delta in (0.0, 0.25, 0.5, 0.72, 0.9, 1.0):
                assert localization_test(uniform, k, delta)
        for k in (2, 4, 7):
            for delta in (0.0, 0.2, 0.6):
                threshold = (1.0 - delta) / k
                below = np.zeros((32, 32))
                below[5, 5] = threshold - 1e-9
                at = np.zeros((32, 32))
                at[5, 5] = threshold
                assert not localization_test(below, k, delta)
                assert localization_test(at, k, delta)
        peak_005 = np.zeros((32, 32))
        peak_005[0, 0] = 0.05
        assert not localization_test(peak_005, 4, 0.72)  # 0.05 < 0.07
        info.update(uniform="passes for all delta", just_below="fails")


def test_spectral_clustering_recovers_planted_blocks():
    info = {}

    def same_partition(a, b) -> bool:
        forward: dict[int, int] = {}
        used: set[int] = set()
        for x, y in zip(np.ravel(a).tolist(), np.ravel(b).tolist()):
            if x in forward:
                if forward[x] != y:
                    return False
            else:
                if y in used:
                    return False
                forward[x] = y
                used.add(y)
        return True

    with criterion("spectral clustering exactly recovers planted blocks", info):
        t0 = time.perf_counter()
        n = 256
        for k in range(2, 7):
            for seed in range(20):
                rng = np.random.default_rng(1000 * k + seed)
                while True:
                    assignment = rng.integers(0, k, size=n)
                    if len(np.unique(assignment)) == k:
                        break
                affinity = (assignment[:, None] == assignment[None, :]).astype(float)
                segments = cluster_attention(affinity, k, seed=seed)
                assert same_partition(segments.labels, assignment), f"k={k} seed={seed}"
                again = cluster_attention(affinity, k, seed=seed)
                assert np.array_equal(segments.labels, again.labels)
        elapsed = time.perf_counter() - t0
        info.update(cases="k in 2..6 x 20 seeds", exact=True, runtime=f"{elapsed:.1f}s")


# ---------------------------------------------------------------------------
# metrics and groupings
# ---------------------------------------------------------------------------

def _all_partitions(items: list[int]):
    if not items:
        yield []
        return
    head, *rest = items
    for part in _all_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [part[i] + [head]] + part[i + 1 :]
        yield [[head]] + part


def _pair_count_ari(a, b) -> float:
    n = len(a)
    both = in_a = in_b = 0
    for i in range(n):
        for j in range(i + 1, n):
            same_a = a[i] == a[j]
            same_b = b[i] == b[j]
            in_a += same_a
            in_b += same_b
            both += same_a and same_b
    total = n * (n - 1) / 2.0
    expected = in_a * in_b / total
    max_index = 0.5 * (in_a + in_b)
    if max_index == expected:
        return 1.0
    return (both - expected) / (max_index - expected)


def _nmi_oracle(a, b) -> float:
    n = len(a)

    def h(labels):
        return -sum(
            (c / n) * math.log(c / n)
            for c in (labels.count(v) for v in set(labels))
        )

    h_a, h_b = h(list(a)), h(list(b))
    if h_a == 0.0 or h_b == 0.0:
        return 0.0
    mi = 0.0
    for x in set(a):
        p_x = list(a).count(x) / n
        for y in set(b):
            p_y = list(b).count(y) / n
            p_xy = sum(1 for i in range(n) if a[i] == x and b[i] == y) / n
            if p_xy > 0:
                mi += p_xy * math.log(p_xy / (p_x * p_y))
    return mi / (0.5 * (h_a + h_b))


def test_metrics_match_pair_counting_oracles():
    info = {}
    with criterion("nmi/ari match hand pair counting; random ARI near zero", info):
        labelings = []
        for part in _all_partitions(list(range(4))):
            labels = [0] * 4
            for block_id, block in enumerate(part):
                for item in block:
                    labels[item] = block_id
            labelings.append(labels)
        assert len(labelings) == 15
        worst = 0.0
        for a in labelings:
            for b in labelings:
                worst = max(worst, abs(ari(a, b) - _pair_count_ari(a, b)))
                worst = max(worst, abs(nmi(a, b) - _nmi_oracle(a, b)))
        assert worst <= 1e-12

        rng = np.random.default_rng(42)
        largest = 0.0
        for _ in range(10):
            a = rng.integers(0, 4, size=10_000)
            b = rng.integers(0, 4, size=10_000)
            largest = max(largest, abs(ari(a, b)))
        assert largest < 0.05
        info.update(
            exhaustive_pairs=len(labelings) ** 2,
            oracle_diff=f"{worst:.1e}",
            max_random_ari=f"{largest:.4f}",
        )


CUB_TABLE = {
    "background": 0,
    "beak": 1, "forehead": 1, "left eye": 1, "right eye": 1,
    "breast": 2, "crown": 2, "nape": 2, "throat": 2,
    "belly": 3, "left leg": 3, "right leg": 3, "tail": 3,
    "back": 4, "left wing": 4, "right wing": 4,
}

DEEPFASHION_TABLE = {
    "background": 0,
    "cap": 1, "hair": 1,
    "dress": 2, "shirt (top)": 2, "accessories": 2, "outer": 2,
    "glasses": 3, "face": 3, "body": 3,
    "pants": 4, "footwear": 4, "leggings": 4,
}


def test_shipped_groupings_match_reference_tables():
    info = {}
    with criterion("shipped part groupings match the reference tables", info):
        assert load_grouping("cub").to_dict() == CUB_TABLE
        assert load_grouping("deepfashion").to_dict() == DEEPFASHION_TABLE
        info.update(cub=len(CUB_TABLE), deepfashion=len(DEEPFASHION_TABLE))


# ---------------------------------------------------------------------------
# generation fusion and guidance
# ---------------------------------------------------------------------------

class _LatentRecorder(SyntheticBackend):
    """Records every latent handed to the denoiser, keyed by level."""

    def __init__(self, scene, **kwargs):
        super().__init__(scene, **kwargs)
        self.calls: dict[int, list[np.ndarray]] = {}

    def predict_noise(self, x, conditioning, level, guidance_scale=None, hooks=None):
        self.calls.setdefault(level, []).append(np.array(x, copy=True))
        return super().predict_noise(
            x, conditioning, level, guidance_scale=guidance_scale, hooks=hooks
        )


def test_fusion_identity_and_background_window():
    info = {}
    with criterion("region fusion: identical prompts collapse; background follows base", info):
        # identical prompts across every region reduce fusion to one branch
        scene = make_scene(["head", "wing"], seed=3)
        doc = RichPromptDocument(
            base_prompt=scene.base_prompt,
            object_token=scene.object_token,
            parts=tuple(
                PartSpec(name=n, footnote=scene.base_prompt) for n in scene.parts
            ),
        )
        cfg = PipelineConfig(num_steps=41, t_threshold=24, seed=3)
        backend = SyntheticBackend(scene, num_steps=41)
        result = generate(doc, mask_set_from_scene(scene), cfg, backend)
        single = run_base_diffusion(doc, cfg, backend)
        assert np.array_equal(result.latent, single)
        assert np.array_equal(result.image, result.base_image)

        # distinct regions: background positions equal the base trajectory at
        # every level once blending begins
        scene_b = make_scene(["head", "wing"], seed=5)
        doc_b = RichPromptDocument(
            base_prompt=scene_b.base_prompt,
            object_token=scene_b.object_token,
            parts=(
                PartSpec(name="head", color=(230, 26, 26)),
                PartSpec(name="wing", color=(26, 26, 230)),
            ),
        )
        cfg_b = PipelineConfig(num_steps=41, t_threshold=24, seed=5)
        recorder = _LatentRecorder(scene_b, num_steps=41)
        masks = mask_set_from_scene(scene_b)
        result_b = generate(doc_b, masks, cfg_b, recorder)
        blend_start = cfg_b.blend_start_level()
        assert blend_start == 7
        bg = masks.background_mask.values.astype(bool)
        for level in range(1, blend_start + 1):
            base_latent = recorder.calls[level][0]
            gen_latent = recorder.calls[level][-1]
            assert len(recorder.calls[level]) == 4  # base run + 3 region branches
            assert np.array_equal(gen_latent[:, bg], base_latent[:, bg]), f"level {level}"
        assert np.array_equal(result_b.latent[:, bg], result_b.base_image[:, bg])
        obj = masks.object_mask.values.astype(bool)
        assert not np.array_equal(result_b.latent[:, obj], result_b.base_image[:, obj])
        info.update(identical_prompts="bit-exact", blend_levels=f"0..{blend_start}")


def test_color_guidance_reaches_target_without_leaking():
    info = {}
    with criterion("color guidance reaches the target and leaves off-mask alone", info):
        t0 = time.perf_counter()
        target = (230, 26, 26)
        opposite = tuple((255 - c) / 255.0 for c in target)
        scene = PlantedScene(
            object_block=Rect(8, 16, 8, 16),
            parts={"patch": Rect(8, 16, 8, 16)},
            part_colors={"patch": opposite},
            background_color=(0.05, 0.05, 0.05),
        )
        doc = RichPromptDocument(
            base_prompt=scene.base_prompt,
            object_token=scene.object_token,
            parts=(PartSpec(name="patch", color=target),),
        )
        masks = mask_set_from_scene(scene)
        cfg = PipelineConfig(num_steps=41, seed=5)
        guided = generate(
            doc, masks, cfg, SyntheticBackend(scene, num_steps=41)
        ).image
        unguided = generate(
            doc,
            masks,
            cfg.with_overrides(color_guidance_weight=0.0),
            SyntheticBackend(scene, num_steps=41),
        ).image
        elapsed = time.perf_counter() - t0

        on = masks.part_masks["patch"].values.astype(bool)
        want = np.array(target) / 255.0
        guided_err = float(np.abs(guided[:, on].mean(axis=1) - want).max())
        unguided_err = float(np.abs(unguided[:, on].mean(axis=1) - want).max())
        off_shift = float(
            np.abs(guided[:, ~on].mean(axis=1) - unguided[:, ~on].mean(axis=1)).max()
        )
        assert guided_err <= 0.1
        assert unguided_err > 0.1  # guidance, not the prompt, closes the gap
        assert off_shift <= 1e-3
        assert elapsed < 10.0
        info.update(
            on_mask_err=f"{guided_err:.4f}",
            baseline_err=f"{unguided_err:.4f}",
            off_mask_shift=f"{off_shift:.1e}",
            runtime=f"{elapsed:.2f}s",
        )


# ---------------------------------------------------------------------------
# scheduler and inversion
# ---------------------------------------------------------------------------

def test_scheduler_round_trips_are_exact():
    info = {}
    with criterion("scheduler step/invert round trips within tolerance", info):
        sch = DeterministicScheduler(41)
        rng = np.random.default_rng(9)
        worst = 0.0
        for _ in range(200):
            level = int(rng.integers(1, 42))
            x = rng.standard_normal((3, 32, 32))
            eps = rng.standard_normal((3, 32, 32))
            back = sch.invert_step(sch.step(x, eps, level), eps, level - 1)
            worst = max(worst, float(np.max(np.abs(back - x))))
        assert worst < 1e-5

        scene = make_scene(["head", "wing"], seed=13)
        backend = SyntheticBackend(scene, num_steps=41)
        image = scene.color_field()
        cond = backend.encode_text(scene.base_prompt)
        trajectory = ddim_invert(image, cond, backend, 41, guidance_scale=0.05)
        back = redenoise(trajectory[-1], cond, backend, guidance_scale=0.05)
        round_trip = float(np.max(np.abs(back - image)))
        assert round_trip < 1e-3
        info.update(
            step_pair=f"{worst:.1e}", full_inversion=f"{round_trip:.1e}"
        )


# ---------------------------------------------------------------------------
# service contract
# ---------------------------------------------------------------------------

DOC_A = {
    "base": "a photo of a bird",
    "object": "bird",
    "parts": [{"name": "head"}, {"name": "wing"}],
}
DOC_B = {
    "base": "a photo of a lizard",
    "object": "lizard",
    "parts": [{"name": "tail"}, {"name": "crest"}],
}
CFG_A = {"num_steps": 41, "t_threshold": 24, "seed": 7}
CFG_B = {"num_steps": 41, "t_threshold": 24, "seed": 9}


def _wait(client, job_id, timeout=60.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        snap = client.get(f"/v1/jobs/{job_id}").json()
        if snap["state"] in ("done", "failed"):
            return snap
        time.sleep(0.05)
    raise AssertionError(f"job {job_id} never finished")


def _artifact_bytes(client, snap):
    out = {}
    for name, url in snap["artifacts"].items():
        resp = client.get(url)
        assert resp.status_code == 200
        out[name] = resp.content
    return out


def _run_pair(root, workers, serial):
    app = create_app(root, workers=workers)
    with TestClient(app) as client:
        if serial:
            snaps = []
            for document, config in ((DOC_A, CFG_A), (DOC_B, CFG_B)):
                job_id = client.post(
                    "/v1/jobs",
                    json={"document": document, "config": config, "kind": "localize"},
                ).json()["id"]
                snaps.append(_wait(client, job_id))
        else:
            ids = [
                client.post(
                    "/v1/jobs",
                    json={"document": document, "config": config, "kind": "localize"},
                ).json()["id"]
                for document, config in ((DOC_A, CFG_A), (DOC_B, CFG_B))
            ]
            snaps = [_wait(client, job_id) for job_id in ids]
        assert all(s["state"] == "done" for s in snaps)
        return [_artifact_bytes(client, s) for s in snaps]


def test_service_contract(tmp_path):
    info = {}
    with criterion("service: happy path, validation, order independence", info):
        app = create_app(tmp_path / "happy", workers=1)
        with TestClient(app) as client:
            resp = client.post(
                "/v1/jobs",
                json={"document": DOC_A, "config": CFG_A, "kind": "localize"},
            )
            assert resp.status_code == 202
            job_id = resp.json()["id"]
            assert re.fullmatch(r"[0-9a-f]{12}", job_id)
            snap = _wait(client, job_id)
            assert snap["state"] == "done"
            blobs = _artifact_bytes(client, snap)
            assert "masks.json" in blobs
            index = json.loads(blobs["masks.json"])
            assert set(index["parts"]) == {"head", "wing"}

            bad = client.post(
                "/v1/jobs",
                json={"document": {"base": "a photo"}, "kind": "localize"},
            )
            assert bad.status_code == 422
            dup = client.post(
                "/v1/jobs",
                json={
                    "document": {
                        "base": "a photo of a bird",
                        "object": "bird",
                        "parts": [{"name": "head"}, {"name": "head"}],
                    },
                    "kind": "localize",
                },
            )
            assert dup.status_code == 422

        interleaved = _run_pair(tmp_path / "concurrent", workers=2, serial=False)
        serial = _run_pair(tmp_path / "serial", workers=1, serial=True)
        for conc, ser in zip(interleaved, serial):
            assert set(conc) == set(ser)
            for name in conc:
                assert conc[name] == ser[name], f"artifact {name} differs"
        info.update(
            happy_path="202/done/fetched",
            invalid="422",
            scheduling="interleaved == serial",
        )
