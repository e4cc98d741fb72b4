"""Concrete preference oracles: synthetic ground-truth utility, a remote
view-comparison client, a blocking human-session oracle, and the schematic
renderer that produces the side-by-side comparison images."""

from __future__ import annotations

import base64
import hashlib
import io
import math
import queue
import threading
import uuid
from dataclasses import dataclass

import numpy as np
import requests
from PIL import Image, ImageDraw

from .embed import SyntheticScene, cosine
from .errors import InvalidArgumentError, OracleError
from .geom import Pose4
from .refine import PreferenceOracle, View


@dataclass(frozen=True)
class SyntheticUtility:
    """Ground-truth pose utility: cosine of the view embedding to a target."""

    target: np.ndarray
    noise_beta: float = 0.0

    def __post_init__(self):
        if self.noise_beta < 0:
            raise InvalidArgumentError("noise_beta must be >= 0")
        object.__setattr__(self, "target", np.asarray(self.target, dtype=float))


def synthetic_compare(
    utility: SyntheticUtility,
    view_inc: np.ndarray,
    view_ch: np.ndarray,
    rng: np.random.Generator | None = None,
) -> int:
    """Noiseless: challenger wins iff strictly better (ties keep the
    incumbent). Noisy: challenger wins with logistic probability in the
    utility gap scaled by noise_beta."""
    emb_inc = view_inc.embedding if isinstance(view_inc, View) else view_inc
    emb_ch = view_ch.embedding if isinstance(view_ch, View) else view_ch
    f_inc = cosine(emb_inc, utility.target)
    f_ch = cosine(emb_ch, utility.target)
    if utility.noise_beta == 0.0:
        return +1 if f_ch > f_inc else -1
    if rng is None:
        raise InvalidArgumentError("noisy comparison requires an rng")
    z = utility.noise_beta * (f_ch - f_inc)
    prob = 1.0 / (1.0 + math.exp(-z)) if z >= 0 else math.exp(z) / (1.0 + math.exp(z))
    return +1 if rng.uniform() < prob else -1


class SyntheticOracle(PreferenceOracle):
    def __init__(self, utility: SyntheticUtility, rng: np.random.Generator | None = None):
        self.utility = utility
        self.rng = rng

    def compare(self, incumbent_view, challenger_view, description):
        return synthetic_compare(self.utility, incumbent_view, challenger_view, self.rng)


class AlwaysIncumbentOracle(PreferenceOracle):
    """Test oracle that never promotes."""

    def compare(self, incumbent_view, challenger_view, description):
        return -1


class ScriptedOracle(PreferenceOracle):
    """Replays a fixed outcome sequence; raises when exhausted."""

    def __init__(self, outcomes):
        self.outcomes = list(outcomes)
        self.idx = 0

    def compare(self, incumbent_view, challenger_view, description):
        if self.idx >= len(self.outcomes):
            raise OracleError("scripted oracle exhausted")
        out = self.outcomes[self.idx]
        self.idx += 1
        return out


# ---------------------------------------------------------------------------
# Schematic rendering


def _label_color(label: str) -> tuple[int, int, int]:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    # keep colors bright enough to stand out on the dark background
    return tuple(64 + d % 192 for d in digest[:3])


def render_schematic(scene: SyntheticScene, pose: Pose4, width: int = 320, height: int = 240) -> Image.Image:
    """Deterministic raster of the view: landmarks as depth-sorted discs
    under a pinhole projection with focal length from the scene fov."""
    img = Image.new("RGB", (width, height), (24, 24, 32))
    draw = ImageDraw.Draw(img)
    f = (width / 2.0) / math.tan(scene.fov / 2.0)
    fwd = pose.forward()
    right = np.array([fwd[1], -fwd[0], 0.0])
    up = np.array([0.0, 0.0, 1.0])
    order = []
    for lm in scene.landmarks:
        rel = lm.center - pose.p
        depth = float(np.dot(rel, fwd))
        if depth <= 1e-6:
            continue  # behind the camera
        order.append((depth, rel, lm))
    order.sort(key=lambda item: -item[0])  # far to near, painter's algorithm
    for depth, rel, lm in order:
        x = float(np.dot(rel, right))
        y = float(np.dot(rel, up))
        u = width / 2.0 + f * x / depth
        v = height / 2.0 - f * y / depth
        r_px = max(2.0, f * lm.radius / depth)
        draw.ellipse(
            [u - r_px, v - r_px, u + r_px, v + r_px],
            fill=_label_color(lm.label),
        )
    return img


def image_to_png_base64(img: Image.Image) -> str:
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


# ---------------------------------------------------------------------------
# Remote oracle


def parse_verdict(body: dict) -> int:
    """Strict two-token protocol: verdict "A" keeps the incumbent,
    "B" promotes the challenger. Anything else is an error."""
    verdict = body.get("verdict")
    if verdict == "A":
        return -1
    if verdict == "B":
        return +1
    raise OracleError(f"malformed verdict {verdict!r}")


class RemoteOracle(PreferenceOracle):
    """Posts both rendered views to an external comparison endpoint."""

    def __init__(self, endpoint: str, scene: SyntheticScene, timeout: float = 30.0,
                 width: int = 320, height: int = 240, session=None):
        self.endpoint = endpoint.rstrip("/")
        self.scene = scene
        self.timeout = timeout
        self.width = width
        self.height = height
        self.http = session or requests.Session()

    def compare(self, incumbent_view: View, challenger_view: View, description):
        img_a = render_schematic(self.scene, incumbent_view.pose, self.width, self.height)
        img_b = render_schematic(self.scene, challenger_view.pose, self.width, self.height)
        payload = {
            "description": description.text,
            "image_a": image_to_png_base64(img_a),
            "image_b": image_to_png_base64(img_b),
        }
        try:
            resp = self.http.post(f"{self.endpoint}/compare", json=payload, timeout=self.timeout)
            resp.raise_for_status()
            body = resp.json()
        except requests.RequestException as exc:
            raise OracleError(f"remote comparison failed: {exc}") from exc
        except ValueError as exc:
            raise OracleError(f"remote response is not JSON: {exc}") from exc
        return parse_verdict(body)


# ---------------------------------------------------------------------------
# Human-session oracle


@dataclass
class ComparisonRequest:
    session_id: str
    request_id: str
    image_a: str  # base64 PNG
    image_b: str
    description: str
    deadline: float


class HumanSession:
    """Mailbox between the refinement worker and the choice-submitting UI.

    The worker enqueues one pending comparison at a time and blocks until a
    choice arrives; the HTTP layer polls `pending` and calls `submit`.
    """

    def __init__(self, timeout: float = 600.0):
        self.id = uuid.uuid4().hex
        self.timeout = timeout
        self._lock = threading.Lock()
        self._pending: ComparisonRequest | None = None
        self._answers: queue.Queue = queue.Queue()
        self._answered_ids: set[str] = set()
        self.closed = False
        self.iteration = 0
        self.total = 0
        self.done = False
        self.result: dict | None = None

    def pending(self) -> ComparisonRequest | None:
        with self._lock:
            return self._pending

    def submit(self, request_id: str, choice: str) -> bool:
        """Record a human choice; returns False for unknown/stale ids.
        Duplicate submissions for an already-answered id are ignored."""
        with self._lock:
            if self._pending is None or self._pending.request_id != request_id:
                return request_id in self._answered_ids
            if choice not in ("A", "B"):
                return False
            self._answered_ids.add(request_id)
            self._pending = None
        self._answers.put(+1 if choice == "B" else -1)
        return True

    def ask(self, request: ComparisonRequest) -> int:
        with self._lock:
            if self.closed:
                raise OracleError("session closed")
            self._pending = request
        try:
            return self._answers.get(timeout=self.timeout)
        except queue.Empty:
            with self._lock:
                self._pending = None
            raise OracleError("human session timed out") from None

    def close(self):
        with self._lock:
            self.closed = True
            self._pending = None


class HumanOracle(PreferenceOracle):
    """Blocks the refinement loop on a human choice delivered via the service."""

    def __init__(self, session: HumanSession, scene: SyntheticScene,
                 width: int = 320, height: int = 240):
        self.session = session
        self.scene = scene
        self.width = width
        self.height = height

    def compare(self, incumbent_view: View, challenger_view: View, description):
        req = ComparisonRequest(
            session_id=self.session.id,
            request_id=uuid.uuid4().hex,
            image_a=image_to_png_base64(
                render_schematic(self.scene, incumbent_view.pose, self.width, self.height)),
            image_b=image_to_png_base64(
                render_schematic(self.scene, challenger_view.pose, self.width, self.height)),
            description=description.text,
            deadline=self.session.timeout,
        )
        return self.session.ask(req)
