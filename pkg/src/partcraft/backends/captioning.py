"""Caption clients used to prompt inversion of real photos."""

from __future__ import annotations

import io
import logging
import os
import time

import httpx
import numpy as np
from PIL import Image

log = logging.getLogger(__name__)


class CaptionError(RuntimeError):
    pass


class CaptionConfigError(CaptionError):
    pass


class StubCaptioner:
    """Fixed-string captioner for tests and offline runs."""

    def __init__(self, caption: str = "a photo"):
        if not caption:
            raise CaptionConfigError("stub caption must be nonempty")
        self.caption = caption

    def caption_image(self, image) -> str:
        return self.caption


class HTTPCaptioner:
    """POSTs the image to a captioning endpoint; token read from the env."""

    def __init__(
        self,
        endpoint: str | None = None,
        token_env: str = "CAPTION_API_TOKEN",
        retries: int = 3,
        timeout: float = 30.0,
    ):
        if not endpoint:
            raise CaptionConfigError("captioner endpoint not configured")
        self.endpoint = endpoint
        self.token = os.environ.get(token_env)
        self.retries = retries
        self.timeout = timeout

    def caption_image(self, image) -> str:
        buf = io.BytesIO()
        arr = np.asarray(image)
        if arr.dtype != np.uint8:
            arr = np.clip(arr * 255.0, 0, 255).astype(np.uint8)
        if arr.ndim == 3 and arr.shape[0] in (1, 3):
            arr = np.moveaxis(arr, 0, -1)
        Image.fromarray(arr).save(buf, format="PNG")
        headers = {"Authorization": f"Bearer {self.token}"} if self.token else {}
        last_err: Exception | None = None
        for attempt in range(self.retries):
            try:
                resp = httpx.post(
                    self.endpoint,
                    files={"image": ("image.png", buf.getvalue(), "image/png")},
                    headers=headers,
                    timeout=self.timeout,
                )
                resp.raise_for_status()
                return resp.json()["caption"]
            except Exception as exc:  # noqa: BLE001 - surfaced with retry count
                last_err = exc
                log.warning("caption attempt %d/%d failed: %s", attempt + 1, self.retries, exc)
                time.sleep(min(2**attempt, 8))
        raise CaptionError(
            f"captioning failed after {self.retries} attempts: {last_err}"
        ) from last_err


def caption_image(image, client) -> str:
    if client is None:
        raise CaptionConfigError("no caption client configured")
    return client.caption_image(image)
