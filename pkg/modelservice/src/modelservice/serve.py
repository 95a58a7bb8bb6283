"""Completions-protocol HTTP service over a trained checkpoint.

POST /v1/completions with {"prompt", "max_tokens", "temperature",
"top_p", ...} answers {"choices": [{"text": ...}]}.  Bad JSON or fields
give 400; prompts longer than the configured input budget give 413.
GET /healthz reports liveness.  Decoding is greedy (deterministic) for
temperature <= 0.1.
"""

from __future__ import annotations

import json
import logging

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .train import load_checkpoint

logger = logging.getLogger(__name__)


def create_app(checkpoint_dir: str) -> FastAPI:
    model, vocab, config = load_checkpoint(checkpoint_dir)
    app = FastAPI(title="modelservice")

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "model": config.base_model_name}

    @app.post("/v1/completions")
    async def completions(request: Request):
        # async handler: generation runs on the event loop, so concurrent
        # requests decode one at a time against the shared model.
        try:
            body = json.loads(await request.body())
        except ValueError:
            return JSONResponse({"error": "request body is not valid JSON"}, status_code=400)
        if not isinstance(body, dict) or not isinstance(body.get("prompt"), str):
            return JSONResponse({"error": "missing string field 'prompt'"}, status_code=400)
        prompt = body["prompt"]
        if not prompt.strip():
            return JSONResponse({"error": "empty prompt"}, status_code=400)
        max_tokens = body.get("max_tokens", config.max_output_tokens)
        if not isinstance(max_tokens, int) or max_tokens < 1:
            return JSONResponse({"error": "max_tokens must be a positive integer"}, status_code=400)
        temperature = body.get("temperature", 0.0)
        if not isinstance(temperature, (int, float)) or temperature < 0:
            return JSONResponse({"error": "temperature must be >= 0"}, status_code=400)

        src_ids = vocab.encode(prompt)
        if len(src_ids) > config.max_input_tokens:
            return JSONResponse(
                {"error": f"prompt has {len(src_ids)} tokens, limit {config.max_input_tokens}"},
                status_code=413,
            )
        out_ids = model.generate(
            src_ids,
            max_new_tokens=min(max_tokens, config.max_output_tokens),
            temperature=float(temperature),
            seed=body.get("seed"),
        )
        return {"choices": [{"text": vocab.decode(out_ids)}]}

    return app
